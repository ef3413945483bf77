//! Learned convolutional estimator over wrapped chroma histograms.
//!
//! Scoring convolves each feature histogram with a learned filter (via
//! pointwise products in the frequency domain) and adds a learned bias;
//! a softmax turns the score map into a posterior that is decoded by its
//! circular centroid. Training runs full-batch gradient descent with
//! momentum on a bilinear-smeared cross-entropy: the model is linear in
//! its parameters, so the objective is convex and zero initialization
//! needs no randomness. Gradients flow through the convolution as a
//! correlation, reusing the same transforms.

use std::path::Path;

use rustfft::num_complex::Complex;

use crate::chroma::{
    build_histogram, circular_centroid, rgb_to_uv, uv_to_rgb, ChromaHistogram, Feature,
    HistogramGeometry, LogChroma, Weighting,
};
use crate::defaults;
use crate::error::{Error, Result};
use crate::fft::{self, Fft2d};
use crate::grid::Grid;
use crate::imaging::{IlluminantEstimate, LinearImage};
use crate::parallel;
use crate::util::write_atomic;
use crate::IlluminantEstimator;

const MAGIC: &[u8; 8] = b"FFCCMDL1";

/// Learned filters and bias over one histogram geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FfccModel {
    geometry: HistogramGeometry,
    filters: Vec<Grid>,
    bias: Grid,
    trained: bool,
}

impl FfccModel {
    /// Zero-initialized model (uniform posterior).
    pub fn new_untrained(geometry: HistogramGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            filters: vec![Grid::zeros(geometry.n); Feature::ALL.len()],
            bias: Grid::zeros(geometry.n),
            trained: false,
        })
    }

    /// Assembles a model from explicit parameter maps.
    pub fn from_parts(
        geometry: HistogramGeometry,
        filters: Vec<Grid>,
        bias: Grid,
        trained: bool,
    ) -> Result<Self> {
        geometry.validate()?;
        if filters.len() != Feature::ALL.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} filter channels, got {}",
                Feature::ALL.len(),
                filters.len()
            )));
        }
        for map in filters.iter().chain(std::iter::once(&bias)) {
            if map.n() != geometry.n {
                return Err(Error::GridSizeMismatch {
                    expected: geometry.n,
                    got: map.n(),
                });
            }
            if !map.is_finite() {
                return Err(Error::InvalidConfig("non-finite model parameters".into()));
            }
        }
        Ok(Self {
            geometry,
            filters,
            bias,
            trained,
        })
    }

    pub fn geometry(&self) -> HistogramGeometry {
        self.geometry
    }

    pub fn filters(&self) -> &[Grid] {
        &self.filters
    }

    pub fn bias(&self) -> &Grid {
        &self.bias
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Builds the model's feature histograms for one image.
    pub fn build_histograms(&self, img: &LinearImage) -> Result<Vec<ChromaHistogram>> {
        Feature::ALL
            .iter()
            .map(|f| build_histogram(img, self.geometry, *f, Weighting::Luminance))
            .collect()
    }

    /// Serializes the model with an 8-byte magic header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.geometry.n;
        let mut buf = Vec::with_capacity(8 + 4 + 24 + 4 + (self.filters.len() + 1) * n * n * 8 + 1);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(n as u32).to_le_bytes());
        buf.extend_from_slice(&self.geometry.bin_size.to_le_bytes());
        buf.extend_from_slice(&self.geometry.origin.0.to_le_bytes());
        buf.extend_from_slice(&self.geometry.origin.1.to_le_bytes());
        buf.extend_from_slice(&(self.filters.len() as u32).to_le_bytes());
        for map in self.filters.iter().chain(std::iter::once(&self.bias)) {
            for v in map.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.push(self.trained as u8);
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
            let end = pos
                .checked_add(len)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::ModelFile("truncated file".into()))?;
            let slice = &bytes[*pos..end];
            *pos = end;
            Ok(slice)
        }
        fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
            Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().unwrap()))
        }
        fn read_f64(bytes: &[u8], pos: &mut usize) -> Result<f64> {
            Ok(f64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap()))
        }
        fn read_grid(bytes: &[u8], pos: &mut usize, n: usize) -> Result<Grid> {
            let mut data = Vec::with_capacity(n * n);
            for _ in 0..n * n {
                data.push(read_f64(bytes, pos)?);
            }
            Ok(Grid::from_vec(n, data))
        }

        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut pos = 0usize;
        if take(&bytes, &mut pos, 8)? != MAGIC {
            return Err(Error::ModelFile("bad magic header".into()));
        }
        let n = read_u32(&bytes, &mut pos)? as usize;
        let bin_size = read_f64(&bytes, &mut pos)?;
        let origin = (read_f64(&bytes, &mut pos)?, read_f64(&bytes, &mut pos)?);
        let geometry = HistogramGeometry::new(n, bin_size, origin)
            .map_err(|e| Error::ModelFile(e.to_string()))?;
        let channels = read_u32(&bytes, &mut pos)? as usize;
        if channels != Feature::ALL.len() {
            return Err(Error::ModelFile(format!(
                "expected {} filter channels, found {channels}",
                Feature::ALL.len()
            )));
        }
        let expected = 41u128 + 8 * (channels as u128 + 1) * (n as u128) * (n as u128);
        if bytes.len() as u128 != expected {
            return Err(Error::ModelFile(format!(
                "file size {} does not match header (expected {expected})",
                bytes.len()
            )));
        }
        let filters: Vec<Grid> = (0..channels)
            .map(|_| read_grid(&bytes, &mut pos, n))
            .collect::<Result<_>>()?;
        let bias = read_grid(&bytes, &mut pos, n)?;
        let trained = take(&bytes, &mut pos, 1)?[0] != 0;
        FfccModel::from_parts(geometry, filters, bias, trained)
            .map_err(|e| Error::ModelFile(e.to_string()))
    }
}

impl IlluminantEstimator for FfccModel {
    fn estimate(&self, img: &LinearImage) -> Result<IlluminantEstimate> {
        estimate_ffcc(self, img)
    }

    fn name(&self) -> &'static str {
        "ffcc"
    }
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub l2_filter: f64,
    pub l2_bias: f64,
    /// Reserved for future stochastic variants; the full-batch,
    /// zero-initialized optimizer is deterministic without it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: defaults::LEARNING_RATE,
            momentum: defaults::MOMENTUM,
            epochs: defaults::EPOCHS,
            l2_filter: defaults::L2_FILTER,
            l2_bias: defaults::L2_BIAS,
            seed: defaults::SEED,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.l2_filter < 0.0 || self.l2_bias < 0.0 {
            return Err(Error::InvalidConfig("l2 penalties must be >= 0".into()));
        }
        Ok(())
    }
}

/// One training example: per-feature histograms and the truth chroma.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub histograms: Vec<ChromaHistogram>,
    pub truth_uv: LogChroma,
    pub source_path: String,
}

impl LabeledSample {
    /// Histograms an image against its ground-truth illuminant. Fails on
    /// images where a feature channel has nothing to bin (for the
    /// gradient channel that includes perfectly flat images).
    pub fn from_image(
        img: &LinearImage,
        truth: &IlluminantEstimate,
        geometry: HistogramGeometry,
        source_path: impl Into<String>,
    ) -> Result<Self> {
        let histograms = Feature::ALL
            .iter()
            .map(|f| build_histogram(img, geometry, *f, Weighting::Luminance))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            histograms,
            truth_uv: rgb_to_uv(truth.rgb())?,
            source_path: source_path.into(),
        })
    }

    fn check_geometry(&self, geometry: HistogramGeometry) -> Result<()> {
        if self.histograms.len() != Feature::ALL.len() {
            return Err(Error::InvalidConfig(format!(
                "sample \"{}\" has {} histogram channels, expected {}",
                self.source_path,
                self.histograms.len(),
                Feature::ALL.len()
            )));
        }
        for h in &self.histograms {
            if h.geometry() != geometry {
                return Err(Error::GridSizeMismatch {
                    expected: geometry.n,
                    got: h.geometry().n,
                });
            }
        }
        Ok(())
    }
}

/// Filter responses plus bias: `S = sum_k filters[k] (*) hists[k] + bias`.
pub fn score(model: &FfccModel, hists: &[ChromaHistogram]) -> Result<Grid> {
    if hists.len() != model.filters.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} histogram channels, got {}",
            model.filters.len(),
            hists.len()
        )));
    }
    let n = model.geometry.n;
    for h in hists {
        if h.geometry() != model.geometry {
            return Err(Error::GridSizeMismatch {
                expected: n,
                got: h.geometry().n,
            });
        }
    }
    let plan = Fft2d::new(n);
    let mut freq_s = vec![Complex::new(0.0, 0.0); n * n];
    for (filter, hist) in model.filters.iter().zip(hists) {
        let ff = plan.forward(filter);
        let fh = plan.forward(hist.mass());
        for (acc, prod) in freq_s.iter_mut().zip(fft::pointwise_mul(&ff, &fh)) {
            *acc += prod;
        }
    }
    let mut s = plan.inverse_real(freq_s);
    s.axpy(1.0, &model.bias);
    Ok(s)
}

/// Softmax over all score cells, stabilized by max subtraction.
pub fn posterior(s: &Grid) -> Grid {
    let max = s.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Grid::zeros(s.n());
    let mut sum = 0.0;
    for (o, v) in out.data_mut().iter_mut().zip(s.data()) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.scale(1.0 / sum);
    out
}

/// Full inference pipeline: histograms, score, posterior, decode.
pub fn estimate_ffcc(model: &FfccModel, img: &LinearImage) -> Result<IlluminantEstimate> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    let hists = model.build_histograms(img)?;
    let s = score(model, &hists)?;
    let p = posterior(&s);
    let uv = circular_centroid(&p, model.geometry)?;
    uv_to_rgb(uv)
}

/// The four wrapped bins around a fractional chroma position, with
/// bilinear weights.
fn bilinear_weights(geom: HistogramGeometry, uv: LogChroma) -> [(usize, usize, f64); 4] {
    let (fu, fv) = geom.fractional_bin(uv);
    let (i0f, j0f) = (fu.floor(), fv.floor());
    let (di, dj) = (fu - i0f, fv - j0f);
    let n = geom.n as i64;
    let i0 = (i0f as i64).rem_euclid(n) as usize;
    let j0 = (j0f as i64).rem_euclid(n) as usize;
    let i1 = (i0 + 1) % geom.n;
    let j1 = (j0 + 1) % geom.n;
    [
        (i0, j0, (1.0 - di) * (1.0 - dj)),
        (i1, j0, di * (1.0 - dj)),
        (i0, j1, (1.0 - di) * dj),
        (i1, j1, di * dj),
    ]
}

struct PreparedSample {
    freq_hists: Vec<Vec<Complex<f64>>>,
    weights: [(usize, usize, f64); 4],
}

fn prepare(plan: &Fft2d, geom: HistogramGeometry, sample: &LabeledSample) -> PreparedSample {
    PreparedSample {
        freq_hists: sample
            .histograms
            .iter()
            .map(|h| plan.forward(h.mass()))
            .collect(),
        weights: bilinear_weights(geom, sample.truth_uv),
    }
}

/// Mean data loss plus regularizers, and its analytic gradient.
fn epoch_loss_and_gradient(
    plan: &Fft2d,
    filters: &[Grid],
    bias: &Grid,
    prepared: &[PreparedSample],
    l2_filter: f64,
    l2_bias: f64,
) -> (f64, Vec<Grid>, Grid) {
    let n = bias.n();
    let cells = n * n;
    let freq_filters: Vec<Vec<Complex<f64>>> = filters.iter().map(|f| plan.forward(f)).collect();

    let per_sample = parallel::map_ordered(prepared, |s| {
        let mut freq_s = vec![Complex::new(0.0, 0.0); cells];
        for (ff, fh) in freq_filters.iter().zip(&s.freq_hists) {
            for (acc, (a, b)) in freq_s.iter_mut().zip(ff.iter().zip(fh)) {
                *acc += a * b;
            }
        }
        let mut score = plan.inverse_real(freq_s);
        score.axpy(1.0, bias);
        let post = posterior(&score);
        let m: f64 = s.weights.iter().map(|&(i, j, w)| w * post.get(i, j)).sum();
        let data_loss = -m.max(f64::MIN_POSITIVE).ln();
        let mut g = post;
        for &(i, j, w) in &s.weights {
            let p = g.get(i, j);
            g.set(i, j, p - w * p / m);
        }
        let freq_g = plan.forward(&g);
        let filter_terms: Vec<Vec<Complex<f64>>> = s
            .freq_hists
            .iter()
            .map(|fh| fft::conj_mul(fh, &freq_g))
            .collect();
        (data_loss, filter_terms, g)
    });

    let count = prepared.len() as f64;
    let mut loss_sum = 0.0;
    let mut freq_acc = vec![vec![Complex::new(0.0, 0.0); cells]; filters.len()];
    let mut bias_grad = Grid::zeros(n);
    for (data_loss, filter_terms, g) in per_sample {
        loss_sum += data_loss;
        for (acc, term) in freq_acc.iter_mut().zip(&filter_terms) {
            for (a, t) in acc.iter_mut().zip(term) {
                *a += t;
            }
        }
        bias_grad.axpy(1.0, &g);
    }

    let mut filter_grads = Vec::with_capacity(filters.len());
    for (freq, filter) in freq_acc.into_iter().zip(filters) {
        let mut grad = plan.inverse_real(freq);
        grad.scale(1.0 / count);
        grad.axpy(2.0 * l2_filter, filter);
        filter_grads.push(grad);
    }
    bias_grad.scale(1.0 / count);
    bias_grad.axpy(2.0 * l2_bias, bias);

    let mut loss = loss_sum / count + l2_bias * bias.norm_sq();
    for f in filters {
        loss += l2_filter * f.norm_sq();
    }
    (loss, filter_grads, bias_grad)
}

/// Loss and analytic gradients of `model` on a sample batch; the public
/// entry point behind the finite-difference checks.
pub fn batch_loss_and_gradient(
    model: &FfccModel,
    samples: &[LabeledSample],
    l2_filter: f64,
    l2_bias: f64,
) -> Result<(f64, Vec<Grid>, Grid)> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("empty sample batch".into()));
    }
    for s in samples {
        s.check_geometry(model.geometry)?;
    }
    let plan = Fft2d::new(model.geometry.n);
    let prepared: Vec<PreparedSample> = samples
        .iter()
        .map(|s| prepare(&plan, model.geometry, s))
        .collect();
    Ok(epoch_loss_and_gradient(
        &plan,
        &model.filters,
        &model.bias,
        &prepared,
        l2_filter,
        l2_bias,
    ))
}

/// Single-sample loss: smeared cross-entropy plus the l2 penalties.
pub fn loss(model: &FfccModel, sample: &LabeledSample, l2_filter: f64, l2_bias: f64) -> Result<f64> {
    let (value, _, _) =
        batch_loss_and_gradient(model, std::slice::from_ref(sample), l2_filter, l2_bias)?;
    Ok(value)
}

/// Full-batch gradient descent with momentum from zero initialization.
/// Returns the trained model and the per-epoch loss trace (loss measured
/// before each step).
pub fn train(samples: &[LabeledSample], cfg: &TrainConfig) -> Result<(FfccModel, Vec<f64>)> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let geometry = samples[0].histograms[0].geometry();
    for s in samples {
        s.check_geometry(geometry)?;
    }
    let n = geometry.n;
    let plan = Fft2d::new(n);
    let prepared: Vec<PreparedSample> = samples
        .iter()
        .map(|s| prepare(&plan, geometry, s))
        .collect();

    let channels = Feature::ALL.len();
    let mut filters = vec![Grid::zeros(n); channels];
    let mut bias = Grid::zeros(n);
    let mut vel_filters = vec![Grid::zeros(n); channels];
    let mut vel_bias = Grid::zeros(n);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (loss, filter_grads, bias_grad) = epoch_loss_and_gradient(
            &plan,
            &filters,
            &bias,
            &prepared,
            cfg.l2_filter,
            cfg.l2_bias,
        );
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
        for ((vel, grad), filter) in vel_filters
            .iter_mut()
            .zip(&filter_grads)
            .zip(&mut filters)
        {
            vel.scale(cfg.momentum);
            vel.axpy(1.0, grad);
            filter.axpy(-cfg.learning_rate, vel);
        }
        vel_bias.scale(cfg.momentum);
        vel_bias.axpy(1.0, &bias_grad);
        bias.axpy(-cfg.learning_rate, &vel_bias);
    }

    Ok((
        FfccModel {
            geometry,
            filters,
            bias,
            trained: true,
        },
        trace,
    ))
}
