//! Grayness Index estimation.
//!
//! Taking logs turns the pixel model albedo-times-illuminant into a sum,
//! and a zero-sum Laplacian-of-Gaussian kernel annihilates the constant
//! illuminant term. What survives is per-channel albedo contrast, so a
//! pixel whose three filtered channels agree is evidence of an achromatic
//! surface; the color of the grayest pixels estimates the illuminant.

use crate::defaults;
use crate::error::{Error, Result};
use crate::imaging::{IlluminantEstimate, LinearImage};
use crate::parallel;
use crate::IlluminantEstimator;

/// Per-channel log-domain LoG responses with a validity mask.
#[derive(Debug, Clone)]
pub struct LogResponseMap {
    width: usize,
    height: usize,
    d: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

impl LogResponseMap {
    pub fn new(width: usize, height: usize, d: Vec<[f64; 3]>, valid: Vec<bool>) -> Self {
        assert_eq!(d.len(), width * height);
        assert_eq!(valid.len(), d.len());
        Self {
            width,
            height,
            d,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn response(&self, x: usize, y: usize) -> [f64; 3] {
        self.d[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn responses(&self) -> &[[f64; 3]] {
        &self.d
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
}

/// Per-pixel grayness scores; 0 means perfectly gray.
#[derive(Debug, Clone)]
pub struct GraynessMap {
    width: usize,
    height: usize,
    g: Vec<f64>,
    valid: Vec<bool>,
}

impl GraynessMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn score(&self, x: usize, y: usize) -> f64 {
        self.g[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn scores(&self) -> &[f64] {
        &self.g
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
}

/// Grayness Index parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiConfig {
    /// LoG scale in pixels.
    pub sigma: f64,
    /// Fraction of valid pixels kept as gray evidence.
    pub top_fraction: f64,
    /// Lower bound on the number of selected pixels.
    pub min_pixels: usize,
    /// Guard for logs and the contrast normalizer.
    pub epsilon: f64,
}

impl Default for GiConfig {
    fn default() -> Self {
        Self {
            sigma: defaults::GI_SIGMA,
            top_fraction: defaults::GI_TOP_FRACTION,
            min_pixels: defaults::GI_MIN_PIXELS,
            epsilon: defaults::GI_EPSILON,
        }
    }
}

impl GiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "top_fraction {} outside (0, 1]",
                self.top_fraction
            )));
        }
        if self.min_pixels == 0 {
            return Err(Error::InvalidConfig("min_pixels must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Builds the zero-sum LoG kernel for scale `sigma`, radius ceil(3 sigma).
fn log_kernel(sigma: f64) -> (usize, Vec<f64>) {
    let radius = (3.0 * sigma).ceil() as usize;
    let support = 2 * radius + 1;
    let mut k = vec![0.0f64; support * support];
    let s2 = sigma * sigma;
    for dy in 0..support {
        for dx in 0..support {
            let x = dx as f64 - radius as f64;
            let y = dy as f64 - radius as f64;
            let r2 = x * x + y * y;
            k[dy * support + dx] = (r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp();
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    for v in &mut k {
        *v -= mean;
    }
    (radius, k)
}

/// Filters each log-channel with a zero-sum LoG kernel.
///
/// Responses are only marked valid where the full kernel window stays
/// inside the image and covers exclusively masked-valid pixels with all
/// channels positive; logs are still guarded by `epsilon` so every stored
/// value is finite.
pub fn log_of_gaussian_response(
    img: &LinearImage,
    sigma: f64,
    epsilon: f64,
) -> Result<LogResponseMap> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma {sigma} must be positive")));
    }
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} must be positive")));
    }
    let (radius, kernel) = log_kernel(sigma);
    let support = 2 * radius + 1;
    let (w, h) = (img.width(), img.height());
    if w < support || h < support {
        return Err(Error::ImageSmallerThanKernel {
            width: w,
            height: h,
            support,
        });
    }

    let mut log_img = vec![[0.0f64; 3]; w * h];
    parallel::for_each_row(&mut log_img, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let px = img.pixel(x, y);
            for c in 0..3 {
                out[c] = px[c].max(epsilon).ln();
            }
        }
    });

    let usable: Vec<bool> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            img.is_valid(x, y) && img.pixel(x, y).iter().all(|v| *v > 0.0)
        })
        .collect();
    let clean = clean_window_mask(&usable, w, h, radius);

    let mut d = vec![[0.0f64; 3]; w * h];
    parallel::for_each_row(&mut d, w, |y, row| {
        if y < radius || y + radius >= h {
            return;
        }
        for (x, out) in row.iter_mut().enumerate() {
            if x < radius || x + radius >= w || !clean[y * w + x] {
                continue;
            }
            let mut acc = [0.0f64; 3];
            for ky in 0..support {
                let sy = y + ky - radius;
                for kx in 0..support {
                    let sx = x + kx - radius;
                    let kv = kernel[ky * support + kx];
                    let px = log_img[sy * w + sx];
                    for c in 0..3 {
                        acc[c] += kv * px[c];
                    }
                }
            }
            *out = acc;
        }
    });
    Ok(LogResponseMap::new(w, h, d, clean))
}

/// Marks pixels whose full (2r+1)-square window contains only usable
/// pixels and stays inside the image, via an integral image of counts.
fn clean_window_mask(usable: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let iw = w + 1;
    let mut integral = vec![0u32; iw * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u32;
        for x in 0..w {
            row_sum += usable[y * w + x] as u32;
            integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + row_sum;
        }
    }
    let window = ((2 * radius + 1) * (2 * radius + 1)) as u32;
    let mut clean = vec![false; w * h];
    for y in radius..h - radius {
        for x in radius..w - radius {
            let (x0, y0) = (x - radius, y - radius);
            let (x1, y1) = (x + radius + 1, y + radius + 1);
            let count = integral[y1 * iw + x1] + integral[y0 * iw + x0]
                - integral[y0 * iw + x1]
                - integral[y1 * iw + x0];
            clean[y * w + x] = count == window;
        }
    }
    clean
}

/// Scores the deviation from three-channel response equality.
///
/// Pixels whose responses are all below `epsilon` in magnitude carry no
/// contrast evidence and are marked invalid rather than scored gray.
pub fn grayness_index(d: &LogResponseMap, epsilon: f64) -> GraynessMap {
    let mut g = vec![0.0f64; d.responses().len()];
    let mut valid = vec![false; g.len()];
    for (i, (resp, &src_valid)) in d.responses().iter().zip(d.validity()).enumerate() {
        if !src_valid {
            continue;
        }
        let [dr, dg, db] = *resp;
        if dr.abs() < epsilon && dg.abs() < epsilon && db.abs() < epsilon {
            continue;
        }
        let num = ((dr - dg).powi(2) + (dg - db).powi(2) + (dr - db).powi(2)).sqrt();
        g[i] = num / (dr.abs() + dg.abs() + db.abs() + epsilon);
        valid[i] = true;
    }
    GraynessMap {
        width: d.width(),
        height: d.height(),
        g,
        valid,
    }
}

/// Full Grayness Index pipeline: filter, score, select the grayest
/// pixels, and average their chromaticity.
pub fn estimate_gi(img: &LinearImage, cfg: &GiConfig) -> Result<IlluminantEstimate> {
    cfg.validate()?;
    let d = log_of_gaussian_response(img, cfg.sigma, cfg.epsilon)?;
    let gmap = grayness_index(&d, cfg.epsilon);
    let mut candidates: Vec<(f64, usize)> = gmap
        .scores()
        .iter()
        .zip(gmap.validity())
        .enumerate()
        .filter(|(_, (_, v))| **v)
        .map(|(i, (s, _))| (*s, i))
        .collect();
    if candidates.len() < cfg.min_pixels {
        return Err(Error::InsufficientGrayEvidence {
            valid: candidates.len(),
            required: cfg.min_pixels,
        });
    }
    let want = ((cfg.top_fraction * candidates.len() as f64).ceil() as usize)
        .max(cfg.min_pixels)
        .min(candidates.len());
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut sum = [0.0f64; 3];
    for &(_, idx) in &candidates[..want] {
        let px = img.pixels()[idx];
        let norm = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
        for c in 0..3 {
            sum[c] += px[c] / norm;
        }
    }
    IlluminantEstimate::from_rgb(sum)
}

/// [`IlluminantEstimator`] wrapper around [`estimate_gi`].
#[derive(Debug, Clone, Default)]
pub struct GiEstimator {
    pub cfg: GiConfig,
}

impl GiEstimator {
    pub fn new(cfg: GiConfig) -> Self {
        Self { cfg }
    }
}

impl IlluminantEstimator for GiEstimator {
    fn estimate(&self, img: &LinearImage) -> Result<IlluminantEstimate> {
        estimate_gi(img, &self.cfg)
    }

    fn name(&self) -> &'static str {
        "gi"
    }
}
