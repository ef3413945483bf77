//! Log-chroma coordinates and toroidal chroma histograms.
//!
//! A pixel's chroma is u = ln(g/r), v = ln(g/b), so a global illuminant
//! acts as an additive offset in (u, v). Histograms wrap modulo
//! `n * bin_size` per axis; the wrap makes absolute chroma ambiguous by
//! period multiples, resolved at decode time by preferring the
//! representative nearest gray.

use rustfft::num_complex::Complex;

use crate::defaults;
use crate::error::{Error, Result};
use crate::fft::{self, Fft2d};
use crate::grid::Grid;
use crate::imaging::{IlluminantEstimate, LinearImage};

/// A point in log-chroma space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogChroma {
    pub u: f64,
    pub v: f64,
}

impl LogChroma {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Bin layout of a wrapped chroma histogram. Bin (i, j) is centered at
/// (u0 + i*bin_size, v0 + j*bin_size); indices wrap modulo n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramGeometry {
    pub n: usize,
    pub bin_size: f64,
    pub origin: (f64, f64),
}

impl Default for HistogramGeometry {
    fn default() -> Self {
        let n = defaults::HIST_BINS;
        let bin_size = defaults::HIST_BIN_SIZE;
        let o = -(n as f64 / 2.0) * bin_size;
        Self {
            n,
            bin_size,
            origin: (o, o),
        }
    }
}

impl HistogramGeometry {
    pub fn new(n: usize, bin_size: f64, origin: (f64, f64)) -> Result<Self> {
        let geom = Self {
            n,
            bin_size,
            origin,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "histogram bins {} must be a power of two >= 8",
                self.n
            )));
        }
        if !(self.bin_size > 0.0 && self.bin_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bin_size {} must be positive and finite",
                self.bin_size
            )));
        }
        if !self.origin.0.is_finite() || !self.origin.1.is_finite() {
            return Err(Error::InvalidConfig("non-finite histogram origin".into()));
        }
        Ok(())
    }

    /// Axis period `n * bin_size` in log-chroma units.
    pub fn period(&self) -> f64 {
        self.n as f64 * self.bin_size
    }

    /// Nearest wrapped bin for a chroma point.
    pub fn bin_of(&self, uv: LogChroma) -> (usize, usize) {
        let n = self.n as i64;
        let i = ((uv.u - self.origin.0) / self.bin_size).round() as i64;
        let j = ((uv.v - self.origin.1) / self.bin_size).round() as i64;
        (i.rem_euclid(n) as usize, j.rem_euclid(n) as usize)
    }

    /// Center coordinates of bin (i, j), unwrapped.
    pub fn bin_center(&self, i: usize, j: usize) -> LogChroma {
        LogChroma::new(
            self.origin.0 + i as f64 * self.bin_size,
            self.origin.1 + j as f64 * self.bin_size,
        )
    }

    /// Real-valued bin coordinates of a chroma point, unwrapped.
    pub fn fractional_bin(&self, uv: LogChroma) -> (f64, f64) {
        (
            (uv.u - self.origin.0) / self.bin_size,
            (uv.v - self.origin.1) / self.bin_size,
        )
    }

    /// Moves `uv` to the torus representative nearest the gray origin.
    pub fn dealias(&self, uv: LogChroma) -> LogChroma {
        let p = self.period();
        LogChroma::new(uv.u - p * (uv.u / p).round(), uv.v - p * (uv.v / p).round())
    }
}

/// Which per-pixel feature populates a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Intensity,
    GradientMagnitude,
}

impl Feature {
    pub const ALL: [Feature; 2] = [Feature::Intensity, Feature::GradientMagnitude];

    pub fn label(&self) -> &'static str {
        match self {
            Feature::Intensity => "intensity",
            Feature::GradientMagnitude => "gradient",
        }
    }
}

/// Per-pixel weight scheme; `Count` exists for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Luminance,
    Count,
}

/// A normalized wrapped chroma histogram (total mass 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaHistogram {
    geometry: HistogramGeometry,
    mass: Grid,
    feature: Feature,
}

impl ChromaHistogram {
    /// Wraps a nonnegative mass grid, normalizing it to total mass 1.
    pub fn from_mass(geometry: HistogramGeometry, mut mass: Grid, feature: Feature) -> Result<Self> {
        geometry.validate()?;
        if mass.n() != geometry.n {
            return Err(Error::GridSizeMismatch {
                expected: geometry.n,
                got: mass.n(),
            });
        }
        if mass.data().iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidConfig("histogram mass must be finite and >= 0".into()));
        }
        let total = mass.total();
        if total <= 0.0 {
            return Err(Error::EmptyHistogram);
        }
        mass.scale(1.0 / total);
        Ok(Self {
            geometry,
            mass,
            feature,
        })
    }

    pub fn geometry(&self) -> HistogramGeometry {
        self.geometry
    }

    pub fn mass(&self) -> &Grid {
        &self.mass
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    /// Plain-text dump: one header line, then n rows of n mass values.
    pub fn dump_text(&self) -> String {
        let g = self.geometry;
        let mut out = format!(
            "n={} bin_size={} origin={} {} feature={}\n",
            g.n,
            g.bin_size,
            g.origin.0,
            g.origin.1,
            self.feature.label()
        );
        for i in 0..g.n {
            let row: Vec<String> = (0..g.n).map(|j| format!("{}", self.mass.get(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Log-chroma of a positive RGB triple: u = ln(g/r), v = ln(g/b).
pub fn rgb_to_uv(rgb: [f64; 3]) -> Result<LogChroma> {
    if rgb.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
        return Err(Error::NonPositiveChannel(rgb[0], rgb[1], rgb[2]));
    }
    Ok(LogChroma::new(
        (rgb[1] / rgb[0]).ln(),
        (rgb[1] / rgb[2]).ln(),
    ))
}

/// Inverse map: (u, v) to the unit-norm illuminant (e^-u, 1, e^-v).
pub fn uv_to_rgb(uv: LogChroma) -> Result<IlluminantEstimate> {
    IlluminantEstimate::from_rgb([(-uv.u).exp(), 1.0, (-uv.v).exp()])
}

/// Bins the image's chroma into a wrapped histogram.
///
/// A pixel contributes when its mask is set and every channel exceeds the
/// default dark threshold (logs need strictly positive input). For the
/// gradient feature the pixel values are first replaced by per-channel
/// central-difference magnitudes; border pixels and pixels with any
/// zero-magnitude channel are skipped, and the contributing pixel plus its
/// four neighbors must all be valid.
pub fn build_histogram(
    img: &LinearImage,
    geom: HistogramGeometry,
    feature: Feature,
    weighting: Weighting,
) -> Result<ChromaHistogram> {
    geom.validate()?;
    let mut mass = Grid::zeros(geom.n);
    match feature {
        Feature::Intensity => {
            for y in 0..img.height() {
                for x in 0..img.width() {
                    if img.is_valid(x, y) {
                        accumulate(&mut mass, geom, img.pixel(x, y), weighting);
                    }
                }
            }
        }
        Feature::GradientMagnitude => {
            for y in 1..img.height().saturating_sub(1) {
                for x in 1..img.width().saturating_sub(1) {
                    let neighborhood_valid = img.is_valid(x, y)
                        && img.is_valid(x - 1, y)
                        && img.is_valid(x + 1, y)
                        && img.is_valid(x, y - 1)
                        && img.is_valid(x, y + 1);
                    if !neighborhood_valid {
                        continue;
                    }
                    let left = img.pixel(x - 1, y);
                    let right = img.pixel(x + 1, y);
                    let up = img.pixel(x, y - 1);
                    let down = img.pixel(x, y + 1);
                    let mut mag = [0.0f64; 3];
                    for c in 0..3 {
                        let gx = (right[c] - left[c]) / 2.0;
                        let gy = (down[c] - up[c]) / 2.0;
                        mag[c] = (gx * gx + gy * gy).sqrt();
                    }
                    accumulate(&mut mass, geom, mag, weighting);
                }
            }
        }
    }
    let total = mass.total();
    if total <= 0.0 {
        return Err(Error::EmptyHistogram);
    }
    mass.scale(1.0 / total);
    Ok(ChromaHistogram {
        geometry: geom,
        mass,
        feature,
    })
}

fn accumulate(mass: &mut Grid, geom: HistogramGeometry, px: [f64; 3], weighting: Weighting) {
    if px.iter().any(|v| *v <= defaults::DARK_THRESHOLD) {
        return;
    }
    let Ok(uv) = rgb_to_uv(px) else { return };
    let (i, j) = geom.bin_of(uv);
    let w = match weighting {
        Weighting::Luminance => (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt(),
        Weighting::Count => 1.0,
    };
    mass.set(i, j, mass.get(i, j) + w);
}

/// Circular convolution of histogram mass with a same-size filter.
pub fn circular_convolve_fft(h: &ChromaHistogram, filter: &Grid) -> Result<Grid> {
    if filter.n() != h.geometry.n {
        return Err(Error::GridSizeMismatch {
            expected: h.geometry.n,
            got: filter.n(),
        });
    }
    let plan = Fft2d::new(h.geometry.n);
    Ok(fft::circular_convolve(&plan, h.mass(), filter))
}

/// Decodes a nonnegative map to chroma via per-axis circular first
/// moments, then de-aliases toward the gray origin.
pub fn circular_centroid(p: &Grid, geom: HistogramGeometry) -> Result<LogChroma> {
    if p.n() != geom.n {
        return Err(Error::GridSizeMismatch {
            expected: geom.n,
            got: p.n(),
        });
    }
    if p.total() <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let n = geom.n;
    let mut row_marginal = vec![0.0f64; n];
    let mut col_marginal = vec![0.0f64; n];
    for (i, rm) in row_marginal.iter_mut().enumerate() {
        for (j, cm) in col_marginal.iter_mut().enumerate() {
            let m = p.get(i, j);
            *rm += m;
            *cm += m;
        }
    }
    let coord_u = circular_mean(&row_marginal)?;
    let coord_v = circular_mean(&col_marginal)?;
    let uv = LogChroma::new(
        geom.origin.0 + coord_u * geom.bin_size,
        geom.origin.1 + coord_v * geom.bin_size,
    );
    Ok(geom.dealias(uv))
}

/// Fractional bin coordinate of a wrapped 1-D mass distribution.
fn circular_mean(marginal: &[f64]) -> Result<f64> {
    let n = marginal.len() as f64;
    let mut moment = Complex::new(0.0, 0.0);
    for (idx, &m) in marginal.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * idx as f64 / n;
        moment += Complex::from_polar(m, theta);
    }
    if moment.norm() < defaults::MOMENT_EPSILON {
        return Err(Error::DegeneratePosterior);
    }
    Ok(moment.arg() * n / (2.0 * std::f64::consts::PI))
}
