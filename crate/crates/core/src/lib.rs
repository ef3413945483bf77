//! Illuminant estimation for linear RGB images.
//!
//! Two independent estimators of the global scene light:
//!
//! * [`grayness`]: the learning-free Grayness Index. Detect achromatic
//!   pixels through log-domain Laplacian-of-Gaussian responses and average
//!   their chromaticity.
//! * [`ffcc`]: a learned scorer over toroidal log-chroma histograms,
//!   evaluated by Fourier-domain circular convolution and trained at desk
//!   scale by full-batch gradient descent.
//!
//! Supporting machinery: linear-image loading and von Kries correction
//! ([`imaging`]), log-chroma transforms and wrapped histograms ([`chroma`]),
//! angular-error statistics with k-fold cross-validation ([`evaluation`]),
//! and a synthetic Lambertian scene generator ([`synth`]) whose ground truth
//! is known by construction.
//!
//! With the default `parallel` feature the per-pixel and per-image loops run
//! on rayon; build with `--no-default-features` for a fully sequential
//! library. Results are identical either way: every parallel reduction is
//! order-fixed.

pub mod chroma;
pub mod defaults;
pub mod error;
pub mod evaluation;
pub mod ffcc;
pub mod grayness;
pub mod grid;
pub mod imaging;
pub mod synth;
pub mod util;

mod fft;
mod parallel;

pub use error::{Error, Result};
pub use imaging::{IlluminantEstimate, LinearImage, PreprocessConfig};

/// Anything that maps an image to a global illuminant estimate.
///
/// Implemented by [`grayness::GiEstimator`], [`ffcc::FfccModel`] and
/// [`evaluation::GrayWorldEstimator`]; the evaluation harness is generic
/// over this trait.
pub trait IlluminantEstimator: Sync {
    fn estimate(&self, img: &LinearImage) -> Result<IlluminantEstimate>;

    /// Short name used in reports and diagnostics.
    fn name(&self) -> &'static str;
}
