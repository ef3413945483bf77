//! Default numeric parameters, collected in one place.
//!
//! Every tunable that the underlying method leaves open is defined here so
//! the full set of choices is auditable at a glance. The CLI surfaces each
//! of these as a flag with the same default.

/// Fraction of the post-black-level range treated as clipped. Pixels with
/// any channel at or above this (after normalization to unit range) are
/// masked.
pub const SATURATION_FRACTION: f64 = 0.98;

/// Pixels with all channels below this are masked as noise-dominated.
pub const DARK_THRESHOLD: f64 = 1.0 / 1024.0;

/// Laplacian-of-Gaussian scale in pixels for the Grayness Index. Small by
/// intent: grayness evidence lives in fine local neighborhoods.
pub const GI_SIGMA: f64 = 0.5;

/// Fraction of valid pixels kept as gray evidence (the best-scoring ones).
pub const GI_TOP_FRACTION: f64 = 0.001;

/// Floor on the number of selected gray pixels.
pub const GI_MIN_PIXELS: usize = 10;

/// Guard for logs and ratio normalization in the Grayness Index.
pub const GI_EPSILON: f64 = 1e-4;

/// Bins per axis of the log-chroma histogram (power of two).
pub const HIST_BINS: usize = 64;

/// Log-chroma units per histogram bin; with 64 bins the torus period is 2.0.
pub const HIST_BIN_SIZE: f64 = 0.03125;

/// Learning rate for full-batch gradient descent.
pub const LEARNING_RATE: f64 = 1.0;

/// Heavy-ball momentum coefficient.
pub const MOMENTUM: f64 = 0.9;

/// Training epochs.
pub const EPOCHS: usize = 500;

/// L2 penalty on the learned filters (suppresses ringing).
pub const L2_FILTER: f64 = 1e-4;

/// L2 penalty on the learned bias map.
pub const L2_BIAS: f64 = 1e-4;

/// Default seed for every seeded operation.
pub const SEED: u64 = 0;

/// Division guard: white-balance correction refuses illuminant components
/// at or below this.
pub const WB_COMPONENT_TOLERANCE: f64 = 1e-6;

/// Maximum tolerated imaginary residue after an inverse FFT whose result
/// must be real.
pub const FFT_IMAG_RESIDUE: f64 = 1e-9;

/// First-moment magnitude below which a posterior is considered degenerate.
pub const MOMENT_EPSILON: f64 = 1e-12;

/// Synthetic scenes: edge length of the constant-albedo patches.
pub const SYNTH_PATCH_SIZE: usize = 16;

/// Synthetic scenes: half-angle of the cap around neutral gray from which
/// illuminants are sampled, in degrees.
pub const SYNTH_CAP_DEGREES: f64 = 25.0;

/// Synthetic scenes: bounds for the achromatic albedo draw.
pub const SYNTH_GRAY_ALBEDO: (f64, f64) = (0.2, 0.75);

/// Synthetic scenes: log-chroma offset magnitude of random palette
/// colors. The floor keeps colored surfaces distinguishable from
/// illuminant tints; the ceiling keeps them from wrapping near gray on
/// the chroma torus.
pub const SYNTH_PALETTE_CHROMA: (f64, f64) = (0.35, 1.45);

/// Synthetic scenes: bounds for a palette color's brightest channel.
pub const SYNTH_PALETTE_LUMA: (f64, f64) = (0.3, 0.85);
