//! 2-D FFT helpers for square toroidal grids, built on rustfft.
//!
//! Transforms are separable: a planned 1-D pass over the rows, a transpose,
//! a second pass, and a transpose back. rustfft leaves both directions
//! unnormalized, so the inverse path divides by `n * n`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::defaults;
use crate::grid::Grid;

/// Planned forward and inverse transforms for one grid size.
pub(crate) struct Fft2d {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Self {
            n,
            forward,
            inverse,
        }
    }

    /// Real grid to frequency domain, row-major layout preserved.
    pub fn forward(&self, grid: &Grid) -> Vec<Complex<f64>> {
        assert_eq!(grid.n(), self.n, "grid size does not match plan");
        let mut buf: Vec<Complex<f64>> = grid
            .data()
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .collect();
        self.pass_2d(&mut buf, &self.forward);
        buf
    }

    /// Frequency domain back to a real grid. The imaginary residue left by
    /// rounding is dropped after a debug-mode sanity check.
    pub fn inverse_real(&self, mut freq: Vec<Complex<f64>>) -> Grid {
        assert_eq!(freq.len(), self.n * self.n, "buffer size does not match plan");
        self.pass_2d(&mut freq, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        let data: Vec<f64> = freq
            .iter()
            .map(|c| {
                max_re = max_re.max(c.re.abs());
                max_im = max_im.max(c.im.abs());
                c.re * scale
            })
            .collect();
        debug_assert!(
            max_im <= defaults::FFT_IMAG_RESIDUE * max_re.max(1.0),
            "imaginary residue {max_im:e} exceeds tolerance"
        );
        Grid::from_vec(self.n, data)
    }

    fn pass_2d(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        fft.process(buf);
        transpose_square(buf, self.n);
        fft.process(buf);
        transpose_square(buf, self.n);
    }
}

/// Elementwise product of two spectra.
pub(crate) fn pointwise_mul(a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<Complex<f64>> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Elementwise `conj(a) * b`, the frequency-domain form of correlation.
pub(crate) fn conj_mul(a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<Complex<f64>> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).collect()
}

/// Circular convolution of two grids via the convolution theorem.
pub(crate) fn circular_convolve(fft: &Fft2d, a: &Grid, b: &Grid) -> Grid {
    let fa = fft.forward(a);
    let fb = fft.forward(b);
    fft.inverse_real(pointwise_mul(&fa, &fb))
}

fn transpose_square(buf: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}
