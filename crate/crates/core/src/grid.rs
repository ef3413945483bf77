//! Square real-valued maps with toroidal indexing.
//!
//! Histograms, learned filters, score maps and posteriors are all n-by-n
//! grids whose axes wrap modulo n. Storage is row-major: index `(i, j)` is
//! row `i` (the u axis) and column `j` (the v axis).

/// An n-by-n map of `f64` with wrap-around indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(n: usize) -> Self {
        Grid {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds a grid from row-major data. Panics if `data.len() != n*n`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "grid data length must be n*n");
        Grid { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    /// Reads with toroidal wrap; any signed index is valid.
    #[inline]
    pub fn get_wrapped(&self, i: isize, j: isize) -> f64 {
        let n = self.n as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        self.data[iw * self.n + jw]
    }

    /// Adds `value` at a wrapped position.
    #[inline]
    pub fn add_wrapped(&mut self, i: isize, j: isize, value: f64) {
        let n = self.n as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        self.data[iw * self.n + jw] += value;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// `self += factor * other`. Panics on size mismatch.
    pub fn axpy(&mut self, factor: f64, other: &Grid) {
        assert_eq!(self.n, other.n, "grid size mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Index of the maximum entry, row-major ties resolved to the first.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (idx, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = idx;
            }
        }
        (best / self.n, best % self.n)
    }
}
