//! Uniform periodic grid on `[-L, L)` and its frequency lattice.
//!
//! Transform convention (Riemann sum of the continuum transform):
//!
//! ```text
//! f̂(ξ_k) = Σ_j f(x_j) e^{-i x_j ξ_k} dx,      f(x_j) = Σ_k f̂(ξ_k) e^{i x_j ξ_k} Δξ/(2π)
//! ```
//!
//! with `x_j = -L + j dx`, `ξ_k = k π/L`. Coefficient vectors are stored in FFT
//! order: index `i` holds `k = i` for `i < N/2` and `k = i - N` otherwise.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_SIZE: usize = 8;

#[derive(Clone)]
pub struct PeriodicGrid {
    half_width: f64,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("half_width", &self.half_width)
            .field("size", &self.size)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.size == other.size && self.half_width == other.half_width
    }
}

/// Builds the grid `[-L, L)` with `N` nodes. `N` must be a power of two, at least 8.
pub fn make_grid(half_width: f64, size: usize) -> Result<Arc<PeriodicGrid>> {
    PeriodicGrid::new(half_width, size).map(Arc::new)
}

impl PeriodicGrid {
    pub fn new(half_width: f64, size: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config(format!(
                "grid half-width L must be positive and finite, got {half_width}"
            )));
        }
        if !size.is_power_of_two() || size < MIN_SIZE {
            return Err(Error::config(format!(
                "grid size N must be a power of two >= {MIN_SIZE}, got {size}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            half_width,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.size as f64
    }

    /// Lattice spacing `Δξ = π/L`.
    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    pub fn nyquist(&self) -> f64 {
        (self.size / 2) as f64 * self.dxi()
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|j| self.node(j))
    }

    /// Signed integer wavenumber stored at FFT-order index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.size as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT-order index holding wavenumber `k`, `-N/2 <= k < N/2`.
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.size as i64) as usize
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.wavenumber(i) as f64 * self.dxi()
    }

    /// Lattice frequencies in FFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.frequency(i)).collect()
    }

    /// Lattice frequencies in ascending order `k = -N/2 .. N/2-1`.
    pub fn sorted_frequencies(&self) -> Vec<f64> {
        let half = (self.size / 2) as i64;
        (-half..half).map(|k| k as f64 * self.dxi()).collect()
    }

    /// Largest wavenumber kept by the 2/3 rule; quadratic products of fields
    /// supported in `|k| <= K` alias only onto `|k| > K`.
    pub fn dealias_cutoff(&self) -> i64 {
        ((self.size - 1) / 3) as i64
    }

    pub fn is_dealias_kept(&self, i: usize) -> bool {
        self.wavenumber(i).abs() <= self.dealias_cutoff()
    }

    pub(crate) fn fft_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.forward
    }

    pub(crate) fn fft_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.inverse
    }

    pub(crate) fn scratch(&self) -> Vec<Complex64> {
        let len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        vec![Complex64::new(0.0, 0.0); len]
    }

    /// Samples to coefficients in the physical normalization.
    pub fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.size);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut scratch = self.scratch();
        self.forward.process_with_scratch(&mut buf, &mut scratch);
        let dx = self.dx();
        // e^{-i x_j ξ_k} = (-1)^k e^{-2πi jk/N} since x_0 = -L.
        for (i, c) in buf.iter_mut().enumerate() {
            *c *= if i % 2 == 0 { dx } else { -dx };
        }
        buf
    }

    /// Coefficients to complex samples in the physical normalization.
    pub fn inverse_complex(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coefficients.len(), self.size);
        let w = 1.0 / (self.size as f64 * self.dx());
        let mut buf: Vec<Complex64> = coefficients
            .iter()
            .enumerate()
            .map(|(i, &c)| c * if i % 2 == 0 { w } else { -w })
            .collect();
        let mut scratch = self.scratch();
        self.inverse.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// Coefficients to real samples (imaginary part discarded).
    pub fn inverse(&self, coefficients: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(coefficients)
            .into_iter()
            .map(|c| c.re)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(PeriodicGrid::new(PI, 12), Err(Error::Config(_))));
        assert!(matches!(PeriodicGrid::new(PI, 4), Err(Error::Config(_))));
        assert!(matches!(PeriodicGrid::new(0.0, 8), Err(Error::Config(_))));
        assert!(matches!(PeriodicGrid::new(-1.0, 8), Err(Error::Config(_))));
        assert!(matches!(PeriodicGrid::new(f64::NAN, 8), Err(Error::Config(_))));
    }

    #[test]
    fn nodes_and_frequencies_on_unit_period() {
        let g = PeriodicGrid::new(PI, 8).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        let expected = [-PI, -3.0 * PI / 4.0, -PI / 2.0, -PI / 4.0, 0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
        for (a, b) in nodes.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(
            g.sorted_frequencies(),
            vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
        );
        assert_eq!(g.frequencies()[..4], [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.frequencies()[4..], [-4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn spacing_and_nyquist() {
        let g = PeriodicGrid::new(32.0 * PI, 8).unwrap();
        assert_relative_eq!(g.dxi(), 1.0 / 32.0, epsilon = 1e-16);
        assert_relative_eq!(g.nyquist(), 1.0 / 8.0, epsilon = 1e-16);
        let g = PeriodicGrid::new(32.0 * PI, 1 << 17).unwrap();
        assert_relative_eq!(g.nyquist(), 2048.0, epsilon = 1e-12);
    }

    #[test]
    fn index_roundtrip() {
        let g = PeriodicGrid::new(1.0, 16).unwrap();
        for i in 0..16 {
            assert_eq!(g.index_of(g.wavenumber(i)), i);
        }
        assert_eq!(g.dealias_cutoff(), 5);
    }

    #[test]
    fn transform_of_single_mode() {
        // sin(x) on [-π, π): f̂(±1) = ∓iπ.
        let g = PeriodicGrid::new(PI, 16).unwrap();
        let samples: Vec<f64> = g.nodes().map(f64::sin).collect();
        let c = g.forward(&samples);
        assert_relative_eq!(c[1].im, -PI, epsilon = 1e-13);
        assert_relative_eq!(c[g.index_of(-1)].im, PI, epsilon = 1e-13);
        assert!(c[1].re.abs() < 1e-13);
        let back = g.inverse(&c);
        for (a, b) in back.iter().zip(&samples) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
    }
}
