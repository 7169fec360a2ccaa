//! Real fields sampled on a [`PeriodicGrid`] with lazily cached coefficients.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;

#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<PeriodicGrid>,
    samples: Vec<f64>,
    coefficients: OnceLock<Vec<Complex64>>,
}

impl SpectralField {
    pub fn from_samples(grid: Arc<PeriodicGrid>, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.size(), "sample count must match grid size");
        Self {
            grid,
            samples,
            coefficients: OnceLock::new(),
        }
    }

    pub fn from_fn(grid: Arc<PeriodicGrid>, f: impl Fn(f64) -> f64) -> Self {
        let samples = grid.nodes().map(f).collect();
        Self::from_samples(grid, samples)
    }

    pub fn zeros(grid: Arc<PeriodicGrid>) -> Self {
        let n = grid.size();
        Self::from_samples(grid, vec![0.0; n])
    }

    /// Builds a real field from coefficients. Hermitian symmetry is enforced
    /// first (`ĝ(-ξ) = conj ĝ(ξ)`, Nyquist mode real) so that the cached
    /// coefficients are exactly those of the real samples.
    pub fn from_coefficients(grid: Arc<PeriodicGrid>, mut coefficients: Vec<Complex64>) -> Self {
        assert_eq!(coefficients.len(), grid.size());
        symmetrize(&mut coefficients);
        let samples = grid.inverse(&coefficients);
        let cell = OnceLock::new();
        let _ = cell.set(coefficients);
        Self {
            grid,
            samples,
            coefficients: cell,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Mutable access to the samples; drops the cached coefficients.
    pub fn samples_mut(&mut self) -> &mut [f64] {
        self.coefficients.take();
        &mut self.samples
    }

    pub fn has_cached_coefficients(&self) -> bool {
        self.coefficients.get().is_some()
    }

    /// Coefficients in FFT order, computed on first use.
    pub fn coefficients(&self) -> &[Complex64] {
        self.coefficients
            .get_or_init(|| self.grid.forward(&self.samples))
    }

    pub fn same_grid(&self, other: &SpectralField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left_l: self.grid.half_width(),
                left_n: self.grid.size(),
                right_l: other.grid.half_width(),
                right_n: other.grid.size(),
            })
        }
    }

    pub fn scale(&self, factor: f64) -> SpectralField {
        let samples = self.samples.iter().map(|v| v * factor).collect();
        let out = SpectralField::from_samples(self.grid.clone(), samples);
        if let Some(c) = self.coefficients.get() {
            let _ = out.coefficients.set(c.iter().map(|z| z * factor).collect());
        }
        out
    }

    fn zip_with(
        &self,
        other: &SpectralField,
        f: impl Fn(f64, f64) -> f64,
        fc: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> SpectralField {
        self.same_grid(other).expect("fields must share a grid");
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = SpectralField::from_samples(self.grid.clone(), samples);
        if let (Some(a), Some(b)) = (self.coefficients.get(), other.coefficients.get()) {
            let _ = out
                .coefficients
                .set(a.iter().zip(b).map(|(&x, &y)| fc(x, y)).collect());
        }
        out
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &SpectralField, b: f64) -> SpectralField {
        self.zip_with(other, |x, y| a * x + b * y, |x, y| x * a + y * b)
    }

    /// Pointwise product in physical space, without truncation.
    pub fn pointwise_mul(&self, other: &SpectralField) -> Result<SpectralField> {
        self.same_grid(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b)
            .collect();
        Ok(SpectralField::from_samples(self.grid.clone(), samples))
    }

    /// Pointwise product followed by the 2/3-rule truncation.
    pub fn dealiased_mul(&self, other: &SpectralField) -> Result<SpectralField> {
        Ok(self.pointwise_mul(other)?.dealiased())
    }

    /// Zeroes every mode above the 2/3-rule cutoff.
    pub fn dealiased(&self) -> SpectralField {
        let grid = self.grid.clone();
        let mut c = self.coefficients().to_vec();
        for (i, z) in c.iter_mut().enumerate() {
            if !grid.is_dealias_kept(i) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        SpectralField::from_coefficients(grid, c)
    }

    /// Discrete `Σ_j f(x_j)² dx`, square-rooted.
    pub fn l2_norm_physical(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// `Σ_j f(x_j) dx`.
    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// Largest mismatch `|f̂(-ξ) - conj f̂(ξ)|` over the lattice.
    pub fn hermitian_defect(&self) -> f64 {
        let c = self.coefficients();
        (0..self.grid.size())
            .map(|i| {
                let j = self.grid.index_of(-self.grid.wavenumber(i));
                (c[j] - c[i].conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Projects a coefficient vector onto the Hermitian-symmetric subspace.
pub(crate) fn symmetrize(c: &mut [Complex64]) {
    let n = c.len();
    for i in 1..n / 2 {
        let j = n - i;
        let avg = (c[i] + c[j].conj()) * 0.5;
        c[i] = avg;
        c[j] = avg.conj();
    }
    c[0] = Complex64::new(c[0].re, 0.0);
    c[n / 2] = Complex64::new(c[n / 2].re, 0.0);
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a + b, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a - b, |a, b| a - b)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn cache_is_invalidated_on_mutation() {
        let g = make_grid(PI, 16).unwrap();
        let mut f = SpectralField::from_fn(g, f64::sin);
        let before = f.coefficients()[1];
        assert!(f.has_cached_coefficients());
        for v in f.samples_mut() {
            *v *= 2.0;
        }
        assert!(!f.has_cached_coefficients());
        assert_relative_eq!(f.coefficients()[1].im, 2.0 * before.im, epsilon = 1e-12);
    }

    #[test]
    fn arithmetic_keeps_coefficients_consistent() {
        let g = make_grid(PI, 32).unwrap();
        let a = SpectralField::from_fn(g.clone(), |x| (2.0 * x).cos());
        let b = SpectralField::from_fn(g.clone(), |x| x.sin() + 0.25);
        let _ = (a.coefficients(), b.coefficients());
        let c = a.axpby(1.5, &b, -0.5);
        let fresh = g.forward(c.samples());
        for (x, y) in c.coefficients().iter().zip(&fresh) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn from_coefficients_is_real_and_consistent() {
        let g = make_grid(PI, 16).unwrap();
        let mut c = vec![Complex64::new(0.0, 0.0); 16];
        c[2] = Complex64::new(1.0, 2.0);
        let f = SpectralField::from_coefficients(g.clone(), c);
        assert!(f.hermitian_defect() < 1e-15);
        let fresh = g.forward(f.samples());
        for (x, y) in f.coefficients().iter().zip(&fresh) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn dealiasing_removes_top_third() {
        let g = make_grid(PI, 16).unwrap();
        let f = SpectralField::from_fn(g.clone(), |x| x.sin() + (7.0 * x).cos());
        let d = f.dealiased();
        for (a, x) in d.samples().iter().zip(g.nodes()) {
            assert_relative_eq!(*a, x.sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn mismatched_grids_are_reported() {
        let a = SpectralField::zeros(make_grid(PI, 16).unwrap());
        let b = SpectralField::zeros(make_grid(PI, 32).unwrap());
        assert!(matches!(a.pointwise_mul(&b), Err(Error::GridMismatch { .. })));
    }
}
