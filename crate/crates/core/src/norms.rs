//! Sobolev, sup and Fourier-L¹ norms.

use std::f64::consts::PI;

use crate::field::SpectralField;

/// `‖f‖_{H^s} = ( Σ_k (1+ξ_k²)^s |f̂(ξ_k)|² Δξ/(2π) )^{1/2}`.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> f64 {
    weighted_l2(f, |xi| (1.0 + xi * xi).powf(s))
}

/// `( Σ_k w(ξ_k) |f̂(ξ_k)|² Δξ/(2π) )^{1/2}` for a nonnegative weight `w`.
pub fn weighted_l2(f: &SpectralField, weight: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    let sum: f64 = f
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, c)| weight(grid.frequency(i)) * c.norm_sqr())
        .sum();
    (sum * grid.dxi() / (2.0 * PI)).sqrt()
}

/// Maximum of `|f(x_j)|` over the grid nodes.
pub fn linf_norm(f: &SpectralField) -> f64 {
    f.max_abs()
}

/// `Σ_k |f̂(ξ_k)| Δξ`, the lattice version of `∫|f̂| dξ`.
pub fn fourier_l1_norm(f: &SpectralField) -> f64 {
    f.coefficients().iter().map(|c| c.norm()).sum::<f64>() * f.grid().dxi()
}

/// Fraction of `Σ|f̂|²` carried by lattice frequencies where `inside` is false.
pub fn spectral_mass_outside(f: &SpectralField, inside: impl Fn(f64) -> bool) -> f64 {
    let grid = f.grid();
    let (mut total, mut outside) = (0.0, 0.0);
    for (i, c) in f.coefficients().iter().enumerate() {
        let m = c.norm_sqr();
        total += m;
        if !inside(grid.frequency(i)) {
            outside += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn zero_field() {
        let f = SpectralField::zeros(make_grid(PI, 16).unwrap());
        assert_eq!(sobolev_norm(&f, 3.0), 0.0);
        assert_eq!(linf_norm(&f), 0.0);
        assert_eq!(fourier_l1_norm(&f), 0.0);
    }

    #[test]
    fn sine_closed_forms() {
        let f = SpectralField::from_fn(make_grid(PI, 16).unwrap(), f64::sin);
        assert_relative_eq!(sobolev_norm(&f, 1.0), (2.0 * PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(sobolev_norm(&f, 0.0), PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(sobolev_norm(&f, 0.0), f.l2_norm_physical(), max_relative = 1e-12);
    }

    #[test]
    fn linf_of_resolved_mode() {
        for n in [8usize, 16, 64] {
            let f = SpectralField::from_fn(make_grid(PI, n).unwrap(), |x| (3.0 * x).sin());
            assert!((linf_norm(&f) - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn fourier_l1_of_cosine() {
        // cos(x) on [-π,π): f̂(±1) = π, so Σ|f̂|Δξ = 2π.
        let f = SpectralField::from_fn(make_grid(PI, 16).unwrap(), f64::cos);
        assert_relative_eq!(fourier_l1_norm(&f), 2.0 * PI, max_relative = 1e-13);
    }
}
