//! Fourier multipliers: `ĝ(ξ) = m(ξ) f̂(ξ)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;

type SymbolFn = dyn Fn(f64) -> Complex64 + Send + Sync;

#[derive(Clone)]
pub struct MultiplierSymbol {
    name: String,
    symbol: Arc<SymbolFn>,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol").field("name", &self.name).finish()
    }
}

impl MultiplierSymbol {
    pub fn new(name: impl Into<String>, symbol: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            symbol: Arc::new(symbol),
        }
    }

    pub fn real(name: impl Into<String>, symbol: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, move |xi| Complex64::new(symbol(xi), 0.0))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, xi: f64) -> Complex64 {
        (self.symbol)(xi)
    }

    pub fn identity() -> Self {
        Self::real("1", |_| 1.0)
    }

    /// `∂ₓ`: symbol `iξ`.
    pub fn derivative() -> Self {
        Self::new("d/dx", |xi| Complex64::new(0.0, xi))
    }

    /// `Λ^σ = (1 - ∂ₓ²)^{σ/2}`: symbol `(1+ξ²)^{σ/2}`.
    pub fn lambda_power(sigma: f64) -> Self {
        Self::real(format!("Lambda^{sigma}"), move |xi| (1.0 + xi * xi).powf(0.5 * sigma))
    }

    /// `∂ₓΛ⁻²`: symbol `iξ/(1+ξ²)`, magnitude at most 1/2.
    pub fn grad_helmholtz_inv() -> Self {
        Self::new("d/dx Lambda^-2", |xi| Complex64::new(0.0, xi / (1.0 + xi * xi)))
    }

    /// Generator of the linear flow, `𝔸 = -∂ₓΛ⁻¹`: symbol `-iξ/√(1+ξ²)`.
    pub fn linear_generator() -> Self {
        Self::new("-d/dx Lambda^-1", |xi| Complex64::new(0.0, -xi / (1.0 + xi * xi).sqrt()))
    }

    /// `e^{t𝔸}`: symbol `exp(-i t ξ (1+ξ²)^{-1/2})`.
    pub fn semigroup(t: f64) -> Self {
        Self::new(format!("exp({t} A)"), move |xi| {
            Complex64::from_polar(1.0, -t * xi / (1.0 + xi * xi).sqrt())
        })
    }

    /// Pointwise product of two symbols.
    pub fn compose(&self, other: &MultiplierSymbol) -> Self {
        let (a, b) = (self.symbol.clone(), other.symbol.clone());
        Self {
            name: format!("{} . {}", self.name, other.name),
            symbol: Arc::new(move |xi| a(xi) * b(xi)),
        }
    }
}

/// Applies `m` on the coefficient side. The result is the real part of
/// `F⁻¹(m f̂)`, which is the whole result whenever `m(-ξ) = conj m(ξ)`.
pub fn apply_multiplier(f: &SpectralField, m: &MultiplierSymbol) -> Result<SpectralField> {
    let grid = f.grid().clone();
    let coefficients = f.coefficients();
    let mut out = Vec::with_capacity(coefficients.len());
    for (i, &c) in coefficients.iter().enumerate() {
        let xi = grid.frequency(i);
        let v = m.eval(xi);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFiniteSymbol {
                name: m.name().to_owned(),
                xi,
            });
        }
        out.push(v * c);
    }
    Ok(SpectralField::from_coefficients(grid, out))
}

// The named operators below use symbols that are finite everywhere, so the
// error path of `apply_multiplier` is unreachable for them.
fn apply_total(f: &SpectralField, m: &MultiplierSymbol) -> SpectralField {
    apply_multiplier(f, m).expect("symbol is finite on the whole lattice")
}

pub fn derivative(f: &SpectralField) -> SpectralField {
    apply_total(f, &MultiplierSymbol::derivative())
}

pub fn lambda_power(f: &SpectralField, sigma: f64) -> SpectralField {
    assert!(sigma.is_finite(), "Lambda exponent must be finite");
    apply_total(f, &MultiplierSymbol::lambda_power(sigma))
}

pub fn grad_helmholtz_inv(f: &SpectralField) -> SpectralField {
    apply_total(f, &MultiplierSymbol::grad_helmholtz_inv())
}

pub fn linear_generator(f: &SpectralField) -> SpectralField {
    apply_total(f, &MultiplierSymbol::linear_generator())
}

pub fn semigroup(f: &SpectralField, t: f64) -> SpectralField {
    assert!(t.is_finite(), "semigroup time must be finite");
    if t == 0.0 {
        return f.clone();
    }
    apply_total(f, &MultiplierSymbol::semigroup(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::norms::sobolev_norm;
    use std::f64::consts::PI;

    fn max_diff(a: &SpectralField, f: impl Fn(f64) -> f64) -> f64 {
        a.samples()
            .iter()
            .zip(a.grid().nodes())
            .map(|(v, x)| (v - f(x)).abs())
            .fold(0.0, f64::max)
    }

    fn grid() -> Arc<crate::grid::PeriodicGrid> {
        make_grid(PI, 32).unwrap()
    }

    #[test]
    fn identity_symbols() {
        let f = SpectralField::from_fn(grid(), |x| x.sin() + 0.3 * (2.0 * x).cos() + 0.1);
        let g = apply_multiplier(&f, &MultiplierSymbol::identity()).unwrap();
        assert!(max_diff(&g, |x| x.sin() + 0.3 * (2.0 * x).cos() + 0.1) < 1e-14);
        let g = lambda_power(&f, 0.0);
        assert!(max_diff(&g, |x| x.sin() + 0.3 * (2.0 * x).cos() + 0.1) < 1e-14);
        assert!(max_diff(&semigroup(&f, 0.0), |x| x.sin() + 0.3 * (2.0 * x).cos() + 0.1) < 1e-14);
    }

    #[test]
    fn single_mode_values() {
        let g = grid();
        let s1 = SpectralField::from_fn(g.clone(), f64::sin);
        let s3 = SpectralField::from_fn(g.clone(), |x| (3.0 * x).sin());
        let one = SpectralField::from_fn(g.clone(), |_| 1.0);

        assert!(max_diff(&derivative(&one), |_| 0.0) < 1e-14);
        assert!(max_diff(&derivative(&s1), f64::cos) < 1e-13);
        assert!(max_diff(&derivative(&s3), |x| 3.0 * (3.0 * x).cos()) < 1e-12);

        assert!(max_diff(&lambda_power(&one, -2.0), |_| 1.0) < 1e-14);
        assert!(max_diff(&lambda_power(&s1, 2.0), |x| 2.0 * x.sin()) < 1e-13);

        assert!(max_diff(&grad_helmholtz_inv(&one), |_| 0.0) < 1e-14);
        assert!(max_diff(&grad_helmholtz_inv(&s1), |x| 0.5 * x.cos()) < 1e-14);
        assert!(max_diff(&grad_helmholtz_inv(&s3), |x| 0.3 * (3.0 * x).cos()) < 1e-14);

        let custom = MultiplierSymbol::new("i xi/(1+xi^2)", |xi| Complex64::new(0.0, xi / (1.0 + xi * xi)));
        assert!(max_diff(&apply_multiplier(&s1, &custom).unwrap(), |x| 0.5 * x.cos()) < 1e-14);

        let t = 0.7;
        assert!(max_diff(&semigroup(&s1, t), |x| (x - t / 2f64.sqrt()).sin()) < 1e-13);
    }

    #[test]
    fn non_finite_symbol_reports_frequency() {
        let f = SpectralField::from_fn(grid(), f64::sin);
        let bad = MultiplierSymbol::real("1/xi", |xi| 1.0 / xi);
        match apply_multiplier(&f, &bad) {
            Err(Error::NonFiniteSymbol { xi, .. }) => assert_eq!(xi, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn helmholtz_bound() {
        let f = SpectralField::from_fn(grid(), |x| (x.cos() * 2.0).exp());
        let g = grad_helmholtz_inv(&f);
        assert!(sobolev_norm(&g, 0.0) <= 0.5 * sobolev_norm(&f, 0.0) + 1e-14);
    }
}
