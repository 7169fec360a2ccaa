//! Littlewood-Paley blocks and nonhomogeneous Besov norms.
//!
//! The low-frequency symbol is `χ(ξ) = g((4/3 - |ξ|)/(4/3 - 5/4))` with the
//! C^∞ step `g`, so `χ ≡ 1` on `|ξ| ≤ 5/4` and vanishes for `|ξ| ≥ 4/3`.
//! The dyadic symbol `φ(ξ) = χ(ξ/2) - χ(ξ)` then telescopes:
//! `χ(ξ) + Σ_{j≤J} φ(2^{-j}ξ) = χ(2^{-J-1}ξ)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::PeriodicGrid;

pub const CHI_PLATEAU: f64 = 5.0 / 4.0;
pub const CHI_SUPPORT: f64 = 4.0 / 3.0;
pub const ANNULUS_INNER: f64 = 3.0 / 4.0;
pub const ANNULUS_OUTER: f64 = 8.0 / 3.0;
pub const PARTITION_TOLERANCE: f64 = 1e-12;

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn flat(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, with `g(t) + g(1-t) = 1`.
pub fn smooth_step(t: f64) -> f64 {
    let a = flat(t);
    let b = flat(1.0 - t);
    a / (a + b)
}

/// Standard low-frequency symbol.
pub fn chi(xi: f64) -> f64 {
    smooth_step((CHI_SUPPORT - xi.abs()) / (CHI_SUPPORT - CHI_PLATEAU))
}

/// Standard dyadic symbol.
pub fn phi_dyad(xi: f64) -> f64 {
    chi(0.5 * xi) - chi(xi)
}

type Symbol = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LittlewoodPaleyPartition {
    grid: Arc<PeriodicGrid>,
    chi: Symbol,
    phi: Symbol,
    j_max: i32,
}

impl fmt::Debug for LittlewoodPaleyPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LittlewoodPaleyPartition")
            .field("grid", &self.grid)
            .field("j_max", &self.j_max)
            .finish()
    }
}

/// Residuals of the partition invariants, measured on the lattice.
#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    /// `max |χ + Σ_j φ(2^{-j}·) - 1|` over `|ξ| ≤ ξ_Ny`.
    pub unity_residual: f64,
    /// Largest `χ` value found outside `|ξ| ≤ 4/3`.
    pub chi_support_leak: f64,
    /// Largest `φ` value found outside `3/4 ≤ |ξ| ≤ 8/3`.
    pub phi_support_leak: f64,
    /// Largest `|φ - 1|` on `4/3 ≤ |ξ| ≤ 3/2`.
    pub phi_plateau_defect: f64,
    /// Most blocks simultaneously nonzero at one lattice point.
    pub max_overlap: usize,
    pub overlap_consecutive: bool,
    pub values_in_unit_interval: bool,
}

impl PartitionReport {
    pub fn passes(&self) -> bool {
        self.unity_residual <= PARTITION_TOLERANCE
            && self.chi_support_leak == 0.0
            && self.phi_support_leak == 0.0
            && self.phi_plateau_defect <= PARTITION_TOLERANCE
            && self.max_overlap <= 2
            && self.overlap_consecutive
            && self.values_in_unit_interval
    }
}

/// Smallest `j` such that every block beyond `j` vanishes on the lattice,
/// i.e. `(5/2)·2^j ≥ ξ_Ny`.
pub fn block_limit(grid: &PeriodicGrid) -> i32 {
    let ny = grid.nyquist();
    let mut j = 0;
    while 2.5 * 2f64.powi(j) < ny {
        j += 1;
    }
    j
}

/// Builds and validates the standard partition on `grid`.
pub fn make_partition(grid: &Arc<PeriodicGrid>) -> Result<LittlewoodPaleyPartition> {
    LittlewoodPaleyPartition::with_symbols(grid.clone(), chi, phi_dyad)
}

impl LittlewoodPaleyPartition {
    /// Partition with caller-supplied symbols; fails if any invariant is violated.
    pub fn with_symbols(
        grid: Arc<PeriodicGrid>,
        chi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let p = Self::unchecked(grid, chi, phi);
        let report = p.validate();
        if report.passes() {
            Ok(p)
        } else {
            Err(Error::Partition(format!("{report:?}")))
        }
    }

    /// Partition with caller-supplied symbols, skipping validation.
    pub fn unchecked(
        grid: Arc<PeriodicGrid>,
        chi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let j_max = block_limit(&grid);
        Self {
            grid,
            chi: Arc::new(chi),
            phi: Arc::new(phi),
            j_max,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn chi(&self, xi: f64) -> f64 {
        (self.chi)(xi)
    }

    pub fn phi(&self, xi: f64) -> f64 {
        (self.phi)(xi)
    }

    /// Symbol of `Δ_j` at `ξ`.
    pub fn block_symbol(&self, j: i32, xi: f64) -> f64 {
        match j {
            j if j < -1 => 0.0,
            -1 => self.chi(xi),
            j => self.phi(xi / 2f64.powi(j)),
        }
    }

    pub fn validate(&self) -> PartitionReport {
        let freqs = self.grid.sorted_frequencies();
        let mut report = PartitionReport {
            unity_residual: 0.0,
            chi_support_leak: 0.0,
            phi_support_leak: 0.0,
            phi_plateau_defect: 0.0,
            max_overlap: 0,
            overlap_consecutive: true,
            values_in_unit_interval: true,
        };
        for &xi in &freqs {
            let mut sum = 0.0;
            let mut active = Vec::new();
            for j in -1..=self.j_max {
                let v = self.block_symbol(j, xi);
                if !(0.0..=1.0).contains(&v) {
                    report.values_in_unit_interval = false;
                }
                if v != 0.0 {
                    active.push(j);
                }
                sum += v;
            }
            report.unity_residual = report.unity_residual.max((sum - 1.0).abs());
            report.max_overlap = report.max_overlap.max(active.len());
            if active.windows(2).any(|w| w[1] != w[0] + 1) {
                report.overlap_consecutive = false;
            }
        }
        // Support and plateau checks on a fine sampling, independent of the lattice.
        let samples = 20_000;
        for i in 0..=samples {
            let xi = 4.0 * i as f64 / samples as f64;
            let c = self.chi(xi);
            let p = self.phi(xi);
            if xi > CHI_SUPPORT {
                report.chi_support_leak = report.chi_support_leak.max(c.abs());
            }
            if !(ANNULUS_INNER..=ANNULUS_OUTER).contains(&xi) {
                report.phi_support_leak = report.phi_support_leak.max(p.abs());
            }
            if (CHI_SUPPORT..=1.5).contains(&xi) {
                report.phi_plateau_defect = report.phi_plateau_defect.max((p - 1.0).abs());
            }
            if self.chi(-xi) != c || self.phi(-xi) != p {
                report.values_in_unit_interval = false;
            }
        }
        report
    }

    fn check_block(&self, j: i32) -> Result<()> {
        if j < -1 || j > self.j_max {
            Err(Error::BlockOutOfRange { j, j_max: self.j_max })
        } else {
            Ok(())
        }
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left_l: f.grid().half_width(),
                left_n: f.grid().size(),
                right_l: self.grid.half_width(),
                right_n: self.grid.size(),
            })
        }
    }

    /// `Δ_j f`.
    pub fn block(&self, f: &SpectralField, j: i32) -> Result<SpectralField> {
        self.check_block(j)?;
        self.check_grid(f)?;
        let c: Vec<Complex64> = f
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, &z)| z * self.block_symbol(j, self.grid.frequency(i)))
            .collect();
        Ok(SpectralField::from_coefficients(self.grid.clone(), c))
    }

    /// `‖Δ_j f‖_{L²}` via Plancherel, without forming the block.
    pub fn block_l2(&self, f: &SpectralField, j: i32) -> Result<f64> {
        self.check_block(j)?;
        self.check_grid(f)?;
        Ok(crate::norms::weighted_l2(f, |xi| self.block_symbol(j, xi).powi(2)))
    }

    /// Every block from `-1` to `j_max`.
    pub fn blocks(&self, f: &SpectralField) -> Result<Vec<SpectralField>> {
        (-1..=self.j_max).map(|j| self.block(f, j)).collect()
    }

    pub fn besov_norm(&self, f: &SpectralField, idx: BesovIndex) -> Result<f64> {
        let mut terms = Vec::with_capacity((self.j_max + 2) as usize);
        for j in -1..=self.j_max {
            let block = match idx.p {
                Integrability::Two => self.block_l2(f, j)?,
                Integrability::Infinity => self.block(f, j)?.max_abs(),
            };
            terms.push(2f64.powf(idx.s * j as f64) * block);
        }
        Ok(match idx.r {
            Summability::One => terms.iter().sum(),
            Summability::Two => terms.iter().map(|t| t * t).sum::<f64>().sqrt(),
            Summability::Infinity => terms.iter().cloned().fold(0.0, f64::max),
        })
    }
}

pub fn lp_block(partition: &LittlewoodPaleyPartition, f: &SpectralField, j: i32) -> Result<SpectralField> {
    partition.block(f, j)
}

pub fn besov_norm(partition: &LittlewoodPaleyPartition, f: &SpectralField, idx: BesovIndex) -> Result<f64> {
    partition.besov_norm(f, idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrability {
    Two,
    Infinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Summability {
    One,
    Two,
    Infinity,
}

/// `(s, p, r)` with `p ∈ {2, ∞}` and `r ∈ {1, 2, ∞}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub s: f64,
    pub p: Integrability,
    pub r: Summability,
}

impl BesovIndex {
    pub fn new(s: f64, p: Integrability, r: Summability) -> Self {
        Self { s, p, r }
    }

    /// `B^s_{2,2}`, equivalent to `H^s`.
    pub fn sobolev(s: f64) -> Self {
        Self::new(s, Integrability::Two, Summability::Two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::norms::sobolev_norm;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn symbol_values() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(phi_dyad(1.4), 1.0);
        assert_eq!(chi(1.0) + phi_dyad(1.0), 1.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
        assert_eq!(phi_dyad(3.0), 0.0);
        assert_eq!(phi_dyad(0.75), 0.0);
        assert!(chi(1.3) > 0.0 && chi(1.3) < 1.0);
    }

    #[test]
    fn smooth_step_is_symmetric() {
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((smooth_step(t) + smooth_step(1.0 - t) - 1.0).abs() < 1e-15);
        }
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
    }

    #[test]
    fn standard_partition_is_valid_on_several_grids() {
        for (l, n) in [(PI, 8), (PI, 64), (32.0 * PI, 1024), (3.7, 256), (10.0, 32)] {
            let g = make_grid(l, n).unwrap();
            let p = make_partition(&g).unwrap();
            let r = p.validate();
            assert!(r.passes(), "{l} {n}: {r:?}");
        }
    }

    #[test]
    fn block_limit_matches_dyadic_rule_on_dyadic_grids() {
        let g = make_grid(32.0 * PI, 1 << 17).unwrap();
        // (8/3)·2^j > 2048 first holds at j = 10.
        assert_eq!(block_limit(&g), 10);
        let g = make_grid(PI, 64).unwrap();
        assert_eq!(block_limit(&g), 4);
    }

    #[test]
    fn widened_chi_breaks_the_partition() {
        // Lattice spacing 1/8, so frequencies inside (5/4, 8/5) are sampled.
        let g = make_grid(8.0 * PI, 256).unwrap();
        let wide = |xi: f64| smooth_step((1.6 - xi.abs()) / (1.6 - 1.25));
        let err = LittlewoodPaleyPartition::with_symbols(g.clone(), wide, phi_dyad).unwrap_err();
        assert!(matches!(err, Error::Partition(_)));
        let r = LittlewoodPaleyPartition::unchecked(g, wide, phi_dyad).validate();
        assert!(r.unity_residual > 1e-3);
        assert!(r.chi_support_leak > 0.0);
    }

    #[test]
    fn blocks_of_sin3x() {
        let g = make_grid(PI, 64).unwrap();
        let p = make_partition(&g).unwrap();
        let f = SpectralField::from_fn(g.clone(), |x| (3.0 * x).sin());
        for j in -1..=p.j_max() {
            let b = p.block(&f, j).unwrap();
            let expected = if j == 1 { 1.0 } else { 0.0 };
            for (v, x) in b.samples().iter().zip(g.nodes()) {
                assert!((v - expected * (3.0 * x).sin()).abs() < 1e-13);
            }
        }
        let idx = BesovIndex::sobolev(1.5);
        assert_relative_eq!(p.besov_norm(&f, idx).unwrap(), 2f64.powf(1.5) * PI.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn constant_lives_in_low_block() {
        let g = make_grid(PI, 32).unwrap();
        let p = make_partition(&g).unwrap();
        let f = SpectralField::from_fn(g.clone(), |_| 2.5);
        let b = p.block(&f, -1).unwrap();
        assert!(b.samples().iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(matches!(p.block(&f, -2), Err(Error::BlockOutOfRange { .. })));
        assert!(matches!(p.block(&f, p.j_max() + 1), Err(Error::BlockOutOfRange { .. })));
    }

    #[test]
    fn zero_field_besov() {
        let g = make_grid(PI, 32).unwrap();
        let p = make_partition(&g).unwrap();
        let f = SpectralField::zeros(g);
        for r in [Summability::One, Summability::Two, Summability::Infinity] {
            for q in [Integrability::Two, Integrability::Infinity] {
                assert_eq!(p.besov_norm(&f, BesovIndex::new(1.0, q, r)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn low_mode_violates_naive_bracket() {
        // sin(x): only Δ_{-1} is active, so B^s_{2,2}/H^s = 2^{-s}/2^{s/2}.
        let g = make_grid(PI, 32).unwrap();
        let p = make_partition(&g).unwrap();
        let f = SpectralField::from_fn(g, f64::sin);
        let s = 2.0;
        let ratio = p.besov_norm(&f, BesovIndex::sobolev(s)).unwrap() / sobolev_norm(&f, s);
        assert_relative_eq!(ratio, 2f64.powf(-1.5 * s), max_relative = 1e-12);
        assert!(ratio < 0.75f64.powf(s) / 2f64.sqrt());
        assert!(ratio >= 0.3f64.powf(s) / 2f64.sqrt());
    }
}
