//! Invariant suites run by `twoch selfcheck`, on seeded random band-limited fields.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::construction::{bump_hat, make_bump, DEFAULT_HALF_WIDTH};
use crate::evolution::{rhs, Engine, State};
use crate::field::SpectralField;
use crate::grid::{make_grid, PeriodicGrid};
use crate::littlewood_paley::{
    chi, make_partition, phi_dyad, smooth_step, BesovIndex, Integrability, LittlewoodPaleyPartition, Summability,
};
use crate::multiplier::{apply_multiplier, derivative, lambda_power, semigroup, MultiplierSymbol};
use crate::norms::{sobolev_norm, weighted_l2};

/// Deliberate defects for checking that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// Low-frequency symbol with its support pushed out to 8/5.
    WidenedPartition,
}

impl std::str::FromStr for Fault {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "widened-chi" | "partition" => Ok(Fault::WidenedPartition),
            other => Err(crate::error::Error::config(format!("unknown fault {other:?}; known: widened-chi"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    /// `value >= limit` is required instead of `value <= limit`.
    pub at_least: bool,
    pub passed: bool,
}

impl SuiteResult {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, limit, at_least: false, passed: value <= limit }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, limit, at_least: true, passed: value >= limit }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} {:.3e} ({} {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            if self.at_least { ">=" } else { "<=" },
            self.limit
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn failures(&self) -> Vec<&SuiteResult> {
        self.suites.iter().filter(|s| !s.passed).collect()
    }
}

fn grids() -> Vec<Arc<PeriodicGrid>> {
    [(std::f64::consts::PI, 64), (8.0 * std::f64::consts::PI, 256), (DEFAULT_HALF_WIDTH, 1024)]
        .iter()
        .map(|&(l, n)| make_grid(l, n).expect("valid grid"))
        .collect()
}

/// Real field with random coefficients on `|k| <= kmax`, decaying like `1/(1+|k|)`.
pub fn random_field(rng: &mut impl Rng, grid: &Arc<PeriodicGrid>, kmax: i64) -> SpectralField {
    let n = grid.size();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for k in -kmax..=kmax {
        let amp = 1.0 / (1.0 + k.abs() as f64);
        c[grid.index_of(k)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp;
    }
    SpectralField::from_coefficients(grid.clone(), c)
}

fn random_samples(rng: &mut impl Rng, grid: &Arc<PeriodicGrid>) -> SpectralField {
    let s = (0..grid.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SpectralField::from_samples(grid.clone(), s)
}

fn rel_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

struct Trials<'a> {
    rng: &'a mut ChaCha8Rng,
    grids: Vec<Arc<PeriodicGrid>>,
}

impl Trials<'_> {
    /// Largest value of `f` over three random band-limited fields per grid.
    fn max_over(&mut self, mut f: impl FnMut(&SpectralField) -> f64) -> f64 {
        let mut worst: f64 = 0.0;
        for g in self.grids.clone() {
            let kmax = g.dealias_cutoff() / 2;
            for _ in 0..3 {
                let field = random_field(self.rng, &g, kmax);
                worst = worst.max(f(&field));
            }
        }
        worst
    }
}

fn partition_for(grid: &Arc<PeriodicGrid>, fault: Option<Fault>) -> LittlewoodPaleyPartition {
    match fault {
        Some(Fault::WidenedPartition) => {
            LittlewoodPaleyPartition::unchecked(grid.clone(), |xi: f64| smooth_step((1.6 - xi.abs()) / (1.6 - 1.25)), phi_dyad)
        }
        None => make_partition(grid).expect("standard partition is valid"),
    }
}

/// Runs every suite; never stops at the first failure.
pub fn cmd_selfcheck(seed: u64, fault: Option<Fault>) -> SelfcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suites = Vec::new();
    let mut t = Trials { rng: &mut rng, grids: grids() };

    let plancherel = t.max_over(|f| {
        let phys = f.l2_norm_physical().powi(2);
        (phys - sobolev_norm(f, 0.0).powi(2)).abs() / phys
    });
    suites.push(SuiteResult::at_most("plancherel", plancherel, 1e-10));

    let mut roundtrip: f64 = 0.0;
    let mut hermitian: f64 = 0.0;
    for g in t.grids.clone() {
        let f = random_samples(t.rng, &g);
        let back = SpectralField::from_samples(g.clone(), g.inverse(f.coefficients()));
        roundtrip = roundtrip.max(rel_diff(&f, &back));
        let scale = f.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max);
        hermitian = hermitian.max(f.hermitian_defect() / scale);
    }
    suites.push(SuiteResult::at_most("transform_roundtrip", roundtrip, 1e-12));
    suites.push(SuiteResult::at_most("conjugate_symmetry", hermitian, 1e-12));

    let commutation = t.max_over(|f| {
        let helm = MultiplierSymbol::grad_helmholtz_inv();
        let ab = apply_multiplier(&lambda_power(f, 1.5), &helm).expect("finite");
        let ba = lambda_power(&apply_multiplier(f, &helm).expect("finite"), 1.5);
        let composed = derivative(&lambda_power(f, -2.0));
        let sa = semigroup(&lambda_power(f, -0.5), 0.37);
        let as_ = lambda_power(&semigroup(f, 0.37), -0.5);
        rel_diff(&ab, &ba)
            .max(rel_diff(&apply_multiplier(f, &helm).expect("finite"), &composed))
            .max(rel_diff(&sa, &as_))
    });
    suites.push(SuiteResult::at_most("multiplier_commutation", commutation, 1e-12));

    let mut unity: f64 = 0.0;
    let mut partition_ok = true;
    for g in t.grids.clone() {
        let report = partition_for(&g, fault).validate();
        unity = unity.max(report.unity_residual);
        partition_ok &= report.passes();
    }
    suites.push(SuiteResult {
        passed: partition_ok && unity <= 1e-12,
        ..SuiteResult::at_most("partition_of_unity", unity, 1e-12)
    });

    let t_grids = t.grids.clone();
    let reconstruction = {
        let mut worst: f64 = 0.0;
        for g in &t_grids {
            let p = partition_for(g, fault);
            for _ in 0..2 {
                let f = random_field(t.rng, g, g.dealias_cutoff());
                let mut sum = SpectralField::zeros(g.clone());
                for b in p.blocks(&f).expect("in range") {
                    sum = &sum + &b;
                }
                worst = worst.max((&f - &sum).l2_norm_physical() / f.l2_norm_physical());
            }
        }
        worst
    };
    suites.push(SuiteResult::at_most("block_reconstruction", reconstruction, 1e-10));

    // Bernstein: annulus-localized pieces of random fields.
    let mut bernstein: f64 = 0.0;
    for g in &t_grids {
        let p = make_partition(g).expect("valid");
        let f = random_field(t.rng, g, g.size() as i64 / 2 - 1);
        for j in 0..=p.j_max() {
            let b = p.block(&f, j).expect("in range");
            let norm = b.l2_norm_physical();
            if norm == 0.0 {
                continue;
            }
            let d = derivative(&b).l2_norm_physical() / norm;
            let (lo, hi) = (0.75 * 2f64.powi(j), 8.0 / 3.0 * 2f64.powi(j));
            bernstein = bernstein.max((lo - d).max(d - hi).max(0.0) / lo);
        }
    }
    suites.push(SuiteResult::at_most("bernstein", bernstein, 1e-12));

    // Besov/Sobolev comparison on fields with no spectrum below 3/4, plus
    // the embedding chain r = ∞ <= r = 2 <= r = 1.
    let mut bracket: f64 = 0.0;
    let mut embedding: f64 = 0.0;
    for g in &t_grids {
        let p = make_partition(g).expect("valid");
        let base = random_field(t.rng, g, g.dealias_cutoff());
        let c: Vec<Complex64> = base
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, &z)| if g.frequency(i).abs() >= 0.75 { z } else { Complex64::new(0.0, 0.0) })
            .collect();
        let f = SpectralField::from_coefficients(g.clone(), c);
        for s in [0.5, 1.0, 2.0] {
            let b2 = p.besov_norm(&f, BesovIndex::sobolev(s)).expect("valid");
            let ratio = b2 / sobolev_norm(&f, s);
            let (lo, hi) = (0.3f64.powf(s) / 2f64.sqrt(), (4.0f64 / 3.0).powf(s));
            bracket = bracket.max((lo - ratio).max(ratio - hi).max(0.0));
            for q in [Integrability::Two, Integrability::Infinity] {
                let n = |r| p.besov_norm(&f, BesovIndex::new(s, q, r)).expect("valid");
                let (inf, two, one) = (n(Summability::Infinity), n(Summability::Two), n(Summability::One));
                embedding = embedding.max((inf - two).max(two - one).max(0.0) / one);
            }
        }
    }
    suites.push(SuiteResult::at_most("besov_sobolev_bracket", bracket, 0.0));
    suites.push(SuiteResult::at_most("besov_embedding", embedding, 0.0));

    let isometry = t.max_over(|f| {
        [0.0, 1.0, 2.5]
            .iter()
            .map(|&s| (sobolev_norm(&semigroup(f, 0.83), s) / sobolev_norm(f, s) - 1.0).abs())
            .fold(0.0, f64::max)
    });
    suites.push(SuiteResult::at_most("semigroup_isometry", isometry, 1e-10));

    let group = t.max_over(|f| rel_diff(&semigroup(&semigroup(f, 0.3), 0.45), &semigroup(f, 0.75)));
    suites.push(SuiteResult::at_most("semigroup_group_law", group, 1e-10));

    let lipschitz = t.max_over(|f| {
        let t0 = 0.6;
        let lhs = sobolev_norm(&(&semigroup(f, t0) - f), 1.0);
        ((lhs - t0 * sobolev_norm(f, 2.0)) / sobolev_norm(f, 2.0)).max(0.0)
    });
    suites.push(SuiteResult::at_most("semigroup_lipschitz", lipschitz, 1e-12));

    let generator_order = {
        let g = make_grid(std::f64::consts::PI, 64).expect("valid");
        let f = random_field(t.rng, &g, 8);
        let af = crate::multiplier::linear_generator(&f);
        let err = |h: f64| {
            let cd = (&semigroup(&f, h) - &semigroup(&f, -h)).scale(0.5 / h);
            sobolev_norm(&(&cd - &af), 0.0)
        };
        (err(1e-2) / err(5e-3)).log2()
    };
    suites.push(SuiteResult::at_least("semigroup_generator_order", generator_order, 1.9));

    let interpolation = t.max_over(|f| {
        [0.0, 1.0, 2.0, 3.5]
            .iter()
            .map(|&s| {
                let mid = sobolev_norm(f, s);
                ((mid - (sobolev_norm(f, s - 1.0) * sobolev_norm(f, s + 1.0)).sqrt()) / mid).max(0.0)
            })
            .fold(0.0, f64::max)
    });
    suites.push(SuiteResult::at_most("interpolation", interpolation, 1e-10));

    let rhs_match = {
        let mut worst: f64 = 0.0;
        for g in t.grids.clone() {
            let u = random_field(t.rng, &g, g.dealias_cutoff()).scale(0.3);
            let r = random_field(t.rng, &g, g.dealias_cutoff()).scale(0.3);
            let st = State::new(u, r, 0.0).expect("same grid");
            let (a, b) = rhs(&st).expect("finite");
            let (c, d) = Engine::new(g.clone()).rhs(&st).expect("finite");
            worst = worst.max(rel_diff(&a, &c)).max(rel_diff(&b, &d));
        }
        worst
    };
    suites.push(SuiteResult::at_most("solver_rhs_consistency", rhs_match, 1e-12));

    let bump = {
        let g = make_grid(DEFAULT_HALF_WIDTH, 1024).expect("valid");
        match make_bump(&g) {
            Ok(b) => {
                let hat_defect = (0..=64)
                    .map(|i| {
                        let xi = i as f64 / 64.0;
                        let even = (bump_hat(xi) - bump_hat(-xi)).abs();
                        let plateau = if xi <= 0.25 { (bump_hat(xi) - 1.0).abs() } else { 0.0 };
                        let support = if xi >= 0.5 { bump_hat(xi).abs() } else { 0.0 };
                        even.max(plateau).max(support)
                    })
                    .fold(0.0, f64::max);
                let evenness = (1..g.size())
                    .map(|j| (b.field().samples()[j] - b.field().samples()[g.size() - j]).abs())
                    .fold(0.0, f64::max);
                hat_defect.max(evenness)
            }
            Err(_) => f64::INFINITY,
        }
    };
    suites.push(SuiteResult::at_most("bump_profile", bump, 1e-10));

    // Symbols of the standard partition at the tabulated points.
    let symbols = (chi(0.0) - 1.0).abs().max((phi_dyad(1.4) - 1.0).abs()).max((chi(1.0) + phi_dyad(1.0) - 1.0).abs());
    suites.push(SuiteResult::at_most("partition_symbol_values", symbols, 1e-15));

    // Plancherel against the weighted form, as a cross-check of the weight path.
    let weighted = t.max_over(|f| (weighted_l2(f, |_| 1.0) / sobolev_norm(f, 0.0) - 1.0).abs());
    suites.push(SuiteResult::at_most("weighted_l2_consistency", weighted, 1e-14));

    SelfcheckReport { seed, suites }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let r = cmd_selfcheck(7, None);
        for s in &r.suites {
            assert!(s.passed, "{}", s.line());
        }
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn widened_partition_is_caught() {
        let r = cmd_selfcheck(7, Some(Fault::WidenedPartition));
        let names: Vec<&str> = r.failures().iter().map(|s| s.name).collect();
        assert!(names.contains(&"partition_of_unity"), "{names:?}");
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn seeded_runs_agree() {
        let a = cmd_selfcheck(11, None);
        let b = cmd_selfcheck(11, None);
        for (x, y) in a.suites.iter().zip(&b.suites) {
            assert_eq!(x.value.to_bits(), y.value.to_bits(), "{}", x.name);
        }
    }
}
