//! Linear approximate solutions and their error tables.
//!
//! The first approximant is the linear flow `(e^{t𝔸}u₀, e^{t𝔸}Λu₀)`; the
//! second adds the low-frequency perturbation and the first-order
//! corrections `Ũ = -ũ ∂ₓũ`, `Ṽ = -ũ ∂ₓϱ̃` of the perturbed linear flow.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{make_pairs, DataFamily};
use crate::error::{Error, Result};
use crate::evolution::{solve, SolverConfig, State, Trajectory};
use crate::field::SpectralField;
use crate::fit::{n_slope, power_exponent};
use crate::multiplier::{derivative, semigroup};
use crate::norms::sobolev_norm;

/// Largest relative change of a table entry under refinement (N×2, dt/2).
pub const REFINEMENT_TOLERANCE: f64 = 0.05;
/// Slack added to predicted rates when judging fitted slopes.
pub const SLOPE_SLACK: f64 = 0.2;
pub const MIN_T_EXPONENT: f64 = 1.7;

#[derive(Clone, Debug)]
pub struct FirstApprox {
    pub u: SpectralField,
    pub rho: SpectralField,
}

#[derive(Clone, Debug)]
pub struct SecondApprox {
    pub u: SpectralField,
    pub rho: SpectralField,
    /// `Ũ = -ũ^ap ∂ₓũ^ap`
    pub u_correction: SpectralField,
    /// `Ṽ = -ũ^ap ∂ₓϱ̃^ap`
    pub rho_correction: SpectralField,
}

pub fn first_approx_from(u0: &SpectralField, rho0: &SpectralField, t: f64) -> FirstApprox {
    FirstApprox {
        u: semigroup(u0, t),
        rho: semigroup(rho0, t),
    }
}

pub fn second_approx_from(u0: &SpectralField, rho0: &SpectralField, t: f64) -> SecondApprox {
    let u = semigroup(u0, t);
    let rho = semigroup(rho0, t);
    let u_correction = u.dealiased_mul(&derivative(&u)).expect("same grid").scale(-1.0);
    let rho_correction = u.dealiased_mul(&derivative(&rho)).expect("same grid").scale(-1.0);
    SecondApprox {
        u,
        rho,
        u_correction,
        rho_correction,
    }
}

/// `(e^{t𝔸}u₀,ₙ, e^{t𝔸}Λu₀,ₙ)`.
pub fn first_approx(fam: &DataFamily, t: f64) -> FirstApprox {
    let p = make_pairs(fam);
    first_approx_from(&p.u, &p.rho, t)
}

/// Linear flow of `(u₀,ₙ + fₙ, Λ(u₀,ₙ + fₙ))` with its corrections.
pub fn second_approx(fam: &DataFamily, t: f64) -> SecondApprox {
    let p = make_pairs(fam);
    second_approx_from(&p.u_perturbed, &p.rho_perturbed, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Proposition {
    /// `E₁ = ‖u - u^ap‖_{H^s} + ‖ϱ - ϱ^ap‖_{H^{s-1}}`
    First,
    /// `E₂ = ‖ũ - ũ^ap - tŨ‖_{H^s} + ‖ϱ̃ - ϱ̃^ap - tṼ‖_{H^{s-1}}`
    Second,
}

impl Proposition {
    pub fn from_index(which: u32) -> Result<Self> {
        match which {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(Error::config(format!("approximation error index must be 1 or 2, got {which}"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }

    /// Predicted bound: `2^{-n(s-3/2)/2}` for the first, `t² + 2^{-n(s-3/2)}`
    /// for the second.
    pub fn prediction(self, s: f64, n: u32, t: f64) -> f64 {
        let n = n as f64;
        match self {
            Self::First => 2f64.powf(-n * (s - 1.5) / 2.0),
            Self::Second => t * t + 2f64.powf(-n * (s - 1.5)),
        }
    }

    /// Predicted log₂-slope in `n`.
    pub fn predicted_n_slope(self, s: f64) -> f64 {
        match self {
            Self::First => -(s - 1.5) / 2.0,
            Self::Second => -(s - 1.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RowStatus {
    Ok,
    /// The slope guard stopped the solve before this time.
    Breaking { t: f64 },
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok)
    }

    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::Breaking { t } => format!("breaking@{t}"),
            RowStatus::Failed(msg) => format!("failed: {}", msg.replace(',', ";")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub n: u32,
    pub t: f64,
    pub error: f64,
    /// `error / prediction`.
    pub normalized: f64,
    /// For the first proposition, `(‖u-u^ap‖_{H^{s-1}} + ‖ϱ-ϱ^ap‖_{H^{s-2}})·2^{(s-1/2)n}`.
    pub lower_order: Option<f64>,
    /// `|E_refined / E - 1|`, when a refinement run was made.
    pub refinement_change: Option<f64>,
    pub status: RowStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorTable {
    pub proposition: Proposition,
    pub s: f64,
    pub rows: Vec<ErrorRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: Option<f64>, threshold: f64) -> Self {
        let v = value.unwrap_or(f64::NAN);
        Self {
            name: name.into(),
            value: v,
            threshold,
            passed: v <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: Option<f64>, threshold: f64) -> Self {
        let v = value.unwrap_or(f64::NAN);
        Self {
            name: name.into(),
            value: v,
            threshold,
            passed: v >= threshold,
        }
    }
}

impl ErrorTable {
    fn ns(&self) -> Vec<u32> {
        let mut ns: Vec<u32> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        ns
    }

    fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// log₂-slope of the error across `n` at fixed `t`, over usable rows.
    pub fn n_slope_at(&self, t: f64) -> Option<f64> {
        let (ns, es): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.t == t && r.status.is_ok())
            .map(|r| (r.n as f64, r.error))
            .unzip();
        n_slope(&ns, &es)
    }

    /// Exponent of `t` in the error at fixed `n`, over usable rows with `t > 0`.
    pub fn t_exponent_at(&self, n: u32) -> Option<f64> {
        let (ts, es): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.n == n && r.status.is_ok())
            .map(|r| (r.t, r.error))
            .unzip();
        power_exponent(&ts, &es)
    }

    pub fn max_refinement_change(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.refinement_change)
            .reduce(f64::max)
    }

    /// Whether the error at `t` strictly decreases with `n`.
    pub fn monotone_in_n(&self, t: f64) -> bool {
        let es: Vec<f64> = self.rows.iter().filter(|r| r.t == t).map(|r| r.error).collect();
        es.windows(2).all(|w| w[1] < w[0])
    }

    /// Rate criteria for this table.
    ///
    /// First: at every `t > 0`, the error decreases in `n` and its n-slope is at
    /// most the predicted slope plus slack. Second: at the largest `n` the
    /// t-exponent is at least 1.7, and at the smallest `t > 0` the n-slope is at
    /// most the predicted slope plus slack. Both require every row usable and
    /// every refinement change under 5%.
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let failed = self.rows.iter().filter(|r| !r.status.is_ok()).count();
        out.push(Check::at_most("failed_rows", Some(failed as f64), 0.0));
        let bound = self.proposition.predicted_n_slope(self.s) + SLOPE_SLACK;
        let ns = self.ns();
        let positive: Vec<f64> = self.times().into_iter().filter(|&t| t > 0.0).collect();
        match self.proposition {
            Proposition::First => {
                if ns.len() >= 2 {
                    for &t in &positive {
                        out.push(Check::at_most(format!("n_slope(t={t})"), self.n_slope_at(t), bound));
                        let mono = self.monotone_in_n(t);
                        out.push(Check {
                            name: format!("monotone_in_n(t={t})"),
                            value: if mono { 1.0 } else { 0.0 },
                            threshold: 1.0,
                            passed: mono,
                        });
                    }
                }
            }
            Proposition::Second => {
                if positive.len() >= 2 {
                    if let Some(&n) = ns.last() {
                        out.push(Check::at_least(format!("t_exponent(n={n})"), self.t_exponent_at(n), MIN_T_EXPONENT));
                    }
                }
                if ns.len() >= 2 {
                    if let Some(&t) = positive.first() {
                        out.push(Check::at_most(format!("n_slope(t={t})"), self.n_slope_at(t), bound));
                    }
                }
            }
        }
        if let Some(change) = self.max_refinement_change() {
            out.push(Check::at_most("refinement_change", Some(change), REFINEMENT_TOLERANCE));
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub const CSV_HEADER: &'static str = "n,t,E,normalized_E,status";

    /// Rows, then footer rows in which the label replaces the coordinate the
    /// fit runs over: `fitted_n_slope,<t>,<slope>,,` and
    /// `<n>,fitted_t_exponent,<exponent>,,`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e},{}", r.n, r.t, r.error, r.normalized, r.status.label())?;
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
        if self.ns().len() >= 2 {
            for t in self.times().into_iter().filter(|&t| t > 0.0) {
                writeln!(w, "fitted_n_slope,{t:.16e},{},,", fmt(self.n_slope_at(t)))?;
            }
        }
        if self.times().iter().filter(|&&t| t > 0.0).count() >= 2 {
            for n in self.ns() {
                writeln!(w, "{n},fitted_t_exponent,{},,", fmt(self.t_exponent_at(n)))?;
            }
        }
        Ok(())
    }
}

/// Sorted, deduplicated copy of `times` with the solver horizon set to the last one.
fn solver_for(config: &SolverConfig, s: f64, times: &[f64]) -> Result<(SolverConfig, Vec<f64>)> {
    let mut ts = times.to_vec();
    if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::config("error-table times must be finite and nonnegative"));
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let final_time = *ts.last().ok_or_else(|| Error::config("no sample times given"))?;
    Ok((
        SolverConfig {
            final_time,
            sample_times: ts.clone(),
            monitor_s: s,
            ..config.clone()
        },
        ts,
    ))
}

/// Solves from `(u0, rho0)` and returns the trajectory, or the row status
/// every row of this `n` gets when the solve fails numerically.
fn solve_pair(u0: &SpectralField, rho0: &SpectralField, cfg: &SolverConfig) -> Result<std::result::Result<Trajectory, RowStatus>> {
    let init = State::new(u0.clone(), rho0.clone(), 0.0)?;
    match solve(&init, cfg) {
        Ok(tr) => Ok(Ok(tr)),
        Err(e) if e.is_numerical() => Ok(Err(RowStatus::Failed(e.to_string()))),
        Err(e) => Err(e),
    }
}

struct RawRow {
    t: f64,
    error: f64,
    lower_order: Option<f64>,
    status: RowStatus,
}

fn family_rows(fam: &DataFamily, which: Proposition, cfg: &SolverConfig, ts: &[f64]) -> Result<Vec<RawRow>> {
    let s = fam.s();
    let pairs = make_pairs(fam);
    let (u0, rho0) = match which {
        Proposition::First => (&pairs.u, &pairs.rho),
        Proposition::Second => (&pairs.u_perturbed, &pairs.rho_perturbed),
    };
    let traj = solve_pair(u0, rho0, cfg)?;
    let lower_scale = 2f64.powf((s - 0.5) * fam.n() as f64);
    Ok(ts
        .iter()
        .map(|&t| {
            let state = match &traj {
                Err(status) => return RawRow { t, error: f64::NAN, lower_order: None, status: status.clone() },
                Ok(tr) => match tr.state_at(t) {
                    Some(st) => st,
                    None => {
                        let bt = tr.breaking.map_or(t, |b| b.t);
                        return RawRow { t, error: f64::NAN, lower_order: None, status: RowStatus::Breaking { t: bt } };
                    }
                },
            };
            match which {
                Proposition::First => {
                    let ap = first_approx_from(u0, rho0, t);
                    let v = &state.u - &ap.u;
                    let w = &state.rho - &ap.rho;
                    RawRow {
                        t,
                        error: sobolev_norm(&v, s) + sobolev_norm(&w, s - 1.0),
                        lower_order: Some((sobolev_norm(&v, s - 1.0) + sobolev_norm(&w, s - 2.0)) * lower_scale),
                        status: RowStatus::Ok,
                    }
                }
                Proposition::Second => {
                    let ap = second_approx_from(u0, rho0, t);
                    let v = &(&state.u - &ap.u) - &ap.u_correction.scale(t);
                    let w = &(&state.rho - &ap.rho) - &ap.rho_correction.scale(t);
                    RawRow {
                        t,
                        error: sobolev_norm(&v, s) + sobolev_norm(&w, s - 1.0),
                        lower_order: None,
                        status: RowStatus::Ok,
                    }
                }
            }
        })
        .collect())
}

/// Error table for `which` over `families × times`, one solve per family
/// (run in parallel). With `refine`, every family is solved again with N
/// doubled and dt halved and the relative change of each entry is recorded.
pub fn error_table(
    families: &[DataFamily],
    which: Proposition,
    config: &SolverConfig,
    times: &[f64],
    refine: bool,
) -> Result<ErrorTable> {
    let s = families
        .first()
        .map(|f| f.s())
        .ok_or_else(|| Error::config("no data families given"))?;
    if families.iter().any(|f| f.s() != s) {
        return Err(Error::config("all data families of one table must share s"));
    }
    let (cfg, ts) = solver_for(config, s, times)?;
    let per_family: Vec<Result<Vec<ErrorRow>>> = families
        .par_iter()
        .map(|fam| {
            let base = family_rows(fam, which, &cfg, &ts)?;
            let fine = if refine {
                let fine_cfg = SolverConfig {
                    dt: cfg.dt.map(|dt| dt / 2.0),
                    ..cfg.clone()
                };
                Some(family_rows(&fam.refined(2)?, which, &fine_cfg, &ts)?)
            } else {
                None
            };
            Ok(base
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let refinement_change = fine.as_ref().and_then(|f| {
                        let e = f[i].error;
                        (r.t > 0.0 && r.error > 0.0 && r.status.is_ok()).then(|| {
                            if f[i].status.is_ok() {
                                (e / r.error - 1.0).abs()
                            } else {
                                f64::INFINITY
                            }
                        })
                    });
                    ErrorRow {
                        n: fam.n(),
                        t: r.t,
                        error: r.error,
                        normalized: if r.t == 0.0 && r.error == 0.0 {
                            0.0
                        } else {
                            r.error / which.prediction(s, fam.n(), r.t)
                        },
                        lower_order: r.lower_order,
                        refinement_change,
                        status: r.status,
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_family {
        rows.extend(r?);
    }
    Ok(ErrorTable {
        proposition: which,
        s,
        rows,
    })
}

pub fn prop1_error(families: &[DataFamily], config: &SolverConfig, times: &[f64], refine: bool) -> Result<ErrorTable> {
    error_table(families, Proposition::First, config, times, refine)
}

pub fn prop2_error(families: &[DataFamily], config: &SolverConfig, times: &[f64], refine: bool) -> Result<ErrorTable> {
    error_table(families, Proposition::Second, config, times, refine)
}
