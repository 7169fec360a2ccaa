//! Dealiased RK4 pseudospectral solver for the nonlocal system
//!
//! ```text
//! u_t = -u u_x - ∂ₓΛ⁻²ϱ - ∂ₓΛ⁻²(u² + ½u_x² + ½ϱ²)
//! ϱ_t = -∂ₓ(u + uϱ)
//! ```

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{make_grid, PeriodicGrid};
use crate::multiplier::{derivative, grad_helmholtz_inv};
use crate::norms::sobolev_norm;

pub const DEFAULT_DT_FACTOR: f64 = 0.5;
pub const DEFAULT_CFL_SAFETY: f64 = 0.9;
pub const DEFAULT_BREAKING_THRESHOLD: f64 = 1e3;
pub const DEALIAS_FRACTION: f64 = 2.0 / 3.0;
pub const DEFAULT_FINAL_TIME: f64 = 0.3;
pub const DEFAULT_SAMPLE_TIMES: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct State {
    pub u: SpectralField,
    pub rho: SpectralField,
    pub t: f64,
}

impl State {
    pub fn new(u: SpectralField, rho: SpectralField, t: f64) -> Result<Self> {
        u.same_grid(&rho)?;
        Ok(Self { u, rho, t })
    }

    pub fn rest(grid: Arc<PeriodicGrid>) -> Self {
        Self {
            u: SpectralField::zeros(grid.clone()),
            rho: SpectralField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        self.u.grid()
    }

    pub fn monitors(&self, s: f64) -> Monitors {
        let ux = derivative(&self.u);
        Monitors {
            t: self.t,
            hs_u: sobolev_norm(&self.u, s),
            hsm1_rho: sobolev_norm(&self.rho, s - 1.0),
            energy: energy(&self.u, &self.rho),
            mass: self.rho.integral(),
            min_ux: ux.samples().iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

/// `½∫(u² + u_x² + ϱ²)`, evaluated spectrally.
pub fn energy(u: &SpectralField, rho: &SpectralField) -> f64 {
    0.5 * (sobolev_norm(u, 1.0).powi(2) + sobolev_norm(rho, 0.0).powi(2))
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    /// Step size; `None` means `0.5·dx`. Always positive, the direction of
    /// integration comes from the sign of `final_time - t₀`.
    pub dt: Option<f64>,
    pub final_time: f64,
    pub sample_times: Vec<f64>,
    pub cfl_safety: f64,
    pub dealias_fraction: f64,
    pub breaking_threshold: f64,
    /// Regularity used for the `Hs_u`, `Hsm1_rho` monitors.
    pub monitor_s: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            final_time: DEFAULT_FINAL_TIME,
            sample_times: DEFAULT_SAMPLE_TIMES.to_vec(),
            cfl_safety: DEFAULT_CFL_SAFETY,
            dealias_fraction: DEALIAS_FRACTION,
            breaking_threshold: DEFAULT_BREAKING_THRESHOLD,
            monitor_s: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn with_times(final_time: f64, sample_times: Vec<f64>) -> Self {
        Self {
            final_time,
            sample_times,
            ..Self::default()
        }
    }

    pub fn step_size(&self, grid: &PeriodicGrid) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT_FACTOR * grid.dx())
    }

    fn validate(&self, t0: f64) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!("dt must be positive and finite, got {dt}")));
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if (self.dealias_fraction - DEALIAS_FRACTION).abs() > 1e-12 {
            return Err(Error::config("only the 2/3 dealiasing rule is supported"));
        }
        if !(self.breaking_threshold > 0.0) {
            return Err(Error::config("breaking threshold must be positive"));
        }
        if !self.final_time.is_finite() {
            return Err(Error::config("final time must be finite"));
        }
        let dir = (self.final_time - t0).signum();
        let mut prev = t0;
        for &ts in &self.sample_times {
            let ahead = (ts - prev) * dir;
            let within = (self.final_time - ts) * dir;
            if !(ahead >= 0.0 && within >= -1e-12) {
                return Err(Error::config(format!(
                    "sample times must be sorted and lie between {t0} and {}; offending value {ts}",
                    self.final_time
                )));
            }
            prev = ts;
        }
        Ok(())
    }
}

/// Quantities recorded at every sample time.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Monitors {
    pub t: f64,
    pub hs_u: f64,
    pub hsm1_rho: f64,
    pub energy: f64,
    pub mass: f64,
    pub min_ux: f64,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct BreakingEvent {
    pub t: f64,
    pub min_ux: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub initial: Monitors,
    /// States at the sample times reached, in order.
    pub states: Vec<State>,
    pub monitors: Vec<Monitors>,
    /// Set when the slope guard stopped the run early.
    pub breaking: Option<BreakingEvent>,
    pub steps: usize,
    /// `‖ϱ₀‖_{L¹}`, the scale for relative mass drift (the experiment data have zero mean).
    pub mass_scale: f64,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> Option<&State> {
        self.states.iter().find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn completed(&self) -> bool {
        self.breaking.is_none()
    }

    /// Largest `|E(t) - E(0)| / E(0)` over the samples.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.initial.energy;
        let scale = if e0 > 0.0 { e0 } else { 1.0 };
        self.monitors
            .iter()
            .map(|m| (m.energy - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Largest `|M(t) - M(0)| / max(|M(0)|, ‖ϱ₀‖_{L¹})` over the samples.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.initial.mass;
        let scale = m0.abs().max(self.mass_scale);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        self.monitors
            .iter()
            .map(|m| (m.mass - m0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// `sup_t (‖u‖_{H^s} + ‖ϱ‖_{H^{s-1}})` over its initial value.
    pub fn growth_factor(&self) -> f64 {
        let init = self.initial.hs_u + self.initial.hsm1_rho;
        if init == 0.0 {
            return 1.0;
        }
        self.monitors
            .iter()
            .map(|m| (m.hs_u + m.hsm1_rho) / init)
            .fold(1.0, f64::max)
    }

    pub const MONITOR_HEADER: &'static str = "t,Hs_u,Hsm1_rho,E,M,min_ux";

    pub fn write_monitors_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", Self::MONITOR_HEADER)?;
        for m in std::iter::once(&self.initial).chain(&self.monitors) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                m.t, m.hs_u, m.hsm1_rho, m.energy, m.mass, m.min_ux
            )?;
        }
        Ok(())
    }
}

/// Right-hand side via the field API: every product is formed in physical
/// space and truncated by the 2/3 rule before any multiplier acts on it.
pub fn rhs(state: &State) -> Result<(SpectralField, SpectralField)> {
    let (u, rho) = (&state.u, &state.rho);
    u.same_grid(rho)?;
    let ux = derivative(u);
    let advection = u.dealiased_mul(&ux)?;
    let quadratic = (&(&u.pointwise_mul(u)? + &ux.pointwise_mul(&ux)?.scale(0.5))
        + &rho.pointwise_mul(rho)?.scale(0.5))
        .dealiased();
    let du = &(-&advection) - &grad_helmholtz_inv(&(rho + &quadratic));
    let flux = u + &u.dealiased_mul(rho)?;
    let drho = -&derivative(&flux);
    if !(du.is_finite() && drho.is_finite()) {
        return Err(Error::NonFinite { t: state.t });
    }
    Ok((du, drho))
}

/// Per-stage diagnostics gathered while evaluating the right-hand side.
#[derive(Clone, Copy, Debug)]
struct StageInfo {
    max_u: f64,
    min_ux: f64,
}

/// Right-hand side on raw (unnormalized DFT) coefficients, four FFTs per
/// evaluation: `u + i u_x` and `ϱ` go back in one and one inverse transform,
/// `u u_x + i(u² + ½u_x² + ½ϱ²)` and `uϱ` come forward the same way.
pub struct Engine {
    grid: Arc<PeriodicGrid>,
    /// `ξ_k`, with the Nyquist entry zeroed so odd symbols stay Hermitian.
    xi: Vec<f64>,
    helmholtz: Vec<f64>,
    kept: Vec<bool>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Engine {
    pub fn new(grid: Arc<PeriodicGrid>) -> Self {
        let n = grid.size();
        let mut xi = grid.frequencies();
        xi[n / 2] = 0.0;
        let helmholtz = xi.iter().map(|&x| x / (1.0 + x * x)).collect();
        let kept = (0..n).map(|i| grid.is_dealias_kept(i)).collect();
        let scratch = grid.scratch();
        Self {
            grid,
            xi,
            helmholtz,
            kept,
            a: vec![ZERO; n],
            b: vec![ZERO; n],
            scratch,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    fn to_raw(&mut self, f: &SpectralField) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.grid.fft_forward().process_with_scratch(&mut buf, &mut self.scratch);
        crate::field::symmetrize(&mut buf);
        buf
    }

    fn to_field(&mut self, raw: &[Complex64]) -> SpectralField {
        let mut buf = raw.to_vec();
        self.grid.fft_inverse().process_with_scratch(&mut buf, &mut self.scratch);
        let inv = 1.0 / self.grid.size() as f64;
        SpectralField::from_samples(self.grid.clone(), buf.iter().map(|c| c.re * inv).collect())
    }

    fn dealias(&self, raw: &mut [Complex64]) {
        for (c, &k) in raw.iter_mut().zip(&self.kept) {
            if !k {
                *c = ZERO;
            }
        }
    }

    fn eval(&mut self, u: &[Complex64], r: &[Complex64], du: &mut [Complex64], dr: &mut [Complex64]) -> StageInfo {
        let n = self.grid.size();
        let inv = 1.0 / n as f64;
        for k in 0..n {
            // U + i·(iξU) = (1 - ξ)U
            self.a[k] = u[k] * (1.0 - self.xi[k]);
            self.b[k] = r[k];
        }
        let inverse = self.grid.fft_inverse().clone();
        inverse.process_with_scratch(&mut self.a, &mut self.scratch);
        inverse.process_with_scratch(&mut self.b, &mut self.scratch);
        let mut info = StageInfo {
            max_u: 0.0,
            min_ux: f64::INFINITY,
        };
        for k in 0..n {
            let uu = self.a[k].re * inv;
            let ux = self.a[k].im * inv;
            let rho = self.b[k].re * inv;
            info.max_u = info.max_u.max(uu.abs());
            info.min_ux = info.min_ux.min(ux);
            self.a[k] = Complex64::new(uu * ux, uu * uu + 0.5 * ux * ux + 0.5 * rho * rho);
            self.b[k] = Complex64::new(uu * rho, 0.0);
        }
        let forward = self.grid.fft_forward().clone();
        forward.process_with_scratch(&mut self.a, &mut self.scratch);
        forward.process_with_scratch(&mut self.b, &mut self.scratch);
        for k in 0..n {
            let (lin_u, lin_r) = (-r[k] * Complex64::new(0.0, self.helmholtz[k]), -u[k] * Complex64::new(0.0, self.xi[k]));
            if !self.kept[k] {
                du[k] = lin_u;
                dr[k] = lin_r;
                continue;
            }
            let m = (n - k) % n;
            let (z, zm) = (self.a[k], self.a[m].conj());
            let adv = (z + zm) * 0.5;
            let quad = (z - zm) * Complex64::new(0.0, -0.5);
            let flux = (self.b[k] + self.b[m].conj()) * 0.5;
            du[k] = lin_u - adv - quad * Complex64::new(0.0, self.helmholtz[k]);
            dr[k] = lin_r - flux * Complex64::new(0.0, self.xi[k]);
        }
        info
    }

    /// Right-hand side of `state`, as fields.
    pub fn rhs(&mut self, state: &State) -> Result<(SpectralField, SpectralField)> {
        state.u.same_grid(&state.rho)?;
        let u = self.to_raw(&state.u);
        let r = self.to_raw(&state.rho);
        let n = u.len();
        let (mut du, mut dr) = (vec![ZERO; n], vec![ZERO; n]);
        self.eval(&u, &r, &mut du, &mut dr);
        let (du, dr) = (self.to_field(&du), self.to_field(&dr));
        if !(du.is_finite() && dr.is_finite()) {
            return Err(Error::NonFinite { t: state.t });
        }
        Ok((du, dr))
    }

    /// Classical RK4 on raw coefficients. Returns the stage-one diagnostics,
    /// i.e. those of the state before the step.
    fn step(&mut self, u: &mut [Complex64], r: &mut [Complex64], h: f64, t: f64, cfl: f64) -> Result<StageInfo> {
        let n = u.len();
        let mut k1u = vec![ZERO; n];
        let mut k1r = vec![ZERO; n];
        let info = self.eval(u, r, &mut k1u, &mut k1r);
        let limit = cfl * self.grid.dx() / (1.0 + info.max_u);
        if !info.max_u.is_finite() || !info.min_ux.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if h.abs() > limit {
            return Err(Error::Cfl { t, dt: h.abs(), limit });
        }
        let mut ku = vec![ZERO; n];
        let mut kr = vec![ZERO; n];
        let mut su: Vec<Complex64> = (0..n).map(|k| u[k] + k1u[k] * (0.5 * h)).collect();
        let mut sr: Vec<Complex64> = (0..n).map(|k| r[k] + k1r[k] * (0.5 * h)).collect();
        // Accumulate k1 + 2k2 + 2k3 + k4 in k1.
        self.eval(&su, &sr, &mut ku, &mut kr);
        for k in 0..n {
            k1u[k] += ku[k] * 2.0;
            k1r[k] += kr[k] * 2.0;
            su[k] = u[k] + ku[k] * (0.5 * h);
            sr[k] = r[k] + kr[k] * (0.5 * h);
        }
        self.eval(&su, &sr, &mut ku, &mut kr);
        for k in 0..n {
            k1u[k] += ku[k] * 2.0;
            k1r[k] += kr[k] * 2.0;
            su[k] = u[k] + ku[k] * h;
            sr[k] = r[k] + kr[k] * h;
        }
        self.eval(&su, &sr, &mut ku, &mut kr);
        let w = h / 6.0;
        let mut finite = true;
        for k in 0..n {
            u[k] += (k1u[k] + ku[k]) * w;
            r[k] += (k1r[k] + kr[k]) * w;
            finite &= u[k].is_finite() && r[k].is_finite();
        }
        if !finite {
            return Err(Error::NonFinite { t: t + h });
        }
        Ok(info)
    }
}

/// One RK4 step of size `dt` (which may be negative), with the default CFL safety.
pub fn rk4_step(state: &State, dt: f64) -> Result<State> {
    rk4_step_with(&mut Engine::new(state.grid().clone()), state, dt, DEFAULT_CFL_SAFETY)
}

pub fn rk4_step_with(engine: &mut Engine, state: &State, dt: f64, cfl_safety: f64) -> Result<State> {
    state.u.same_grid(&state.rho)?;
    let mut u = engine.to_raw(&state.u);
    let mut r = engine.to_raw(&state.rho);
    engine.dealias(&mut u);
    engine.dealias(&mut r);
    engine.step(&mut u, &mut r, dt, state.t, cfl_safety)?;
    Ok(State {
        u: engine.to_field(&u),
        rho: engine.to_field(&r),
        t: state.t + dt,
    })
}

/// Integrates from `initial.t` to `config.final_time`, recording the state
/// and monitors at every sample time. Initial data are projected onto the
/// 2/3-rule band first; a sample at the start time returns them unchanged. Each interval between consecutive sample times is
/// split into equal steps no longer than the configured `dt`.
pub fn solve(initial: &State, config: &SolverConfig) -> Result<Trajectory> {
    initial.u.same_grid(&initial.rho)?;
    config.validate(initial.t)?;
    let grid = initial.grid().clone();
    let mut engine = Engine::new(grid.clone());
    let mut u = engine.to_raw(&initial.u);
    let mut r = engine.to_raw(&initial.rho);
    engine.dealias(&mut u);
    engine.dealias(&mut r);
    let s = config.monitor_s;
    let start = State {
        u: engine.to_field(&u),
        rho: engine.to_field(&r),
        t: initial.t,
    };
    let mut traj = Trajectory {
        initial: start.monitors(s),
        states: Vec::new(),
        monitors: Vec::new(),
        breaking: None,
        steps: 0,
        mass_scale: start.rho.samples().iter().map(|v| v.abs()).sum::<f64>() * grid.dx(),
    };
    if traj.initial.min_ux < -config.breaking_threshold {
        traj.breaking = Some(BreakingEvent {
            t: initial.t,
            min_ux: traj.initial.min_ux,
        });
        return Ok(traj);
    }
    let dt = config.step_size(&grid);
    let mut t = initial.t;
    let mut stops: Vec<(f64, bool)> = config.sample_times.iter().map(|&ts| (ts, true)).collect();
    if stops.last().map_or(true, |&(ts, _)| ts != config.final_time) {
        stops.push((config.final_time, false));
    }
    for (target, record) in stops {
        let span = target - t;
        let steps = (span.abs() / dt - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for i in 0..steps {
                let now = t + i as f64 * h;
                let info = engine.step(&mut u, &mut r, h, now, config.cfl_safety)?;
                traj.steps += 1;
                if info.min_ux < -config.breaking_threshold {
                    traj.breaking = Some(BreakingEvent { t: now, min_ux: info.min_ux });
                    return Ok(traj);
                }
            }
        }
        t = target;
        if record {
            let state = if steps == 0 && t == initial.t {
                initial.clone()
            } else {
                State {
                    u: engine.to_field(&u),
                    rho: engine.to_field(&r),
                    t,
                }
            };
            let m = state.monitors(s);
            if m.min_ux < -config.breaking_threshold {
                traj.breaking = Some(BreakingEvent { t, min_ux: m.min_ux });
                return Ok(traj);
            }
            traj.monitors.push(m);
            traj.states.push(state);
        }
    }
    Ok(traj)
}

pub const SNAPSHOT_MAGIC: &str = "TWOCH v1";

/// Writes `"TWOCH v1 N=<N> L=<L> t=<t>\n"` followed by the samples of `u`
/// and then `ϱ`, as little-endian `f64`.
pub fn write_snapshot(mut w: impl Write, state: &State) -> Result<()> {
    let g = state.grid();
    writeln!(w, "{SNAPSHOT_MAGIC} N={} L={} t={}", g.size(), g.half_width(), state.t)?;
    for v in state.u.samples().iter().chain(state.rho.samples()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one record written by [`write_snapshot`].
pub fn read_snapshot(mut r: impl BufRead) -> Result<State> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let bad = || Error::config(format!("malformed snapshot header {header:?}"));
    let rest = header.trim_end().strip_prefix(SNAPSHOT_MAGIC).ok_or_else(bad)?;
    let (mut n, mut l, mut t) = (None, None, None);
    for tok in rest.split_whitespace() {
        let (key, value) = tok.split_once('=').ok_or_else(bad)?;
        match key {
            "N" => n = value.parse::<usize>().ok(),
            "L" => l = value.parse::<f64>().ok(),
            "t" => t = value.parse::<f64>().ok(),
            _ => return Err(bad()),
        }
    }
    let (n, l, t) = (n.ok_or_else(bad)?, l.ok_or_else(bad)?, t.ok_or_else(bad)?);
    let grid = make_grid(l, n)?;
    let read_field = |r: &mut dyn Read| -> Result<SpectralField> {
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes)?;
        let samples = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(SpectralField::from_samples(grid.clone(), samples))
    };
    let u = read_field(&mut r)?;
    let rho = read_field(&mut r)?;
    State::new(u, rho, t)
}
