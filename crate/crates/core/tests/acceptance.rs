//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any of them fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use twoch::approximants::Check;
use twoch::evolution::{solve, SolverConfig, State};
use twoch::experiments::{
    approx_error_table, cmd_approx_error, cmd_construct, cmd_nonuniform, cmd_selfcheck, load_config_with_env,
    ConfigOverrides, ExperimentConfig,
};
use twoch::norms::sobolev_norm;
use twoch::{make_grid, PeriodicGrid, SpectralField};

struct Criterion {
    label: &'static str,
    passed: bool,
    detail: String,
}

fn config(out: &std::path::Path, ov: ConfigOverrides) -> ExperimentConfig {
    let ov = ConfigOverrides { out_dir: Some(out.to_path_buf()), ..ov };
    load_config_with_env(None, &ov, None).expect("valid configuration")
}

fn describe(checks: &[Check]) -> (bool, String) {
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}={:.4e} vs {:.4e}", c.name, c.value, c.threshold))
        .collect();
    let shown: Vec<String> = checks
        .iter()
        .filter(|c| c.name != "failed_rows")
        .take(4)
        .map(|c| format!("{}={:.4}", c.name, c.value))
        .collect();
    if failing.is_empty() {
        (true, shown.join(", "))
    } else {
        (false, failing.join(", "))
    }
}

fn timed(limit: Option<Duration>, start: Instant, ok: bool, detail: String) -> (bool, String) {
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let mut detail = format!("{detail}; {:.1}s", took.as_secs_f64());
    if !in_time {
        detail.push_str(&format!(" exceeds {:.0}s", limit.unwrap().as_secs_f64()));
    }
    (ok && in_time, detail)
}

fn selfcheck() -> (bool, String) {
    let start = Instant::now();
    let report = cmd_selfcheck(0, None);
    let failed: Vec<&str> = report.failures().iter().map(|s| s.name).collect();
    let detail = if failed.is_empty() {
        format!("{} suites", report.suites.len())
    } else {
        format!("failing suites: {}", failed.join(", "))
    };
    timed(Some(Duration::from_secs(30)), start, report.passed(), detail)
}

fn construction_table(out: &std::path::Path) -> (bool, String) {
    let start = Instant::now();
    let cfg = config(out, ConfigOverrides { s: Some(2.0), n_list: Some((4..=8).collect()), ..Default::default() });
    let outcome = cmd_construct(&cfg).expect("construct runs");
    let (ok, detail) = describe(&outcome.checks);
    timed(Some(Duration::from_secs(60)), start, ok, detail)
}

fn first_rate(out: &std::path::Path) -> (bool, String) {
    let start = Instant::now();
    let cfg = config(
        out,
        ConfigOverrides {
            n_list: Some((4..=7).collect()),
            times: Some(vec![0.2]),
            refine: Some(true),
            ..Default::default()
        },
    );
    let outcome = cmd_approx_error(&cfg, 1).expect("first approximation table");
    let refined = outcome.checks.iter().any(|c| c.name == "refinement_change");
    let (ok, detail) = describe(&outcome.checks);
    timed(None, start, ok && refined && !outcome.numerical_failure, detail)
}

fn second_rates(out: &std::path::Path) -> (bool, String) {
    let start = Instant::now();
    let cfg = config(
        out,
        ConfigOverrides {
            n_list: Some((4..=8).collect()),
            times: Some(vec![0.05, 0.1, 0.2, 0.4]),
            refine: Some(false),
            ..Default::default()
        },
    );
    let table = approx_error_table(&cfg, 2).expect("second approximation table");
    let (ok, detail) = describe(&table.checks());
    timed(None, start, ok, detail)
}

fn nonuniform(out: &std::path::Path) -> (bool, String, Vec<u8>) {
    let start = Instant::now();
    let cfg = config(out, ConfigOverrides { final_time: Some(0.3), ..Default::default() });
    let outcome = cmd_nonuniform(&cfg).expect("nonuniform runs");
    let (ok, detail) = describe(&outcome.checks);
    let bytes = std::fs::read(out.join("nonuniform.csv")).expect("report written");
    let (ok, detail) = timed(Some(Duration::from_secs(900)), start, ok && !outcome.numerical_failure, detail);
    (ok, detail, bytes)
}

fn smooth_state(grid: &Arc<PeriodicGrid>) -> State {
    let u = SpectralField::from_fn(grid.clone(), |x| 0.3 * x.sin() + 0.1 * (2.0 * x).cos());
    let rho = SpectralField::from_fn(grid.clone(), |x| 1.0 + 0.2 * x.cos());
    State::new(u, rho, 0.0).unwrap()
}

fn run_to(initial: &State, dt: f64, t: f64) -> State {
    let cfg = SolverConfig { dt: Some(dt), ..SolverConfig::with_times(t, vec![t]) };
    let traj = solve(initial, &cfg).expect("smooth run");
    assert!(traj.completed());
    traj.states[0].clone()
}

/// `f` placed on a finer grid of the same box by copying shared wavenumbers.
fn pad(f: &SpectralField, fine: &Arc<PeriodicGrid>) -> SpectralField {
    let coarse = f.grid();
    let mut c = vec![Complex64::new(0.0, 0.0); fine.size()];
    let ny = coarse.size() as i64 / 2;
    for (i, v) in f.coefficients().iter().enumerate() {
        let k = coarse.wavenumber(i);
        if k.abs() < ny {
            c[fine.index_of(k)] = *v;
        }
    }
    SpectralField::from_coefficients(fine.clone(), c)
}

fn solver_gates(out: &std::path::Path) -> (bool, String) {
    let start = Instant::now();
    let s = 2.0;

    // Temporal order against a fine-step reference.
    let g = make_grid(PI, 64).unwrap();
    let init = smooth_state(&g);
    let t = 0.5;
    let reference = run_to(&init, 0.05 / 64.0, t);
    let err = |dt: f64| {
        let st = run_to(&init, dt, t);
        sobolev_norm(&st.u.axpby(1.0, &reference.u, -1.0), s)
            + sobolev_norm(&st.rho.axpby(1.0, &reference.rho, -1.0), s - 1.0)
    };
    let errs: Vec<f64> = [0.05, 0.025, 0.0125].iter().map(|&dt| err(dt)).collect();
    let order = errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);

    // Self-convergence under N-doubling, same step.
    let coarse = make_grid(PI, 128).unwrap();
    let fine = make_grid(PI, 256).unwrap();
    let coarse_end = run_to(&smooth_state(&coarse), 0.01, t);
    let fine_end = run_to(&smooth_state(&fine), 0.01, t);
    let spatial = sobolev_norm(&pad(&coarse_end.u, &fine).axpby(1.0, &fine_end.u, -1.0), s)
        + sobolev_norm(&pad(&coarse_end.rho, &fine).axpby(1.0, &fine_end.rho, -1.0), s - 1.0);

    // Conservation, on the smooth data and on the lowest-level experiment data.
    let cons_cfg = SolverConfig { dt: Some(0.01), ..SolverConfig::with_times(0.5, vec![0.1, 0.2, 0.3, 0.4, 0.5]) };
    let smooth_traj = solve(&init, &cons_cfg).unwrap();
    let exp_cfg = config(out, ConfigOverrides { n_list: Some(vec![4]), ..Default::default() });
    let fam = exp_cfg.family(4).unwrap();
    let pairs = twoch::construction::make_pairs(&fam);
    let exp_init = State::new(pairs.u, pairs.rho, 0.0).unwrap();
    let exp_traj = solve(&exp_init, &SolverConfig { dt: None, ..SolverConfig::with_times(0.5, vec![0.25, 0.5]) })
        .unwrap();
    let drift = [
        smooth_traj.energy_drift(),
        smooth_traj.mass_drift(),
        exp_traj.energy_drift(),
        exp_traj.mass_drift(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let ok = order >= 3.5 && spatial < 1e-8 && drift < 1e-6;
    let detail = format!("order={order:.3}, N-doubling change={spatial:.3e}, drift={drift:.3e}");
    timed(None, start, ok, detail)
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("scratch directory");
    let sub = |name: &str| {
        let p = dir.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let mut results = Vec::new();
    let mut record = |label, (passed, detail): (bool, String)| {
        let line = format!("{} {label}: {detail}", if passed { "PASS" } else { "FAIL" });
        println!("{line}");
        results.push(Criterion { label, passed, detail });
    };

    record("1 selfcheck", selfcheck());
    record("2 construction table", construction_table(&sub("construct")));
    record("3 first approximation rate", first_rate(&sub("approx1")));
    record("4 second approximation rates", second_rates(&sub("approx2")));
    let (ok, detail, first_csv) = nonuniform(&sub("nonuniform_a"));
    record("5 nonuniform dependence", (ok, detail));
    record("6 solver quality", solver_gates(&sub("solver")));
    let (_, _, second_csv) = nonuniform(&sub("nonuniform_b"));
    let same = first_csv == second_csv;
    record("7 determinism", (same, format!("{} bytes, identical={same}", first_csv.len())));

    let failed: Vec<&Criterion> = results.iter().filter(|c| !c.passed).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    for c in &failed {
        eprintln!("failed: {} ({})", c.label, c.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
