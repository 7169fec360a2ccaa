//! Experiment configuration, the command implementations behind the CLI, and
//! their reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::approximants::{error_table, Check, ErrorTable, Proposition, RowStatus};
use crate::construction::{
    leading_product_rho, leading_product_u, lemma31_report, lemma31_verdict, make_pairs, DataFamily, Lemma31Row,
    DEFAULT_HALF_WIDTH, DEFAULT_LAMBDA, LAMBDA_MAX, LAMBDA_MIN, MIN_N,
};
use crate::error::{Error, Result};
use crate::evolution::{solve, write_snapshot, SolverConfig, State, Trajectory, DEFAULT_FINAL_TIME, DEFAULT_SAMPLE_TIMES};
use crate::fit::n_slope;
use crate::grid::{make_grid, MIN_SIZE};
use crate::norms::sobolev_norm;
use crate::VERSION;

pub mod selfcheck;

pub use selfcheck::{cmd_selfcheck, Fault, SelfcheckReport, SuiteResult};

pub const OUT_ENV: &str = "TWOCH_OUT";
pub const DEFAULT_S: f64 = 2.0;
pub const DEFAULT_N_LIST: [u32; 5] = [4, 5, 6, 7, 8];
/// Lower-bound factor in the positive-time separation clause, standing in for
/// an unquantified `≳ t`.
pub const SEPARATION_FACTOR: f64 = 0.5;
pub const D0_SLOPE: f64 = -1.0;
pub const D0_SLOPE_TOLERANCE: f64 = 0.1;
pub const INITIAL_NORM_BAND: f64 = 2.0;
/// Conservation drift allowed by the `evolve` command.
pub const DRIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Source {
    Default,
    File,
    Flag,
    Env,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
            Source::Env => "env",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("format must be csv or json, got {other:?}"))),
        }
    }
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Values supplied on the command line; `None` leaves the file or default value.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub s: Option<f64>,
    pub lambda: Option<f64>,
    pub n_list: Option<Vec<u32>>,
    pub half_width: Option<f64>,
    pub grid_size: Option<usize>,
    pub dt: Option<f64>,
    pub final_time: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub refine: Option<bool>,
    pub snapshots: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub s: f64,
    pub lambda: f64,
    pub n_list: Vec<u32>,
    pub half_width: f64,
    /// Fixed grid size for every `n`; `None` sizes each grid automatically.
    pub grid_size: Option<usize>,
    pub dt: Option<f64>,
    pub final_time: f64,
    pub times: Vec<f64>,
    pub out_dir: PathBuf,
    pub format: Format,
    pub workers: Option<usize>,
    pub seed: u64,
    pub refine: bool,
    pub snapshots: bool,
    /// Where each key's value came from.
    pub provenance: BTreeMap<String, Source>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let keys = [
            "s", "lambda", "n_list", "L", "N", "dt", "T", "times", "out", "format", "workers", "seed", "refine",
            "snapshots",
        ];
        Self {
            s: DEFAULT_S,
            lambda: DEFAULT_LAMBDA,
            n_list: DEFAULT_N_LIST.to_vec(),
            half_width: DEFAULT_HALF_WIDTH,
            grid_size: None,
            dt: None,
            final_time: DEFAULT_FINAL_TIME,
            times: DEFAULT_SAMPLE_TIMES.to_vec(),
            out_dir: PathBuf::from("."),
            format: Format::Csv,
            workers: None,
            seed: 0,
            refine: true,
            snapshots: false,
            provenance: keys.iter().map(|k| (k.to_string(), Source::Default)).collect(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::config(format!("{key}: expected a nonnegative integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// `"4,5,6"`, `"4 5 6"` or `"4..8"` (inclusive).
pub fn parse_n_list(v: &str) -> Result<Vec<u32>> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once("..") {
        let lo = parse_usize("n_list", a)? as u32;
        let hi = parse_usize("n_list", b.trim_start_matches('='))? as u32;
        if hi < lo {
            return Err(Error::config(format!("n_list: empty range {v:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_usize("n_list", t).map(|n| n as u32))
        .collect()
}

pub fn parse_times(v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64("times", t))
        .collect()
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let canonical = match key {
            "s" => {
                self.s = parse_f64(key, value)?;
                "s"
            }
            "lambda" => {
                self.lambda = parse_f64(key, value)?;
                "lambda"
            }
            "n_list" | "n-list" => {
                self.n_list = parse_n_list(value)?;
                "n_list"
            }
            "L" | "half_width" => {
                self.half_width = parse_f64(key, value)?;
                "L"
            }
            "N" | "grid_size" => {
                self.grid_size = if value.trim() == "auto" { None } else { Some(parse_usize(key, value)?) };
                "N"
            }
            "dt" => {
                self.dt = if value.trim() == "auto" { None } else { Some(parse_f64(key, value)?) };
                "dt"
            }
            "T" | "final_time" => {
                self.final_time = parse_f64(key, value)?;
                "T"
            }
            "times" => {
                self.times = parse_times(value)?;
                "times"
            }
            "out" | "out_dir" => {
                self.out_dir = PathBuf::from(value.trim());
                "out"
            }
            "format" => {
                self.format = value.parse()?;
                "format"
            }
            "workers" => {
                self.workers = Some(parse_usize(key, value)?);
                "workers"
            }
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("seed: expected an integer, got {value:?}")))?;
                "seed"
            }
            "refine" => {
                self.refine = parse_bool(key, value)?;
                "refine"
            }
            "snapshots" => {
                self.snapshots = parse_bool(key, value)?;
                "snapshots"
            }
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        };
        self.provenance.insert(canonical.to_string(), source);
        Ok(())
    }

    fn apply_overrides(&mut self, o: &ConfigOverrides) {
        let mut flagged = Vec::new();
        macro_rules! take {
            ($field:ident, $key:expr, $wrap:expr) => {
                if let Some(v) = &o.$field {
                    self.$field = $wrap(v.clone());
                    flagged.push($key);
                }
            };
        }
        let same = |v| v;
        take!(s, "s", same);
        take!(lambda, "lambda", same);
        take!(n_list, "n_list", |v| v);
        take!(half_width, "L", same);
        take!(grid_size, "N", Some);
        take!(dt, "dt", Some);
        take!(final_time, "T", same);
        take!(times, "times", |v| v);
        take!(out_dir, "out", |v| v);
        take!(format, "format", |v| v);
        take!(workers, "workers", Some);
        take!(seed, "seed", |v| v);
        take!(refine, "refine", |v| v);
        take!(snapshots, "snapshots", |v| v);
        for k in flagged {
            self.provenance.insert(k.to_string(), Source::Flag);
        }
    }

    pub fn source(&self, key: &str) -> Source {
        self.provenance.get(key).copied().unwrap_or(Source::Default)
    }

    /// Reconciles `T` with the sample times when only one of them was given.
    fn settle_times(&mut self) {
        let t_given = self.source("T") != Source::Default;
        let times_given = self.source("times") != Source::Default;
        if times_given && !t_given {
            if let Some(&last) = self.times.iter().max_by(|a, b| a.total_cmp(b)) {
                self.final_time = last;
            }
        } else if t_given && !times_given {
            let t = self.final_time;
            let mut ts: Vec<f64> = DEFAULT_SAMPLE_TIMES.iter().cloned().filter(|&x| x < t).collect();
            ts.push(t);
            self.times = ts;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.5) {
            return Err(Error::config(format!("s = {} violates the requirement s > 3/2", self.s)));
        }
        if !(self.lambda > LAMBDA_MIN && self.lambda < LAMBDA_MAX) {
            return Err(Error::config(format!("lambda = {} must lie in (4/3, 3/2)", self.lambda)));
        }
        if self.n_list.is_empty() {
            return Err(Error::config("n_list is empty"));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < MIN_N) {
            return Err(Error::config(format!("n = {n} is below the minimum level {MIN_N}")));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_list must be strictly increasing"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::config(format!("L = {} must be positive", self.half_width)));
        }
        if let Some(n) = self.grid_size {
            if n < MIN_SIZE || !n.is_power_of_two() {
                return Err(Error::config(format!("N = {n} must be a power of two >= {MIN_SIZE}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!("dt = {dt} must be positive")));
            }
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::config(format!("T = {} must be positive", self.final_time)));
        }
        if self.times.is_empty() {
            return Err(Error::config("no sample times"));
        }
        let mut prev = -1.0;
        for &t in &self.times {
            if !(t >= 0.0 && t <= self.final_time && t > prev) {
                return Err(Error::config(format!(
                    "sample times must increase within [0, T = {}]; offending value {t}",
                    self.final_time
                )));
            }
            prev = t;
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }

    /// Header lines: library version, then every key with its value and source.
    pub fn header_lines(&self) -> Vec<String> {
        let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let entries: Vec<(&str, String)> = vec![
            ("s", self.s.to_string()),
            ("lambda", self.lambda.to_string()),
            ("n_list", self.n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
            ("L", self.half_width.to_string()),
            ("N", self.grid_size.map_or("auto".into(), |n| n.to_string())),
            ("dt", self.dt.map_or("auto (0.5*dx)".into(), |d| d.to_string())),
            ("T", self.final_time.to_string()),
            ("times", fmt_list(&self.times)),
            ("refine", self.refine.to_string()),
        ];
        let mut out = vec![format!("twoch {VERSION}")];
        out.extend(entries.into_iter().map(|(k, v)| format!("{k} = {v} [{}]", self.source(k))));
        out
    }

    /// Grid of `[-L, L)` for level `n`: the fixed size if one was given,
    /// otherwise the smallest admissible power of two.
    pub fn family(&self, n: u32) -> Result<DataFamily> {
        match self.grid_size {
            Some(size) => DataFamily::new(make_grid(self.half_width, size)?, self.s, self.lambda, n),
            None => DataFamily::auto(self.half_width, self.s, self.lambda, n),
        }
    }

    pub fn families(&self) -> Result<Vec<DataFamily>> {
        self.n_list.iter().map(|&n| self.family(n)).collect()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            monitor_s: self.s,
            ..SolverConfig::with_times(self.final_time, self.times.clone())
        }
    }

    fn output_path(&self, stem: &str) -> PathBuf {
        self.out_dir.join(format!("{stem}.{}", self.format.extension()))
    }
}

/// Parses `key = value` lines (`#` starts a comment).
pub fn parse_config_text(text: &str, cfg: &mut ExperimentConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        cfg.set(key.trim(), value.trim(), Source::File)
            .map_err(|e| Error::config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("configuration error: "))))?;
    }
    Ok(())
}

/// Defaults, then the file at `path`, then `TWOCH_OUT` for the output
/// directory if the file did not set one, then command-line overrides.
pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    load_config_with_env(path, overrides, std::env::var(OUT_ENV).ok())
}

pub fn load_config_with_env(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
    env_out: Option<String>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::config(format!("cannot read config file {}: {e}", p.display())))?;
        parse_config_text(&text, &mut cfg)?;
    }
    if let Some(dir) = env_out.filter(|d| !d.is_empty()) {
        if cfg.source("out") == Source::Default {
            cfg.out_dir = PathBuf::from(dir);
            cfg.provenance.insert("out".into(), Source::Env);
        }
    }
    cfg.apply_overrides(overrides);
    cfg.settle_times();
    cfg.validate()?;
    Ok(cfg)
}

/// Result of one command: files written, criteria checked, and whether the
/// numerical scheme failed anywhere.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub numerical_failure: bool,
}

impl CommandOutcome {
    pub fn passed(&self) -> bool {
        !self.numerical_failure && self.checks.iter().all(|c| c.passed)
    }

    /// 0 all criteria met, 1 criteria failed, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        if self.numerical_failure {
            3
        } else if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn summary_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {:.6e} (threshold {:.6e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                )
            })
            .collect();
        if self.numerical_failure {
            out.push("FAIL numerical failure in at least one solve".into());
        }
        out.extend(self.files.iter().map(|f| format!("wrote {}", f.display())));
        out
    }
}

/// 2 for configuration and I/O problems, 3 for failures of the scheme.
pub fn exit_code_for(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::config(format!("cannot start {k} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", dir.display())))?;
    }
    let f = File::create(path).map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_header(w: &mut impl Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    header: &'a [String],
    rows: T,
    checks: &'a [Check],
}

fn write_json<T: Serialize>(path: &Path, header: &[String], rows: T, checks: &[Check]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &JsonDoc { header, rows, checks })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------- construct

pub fn lemma31_checks(rows: &[Lemma31Row]) -> Vec<Check> {
    let v = lemma31_verdict(rows);
    let max_spread = v.column_spread.iter().cloned().fold(0.0, f64::max);
    let min_product = rows
        .iter()
        .map(|r| r.product_u.min(r.product_rho))
        .fold(f64::INFINITY, f64::min);
    vec![
        Check {
            name: "normalized_column_spread".into(),
            value: max_spread,
            threshold: crate::construction::LEMMA31_BAND,
            passed: v.bands_ok,
        },
        Check {
            name: "min_product".into(),
            value: min_product,
            threshold: 0.0,
            passed: v.products_positive,
        },
        Check {
            name: "product_ratio_deviation".into(),
            value: v.product_ratio_deviation,
            threshold: crate::construction::LEMMA31_RATIO_TOL,
            passed: v.ratios_ok,
        },
    ]
}

pub fn write_lemma31_csv(mut w: impl Write, rows: &[Lemma31Row]) -> Result<()> {
    writeln!(w, "{}", Lemma31Row::HEADER)?;
    for r in rows {
        let cols: Vec<String> = std::iter::once(r.lambda_n)
            .chain(r.normalized_columns())
            .map(fmt_float)
            .collect();
        writeln!(w, "{},{}", r.n, cols.join(","))?;
    }
    Ok(())
}

/// Data-family estimate table for every `n` of the config.
pub fn cmd_construct(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let families = cfg.families()?;
    let rows = with_workers(cfg.workers, || lemma31_report(&families))?;
    let checks = lemma31_checks(&rows);
    let path = cfg.output_path("lemma31");
    let header = cfg.header_lines();
    match cfg.format {
        Format::Csv => {
            let mut w = create(&path)?;
            write_header(&mut w, &header)?;
            write_lemma31_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Format::Json => write_json(&path, &header, &rows, &checks)?,
    }
    Ok(CommandOutcome {
        files: vec![path],
        checks,
        numerical_failure: false,
    })
}

// ------------------------------------------------------------- approx-error

pub fn cmd_approx_error(cfg: &ExperimentConfig, which: u32) -> Result<CommandOutcome> {
    let which = Proposition::from_index(which)?;
    let families = cfg.families()?;
    let solver = cfg.solver();
    let table = with_workers(cfg.workers, || error_table(&families, which, &solver, &cfg.times, cfg.refine))??;
    let checks = table.checks();
    let numerical_failure = table.rows.iter().any(|r| !r.status.is_ok());
    let path = cfg.output_path(&format!("approx_error_{}", which.index()));
    let mut header = cfg.header_lines();
    header.push(format!(
        "predicted n-slope {:.6} (+{} slack)",
        which.predicted_n_slope(cfg.s),
        crate::approximants::SLOPE_SLACK
    ));
    match cfg.format {
        Format::Csv => {
            let mut w = create(&path)?;
            write_header(&mut w, &header)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Format::Json => write_json(&path, &header, &table, &checks)?,
    }
    Ok(CommandOutcome {
        files: vec![path],
        checks,
        numerical_failure,
    })
}

/// Shorthand for running one error table from a config without writing files.
pub fn approx_error_table(cfg: &ExperimentConfig, which: u32) -> Result<ErrorTable> {
    let which = Proposition::from_index(which)?;
    let families = cfg.families()?;
    let solver = cfg.solver();
    with_workers(cfg.workers, || error_table(&families, which, &solver, &cfg.times, cfg.refine))?
}

// ----------------------------------------------------------------- evolve

pub fn cmd_evolve(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let families = cfg.families()?;
    let solver = cfg.solver();
    let runs: Vec<Result<(u32, Trajectory)>> = with_workers(cfg.workers, || {
        families
            .par_iter()
            .map(|fam| {
                let p = make_pairs(fam);
                let init = State::new(p.u, p.rho, 0.0)?;
                Ok((fam.n(), solve(&init, &solver)?))
            })
            .collect()
    })?;
    let mut outcome = CommandOutcome::default();
    for run in runs {
        let (n, traj) = run?;
        let path = cfg.out_dir.join(format!("evolve_n{n}.csv"));
        let mut w = create(&path)?;
        let mut header = cfg.header_lines();
        header.push(format!("n = {n}; growth factor sup(|u|_Hs + |rho|_Hs-1)/initial = {:.6e}", traj.growth_factor()));
        if let Some(b) = traj.breaking {
            header.push(format!("stopped: slope guard at t = {}, min u_x = {:.6e}", b.t, b.min_ux));
            outcome.numerical_failure = true;
        }
        write_header(&mut w, &header)?;
        traj.write_monitors_csv(&mut w)?;
        w.flush()?;
        outcome.files.push(path);
        if cfg.snapshots {
            let path = cfg.out_dir.join(format!("evolve_n{n}.snap"));
            let mut w = create(&path)?;
            for st in &traj.states {
                write_snapshot(&mut w, st)?;
            }
            w.flush()?;
            outcome.files.push(path);
        }
        outcome.checks.push(Check {
            name: format!("energy_drift(n={n})"),
            value: traj.energy_drift(),
            threshold: DRIFT_TOLERANCE,
            passed: traj.energy_drift() < DRIFT_TOLERANCE,
        });
        outcome.checks.push(Check {
            name: format!("mass_drift(n={n})"),
            value: traj.mass_drift(),
            threshold: DRIFT_TOLERANCE,
            passed: traj.mass_drift() < DRIFT_TOLERANCE,
        });
    }
    Ok(outcome)
}

// -------------------------------------------------------------- nonuniform

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NonuniformRow {
    pub n: u32,
    pub t: f64,
    /// `‖ũ₀ - u₀‖_{H^s} + ‖ϱ̃₀ - ϱ₀‖_{H^{s-1}}`
    pub d0: f64,
    /// `‖ũ(t) - u(t)‖_{H^s}`
    pub du: f64,
    /// `‖ϱ̃(t) - ϱ(t)‖_{H^{s-1}}`
    pub drho: f64,
    /// `t ‖fₙ ∂ₓu₀‖_{H^s}`
    pub pu: f64,
    /// `t ‖fₙ ∂ₓΛu₀‖_{H^{s-1}}`
    pub prho: f64,
    /// `du / pu`, zero where `pu = 0`.
    pub ratio_u: f64,
    pub ratio_rho: f64,
}

/// `‖u₀‖_{H^s} + ‖ϱ₀‖_{H^{s-1}}` for both initial pairs.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct InitialNorms {
    pub n: u32,
    pub base: f64,
    pub perturbed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub header: Vec<String>,
    pub rows: Vec<NonuniformRow>,
    pub initial_norms: Vec<InitialNorms>,
    /// `(n, message)` for levels whose solves failed.
    pub failures: Vec<(u32, String)>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "n,t,d0,du,drho,pu,prho,ratio_u,ratio_rho";

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write_header(&mut w, &self.header)?;
        for (n, msg) in &self.failures {
            writeln!(w, "# failed n = {n}: {msg}")?;
        }
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            let vals = [r.t, r.d0, r.du, r.drho, r.pu, r.prho, r.ratio_u, r.ratio_rho];
            writeln!(w, "{},{}", r.n, vals.map(fmt_float).join(","))?;
        }
        Ok(())
    }

    fn largest_n(&self) -> Option<u32> {
        self.rows.iter().map(|r| r.n).max()
    }

    pub fn d0_slope(&self) -> Option<f64> {
        let mut pts: Vec<(f64, f64)> = self.rows.iter().filter(|r| r.t == 0.0).map(|r| (r.n as f64, r.d0)).collect();
        pts.dedup();
        let (ns, ds): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        n_slope(&ns, &ds)
    }

    /// Three clauses: vanishing initial distance, bounded initial norms,
    /// and separation at positive times for the largest `n`.
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let ns: Vec<u32> = self.initial_norms.iter().map(|r| r.n).collect();
        if ns.len() >= 2 {
            let slope = self.d0_slope().unwrap_or(f64::NAN);
            out.push(Check {
                name: "d0_slope".into(),
                value: slope,
                threshold: D0_SLOPE,
                passed: (slope - D0_SLOPE).abs() <= D0_SLOPE_TOLERANCE,
            });
        }
        let norms: Vec<f64> = self
            .initial_norms
            .iter()
            .flat_map(|r| [r.base, r.perturbed])
            .collect();
        let (lo, hi) = norms
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        out.push(Check {
            name: "initial_norm_spread".into(),
            value: hi / lo,
            threshold: INITIAL_NORM_BAND,
            passed: hi / lo <= INITIAL_NORM_BAND,
        });
        if let Some(n) = self.largest_n() {
            let mut min_u: f64 = f64::INFINITY;
            let mut min_r: f64 = f64::INFINITY;
            for r in self.rows.iter().filter(|r| r.n == n && r.t > 0.0) {
                out.push(Check {
                    name: format!("du/pu(n={n},t={})", r.t),
                    value: r.ratio_u,
                    threshold: SEPARATION_FACTOR,
                    passed: r.du >= SEPARATION_FACTOR * r.pu,
                });
                out.push(Check {
                    name: format!("drho/prho(n={n},t={})", r.t),
                    value: r.ratio_rho,
                    threshold: SEPARATION_FACTOR,
                    passed: r.drho >= SEPARATION_FACTOR * r.prho,
                });
                min_u = min_u.min(r.du / r.t);
                min_r = min_r.min(r.drho / r.t);
            }
            if min_u.is_finite() {
                out.push(Check {
                    name: format!("min du/t (n={n})"),
                    value: min_u,
                    threshold: 0.0,
                    passed: min_u > 0.0,
                });
                out.push(Check {
                    name: format!("min drho/t (n={n})"),
                    value: min_r,
                    threshold: 0.0,
                    passed: min_r > 0.0,
                });
            }
        }
        out
    }
}

fn ratio(d: f64, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        d / p
    }
}

struct LevelResult {
    rows: Vec<NonuniformRow>,
    norms: InitialNorms,
    failure: Option<String>,
}

fn nonuniform_level(fam: &DataFamily, solver: &SolverConfig, times: &[f64]) -> Result<LevelResult> {
    let s = fam.s();
    let n = fam.n();
    let p = make_pairs(fam);
    let d0 = sobolev_norm(&(&p.u_perturbed - &p.u), s) + sobolev_norm(&(&p.rho_perturbed - &p.rho), s - 1.0);
    let prod_u = sobolev_norm(&leading_product_u(&p.u, &p.f), s);
    let prod_rho = sobolev_norm(&leading_product_rho(&p.u, &p.f), s - 1.0);
    let norms = InitialNorms {
        n,
        base: sobolev_norm(&p.u, s) + sobolev_norm(&p.rho, s - 1.0),
        perturbed: sobolev_norm(&p.u_perturbed, s) + sobolev_norm(&p.rho_perturbed, s - 1.0),
    };
    let run = |u: &crate::field::SpectralField, r: &crate::field::SpectralField| -> Result<std::result::Result<Trajectory, String>> {
        match solve(&State::new(u.clone(), r.clone(), 0.0)?, solver) {
            Ok(tr) => Ok(match tr.breaking {
                Some(b) => Err(RowStatus::Breaking { t: b.t }.label()),
                None => Ok(tr),
            }),
            Err(e) if e.is_numerical() => Ok(Err(e.to_string())),
            Err(e) => Err(e),
        }
    };
    let (base, pert) = rayon::join(|| run(&p.u, &p.rho), || run(&p.u_perturbed, &p.rho_perturbed));
    let (base, pert) = (base?, pert?);
    let (base, pert) = match (base, pert) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            let rows = times
                .iter()
                .map(|&t| NonuniformRow {
                    n,
                    t,
                    d0,
                    du: f64::NAN,
                    drho: f64::NAN,
                    pu: t * prod_u,
                    prho: t * prod_rho,
                    ratio_u: f64::NAN,
                    ratio_rho: f64::NAN,
                })
                .collect();
            return Ok(LevelResult { rows, norms, failure: Some(e) });
        }
    };
    let rows = times
        .iter()
        .map(|&t| {
            let a = base.state_at(t).expect("sampled");
            let b = pert.state_at(t).expect("sampled");
            let du = sobolev_norm(&(&b.u - &a.u), s);
            let drho = sobolev_norm(&(&b.rho - &a.rho), s - 1.0);
            let (pu, prho) = (t * prod_u, t * prod_rho);
            NonuniformRow {
                n,
                t,
                d0,
                du,
                drho,
                pu,
                prho,
                ratio_u: ratio(du, pu),
                ratio_rho: ratio(drho, prho),
            }
        })
        .collect();
    Ok(LevelResult { rows, norms, failure: None })
}

/// Solves both initial pairs for every `n` and tabulates their separation.
/// A `t = 0` row is always included.
pub fn nonuniform_report(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let families = cfg.families()?;
    let mut times = cfg.times.clone();
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    let solver = SolverConfig {
        sample_times: times.clone(),
        ..cfg.solver()
    };
    let levels: Vec<Result<LevelResult>> = with_workers(cfg.workers, || {
        families
            .par_iter()
            .map(|fam| nonuniform_level(fam, &solver, &times))
            .collect()
    })?;
    let mut header = cfg.header_lines();
    header.push(format!(
        "separation clause: d >= {SEPARATION_FACTOR} * t * |leading product| at the largest n"
    ));
    let mut report = ExperimentReport {
        header,
        rows: Vec::new(),
        initial_norms: Vec::new(),
        failures: Vec::new(),
    };
    for level in levels {
        let level = level?;
        if let Some(msg) = level.failure {
            report.failures.push((level.norms.n, msg));
        }
        report.rows.extend(level.rows);
        report.initial_norms.push(level.norms);
    }
    Ok(report)
}

pub fn cmd_nonuniform(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let report = nonuniform_report(cfg)?;
    let checks = report.checks();
    let path = cfg.output_path("nonuniform");
    match cfg.format {
        Format::Csv => {
            let mut w = create(&path)?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        Format::Json => write_json(&path, &report.header, (&report.rows, &report.initial_norms), &checks)?,
    }
    Ok(CommandOutcome {
        files: vec![path],
        checks,
        numerical_failure: !report.failures.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, o: &ConfigOverrides) -> Result<ExperimentConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        std::fs::write(&p, text).unwrap();
        load_config_with_env(Some(&p), o, None)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = load("", &ConfigOverrides::default()).unwrap();
        assert_eq!(c.s, 2.0);
        assert_eq!(c.lambda, 1.4);
        assert_eq!(c.n_list, vec![4, 5, 6, 7, 8]);
        assert_eq!(c.final_time, 0.3);
        assert_eq!(c.times, vec![0.05, 0.1, 0.2, 0.3]);
        assert!(c.provenance.values().all(|&s| s == Source::Default));
    }

    #[test]
    fn file_then_flags() {
        let text = "# comment\ns = 2.5\nn_list = 4..6\ntimes = 0.1, 0.2  # trailing\nformat = json\n";
        let o = ConfigOverrides {
            s: Some(1.8),
            ..Default::default()
        };
        let c = load(text, &o).unwrap();
        assert_eq!(c.s, 1.8);
        assert_eq!(c.source("s"), Source::Flag);
        assert_eq!(c.n_list, vec![4, 5, 6]);
        assert_eq!(c.source("n_list"), Source::File);
        assert_eq!(c.times, vec![0.1, 0.2]);
        assert_eq!(c.final_time, 0.2);
        assert_eq!(c.format, Format::Json);
        assert!(c.header_lines().iter().any(|l| l == "s = 1.8 [flag]"));
    }

    #[test]
    fn regularity_boundary() {
        let ok = ConfigOverrides { s: Some(1.51), ..Default::default() };
        assert!(load_config_with_env(None, &ok, None).is_ok());
        let bad = ConfigOverrides { s: Some(1.5), ..Default::default() };
        let err = load_config_with_env(None, &bad, None).unwrap_err();
        assert!(err.to_string().contains("s > 3/2"), "{err}");
        assert_eq!(exit_code_for(&err), 2);
    }

    #[test]
    fn lambda_and_malformed_lines() {
        let bad = ConfigOverrides { lambda: Some(1.5), ..Default::default() };
        assert!(load_config_with_env(None, &bad, None).unwrap_err().to_string().contains("(4/3, 3/2)"));
        let err = load("s 2\n", &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(load("colour = red\n", &ConfigOverrides::default()).is_err());
        assert!(load("N = 1000\n", &ConfigOverrides::default()).is_err());
        assert!(load("times = 0.2, 0.1\n", &ConfigOverrides::default()).is_err());
    }

    #[test]
    fn output_directory_precedence() {
        let c = load_config_with_env(None, &ConfigOverrides::default(), Some("/tmp/envdir".into())).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("/tmp/envdir"));
        assert_eq!(c.source("out"), Source::Env);
        let o = ConfigOverrides { out_dir: Some("flagdir".into()), ..Default::default() };
        let c = load_config_with_env(None, &o, Some("/tmp/envdir".into())).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("flagdir"));
    }

    #[test]
    fn final_time_alone_fixes_times() {
        let o = ConfigOverrides { final_time: Some(0.15), ..Default::default() };
        let c = load_config_with_env(None, &o, None).unwrap();
        assert_eq!(c.times, vec![0.05, 0.1, 0.15]);
    }

    #[test]
    fn n_list_syntax() {
        assert_eq!(parse_n_list("4,5, 7").unwrap(), vec![4, 5, 7]);
        assert_eq!(parse_n_list("4..=6").unwrap(), vec![4, 5, 6]);
        assert!(parse_n_list("6..4").is_err());
        assert!(parse_n_list("four").is_err());
    }

    #[test]
    fn too_small_grid_is_a_config_error() {
        let o = ConfigOverrides { grid_size: Some(1024), n_list: Some(vec![4]), ..Default::default() };
        let c = load_config_with_env(None, &o, None).unwrap();
        let err = c.families().unwrap_err();
        assert!(err.to_string().contains("use N >= 8192"), "{err}");
    }

    #[test]
    fn outcome_exit_codes() {
        let mut o = CommandOutcome::default();
        assert_eq!(o.exit_code(), 0);
        o.checks.push(Check { name: "x".into(), value: 1.0, threshold: 0.0, passed: false });
        assert_eq!(o.exit_code(), 1);
        o.numerical_failure = true;
        assert_eq!(o.exit_code(), 3);
        assert_eq!(exit_code_for(&Error::NonFinite { t: 0.1 }), 3);
    }

    #[test]
    fn single_level_nonuniform() {
        let dir = tempfile::tempdir().unwrap();
        let o = ConfigOverrides {
            n_list: Some(vec![4]),
            final_time: Some(0.1),
            out_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let c = load_config_with_env(None, &o, None).unwrap();
        let report = nonuniform_report(&c).unwrap();
        assert_eq!(report.rows.len(), 3);
        let r0 = &report.rows[0];
        assert_eq!(r0.t, 0.0);
        assert_eq!((r0.pu, r0.ratio_u), (0.0, 0.0));
        let fam = c.family(4).unwrap();
        let f = crate::construction::make_f(&fam);
        assert!((r0.du / sobolev_norm(&f, 2.0) - 1.0).abs() < 1e-10);
        for r in &report.rows {
            for v in [r.d0, r.du, r.drho, r.pu, r.prho, r.ratio_u, r.ratio_rho] {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
        let out = cmd_nonuniform(&c).unwrap();
        let text = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(text.starts_with("# twoch "));
        assert!(text.lines().any(|l| l == ExperimentReport::CSV_HEADER));
    }
}
