use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use twoch::experiments::{
    cmd_approx_error, cmd_construct, cmd_evolve, cmd_nonuniform, cmd_selfcheck, exit_code_for,
    load_config, parse_n_list, parse_times, CommandOutcome, ConfigOverrides, Fault, Format,
};

#[derive(Parser, Debug)]
#[command(name = "twoch", version = twoch::VERSION, about = "Spectral experiments for the two-component Camassa-Holm system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the spectral self-check suites.
    Selfcheck {
        /// Deliberately break one component to confirm the suites notice.
        #[arg(long, value_name = "FAULT")]
        inject_fault: Option<Fault>,
    },
    /// Tabulate norms of the initial data and leading products.
    Construct,
    /// Evolve the initial data and record conserved quantities.
    Evolve {
        /// Also write a binary snapshot at every sample time.
        #[arg(long)]
        snapshots: bool,
    },
    /// Error table for the first (1) or second (2) approximate solution.
    ApproxError {
        #[arg(value_parser = clap::value_parser!(u32).range(1..=2))]
        which: u32,
    },
    /// Distance between solutions from two close initial states.
    Nonuniform,
}

#[derive(Args, Debug)]
struct Flags {
    /// Line-oriented `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Sobolev regularity (must exceed 3/2).
    #[arg(long, global = true)]
    s: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Frequency levels, e.g. `4..8` or `4,5,6`.
    #[arg(long, global = true)]
    n_list: Option<String>,
    /// Half-width of the periodic box.
    #[arg(long = "L", global = true)]
    half_width: Option<f64>,
    /// Grid size used for every level instead of automatic sizing.
    #[arg(long = "N", global = true)]
    grid_size: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long = "T", global = true)]
    final_time: Option<f64>,
    /// Sample times, comma separated.
    #[arg(long, global = true)]
    times: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<Format>,
    #[arg(long, global = true, value_name = "K")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip the (2N, dt/2) refinement run in error tables.
    #[arg(long, global = true)]
    no_refine: bool,
}

impl Flags {
    fn overrides(&self) -> twoch::Result<ConfigOverrides> {
        Ok(ConfigOverrides {
            s: self.s,
            lambda: self.lambda,
            n_list: self.n_list.as_deref().map(parse_n_list).transpose()?,
            half_width: self.half_width,
            grid_size: self.grid_size,
            dt: self.dt,
            final_time: self.final_time,
            times: self.times.as_deref().map(parse_times).transpose()?,
            out_dir: self.out.clone(),
            format: self.format,
            workers: self.workers,
            seed: self.seed,
            refine: self.no_refine.then_some(false),
            snapshots: None,
        })
    }
}

fn report(outcome: &CommandOutcome) -> i32 {
    for line in outcome.summary_lines() {
        println!("{line}");
    }
    outcome.exit_code()
}

fn run(cli: Cli) -> twoch::Result<i32> {
    let start = Instant::now();
    let mut overrides = cli.flags.overrides()?;

    if let Command::Selfcheck { inject_fault } = &cli.command {
        // The suites need no experiment configuration beyond the seed.
        let seed = cli.flags.seed.unwrap_or(0);
        let result = cmd_selfcheck(seed, *inject_fault);
        for suite in &result.suites {
            println!("{}", suite.line());
        }
        println!("selfcheck seed {seed}: {:.2}s", start.elapsed().as_secs_f64());
        return Ok(result.exit_code());
    }

    if let Command::Evolve { snapshots: true } = cli.command {
        overrides.snapshots = Some(true);
    }
    let cfg = load_config(cli.flags.config.as_deref(), &overrides)?;
    for line in cfg.header_lines() {
        println!("# {line}");
    }
    let outcome = match cli.command {
        Command::Selfcheck { .. } => unreachable!(),
        Command::Construct => cmd_construct(&cfg)?,
        Command::Evolve { .. } => cmd_evolve(&cfg)?,
        Command::ApproxError { which } => cmd_approx_error(&cfg, which)?,
        Command::Nonuniform => cmd_nonuniform(&cfg)?,
    };
    let code = report(&outcome);
    println!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("twoch: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
