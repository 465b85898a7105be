use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use irrepsim_core::oracle::{comparison_integrator, comparison_times, verification_suite};
use irrepsim_core::scenarios::{
    fit_summary, fit_sweep, read_sweep_points, run_scenario, OutputConfig, Process, Scenario,
    ScenarioConfig, Summary, SweepRun,
};
use irrepsim_core::IntegratorConfig;

/// Simulate permutation-symmetric spin ensembles under collective and local decoherence.
#[derive(Parser, Debug)]
#[command(name = "irrepsim", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Directory for CSV tables and summaries (overrides the config).
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long, short = 'j', global = true)]
    threads: Option<usize>,
    /// Relative integrator tolerance (overrides the config).
    #[arg(long, global = true)]
    rtol: Option<f64>,
    /// Absolute integrator tolerance (overrides the config).
    #[arg(long, global = true)]
    atol: Option<f64>,
}

impl Global {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(dir) = &self.output_dir {
            cfg.output.dir = dir.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        self.apply_tolerances(&mut cfg.integrator);
    }

    fn apply_tolerances(&self, cfg: &mut IntegratorConfig) {
        if let Some(r) = self.rtol {
            cfg.rtol = r;
        }
        if let Some(a) = self.atol {
            cfg.atol = a;
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario described by a TOML file.
    Run { config: PathBuf },
    /// Sweep N at fixed target polarizations and fit the scaling exponents.
    Sweep(SweepArgs),
    /// Refit a table written by `sweep`.
    Fit {
        table: PathBuf,
        /// Leave out points with smaller N.
        #[arg(long, default_value_t = 0)]
        min_n: usize,
    },
    /// Compare block-space and full 2^N trajectories for small N.
    Verify {
        /// Largest N checked (at most 8).
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        /// Absolute agreement required on every observable.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    process: ProcessArg,
    /// Comma-separated target polarizations.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<f64>,
    /// Explicit comma-separated N values; otherwise multiples of `n_step` up to `n_max`.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    n_step: usize,
    #[arg(long, default_value_t = 120)]
    n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Leave out points with smaller N from the fits.
    #[arg(long, default_value_t = 0)]
    min_n: usize,
    /// File-name stem for outputs.
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProcessArg {
    Pumping,
    Depolarizing,
}

impl From<ProcessArg> for Process {
    fn from(p: ProcessArg) -> Self {
        match p {
            ProcessArg::Pumping => Process::Pumping,
            ProcessArg::Depolarizing => Process::Depolarizing,
        }
    }
}

fn print_summary(summary: &Summary) {
    print!("{}", summary.to_text());
}

fn run_config(mut cfg: ScenarioConfig, global: &Global) -> Result<()> {
    global.apply(&mut cfg);
    let outcome = run_scenario(&cfg)?;
    print_summary(&outcome.summary);
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let global = &cli.global;
    match cli.command {
        Command::Run { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            run_config(cfg, global)?;
        }
        Command::Sweep(args) => {
            let mut cfg = ScenarioConfig {
                seed: 0,
                threads: None,
                scenario: Scenario::Sweep(SweepRun {
                    process: args.process.into(),
                    ns: args.ns,
                    n_step: args.n_step,
                    n_max: args.n_max,
                    targets: args.targets,
                    rate: args.rate,
                    min_n: args.min_n,
                }),
                integrator: IntegratorConfig::default(),
                output: OutputConfig::default(),
            };
            cfg.output.prefix = args.prefix;
            run_config(cfg, global)?;
        }
        Command::Fit { table, min_n } => {
            let points = read_sweep_points(&table)?;
            let fits = fit_sweep(&points, min_n)?;
            let summary = fit_summary(&fits);
            if let Some(dir) = &global.output_dir {
                let stem = table
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("sweep");
                summary.write(&dir.join(format!("{stem}_refit.txt")))?;
            }
            print_summary(&summary);
        }
        Command::Verify { n_max, tolerance } => {
            if !(2..=8).contains(&n_max) {
                bail!("--n-max must lie in 2..=8, got {n_max}");
            }
            let mut cfg = comparison_integrator();
            global.apply_tolerances(&mut cfg);
            let ns: Vec<usize> = (2..=n_max).collect();
            let reports = match global.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()?
                    .install(|| verification_suite(&ns, &comparison_times(), &cfg))?,
                None => verification_suite(&ns, &comparison_times(), &cfg)?,
            };
            let mut ok = true;
            for r in &reports {
                let status = match r.check(tolerance) {
                    Ok(()) => "ok".to_string(),
                    Err(e) => {
                        ok = false;
                        format!("FAIL {e}")
                    }
                };
                println!(
                    "N={} {} from {}: max deviation {:e} {status}",
                    r.n,
                    r.channels,
                    r.initial,
                    r.max_deviation()
                );
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli).context("irrepsim failed") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
