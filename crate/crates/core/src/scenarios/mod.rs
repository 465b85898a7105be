//! Declarative experiments: configuration, runners, fits and file output.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! threads = 2
//!
//! [scenario]
//! kind = "sweep"            # pump_to_f | depolarize_to_f | squeeze | steady_state_scan | sweep
//! process = "pumping"
//! n_max = 60
//! targets = [0.9, 0.95, 0.98]
//!
//! [integrator]
//! rtol = 1e-8
//!
//! [output]
//! dir = "results"
//! ```

mod fit;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockspace::BlockSpace;
use crate::channels::LiouvillianSpec;
use crate::dynamics::{evolve, steady_state_with, IntegratorConfig, SteadyStateOptions};
use crate::error::{Error, Result};
use crate::observables::{
    log10_purity, log10_symmetric_overlap, polarization_fraction, ObservableRecord, ObservableSet,
};
use crate::operators::CollectiveOperator;
use crate::states::CollectiveState;

pub use fit::{extrapolate, fit_exponent, FitResult};
pub use output::{format_float, record_header, record_row, write_records, write_table, Summary};
pub use sweep::{
    fit_sweep, n_grid, read_sweep_points, run_sweep, run_to_fractions, Process, SweepFit,
    SweepPoint,
};

/// Particle numbers at which sweep fits are extrapolated in the summary.
pub const EXTRAPOLATION_POINTS: [f64; 2] = [1e5, 1e6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Carried for reproducibility; every built-in scenario is deterministic.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for sweeps and scans; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    pub scenario: Scenario,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    PumpToF(FractionRun),
    DepolarizeToF(FractionRun),
    Squeeze(SqueezeRun),
    SteadyStateScan(SteadyScan),
    Sweep(SweepRun),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::PumpToF(_) => "pump_to_f",
            Scenario::DepolarizeToF(_) => "depolarize_to_f",
            Scenario::Squeeze(_) => "squeeze",
            Scenario::SteadyStateScan(_) => "steady_state_scan",
            Scenario::Sweep(_) => "sweep",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Single N driven to one or more polarization targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionRun {
    pub n: usize,
    #[serde(default = "one")]
    pub rate: f64,
    pub targets: Vec<f64>,
    /// Rows written between t=0 and the last crossing.
    #[serde(default = "FractionRun::default_samples")]
    pub samples: usize,
}

impl FractionRun {
    fn default_samples() -> usize {
        101
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqueezeChannel {
    None,
    /// Symmetric depolarizing at the run's rate.
    Symmetric,
    /// Collective depolarizing at the run's rate.
    Collective,
}

impl SqueezeChannel {
    pub fn name(self) -> &'static str {
        match self {
            SqueezeChannel::None => "none",
            SqueezeChannel::Symmetric => "symmetric",
            SqueezeChannel::Collective => "collective",
        }
    }
}

/// Counter-twisting from `coherent(0,0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezeRun {
    pub n: usize,
    /// Defaults to `1/N`.
    #[serde(default)]
    pub coupling: Option<f64>,
    /// Defaults to `4/N`.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "SqueezeRun::default_channels")]
    pub channels: Vec<SqueezeChannel>,
    #[serde(default = "SqueezeRun::default_horizon")]
    pub horizon: f64,
    #[serde(default = "SqueezeRun::default_samples")]
    pub samples: usize,
}

impl SqueezeRun {
    fn default_channels() -> Vec<SqueezeChannel> {
        vec![
            SqueezeChannel::None,
            SqueezeChannel::Symmetric,
            SqueezeChannel::Collective,
        ]
    }
    fn default_horizon() -> f64 {
        2.0
    }
    fn default_samples() -> usize {
        201
    }
    pub fn coupling(&self) -> f64 {
        self.coupling.unwrap_or(1.0 / self.n as f64)
    }
    pub fn rate(&self) -> f64 {
        self.rate.unwrap_or(4.0 / self.n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyChannel {
    SymmetricDepolarizing,
    CollectiveDepolarizing,
    Pumping,
}

impl SteadyChannel {
    pub fn spec(self, space: &Arc<BlockSpace>, rate: f64) -> LiouvillianSpec {
        match self {
            SteadyChannel::SymmetricDepolarizing => LiouvillianSpec::symmetric_depolarizing(rate),
            SteadyChannel::CollectiveDepolarizing => {
                LiouvillianSpec::collective_depolarizing(space, rate)
            }
            SteadyChannel::Pumping => LiouvillianSpec::symmetric_polarizing(rate),
        }
    }

    /// The known fixed point.
    pub fn expected(self, space: &Arc<BlockSpace>) -> CollectiveState {
        match self {
            SteadyChannel::SymmetricDepolarizing => CollectiveState::mixed_collective(space),
            SteadyChannel::CollectiveDepolarizing => CollectiveState::mixed_symmetric(space),
            SteadyChannel::Pumping => CollectiveState::coherent(space, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyScan {
    pub ns: Vec<usize>,
    pub channel: SteadyChannel,
    #[serde(default = "one")]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    pub process: Process,
    /// Explicit grid; otherwise `{n_step, 2 n_step, ...} <= n_max`.
    #[serde(default)]
    pub ns: Option<Vec<usize>>,
    #[serde(default = "SweepRun::default_step")]
    pub n_step: usize,
    #[serde(default = "SweepRun::default_max")]
    pub n_max: usize,
    pub targets: Vec<f64>,
    #[serde(default = "one")]
    pub rate: f64,
    /// Points with smaller N are left out of the fits.
    #[serde(default)]
    pub min_n: usize,
}

impl SweepRun {
    fn default_step() -> usize {
        4
    }
    fn default_max() -> usize {
        120
    }
    pub fn grid(&self) -> Vec<usize> {
        self.ns
            .clone()
            .unwrap_or_else(|| n_grid(self.n_step, self.n_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "OutputConfig::default_dir")]
    pub dir: PathBuf,
    /// File-name stem; defaults to the scenario kind.
    #[serde(default)]
    pub prefix: Option<String>,
}

impl OutputConfig {
    fn default_dir() -> PathBuf {
        PathBuf::from("results")
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: Self::default_dir(),
            prefix: None,
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate >= 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "rate {rate} must be finite and non-negative"
        )))
    }
}

fn check_n(n: usize) -> Result<()> {
    BlockSpace::new(n)
        .map(|_| ())
        .map_err(|e| Error::Config(e.to_string()))
}

fn check_targets(targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Config("at least one target f is required".into()));
    }
    if let Some(t) = targets.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Config(format!("target f={t} must lie in (0, 1)")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        match &self.scenario {
            Scenario::PumpToF(r) | Scenario::DepolarizeToF(r) => {
                check_n(r.n)?;
                check_rate(r.rate)?;
                check_targets(&r.targets)?;
                if r.samples < 2 {
                    return Err(Error::Config("samples must be at least 2".into()));
                }
            }
            Scenario::Squeeze(r) => {
                check_n(r.n)?;
                check_rate(r.rate())?;
                if !r.coupling().is_finite() {
                    return Err(Error::Config("coupling must be finite".into()));
                }
                if r.channels.is_empty() {
                    return Err(Error::Config(
                        "at least one squeeze channel is required".into(),
                    ));
                }
                if !(r.horizon > 0.0 && r.horizon.is_finite()) || r.samples < 2 {
                    return Err(Error::Config(
                        "squeeze horizon must be positive with at least 2 samples".into(),
                    ));
                }
            }
            Scenario::SteadyStateScan(r) => {
                if r.ns.is_empty() {
                    return Err(Error::Config("ns must not be empty".into()));
                }
                r.ns.iter().try_for_each(|&n| check_n(n))?;
                check_rate(r.rate)?;
                if r.rate == 0.0 {
                    return Err(Error::Config(
                        "steady-state scan needs a positive rate".into(),
                    ));
                }
            }
            Scenario::Sweep(r) => {
                let grid = r.grid();
                if grid.len() < 4 {
                    return Err(Error::Config("a sweep needs at least 4 values of N".into()));
                }
                grid.iter().try_for_each(|&n| check_n(n))?;
                check_rate(r.rate)?;
                check_targets(&r.targets)?;
            }
        }
        Ok(())
    }

    fn prefix(&self) -> String {
        self.output
            .prefix
            .clone()
            .unwrap_or_else(|| self.scenario.kind().to_string())
    }
}

/// Summary plus the files written.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Runs a validated configuration, writing CSV tables and a summary file
/// under the configured output directory.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    let run =
        || run_inner(config).map_err(|e| e.context(format!("scenario {}", config.scenario.kind())));
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn run_inner(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let dir = &config.output.dir;
    let prefix = config.prefix();
    let mut summary = Summary::default();
    summary.push("scenario", config.scenario.kind());
    let mut files = Vec::new();
    let cfg = &config.integrator;

    match &config.scenario {
        Scenario::PumpToF(r) => fraction_run(
            Process::Pumping,
            r,
            cfg,
            dir,
            &prefix,
            &mut summary,
            &mut files,
        )?,
        Scenario::DepolarizeToF(r) => fraction_run(
            Process::Depolarizing,
            r,
            cfg,
            dir,
            &prefix,
            &mut summary,
            &mut files,
        )?,
        Scenario::Squeeze(r) => {
            summary.push("n", r.n);
            summary.push_float("coupling", r.coupling());
            summary.push_float("rate", r.rate());
            let times = linspace(r.horizon, r.samples);
            for &channel in &r.channels {
                let records =
                    squeeze_trajectory(r.n, r.coupling(), r.rate(), channel, &times, cfg)?;
                let space = BlockSpace::new(r.n)?;
                let path = dir.join(format!("{prefix}_{}.csv", channel.name()));
                write_records(&path, &space, &records)?;
                files.push(path);
                let key = channel.name();
                match min_squeezing(&records) {
                    Some((t, xi2)) => {
                        summary.push_float(format!("{key}.min_xi2"), xi2);
                        summary.push_float(format!("{key}.t_min"), t);
                    }
                    None => summary.push(format!("{key}.min_xi2"), "nan"),
                }
                let last = records.last().expect("at least two samples");
                summary.push_float(format!("{key}.final_f"), last.f);
                summary.push_float(format!("{key}.final_log10_purity"), last.log10_purity);
            }
        }
        Scenario::SteadyStateScan(r) => {
            let rows = steady_state_scan(&r.ns, r.channel, r.rate)?;
            let header: Vec<String> = [
                "n",
                "max_deviation",
                "residual",
                "second_eigenvalue",
                "log10_purity",
                "log10_symmetric_overlap",
                "f",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            let path = dir.join(format!("{prefix}.csv"));
            write_table(
                &path,
                &header,
                rows.iter().map(|row| {
                    let mut out = vec![row.n.to_string()];
                    out.extend(
                        [
                            row.max_deviation,
                            row.residual,
                            row.second_eigenvalue,
                            row.log10_purity,
                            row.log10_symmetric_overlap,
                            row.f,
                        ]
                        .map(format_float),
                    );
                    out
                }),
            )?;
            files.push(path);
            let worst = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            summary.push_float("max_deviation", worst);
            for row in &rows {
                summary.push_float(format!("n{}.max_deviation", row.n), row.max_deviation);
            }
        }
        Scenario::Sweep(r) => {
            let grid = r.grid();
            let points = run_sweep(r.process, &grid, &r.targets, r.rate, cfg)?;
            let header: Vec<String> = [
                "n",
                "target",
                "time",
                "log10_purity",
                "log10_symmetric_overlap",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            let path = dir.join(format!("{prefix}.csv"));
            write_table(
                &path,
                &header,
                points.iter().map(|p| {
                    let mut row = vec![p.n.to_string()];
                    row.extend(
                        [p.target, p.time, p.log10_purity, p.log10_symmetric_overlap]
                            .map(format_float),
                    );
                    row
                }),
            )?;
            files.push(path);
            let fits = fit_sweep(&points, r.min_n)?;
            summary.push("process", r.process.name());
            summary.push("n_values", grid.len());
            summary.extend(fit_summary(&fits));
            let fit_path = dir.join(format!("{prefix}_fits.csv"));
            write_fits(&fit_path, &fits)?;
            files.push(fit_path);
        }
    }

    let summary_path = dir.join(format!("{prefix}_summary.txt"));
    summary.write(&summary_path)?;
    files.push(summary_path);
    Ok(ScenarioOutcome { summary, files })
}

fn fraction_run(
    process: Process,
    r: &FractionRun,
    cfg: &IntegratorConfig,
    dir: &Path,
    prefix: &str,
    summary: &mut Summary,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let hits = run_to_fractions(process, r.n, r.rate, &r.targets, cfg)?;
    let t_end = hits.iter().map(|h| h.time).fold(0.0, f64::max);
    let space = Arc::new(BlockSpace::new(r.n)?);
    let states = evolve(
        &process.spec(r.rate),
        &process.initial(&space),
        &linspace(t_end, r.samples),
        cfg,
    )?;
    let obs = ObservableSet::new(&space);
    let records = states
        .iter()
        .zip(linspace(t_end, r.samples))
        .map(|(s, t)| obs.record(s, t))
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join(format!("{prefix}.csv"));
    write_records(&path, &space, &records)?;
    files.push(path);

    summary.push("n", r.n);
    summary.push_float("rate", r.rate);
    for hit in &hits {
        let key = format!("f{}", hit.target);
        summary.push_float(format!("{key}.time"), hit.time);
        summary.push_float(format!("{key}.log10_purity"), log10_purity(&hit.state)?);
        summary.push_float(
            format!("{key}.log10_symmetric_overlap"),
            log10_symmetric_overlap(&hit.state),
        );
    }
    let last = hits
        .iter()
        .max_by(|a, b| a.time.total_cmp(&b.time))
        .expect("targets validated non-empty");
    summary.push_float("final_f", polarization_fraction(&last.state));
    summary.push_float("final_log10_purity", log10_purity(&last.state)?);
    summary.push_float(
        "final_log10_symmetric_overlap",
        log10_symmetric_overlap(&last.state),
    );
    Ok(())
}

/// `samples` evenly spaced times on `[0, end]`.
pub fn linspace(end: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![end],
        _ => (0..samples)
            .map(|i| end * i as f64 / (samples - 1) as f64)
            .collect(),
    }
}

/// Liouvillian of a squeezing run.
pub fn squeeze_spec(
    space: &Arc<BlockSpace>,
    coupling: f64,
    rate: f64,
    channel: SqueezeChannel,
) -> LiouvillianSpec {
    let h = CollectiveOperator::counter_twisting(space, coupling);
    match channel {
        SqueezeChannel::None => LiouvillianSpec::new(),
        SqueezeChannel::Symmetric => LiouvillianSpec::symmetric_depolarizing(rate),
        SqueezeChannel::Collective => LiouvillianSpec::collective_depolarizing(space, rate),
    }
    .with_hamiltonian(h)
}

/// Observables along a counter-twisting run from `coherent(0,0)`.
pub fn squeeze_trajectory(
    n: usize,
    coupling: f64,
    rate: f64,
    channel: SqueezeChannel,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<ObservableRecord>> {
    let space = Arc::new(BlockSpace::new(n)?);
    let states = evolve(
        &squeeze_spec(&space, coupling, rate, channel),
        &CollectiveState::coherent(&space, 0.0, 0.0),
        times,
        cfg,
    )?;
    let obs = ObservableSet::new(&space);
    states
        .iter()
        .zip(times)
        .map(|(s, &t)| obs.record(s, t))
        .collect()
}

/// `(time, xi2)` of the smallest defined squeezing parameter.
pub fn min_squeezing(records: &[ObservableRecord]) -> Option<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.xi2.map(|x| (r.time, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// One row of a steady-state scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyRow {
    pub n: usize,
    /// Largest elementwise distance from the known fixed point.
    pub max_deviation: f64,
    pub residual: f64,
    pub second_eigenvalue: f64,
    pub log10_purity: f64,
    pub log10_symmetric_overlap: f64,
    pub f: f64,
}

pub fn steady_state_scan(
    ns: &[usize],
    channel: SteadyChannel,
    rate: f64,
) -> Result<Vec<SteadyRow>> {
    ns.par_iter()
        .map(|&n| {
            let space = Arc::new(BlockSpace::new(n)?);
            let report = steady_state_with(
                &channel.spec(&space, rate),
                &space,
                &SteadyStateOptions::default(),
            )
            .map_err(|e| e.context(format!("steady state at N={n}")))?;
            Ok(SteadyRow {
                n,
                max_deviation: report.state.max_abs_diff(&channel.expected(&space))?,
                residual: report.residual,
                second_eigenvalue: report.second_eigenvalue,
                log10_purity: log10_purity(&report.state)?,
                log10_symmetric_overlap: log10_symmetric_overlap(&report.state),
                f: polarization_fraction(&report.state),
            })
        })
        .collect()
}

/// Summary entries for sweep fits, including extrapolations.
pub fn fit_summary(fits: &[SweepFit]) -> Summary {
    let mut s = Summary::default();
    for fit in fits {
        for (name, r) in [("purity", &fit.purity), ("overlap", &fit.overlap)] {
            let key = format!("f{}.{name}", fit.target);
            s.push_float(format!("{key}.eta"), r.eta);
            s.push_float(format!("{key}.intercept"), r.intercept);
            s.push_float(format!("{key}.rms"), r.rms);
            s.push(
                format!("{key}.n_range"),
                format!("{}..{}", r.n_min, r.n_max),
            );
            for n in EXTRAPOLATION_POINTS {
                s.push_float(format!("{key}.log10_at_{n:e}"), extrapolate(r, n));
            }
        }
    }
    s
}

fn write_fits(path: &Path, fits: &[SweepFit]) -> Result<()> {
    let header: Vec<String> = [
        "target",
        "quantity",
        "eta",
        "intercept",
        "rms",
        "n_min",
        "n_max",
        "points",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = fits.iter().flat_map(|f| {
        [("purity", f.purity), ("overlap", f.overlap)].map(|(name, r)| {
            vec![
                format_float(f.target),
                name.to_string(),
                format_float(r.eta),
                format_float(r.intercept),
                format_float(r.rms),
                format_float(r.n_min),
                format_float(r.n_max),
                r.points.to_string(),
            ]
        })
    });
    write_table(path, &header, rows)
}
