use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_exponent, FitResult};
use crate::blockspace::BlockSpace;
use crate::channels::LiouvillianSpec;
use crate::dynamics::{evolve_until_fractions, Crossing, Direction, IntegratorConfig};
use crate::error::{Error, Result};
use crate::observables::{log10_purity, log10_symmetric_overlap};
use crate::states::CollectiveState;

/// The two fixed-polarization experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// Symmetric polarizing channel from the completely mixed state, f rising.
    Pumping,
    /// Symmetric depolarizing channel from `coherent(0,0)`, f falling.
    Depolarizing,
}

impl Process {
    pub fn direction(self) -> Direction {
        match self {
            Process::Pumping => Direction::Rising,
            Process::Depolarizing => Direction::Falling,
        }
    }

    pub fn spec(self, rate: f64) -> LiouvillianSpec {
        match self {
            Process::Pumping => LiouvillianSpec::symmetric_polarizing(rate),
            Process::Depolarizing => LiouvillianSpec::symmetric_depolarizing(rate),
        }
    }

    pub fn initial(self, space: &Arc<BlockSpace>) -> CollectiveState {
        match self {
            Process::Pumping => CollectiveState::mixed_collective(space),
            Process::Depolarizing => CollectiveState::coherent(space, 0.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Process::Pumping => "pumping",
            Process::Depolarizing => "depolarizing",
        }
    }
}

/// Runs `process` on N spins until each target f is reached, in any order.
/// Results follow the order of `targets`.
pub fn run_to_fractions(
    process: Process,
    n: usize,
    rate: f64,
    targets: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Crossing>> {
    let space = Arc::new(BlockSpace::new(n)?);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    match process.direction() {
        Direction::Rising => order.sort_by(|&a, &b| targets[a].total_cmp(&targets[b])),
        Direction::Falling => order.sort_by(|&a, &b| targets[b].total_cmp(&targets[a])),
    }
    let sorted: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
    let hits = evolve_until_fractions(
        &process.spec(rate),
        &process.initial(&space),
        &sorted,
        process.direction(),
        cfg,
    )?;
    let mut out: Vec<Option<Crossing>> = vec![None; targets.len()];
    for (slot, hit) in order.into_iter().zip(hits) {
        out[slot] = Some(hit);
    }
    Ok(out
        .into_iter()
        .map(|c| c.expect("every target crossed"))
        .collect())
}

/// One (N, target) cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub target: f64,
    pub time: f64,
    pub log10_purity: f64,
    pub log10_symmetric_overlap: f64,
}

/// Runs every N in parallel; points are ordered by N, then by target as given.
pub fn run_sweep(
    process: Process,
    ns: &[usize],
    targets: &[f64],
    rate: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<SweepPoint>> {
    if ns.is_empty() || targets.is_empty() {
        return Err(Error::Domain(
            "sweep needs at least one N and one target".into(),
        ));
    }
    let rows: Vec<Vec<SweepPoint>> = ns
        .par_iter()
        .map(|&n| {
            let hits = run_to_fractions(process, n, rate, targets, cfg)
                .map_err(|e| e.context(format!("{} sweep at N={n}", process.name())))?;
            hits.into_iter()
                .map(|c| {
                    Ok(SweepPoint {
                        n,
                        target: c.target,
                        time: c.time,
                        log10_purity: log10_purity(&c.state)?,
                        log10_symmetric_overlap: log10_symmetric_overlap(&c.state),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Purity and overlap fits for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepFit {
    pub target: f64,
    pub purity: FitResult,
    pub overlap: FitResult,
}

/// Fits every target separately, using points with `N >= min_n`.
pub fn fit_sweep(points: &[SweepPoint], min_n: usize) -> Result<Vec<SweepFit>> {
    let mut targets: Vec<f64> = Vec::new();
    for p in points {
        if !targets.contains(&p.target) {
            targets.push(p.target);
        }
    }
    targets
        .into_iter()
        .map(|target| {
            let cell: Vec<&SweepPoint> = points
                .iter()
                .filter(|p| p.target == target && p.n >= min_n)
                .collect();
            let purity: Vec<(f64, f64)> =
                cell.iter().map(|p| (p.n as f64, p.log10_purity)).collect();
            let overlap: Vec<(f64, f64)> = cell
                .iter()
                .map(|p| (p.n as f64, p.log10_symmetric_overlap))
                .collect();
            Ok(SweepFit {
                target,
                purity: fit_exponent(&purity)
                    .map_err(|e| e.context(format!("purity fit at f={target}")))?,
                overlap: fit_exponent(&overlap)
                    .map_err(|e| e.context(format!("overlap fit at f={target}")))?,
            })
        })
        .collect()
}

/// Reads a table written by a sweep run (columns named after the fields).
pub fn read_sweep_points(path: &Path) -> Result<Vec<SweepPoint>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::from(e).context(format!("reading {}", path.display()))))
        .collect()
}

/// `{step, 2*step, ...}` up to `max`.
pub fn n_grid(step: usize, max: usize) -> Vec<usize> {
    (1..).map(|k| k * step).take_while(|&n| n <= max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pumping_purity_is_a_product_law() {
        // independent spins: purity ((1 + f^2) / 2)^N
        let cfg = IntegratorConfig::default();
        let points = run_sweep(Process::Pumping, &[4, 8, 12, 16], &[0.95, 0.9], 1.0, &cfg).unwrap();
        assert_eq!(points.len(), 8);
        assert_eq!(
            (points[0].n, points[0].target, points[1].target),
            (4, 0.95, 0.9)
        );
        for p in &points {
            let want = p.n as f64 * ((1.0 + p.target * p.target) / 2.0).log10();
            assert!((p.log10_purity - want).abs() < 1e-7, "{p:?}");
        }
        let fits = fit_sweep(&points, 0).unwrap();
        let eta = -((1.0 + 0.95f64.powi(2)) / 2.0).log10();
        assert!((fits[0].purity.eta - eta).abs() < 1e-8);
        assert!(fits[0].overlap.eta > 0.0);
        assert!(fit_sweep(&points, 10).is_err());
    }

    #[test]
    fn depolarizing_targets_in_any_order() {
        let cfg = IntegratorConfig::default();
        let hits = run_to_fractions(Process::Depolarizing, 6, 1.0, &[0.9, 0.95], &cfg).unwrap();
        assert!(hits[0].time > hits[1].time);
        assert_eq!(hits[0].target, 0.9);
    }

    #[test]
    fn grid() {
        assert_eq!(n_grid(4, 18), vec![4, 8, 12, 16]);
        assert_eq!(n_grid(4, 120).len(), 30);
    }
}
