//! Scalar diagnostics of collective states.

use std::f64::consts::LN_10;
use std::sync::Arc;

use serde::Serialize;

use crate::blockspace::{log_sum_exp, BlockSpace};
use crate::error::{Error, Result};
use crate::operators::{Axis, CollectiveOperator};
use crate::states::CollectiveState;
use crate::C64;

/// Negative variances down to this (relative to `<S^2>`) are rounding.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;
/// The squeezing denominator must exceed this times `N^2`.
pub const SQUEEZING_THRESHOLD: f64 = 1e-12;

/// `sum_J tr(rho_J S_J)`.
pub fn expectation(state: &CollectiveState, op: &CollectiveOperator) -> Result<C64> {
    op.check_space(state.space())?;
    let mut acc = C64::ZERO;
    for (k, b) in state.space().blocks().iter().enumerate() {
        let rho = state.block(k);
        let s = op.block(k);
        for c in 0..b.dim {
            for r in 0..b.dim {
                acc += rho[(r, c)] * s[(c, r)];
            }
        }
    }
    Ok(acc)
}

/// Standard deviation `sqrt(<S^2> - <S>^2)` of a Hermitian operator.
pub fn uncertainty(state: &CollectiveState, op: &CollectiveOperator) -> Result<f64> {
    let square = op.matmul(op)?;
    uncertainty_with_square(state, op, &square)
}

fn uncertainty_with_square(
    state: &CollectiveState,
    op: &CollectiveOperator,
    square: &CollectiveOperator,
) -> Result<f64> {
    let mean = expectation(state, op)?.re;
    let second = expectation(state, square)?.re;
    let var = second - mean * mean;
    if var < 0.0 {
        if var < -VARIANCE_TOLERANCE * second.abs().max(1.0) {
            return Err(Error::Numeric(format!("negative variance {var:e}")));
        }
        return Ok(0.0);
    }
    Ok(var.sqrt())
}

/// `p_J = tr rho_J`, in descending J.
pub fn block_traces(state: &CollectiveState) -> Vec<f64> {
    (0..state.space().num_blocks())
        .map(|k| state.block_trace(k).re)
        .collect()
}

/// Population of the symmetric (J = N/2) block.
pub fn symmetric_overlap(state: &CollectiveState) -> f64 {
    state.block_trace(0).re
}

pub fn log10_symmetric_overlap(state: &CollectiveState) -> f64 {
    symmetric_overlap(state).log10()
}

/// `log10 tr(rho^2)` of the full N-spin operator, `sum_J tr(rho_J^2) / d_J`.
pub fn log10_purity(state: &CollectiveState) -> Result<f64> {
    let space = state.space();
    let terms: Vec<f64> = space
        .blocks()
        .iter()
        .enumerate()
        .filter_map(|(k, b)| {
            let sq: f64 = state.block(k).iter().map(|z| z.norm_sqr()).sum();
            (sq > 0.0).then(|| sq.ln() - b.log_degeneracy)
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::Domain("purity of the zero operator".into()));
    }
    Ok(log_sum_exp(terms) / LN_10)
}

/// `f = <J_z> / (N/2)`.
pub fn polarization_fraction(state: &CollectiveState) -> f64 {
    let space = state.space();
    let jz: f64 = space
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let rho = state.block(k);
            (0..b.dim)
                .map(|r| rho[(r, r)].re * b.m_at(r).value())
                .sum::<f64>()
        })
        .sum();
    jz / (space.n_particles() as f64 / 2.0)
}

/// Cached collective generators and their squares for one block space.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    space: Arc<BlockSpace>,
    generators: [CollectiveOperator; 3],
    squares: [CollectiveOperator; 3],
}

impl ObservableSet {
    pub fn new(space: &Arc<BlockSpace>) -> Self {
        let generators =
            [Axis::X, Axis::Y, Axis::Z].map(|a| CollectiveOperator::generator(space, a));
        let squares = generators
            .clone()
            .map(|g| g.matmul(&g).expect("same space"));
        ObservableSet {
            space: Arc::clone(space),
            generators,
            squares,
        }
    }

    pub fn space(&self) -> &Arc<BlockSpace> {
        &self.space
    }

    /// `[<J_x>, <J_y>, <J_z>]`.
    pub fn means(&self, state: &CollectiveState) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, g) in out.iter_mut().zip(&self.generators) {
            *o = expectation(state, g)?.re;
        }
        Ok(out)
    }

    /// `[<dJ_x>, <dJ_y>, <dJ_z>]`.
    pub fn uncertainties(&self, state: &CollectiveState) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = uncertainty_with_square(state, &self.generators[i], &self.squares[i])?;
        }
        Ok(out)
    }

    /// `N <dJ_y^2> / (<J_z>^2 + <J_x>^2)`.
    pub fn squeezing_parameter(&self, state: &CollectiveState) -> Result<f64> {
        let n = self.space.n_particles() as f64;
        let [mx, _, mz] = self.means(state)?;
        let dy = uncertainty_with_square(state, &self.generators[1], &self.squares[1])?;
        let denominator = mz * mz + mx * mx;
        let threshold = SQUEEZING_THRESHOLD * n * n;
        if denominator <= threshold {
            return Err(Error::UndefinedSqueezing {
                denominator,
                threshold,
            });
        }
        Ok(n * dy * dy / denominator)
    }

    /// `<dJ_x><dJ_y> - |<J_z>|/2`; non-negative up to rounding.
    pub fn heisenberg_robertson_margin(&self, state: &CollectiveState) -> Result<f64> {
        let [dx, dy, _] = self.uncertainties(state)?;
        let mz = expectation(state, &self.generators[2])?.re;
        Ok(dx * dy - mz.abs() / 2.0)
    }

    pub fn record(&self, state: &CollectiveState, time: f64) -> Result<ObservableRecord> {
        state.check_space(&self.space)?;
        let xi2 = match self.squeezing_parameter(state) {
            Ok(x) => Some(x),
            Err(Error::UndefinedSqueezing { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(ObservableRecord {
            time,
            mean: self.means(state)?,
            uncertainty: self.uncertainties(state)?,
            block_traces: block_traces(state),
            log10_purity: log10_purity(state)?,
            log10_symmetric_overlap: log10_symmetric_overlap(state),
            f: polarization_fraction(state),
            xi2,
        })
    }
}

/// Squeezing parameter of a single state; see [`ObservableSet::squeezing_parameter`].
pub fn squeezing_parameter(state: &CollectiveState) -> Result<f64> {
    ObservableSet::new(state.space()).squeezing_parameter(state)
}

/// All diagnostics of one sampled state. `xi2` is `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub time: f64,
    pub mean: [f64; 3],
    pub uncertainty: [f64; 3],
    /// Descending J.
    pub block_traces: Vec<f64>,
    pub log10_purity: f64,
    pub log10_symmetric_overlap: f64,
    pub f: f64,
    pub xi2: Option<f64>,
}
