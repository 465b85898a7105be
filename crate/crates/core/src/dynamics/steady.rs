use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::sparse::{assemble_leading, SparseLiouvillian, DEFAULT_MEMORY_BUDGET};
use crate::blockspace::BlockSpace;
use crate::channels::{Generator, LiouvillianSpec};
use crate::error::{Error, Result};
use crate::states::CollectiveState;
use crate::C64;

/// Shift of the inverse iteration relative to the Liouvillian scale.
const RELATIVE_SHIFT: f64 = 1e-12;
/// A second eigenvalue below this (relative) magnitude counts as degenerate.
const RELATIVE_GAP: f64 = 1e-10;
/// Admissible `max |L rho|` relative to the Liouvillian scale.
const RELATIVE_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    pub memory_budget: usize,
    pub max_iterations: usize,
    /// Iterations spent estimating the second-smallest eigenvalue.
    pub gap_iterations: usize,
    pub seed: u64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            memory_budget: DEFAULT_MEMORY_BUDGET,
            max_iterations: 50,
            gap_iterations: 20,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub state: CollectiveState,
    /// `max |L rho|`.
    pub residual: f64,
    /// Largest column 1-norm of the Liouvillian.
    pub scale: f64,
    /// Estimated magnitude of the smallest nonzero eigenvalue.
    pub second_eigenvalue: f64,
    /// Number of leading blocks the solve was restricted to.
    pub blocks_used: usize,
}

/// Unique fixed point of the master equation.
pub fn steady_state(spec: &LiouvillianSpec, space: &Arc<BlockSpace>) -> Result<CollectiveState> {
    steady_state_with(spec, space, &SteadyStateOptions::default()).map(|r| r.state)
}

/// Shift-invert solve for the null vector of the Liouvillian.
///
/// Without local channels every block evolves on its own and each block's
/// identity is conserved, so the problem is restricted to the top block,
/// the component reached from symmetric initial states.
pub fn steady_state_with(
    spec: &LiouvillianSpec,
    space: &Arc<BlockSpace>,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateReport> {
    let gen = Generator::new(spec, space)?;
    let blocks_used = if spec.has_local_channels() {
        space.num_blocks()
    } else {
        1
    };
    let l = assemble_leading(&gen, blocks_used, opts.memory_budget)?;
    let n = l.dimension();
    let scale = l.norm_scale();
    let diag: Vec<usize> = space.blocks()[..blocks_used]
        .iter()
        .flat_map(|b| (0..b.dim).map(move |r| b.elem(r, r)))
        .collect();
    let trace = |x: &[C64]| diag.iter().map(|&i| x[i]).sum::<C64>();

    if scale == 0.0 {
        if n == 1 {
            let mut state = CollectiveState::zeros(space);
            state.data_mut()[0] = C64::new(1.0, 0.0);
            return Ok(SteadyStateReport {
                state,
                residual: 0.0,
                scale,
                second_eigenvalue: f64::INFINITY,
                blocks_used,
            });
        }
        return Err(Error::AmbiguousSteadyState {
            second: 0.0,
            gap: 0.0,
        });
    }

    let sigma = -RELATIVE_SHIFT * scale;
    let solver = ShiftedSolver::new(&l, C64::new(sigma, 0.0))?;

    let mut x = vec![C64::ZERO; n];
    for &i in &diag {
        x[i] = C64::new(1.0 / diag.len() as f64, 0.0);
    }
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let mut next = solver.solve(&x)?;
        let tr = trace(&next);
        if tr.norm() == 0.0 || !tr.is_finite() {
            return Err(Error::Numeric(
                "inverse iteration lost the trace component".into(),
            ));
        }
        for v in &mut next {
            *v /= tr;
        }
        let change = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        x = next;
        if change < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("steady-state iteration hit the iteration cap");
    }

    let mut data = vec![C64::ZERO; space.element_count()];
    data[..n].copy_from_slice(&x);
    let mut state = CollectiveState::from_data(space, data)?;
    state.hermitize();
    let tr = state.trace();
    state.scale(C64::new(1.0, 0.0) / tr);

    let residual = l
        .mul_vec(&state.data()[..n])
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if residual > RELATIVE_RESIDUAL * scale {
        return Err(Error::Numeric(format!(
            "steady-state residual {residual:e} exceeds {:e}",
            RELATIVE_RESIDUAL * scale
        )));
    }

    let second_eigenvalue = second_eigenvalue(&l, &solver, &state.data()[..n], &trace, opts)?;
    let gap = RELATIVE_GAP * scale;
    if second_eigenvalue < gap {
        return Err(Error::AmbiguousSteadyState {
            second: second_eigenvalue,
            gap,
        });
    }
    Ok(SteadyStateReport {
        state,
        residual,
        scale,
        second_eigenvalue,
        blocks_used,
    })
}

/// Inverse iteration on the traceless complement of the steady state. Every
/// eigenvector with nonzero eigenvalue is traceless, so this finds the
/// slowest decaying mode, or a second null vector if one exists.
fn second_eigenvalue(
    l: &SparseLiouvillian,
    solver: &ShiftedSolver,
    rho: &[C64],
    trace: &dyn Fn(&[C64]) -> C64,
    opts: &SteadyStateOptions,
) -> Result<f64> {
    let n = l.dimension();
    if n == 1 {
        return Ok(f64::INFINITY);
    }
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut y: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let project = |y: &mut Vec<C64>| -> f64 {
        let tr = trace(y);
        for (v, r) in y.iter_mut().zip(rho) {
            *v -= tr * r;
        }
        let norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in y.iter_mut() {
                *v /= norm;
            }
        }
        norm
    };
    project(&mut y);
    let mut estimate = f64::INFINITY;
    for _ in 0..opts.gap_iterations {
        y = solver.solve(&y)?;
        if project(&mut y) == 0.0 {
            return Ok(f64::INFINITY);
        }
        estimate = l
            .mul_vec(&y)
            .iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt();
    }
    Ok(estimate)
}

struct ShiftedSolver {
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
    n: usize,
}

impl ShiftedSolver {
    fn new(l: &SparseLiouvillian, shift: C64) -> Result<Self> {
        let n = l.dimension();
        let (col_ptr, rows, vals) = l.shifted_parts(shift);
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, rows);
        let matrix = SparseColMat::new(symbolic, vals);
        let lu = matrix
            .sp_lu()
            .map_err(|e| Error::Numeric(format!("sparse LU failed: {e:?}")))?;
        Ok(ShiftedSolver { lu, n })
    }

    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let b = Col::<C64>::from_fn(self.n, |i| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<C64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "sparse solve produced non-finite values".into(),
            ));
        }
        Ok(out)
    }
}
