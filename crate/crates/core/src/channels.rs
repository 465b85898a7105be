//! Lindblad generators acting on collective states.
//!
//! Every term of a master equation is reduced to one of three shapes acting on
//! the stored elements `rho_{J,M;J,M'}`:
//!
//! * `K rho + rho K^dagger` with a block-diagonal `K` (Hamiltonian, all
//!   anticommutators, and the identity components of local jump operators);
//! * `S rho S^dagger` for each collective jump operator;
//! * the local sandwich `sum_n t^(n) rho t^(n)^dagger`, which couples block J
//!   to blocks J-1, J and J+1 through the closed-form g-tensor.
//!
//! The generator is applied element by element, each source element scattering
//! to a handful of targets. The same enumeration feeds the sparse assembly in
//! [`crate::dynamics`].

use std::sync::Arc;

use crate::blockspace::BlockSpace;
use crate::error::{Error, Result};
use crate::operators::{
    coefficient, Axis, CoefficientKind, CollectiveOperator, SingleSpinOperator, Spherical,
};
use crate::states::CollectiveState;
use crate::C64;

/// Hamiltonian plus collective and local-symmetric channels with their rates.
#[derive(Debug, Clone, Default)]
pub struct LiouvillianSpec {
    pub hamiltonian: Option<CollectiveOperator>,
    pub collective_channels: Vec<(CollectiveOperator, f64)>,
    pub local_channels: Vec<(SingleSpinOperator, f64)>,
}

impl LiouvillianSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_hamiltonian(mut self, h: CollectiveOperator) -> Self {
        self.hamiltonian = Some(h);
        self
    }

    pub fn with_collective(mut self, op: CollectiveOperator, rate: f64) -> Self {
        self.collective_channels.push((op, rate));
        self
    }

    pub fn with_local(mut self, s: SingleSpinOperator, rate: f64) -> Self {
        self.local_channels.push((s, rate));
        self
    }

    /// Optical-pumping model: `rate * L^S[j_+]`.
    pub fn symmetric_polarizing(rate: f64) -> Self {
        Self::new().with_local(SingleSpinOperator::raising(), rate)
    }

    /// `rate * (L^S[j_x] + L^S[j_y] + L^S[j_z])`.
    pub fn symmetric_depolarizing(rate: f64) -> Self {
        Self::new()
            .with_local(SingleSpinOperator::jx(), rate)
            .with_local(SingleSpinOperator::jy(), rate)
            .with_local(SingleSpinOperator::jz(), rate)
    }

    /// `rate * (L^C[J_x] + L^C[J_y] + L^C[J_z])`.
    pub fn collective_depolarizing(space: &Arc<BlockSpace>, rate: f64) -> Self {
        [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .fold(Self::new(), |spec, axis| {
                spec.with_collective(CollectiveOperator::generator(space, axis), rate)
            })
    }

    pub fn term_count(&self) -> usize {
        usize::from(self.hamiltonian.is_some())
            + self.collective_channels.len()
            + self.local_channels.len()
    }

    /// Whether the generator can move population between J blocks.
    pub fn has_local_channels(&self) -> bool {
        self.local_channels
            .iter()
            .any(|(s, rate)| *rate != 0.0 && s.spherical().iter().any(|c| *c != C64::ZERO))
    }

    pub fn validate(&self) -> Result<()> {
        if self.term_count() == 0 {
            return Err(Error::Domain("Liouvillian has no terms".into()));
        }
        let rates = self
            .collective_channels
            .iter()
            .map(|(_, r)| *r)
            .chain(self.local_channels.iter().map(|(_, r)| *r));
        for rate in rates {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::Domain(format!(
                    "channel rate {rate} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_space(&self, space: &BlockSpace) -> Result<()> {
        let ops = self
            .hamiltonian
            .iter()
            .chain(self.collective_channels.iter().map(|(op, _)| op));
        for op in ops {
            op.check_space(space)?;
        }
        Ok(())
    }
}

type Columns = Vec<Vec<(usize, C64)>>;

#[derive(Debug, Clone)]
struct BlockTerms {
    /// Nonzeros of `K` grouped by column.
    k_cols: Columns,
    /// `(rate, S)` for every collective jump operator, `S` grouped by column.
    sandwiches: Vec<(f64, Columns)>,
}

/// Per-block coefficient tables for the local sandwich.
#[derive(Debug, Clone)]
struct LocalTable {
    within: f64,
    down: f64,
    up: f64,
    /// `[q][row]` with the target-range guard already applied.
    a: [Vec<f64>; 3],
    b: [Vec<f64>; 3],
    d: [Vec<f64>; 3],
}

/// A compiled, matrix-free Liouvillian for one block space.
#[derive(Debug, Clone)]
pub struct Generator {
    space: Arc<BlockSpace>,
    blocks: Vec<BlockTerms>,
    /// Nonzero entries `(q, r, Q_qr)` of `Q_qr = sum_l rate_l t_q t_r^*`.
    pairs: Vec<(usize, usize, C64)>,
    tables: Vec<LocalTable>,
}

const DQ: [i64; 3] = [1, -1, 0];

impl Generator {
    pub fn new(spec: &LiouvillianSpec, space: &Arc<BlockSpace>) -> Result<Self> {
        spec.validate()?;
        spec.check_space(space)?;
        let n = space.n_particles() as f64;

        let mut k_op = CollectiveOperator::zeros(space);
        if let Some(h) = &spec.hamiltonian {
            k_op = k_op.add(&h.scale(C64::new(0.0, -1.0)))?;
        }
        for (s, rate) in &spec.collective_channels {
            let sds = s.adjoint().matmul(s)?;
            k_op = k_op.add(&sds.scale(C64::new(-0.5 * rate, 0.0)))?;
        }

        let mut q = [[C64::ZERO; 3]; 3];
        for (s, rate) in &spec.local_channels {
            if *rate == 0.0 {
                continue;
            }
            let rate = *rate;
            let sds = s.adjoint().mul(s);
            let anti = CollectiveOperator::from_single_spin(space, &sds);
            k_op = k_op.add(&anti.scale(C64::new(-0.5 * rate, 0.0)))?;
            if s.s0 != C64::ZERO {
                let traceless = SingleSpinOperator::new(C64::ZERO, s.plus, s.minus, s.z);
                let t = CollectiveOperator::from_single_spin(space, &traceless);
                k_op = k_op.add(&t.scale(s.s0.conj() * rate))?;
                let scalar = 0.5 * n * s.s0.norm_sqr() * rate;
                k_op =
                    k_op.add(&CollectiveOperator::identity(space).scale(C64::new(scalar, 0.0)))?;
            }
            let t = s.spherical();
            for (i, row) in q.iter_mut().enumerate() {
                for (j, entry) in row.iter_mut().enumerate() {
                    *entry += t[i] * t[j].conj() * rate;
                }
            }
        }
        let pairs: Vec<_> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| q[i][j] != C64::ZERO)
            .map(|(i, j)| (i, j, q[i][j]))
            .collect();

        let sandwich_ops: Vec<_> = spec
            .collective_channels
            .iter()
            .filter(|(_, rate)| *rate != 0.0)
            .collect();
        let blocks = (0..space.num_blocks())
            .map(|k| BlockTerms {
                k_cols: k_op.column_nonzeros(k),
                sandwiches: sandwich_ops
                    .iter()
                    .map(|(op, rate)| (*rate, op.column_nonzeros(k)))
                    .collect(),
            })
            .collect();

        let tables = if pairs.is_empty() {
            Vec::new()
        } else {
            (0..space.num_blocks())
                .map(|k| local_table(space, k))
                .collect()
        };

        Ok(Generator {
            space: Arc::clone(space),
            blocks,
            pairs,
            tables,
        })
    }

    pub fn space(&self) -> &Arc<BlockSpace> {
        &self.space
    }

    /// Upper bound on the number of emissions of one source element of block `k`.
    pub(crate) fn emit_bound(&self, k: usize) -> usize {
        let terms = &self.blocks[k];
        let width = |cols: &Columns| cols.iter().map(Vec::len).max().unwrap_or(0);
        2 * width(&terms.k_cols)
            + terms
                .sandwiches
                .iter()
                .map(|(_, s)| width(s).pow(2))
                .sum::<usize>()
            + 3 * self.pairs.len()
    }

    /// Calls `emit(target, coefficient)` for every contribution of the source
    /// element `(row, col)` of block `k` to the derivative.
    #[inline]
    pub(crate) fn emit_column<F: FnMut(usize, C64)>(
        &self,
        k: usize,
        row: usize,
        col: usize,
        emit: &mut F,
    ) {
        let block = self.space.block(k);
        let terms = &self.blocks[k];

        for &(a, val) in &terms.k_cols[row] {
            emit(block.elem(a, col), val);
        }
        for &(b, val) in &terms.k_cols[col] {
            emit(block.elem(row, b), val.conj());
        }
        for (rate, s) in &terms.sandwiches {
            for &(a, sa) in &s[row] {
                for &(b, sb) in &s[col] {
                    emit(block.elem(a, b), sa * sb.conj() * *rate);
                }
            }
        }

        if self.pairs.is_empty() {
            return;
        }
        let table = &self.tables[k];
        let (r, c) = (row as i64, col as i64);
        for &(qi, ri, coef) in &self.pairs {
            let w = table.within * table.a[qi][row] * table.a[ri][col];
            if w != 0.0 {
                let (tr, tc) = (r - DQ[qi], c - DQ[ri]);
                emit(block.elem(tr as usize, tc as usize), coef * w);
            }
            if table.down != 0.0 {
                let w = table.down * table.b[qi][row] * table.b[ri][col];
                if w != 0.0 {
                    let target = self.space.block(k + 1);
                    let (tr, tc) = (r - 1 - DQ[qi], c - 1 - DQ[ri]);
                    emit(target.elem(tr as usize, tc as usize), coef * w);
                }
            }
            if table.up != 0.0 {
                let w = table.up * table.d[qi][row] * table.d[ri][col];
                if w != 0.0 {
                    let target = self.space.block(k - 1);
                    let (tr, tc) = (r + 1 - DQ[qi], c + 1 - DQ[ri]);
                    emit(target.elem(tr as usize, tc as usize), coef * w);
                }
            }
        }
    }

    /// `out = L(input)` on flat state vectors.
    pub fn apply_into(&self, input: &[C64], out: &mut [C64]) {
        debug_assert_eq!(input.len(), self.space.element_count());
        debug_assert_eq!(out.len(), self.space.element_count());
        out.fill(C64::ZERO);
        for (k, block) in self.space.blocks().iter().enumerate() {
            for col in 0..block.dim {
                for row in 0..block.dim {
                    let v = input[block.elem(row, col)];
                    if v == C64::ZERO {
                        continue;
                    }
                    self.emit_column(k, row, col, &mut |t, coef| out[t] += coef * v);
                }
            }
        }
    }

    pub fn apply(&self, state: &CollectiveState) -> Result<CollectiveState> {
        state.check_space(&self.space)?;
        let mut out = vec![C64::ZERO; self.space.element_count()];
        self.apply_into(state.data(), &mut out);
        CollectiveState::from_data(&self.space, out)
    }
}

fn local_table(space: &BlockSpace, k: usize) -> LocalTable {
    use CoefficientKind::{A, B, D};
    let block = space.block(k);
    let j = block.j.value();
    let log_d = block.log_degeneracy;
    let above = (space.log_alpha_above(k) - log_d).exp(); // alpha^{J+1} / d^J
    let within = if j > 0.0 {
        (1.0 + above * (2.0 * j + 1.0) / (j + 1.0)) / (2.0 * j)
    } else {
        0.0
    };
    let down = if j > 0.0 && k + 1 < space.num_blocks() {
        (block.log_alpha - log_d).exp() / (2.0 * j)
    } else {
        0.0
    };
    let up = if k > 0 {
        above / (2.0 * (j + 1.0))
    } else {
        0.0
    };

    let table = |kind| {
        Spherical::ALL.map(|q| {
            (0..block.dim)
                .map(|r| coefficient(kind, q, block.j, block.m_at(r)))
                .collect::<Vec<f64>>()
        })
    };
    LocalTable {
        within,
        down,
        up,
        a: table(A),
        b: table(B),
        d: table(D),
    }
}

/// `S rho S^dagger - {S^dagger S, rho}/2` for a collective jump operator.
pub fn apply_collective_lindblad(
    op: &CollectiveOperator,
    state: &CollectiveState,
) -> Result<CollectiveState> {
    op.check_space(state.space())?;
    let spec = LiouvillianSpec::new().with_collective(op.clone(), 1.0);
    Generator::new(&spec, state.space())?.apply(state)
}

/// `sum_n [s^(n) rho s^(n)^dagger - {(s^dagger s)^(n), rho}/2]`.
pub fn apply_local_symmetric_lindblad(
    s: &SingleSpinOperator,
    state: &CollectiveState,
) -> Result<CollectiveState> {
    let spec = LiouvillianSpec::new().with_local(*s, 1.0);
    Generator::new(&spec, state.space())?.apply(state)
}

/// `-i[H, rho] + sum rates * channels`.
pub fn apply_liouvillian(
    spec: &LiouvillianSpec,
    state: &CollectiveState,
) -> Result<CollectiveState> {
    Generator::new(spec, state.space())?.apply(state)
}
