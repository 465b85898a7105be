use std::sync::Arc;

use crate::blockspace::{BlockSpace, HalfInt};
use crate::channels::{Generator, LiouvillianSpec};
use crate::error::{Error, Result};
use crate::C64;

/// Default ceiling on the bytes an assembled Liouvillian may occupy.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

const BYTES_PER_NONZERO: usize = std::mem::size_of::<C64>() + std::mem::size_of::<usize>();

/// Liouvillian in compressed-column form over the flat element layout.
///
/// Column `c` holds the derivative produced by a unit source at element `c`.
/// When assembled over a leading range of blocks the matrix is square over
/// that range; every emitted target then lies inside it.
#[derive(Debug, Clone)]
pub struct SparseLiouvillian {
    space: Arc<BlockSpace>,
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseLiouvillian {
    pub fn space(&self) -> &Arc<BlockSpace> {
        &self.space
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `(row, col, value)` for every stored nonzero, column by column.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1])
                .map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    /// `(J, M, M')` labels of a flat index.
    pub fn label(&self, flat: usize) -> Option<(HalfInt, HalfInt, HalfInt)> {
        let (k, r, c) = self.space.locate_element(flat)?;
        let b = self.space.block(k);
        Some((b.j, b.m_at(r), b.m_at(c)))
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.fill(C64::ZERO);
        for (c, &xc) in x.iter().enumerate() {
            if xc == C64::ZERO {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * xc;
            }
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::ZERO; self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest column 1-norm.
    pub fn norm_scale(&self) -> f64 {
        (0..self.dim)
            .map(|c| {
                self.values[self.col_ptr[c]..self.col_ptr[c + 1]]
                    .iter()
                    .map(|v| v.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|sum over diagonal rows of L[row, c]|` over all columns; zero
    /// for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let mut is_diag = vec![false; self.dim];
        for b in self.space.blocks() {
            for r in 0..b.dim {
                let i = b.elem(r, r);
                if i < self.dim {
                    is_diag[i] = true;
                }
            }
        }
        (0..self.dim)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .filter(|&p| is_diag[self.row_idx[p]])
                    .map(|p| self.values[p])
                    .sum::<C64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// Compressed columns of `L + shift * I`.
    pub(crate) fn shifted_parts(&self, shift: C64) -> (Vec<usize>, Vec<usize>, Vec<C64>) {
        let mut col_ptr = Vec::with_capacity(self.dim + 1);
        let mut rows = Vec::with_capacity(self.nnz() + self.dim);
        let mut vals = Vec::with_capacity(self.nnz() + self.dim);
        col_ptr.push(0);
        for c in 0..self.dim {
            let mut placed = false;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                if !placed && r >= c {
                    if r == c {
                        rows.push(r);
                        vals.push(self.values[p] + shift);
                        placed = true;
                        continue;
                    }
                    rows.push(c);
                    vals.push(shift);
                    placed = true;
                }
                rows.push(r);
                vals.push(self.values[p]);
            }
            if !placed {
                rows.push(c);
                vals.push(shift);
            }
            col_ptr.push(rows.len());
        }
        (col_ptr, rows, vals)
    }
}

/// Assembles the full Liouvillian under [`DEFAULT_MEMORY_BUDGET`].
pub fn assemble_liouvillian(
    spec: &LiouvillianSpec,
    space: &Arc<BlockSpace>,
) -> Result<SparseLiouvillian> {
    assemble_liouvillian_with_budget(spec, space, DEFAULT_MEMORY_BUDGET)
}

pub fn assemble_liouvillian_with_budget(
    spec: &LiouvillianSpec,
    space: &Arc<BlockSpace>,
    budget_bytes: usize,
) -> Result<SparseLiouvillian> {
    let gen = Generator::new(spec, space)?;
    assemble_leading(&gen, space.num_blocks(), budget_bytes)
}

/// Assembles the columns belonging to blocks `0..n_blocks`. The caller
/// guarantees that no emission leaves this range.
pub(crate) fn assemble_leading(
    gen: &Generator,
    n_blocks: usize,
    budget_bytes: usize,
) -> Result<SparseLiouvillian> {
    let space = gen.space();
    let dim: usize = space.blocks()[..n_blocks]
        .iter()
        .map(|b| b.elem_len())
        .sum();

    let bound: usize = (0..n_blocks)
        .map(|k| space.block(k).elem_len().saturating_mul(gen.emit_bound(k)))
        .fold(0usize, usize::saturating_add);
    let estimate = bound
        .saturating_mul(BYTES_PER_NONZERO)
        .saturating_add((dim + 1) * std::mem::size_of::<usize>());
    if estimate > budget_bytes {
        return Err(Error::Resource(format!(
            "Liouvillian for N={} needs up to {estimate} bytes, budget is {budget_bytes}",
            space.n_particles()
        )));
    }

    let mut col_ptr = Vec::with_capacity(dim + 1);
    let mut row_idx = Vec::with_capacity(bound);
    let mut values = Vec::with_capacity(bound);
    let mut scratch: Vec<(usize, C64)> = Vec::new();
    col_ptr.push(0);
    for k in 0..n_blocks {
        let b = space.block(k);
        for c in 0..b.dim {
            for r in 0..b.dim {
                scratch.clear();
                gen.emit_column(k, r, c, &mut |t, v| scratch.push((t, v)));
                scratch.sort_unstable_by_key(|e| e.0);
                let mut i = 0;
                while i < scratch.len() {
                    let t = scratch[i].0;
                    let mut acc = C64::ZERO;
                    while i < scratch.len() && scratch[i].0 == t {
                        acc += scratch[i].1;
                        i += 1;
                    }
                    if acc != C64::ZERO {
                        debug_assert!(t < dim, "emission outside assembled range");
                        row_idx.push(t);
                        values.push(acc);
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
    }
    Ok(SparseLiouvillian {
        space: Arc::clone(space),
        dim,
        col_ptr,
        row_idx,
        values,
    })
}
