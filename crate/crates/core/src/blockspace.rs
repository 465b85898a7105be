//! Total-angular-momentum block layout for N spin-1/2 particles.
//!
//! The N-spin Hilbert space splits into irreps labelled by total angular
//! momentum J, from `(N mod 2)/2` up to `N/2`, each appearing `d_N^J` times.
//! A collective state keeps one `(2J+1)x(2J+1)` block per J; degeneracy only
//! enters through `d_N^J` and the reduced degeneracies
//! `alpha_N^J = sum_{J' >= J} d_N^{J'}`.
//!
//! Canonical ordering used everywhere (operators, states, the sparse
//! Liouvillian, and every output file): descending J, then descending M.
//! Within a block, density-matrix elements are stored column-major, so the
//! element `(M, M')` of block `J` lives at `elem_offset + col(M') * dim + row(M)`
//! with `row(M) = J - M`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest ensemble accepted by [`BlockSpace::new`].
pub const DEFAULT_MAX_PARTICLES: usize = 256;

/// A half-integer quantum number stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(value: i32) -> Self {
        HalfInt(2 * value)
    }

    /// Parses a real number that must be an exact multiple of 1/2.
    pub fn from_f64(value: f64) -> Option<Self> {
        let twice = (2.0 * value).round();
        if (2.0 * value - twice).abs() > 1e-9 || twice.abs() > i32::MAX as f64 {
            return None;
        }
        Some(HalfInt(twice as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub const fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// One total-J block of the layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub j: HalfInt,
    /// `2J + 1`.
    pub dim: usize,
    /// Offset of `|J, M=J>` in the ket layout.
    pub ket_offset: usize,
    /// Offset of element `(M=J, M'=J)` in the density-matrix layout.
    pub elem_offset: usize,
    /// `ln d_N^J`.
    pub log_degeneracy: f64,
    /// `d_N^J` (overflows to infinity for very large N).
    pub degeneracy: f64,
    /// `ln alpha_N^J`.
    pub log_alpha: f64,
}

impl Block {
    /// Row/column index of magnetic number `m` inside this block.
    pub fn m_index(&self, m: HalfInt) -> Option<usize> {
        let diff = self.j.twice() - m.twice();
        if m.abs() > self.j || diff % 2 != 0 {
            return None;
        }
        Some((diff / 2) as usize)
    }

    /// Magnetic number at row/column `index`.
    pub fn m_at(&self, index: usize) -> HalfInt {
        self.j - HalfInt::from_int(index as i32)
    }

    /// Flat density-matrix offset of the block element in row `row`, column `col`.
    #[inline]
    pub fn elem(&self, row: usize, col: usize) -> usize {
        self.elem_offset + col * self.dim + row
    }

    pub fn elem_len(&self) -> usize {
        self.dim * self.dim
    }
}

/// Immutable block layout of an N-spin ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpace {
    n_particles: usize,
    blocks: Vec<Block>,
    ket_dim: usize,
    element_count: usize,
}

impl BlockSpace {
    pub fn new(n_particles: usize) -> Result<Self> {
        Self::with_max(n_particles, DEFAULT_MAX_PARTICLES)
    }

    pub fn with_max(n_particles: usize, max_particles: usize) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::Domain("number of particles must be positive".into()));
        }
        if n_particles > max_particles {
            return Err(Error::Domain(format!(
                "N={n_particles} exceeds the configured maximum {max_particles}"
            )));
        }
        let log_fact = log_factorials(n_particles + 1);
        let n = n_particles as i32;

        let mut blocks = Vec::with_capacity(n_particles / 2 + 1);
        let mut ket_offset = 0;
        let mut elem_offset = 0;
        let mut log_alpha = f64::NEG_INFINITY;
        let mut two_j = n;
        while two_j >= 0 {
            let dim = (two_j + 1) as usize;
            let lower = ((n - two_j) / 2) as usize; // N/2 - J
            let upper = ((n + two_j) / 2 + 1) as usize; // N/2 + J + 1
            let log_degeneracy =
                log_fact[n_particles] + (dim as f64).ln() - log_fact[lower] - log_fact[upper];
            log_alpha = log_add_exp(log_alpha, log_degeneracy);
            blocks.push(Block {
                j: HalfInt::from_twice(two_j),
                dim,
                ket_offset,
                elem_offset,
                log_degeneracy,
                degeneracy: log_degeneracy.exp(),
                log_alpha,
            });
            ket_offset += dim;
            elem_offset += dim * dim;
            two_j -= 2;
        }

        Ok(BlockSpace {
            n_particles,
            blocks,
            ket_dim: ket_offset,
            element_count: elem_offset,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &Block {
        &self.blocks[k]
    }

    /// The symmetric block `J = N/2`.
    pub fn top(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn j_max(&self) -> HalfInt {
        self.blocks[0].j
    }

    pub fn j_min(&self) -> HalfInt {
        self.blocks[self.blocks.len() - 1].j
    }

    pub fn j_values(&self) -> Vec<HalfInt> {
        self.blocks.iter().map(|b| b.j).collect()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    pub fn log_degeneracies(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.log_degeneracy).collect()
    }

    pub fn degeneracies(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.degeneracy).collect()
    }

    pub fn log_alphas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.log_alpha).collect()
    }

    /// `ln alpha_N^{J+1}` for block `k`, `-inf` for the top block.
    pub fn log_alpha_above(&self, k: usize) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.blocks[k - 1].log_alpha
        }
    }

    /// Number of kets, `sum_J (2J+1)`.
    pub fn ket_dim(&self) -> usize {
        self.ket_dim
    }

    /// Number of stored density-matrix elements, `sum_J (2J+1)^2`.
    pub fn element_count(&self) -> usize {
        self.element_count
    }

    /// Position of the block with total angular momentum `j`.
    pub fn position_of(&self, j: HalfInt) -> Option<usize> {
        let two_jmax = self.blocks[0].j.twice();
        let diff = two_jmax - j.twice();
        if j.twice() < 0 || diff < 0 || diff % 2 != 0 {
            return None;
        }
        let k = (diff / 2) as usize;
        (k < self.blocks.len()).then_some(k)
    }

    /// Flat ket offset of `|J, M>`.
    pub fn block_index(&self, j: HalfInt, m: HalfInt) -> Result<usize> {
        let k = self.position_of(j).ok_or_else(|| {
            Error::Index(format!("J={j} is not a block of N={}", self.n_particles))
        })?;
        let block = &self.blocks[k];
        let row = block
            .m_index(m)
            .ok_or_else(|| Error::Index(format!("M={m} is outside block J={j}")))?;
        Ok(block.ket_offset + row)
    }

    /// Inverse of the density-matrix layout: `(block, row, col)` of a flat offset.
    pub fn locate_element(&self, flat: usize) -> Option<(usize, usize, usize)> {
        if flat >= self.element_count {
            return None;
        }
        let k = self
            .blocks
            .partition_point(|b| b.elem_offset <= flat)
            .saturating_sub(1);
        let b = &self.blocks[k];
        let local = flat - b.elem_offset;
        Some((k, local % b.dim, local / b.dim))
    }
}

/// Exact `d_N^J = C(N, N/2-J) - C(N, N/2-J-1)` in integer arithmetic.
///
/// Returns `None` when an intermediate value overflows `u128` (roughly N > 120)
/// or when `j` is not a valid total angular momentum for `n`.
pub fn exact_degeneracy(n: usize, j: HalfInt) -> Option<u128> {
    let two_j = j.twice();
    if two_j < 0 || two_j as usize > n || (n as i32 - two_j) % 2 != 0 {
        return None;
    }
    let k = (n - two_j as usize) / 2;
    let upper = binomial(n, k)?;
    let lower = if k == 0 { 0 } else { binomial(n, k - 1)? };
    Some(upper - lower)
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(c)
}

/// `ln k!` for `k = 0..=max`.
fn log_factorials(max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln sum_i e^{x_i}`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + values.iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
}
