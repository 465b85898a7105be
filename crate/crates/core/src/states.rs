//! Collective density operators: a direct sum of per-J blocks.

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::blockspace::BlockSpace;
use crate::error::{Error, Result};
use crate::operators::{Axis, CollectiveOperator};
use crate::C64;

/// Hermiticity and trace tolerance used by [`CollectiveState::validate`].
pub const STATE_TOLERANCE: f64 = 1e-10;
/// Smallest admissible block eigenvalue.
pub const PSD_TOLERANCE: f64 = -1e-9;

/// Block-diagonal density operator `rho = sum_J rho_J`.
///
/// `tr rho_J` is the population of the whole J sector (all degenerate copies
/// together), so `sum_J tr rho_J = 1`. Storage follows the layout described in
/// [`crate::blockspace`].
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveState {
    space: Arc<BlockSpace>,
    data: Vec<C64>,
}

impl CollectiveState {
    pub fn zeros(space: &Arc<BlockSpace>) -> Self {
        CollectiveState {
            space: Arc::clone(space),
            data: vec![C64::ZERO; space.element_count()],
        }
    }

    pub fn from_data(space: &Arc<BlockSpace>, data: Vec<C64>) -> Result<Self> {
        if data.len() != space.element_count() {
            return Err(Error::Domain(format!(
                "state vector has {} elements, layout needs {}",
                data.len(),
                space.element_count()
            )));
        }
        Ok(CollectiveState {
            space: Arc::clone(space),
            data,
        })
    }

    pub fn from_blocks(space: &Arc<BlockSpace>, blocks: &[DMatrix<C64>]) -> Result<Self> {
        if blocks.len() != space.num_blocks() {
            return Err(Error::Domain(format!(
                "expected {} blocks, got {}",
                space.num_blocks(),
                blocks.len()
            )));
        }
        let mut state = Self::zeros(space);
        for (k, m) in blocks.iter().enumerate() {
            let dim = space.block(k).dim;
            if m.shape() != (dim, dim) {
                return Err(Error::Domain(format!("block {k} must be {dim}x{dim}")));
            }
            state.block_mut(k).copy_from(m);
        }
        Ok(state)
    }

    /// Spin coherent state `exp(-i phi J_z) exp(-i theta J_y) |N/2, N/2>`.
    pub fn coherent(space: &Arc<BlockSpace>, theta: f64, phi: f64) -> Self {
        let jy = CollectiveOperator::generator(space, Axis::Y);
        let top = space.top();
        let rotation = (jy.block(0) * C64::new(0.0, -theta)).exp();
        let mut ket: Vec<C64> = rotation.column(0).iter().copied().collect();
        for (r, amp) in ket.iter_mut().enumerate() {
            let m = top.m_at(r).value();
            *amp *= C64::from_polar(1.0, -phi * m);
        }
        let mut state = Self::zeros(space);
        {
            let mut block = state.block_mut(0);
            for c in 0..top.dim {
                for r in 0..top.dim {
                    block[(r, c)] = ket[r] * ket[c].conj();
                }
            }
        }
        state
    }

    /// Completely mixed symmetric state: identity on the top block, divided by N+1.
    pub fn mixed_symmetric(space: &Arc<BlockSpace>) -> Self {
        let mut state = Self::zeros(space);
        let dim = space.top().dim;
        let weight = C64::new(1.0 / dim as f64, 0.0);
        for r in 0..dim {
            state.block_mut(0)[(r, r)] = weight;
        }
        state
    }

    /// Completely mixed state of all N spins: diagonal entries `2^-N d_N^J`.
    pub fn mixed_collective(space: &Arc<BlockSpace>) -> Self {
        let mut state = Self::zeros(space);
        let log_norm = space.n_particles() as f64 * std::f64::consts::LN_2;
        for (k, b) in space.blocks().iter().enumerate() {
            let weight = C64::new((b.log_degeneracy - log_norm).exp(), 0.0);
            let mut block = state.block_mut(k);
            for r in 0..b.dim {
                block[(r, r)] = weight;
            }
        }
        state
    }

    pub fn space(&self) -> &Arc<BlockSpace> {
        &self.space
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn block(&self, k: usize) -> DMatrixView<'_, C64> {
        let b = self.space.block(k);
        DMatrixView::from_slice(
            &self.data[b.elem_offset..b.elem_offset + b.elem_len()],
            b.dim,
            b.dim,
        )
    }

    pub fn block_mut(&mut self, k: usize) -> DMatrixViewMut<'_, C64> {
        let b = *self.space.block(k);
        DMatrixViewMut::from_slice(
            &mut self.data[b.elem_offset..b.elem_offset + b.elem_len()],
            b.dim,
            b.dim,
        )
    }

    pub fn block_trace(&self, k: usize) -> C64 {
        let b = self.space.block(k);
        (0..b.dim).map(|r| self.data[b.elem(r, r)]).sum()
    }

    pub fn trace(&self) -> C64 {
        (0..self.space.num_blocks())
            .map(|k| self.block_trace(k))
            .sum()
    }

    /// Replaces every block by `(rho_J + rho_J^dagger) / 2`.
    pub fn hermitize(&mut self) {
        hermitize_slice(&self.space, &mut self.data);
    }

    pub fn scale(&mut self, factor: C64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: C64, other: &CollectiveState) -> Result<()> {
        self.check_space(&other.space)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    /// Largest elementwise distance between two states.
    pub fn max_abs_diff(&self, other: &CollectiveState) -> Result<f64> {
        self.check_space(&other.space)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in self.space.blocks() {
            for c in 0..b.dim {
                for r in 0..=c {
                    let d = self.data[b.elem(r, c)] - self.data[b.elem(c, r)].conj();
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }

    /// Smallest eigenvalue over all (Hermitian parts of the) blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.space.num_blocks())
            .map(|k| {
                let m = self.block(k).into_owned();
                let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
                h.symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_residual();
        if herm > STATE_TOLERANCE {
            return Err(Error::Numeric(format!(
                "state not Hermitian: residual {herm:e}"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_TOLERANCE {
            return Err(Error::Numeric(format!("state trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < PSD_TOLERANCE {
            return Err(Error::Numeric(format!(
                "state not positive: eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    pub(crate) fn check_space(&self, other: &BlockSpace) -> Result<()> {
        if self.space.n_particles() != other.n_particles() {
            return Err(Error::SpaceMismatch {
                left: other.n_particles(),
                right: self.space.n_particles(),
            });
        }
        Ok(())
    }
}

pub(crate) fn hermitize_slice(space: &BlockSpace, data: &mut [C64]) {
    for b in space.blocks() {
        for c in 0..b.dim {
            for r in 0..c {
                let (i, j) = (b.elem(r, c), b.elem(c, r));
                let avg = (data[i] + data[j].conj()) * 0.5;
                data[i] = avg;
                data[j] = avg.conj();
            }
            let d = b.elem(c, c);
            data[d] = C64::new(data[d].re, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn space(n: usize) -> Arc<BlockSpace> {
        Arc::new(BlockSpace::new(n).unwrap())
    }

    fn expect(state: &CollectiveState, op: &CollectiveOperator) -> C64 {
        (0..state.space().num_blocks())
            .map(|k| (state.block(k) * op.block(k)).trace())
            .sum()
    }

    #[test]
    fn identity_rotation_is_z_polarized() {
        let s = space(6);
        let rho = CollectiveState::coherent(&s, 0.0, 0.0);
        for (i, z) in rho.data().iter().enumerate() {
            let want = if i == 0 { 1.0 } else { 0.0 };
            assert!((z - C64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn flipped_coherent_state() {
        for n in [1usize, 4, 9, 50] {
            let s = space(n);
            let rho = CollectiveState::coherent(&s, PI, 0.3);
            let jz = CollectiveOperator::generator(&s, Axis::Z);
            let mean = expect(&rho, &jz);
            assert!((mean.re + n as f64 / 2.0).abs() < 1e-10, "N={n}: {mean}");
            rho.validate().unwrap();
        }
    }

    #[test]
    fn rotation_preserves_trace_and_support() {
        let s = space(11);
        for (theta, phi) in [(0.3, 1.1), (1.7, -0.4), (2.9, 2.0)] {
            let rho = CollectiveState::coherent(&s, theta, phi);
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
            assert!((rho.block_trace(0).re - 1.0).abs() < 1e-10);
            let top = rho.block(0).into_owned();
            let purity = (&top * &top).trace().re;
            assert!((purity - 1.0).abs() < 1e-10);
            assert!(rho.data()[s.top().elem_len()..]
                .iter()
                .all(|z| *z == C64::ZERO));
        }
    }

    #[test]
    fn mixed_collective_entries() {
        let s = space(4);
        let rho = CollectiveState::mixed_collective(&s);
        let b = s.block(1);
        for r in 0..3 {
            assert!((rho.data()[b.elem(r, r)].re - 3.0 / 16.0).abs() < 1e-15);
        }
        for n in [1usize, 17, 120, 256] {
            let rho = CollectiveState::mixed_collective(&space(n));
            assert!((rho.trace().re - 1.0).abs() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn mixed_states_coincide_for_one_spin() {
        let s = space(1);
        assert_eq!(
            CollectiveState::mixed_symmetric(&s),
            CollectiveState::mixed_collective(&s)
        );
    }

    #[test]
    fn validate_flags_bad_states() {
        let s = space(2);
        let mut rho = CollectiveState::mixed_collective(&s);
        rho.validate().unwrap();
        rho.scale(C64::new(2.0, 0.0));
        assert!(rho.validate().is_err());

        let mut rho = CollectiveState::zeros(&s);
        rho.block_mut(0)[(0, 0)] = C64::new(1.5, 0.0);
        rho.block_mut(0)[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(rho.validate().is_err());

        let mut rho = CollectiveState::mixed_collective(&s);
        rho.block_mut(0)[(0, 1)] = C64::new(0.0, 0.1);
        assert!(rho.validate().is_err());
        rho.hermitize();
        rho.validate().unwrap();
    }
}
