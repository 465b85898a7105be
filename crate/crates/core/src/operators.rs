//! Block-diagonal collective operators and the single-particle basis.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::blockspace::{BlockSpace, HalfInt};
use crate::error::{Error, Result};
use crate::C64;

/// Cartesian and ladder components of the collective spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

/// Spherical index `q` of the single-particle basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spherical {
    Plus,
    Minus,
    Z,
}

impl Spherical {
    pub const ALL: [Spherical; 3] = [Spherical::Plus, Spherical::Minus, Spherical::Z];

    /// Change of M produced by this component.
    pub fn shift(self) -> HalfInt {
        match self {
            Spherical::Plus => HalfInt::from_int(1),
            Spherical::Minus => HalfInt::from_int(-1),
            Spherical::Z => HalfInt::ZERO,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Spherical::Plus => 0,
            Spherical::Minus => 1,
            Spherical::Z => 2,
        }
    }
}

/// A single-particle operator `s0*1 + plus*j_+ + minus*j_- + z*j_z`.
///
/// The basis uses spin-1/2 normalization: `j_z = diag(1/2, -1/2)` and ladder
/// operators with unit matrix elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSpinOperator {
    pub s0: C64,
    pub plus: C64,
    pub minus: C64,
    pub z: C64,
}

impl SingleSpinOperator {
    pub const fn new(s0: C64, plus: C64, minus: C64, z: C64) -> Self {
        SingleSpinOperator { s0, plus, minus, z }
    }

    pub fn identity() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::ZERO, C64::ZERO, C64::ZERO)
    }

    pub fn raising() -> Self {
        Self::new(C64::ZERO, C64::new(1.0, 0.0), C64::ZERO, C64::ZERO)
    }

    pub fn lowering() -> Self {
        Self::new(C64::ZERO, C64::ZERO, C64::new(1.0, 0.0), C64::ZERO)
    }

    pub fn jx() -> Self {
        Self::new(C64::ZERO, C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::ZERO)
    }

    pub fn jy() -> Self {
        Self::new(
            C64::ZERO,
            C64::new(0.0, -0.5),
            C64::new(0.0, 0.5),
            C64::ZERO,
        )
    }

    pub fn jz() -> Self {
        Self::new(C64::ZERO, C64::ZERO, C64::ZERO, C64::new(1.0, 0.0))
    }

    /// Decomposes a 2x2 matrix given in the `(up, down)` basis.
    pub fn from_matrix(m: [[C64; 2]; 2]) -> Self {
        Self::new(
            (m[0][0] + m[1][1]) * 0.5,
            m[0][1],
            m[1][0],
            m[0][0] - m[1][1],
        )
    }

    /// The 2x2 matrix in the `(up, down)` basis.
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        [
            [self.s0 + self.z * 0.5, self.plus],
            [self.minus, self.s0 - self.z * 0.5],
        ]
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.s0.conj(),
            self.minus.conj(),
            self.plus.conj(),
            self.z.conj(),
        )
    }

    /// Operator product `self * rhs`.
    pub fn mul(&self, rhs: &SingleSpinOperator) -> Self {
        let a = self.matrix();
        let b = rhs.matrix();
        let mut c = [[C64::ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self::from_matrix(c)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::new(
            self.s0 * factor,
            self.plus * factor,
            self.minus * factor,
            self.z * factor,
        )
    }

    /// Components `(s_+, s_-, s_z)` indexed by [`Spherical`].
    pub fn spherical(&self) -> [C64; 3] {
        [self.plus, self.minus, self.z]
    }

    pub fn component(&self, q: Spherical) -> C64 {
        self.spherical()[q.index()]
    }
}

/// Which family of coupling coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    /// Within-block transitions `J -> J`.
    A,
    /// Down-coupling `J -> J-1`.
    B,
    /// Up-coupling `J -> J+1`.
    D,
}

/// Coupling coefficient `A_q^{J,M}`, `B_q^{J,M}` or `D_q^{J,M}`.
///
/// Zero whenever a square-root argument is negative, the source `M` lies outside
/// block `J`, or the target `(J', M+q)` lies outside its block.
pub fn coefficient(kind: CoefficientKind, q: Spherical, j: HalfInt, m: HalfInt) -> f64 {
    let target_j = match kind {
        CoefficientKind::A => j,
        CoefficientKind::B => j - HalfInt::from_int(1),
        CoefficientKind::D => j + HalfInt::from_int(1),
    };
    if j.twice() < 0 || m.abs() > j || target_j.twice() < 0 || (m + q.shift()).abs() > target_j {
        return 0.0;
    }
    coefficient_raw(kind, q, j.value(), m.value())
}

/// Closed forms without the target-range guard; negative radicands give 0.
#[inline]
pub(crate) fn coefficient_raw(kind: CoefficientKind, q: Spherical, j: f64, m: f64) -> f64 {
    use CoefficientKind::*;
    use Spherical::*;
    match (kind, q) {
        (A, Plus) => sqrt0((j - m) * (j + m + 1.0)),
        (A, Minus) => sqrt0((j + m) * (j - m + 1.0)),
        (A, Z) => m,
        (B, Plus) => sqrt0((j - m) * (j - m - 1.0)),
        (B, Minus) => -sqrt0((j + m) * (j + m - 1.0)),
        (B, Z) => sqrt0((j + m) * (j - m)),
        (D, Plus) => -sqrt0((j + m + 1.0) * (j + m + 2.0)),
        (D, Minus) => sqrt0((j - m + 1.0) * (j - m + 2.0)),
        (D, Z) => sqrt0((j + m + 1.0) * (j - m + 1.0)),
    }
}

#[inline]
fn sqrt0(x: f64) -> f64 {
    if x > 0.0 {
        x.sqrt()
    } else {
        0.0
    }
}

/// A block-diagonal operator with one dense `(2J+1)x(2J+1)` block per J.
#[derive(Debug, Clone)]
pub struct CollectiveOperator {
    space: Arc<BlockSpace>,
    blocks: Vec<DMatrix<C64>>,
}

impl CollectiveOperator {
    pub fn zeros(space: &Arc<BlockSpace>) -> Self {
        let blocks = space
            .blocks()
            .iter()
            .map(|b| DMatrix::zeros(b.dim, b.dim))
            .collect();
        CollectiveOperator {
            space: Arc::clone(space),
            blocks,
        }
    }

    pub fn identity(space: &Arc<BlockSpace>) -> Self {
        let blocks = space
            .blocks()
            .iter()
            .map(|b| DMatrix::identity(b.dim, b.dim))
            .collect();
        CollectiveOperator {
            space: Arc::clone(space),
            blocks,
        }
    }

    pub fn from_blocks(space: &Arc<BlockSpace>, blocks: Vec<DMatrix<C64>>) -> Result<Self> {
        if blocks.len() != space.num_blocks() {
            return Err(Error::Domain(format!(
                "expected {} blocks, got {}",
                space.num_blocks(),
                blocks.len()
            )));
        }
        for (b, m) in space.blocks().iter().zip(&blocks) {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(Error::Domain(format!(
                    "block J={} must be {}x{}, got {}x{}",
                    b.j,
                    b.dim,
                    b.dim,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(CollectiveOperator {
            space: Arc::clone(space),
            blocks,
        })
    }

    /// Collective angular momentum component.
    pub fn generator(space: &Arc<BlockSpace>, axis: Axis) -> Self {
        let blocks = space
            .blocks()
            .iter()
            .map(|b| {
                let j = b.j.value();
                let mut plus = DMatrix::<C64>::zeros(b.dim, b.dim);
                let mut z = DMatrix::<C64>::zeros(b.dim, b.dim);
                for r in 0..b.dim {
                    let m = b.m_at(r).value();
                    z[(r, r)] = C64::new(m, 0.0);
                    if r > 0 {
                        plus[(r - 1, r)] = C64::new(((j - m) * (j + m + 1.0)).sqrt(), 0.0);
                    }
                }
                match axis {
                    Axis::Z => z,
                    Axis::Plus => plus,
                    Axis::Minus => plus.transpose(),
                    Axis::X => (&plus + plus.transpose()) * C64::new(0.5, 0.0),
                    Axis::Y => (&plus - plus.transpose()) * C64::new(0.0, -0.5),
                }
            })
            .collect();
        CollectiveOperator {
            space: Arc::clone(space),
            blocks,
        }
    }

    /// `sum_n s^(n)` for a single-particle operator `s`.
    pub fn from_single_spin(space: &Arc<BlockSpace>, s: &SingleSpinOperator) -> Self {
        let n = space.n_particles() as f64;
        let mut op = Self::identity(space).scale(s.s0 * n);
        for (axis, c) in [(Axis::Plus, s.plus), (Axis::Minus, s.minus), (Axis::Z, s.z)] {
            if c != C64::ZERO {
                op = op
                    .add(&Self::generator(space, axis).scale(c))
                    .expect("same space");
            }
        }
        op
    }

    /// Counter-twisting Hamiltonian `-i*coupling*(J_+^2 - J_-^2)`.
    pub fn counter_twisting(space: &Arc<BlockSpace>, coupling: f64) -> Self {
        let plus = Self::generator(space, Axis::Plus);
        let minus = Self::generator(space, Axis::Minus);
        let plus2 = plus.matmul(&plus).expect("same space");
        let minus2 = minus.matmul(&minus).expect("same space");
        let h = plus2
            .sub(&minus2)
            .expect("same space")
            .scale(C64::new(0.0, -coupling));
        debug_assert!(h.hermiticity_residual() <= 1e-12 * (1.0 + h.max_abs()));
        h
    }

    pub fn space(&self) -> &Arc<BlockSpace> {
        &self.space
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &DMatrix<C64> {
        &self.blocks[k]
    }

    pub(crate) fn check_space(&self, other: &BlockSpace) -> Result<()> {
        if self.space.n_particles() != other.n_particles() {
            return Err(Error::SpaceMismatch {
                left: self.space.n_particles(),
                right: other.n_particles(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &CollectiveOperator,
        f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>,
    ) -> Result<Self> {
        self.check_space(&other.space)?;
        Ok(CollectiveOperator {
            space: Arc::clone(&self.space),
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &CollectiveOperator) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CollectiveOperator) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn matmul(&self, other: &CollectiveOperator) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &CollectiveOperator) -> Result<Self> {
        self.zip_with(other, |a, b| a * b - b * a)
    }

    pub fn scale(&self, factor: C64) -> Self {
        CollectiveOperator {
            space: Arc::clone(&self.space),
            blocks: self.blocks.iter().map(|b| b * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        CollectiveOperator {
            space: Arc::clone(&self.space),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                (b - b.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Nonzero entries of block `k` grouped by column: `cols[c] = [(row, value)]`.
    pub(crate) fn column_nonzeros(&self, k: usize) -> Vec<Vec<(usize, C64)>> {
        let m = &self.blocks[k];
        (0..m.ncols())
            .map(|c| {
                (0..m.nrows())
                    .filter_map(|r| {
                        let v = m[(r, c)];
                        (v != C64::ZERO).then_some((r, v))
                    })
                    .collect()
            })
            .collect()
    }
}
