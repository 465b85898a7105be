//! Brute-force reference in the full `2^N`-dimensional tensor-product space.
//!
//! Nothing here touches the block machinery except the 2x2 single-spin
//! primitives. Basis index bit `n` set means spin `n` is down, so index 0 is
//! the fully polarized state.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::blockspace::BlockSpace;
use crate::channels::LiouvillianSpec;
use crate::dynamics::{evolve, integrate_samples, IntegratorConfig};
use crate::error::{Error, Result};
use crate::observables::{log10_purity, ObservableSet};
use crate::operators::{CollectiveOperator, SingleSpinOperator};
use crate::states::CollectiveState;
use crate::C64;

/// Largest particle number the full-space path accepts.
pub const MAX_FULL_PARTICLES: usize = 10;

/// Dense density matrix of N spins.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    n: usize,
    rho: DMatrix<C64>,
}

fn check_size(n: usize) -> Result<usize> {
    if n == 0 || n > MAX_FULL_PARTICLES {
        return Err(Error::Resource(format!(
            "full-space oracle supports 1..={MAX_FULL_PARTICLES} particles, got {n}"
        )));
    }
    Ok(1 << n)
}

impl FullState {
    pub fn from_matrix(n: usize, rho: DMatrix<C64>) -> Result<Self> {
        let dim = check_size(n)?;
        if rho.shape() != (dim, dim) {
            return Err(Error::Domain(format!(
                "full state for N={n} must be {dim}x{dim}"
            )));
        }
        Ok(FullState { n, rho })
    }

    /// Every spin up.
    pub fn polarized(n: usize) -> Result<Self> {
        let dim = check_size(n)?;
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        Ok(FullState { n, rho })
    }

    /// `I / 2^N`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        let dim = check_size(n)?;
        Ok(FullState {
            n,
            rho: DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0),
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        (&self.rho * op).trace()
    }
}

/// `sum_n s^(n)` as a dense matrix.
pub fn full_collective_operator(n: usize, s: &SingleSpinOperator) -> Result<DMatrix<C64>> {
    let dim = check_size(n)?;
    let m = s.matrix();
    let mut out = DMatrix::zeros(dim, dim);
    for site in 0..n {
        let bit = 1usize << site;
        for j in 0..dim {
            let bj = usize::from(j & bit != 0);
            for (bi, row) in m.iter().enumerate() {
                let i = (j & !bit) | (bi * bit);
                out[(i, j)] += row[bj];
            }
        }
    }
    Ok(out)
}

/// `-i*coupling*(J_+^2 - J_-^2)` built from embedded ladder operators.
pub fn full_counter_twisting(n: usize, coupling: f64) -> Result<DMatrix<C64>> {
    let plus = full_collective_operator(n, &SingleSpinOperator::raising())?;
    let minus = full_collective_operator(n, &SingleSpinOperator::lowering())?;
    Ok((&plus * &plus - &minus * &minus) * C64::new(0.0, -coupling))
}

/// `sum_n [s^(n) rho s^(n)^dagger - {(s^dagger s)^(n), rho}/2]`, site by site.
pub fn full_local_lindblad(s: &SingleSpinOperator, state: &FullState) -> Result<FullState> {
    let gen = FullGenerator {
        n: state.n,
        local: local_superoperator(&[(*s, 1.0)]),
        kernel: None,
        sandwiches: Vec::new(),
    };
    gen.derivative(state)
}

/// `S rho S^dagger - {S^dagger S, rho}/2` with dense matrices.
pub fn full_collective_lindblad(op: &DMatrix<C64>, state: &FullState) -> Result<FullState> {
    if op.shape() != state.rho.shape() {
        return Err(Error::Domain("operator and state dimensions differ".into()));
    }
    let sd = op.adjoint();
    let sds = &sd * op;
    let rho = &state.rho;
    let d = op * rho * &sd - (&sds * rho + rho * &sds) * C64::new(0.5, 0.0);
    FullState::from_matrix(state.n, d)
}

/// `tr(P_J rho)` in descending J, from the eigenprojectors of the full `J^2`.
pub fn full_block_traces(state: &FullState) -> Result<Vec<f64>> {
    Ok(IrrepProjector::new(state.n)?.block_traces(&state.rho))
}

/// Eigenbasis of `J^2` grouped by total spin.
struct IrrepProjector {
    /// Columns are real eigenvectors.
    vectors: DMatrix<f64>,
    /// Index into descending-J order for every column.
    labels: Vec<usize>,
    n_blocks: usize,
}

impl IrrepProjector {
    fn new(n: usize) -> Result<Self> {
        let jsq = full_total_spin_squared(n)?;
        let real = jsq.map(|z| z.re);
        debug_assert!(jsq.iter().all(|z| z.im.abs() < 1e-12));
        let eig = nalgebra::SymmetricEigen::new(real);
        let j_max = n as f64 / 2.0;
        let labels = eig
            .eigenvalues
            .iter()
            .map(|&lambda| {
                let j = (-1.0 + (1.0 + 4.0 * lambda.max(0.0)).sqrt()) / 2.0;
                let twice = (2.0 * j).round();
                ((2.0 * j_max - twice) / 2.0).round() as usize
            })
            .collect();
        Ok(IrrepProjector {
            vectors: eig.eigenvectors,
            labels,
            n_blocks: n / 2 + 1,
        })
    }

    fn block_traces(&self, rho: &DMatrix<C64>) -> Vec<f64> {
        let mut out = vec![0.0; self.n_blocks];
        let v = self.vectors.map(|x| C64::new(x, 0.0));
        let projected = v.transpose() * rho * &v;
        for (k, &label) in self.labels.iter().enumerate() {
            out[label] += projected[(k, k)].re;
        }
        out
    }
}

fn full_total_spin_squared(n: usize) -> Result<DMatrix<C64>> {
    let mut total = DMatrix::zeros(1 << n, 1 << n);
    for s in [
        SingleSpinOperator::jx(),
        SingleSpinOperator::jy(),
        SingleSpinOperator::jz(),
    ] {
        let j = full_collective_operator(n, &s)?;
        total += &j * &j;
    }
    Ok(total)
}

/// Compressed-row sparse matrix for the trajectory engine.
#[derive(Debug, Clone)]
struct Csr {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let mut row_ptr = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != C64::ZERO {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    /// `out += A x` with `x`, `out` column-major `dim x dim`.
    fn left_mul_add(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let xc = &x[col * d..(col + 1) * d];
            let oc = &mut out[col * d..(col + 1) * d];
            for (i, o) in oc.iter_mut().enumerate() {
                let mut acc = C64::ZERO;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[p] * xc[self.cols[p]];
                }
                *o += acc;
            }
        }
    }

    /// `out += x A^dagger`.
    fn right_mul_adjoint_add(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        // (x A^dagger)[:, i] = sum_k x[:, k] conj(A[i, k])
        for i in 0..d {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let k = self.cols[p];
                let a = self.vals[p].conj();
                let (src, dst) = (k * d, i * d);
                for r in 0..d {
                    out[dst + r] += x[src + r] * a;
                }
            }
        }
    }
}

/// Single-site superoperator `T[a][b][c][d]` mapping `X[c][d]` to `X'[a][b]`.
type SiteMap = [[[[C64; 2]; 2]; 2]; 2];

fn local_superoperator(channels: &[(SingleSpinOperator, f64)]) -> Option<SiteMap> {
    let mut t = [[[[C64::ZERO; 2]; 2]; 2]; 2];
    let mut any = false;
    for (s, rate) in channels {
        if *rate == 0.0 {
            continue;
        }
        any = true;
        let m = s.matrix();
        let mut p = [[C64::ZERO; 2]; 2];
        for (a, row) in p.iter_mut().enumerate() {
            for (b, e) in row.iter_mut().enumerate() {
                *e = (0..2).map(|k| m[k][a].conj() * m[k][b]).sum();
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let mut v = m[a][c] * m[b][d].conj();
                        if b == d {
                            v -= p[a][c] * 0.5;
                        }
                        if a == c {
                            v -= p[d][b] * 0.5;
                        }
                        t[a][b][c][d] += v * *rate;
                    }
                }
            }
        }
    }
    any.then_some(t)
}

/// Matrix-free generator on column-major `2^N x 2^N` density matrices.
struct FullGenerator {
    n: usize,
    local: Option<SiteMap>,
    /// `K = -iH - sum rate S^dagger S / 2`, applied as `K rho + rho K^dagger`.
    kernel: Option<Csr>,
    /// `(rate, S)` for `rate * S rho S^dagger`.
    sandwiches: Vec<(f64, Csr)>,
}

impl FullGenerator {
    fn new(
        n: usize,
        hamiltonian: Option<&DMatrix<C64>>,
        collective: &[(DMatrix<C64>, f64)],
        local: &[(SingleSpinOperator, f64)],
    ) -> Result<Self> {
        let dim = check_size(n)?;
        let mut k = DMatrix::<C64>::zeros(dim, dim);
        if let Some(h) = hamiltonian {
            k -= h * C64::new(0.0, 1.0);
        }
        let mut sandwiches = Vec::new();
        for (s, rate) in collective {
            k -= s.adjoint() * s * C64::new(0.5 * rate, 0.0);
            sandwiches.push((*rate, Csr::from_dense(s)));
        }
        let kernel = k
            .iter()
            .any(|z| *z != C64::ZERO)
            .then(|| Csr::from_dense(&k));
        Ok(FullGenerator {
            n,
            local: local_superoperator(local),
            kernel,
            sandwiches,
        })
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        out.fill(C64::ZERO);
        let d = 1usize << self.n;
        if let Some(k) = &self.kernel {
            k.left_mul_add(x, out);
            // rho K^dagger
            k.right_mul_adjoint_add(x, out);
        }
        let mut tmp = vec![C64::ZERO; x.len()];
        for (rate, s) in &self.sandwiches {
            tmp.fill(C64::ZERO);
            s.left_mul_add(x, &mut tmp);
            let scaled: Vec<C64> = tmp.iter().map(|v| v * *rate).collect();
            s.right_mul_adjoint_add(&scaled, out);
        }
        if let Some(t) = &self.local {
            for site in 0..self.n {
                let bit = 1usize << site;
                for j0 in (0..d).filter(|j| j & bit == 0) {
                    let js = [j0, j0 | bit];
                    for i0 in (0..d).filter(|i| i & bit == 0) {
                        let is = [i0, i0 | bit];
                        let mut block = [[C64::ZERO; 2]; 2];
                        for (c, &i) in is.iter().enumerate() {
                            for (dd, &j) in js.iter().enumerate() {
                                block[c][dd] = x[j * d + i];
                            }
                        }
                        for a in 0..2 {
                            for b in 0..2 {
                                let tab = &t[a][b];
                                let v = tab[0][0] * block[0][0]
                                    + tab[0][1] * block[0][1]
                                    + tab[1][0] * block[1][0]
                                    + tab[1][1] * block[1][1];
                                out[js[b] * d + is[a]] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn derivative(&self, state: &FullState) -> Result<FullState> {
        let x = state.rho.as_slice();
        let mut out = vec![C64::ZERO; x.len()];
        self.apply(x, &mut out);
        let d = 1 << self.n;
        FullState::from_matrix(self.n, DMatrix::from_vec(d, d, out))
    }
}

/// Channel configurations exercised by the trajectory comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSet {
    /// `L^S[j_+]`.
    Pumping,
    /// `L^S[j_x] + L^S[j_y] + L^S[j_z]`.
    SymmetricDepolarizing,
    /// `L^C[J_x] + L^C[J_y] + L^C[J_z]`.
    CollectiveDepolarizing,
    /// Counter-twisting with coupling `1/N` plus symmetric depolarizing at rate `4/N`.
    TwistingSymmetric,
}

impl ChannelSet {
    pub const ALL: [ChannelSet; 4] = [
        ChannelSet::Pumping,
        ChannelSet::SymmetricDepolarizing,
        ChannelSet::CollectiveDepolarizing,
        ChannelSet::TwistingSymmetric,
    ];

    fn rates(self, n: usize) -> (f64, f64) {
        match self {
            ChannelSet::TwistingSymmetric => (1.0 / n as f64, 4.0 / n as f64),
            _ => (0.0, 1.0),
        }
    }

    pub fn block_spec(self, space: &Arc<BlockSpace>) -> LiouvillianSpec {
        let (coupling, rate) = self.rates(space.n_particles());
        match self {
            ChannelSet::Pumping => LiouvillianSpec::symmetric_polarizing(rate),
            ChannelSet::SymmetricDepolarizing => LiouvillianSpec::symmetric_depolarizing(rate),
            ChannelSet::CollectiveDepolarizing => {
                LiouvillianSpec::collective_depolarizing(space, rate)
            }
            ChannelSet::TwistingSymmetric => LiouvillianSpec::symmetric_depolarizing(rate)
                .with_hamiltonian(CollectiveOperator::counter_twisting(space, coupling)),
        }
    }

    fn full_generator(self, n: usize) -> Result<FullGenerator> {
        let (coupling, rate) = self.rates(n);
        let depolarizing = [
            SingleSpinOperator::jx(),
            SingleSpinOperator::jy(),
            SingleSpinOperator::jz(),
        ]
        .map(|s| (s, rate));
        match self {
            ChannelSet::Pumping => {
                FullGenerator::new(n, None, &[], &[(SingleSpinOperator::raising(), rate)])
            }
            ChannelSet::SymmetricDepolarizing => FullGenerator::new(n, None, &[], &depolarizing),
            ChannelSet::CollectiveDepolarizing => {
                let ops = depolarizing
                    .iter()
                    .map(|(s, r)| Ok((full_collective_operator(n, s)?, *r)))
                    .collect::<Result<Vec<_>>>()?;
                FullGenerator::new(n, None, &ops, &[])
            }
            ChannelSet::TwistingSymmetric => {
                let h = full_counter_twisting(n, coupling)?;
                FullGenerator::new(n, Some(&h), &[], &depolarizing)
            }
        }
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ChannelSet::Pumping => "pumping",
            ChannelSet::SymmetricDepolarizing => "symmetric-depolarizing",
            ChannelSet::CollectiveDepolarizing => "collective-depolarizing",
            ChannelSet::TwistingSymmetric => "twisting+symmetric",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// `coherent(0, 0)`, i.e. all spins up.
    Coherent,
    /// `mixed_collective`, i.e. `I / 2^N`.
    Mixed,
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialKind::Coherent => "coherent",
            InitialKind::Mixed => "mixed",
        })
    }
}

/// One compared quantity at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub time: f64,
    pub observable: String,
    pub block: f64,
    pub full: f64,
}

impl Deviation {
    pub fn abs(&self) -> f64 {
        (self.block - self.full).abs()
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub n: usize,
    pub channels: ChannelSet,
    pub initial: InitialKind,
    /// In time order, then observable order.
    pub entries: Vec<Deviation>,
}

impl ComparisonReport {
    pub fn max_deviation(&self) -> f64 {
        self.entries.iter().map(Deviation::abs).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Deviation> {
        self.entries
            .iter()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
    }

    /// Fails with the first divergent observable when any deviation exceeds `threshold`.
    pub fn check(&self, threshold: f64) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|d| d.abs().is_nan() || d.abs() > threshold)
        {
            None => Ok(()),
            Some(d) => Err(Error::Verification(format!(
                "N={} {} from {}: {} at t={} differs by {:e} (block {}, full {})",
                self.n,
                self.channels,
                self.initial,
                d.observable,
                d.time,
                d.abs(),
                d.block,
                d.full
            ))),
        }
    }
}

/// Integrator settings tight enough that both sides agree far below 1e-8.
pub fn comparison_integrator() -> IntegratorConfig {
    IntegratorConfig {
        rtol: 1e-11,
        atol: 1e-13,
        ..IntegratorConfig::default()
    }
}

/// Evolves the block and the full representation independently and records
/// `<J_a>`, `<dJ_a>`, `p_J` and purity at every time.
pub fn compare_trajectories(
    channels: ChannelSet,
    initial: InitialKind,
    times: &[f64],
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<ComparisonReport> {
    if n > 8 {
        return Err(Error::Resource(format!(
            "trajectory comparison supports N <= 8, got {n}"
        )));
    }
    let space = Arc::new(BlockSpace::new(n)?);
    let (block0, full0) = match initial {
        InitialKind::Coherent => (
            CollectiveState::coherent(&space, 0.0, 0.0),
            FullState::polarized(n)?,
        ),
        InitialKind::Mixed => (
            CollectiveState::mixed_collective(&space),
            FullState::maximally_mixed(n)?,
        ),
    };

    let block_states = evolve(&channels.block_spec(&space), &block0, times, cfg)?;

    let gen = channels.full_generator(n)?;
    let d = 1usize << n;
    let rhs = |x: &[C64], out: &mut [C64]| gen.apply(x, out);
    let fix = |x: &mut [C64]| hermitize_dense(x, d);
    let full_raw = integrate_samples(&rhs, &fix, full0.rho.as_slice().to_vec(), times, cfg)?;

    let obs = ObservableSet::new(&space);
    let generators = [
        SingleSpinOperator::jx(),
        SingleSpinOperator::jy(),
        SingleSpinOperator::jz(),
    ]
    .iter()
    .map(|s| full_collective_operator(n, s))
    .collect::<Result<Vec<_>>>()?;
    let projector = IrrepProjector::new(n)?;

    let mut entries = Vec::new();
    for ((&t, block), raw) in times.iter().zip(&block_states).zip(full_raw) {
        let full = DMatrix::from_vec(d, d, raw);
        let mut push = |name: String, b: f64, f: f64| {
            entries.push(Deviation {
                time: t,
                observable: name,
                block: b,
                full: f,
            });
        };
        let means = obs.means(block)?;
        let widths = obs.uncertainties(block)?;
        for (a, label) in ["x", "y", "z"].iter().enumerate() {
            let g = &generators[a];
            let mean = (&full * g).trace().re;
            let second = (&full * g * g).trace().re;
            push(format!("<J{label}>"), means[a], mean);
            push(
                format!("<dJ{label}>"),
                widths[a],
                (second - mean * mean).max(0.0).sqrt(),
            );
        }
        let full_p = projector.block_traces(&full);
        for (k, (pb, pf)) in crate::observables::block_traces(block)
            .iter()
            .zip(full_p)
            .enumerate()
        {
            push(format!("p[J={}]", space.block(k).j), *pb, pf);
        }
        let full_purity: f64 = full.iter().map(|z| z.norm_sqr()).sum();
        push(
            "purity".into(),
            10f64.powf(log10_purity(block)?),
            full_purity,
        );
    }
    Ok(ComparisonReport {
        n,
        channels,
        initial,
        entries,
    })
}

/// Ten sample times on `(0, 2]`.
pub fn comparison_times() -> Vec<f64> {
    (1..=10).map(|i| 0.2 * i as f64).collect()
}

/// Every channel set and initial state for every N in `ns`, run in parallel.
/// Reports come back ordered by N, channel set, then initial state.
pub fn verification_suite(
    ns: &[usize],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<ComparisonReport>> {
    let cases: Vec<(usize, ChannelSet, InitialKind)> = ns
        .iter()
        .flat_map(|&n| {
            ChannelSet::ALL
                .into_iter()
                .flat_map(move |c| [InitialKind::Coherent, InitialKind::Mixed].map(|i| (n, c, i)))
        })
        .collect();
    cases
        .par_iter()
        .map(|&(n, c, i)| compare_trajectories(c, i, times, n, cfg))
        .collect()
}

fn hermitize_dense(x: &mut [C64], d: usize) {
    for c in 0..d {
        for r in 0..c {
            let (i, j) = (c * d + r, r * d + c);
            let avg = (x[i] + x[j].conj()) * 0.5;
            x[i] = avg;
            x[j] = avg.conj();
        }
        x[c * d + c].im = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::apply_local_symmetric_lindblad;
    use crate::operators::Axis;

    fn textbook(s: &SingleSpinOperator, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let m = s.matrix();
        let sm = DMatrix::from_fn(2, 2, |r, c| m[r][c]);
        let sd = sm.adjoint();
        let sds = &sd * &sm;
        &sm * rho * &sd - (&sds * rho + rho * &sds) * C64::new(0.5, 0.0)
    }

    fn random_single(seed: u64) -> SingleSpinOperator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut c = || C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        SingleSpinOperator::new(c(), c(), c(), c())
    }

    #[test]
    fn single_spin_matches_textbook() {
        let rho = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.7, 0.0),
                C64::new(0.1, 0.2),
                C64::new(0.1, -0.2),
                C64::new(0.3, 0.0),
            ],
        );
        let state = FullState::from_matrix(1, rho.clone()).unwrap();
        for seed in 0..4 {
            let s = random_single(seed);
            let got = full_local_lindblad(&s, &state).unwrap();
            let dev = (got.matrix() - textbook(&s, &rho))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-15);
        }
    }

    #[test]
    fn local_sum_matches_dense_embedding() {
        // independent dense construction: sum over embedded s^(n)
        let n = 3;
        let s = random_single(7);
        let dim = 1 << n;
        let state = FullState::from_matrix(n, {
            let g = DMatrix::from_fn(dim, dim, |r, c| {
                C64::new(((r * 7 + c * 3) % 5) as f64, ((r + 2 * c) % 3) as f64)
            });
            let m = &g * g.adjoint();
            let tr = m.trace();
            m / tr
        })
        .unwrap();
        let mut want = DMatrix::zeros(dim, dim);
        for site in 0..n {
            // s on one site only
            let m = s.matrix();
            let mut e = DMatrix::<C64>::zeros(dim, dim);
            let bit = 1 << site;
            for j in 0..dim {
                for (bi, row) in m.iter().enumerate() {
                    let i = (j & !bit) | (bi * bit);
                    e[(i, j)] = row[usize::from(j & bit != 0)];
                }
            }
            want += full_collective_lindblad(&e, &state).unwrap().matrix();
        }
        let got = full_local_lindblad(&s, &state).unwrap();
        assert!((got.matrix() - want).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn fixed_points() {
        let mixed = FullState::maximally_mixed(2).unwrap();
        let d = full_local_lindblad(&SingleSpinOperator::jz(), &mixed).unwrap();
        assert!(d.matrix().iter().all(|z| z.norm() < 1e-15));
        let up = FullState::polarized(4).unwrap();
        let d = full_local_lindblad(&SingleSpinOperator::raising(), &up).unwrap();
        assert!(d.matrix().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn block_traces_from_projectors() {
        let p = full_block_traces(&FullState::polarized(5).unwrap()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1..].iter().all(|x| x.abs() < 1e-12));
        let p = full_block_traces(&FullState::maximally_mixed(4).unwrap()).unwrap();
        for (a, b) in p.iter().zip([5.0 / 16.0, 9.0 / 16.0, 2.0 / 16.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // singlet (|ud> - |du>)/sqrt 2
        let mut rho = DMatrix::zeros(4, 4);
        for (i, j, v) in [(1, 1, 0.5), (2, 2, 0.5), (1, 2, -0.5), (2, 1, -0.5)] {
            rho[(i, j)] = C64::new(v, 0.0);
        }
        let p = full_block_traces(&FullState::from_matrix(2, rho).unwrap()).unwrap();
        assert!(p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_block_side_at_four_spins() {
        let n = 4;
        let space = Arc::new(BlockSpace::new(n).unwrap());
        let block = apply_local_symmetric_lindblad(
            &SingleSpinOperator::raising(),
            &CollectiveState::mixed_collective(&space),
        )
        .unwrap();
        let full = full_local_lindblad(
            &SingleSpinOperator::raising(),
            &FullState::maximally_mixed(n).unwrap(),
        )
        .unwrap();
        // compare the diagonal in the coupled basis through J_z moments and block traces
        let jz_full = full_collective_operator(n, &SingleSpinOperator::jz()).unwrap();
        let jz_block = CollectiveOperator::generator(&space, Axis::Z);
        let mean_block = crate::observables::expectation(&block, &jz_block).unwrap();
        assert!((full.expectation(&jz_full) - mean_block).norm() < 1e-12);
        let pb = crate::observables::block_traces(&block);
        let pf = full_block_traces(&full).unwrap();
        assert!(pb.iter().zip(pf).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn two_spin_trajectories_agree() {
        let times: Vec<f64> = (0..10).map(|i| 0.2 * i as f64).collect();
        for channels in ChannelSet::ALL {
            for initial in [InitialKind::Coherent, InitialKind::Mixed] {
                let report =
                    compare_trajectories(channels, initial, &times, 2, &comparison_integrator())
                        .unwrap();
                report.check(1e-8).unwrap();
            }
        }
    }

    #[test]
    fn report_names_first_divergence() {
        let report = ComparisonReport {
            n: 3,
            channels: ChannelSet::Pumping,
            initial: InitialKind::Mixed,
            entries: vec![
                Deviation {
                    time: 0.0,
                    observable: "a".into(),
                    block: 0.0,
                    full: 0.0,
                },
                Deviation {
                    time: 1.0,
                    observable: "b".into(),
                    block: 1.0,
                    full: 0.0,
                },
                Deviation {
                    time: 2.0,
                    observable: "c".into(),
                    block: 5.0,
                    full: 0.0,
                },
            ],
        };
        let msg = report.check(0.5).unwrap_err().to_string();
        assert!(msg.contains(" b at t=1"), "{msg}");
        assert_eq!(report.worst().unwrap().observable, "c");
        assert!(compare_trajectories(
            ChannelSet::Pumping,
            InitialKind::Mixed,
            &[0.0],
            9,
            &comparison_integrator()
        )
        .is_err());
        assert!(FullState::polarized(11).is_err());
    }
}
