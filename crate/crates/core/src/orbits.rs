//! Sampling from `K` and from subalgebras, the adjoint action, Monte Carlo
//! containment checks and tangent-rank dimension estimates.

use crate::flags::{
    k_subalgebra, nil_dim_formula, nilradical_n, parabolic_p, saturation_dim_formula, FlagError,
    OrbitIndex, SubalgebraSpec,
};
use crate::linalg::{
    numerical_rank, stack_vectorized, CMatrix, DMat, LinalgError, Tolerances, C64,
};
use crate::spectra::{coincidence_count, SpectraError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrbitError {
    #[error("could not draw a well-conditioned K element after {0} attempts")]
    ResampleLimit(usize),
    #[error("K needs n >= 2, got n={0}")]
    TooSmall(usize),
    #[error("matrix is not block diagonal of shape (n-1, 1): off-block entry of size {0:.3e}")]
    NotInK(f64),
    #[error("point is not in the subalgebra (residual {0:.3e})")]
    NotInSubalgebra(f64),
    #[error("dimension mismatch: expected n={expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Flag(#[from] FlagError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Deterministic generator keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> SeededRng {
        SeededRng::new(self.seed, stream)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Standard complex Gaussian, `E|z|^2 = 1`.
    pub fn complex_gaussian(&mut self) -> C64 {
        C64::new(self.gaussian(), self.gaussian()) * FRAC_1_SQRT_2
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> DMat {
        // column-major fill order is part of the reproducibility contract
        DMat::from_fn(rows, cols, |_, _| self.complex_gaussian())
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.inner.random_range(0..upper)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// Element of `K = GL(n-1) x GL(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KElement {
    n: usize,
    block: DMat,
    scalar: C64,
}

impl KElement {
    pub fn new(block: DMat, scalar: C64) -> Result<Self, OrbitError> {
        let m = block.nrows();
        if block.ncols() != m {
            return Err(LinalgError::NotSquare {
                rows: m,
                cols: block.ncols(),
            }
            .into());
        }
        if scalar == C64::new(0.0, 0.0) || !scalar.is_finite() {
            return Err(LinalgError::Singular.into());
        }
        let k = KElement {
            n: m + 1,
            block,
            scalar,
        };
        let rank = numerical_rank(k.matrix().as_dmat(), &Tolerances::default())?;
        if rank < k.n {
            return Err(LinalgError::Singular.into());
        }
        Ok(k)
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 2, "K needs n >= 2");
        KElement {
            n,
            block: DMat::identity(n - 1, n - 1),
            scalar: C64::new(1.0, 0.0),
        }
    }

    /// Reads a block-diagonal matrix; off-block entries must vanish to
    /// `membership * (1 + |m|)`.
    pub fn from_matrix(m: &CMatrix, tol: &Tolerances) -> Result<Self, OrbitError> {
        let n = m.n();
        if n < 2 {
            return Err(OrbitError::TooSmall(n));
        }
        let off = (0..n - 1)
            .map(|r| m.get(r, n - 1).norm().max(m.get(n - 1, r).norm()))
            .fold(0.0, f64::max);
        if off > tol.membership * (1.0 + m.norm()) {
            return Err(OrbitError::NotInK(off));
        }
        KElement::new(m.cutoff()?.into_dmat(), m.get(n - 1, n - 1))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self) -> &DMat {
        &self.block
    }

    pub fn scalar(&self) -> C64 {
        self.scalar
    }

    /// The embedded `n x n` matrix.
    pub fn matrix(&self) -> CMatrix {
        let n = self.n;
        let mut m = DMat::zeros(n, n);
        m.view_mut((0, 0), (n - 1, n - 1)).copy_from(&self.block);
        m[(n - 1, n - 1)] = self.scalar;
        CMatrix::new(m).expect("finite by construction")
    }

    pub fn inverse(&self) -> Result<KElement, OrbitError> {
        let inv = self
            .block
            .clone()
            .try_inverse()
            .ok_or(LinalgError::Singular)?;
        Ok(KElement {
            n: self.n,
            block: inv,
            scalar: self.scalar.inv(),
        })
    }

    /// `self * other`.
    pub fn compose(&self, other: &KElement) -> KElement {
        assert_eq!(self.n, other.n);
        KElement {
            n: self.n,
            block: &self.block * &other.block,
            scalar: self.scalar * other.scalar,
        }
    }
}

/// `k x k^{-1}`.
pub fn ad(k: &KElement, x: &CMatrix) -> Result<CMatrix, OrbitError> {
    if k.n() != x.n() {
        return Err(OrbitError::DimensionMismatch {
            expected: k.n(),
            actual: x.n(),
        });
    }
    let inv = k.inverse()?;
    Ok(k.matrix().mul(x).mul(&inv.matrix()))
}

const K_MIN_SINGULAR: f64 = 1e-3;
const K_RESAMPLE_LIMIT: usize = 100;

/// Gaussian block with smallest singular value above `1e-3`; scalar
/// `e^{iφ}(1 + u)` with `φ, u` uniform.
pub fn sample_k(rng: &mut SeededRng, n: usize) -> Result<KElement, OrbitError> {
    if n < 2 {
        return Err(OrbitError::TooSmall(n));
    }
    for _ in 0..K_RESAMPLE_LIMIT {
        let block = rng.gaussian_matrix(n - 1, n - 1);
        let sv = crate::linalg::singular_values(&block)?;
        if sv.iter().copied().fold(f64::INFINITY, f64::min) <= K_MIN_SINGULAR {
            continue;
        }
        let phase = 2.0 * PI * rng.uniform();
        let radius = 1.0 + rng.uniform();
        let scalar = C64::from_polar(radius, phase);
        return Ok(KElement { n, block, scalar });
    }
    Err(OrbitError::ResampleLimit(K_RESAMPLE_LIMIT))
}

/// Complex Gaussian combination of the basis.
pub fn sample_in(s: &SubalgebraSpec, rng: &mut SeededRng) -> CMatrix {
    let n = s.n();
    assert!(s.dim() > 0, "cannot sample from the zero subalgebra");
    let mut acc = DMat::zeros(n, n);
    for b in s.basis() {
        acc += b.as_dmat() * rng.complex_gaussian();
    }
    CMatrix::new(acc).expect("finite combination")
}

/// Serial or rayon-parallel evaluation of independent trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Runs `f(0..trials)` and returns results in trial order either way.
pub fn run_trials<T, F>(trials: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Serial => (0..trials).map(f).collect(),
        Execution::Parallel => (0..trials).into_par_iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub idx: OrbitIndex,
    pub n: usize,
    pub trials: usize,
    /// Lower bound `n - 1 - (j - i)` on the coincidence count.
    pub bound: usize,
    pub violations: usize,
    /// Trials where the eigensolver failed; not counted as violations.
    pub numerical_failures: usize,
    pub min_observed_l: Option<usize>,
    /// `histogram[l]` = number of trials with coincidence count `l`.
    pub histogram: Vec<usize>,
    /// Largest matched-pair residual across trials.
    pub worst_residual: f64,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

enum TrialOutcome {
    Counted { l: usize, residual: f64 },
    Failed,
}

/// Draws `trials` points `ad(k, x)` with `k` from `K` and `x` from `p_{i,j}`,
/// trial `t` using stream `t` of `seed`, and counts coincidence-bound violations.
pub fn verify_containment(
    idx: OrbitIndex,
    n: usize,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
    exec: Execution,
) -> Result<ContainmentReport, OrbitError> {
    let p = parabolic_p(idx, n)?;
    let bound = n - 1 - idx.length();
    let outcomes = run_trials(trials, exec, |t| -> Result<TrialOutcome, OrbitError> {
        let mut rng = SeededRng::new(seed, t as u64);
        let k = sample_k(&mut rng, n)?;
        let x = sample_in(&p, &mut rng);
        let y = ad(&k, &x)?;
        Ok(match coincidence_count(&y, tol) {
            Ok(rep) => TrialOutcome::Counted {
                l: rep.l,
                residual: rep.max_residual(),
            },
            Err(SpectraError::Linalg(e)) => {
                log::warn!("trial {t} for {idx}: {e}");
                TrialOutcome::Failed
            }
            Err(e) => return Err(e.into()),
        })
    });
    let mut report = ContainmentReport {
        idx,
        n,
        trials,
        bound,
        violations: 0,
        numerical_failures: 0,
        min_observed_l: None,
        histogram: vec![0; n],
        worst_residual: 0.0,
    };
    for outcome in outcomes {
        match outcome? {
            TrialOutcome::Counted { l, residual } => {
                report.histogram[l] += 1;
                if l < bound {
                    report.violations += 1;
                }
                report.min_observed_l = Some(report.min_observed_l.map_or(l, |m| m.min(l)));
                report.worst_residual = report.worst_residual.max(residual);
            }
            TrialOutcome::Failed => report.numerical_failures += 1,
        }
    }
    Ok(report)
}

fn tangent_rank(s: &SubalgebraSpec, x: &CMatrix, tol: &Tolerances) -> Result<usize, OrbitError> {
    if x.n() != s.n() {
        return Err(OrbitError::DimensionMismatch {
            expected: s.n(),
            actual: x.n(),
        });
    }
    let m = s.contains(x, tol);
    if !m.inside {
        return Err(OrbitError::NotInSubalgebra(m.residual));
    }
    let norm = x.norm();
    let x = if norm > 0.0 {
        x.scale(C64::new(1.0 / norm, 0.0))
    } else {
        x.clone()
    };
    let k = k_subalgebra(s.n());
    let mut vectors: Vec<CMatrix> = k.basis().iter().map(|z| z.bracket(&x)).collect();
    vectors.extend(s.basis().iter().cloned());
    Ok(numerical_rank(&stack_vectorized(&vectors, s.n()), tol)?)
}

/// Rank of `[k, x] + p_{i,j}`, the tangent space of `Ad(K) p_{i,j}` at `x`.
pub fn tangent_dim_y(
    idx: OrbitIndex,
    n: usize,
    x: &CMatrix,
    tol: &Tolerances,
) -> Result<usize, OrbitError> {
    tangent_rank(&parabolic_p(idx, n)?, x, tol)
}

/// Rank of `[k, x] + n_{i,i}`, the tangent space of `Ad(K) n_{i,i}` at `x`.
pub fn tangent_dim_nil(
    i: usize,
    n: usize,
    x: &CMatrix,
    tol: &Tolerances,
) -> Result<usize, OrbitError> {
    tangent_rank(&nilradical_n(i, n)?, x, tol)
}

/// Which saturation to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DimTarget {
    /// `Y = Ad(K) p_{i,j}`.
    Saturation { i: usize, j: usize },
    /// `Ad(K) n_{i,i}`.
    Nilpotent { i: usize },
}

impl DimTarget {
    fn subalgebra(&self, n: usize) -> Result<SubalgebraSpec, OrbitError> {
        Ok(match *self {
            DimTarget::Saturation { i, j } => parabolic_p(OrbitIndex::new(i, j, n)?, n)?,
            DimTarget::Nilpotent { i } => nilradical_n(i, n)?,
        })
    }

    pub fn formula(&self, n: usize) -> usize {
        match *self {
            DimTarget::Saturation { i, j } => saturation_dim_formula(OrbitIndex { i, j }, n),
            DimTarget::Nilpotent { .. } => nil_dim_formula(n),
        }
    }

    /// Stream offset separating targets under one seed.
    fn stream_base(&self, n: usize) -> u64 {
        let code = match *self {
            DimTarget::Saturation { i, j } => (i * (n + 1) + j) as u64,
            DimTarget::Nilpotent { i } => ((n + 1) * (n + 1) + i) as u64,
        };
        code << 32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DimEstimate {
    pub target: DimTarget,
    pub n: usize,
    pub ranks: Vec<usize>,
    /// Maximum observed rank, i.e. the generic rank.
    pub estimate: Option<usize>,
    pub formula: usize,
}

impl DimEstimate {
    pub fn matches(&self) -> bool {
        self.estimate == Some(self.formula)
    }
}

/// Generic tangent rank: the maximum over `repeats` random points of the
/// subalgebra (points of negligible norm are redrawn).
pub fn estimate_dim(
    target: DimTarget,
    n: usize,
    repeats: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<DimEstimate, OrbitError> {
    let s = target.subalgebra(n)?;
    let mut rng = SeededRng::new(seed, target.stream_base(n));
    let mut ranks = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut x = sample_in(&s, &mut rng);
        while x.norm() < 1e-8 {
            x = sample_in(&s, &mut rng);
        }
        ranks.push(tangent_rank(&s, &x, tol)?);
    }
    Ok(DimEstimate {
        target,
        n,
        estimate: ranks.iter().copied().max(),
        ranks,
        formula: target.formula(n),
    })
}
