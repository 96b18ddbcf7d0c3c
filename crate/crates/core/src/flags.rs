//! Flags, permutation and Cayley matrices, and the catalog of Borel and
//! θ-stable parabolic subalgebras indexed by `K`-orbits.
//!
//! Permutation matrices act on basis vectors: the matrix of a permutation `c`
//! sends `e_k` to `e_{c(k)}`. All public indices (orbit indices, Cayley and
//! nilradical indices) are 1-based.

use crate::linalg::{
    numerical_rank, orthonormal_columns, projection_residual, stack_vectorized, CMatrix, DMat,
    LinalgError, Tolerances, C64, ONE,
};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlagError {
    #[error("invalid orbit index (i={i}, j={j}) for n={n}: need 1 <= i <= j <= n")]
    InvalidIndex { i: usize, j: usize, n: usize },
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("flag steps {steps:?} must be strictly increasing and end at n={n}")]
    InvalidSteps { steps: Vec<usize>, n: usize },
    #[error("flag basis is not invertible (rank {rank} < {n})")]
    SingularBasis { rank: usize, n: usize },
    #[error("subalgebra basis is linearly dependent (rank {rank} < {len})")]
    DependentBasis { rank: usize, len: usize },
    #[error("basis element {index} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Index `(i, j)` of the `K`-orbit `Q_{i,j}` on the flag variety; its length is `j - i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct OrbitIndex {
    pub i: usize,
    pub j: usize,
}

impl OrbitIndex {
    pub fn new(i: usize, j: usize, n: usize) -> Result<Self, FlagError> {
        if i == 0 || i > j || j > n {
            return Err(FlagError::InvalidIndex { i, j, n });
        }
        Ok(OrbitIndex { i, j })
    }

    pub fn length(&self) -> usize {
        self.j - self.i
    }

    pub fn is_closed(&self) -> bool {
        self.i == self.j
    }

    fn check(&self, n: usize) -> Result<(), FlagError> {
        OrbitIndex::new(self.i, self.j, n).map(|_| ())
    }

    /// All `n + n(n-1)/2` indices, ordered by length then `i`.
    pub fn all(n: usize) -> Vec<OrbitIndex> {
        let mut out = Vec::new();
        for len in 0..n {
            for i in 1..=n - len {
                out.push(OrbitIndex { i, j: i + len });
            }
        }
        out
    }
}

impl fmt::Display for OrbitIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// A chain `V_1 ⊂ ... ⊂ V_k = C^n` where `V_m` is spanned by the first
/// `steps[m]` columns of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFlag {
    n: usize,
    steps: Vec<usize>,
    basis: DMat,
}

impl PartialFlag {
    pub fn new(steps: Vec<usize>, basis: DMat) -> Result<Self, FlagError> {
        let n = basis.nrows();
        if basis.ncols() != n {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: basis.ncols(),
            }
            .into());
        }
        let increasing = steps.windows(2).all(|w| w[0] < w[1]);
        if steps.is_empty() || steps[0] == 0 || !increasing || *steps.last().unwrap() != n {
            return Err(FlagError::InvalidSteps { steps, n });
        }
        let rank = numerical_rank(&basis, &Tolerances::default())?;
        if rank < n {
            return Err(FlagError::SingularBasis { rank, n });
        }
        Ok(PartialFlag { n, steps, basis })
    }

    /// Full flag spanned successively by the given columns.
    pub fn full(basis: DMat) -> Result<Self, FlagError> {
        let n = basis.nrows();
        PartialFlag::new((1..=n).collect(), basis)
    }

    /// Partial flag whose basis is a list of standard vectors (1-based) and
    /// sums thereof, given column by column.
    fn from_columns(steps: Vec<usize>, columns: Vec<Vec<(usize, f64)>>, n: usize) -> Self {
        let mut basis = DMat::zeros(n, n);
        for (c, col) in columns.iter().enumerate() {
            for &(e, coef) in col {
                basis[(e - 1, c)] += C64::new(coef, 0.0);
            }
        }
        PartialFlag::new(steps, basis).expect("catalog flags are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn basis(&self) -> &DMat {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() == self.n
    }

    /// Columns spanning `V_m` (0-based step index).
    pub fn subspace(&self, m: usize) -> DMat {
        self.basis.columns(0, self.steps[m]).into_owned()
    }

    /// Image of the flag under `g`.
    pub fn transform(&self, g: &CMatrix) -> Result<PartialFlag, FlagError> {
        PartialFlag::new(self.steps.clone(), g.as_dmat() * &self.basis)
    }

    /// Same step dimensions and the same subspace at every step.
    pub fn same_as(&self, other: &PartialFlag, tol: &Tolerances) -> Result<bool, FlagError> {
        if self.n != other.n || self.steps != other.steps {
            return Ok(false);
        }
        for m in 0..self.steps.len() {
            let a = self.subspace(m);
            let b = other.subspace(m);
            let mut joined = DMat::zeros(self.n, a.ncols() + b.ncols());
            joined.columns_mut(0, a.ncols()).copy_from(&a);
            joined.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
            if numerical_rank(&joined, tol)? != self.steps[m] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Human-readable columns, e.g. `e1+e3 ⊂ e1 ⊂ e2`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        let mut start = 0;
        for &s in &self.steps {
            let block: Vec<String> = (start..s)
                .map(|c| describe_vector(&self.basis, c))
                .collect();
            parts.push(block.join(","));
            start = s;
        }
        parts.join(" ⊂ ")
    }
}

fn describe_vector(basis: &DMat, col: usize) -> String {
    let mut terms = Vec::new();
    for r in 0..basis.nrows() {
        let v = basis[(r, col)];
        if v.norm() == 0.0 {
            continue;
        }
        let coef = if v == ONE {
            String::new()
        } else if v == -ONE {
            "-".to_string()
        } else if v.im == 0.0 {
            format!("{}", v.re)
        } else {
            format!("({v})")
        };
        terms.push(format!("{coef}e{}", r + 1));
    }
    terms.join("+").replace("+-", "-")
}

fn unit_column(n: usize, e: usize) -> Vec<(usize, f64)> {
    debug_assert!(e >= 1 && e <= n);
    vec![(e, 1.0)]
}

/// `F_+ = (e_1 ⊂ ... ⊂ e_n)`.
pub fn standard_flag(n: usize) -> PartialFlag {
    assert!(n >= 1);
    PartialFlag::full(DMat::identity(n, n)).expect("identity is invertible")
}

/// The full flag `F_{i,j}` whose stabilizer is `b_{i,j}`.
#[allow(non_snake_case)]
pub fn flag_F(idx: OrbitIndex, n: usize) -> Result<PartialFlag, FlagError> {
    idx.check(n)?;
    let (i, j) = (idx.i, idx.j);
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    if i == j {
        cols.extend((1..i).map(|e| unit_column(n, e)));
        cols.push(unit_column(n, n));
        cols.extend((i..n).map(|e| unit_column(n, e)));
    } else {
        cols.extend((1..i).map(|e| unit_column(n, e)));
        cols.push(vec![(i, 1.0), (n, 1.0)]);
        cols.extend((i + 1..j).map(|e| unit_column(n, e)));
        cols.push(unit_column(n, i));
        cols.extend((j..n).map(|e| unit_column(n, e)));
    }
    Ok(PartialFlag::from_columns((1..=n).collect(), cols, n))
}

/// Standard partial flag `R_{i,j} = (e_1 ⊂ ... ⊂ e_{i-1} ⊂ e_i..e_j ⊂ e_{j+1} ⊂ ... ⊂ e_n)`.
#[allow(non_snake_case)]
pub fn flag_R(idx: OrbitIndex, n: usize) -> Result<PartialFlag, FlagError> {
    idx.check(n)?;
    let cols = (1..=n).map(|e| unit_column(n, e)).collect();
    Ok(PartialFlag::from_columns(parabolic_steps(idx, n), cols, n))
}

/// θ-stable partial flag `P_{i,j} = (e_1 ⊂ ... ⊂ e_{i-1} ⊂ e_i..e_{j-1},e_n ⊂ e_j ⊂ ... ⊂ e_{n-1})`.
#[allow(non_snake_case)]
pub fn flag_P(idx: OrbitIndex, n: usize) -> Result<PartialFlag, FlagError> {
    idx.check(n)?;
    let mut cols: Vec<Vec<(usize, f64)>> = (1..idx.j).map(|e| unit_column(n, e)).collect();
    cols.push(unit_column(n, n));
    cols.extend((idx.j..n).map(|e| unit_column(n, e)));
    Ok(PartialFlag::from_columns(parabolic_steps(idx, n), cols, n))
}

fn parabolic_steps(idx: OrbitIndex, n: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (1..idx.i).collect();
    steps.push(idx.j);
    steps.extend(idx.j + 1..=n);
    steps
}

/// Matrix sending `e_k` to `e_{image[k-1]}` (1-based images).
pub fn permutation_matrix(image: &[usize]) -> CMatrix {
    let n = image.len();
    let mut m = DMat::zeros(n, n);
    for (k, &t) in image.iter().enumerate() {
        m[(t - 1, k)] = ONE;
    }
    CMatrix::new(m).expect("permutation matrix is finite and square")
}

/// Matrix of the cycle `(c_1 c_2 ... c_r)`: `e_{c_1} -> e_{c_2} -> ... -> e_{c_r} -> e_{c_1}`.
pub fn cycle_matrix(n: usize, cycle: &[usize]) -> CMatrix {
    let mut image: Vec<usize> = (1..=n).collect();
    for (pos, &c) in cycle.iter().enumerate() {
        image[c - 1] = cycle[(pos + 1) % cycle.len()];
    }
    permutation_matrix(&image)
}

/// Cayley transform `u_{α_i}`: `e_i -> e_i + e_{i+1}`, `e_{i+1} -> -e_i + e_{i+1}`.
pub fn cayley(i: usize, n: usize) -> Result<CMatrix, FlagError> {
    if i == 0 || i + 1 > n {
        return Err(FlagError::IndexOutOfRange {
            index: i,
            max: n.saturating_sub(1),
        });
    }
    let mut m = DMat::identity(n, n);
    let (a, b) = (i - 1, i);
    m[(a, a)] = ONE;
    m[(b, a)] = ONE;
    m[(a, b)] = -ONE;
    m[(b, b)] = ONE;
    Ok(CMatrix::new(m)?)
}

/// `v_{i,j}`: `w` when `i = j`, otherwise `w u_{α_i} σ`, with `w` the cycle
/// `(n n-1 ... i)` and `σ` the cycle `(i+1 ... j)`.
pub fn v_matrix(idx: OrbitIndex, n: usize) -> Result<CMatrix, FlagError> {
    idx.check(n)?;
    let w_cycle: Vec<usize> = (idx.i..=n).rev().collect();
    let w = cycle_matrix(n, &w_cycle);
    if idx.is_closed() {
        return Ok(w);
    }
    let sigma_cycle: Vec<usize> = (idx.i + 1..=idx.j).collect();
    let sigma = cycle_matrix(n, &sigma_cycle);
    Ok(w.mul(&cayley(idx.i, n)?).mul(&sigma))
}

/// The involution `θ(x) = d x d^{-1}`, `d = diag(1, ..., 1, -1)`.
pub fn theta(x: &CMatrix) -> CMatrix {
    let n = x.n();
    let mut m = x.as_dmat().clone();
    for k in 0..n - 1 {
        m[(k, n - 1)] = -m[(k, n - 1)];
        m[(n - 1, k)] = -m[(n - 1, k)];
    }
    CMatrix::new(m).expect("sign flips keep entries finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubalgebraTag {
    Borel,
    Parabolic,
    Nilradical,
    FixedPoint,
    Custom,
}

/// A subalgebra of `gl(n)` presented by a basis of `n x n` matrices.
#[derive(Debug, Clone)]
pub struct SubalgebraSpec {
    n: usize,
    basis: Vec<CMatrix>,
    tag: SubalgebraTag,
    origin: Option<OrbitIndex>,
    /// Orthonormal basis of the span as `n^2` columns.
    ortho: DMat,
}

/// Outcome of [`SubalgebraSpec::contains`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub inside: bool,
    /// Absolute distance from the span, `||x - proj(x)||_F`.
    pub residual: f64,
}

impl SubalgebraSpec {
    /// Checks linear independence. Bracket closure is checked separately
    /// by [`SubalgebraSpec::bracket_defect`].
    pub fn new(
        n: usize,
        basis: Vec<CMatrix>,
        tag: SubalgebraTag,
        origin: Option<OrbitIndex>,
    ) -> Result<Self, FlagError> {
        for (index, b) in basis.iter().enumerate() {
            if b.n() != n {
                return Err(FlagError::DimensionMismatch {
                    index,
                    expected: n,
                    actual: b.n(),
                });
            }
        }
        let stacked = stack_vectorized(&basis, n);
        let rank = numerical_rank(&stacked, &Tolerances::default())?;
        if rank < basis.len() {
            return Err(FlagError::DependentBasis {
                rank,
                len: basis.len(),
            });
        }
        let ortho = orthonormal_columns(&stacked);
        Ok(SubalgebraSpec {
            n,
            basis,
            tag,
            origin,
            ortho,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn tag(&self) -> SubalgebraTag {
        self.tag
    }

    pub fn origin(&self) -> Option<OrbitIndex> {
        self.origin
    }

    pub fn contains(&self, x: &CMatrix, tol: &Tolerances) -> Membership {
        assert_eq!(x.n(), self.n, "dimension mismatch in membership test");
        let residual = projection_residual(&self.ortho, &x.vectorize());
        Membership {
            inside: residual <= tol.membership * (1.0 + x.norm()),
            residual,
        }
    }

    /// Largest distance of `[u, v]` from the span over basis pairs.
    pub fn bracket_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, u) in self.basis.iter().enumerate() {
            for v in &self.basis[a + 1..] {
                let b = u.bracket(v);
                worst = worst.max(projection_residual(&self.ortho, &b.vectorize()));
            }
        }
        worst
    }

    pub fn is_subalgebra_of(&self, other: &SubalgebraSpec, tol: &Tolerances) -> bool {
        self.basis.iter().all(|b| other.contains(b, tol).inside)
    }

    pub fn same_span(&self, other: &SubalgebraSpec, tol: &Tolerances) -> bool {
        self.dim() == other.dim() && self.is_subalgebra_of(other, tol)
    }

    /// `Ad(g)` applied to every basis element.
    pub fn conjugate(&self, g: &CMatrix) -> Result<SubalgebraSpec, FlagError> {
        let inv = g.try_inverse()?;
        let basis = self.basis.iter().map(|b| g.mul(b).mul(&inv)).collect();
        SubalgebraSpec::new(self.n, basis, self.tag, self.origin)
    }

    /// Image under `x -> x_{n-1}`, with a linearly independent basis extracted greedily.
    pub fn cutoff_projection(&self, tol: &Tolerances) -> Result<SubalgebraSpec, FlagError> {
        let m = self.n - 1;
        let mut chosen: Vec<CMatrix> = Vec::new();
        for b in &self.basis {
            let p = b.cutoff()?;
            let mut trial = chosen.clone();
            trial.push(p.clone());
            if numerical_rank(&stack_vectorized(&trial, m), tol)? == trial.len() {
                chosen = trial;
            }
        }
        SubalgebraSpec::new(m, chosen, SubalgebraTag::Custom, self.origin)
    }

    /// Block sizes of the Levi factor when the span is a standard
    /// (block upper triangular) parabolic; `None` otherwise.
    pub fn standard_levi_blocks(&self, tol: &Tolerances) -> Option<Vec<usize>> {
        let n = self.n;
        let inside = |r: usize, c: usize| self.contains(&CMatrix::unit(n, r, c), tol).inside;
        let mut count = 0;
        for r in 0..n {
            for c in 0..n {
                let present = inside(r, c);
                if r <= c && !present {
                    return None;
                }
                count += present as usize;
            }
        }
        if count != self.dim() {
            return None;
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        for k in 0..n {
            if k + 1 == n || !inside(k + 1, k) {
                blocks.push(k + 1 - start);
                start = k + 1;
            }
        }
        // Lower entries must be exactly the within-block ones.
        let mut block_of = Vec::with_capacity(n);
        for (b, &size) in blocks.iter().enumerate() {
            block_of.extend(std::iter::repeat_n(b, size));
        }
        for r in 0..n {
            for c in 0..r {
                if inside(r, c) != (block_of[r] == block_of[c]) {
                    return None;
                }
            }
        }
        Some(blocks)
    }
}

/// `{x : x V_m ⊆ V_m for every step}`; block upper triangular in the flag's basis.
pub fn stabilizer(flag: &PartialFlag) -> Result<SubalgebraSpec, FlagError> {
    let n = flag.n();
    let b = CMatrix::new(flag.basis().clone())?;
    let b_inv = b.try_inverse()?;
    let block = block_index(flag.steps());
    let mut basis = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if block[r] <= block[c] {
                basis.push(b.mul(&CMatrix::unit(n, r, c)).mul(&b_inv));
            }
        }
    }
    let tag = if flag.is_full() {
        SubalgebraTag::Borel
    } else {
        SubalgebraTag::Parabolic
    };
    SubalgebraSpec::new(n, basis, tag, None)
}

fn block_index(steps: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    for (b, &s) in steps.iter().enumerate() {
        out.extend(std::iter::repeat_n(b, s - start));
        start = s;
    }
    out
}

fn with_origin(mut s: SubalgebraSpec, tag: SubalgebraTag, idx: OrbitIndex) -> SubalgebraSpec {
    s.tag = tag;
    s.origin = Some(idx);
    s
}

/// `p_{i,j}`, the stabilizer of `P_{i,j}`.
pub fn parabolic_p(idx: OrbitIndex, n: usize) -> Result<SubalgebraSpec, FlagError> {
    let tag = if idx.is_closed() {
        SubalgebraTag::Borel
    } else {
        SubalgebraTag::Parabolic
    };
    Ok(with_origin(stabilizer(&flag_P(idx, n)?)?, tag, idx))
}

/// `r_{i,j}`, the standard parabolic stabilizing `R_{i,j}`.
pub fn parabolic_r(idx: OrbitIndex, n: usize) -> Result<SubalgebraSpec, FlagError> {
    Ok(with_origin(
        stabilizer(&flag_R(idx, n)?)?,
        SubalgebraTag::Parabolic,
        idx,
    ))
}

/// `b_{i,j}`, the stabilizer of `F_{i,j}`.
pub fn borel_b(idx: OrbitIndex, n: usize) -> Result<SubalgebraSpec, FlagError> {
    Ok(with_origin(
        stabilizer(&flag_F(idx, n)?)?,
        SubalgebraTag::Borel,
        idx,
    ))
}

/// `n_{i,i} = [b_{i,i}, b_{i,i}]`: strictly upper triangular in the basis of `F_{i,i}`.
pub fn nilradical_n(i: usize, n: usize) -> Result<SubalgebraSpec, FlagError> {
    if i == 0 || i > n {
        return Err(FlagError::IndexOutOfRange { index: i, max: n });
    }
    let idx = OrbitIndex { i, j: i };
    let flag = flag_F(idx, n)?;
    let b = CMatrix::new(flag.basis().clone())?;
    let b_inv = b.try_inverse()?;
    let mut basis = Vec::new();
    for r in 0..n {
        for c in r + 1..n {
            basis.push(b.mul(&CMatrix::unit(n, r, c)).mul(&b_inv));
        }
    }
    SubalgebraSpec::new(n, basis, SubalgebraTag::Nilradical, Some(idx))
}

/// `k = gl(n-1) ⊕ gl(1)`, the fixed points of θ.
pub fn k_subalgebra(n: usize) -> SubalgebraSpec {
    let mut basis = Vec::new();
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            basis.push(CMatrix::unit(n, r, c));
        }
    }
    basis.push(CMatrix::unit(n, n - 1, n - 1));
    SubalgebraSpec::new(n, basis, SubalgebraTag::FixedPoint, None)
        .expect("elementary matrices are independent")
}

/// Whether θ maps the span into itself.
pub fn is_theta_stable(s: &SubalgebraSpec, tol: &Tolerances) -> Result<bool, FlagError> {
    let mut all: Vec<CMatrix> = s.basis().to_vec();
    all.extend(s.basis().iter().map(theta));
    Ok(numerical_rank(&stack_vectorized(&all, s.n()), tol)? == s.dim())
}

/// `dim p_{i,j}` from the Levi/nilradical count: `dim l + (n^2 - dim l) / 2`
/// with `dim l = (j-i+1)^2 + n-j+i-1`.
pub fn parabolic_dim_formula(idx: OrbitIndex, n: usize) -> usize {
    let l = idx.length();
    let levi = (l + 1) * (l + 1) + (n - l - 1);
    levi + (n * n - levi) / 2
}

/// `n^2 - n + 1 + (j - i)`.
pub fn saturation_dim_formula(idx: OrbitIndex, n: usize) -> usize {
    n * n - n + 1 + idx.length()
}

/// `d_n = n^2 - 2n + 1`.
pub fn nil_dim_formula(n: usize) -> usize {
    n * n - 2 * n + 1
}

/// Span equality check used by the catalog: `stabilizer(v F_+) = Ad(v) b_+ = b_{i,j}`.
pub fn v_carries_standard_flag(
    idx: OrbitIndex,
    n: usize,
    tol: &Tolerances,
) -> Result<bool, FlagError> {
    let v = v_matrix(idx, n)?;
    let moved = standard_flag(n).transform(&v)?;
    moved.same_as(&flag_F(idx, n)?, tol)
}
