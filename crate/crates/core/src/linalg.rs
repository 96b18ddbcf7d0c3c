//! Dense complex linear algebra kernel.
//!
//! Everything downstream is a spectrum, a rank or a projection, so this module
//! keeps a small surface: a square matrix newtype, an eigensolver (Hessenberg
//! reduction followed by shifted QR), an independent characteristic
//! polynomial / Aberth root route, SVD-based numerical rank and kernels, and
//! invariant-subspace tests.

use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;
use std::fmt;

pub type C64 = Complex64;
/// Rectangular complex matrix used for stacked vectorizations and bases.
pub type DMat = DMatrix<C64>;
pub type DVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

const QR_MAX_SWEEPS_PER_EIGENVALUE: usize = 60;
const SVD_MAX_ITERATIONS: usize = 10_000;
const ABERTH_MAX_ITERATIONS: usize = 2_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must have dimension at least 1")]
    Empty,
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("QR eigensolver did not converge on {label} after {iterations} iterations")]
    EigenNonConvergence { label: String, iterations: usize },
    #[error("eigenvalues of {label} fail the trace check: |sum - trace| = {defect:e}")]
    TraceCheck { label: String, defect: f64 },
    #[error("SVD did not converge on a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },
    #[error("polynomial root finder did not converge (degree {degree}, backward error {backward_error:e})")]
    RootNonConvergence { degree: usize, backward_error: f64 },
    #[error("basis is rank deficient: rank {rank} < {cols} columns")]
    RankDeficientBasis { rank: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
}

/// Tolerance triple shared by every numerical predicate in the crate.
///
/// `eig_match` is relative: the coincidence radius used when two eigenvalues
/// are compared is `eig_match * (1 + spectral scale)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub eig_match: f64,
    pub rank_rel: f64,
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eig_match: 1e-7,
            rank_rel: 1e-10,
            membership: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn new(eig_match: f64, rank_rel: f64, membership: f64) -> Self {
        assert!(
            eig_match >= 0.0 && rank_rel >= 0.0 && membership >= 0.0,
            "tolerances must be nonnegative"
        );
        Tolerances {
            eig_match,
            rank_rel,
            membership,
        }
    }

    pub fn with_eig_match(mut self, eig_match: f64) -> Self {
        self.eig_match = eig_match;
        self
    }

    /// Absolute coincidence radius for spectra of magnitude `scale`.
    pub fn match_radius(&self, scale: f64) -> f64 {
        self.eig_match * (1.0 + scale)
    }
}

/// A square, finite, complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMat);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{}", self.0)
    }
}

impl CMatrix {
    pub fn new(m: DMat) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(LinalgError::Empty);
        }
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(LinalgError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(CMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(LinalgError::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        CMatrix::new(DMat::from_fn(n, n, |r, c| rows[r][c]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        CMatrix::from_rows(&rows)
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        CMatrix(DMat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1);
        CMatrix(DMat::identity(n, n))
    }

    pub fn diag(values: &[C64]) -> Self {
        assert!(!values.is_empty());
        let n = values.len();
        CMatrix(DMat::from_fn(
            n,
            n,
            |r, c| if r == c { values[r] } else { ZERO },
        ))
    }

    pub fn real_diag(values: &[f64]) -> Self {
        let v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        CMatrix::diag(&v)
    }

    /// Elementary matrix with a one at the 0-based position `(row, col)`.
    pub fn unit(n: usize, row: usize, col: usize) -> Self {
        let mut m = DMat::zeros(n, n);
        m[(row, col)] = ONE;
        CMatrix(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_dmat(&self) -> &DMat {
        &self.0
    }

    pub fn into_dmat(self) -> DMat {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    /// Top-left `i x i` block (`1 <= i <= n`).
    pub fn corner(&self, i: usize) -> Result<CMatrix, LinalgError> {
        if i == 0 || i > self.n() {
            return Err(LinalgError::IndexOutOfRange {
                index: i,
                max: self.n(),
            });
        }
        Ok(CMatrix(self.0.view((0, 0), (i, i)).into_owned()))
    }

    /// The `(n-1) x (n-1)` cutoff. Fails for `n = 1`.
    pub fn cutoff(&self) -> Result<CMatrix, LinalgError> {
        if self.n() < 2 {
            return Err(LinalgError::IndexOutOfRange { index: 0, max: 0 });
        }
        self.corner(self.n() - 1)
    }

    /// Embeds a smaller square matrix in the top-left corner of an `n x n` zero matrix.
    pub fn embed(&self, n: usize) -> CMatrix {
        assert!(n >= self.n());
        let mut m = DMat::zeros(n, n);
        m.view_mut((0, 0), (self.n(), self.n())).copy_from(&self.0);
        CMatrix(m)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &other.0)
    }

    /// `[self, other] = self*other - other*self`.
    pub fn bracket(&self, other: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn pow(&self, k: usize) -> CMatrix {
        let mut acc = CMatrix::identity(self.n());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix(self.0.transpose())
    }

    pub fn try_inverse(&self) -> Result<CMatrix, LinalgError> {
        self.0
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
            .map(CMatrix)
            .ok_or(LinalgError::Singular)
    }

    /// Row-major vectorization as an `n^2` column.
    pub fn vectorize(&self) -> DVec {
        let n = self.n();
        DVec::from_fn(n * n, |k, _| self.0[(k / n, k % n)])
    }

    pub fn from_vector(v: &DVec, n: usize) -> CMatrix {
        assert_eq!(v.len(), n * n);
        CMatrix(DMat::from_fn(n, n, |r, c| v[r * n + c]))
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        (&self.0 - &other.0)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Stacks vectorizations of equally sized square matrices as columns.
pub fn stack_vectorized<'a, I>(mats: I, n: usize) -> DMat
where
    I: IntoIterator<Item = &'a CMatrix>,
{
    let cols: Vec<DVec> = mats.into_iter().map(|m| m.vectorize()).collect();
    if cols.is_empty() {
        return DMat::zeros(n * n, 0);
    }
    DMat::from_columns(&cols)
}

/// Multiset of eigenvalues with multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<C64>,
}

impl Spectrum {
    /// Builds a spectrum, sorting values lexicographically by (re, im).
    pub fn new(mut values: Vec<C64>) -> Self {
        sort_lexicographic(&mut values);
        Spectrum { values }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> C64 {
        self.values.iter().sum()
    }

    pub fn scale(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn sort_lexicographic(values: &mut [C64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn abs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Diagonal similarity by powers of two that equalizes row and column norms.
fn balance(a: &mut DMat) {
    let n = a.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += abs1(a[(j, i)]);
                    r += abs1(a[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form, in place.
fn hessenberg(a: &mut DMat) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut v: Vec<C64> = (0..len).map(|t| a[(k + 1 + t, k)]).collect();
        let xnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if v[0].norm() == 0.0 {
            ONE
        } else {
            v[0] / v[0].norm()
        };
        let alpha = -phase * xnorm;
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // Left: rows k+1.. of a -= 2 v (v^H a)
        for col in 0..n {
            let mut dot = ZERO;
            for t in 0..len {
                dot += v[t].conj() * a[(k + 1 + t, col)];
            }
            for t in 0..len {
                a[(k + 1 + t, col)] -= 2.0 * v[t] * dot;
            }
        }
        // Right: columns k+1.. of a -= 2 (a v) v^H
        for row in 0..n {
            let mut dot = ZERO;
            for t in 0..len {
                dot += a[(row, k + 1 + t)] * v[t];
            }
            for t in 0..len {
                a[(row, k + 1 + t)] -= 2.0 * dot * v[t].conj();
            }
        }
        for t in 1..len {
            a[(k + 1 + t, k)] = ZERO;
        }
    }
}

fn givens(a: C64, b: C64) -> (C64, C64) {
    let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if r == 0.0 {
        (ONE, ZERO)
    } else {
        (a / r, b / r)
    }
}

/// Shifted QR on an upper Hessenberg matrix; returns eigenvalues unsorted.
fn hessenberg_qr_eigenvalues(h: &mut DMat, label: &str) -> Result<Vec<C64>, LinalgError> {
    let n = h.nrows();
    let mut eig = Vec::with_capacity(n);
    let mut hi = n as isize - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let eps = f64::EPSILON;
    while hi >= 0 {
        let hiu = hi as usize;
        if hiu == 0 {
            eig.push(h[(0, 0)]);
            break;
        }
        // Locate the start of the active unreduced block.
        let mut lo = hiu;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if diag == 0.0 {
                diag = h.norm();
            }
            if sub <= eps * diag {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hiu {
            eig.push(h[(hiu, hiu)]);
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > QR_MAX_SWEEPS_PER_EIGENVALUE {
            return Err(LinalgError::EigenNonConvergence {
                label: label.to_string(),
                iterations: total,
            });
        }
        let a = h[(hiu - 1, hiu - 1)];
        let b = h[(hiu - 1, hiu)];
        let c = h[(hiu, hiu - 1)];
        let d = h[(hiu, hiu)];
        let shift = if iter.is_multiple_of(11) {
            // Exceptional shift to break cycles.
            d + C64::new(0.75 * c.norm(), 0.3 * c.norm())
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() <= (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for k in lo..=hiu {
            h[(k, k)] -= shift;
        }
        let mut rots = Vec::with_capacity(hiu - lo);
        for k in lo..hiu {
            let (cs, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            for col in k..=hiu {
                let x = h[(k, col)];
                let y = h[(k + 1, col)];
                h[(k, col)] = cs.conj() * x + sn.conj() * y;
                h[(k + 1, col)] = -sn * x + cs * y;
            }
            h[(k + 1, k)] = ZERO;
            rots.push((cs, sn));
        }
        for (idx, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + idx;
            let top = (k + 2).min(hiu);
            for row in lo..=top {
                let x = h[(row, k)];
                let y = h[(row, k + 1)];
                h[(row, k)] = x * cs + y * sn;
                h[(row, k + 1)] = -x * sn.conj() + y * cs.conj();
            }
        }
        for k in lo..=hiu {
            h[(k, k)] += shift;
        }
    }
    Ok(eig)
}

/// All eigenvalues with algebraic multiplicity, lexicographically ordered.
pub fn eigenvalues(a: &CMatrix) -> Result<Spectrum, LinalgError> {
    eigenvalues_labeled(a, "matrix")
}

/// As [`eigenvalues`], naming the matrix in failure values.
pub fn eigenvalues_labeled(a: &CMatrix, label: &str) -> Result<Spectrum, LinalgError> {
    let n = a.n();
    let mut h = a.as_dmat().clone();
    balance(&mut h);
    hessenberg(&mut h);
    let values = hessenberg_qr_eigenvalues(&mut h, label)?;
    debug_assert_eq!(values.len(), n);
    let spectrum = Spectrum::new(values);
    let defect = (spectrum.sum() - a.trace()).norm();
    let bound = 1e-10 * (n as f64) * (1.0 + a.norm());
    if defect > bound {
        return Err(LinalgError::TraceCheck {
            label: label.to_string(),
            defect,
        });
    }
    Ok(spectrum)
}

/// Coefficients of `det(lambda I - a)`, monic, descending degree
/// (Faddeev–LeVerrier recursion).
pub fn char_poly(a: &CMatrix) -> Vec<C64> {
    let n = a.n();
    let mut coeffs = vec![ZERO; n + 1];
    coeffs[0] = ONE;
    let ident = DMat::identity(n, n);
    let mut m = DMat::zeros(n, n);
    for k in 1..=n {
        m = a.as_dmat() * &m + &ident * coeffs[k - 1];
        let am = a.as_dmat() * &m;
        coeffs[k] = -am.trace() / (k as f64);
    }
    coeffs
}

fn horner(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = coeffs[0];
    let mut dp = ZERO;
    for &c in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn backward_error(coeffs: &[C64], z: C64) -> f64 {
    let (p, _) = horner(coeffs, z);
    let az = z.norm();
    let mut scale = 0.0;
    for c in coeffs {
        scale = scale * az + c.norm();
    }
    if scale == 0.0 {
        0.0
    } else {
        p.norm() / scale
    }
}

/// Roots of a polynomial given by descending coefficients (Aberth–Ehrlich).
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>, LinalgError> {
    let lead =
        coeffs
            .iter()
            .position(|c| c.norm() != 0.0)
            .ok_or(LinalgError::RootNonConvergence {
                degree: 0,
                backward_error: f64::INFINITY,
            })?;
    let c0 = coeffs[lead];
    let monic: Vec<C64> = coeffs[lead..].iter().map(|c| c / c0).collect();
    let degree = monic.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    // Trailing zero coefficients are exact zero roots.
    let zeros = monic.iter().rev().take_while(|c| c.norm() == 0.0).count();
    let reduced = &monic[..monic.len() - zeros];
    let deg = reduced.len() - 1;
    let mut roots = vec![ZERO; zeros];
    if deg == 0 {
        return Ok(roots);
    }
    if deg == 1 {
        roots.push(-reduced[1]);
        return Ok(roots);
    }
    let center = -reduced[1] / (deg as f64);
    let radius = (1..=deg)
        .map(|k| reduced[k].norm().powf(1.0 / k as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<C64> = (0..deg)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / (deg as f64) + 0.7;
            center + C64::from_polar(radius, theta)
        })
        .collect();
    let eps = f64::EPSILON;
    let mut done = false;
    for _ in 0..ABERTH_MAX_ITERATIONS {
        let mut max_rel_step = 0.0_f64;
        for k in 0..deg {
            let (p, dp) = horner(reduced, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = if dp.norm() == 0.0 {
                C64::new(eps.sqrt(), 0.0) * (1.0 + z[k].norm())
            } else {
                p / dp
            };
            let mut s = ZERO;
            for j in 0..deg {
                if j != k {
                    let diff = z[k] - z[j];
                    if diff.norm() > 0.0 {
                        s += ONE / diff;
                    }
                }
            }
            let denom = ONE - ratio * s;
            let step = if denom.norm() == 0.0 {
                ratio
            } else {
                ratio / denom
            };
            z[k] -= step;
            max_rel_step = max_rel_step.max(step.norm() / (1.0 + z[k].norm()));
        }
        let berr = z
            .iter()
            .map(|&r| backward_error(reduced, r))
            .fold(0.0, f64::max);
        if berr <= 4.0 * (deg as f64) * eps || max_rel_step <= 2.0 * eps {
            done = true;
            break;
        }
    }
    let berr = z
        .iter()
        .map(|&r| backward_error(reduced, r))
        .fold(0.0, f64::max);
    if !done && berr > 1e-10 {
        return Err(LinalgError::RootNonConvergence {
            degree: deg,
            backward_error: berr,
        });
    }
    roots.extend(z);
    Ok(roots)
}

/// Eigenvalues through the characteristic polynomial and Aberth iteration.
/// Independent of the QR route; intended for small `n`.
pub fn eigenvalues_via_char_poly(a: &CMatrix) -> Result<Spectrum, LinalgError> {
    Ok(Spectrum::new(poly_roots(&char_poly(a))?))
}

/// Singular values in descending order.
/// nalgebra's bidiagonal QR can stall on exactly structured inputs. Singular
/// values and right singular vectors are invariant under `m -> q m` with `q`
/// unitary, so retry after mixing the rows with a fixed random unitary.
fn svd_with_fallback(m: &DMat, compute_v: bool) -> Option<nalgebra::linalg::SVD<C64, Dyn, Dyn>> {
    let attempt = |a: DMat| {
        nalgebra::linalg::SVD::try_new(a, false, compute_v, f64::EPSILON, SVD_MAX_ITERATIONS)
    };
    attempt(m.clone())
        .or_else(|| (0..3u64).find_map(|salt| attempt(fixed_unitary(m.nrows(), salt) * m)))
}

fn fixed_unitary(n: usize, salt: u64) -> DMat {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e37_79b9 ^ (n as u64) ^ (salt << 32));
    let g = DMat::from_fn(n, n, |_, _| {
        C64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    g.qr().q()
}

pub fn singular_values(m: &DMat) -> Result<Vec<f64>, LinalgError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let svd = svd_with_fallback(m, false).ok_or(LinalgError::SvdNonConvergence {
        rows: m.nrows(),
        cols: m.ncols(),
    })?;
    Ok(svd.singular_values.iter().copied().collect())
}

fn rank_from_singular_values(sv: &[f64], rows: usize, cols: usize, tol: &Tolerances) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = tol.rank_rel * smax * rows.max(cols) as f64;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Number of singular values above `rank_rel * sigma_max * max(rows, cols)`.
pub fn numerical_rank(m: &DMat, tol: &Tolerances) -> Result<usize, LinalgError> {
    let sv = singular_values(m)?;
    Ok(rank_from_singular_values(&sv, m.nrows(), m.ncols(), tol))
}

/// Orthonormal basis of the numerical kernel of `m`, as columns of length `m.ncols()`.
pub fn kernel_basis(m: &DMat, tol: &Tolerances) -> Result<Vec<DVec>, LinalgError> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok(Vec::new());
    }
    // Pad wide matrices so the thin SVD exposes the full right singular basis.
    let work = if m.nrows() < cols {
        let mut padded = DMat::zeros(cols, cols);
        padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = svd_with_fallback(&work, true).ok_or(LinalgError::SvdNonConvergence {
        rows: m.nrows(),
        cols,
    })?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let rank = rank_from_singular_values(&sv, m.nrows(), cols, tol);
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok((rank..cols)
        .map(|r| v_t.row(r).adjoint().into_owned())
        .collect())
}

/// Unit right singular vector of the smallest singular value of a square matrix.
pub fn null_vector(m: &DMat) -> Result<DVec, LinalgError> {
    let n = m.ncols();
    if n == 0 || m.nrows() != n {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: n,
        });
    }
    let svd =
        svd_with_fallback(m, true).ok_or(LinalgError::SvdNonConvergence { rows: n, cols: n })?;
    let (pos, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc },
            );
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(v_t.row(pos).adjoint().into_owned())
}

/// Matrix of `z -> a z - z a` acting on row-major vectorizations.
pub fn commutator_operator(a: &CMatrix) -> DMat {
    let n = a.n();
    let a = a.as_dmat();
    let mut op = DMat::zeros(n * n, n * n);
    // (az)_{rc} = sum_k a_{rk} z_{kc};  (za)_{rc} = sum_k z_{rk} a_{kc}
    for r in 0..n {
        for c in 0..n {
            let row = r * n + c;
            for k in 0..n {
                op[(row, k * n + c)] += a[(r, k)];
                op[(row, r * n + k)] -= a[(k, c)];
            }
        }
    }
    op
}

/// Orthonormal basis (as n^2-vectors) of the centralizer `{z : az = za}`.
pub fn centralizer_basis(a: &CMatrix, tol: &Tolerances) -> Result<Vec<CMatrix>, LinalgError> {
    let n = a.n();
    // Scale-free: the kernel of ad_a equals the kernel of ad_{a/|a|}.
    let norm = a.norm();
    let scaled = if norm > 0.0 {
        a.scale(C64::new(1.0 / norm, 0.0))
    } else {
        a.clone()
    };
    let op = commutator_operator(&scaled);
    Ok(kernel_basis(&op, tol)?
        .iter()
        .map(|v| CMatrix::from_vector(v, n))
        .collect())
}

/// Orthonormal basis for the column span of `m` (thin QR, rank assumed full).
pub fn orthonormal_columns(m: &DMat) -> DMat {
    if m.ncols() == 0 {
        return DMat::zeros(m.nrows(), 0);
    }
    m.clone().qr().q()
}

/// `|| v - Q Q^H v ||` for orthonormal columns `q`.
pub fn projection_residual(q: &DMat, v: &DVec) -> f64 {
    if q.ncols() == 0 {
        return v.norm();
    }
    let coeffs = q.adjoint() * v;
    (v - q * coeffs).norm()
}

/// Outcome of [`is_invariant_subspace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceTest {
    pub invariant: bool,
    /// `||(I - P) a B|| / ||a B||`, zero when `a B = 0`.
    pub residual: f64,
}

/// Whether `a` maps the column span of `basis` into itself.
pub fn is_invariant_subspace(
    a: &CMatrix,
    basis: &DMat,
    tol: &Tolerances,
) -> Result<SubspaceTest, LinalgError> {
    if basis.nrows() != a.n() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n(),
            actual: basis.nrows(),
        });
    }
    let k = basis.ncols();
    let rank = numerical_rank(basis, tol)?;
    if rank < k {
        return Err(LinalgError::RankDeficientBasis { rank, cols: k });
    }
    let image = a.as_dmat() * basis;
    let mut joined = DMat::zeros(a.n(), 2 * k);
    joined.view_mut((0, 0), (a.n(), k)).copy_from(basis);
    joined.view_mut((0, k), (a.n(), k)).copy_from(&image);
    let invariant = numerical_rank(&joined, tol)? == k;
    let q = orthonormal_columns(basis);
    let projected = &q * (q.adjoint() * &image);
    let inorm = image.norm();
    let residual = if inorm == 0.0 {
        0.0
    } else {
        (&image - projected).norm() / inorm
    };
    Ok(SubspaceTest {
        invariant,
        residual,
    })
}

/// Least-squares coefficients of `v` in the column basis `b` (full column rank).
pub fn solve_least_squares(b: &DMat, v: &DVec) -> Result<DVec, LinalgError> {
    let svd =
        nalgebra::linalg::SVD::try_new(b.clone(), true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
            .ok_or(LinalgError::SvdNonConvergence {
                rows: b.nrows(),
                cols: b.ncols(),
            })?;
    svd.solve(v, 0.0).map_err(|_| LinalgError::Singular)
}
