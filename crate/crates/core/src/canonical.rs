//! The bordered-diagonal normal form Ξ, its U/L pattern, the reduction of a
//! matrix with regular semisimple cutoff to a θ-stable parabolic, and the
//! n-strong-regularity and strong-nilpotency tests.

use crate::flags::{
    flag_P, nilradical_n, parabolic_p, permutation_matrix, FlagError, OrbitIndex, PartialFlag,
};
use crate::linalg::{
    centralizer_basis, eigenvalues, eigenvalues_labeled, null_vector, numerical_rank,
    singular_values, stack_vectorized, CMatrix, DMat, LinalgError, Tolerances, C64, ONE, ZERO,
};
use crate::orbits::{
    ad, run_trials, sample_in, sample_k, Execution, KElement, OrbitError, SeededRng,
};
use crate::spectra::{coincidence_count, gz_function, match_spectra, SpectraError};
use serde::Serialize;
use std::fmt;

/// The cutoff counts as regular semisimple when its smallest eigenvalue gap
/// exceeds `GAP_FACTOR * eig_match * (1 + scale)`.
pub const GAP_FACTOR: f64 = 1e3;
/// Relative gaps below this are accepted but logged as ill conditioned.
pub const WARN_RELATIVE_GAP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CanonicalError {
    #[error("need n >= 2, got n={0}")]
    TooSmall(usize),
    #[error("cutoff is not regular semisimple: eigenvalue gap {gap:.3e} <= {threshold:.3e}")]
    NotRegularSemisimple { gap: f64, threshold: f64 },
    #[error("invalid Ξ element: {0}")]
    InvalidXi(String),
    #[error("index {index} has z*y != 0 but lies among the first {shared} (shared) indices")]
    PatternViolation { index: usize, shared: usize },
    #[error("pattern of length {len} does not fit orbit length {length} with n={n}")]
    PatternLength { len: usize, length: usize, n: usize },
    #[error(
        "strong-regularity methods disagree: centralizer test {method_a}, gradient rank {gradient_rank} of {expected}"
    )]
    MethodDisagreement {
        method_a: bool,
        gradient_rank: usize,
        expected: usize,
    },
    #[error("could not draw a valid Ξ element after {0} attempts")]
    SamplingFailed(usize),
    #[error(transparent)]
    Flag(#[from] FlagError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Bordered diagonal matrix `[[diag(h), y], [z^T, w]]` whose first `l`
/// indices carry the eigenvalues shared by `x` and `x_{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiElement {
    pub n: usize,
    /// Number of coincidences; `z_i y_i = 0` exactly for `i < l`.
    pub l: usize,
    pub h: Vec<C64>,
    pub y: Vec<C64>,
    pub z: Vec<C64>,
    pub w: C64,
}

impl XiElement {
    fn entry_scale(&self) -> f64 {
        self.h
            .iter()
            .chain(&self.y)
            .chain(&self.z)
            .chain(std::iter::once(&self.w))
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    fn zero_threshold(&self, tol: &Tolerances) -> f64 {
        tol.eig_match * (1.0 + self.entry_scale())
    }

    /// Assembles the matrix without spectral validation.
    pub fn matrix(&self) -> Result<CMatrix, CanonicalError> {
        let n = self.n;
        if n < 2 {
            return Err(CanonicalError::TooSmall(n));
        }
        for (name, v) in [("h", &self.h), ("y", &self.y), ("z", &self.z)] {
            if v.len() != n - 1 {
                return Err(CanonicalError::InvalidXi(format!(
                    "{name} has length {}, expected {}",
                    v.len(),
                    n - 1
                )));
            }
        }
        let mut m = DMat::zeros(n, n);
        for a in 0..n - 1 {
            m[(a, a)] = self.h[a];
            m[(a, n - 1)] = self.y[a];
            m[(n - 1, a)] = self.z[a];
        }
        m[(n - 1, n - 1)] = self.w;
        Ok(CMatrix::new(m)?)
    }

    /// Random element with `l` planted coincidences. The number of `U`
    /// marks is uniform on `0..=l`; draws failing [`xi_build`] are redrawn.
    pub fn random(
        n: usize,
        l: usize,
        rng: &mut SeededRng,
        tol: &Tolerances,
    ) -> Result<XiElement, CanonicalError> {
        if n < 2 {
            return Err(CanonicalError::TooSmall(n));
        }
        if l > n - 1 {
            return Err(SpectraError::LevelOutOfRange { l, n }.into());
        }
        const ATTEMPTS: usize = 100;
        for _ in 0..ATTEMPTS {
            let h: Vec<C64> = (0..n - 1).map(|_| rng.complex_gaussian()).collect();
            let uppers = rng.index(l + 1);
            let mut marks: Vec<Mark> = (0..l)
                .map(|a| if a < uppers { Mark::U } else { Mark::L })
                .collect();
            rng.shuffle(&mut marks);
            let mut y = Vec::with_capacity(n - 1);
            let mut z = Vec::with_capacity(n - 1);
            for a in 0..n - 1 {
                let (gy, gz) = (rng.complex_gaussian(), rng.complex_gaussian());
                match marks.get(a) {
                    Some(Mark::U) => {
                        y.push(gy);
                        z.push(ZERO);
                    }
                    Some(Mark::L) => {
                        y.push(ZERO);
                        z.push(gz);
                    }
                    None => {
                        y.push(gy);
                        z.push(gz);
                    }
                }
            }
            let e = XiElement {
                n,
                l,
                h,
                y,
                z,
                w: rng.complex_gaussian(),
            };
            if xi_build(&e, tol).is_ok() {
                return Ok(e);
            }
        }
        Err(CanonicalError::SamplingFailed(ATTEMPTS))
    }
}

/// Smallest pairwise distance, `inf` for fewer than two values.
fn min_gap(values: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for (a, u) in values.iter().enumerate() {
        for v in &values[a + 1..] {
            gap = gap.min((u - v).norm());
        }
    }
    gap
}

fn gap_threshold(tol: &Tolerances, scale: f64) -> f64 {
    GAP_FACTOR * tol.eig_match * (1.0 + scale)
}

/// Assembles the matrix and checks the Ξ invariants: distinct `h`, the
/// product pattern, and that the shared eigenvalues are exactly `h_1..h_l`.
pub fn xi_build(e: &XiElement, tol: &Tolerances) -> Result<CMatrix, CanonicalError> {
    let x = e.matrix()?;
    let n = e.n;
    if e.l > n - 1 {
        return Err(CanonicalError::InvalidXi(format!(
            "l = {} exceeds n - 1",
            e.l
        )));
    }
    let scale = e.entry_scale();
    let gap = min_gap(&e.h);
    let threshold = gap_threshold(tol, scale);
    if gap <= threshold {
        return Err(CanonicalError::NotRegularSemisimple { gap, threshold });
    }
    let thr = e.zero_threshold(tol);
    for a in 0..n - 1 {
        let zero_product = e.y[a].norm() <= thr || e.z[a].norm() <= thr;
        if a < e.l && !zero_product {
            return Err(CanonicalError::PatternViolation {
                index: a + 1,
                shared: e.l,
            });
        }
        if a >= e.l && zero_product {
            return Err(CanonicalError::InvalidXi(format!(
                "index {} should be unshared but z*y vanishes",
                a + 1
            )));
        }
    }
    let report = coincidence_count(&x, tol)?;
    if report.l != e.l {
        return Err(CanonicalError::InvalidXi(format!(
            "coincidence count {} differs from l = {}",
            report.l, e.l
        )));
    }
    for pair in &report.pairs {
        let hit = e.h[..e.l]
            .iter()
            .any(|h| (h - pair.cutoff_value).norm() <= report.radius);
        if !hit {
            return Err(CanonicalError::InvalidXi(format!(
                "shared eigenvalue {} is not among h_1..h_l",
                pair.cutoff_value
            )));
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mark {
    /// `z_i = 0`: `e_i` is an eigenvector of `x`.
    U,
    /// `y_i = 0`: `e_i` is an eigenvector of `x^T`.
    L,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ULPattern {
    pub marks: Vec<Mark>,
}

impl ULPattern {
    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn uppers(&self) -> usize {
        self.marks.iter().filter(|m| **m == Mark::U).count()
    }
}

impl fmt::Display for ULPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<&str> = self
            .marks
            .iter()
            .map(|m| match m {
                Mark::U => "U",
                Mark::L => "L",
            })
            .collect();
        write!(f, "[{}]", s.join(","))
    }
}

/// `U` where `z_i` vanishes (including when `y_i` vanishes too), `L` where
/// only `y_i` does, over the first `l` indices.
pub fn xi_pattern(e: &XiElement, tol: &Tolerances) -> Result<ULPattern, CanonicalError> {
    let thr = e.zero_threshold(tol);
    let mut marks = Vec::with_capacity(e.l);
    for a in 0..e.l {
        if e.z[a].norm() <= thr {
            marks.push(Mark::U);
        } else if e.y[a].norm() <= thr {
            marks.push(Mark::L);
        } else {
            return Err(CanonicalError::PatternViolation {
                index: a + 1,
                shared: e.l,
            });
        }
    }
    Ok(ULPattern { marks })
}

/// Partial flag stabilized by a Ξ element with the given pattern: the
/// `U`-marked `e_i` as singleton steps, then the block
/// `{e_{c+1}, ..., e_{n-1}, e_n}` (`c` = pattern length, `length = n-1-c`),
/// then the `L`-marked `e_i`.
pub fn stabilized_flag(
    p: &ULPattern,
    length: usize,
    n: usize,
) -> Result<PartialFlag, CanonicalError> {
    if n < 2 || p.len() + length + 1 != n {
        return Err(CanonicalError::PatternLength {
            len: p.len(),
            length,
            n,
        });
    }
    let c = p.len();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut steps = Vec::new();
    for (a, m) in p.marks.iter().enumerate() {
        if *m == Mark::U {
            order.push(a);
            steps.push(order.len());
        }
    }
    order.extend(c..n);
    steps.push(order.len());
    for (a, m) in p.marks.iter().enumerate() {
        if *m == Mark::L {
            order.push(a);
            steps.push(order.len());
        }
    }
    let mut basis = DMat::zeros(n, n);
    for (col, &e) in order.iter().enumerate() {
        basis[(e, col)] = ONE;
    }
    Ok(PartialFlag::new(steps, basis)?)
}

/// Output of [`reduce_to_xi`].
#[derive(Debug, Clone)]
pub struct XiReduction {
    /// `ad(k, x)` equals `xi.matrix()` up to rounding and the snapped entries.
    pub k: KElement,
    pub xi: XiElement,
    pub min_gap: f64,
    pub gap_threshold: f64,
    /// `σ_max / σ_min` of the eigenvector matrix of the cutoff.
    pub eigvec_condition: f64,
    /// Largest entry set to zero to make `z_i y_i = 0` exact on shared indices.
    pub snap_defect: f64,
    /// Largest off-diagonal entry of the conjugated cutoff.
    pub offdiag_residual: f64,
}

/// Conjugates `x` by `diag(P^{-1}, 1)`, `P` an eigenbasis of `x_{n-1}`, with
/// shared eigenvalues first (in lexicographic order) and unshared ones after.
pub fn reduce_to_xi(x: &CMatrix, tol: &Tolerances) -> Result<XiReduction, CanonicalError> {
    let n = x.n();
    if n < 2 {
        return Err(CanonicalError::TooSmall(n));
    }
    let m = x.cutoff()?;
    let cut = eigenvalues_labeled(&m, "cutoff")?;
    let full = eigenvalues_labeled(x, "full")?;
    let scale = cut.scale().max(full.scale());
    let gap = min_gap(cut.values());
    let threshold = gap_threshold(tol, scale);
    if gap <= threshold {
        return Err(CanonicalError::NotRegularSemisimple { gap, threshold });
    }
    let report = match_spectra(&cut, &full, tol);
    let mut shared: Vec<usize> = report.pairs.iter().map(|p| p.first).collect();
    shared.sort_unstable();
    let mut order = shared.clone();
    order.extend((0..n - 1).filter(|a| !shared.contains(a)));

    let mut p = DMat::zeros(n - 1, n - 1);
    for (col, &a) in order.iter().enumerate() {
        let h = cut.values()[a];
        let shifted = m.as_dmat() - DMat::identity(n - 1, n - 1) * h;
        let mut v = null_vector(&shifted)?;
        // fix the phase: largest component real and positive
        let lead = v
            .iter()
            .copied()
            .fold(ZERO, |acc, c| if c.norm() > acc.norm() { c } else { acc });
        v *= lead.conj() / lead.norm();
        p.set_column(col, &v);
    }
    let sv = singular_values(&p)?;
    let eigvec_condition = sv[0] / sv[sv.len() - 1];
    if gap / (1.0 + scale) < WARN_RELATIVE_GAP {
        log::warn!(
            "near-degenerate cutoff spectrum: gap {gap:.3e}, eigenvector condition {eigvec_condition:.3e}"
        );
    }
    let p_inv = p.try_inverse().ok_or(LinalgError::Singular)?;
    let k = KElement::new(p_inv, ONE)?;
    let image = ad(&k, x)?;

    let mut h = Vec::with_capacity(n - 1);
    let mut y = Vec::with_capacity(n - 1);
    let mut z = Vec::with_capacity(n - 1);
    let mut offdiag_residual = 0.0_f64;
    for a in 0..n - 1 {
        h.push(image.get(a, a));
        y.push(image.get(a, n - 1));
        z.push(image.get(n - 1, a));
        for b in 0..n - 1 {
            if a != b {
                offdiag_residual = offdiag_residual.max(image.get(a, b).norm());
            }
        }
    }
    let thr = tol.eig_match * (1.0 + image.norm());
    let mut snap_defect = 0.0_f64;
    for a in 0..shared.len() {
        let (ay, az) = (y[a].norm(), z[a].norm());
        if ay <= thr && az <= thr {
            snap_defect = snap_defect.max(ay).max(az);
            y[a] = ZERO;
            z[a] = ZERO;
        } else if az <= ay {
            snap_defect = snap_defect.max(az);
            z[a] = ZERO;
        } else {
            snap_defect = snap_defect.max(ay);
            y[a] = ZERO;
        }
    }
    let xi = XiElement {
        n,
        l: shared.len(),
        h,
        y,
        z,
        w: image.get(n - 1, n - 1),
    };
    Ok(XiReduction {
        k,
        xi,
        min_gap: gap,
        gap_threshold: threshold,
        eigvec_condition,
        snap_defect,
        offdiag_residual,
    })
}

#[derive(Debug, Clone)]
pub struct CanonicalFormResult {
    /// Total conjugator: the `K`-permutation composed with the eigenbasis change.
    pub k: KElement,
    pub idx: OrbitIndex,
    /// `ad(k, x)`.
    pub image: CMatrix,
    /// Distance of `image` from `p_idx`.
    pub residual: f64,
    pub inside: bool,
    /// Coincidence count; `idx.j - idx.i = n - 1 - l`.
    pub l: usize,
    pub pattern: ULPattern,
    pub flag: PartialFlag,
    pub reduction: XiReduction,
}

/// `K`-conjugates `x` (with regular semisimple cutoff) into `p_{k, k+n-1-l}`
/// where `l` is the coincidence count and `k - 1` the number of `U` marks.
pub fn canonical_form(
    x: &CMatrix,
    tol: &Tolerances,
) -> Result<CanonicalFormResult, CanonicalError> {
    let n = x.n();
    let reduction = reduce_to_xi(x, tol)?;
    let pattern = xi_pattern(&reduction.xi, tol)?;
    let c = reduction.xi.l;
    let length = n - 1 - c;
    let start = pattern.uppers() + 1;
    let idx = OrbitIndex::new(start, start + length, n)?;
    let flag = stabilized_flag(&pattern, length, n)?;

    // U marks -> 1..start-1, block -> start..start+length-1, L marks -> after.
    let mut image_of = vec![0usize; n - 1];
    let (mut next_u, mut next_l) = (1, start + length);
    for (a, m) in pattern.marks.iter().enumerate() {
        match m {
            Mark::U => {
                image_of[a] = next_u;
                next_u += 1;
            }
            Mark::L => {
                image_of[a] = next_l;
                next_l += 1;
            }
        }
    }
    for (offset, a) in (c..n - 1).enumerate() {
        image_of[a] = start + offset;
    }
    let perm = permutation_matrix(&image_of);
    let pi = KElement::new(perm.into_dmat(), ONE)?;
    debug_assert!(flag
        .transform(&pi.matrix())
        .and_then(|f| f.same_as(&flag_P(idx, n)?, tol))
        .unwrap_or(false));

    let total = pi.compose(&reduction.k);
    let image = ad(&total, x)?;
    let membership = parabolic_p(idx, n)?.contains(&image, tol);
    Ok(CanonicalFormResult {
        k: total,
        idx,
        image,
        residual: membership.residual,
        inside: membership.inside,
        l: c,
        pattern,
        flag,
        reduction,
    })
}

/// Centralizer dimension equals the matrix size.
pub fn is_regular(y: &CMatrix, tol: &Tolerances) -> Result<bool, CanonicalError> {
    Ok(centralizer_basis(y, tol)?.len() == y.n())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongRegularity {
    pub strongly_regular: bool,
    pub x_regular: bool,
    pub cutoff_regular: bool,
    /// Rank of the stacked centralizer bases of `x` and `embed(x_{n-1})`.
    pub centralizer_span: usize,
    pub centralizer_dims: (usize, usize),
    pub gradient_rank: usize,
}

/// Gradients of `tr(x_{n-1}^j)` (`j < n`) and `tr(x^j)` (`j <= n`) under the
/// trace pairing: `j * embed(x_{n-1}^{j-1})` and `j * x^{j-1}`.
pub fn gz_gradients(x: &CMatrix) -> Result<Vec<CMatrix>, CanonicalError> {
    let n = x.n();
    if n < 2 {
        return Err(CanonicalError::TooSmall(n));
    }
    let cut = x.cutoff()?;
    let mut out = Vec::with_capacity(2 * n - 1);
    for j in 1..n {
        out.push(cut.pow(j - 1).embed(n).scale(C64::new(j as f64, 0.0)));
    }
    for j in 1..=n {
        out.push(x.pow(j - 1).scale(C64::new(j as f64, 0.0)));
    }
    Ok(out)
}

/// Largest relative error between [`gz_gradients`] and central differences
/// of the trace functions along every elementary direction.
///
/// `tr(x^j)` is a polynomial of degree `j` along any line, so the central
/// stencil of order `2 * ceil(j / 2)` has no truncation error and `step`
/// can be moderate (about `0.1 |x|`), leaving only rounding error.
pub fn gradient_fd_error(x: &CMatrix, step: f64) -> Result<f64, CanonicalError> {
    let n = x.n();
    let grads = gz_gradients(x)?;
    let funcs: Vec<(usize, usize)> = (1..n)
        .map(|j| (n - 1, j))
        .chain((1..=n).map(|j| (n, j)))
        .collect();
    let mut worst = 0.0_f64;
    for ((level, power), g) in funcs.iter().zip(&grads) {
        let weights = central_weights(power.div_ceil(2));
        let mut num = 0.0_f64;
        for r in 0..n {
            for c in 0..n {
                let e = CMatrix::unit(n, r, c);
                let mut fd = ZERO;
                for (k, w) in weights.iter().enumerate() {
                    let shift = e.scale(C64::new(step * (k + 1) as f64, 0.0));
                    let plus = gz_function(&x.add(&shift), *level, *power)?;
                    let minus = gz_function(&x.sub(&shift), *level, *power)?;
                    fd += (plus - minus) * *w;
                }
                fd /= step;
                // <g, E_rc> = tr(g E_rc) = g[c, r]
                num = num.max((fd - g.get(c, r)).norm());
            }
        }
        worst = worst.max(num / g.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Weights `c_k`, `k = 1..=m`, of the order-`2m` central first-derivative
/// stencil `f'(0) ≈ Σ c_k (f(kh) - f(-kh)) / h`.
fn central_weights(m: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    (1..=m)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * fact(m) * fact(m) / (k as f64 * fact(m - k) * fact(m + k))
        })
        .collect()
}

/// Both criteria for n-strong regularity; an error if they disagree.
///
/// Method A: `x` and `x_{n-1}` regular with trivially intersecting
/// centralizers. Method B: the `2n - 1` trace gradients are independent.
pub fn is_n_strongly_regular(
    x: &CMatrix,
    tol: &Tolerances,
) -> Result<StrongRegularity, CanonicalError> {
    let n = x.n();
    if n < 2 {
        return Err(CanonicalError::TooSmall(n));
    }
    let norm = x.norm();
    let x = if norm > 0.0 {
        x.scale(C64::new(1.0 / norm, 0.0))
    } else {
        x.clone()
    };
    let cz = centralizer_basis(&x, tol)?;
    let cut = x.cutoff()?;
    let cz_cut: Vec<CMatrix> = centralizer_basis(&cut, tol)?
        .iter()
        .map(|z| z.embed(n))
        .collect();
    let x_regular = cz.len() == n;
    let cutoff_regular = cz_cut.len() == n - 1;
    let mut all = cz.clone();
    all.extend(cz_cut.iter().cloned());
    let centralizer_span = numerical_rank(&stack_vectorized(&all, n), tol)?;
    let method_a = x_regular && cutoff_regular && centralizer_span == cz.len() + cz_cut.len();

    let grads: Vec<CMatrix> = gz_gradients(&x)?
        .into_iter()
        .map(|g| {
            let s = g.norm();
            if s > 0.0 {
                g.scale(C64::new(1.0 / s, 0.0))
            } else {
                g
            }
        })
        .collect();
    let gradient_rank = numerical_rank(&stack_vectorized(&grads, n), tol)?;
    let method_b = gradient_rank == 2 * n - 1;
    if method_a != method_b {
        return Err(CanonicalError::MethodDisagreement {
            method_a,
            gradient_rank,
            expected: 2 * n - 1,
        });
    }
    Ok(StrongRegularity {
        strongly_regular: method_a,
        x_regular,
        cutoff_regular,
        centralizer_span,
        centralizer_dims: (cz.len(), cz_cut.len()),
        gradient_rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnTest {
    pub member: bool,
    /// `|u^n|` for `u = x / |x|`.
    pub full_power: f64,
    /// `|u_{n-1}^{n-1}|`.
    pub cutoff_power: f64,
    /// Largest computed eigenvalue modulus of `u` and `u_{n-1}` (diagnostic only).
    pub max_eigen_modulus: f64,
}

/// Both `x` and `x_{n-1}` nilpotent, decided on `u = x / |x|` by
/// `|u^n| <= membership * n` and `|u_{n-1}^{n-1}| <= membership * (n-1)`.
pub fn sn_membership(x: &CMatrix, tol: &Tolerances) -> Result<SnTest, CanonicalError> {
    let n = x.n();
    if n < 2 {
        return Err(CanonicalError::TooSmall(n));
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(SnTest {
            member: true,
            full_power: 0.0,
            cutoff_power: 0.0,
            max_eigen_modulus: 0.0,
        });
    }
    let u = x.scale(C64::new(1.0 / norm, 0.0));
    let cut = u.cutoff()?;
    let full_power = u.pow(n).norm();
    let cutoff_power = cut.pow(n - 1).norm();
    let member =
        full_power <= tol.membership * n as f64 && cutoff_power <= tol.membership * (n - 1) as f64;
    let max_eigen_modulus = eigenvalues(&u)?
        .values()
        .iter()
        .chain(eigenvalues(&cut)?.values())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    Ok(SnTest {
        member,
        full_power,
        cutoff_power,
        max_eigen_modulus,
    })
}

/// Residual bound for a successful canonical-form round trip.
pub const ROUNDTRIP_RESIDUAL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub n: usize,
    /// Planted coincidence count.
    pub l: usize,
    pub trials: usize,
    /// Trials with matching `l`, orbit length `n - 1 - l` and residual below the bound.
    pub recovered: usize,
    pub l_mismatches: usize,
    pub length_mismatches: usize,
    pub membership_failures: usize,
    pub numerical_failures: usize,
    pub worst_residual: f64,
    /// Distinct `i` of the recovered indices, ascending.
    pub start_indices: Vec<usize>,
}

impl RoundTripReport {
    pub fn passed(&self) -> bool {
        self.recovered == self.trials
    }
}

enum RoundTrip {
    Done {
        l: usize,
        idx: OrbitIndex,
        residual: f64,
        inside: bool,
    },
    Failed,
}

/// Plants a random Ξ element with `l` coincidences, conjugates it by a random
/// element of `K` and runs [`canonical_form`]; trial `t` uses its own stream.
pub fn round_trips(
    n: usize,
    l: usize,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
    exec: Execution,
) -> Result<RoundTripReport, CanonicalError> {
    if n < 2 {
        return Err(CanonicalError::TooSmall(n));
    }
    if l > n - 1 {
        return Err(SpectraError::LevelOutOfRange { l, n }.into());
    }
    let outcomes = run_trials(trials, exec, |t| -> Result<RoundTrip, CanonicalError> {
        let mut rng = SeededRng::new(seed, (1 << 48) | ((l as u64) << 24) | t as u64);
        let e = XiElement::random(n, l, &mut rng, tol)?;
        let g = sample_k(&mut rng, n)?;
        let x = ad(&g, &xi_build(&e, tol)?)?;
        match canonical_form(&x, tol) {
            Ok(r) => Ok(RoundTrip::Done {
                l: r.l,
                idx: r.idx,
                residual: r.residual,
                inside: r.inside,
            }),
            Err(
                err @ (CanonicalError::Linalg(_)
                | CanonicalError::NotRegularSemisimple { .. }
                | CanonicalError::PatternViolation { .. }),
            ) => {
                log::warn!("round trip n={n} l={l} trial {t}: {err}");
                Ok(RoundTrip::Failed)
            }
            Err(err) => Err(err),
        }
    });
    let mut report = RoundTripReport {
        n,
        l,
        trials,
        recovered: 0,
        l_mismatches: 0,
        length_mismatches: 0,
        membership_failures: 0,
        numerical_failures: 0,
        worst_residual: 0.0,
        start_indices: Vec::new(),
    };
    for outcome in outcomes {
        match outcome? {
            RoundTrip::Done {
                l: got,
                idx,
                residual,
                inside,
            } => {
                report.worst_residual = report.worst_residual.max(residual);
                if !report.start_indices.contains(&idx.i) {
                    report.start_indices.push(idx.i);
                }
                let l_ok = got == l;
                let length_ok = idx.length() == n - 1 - l;
                let member_ok = inside && residual < ROUNDTRIP_RESIDUAL;
                report.l_mismatches += !l_ok as usize;
                report.length_mismatches += !length_ok as usize;
                report.membership_failures += !member_ok as usize;
                report.recovered += (l_ok && length_ok && member_ok) as usize;
            }
            RoundTrip::Failed => report.numerical_failures += 1,
        }
    }
    report.start_indices.sort_unstable();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnReport {
    pub n: usize,
    /// Component `Ad(K) n_{i,i}`.
    pub i: usize,
    pub trials: usize,
    pub members: usize,
    pub strongly_regular: usize,
    /// Samples where the two strong-regularity criteria disagreed.
    pub disagreements: usize,
    pub numerical_failures: usize,
    pub worst_power: f64,
}

impl SnReport {
    pub fn membership_rate(&self) -> f64 {
        self.members as f64 / self.trials.max(1) as f64
    }

    /// Fraction of decided samples that are n-strongly regular.
    pub fn strong_regularity_rate(&self) -> f64 {
        let decided = self.trials - self.disagreements - self.numerical_failures;
        self.strongly_regular as f64 / decided.max(1) as f64
    }
}

enum SnTrial {
    Done {
        member: bool,
        power: f64,
        regular: Option<bool>,
    },
    Failed,
}

/// Samples `Ad(K) n_{i,i}`, tests membership in `SN_n` and n-strong regularity.
pub fn sn_experiment(
    n: usize,
    i: usize,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
    exec: Execution,
) -> Result<SnReport, CanonicalError> {
    let nil = nilradical_n(i, n)?;
    let outcomes = run_trials(trials, exec, |t| -> Result<SnTrial, CanonicalError> {
        let mut rng = SeededRng::new(seed, (2 << 48) | ((i as u64) << 24) | t as u64);
        let k = sample_k(&mut rng, n)?;
        let x = ad(&k, &sample_in(&nil, &mut rng))?;
        let sn = match sn_membership(&x, tol) {
            Ok(sn) => sn,
            Err(CanonicalError::Linalg(e)) => {
                log::warn!("SN trial n={n} i={i} t={t}: {e}");
                return Ok(SnTrial::Failed);
            }
            Err(e) => return Err(e),
        };
        let regular = match is_n_strongly_regular(&x, tol) {
            Ok(r) => Some(r.strongly_regular),
            Err(err @ CanonicalError::MethodDisagreement { .. }) => {
                log::warn!("SN trial n={n} i={i} t={t}: {err}");
                None
            }
            Err(CanonicalError::Linalg(e)) => {
                log::warn!("SN trial n={n} i={i} t={t}: {e}");
                return Ok(SnTrial::Failed);
            }
            Err(e) => return Err(e),
        };
        Ok(SnTrial::Done {
            member: sn.member,
            power: sn.full_power.max(sn.cutoff_power),
            regular,
        })
    });
    let mut report = SnReport {
        n,
        i,
        trials,
        members: 0,
        strongly_regular: 0,
        disagreements: 0,
        numerical_failures: 0,
        worst_power: 0.0,
    };
    for outcome in outcomes {
        match outcome? {
            SnTrial::Done {
                member,
                power,
                regular,
            } => {
                report.members += member as usize;
                report.worst_power = report.worst_power.max(power);
                match regular {
                    Some(true) => report.strongly_regular += 1,
                    Some(false) => {}
                    None => report.disagreements += 1,
                }
            }
            SnTrial::Failed => report.numerical_failures += 1,
        }
    }
    Ok(report)
}
