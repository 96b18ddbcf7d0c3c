//! Gelfand–Zeitlin trace functions, the (partial) Kostant–Wallach map and
//! multiplicity-aware counting of eigenvalue coincidences.

use crate::linalg::{self, CMatrix, LinalgError, Spectrum, Tolerances, C64, ONE, ZERO};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectraError {
    #[error("index (i={i}, j={j}) out of range for n={n}: need 1 <= j <= i <= n")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("matrix of dimension {0} has no cutoff")]
    NoCutoff(usize),
    #[error("coincidence level {l} out of range for n={n}")]
    LevelOutOfRange { l: usize, n: usize },
    #[error("empty power-sum list")]
    EmptyPowerSums,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Image of the partial Kostant–Wallach map: power sums of the cutoff and of
/// the full matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GZImage {
    pub n: usize,
    /// `tr(x_{n-1}^j)` for `j = 1..n-1`.
    pub c_prev: Vec<C64>,
    /// `tr(x^j)` for `j = 1..n`.
    pub c_full: Vec<C64>,
}

impl GZImage {
    pub fn new(n: usize, c_prev: Vec<C64>, c_full: Vec<C64>) -> Result<Self, SpectraError> {
        if n < 2 {
            return Err(SpectraError::NoCutoff(n));
        }
        if c_prev.len() != n - 1 {
            return Err(LinalgError::DimensionMismatch {
                expected: n - 1,
                actual: c_prev.len(),
            }
            .into());
        }
        if c_full.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                actual: c_full.len(),
            }
            .into());
        }
        Ok(GZImage { n, c_prev, c_full })
    }
}

/// Image of the full Kostant–Wallach map, level `i` holding `i` power sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullGZImage {
    pub levels: Vec<Vec<C64>>,
}

impl FullGZImage {
    /// Projection onto the last two levels.
    pub fn project_last_two(&self) -> Result<GZImage, SpectraError> {
        let n = self.levels.len();
        if n < 2 {
            return Err(SpectraError::NoCutoff(n));
        }
        GZImage::new(n, self.levels[n - 2].clone(), self.levels[n - 1].clone())
    }
}

/// One matched pair: an eigenvalue of the cutoff and one of the full matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    /// Index into the first spectrum (the cutoff, for coincidence counts).
    pub first: usize,
    /// Index into the second spectrum.
    pub second: usize,
    pub cutoff_value: C64,
    pub full_value: C64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceReport {
    pub l: usize,
    pub pairs: Vec<MatchedPair>,
    /// Radius used to admit a pair.
    pub radius: f64,
}

impl CoincidenceReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.residual).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }
}

/// `tr(m^j)` for `j = 1..=k`.
pub fn power_sums(m: &CMatrix, k: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(k);
    let mut p = m.clone();
    for j in 1..=k {
        if j > 1 {
            p = p.mul(m);
        }
        out.push(p.trace());
    }
    out
}

/// `f_{i,j}(x) = tr((x_i)^j)` with 1-based `1 <= j <= i <= n`.
pub fn gz_function(x: &CMatrix, i: usize, j: usize) -> Result<C64, SpectraError> {
    let n = x.n();
    if i == 0 || i > n || j == 0 || j > i {
        return Err(SpectraError::IndexOutOfRange { i, j, n });
    }
    let xi = x.corner(i)?;
    Ok(xi.pow(j).trace())
}

pub fn phi_n(x: &CMatrix) -> Result<GZImage, SpectraError> {
    let n = x.n();
    if n < 2 {
        return Err(SpectraError::NoCutoff(n));
    }
    let cut = x.cutoff()?;
    GZImage::new(n, power_sums(&cut, n - 1), power_sums(x, n))
}

pub fn phi_full(x: &CMatrix) -> FullGZImage {
    let n = x.n();
    let levels = (1..=n)
        .map(|i| power_sums(&x.corner(i).expect("1 <= i <= n"), i))
        .collect();
    FullGZImage { levels }
}

/// Monic characteristic-polynomial coefficients (descending) from power sums
/// via Newton's identities.
pub fn newton_to_charpoly(power_sums: &[C64]) -> Result<Vec<C64>, SpectraError> {
    let k = power_sums.len();
    if k == 0 {
        return Err(SpectraError::EmptyPowerSums);
    }
    // e_m = (1/m) sum_{i=1}^m (-1)^{i-1} e_{m-i} p_i
    let mut e = vec![ZERO; k + 1];
    e[0] = ONE;
    for m in 1..=k {
        let mut acc = ZERO;
        for i in 1..=m {
            let term = e[m - i] * power_sums[i - 1];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        e[m] = acc / (m as f64);
    }
    Ok(e.iter()
        .enumerate()
        .map(|(m, &v)| if m % 2 == 0 { v } else { -v })
        .collect())
}

/// Minimum-cost assignment of every row of a `rows x cols` cost matrix
/// (`rows <= cols`). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-cardinality matching of two multisets under a fixed admission
/// radius; among maximum matchings the total residual is minimal.
pub fn match_with_radius(first: &[C64], second: &[C64], radius: f64) -> CoincidenceReport {
    let swap = first.len() > second.len();
    let (rows, cols) = if swap {
        (second, first)
    } else {
        (first, second)
    };
    if rows.is_empty() {
        return CoincidenceReport {
            l: 0,
            pairs: Vec::new(),
            radius,
        };
    }
    // An inadmissible pair costs more than any set of admissible ones, so the
    // optimum maximizes the count first and minimizes residual second.
    let penalty = 2.0 * (rows.len() as f64 + 1.0) * (radius + 1.0);
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| {
            cols.iter()
                .map(|b| {
                    let d = (a - b).norm();
                    if d <= radius {
                        d
                    } else {
                        penalty
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let mut pairs: Vec<MatchedPair> = assignment
        .iter()
        .enumerate()
        .filter_map(|(r, &c)| {
            let d = (rows[r] - cols[c]).norm();
            if d > radius {
                return None;
            }
            let (fi, si) = if swap { (c, r) } else { (r, c) };
            Some(MatchedPair {
                first: fi,
                second: si,
                cutoff_value: first[fi],
                full_value: second[si],
                residual: d,
            })
        })
        .collect();
    pairs.sort_by_key(|p| (p.first, p.second));
    CoincidenceReport {
        l: pairs.len(),
        pairs,
        radius,
    }
}

/// Matches two spectra with radius `eig_match * (1 + scale)`, scale being the
/// largest eigenvalue modulus across both.
pub fn match_spectra(s1: &Spectrum, s2: &Spectrum, tol: &Tolerances) -> CoincidenceReport {
    let scale = s1.scale().max(s2.scale());
    match_with_radius(s1.values(), s2.values(), tol.match_radius(scale))
}

/// Number of shared eigenvalues of `x` and its cutoff, with multiplicity.
pub fn coincidence_count(x: &CMatrix, tol: &Tolerances) -> Result<CoincidenceReport, SpectraError> {
    let n = x.n();
    if n < 2 {
        return Err(SpectraError::NoCutoff(n));
    }
    let cut = linalg::eigenvalues_labeled(&x.cutoff()?, "cutoff x_{n-1}")?;
    let full = linalg::eigenvalues_labeled(x, "x")?;
    Ok(match_spectra(&cut, &full, tol))
}

/// Factor by which the coincidence radius is widened when spectra are
/// recovered from power sums rather than computed directly.
pub const RECOVERED_RADIUS_FACTOR: f64 = 10.0;

/// Spectra recovered from a [`GZImage`] (Newton identities then Aberth roots).
pub fn recover_spectra(img: &GZImage) -> Result<(Spectrum, Spectrum), SpectraError> {
    let cut = linalg::poly_roots(&newton_to_charpoly(&img.c_prev)?)?;
    let full = linalg::poly_roots(&newton_to_charpoly(&img.c_full)?)?;
    Ok((Spectrum::new(cut), Spectrum::new(full)))
}

/// Coincidence report computed purely from a [`GZImage`].
pub fn recovered_coincidences(
    img: &GZImage,
    tol: &Tolerances,
) -> Result<CoincidenceReport, SpectraError> {
    let (cut, full) = recover_spectra(img)?;
    let loose = tol.with_eig_match(tol.eig_match * RECOVERED_RADIUS_FACTOR);
    Ok(match_spectra(&cut, &full, &loose))
}

/// Whether `img` lies in `V^{n-1,n}(>= l)`. `l = n` is accepted and always
/// false (that stratum is empty).
pub fn v_membership(img: &GZImage, l: usize, tol: &Tolerances) -> Result<bool, SpectraError> {
    if l > img.n {
        return Err(SpectraError::LevelOutOfRange { l, n: img.n });
    }
    if l == img.n {
        return Ok(false);
    }
    Ok(recovered_coincidences(img, tol)?.l >= l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn xi_example() -> CMatrix {
        CMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, 1.0, 3.0]]).unwrap()
    }

    #[test]
    fn gz_function_examples() {
        let d = CMatrix::real_diag(&[1.0, 2.0, 3.0]);
        assert_eq!(gz_function(&d, 2, 2).unwrap(), c(5.0));
        assert_eq!(gz_function(&CMatrix::zeros(3), 3, 1).unwrap(), c(0.0));
        let p = CMatrix::from_real_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        assert_eq!(gz_function(&p, 3, 3).unwrap(), c(3.0));
        assert!(matches!(
            gz_function(&d, 2, 3),
            Err(SpectraError::IndexOutOfRange { .. })
        ));
        assert!(gz_function(&d, 4, 1).is_err());
        assert!(gz_function(&d, 0, 0).is_err());
    }

    #[test]
    fn phi_n_examples() {
        let img = phi_n(&CMatrix::real_diag(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(img.c_prev, vec![c(3.0), c(5.0)]);
        assert_eq!(img.c_full, vec![c(6.0), c(14.0), c(36.0)]);
        let img = phi_n(&CMatrix::zeros(2)).unwrap();
        assert_eq!(img.c_prev, vec![c(0.0)]);
        assert_eq!(img.c_full, vec![c(0.0), c(0.0)]);
        // Eigenvalues 1 and the roots of t^2 - 5t + 5 (sum 5, product 5):
        // p2 = 1 + (25 - 10) = 16, p3 = 1 + (125 - 75) = 51.
        let img = phi_n(&xi_example()).unwrap();
        assert_eq!(img.c_prev, vec![c(3.0), c(5.0)]);
        assert_eq!(img.c_full, vec![c(6.0), c(16.0), c(51.0)]);
        assert!(matches!(
            phi_n(&CMatrix::zeros(1)),
            Err(SpectraError::NoCutoff(1))
        ));
    }

    #[test]
    fn phi_full_examples_and_projection() {
        let img = phi_full(&CMatrix::real_diag(&[1.0, 2.0]));
        assert_eq!(img.levels, vec![vec![c(1.0)], vec![c(3.0), c(5.0)]]);
        let z = phi_full(&CMatrix::zeros(3));
        assert_eq!(
            z.levels.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert!(z.levels.iter().flatten().all(|v| *v == c(0.0)));
        let t = CMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 2.0]]).unwrap();
        assert_eq!(
            phi_full(&t).levels,
            vec![vec![c(1.0)], vec![c(3.0), c(5.0)]]
        );
        let x = xi_example();
        assert_eq!(phi_full(&x).project_last_two().unwrap(), phi_n(&x).unwrap());
    }

    #[test]
    fn newton_examples() {
        assert_eq!(
            newton_to_charpoly(&[c(6.0), c(14.0), c(36.0)]).unwrap(),
            vec![c(1.0), c(-6.0), c(11.0), c(-6.0)]
        );
        assert_eq!(
            newton_to_charpoly(&[c(0.0), c(0.0)]).unwrap(),
            vec![c(1.0), c(0.0), c(0.0)]
        );
        assert_eq!(
            newton_to_charpoly(&[c(2.0)]).unwrap(),
            vec![c(1.0), c(-2.0)]
        );
        assert!(newton_to_charpoly(&[]).is_err());
    }

    #[test]
    fn match_spectra_examples() {
        let tol = Tolerances::default();
        let r = match_spectra(
            &Spectrum::new(vec![c(1.0)]),
            &Spectrum::new(vec![c(1.0), c(2.0)]),
            &tol,
        );
        assert_eq!(r.l, 1);
        assert_eq!(
            (r.pairs[0].cutoff_value, r.pairs[0].full_value),
            (c(1.0), c(1.0))
        );
        let r = match_spectra(
            &Spectrum::new(vec![c(0.0); 2]),
            &Spectrum::new(vec![c(0.0); 3]),
            &tol,
        );
        assert_eq!(r.l, 2);
        let r = match_spectra(
            &Spectrum::new(vec![c(1.0), c(2.0)]),
            &Spectrum::new(vec![c(1.0 + 1e-9), c(5.0)]),
            &tol,
        );
        assert_eq!(r.l, 1);
    }

    #[test]
    fn matching_prefers_cardinality_over_greedy_nearest() {
        // Greedy nearest would pair 1.0 with 1.0 and strand 1.0+r.
        let radius = 0.5;
        let a = [c(1.0), c(1.4)];
        let b = [c(1.0), c(0.6)];
        let r = match_with_radius(&a, &b, radius);
        assert_eq!(r.l, 2);
        let total: f64 = r.residuals().iter().sum();
        assert!((total - 0.8).abs() < 1e-12);
    }

    #[test]
    fn coincidence_examples() {
        let tol = Tolerances::default();
        assert_eq!(coincidence_count(&CMatrix::zeros(3), &tol).unwrap().l, 2);
        assert_eq!(
            coincidence_count(&CMatrix::real_diag(&[1.0, 2.0]), &tol)
                .unwrap()
                .l,
            1
        );
        let r = coincidence_count(&xi_example(), &tol).unwrap();
        assert_eq!(r.l, 1);
        assert!(close(r.pairs[0].cutoff_value, c(1.0), 1e-12));
        assert!(matches!(
            coincidence_count(&CMatrix::zeros(1), &tol),
            Err(SpectraError::NoCutoff(1))
        ));
    }

    #[test]
    fn v_membership_examples() {
        let tol = Tolerances::default();
        let img = phi_n(&CMatrix::zeros(3)).unwrap();
        assert!(v_membership(&img, 2, &tol).unwrap());
        assert!(!v_membership(&img, 3, &tol).unwrap());
        let full = phi_n(&CMatrix::real_diag(&[1.0, 2.0, 3.0])).unwrap();
        let prev = phi_n(&CMatrix::real_diag(&[4.0, 5.0, 6.0])).unwrap();
        let mixed = GZImage::new(3, prev.c_prev, full.c_full).unwrap();
        assert!(!v_membership(&mixed, 1, &tol).unwrap());
        assert!(v_membership(&mixed, 0, &tol).unwrap());
        let img = phi_n(&xi_example()).unwrap();
        assert!(v_membership(&img, 1, &tol).unwrap());
        assert!(!v_membership(&img, 2, &tol).unwrap());
        assert!(v_membership(&img, 4, &tol).is_err());
    }
}
