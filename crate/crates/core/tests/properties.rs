use gzcut::canonical::{canonical_form, xi_build, XiElement};
use gzcut::flags::{borel_b, parabolic_p, stabilizer, standard_flag, theta, v_matrix, OrbitIndex};
use gzcut::linalg::{centralizer_basis, eigenvalues, numerical_rank, DMat, Spectrum};
use gzcut::orbits::{ad, sample_k, SeededRng};
use gzcut::spectra::{
    coincidence_count, gz_function, match_spectra, match_with_radius, phi_n, v_membership,
};
use gzcut::{CMatrix, Tolerances, C64};
use proptest::prelude::*;

fn gaussian(n: usize, seed: u64) -> CMatrix {
    let mut rng = SeededRng::new(seed, 0);
    CMatrix::new(rng.gaussian_matrix(n, n)).unwrap()
}

fn unitary(n: usize, rng: &mut SeededRng) -> DMat {
    rng.gaussian_matrix(n, n).qr().q()
}

/// Largest number of pairs `(a, b)` with `|a - b| <= r`, by exhaustive search.
fn brute_force_matching(first: &[C64], second: &[C64], r: f64) -> usize {
    fn go(k: usize, first: &[C64], second: &[C64], used: &mut Vec<bool>, r: f64) -> usize {
        if k == first.len() {
            return 0;
        }
        let mut best = go(k + 1, first, second, used, r);
        for b in 0..second.len() {
            if !used[b] && (first[k] - second[b]).norm() <= r {
                used[b] = true;
                best = best.max(1 + go(k + 1, first, second, used, r));
                used[b] = false;
            }
        }
        best
    }
    go(0, first, second, &mut vec![false; second.len()], r)
}

/// Values on a coarse grid so that near-ties and repeated values are common.
fn grid_values(max: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-3i32..=3, -2i32..=2), 0..=max).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| C64::new(a as f64 * 0.5, b as f64 * 0.5))
            .collect()
    })
}

fn rel_close(a: C64, b: C64, rel: f64) -> bool {
    (a - b).norm() <= rel * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_agrees_with_brute_force(
        first in grid_values(6),
        second in grid_values(6),
        r in prop::sample::select(vec![0.0, 0.3, 0.5, 0.75, 1.2]),
    ) {
        let report = match_with_radius(&first, &second, r);
        prop_assert_eq!(report.l, brute_force_matching(&first, &second, r));
        let mut seen_first = std::collections::BTreeSet::new();
        let mut seen_second = std::collections::BTreeSet::new();
        for p in &report.pairs {
            prop_assert!(p.residual <= r);
            prop_assert!(seen_first.insert(p.first) && seen_second.insert(p.second));
        }
    }

    #[test]
    fn matching_is_symmetric(first in grid_values(6), second in grid_values(6)) {
        prop_assert_eq!(
            match_with_radius(&first, &second, 0.5).l,
            match_with_radius(&second, &first, 0.5).l
        );
    }

    #[test]
    fn phi_n_is_k_invariant(n in 2usize..=6, seed in any::<u64>()) {
        let x = gaussian(n, seed);
        let mut rng = SeededRng::new(seed, 1);
        let k = sample_k(&mut rng, n).unwrap();
        let a = phi_n(&x).unwrap();
        let b = phi_n(&ad(&k, &x).unwrap()).unwrap();
        for (u, v) in a.c_prev.iter().zip(&b.c_prev).chain(a.c_full.iter().zip(&b.c_full)) {
            prop_assert!(rel_close(*u, *v, 1e-6), "{} vs {}", u, v);
        }
    }

    #[test]
    fn trace_functions_are_homogeneous(
        n in 1usize..=6,
        seed in any::<u64>(),
        re in -2.0f64..2.0,
        im in -2.0f64..2.0,
    ) {
        let x = gaussian(n, seed);
        let lambda = C64::new(re, im);
        let y = x.scale(lambda);
        for i in 1..=n {
            for j in 1..=i {
                let lhs = gz_function(&y, i, j).unwrap();
                let rhs = lambda.powu(j as u32) * gz_function(&x, i, j).unwrap();
                prop_assert!(rel_close(lhs, rhs, 1e-10), "i={} j={}: {} vs {}", i, j, lhs, rhs);
            }
        }
    }

    #[test]
    fn spectrum_sums_to_trace(n in 1usize..=8, seed in any::<u64>()) {
        let x = gaussian(n, seed);
        let s = eigenvalues(&x).unwrap();
        prop_assert!((s.sum() - x.trace()).norm() <= Tolerances::default().rank_rel * (1.0 + x.norm()));
    }

    #[test]
    fn eigenvalues_are_permutation_invariant(n in 1usize..=7, seed in any::<u64>()) {
        let x = gaussian(n, seed);
        let mut rng = SeededRng::new(seed, 2);
        let mut image: Vec<usize> = (1..=n).collect();
        rng.shuffle(&mut image);
        let p = gzcut::flags::permutation_matrix(&image);
        let conj = p.mul(&x).mul(&p.try_inverse().unwrap());
        let tol = Tolerances::default();
        let report = match_spectra(&eigenvalues(&x).unwrap(), &eigenvalues(&conj).unwrap(), &tol);
        prop_assert_eq!(report.l, n);
    }

    #[test]
    fn rank_is_unitarily_invariant(
        rows in 1usize..=7,
        cols in 1usize..=7,
        rank in 0usize..=7,
        seed in any::<u64>(),
    ) {
        let rank = rank.min(rows).min(cols);
        let mut rng = SeededRng::new(seed, 3);
        let m = rng.gaussian_matrix(rows, rank) * rng.gaussian_matrix(rank, cols);
        let tol = Tolerances::default();
        let base = numerical_rank(&m, &tol).unwrap();
        prop_assert_eq!(base, rank);
        prop_assert_eq!(numerical_rank(&(unitary(rows, &mut rng) * &m), &tol).unwrap(), base);
        prop_assert_eq!(numerical_rank(&(&m * unitary(cols, &mut rng)), &tol).unwrap(), base);
    }

    #[test]
    fn generic_centralizer_has_dimension_n(n in 1usize..=6, seed in any::<u64>()) {
        let x = gaussian(n, seed);
        let basis = centralizer_basis(&x, &Tolerances::default()).unwrap();
        prop_assert_eq!(basis.len(), n);
    }

    #[test]
    fn theta_is_an_involutive_automorphism(n in 1usize..=6, seed in any::<u64>()) {
        let a = gaussian(n, seed);
        let b = gaussian(n, seed.wrapping_add(1));
        prop_assert!(theta(&theta(&a)).max_abs_diff(&a) == 0.0);
        let lhs = theta(&a.bracket(&b));
        let rhs = theta(&a).bracket(&theta(&b));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn two_paths_agree_on_planted_coincidences(
        n in 2usize..=6,
        l in 0usize..=5,
        seed in any::<u64>(),
    ) {
        let l = l.min(n - 1);
        let tol = Tolerances::default();
        let mut rng = SeededRng::new(seed, 4);
        let e = XiElement::random(n, l, &mut rng, &tol).unwrap();
        let k = sample_k(&mut rng, n).unwrap();
        let x = ad(&k, &xi_build(&e, &tol).unwrap()).unwrap();
        let direct = coincidence_count(&x, &tol).unwrap().l;
        prop_assert_eq!(direct, l);
        let img = phi_n(&x).unwrap();
        let levels: Vec<usize> = (0..n)
            .filter(|&m| v_membership(&img, m, &tol).unwrap() && !v_membership(&img, m + 1, &tol).unwrap())
            .collect();
        prop_assert_eq!(levels, vec![direct]);
    }

    #[test]
    fn canonical_form_classifies_consistently(
        n in 2usize..=5,
        l in 0usize..=4,
        seed in any::<u64>(),
    ) {
        let l = l.min(n - 1);
        let tol = Tolerances::default();
        let mut rng = SeededRng::new(seed, 5);
        let e = XiElement::random(n, l, &mut rng, &tol).unwrap();
        let k = sample_k(&mut rng, n).unwrap();
        let x = ad(&k, &xi_build(&e, &tol).unwrap()).unwrap();
        let result = canonical_form(&x, &tol).unwrap();
        prop_assert_eq!(result.l, coincidence_count(&x, &tol).unwrap().l);
        prop_assert_eq!(result.idx.length(), n - 1 - l);
        prop_assert!(result.inside && result.residual < 1e-7);
    }

    #[test]
    fn catalog_borel_is_the_stabilizer_of_the_v_flag(n in 1usize..=6, i in 1usize..=6, j in 1usize..=6) {
        prop_assume!(i <= j && j <= n);
        let idx = OrbitIndex::new(i, j, n).unwrap();
        let tol = Tolerances::default();
        let v = v_matrix(idx, n).unwrap();
        let moved = stabilizer(&standard_flag(n).transform(&v).unwrap()).unwrap();
        let b = borel_b(idx, n).unwrap();
        prop_assert_eq!(b.dim(), n * (n + 1) / 2);
        prop_assert!(moved.same_span(&b, &tol));
        prop_assert!(b.is_subalgebra_of(&parabolic_p(idx, n).unwrap(), &tol));
    }
}

#[test]
fn brute_force_oracle_example() {
    // oracle: {1, 2} vs {1 + 1e-9, 5}, only 1 ↔ 1 + 1e-9 is admissible
    let a = [C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
    let b = [C64::new(1.0 + 1e-9, 0.0), C64::new(5.0, 0.0)];
    assert_eq!(brute_force_matching(&a, &b, 1e-7 * 6.0), 1);
    let s = match_spectra(
        &Spectrum::new(a.to_vec()),
        &Spectrum::new(b.to_vec()),
        &Tolerances::default(),
    );
    assert_eq!(s.l, 1);
}
