//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test --test acceptance`.

use gzcut::canonical::{
    gradient_fd_error, is_n_strongly_regular, round_trips, sn_experiment, xi_build, CanonicalError,
    XiElement, ROUNDTRIP_RESIDUAL,
};
use gzcut::cli::{catalog_entry, cmd_verify, CommonOptions};
use gzcut::flags::{nilradical_n, parabolic_p, OrbitIndex};
use gzcut::linalg::{eigenvalues, CMatrix, Tolerances, C64};
use gzcut::orbits::{
    ad, estimate_dim, sample_in, sample_k, verify_containment, DimTarget, Execution, SeededRng,
};
use gzcut::spectra::{coincidence_count, phi_n, recover_spectra, RECOVERED_RADIUS_FACTOR};
use std::time::{Duration, Instant};

/// eig_match used by the containment criterion.
const CONTAINMENT_EIG_MATCH: f64 = 1e-6;
const CONTAINMENT_TRIALS: usize = 500;
const CONTAINMENT_BUDGET: Duration = Duration::from_secs(120);
const DIM_REPEATS: usize = 5;
const ROUND_TRIPS: usize = 200;
const TWO_PATH_SAMPLES: usize = 1000;
/// At most 0.1% of two-path samples may be excluded as near-threshold.
const TWO_PATH_PATHOLOGY_RATE: f64 = 1e-3;
/// A distance within this factor of the admission radius counts as near-threshold.
const NEAR_THRESHOLD_FACTOR: f64 = 100.0;
const REGULARITY_SAMPLES: usize = 1000;
const FD_STEP: f64 = 0.1;
const FD_REL_ERROR: f64 = 1e-5;
const SN_TRIALS: usize = 300;
const SR_HIGH: f64 = 0.99;
const SR_LOW: f64 = 0.01;

struct Outcome {
    passed: bool,
    detail: String,
}

fn line(id: usize, name: &str, o: &Outcome) {
    let tag = if o.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {id} {name}: {}", o.detail);
}

fn containment() -> Outcome {
    let tol = Tolerances::default().with_eig_match(CONTAINMENT_EIG_MATCH);
    let start = Instant::now();
    let (mut indices, mut violations, mut failures) = (0, 0, 0);
    let mut worst = String::new();
    for n in 2..=6 {
        for idx in OrbitIndex::all(n) {
            let r = verify_containment(idx, n, CONTAINMENT_TRIALS, 1, &tol, Execution::Parallel)
                .expect("containment run");
            indices += 1;
            violations += r.violations;
            failures += r.numerical_failures;
            if r.violations > 0 && worst.is_empty() {
                worst = format!(
                    " first violation at n={n} idx={idx} min_l={:?}",
                    r.min_observed_l
                );
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: violations == 0 && elapsed < CONTAINMENT_BUDGET,
        detail: format!(
            "n=2..6, {indices} indices x {CONTAINMENT_TRIALS} trials, eig_match={CONTAINMENT_EIG_MATCH:e}, violations={violations}, eigensolver failures={failures}, {:.1}s (budget {}s){worst}",
            elapsed.as_secs_f64(),
            CONTAINMENT_BUDGET.as_secs()
        ),
    }
}

fn dimensions() -> Outcome {
    let tol = Tolerances::default();
    let (mut checked, mut mismatches) = (0, Vec::new());
    for n in 3..=5 {
        let mut targets: Vec<DimTarget> = OrbitIndex::all(n)
            .into_iter()
            .map(|idx| DimTarget::Saturation { i: idx.i, j: idx.j })
            .collect();
        targets.extend((1..=n).map(|i| DimTarget::Nilpotent { i }));
        for t in targets {
            let est = estimate_dim(t, n, DIM_REPEATS, 2, &tol).expect("dimension estimate");
            checked += 1;
            if !est.matches() {
                mismatches.push(format!(
                    "n={n} {t:?}: {:?} vs {}",
                    est.estimate, est.formula
                ));
            }
        }
    }
    Outcome {
        passed: mismatches.is_empty(),
        detail: format!(
            "n=3..5, {checked} targets x {DIM_REPEATS} repeats, exact integer mismatches={} {}",
            mismatches.len(),
            mismatches.join("; ")
        ),
    }
}

fn canonical_round_trips() -> Outcome {
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    let mut runs = 0;
    for n in 3..=6 {
        for l in 0..n {
            let r =
                round_trips(n, l, ROUND_TRIPS, 3, &tol, Execution::Parallel).expect("round trips");
            runs += r.trials;
            worst = worst.max(r.worst_residual);
            if !r.passed() {
                failures.push(format!(
                    "n={n} l={l}: recovered {}/{} (l mismatches {}, length mismatches {}, membership {}, numerical {})",
                    r.recovered, r.trials, r.l_mismatches, r.length_mismatches, r.membership_failures, r.numerical_failures
                ));
            }
            if l == n - 1 && r.start_indices != (1..=n).collect::<Vec<_>>() {
                failures.push(format!(
                    "n={n}: closed indices reached {:?}",
                    r.start_indices
                ));
            }
        }
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "n=3..6, {ROUND_TRIPS} per (n,l), {runs} total; orbit length n-1-l recovered, worst residual {worst:.2e} (bound {ROUNDTRIP_RESIDUAL:e}); all Borels reached for l=n-1 {}",
            failures.join("; ")
        ),
    }
}

fn catalog() -> Outcome {
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let mut entries = 0;
    for n in 2..=8 {
        for idx in OrbitIndex::all(n) {
            let e = catalog_entry(idx, n, &tol).expect("catalog entry");
            entries += 1;
            if !e.passed(n) {
                failures.push(format!("n={n} idx={idx}: {e:?}"));
            }
        }
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "n=2..8, {entries} indices: v(F+)=F, b in p, p_ii=b_ii, theta-stable, cutoff Levi shape, bracket closure; failures={} {}",
            failures.len(),
            failures.join("; ")
        ),
    }
}

/// Mixture of Gaussian matrices and K-conjugates of parabolic elements so
/// that every coincidence count occurs.
fn mixed_sample(n: usize, t: usize, rng: &mut SeededRng) -> CMatrix {
    let x = if t.is_multiple_of(2) {
        CMatrix::new(rng.gaussian_matrix(n, n)).unwrap()
    } else {
        let all = OrbitIndex::all(n);
        let idx = all[(t / 2) % all.len()];
        let k = sample_k(rng, n).unwrap();
        ad(&k, &sample_in(&parabolic_p(idx, n).unwrap(), rng)).unwrap()
    };
    x.scale(C64::new(1.0 / x.norm(), 0.0))
}

fn near_threshold(first: &[C64], second: &[C64], radius: f64) -> bool {
    first.iter().any(|a| {
        second.iter().any(|b| {
            let d = (a - b).norm();
            d > radius / NEAR_THRESHOLD_FACTOR && d < radius * NEAR_THRESHOLD_FACTOR
        })
    })
}

fn two_path() -> Outcome {
    let tol = Tolerances::default();
    let mut disagreements = 0;
    let mut excluded = 0;
    let mut total = 0;
    let mut by_l = [0usize; 7];
    for n in 2..=6 {
        for t in 0..TWO_PATH_SAMPLES {
            let mut rng = SeededRng::new(4, ((n as u64) << 32) | t as u64);
            let x = mixed_sample(n, t, &mut rng);
            total += 1;
            let direct = coincidence_count(&x, &tol).expect("direct path");
            let img = phi_n(&x).unwrap();
            let (cut, full) = recover_spectra(&img).expect("polynomial path");
            let loose = tol.with_eig_match(tol.eig_match * RECOVERED_RADIUS_FACTOR);
            let recovered = gzcut::spectra::match_spectra(&cut, &full, &loose);
            by_l[direct.l] += 1;
            if direct.l != recovered.l {
                let d_cut = eigenvalues(&x.cutoff().unwrap()).unwrap();
                let d_full = eigenvalues(&x).unwrap();
                let both_near = near_threshold(d_cut.values(), d_full.values(), direct.radius)
                    && near_threshold(cut.values(), full.values(), recovered.radius);
                if both_near {
                    excluded += 1;
                    eprintln!(
                        "two-path: excluded near-threshold sample n={n} t={t}: {} vs {}",
                        direct.l, recovered.l
                    );
                } else {
                    disagreements += 1;
                    eprintln!(
                        "two-path: disagreement n={n} t={t}: {} vs {}",
                        direct.l, recovered.l
                    );
                }
            }
        }
    }
    let rate = excluded as f64 / total as f64;
    Outcome {
        passed: disagreements == 0 && rate < TWO_PATH_PATHOLOGY_RATE,
        detail: format!(
            "n=2..6, {TWO_PATH_SAMPLES} per n, l histogram {:?}, disagreements={disagreements}, near-threshold exclusions={excluded} (rate {rate:.4}, limit {TWO_PATH_PATHOLOGY_RATE})",
            &by_l[..6]
        ),
    }
}

/// Gaussian, K-conjugated nilradical, K-conjugated parabolic and Ξ samples in turn.
fn regularity_sample(n: usize, t: usize, rng: &mut SeededRng, tol: &Tolerances) -> CMatrix {
    let x = match t % 4 {
        0 => CMatrix::new(rng.gaussian_matrix(n, n)).unwrap(),
        1 => {
            let i = 1 + (t / 4) % n;
            let k = sample_k(rng, n).unwrap();
            ad(&k, &sample_in(&nilradical_n(i, n).unwrap(), rng)).unwrap()
        }
        2 => {
            let all = OrbitIndex::all(n);
            let k = sample_k(rng, n).unwrap();
            ad(
                &k,
                &sample_in(&parabolic_p(all[(t / 4) % all.len()], n).unwrap(), rng),
            )
            .unwrap()
        }
        _ => {
            let l = (t / 4) % n;
            let e = XiElement::random(n, l, rng, tol).unwrap();
            let k = sample_k(rng, n).unwrap();
            ad(&k, &xi_build(&e, tol).unwrap()).unwrap()
        }
    };
    x.scale(C64::new(1.0 / x.norm(), 0.0))
}

fn strong_regularity() -> Outcome {
    let tol = Tolerances::default();
    let mut disagreements = Vec::new();
    let mut worst_fd = 0.0_f64;
    let mut regular = 0;
    let mut total = 0;
    for n in 2..=6 {
        for t in 0..REGULARITY_SAMPLES {
            let mut rng = SeededRng::new(5, ((n as u64) << 32) | t as u64);
            let x = regularity_sample(n, t, &mut rng, &tol);
            total += 1;
            worst_fd = worst_fd.max(gradient_fd_error(&x, FD_STEP).unwrap());
            match is_n_strongly_regular(&x, &tol) {
                Ok(r) => regular += r.strongly_regular as usize,
                Err(e @ CanonicalError::MethodDisagreement { .. }) => {
                    disagreements.push(format!("n={n} t={t}: {e}"))
                }
                Err(e) => panic!("strong regularity n={n} t={t}: {e}"),
            }
        }
    }
    let mut rates = Vec::new();
    let mut rate_ok = true;
    for n in 3..=5 {
        for i in 1..=n {
            let r = sn_experiment(n, i, SN_TRIALS, 6, &tol, Execution::Parallel).unwrap();
            let rate = r.strong_regularity_rate();
            let ok = if i == 1 || i == n {
                rate > SR_HIGH
            } else {
                rate < SR_LOW
            };
            rate_ok &= ok && r.disagreements == 0;
            rates.push(format!("n{n}i{i}={rate:.3}"));
        }
    }
    Outcome {
        passed: disagreements.is_empty() && worst_fd < FD_REL_ERROR && rate_ok,
        detail: format!(
            "methods A/B agree on {}/{total} samples ({regular} strongly regular); worst gradient FD rel error {worst_fd:.2e} (< {FD_REL_ERROR:e}); component rates [{}] (ends > {SR_HIGH}, middle < {SR_LOW}) {}",
            total - disagreements.len(),
            rates.join(" "),
            disagreements.join("; ")
        ),
    }
}

fn sn_sampling() -> Outcome {
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let mut samples = 0;
    for n in 2..=6 {
        for i in 1..=n {
            let r = sn_experiment(n, i, SN_TRIALS, 7, &tol, Execution::Parallel).unwrap();
            samples += r.trials;
            if r.members != r.trials {
                failures.push(format!(
                    "n={n} i={i}: {}/{} (worst power {:.2e})",
                    r.members, r.trials, r.worst_power
                ));
            }
        }
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "n=2..6, {SN_TRIALS} per component, {samples} samples, non-members={} {}",
            failures.len(),
            failures.join("; ")
        ),
    }
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut sizes = Vec::new();
    for (n, trials) in [(3, 100), (4, 50)] {
        let base = CommonOptions {
            seed: 8,
            ..CommonOptions::default()
        };
        let serial = cmd_verify(
            n,
            trials,
            &CommonOptions {
                execution: Execution::Serial,
                ..base
            },
        )
        .unwrap()
        .to_json();
        let parallel = cmd_verify(
            n,
            trials,
            &CommonOptions {
                execution: Execution::Parallel,
                ..base
            },
        )
        .unwrap()
        .to_json();
        let again = cmd_verify(
            n,
            trials,
            &CommonOptions {
                execution: Execution::Parallel,
                ..base
            },
        )
        .unwrap()
        .to_json();
        ok &= serial == parallel && parallel == again;
        sizes.push(format!("n={n}: {} bytes", serial.len()));
    }
    Outcome {
        passed: ok,
        detail: format!(
            "verify reports byte-identical across serial/parallel/repeat ({})",
            sizes.join(", ")
        ),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let criteria: [Criterion; 8] = [
        ("containment", containment),
        ("dimension formulas", dimensions),
        ("canonical form", canonical_round_trips),
        ("catalog exactness", catalog),
        ("two-path classification", two_path),
        ("strong regularity", strong_regularity),
        ("SN sampling", sn_sampling),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (id, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        line(id + 1, name, &o);
        eprintln!("    ({name} took {:.1}s)", start.elapsed().as_secs_f64());
        failed += (!o.passed) as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
