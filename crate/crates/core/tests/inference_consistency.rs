mod common;

use common::*;
use obspart::builtin;
use obspart::exec::Execution;
use obspart::inference::{estimate_em, estimate_ls, project_simplex, InferenceError, ModelMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use obspart::sampler::{uniformize_blanks, RoundRecord, Sampler, SeededGenerator};
use obspart::scenario::{Partition, PartitionPrior, Scenario};
use proptest::prelude::*;

fn uniformized_rounds(s: &Scenario, prior: &PartitionPrior, seed: u64, n: u64) -> Vec<RoundRecord> {
    let g = SeededGenerator::new(seed);
    let records = Sampler::new(s, prior).unwrap().sample_many(&g, n, Execution::Parallel).unwrap();
    uniformize_blanks(s, &records, &g)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Rank and singular values checked against a Gram-matrix computation that
/// does not use the library's SVD.
#[test]
fn model_matrix_rank_from_gram_determinant() {
    let s = builtin::frw();
    let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
    let mut gram = [[0.0f64; 4]; 4];
    for (i, row) in gram.iter_mut().enumerate() {
        for (j, g) in row.iter_mut().enumerate() {
            *g = (0..16).map(|t| m.get(t, i) * m.get(t, j)).sum();
        }
    }
    // Gaussian elimination for the determinant
    let mut a = gram;
    let mut det = 1.0;
    for c in 0..4 {
        let p = (c..4).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        if p != c {
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let prod_sv_sq: f64 = m.singular_values.iter().map(|x| x * x).product();
    assert!(det > 1e-8);
    assert!((det - prod_sv_sq).abs() < 1e-12 * det.max(1.0));
    assert_eq!(m.rank, 4);
    // columns against the hand mixture with point masses
    for (o, p) in m.partitions.iter().enumerate() {
        let oracle = frw_mixture_oracle(&PartitionPrior::point_mass(p.clone()));
        for (t, tup) in m.tuples.iter().enumerate() {
            assert!((m.get(t, o) - oracle[&tuple(tup)]).abs() < 1e-12);
        }
    }
}

#[test]
fn ls_recovers_exact_frequencies() {
    let s = builtin::frw();
    let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
    for p_star in [[0.25; 4], [0.1, 0.2, 0.3, 0.4], [0.0, 0.5, 0.0, 0.5], [0.7, 0.0, 0.3, 0.0]] {
        // 48 * 10^9 * m(t, o) is integral for every column
        let counts: Vec<u64> = m.predict(&p_star).iter().map(|f| (f * 48e9).round() as u64).collect();
        let r = estimate_ls(&m, &counts, DEFAULT_MAX_ITER).unwrap();
        assert!(r.converged && r.identifiable);
        for (a, b) in r.weights.iter().zip(&p_star) {
            assert!((a - b).abs() < 1e-8, "{p_star:?} -> {:?}", r.weights);
        }
    }
}

#[test]
fn rank_deficient_ls_still_returns_a_point() {
    let s = builtin::frw();
    let p = Partition::new(["I", "II"]);
    let m = ModelMatrix::build(&s, &[Partition::empty(), p.clone(), p]).unwrap();
    assert!(!m.is_identifiable());
    let counts: Vec<u64> = m.column(1).iter().map(|x| (x * 48.0).round() as u64).collect();
    let r = estimate_ls(&m, &counts, DEFAULT_MAX_ITER).unwrap();
    assert!(!r.identifiable);
    assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // the duplicated columns share the weight equally from the uniform start
    assert!((r.weights[1] - r.weights[2]).abs() < 1e-12);
    let em = estimate_em(&m, &counts, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(!em.identifiable);
}

#[test]
fn blanks_are_rejected() {
    let s = builtin::frw();
    let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
    let g = SeededGenerator::new(1);
    let raw = Sampler::new(&s, &both_merged()).unwrap().sample_many(&g, 10, Execution::Sequential).unwrap();
    assert!(matches!(m.counts(&s, &raw), Err(InferenceError::Blank(0))));
}

#[test]
fn point_mass_data_is_recovered() {
    let s = builtin::frw();
    let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
    let records = uniformized_rounds(&s, &both_merged(), 77, 1_000_000);
    let counts = m.counts(&s, &records).unwrap();
    let em = estimate_em(&m, &counts, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(em.weight(&Partition::new(["I", "II"])) >= 0.98, "{:?}", em.weights);
    let ls = estimate_ls(&m, &counts, DEFAULT_MAX_ITER).unwrap();
    assert!(ls.weight(&Partition::new(["I", "II"])) >= 0.98, "{:?}", ls.weights);
}

/// Error shrinks with the sample size, and the 10^6-round bound used by the
/// acceptance suite holds for every one of 20 seeds.
#[test]
fn estimation_error_shrinks_with_sample_size() {
    let s = builtin::frw();
    let prior = frw_uniform();
    let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
    let sizes = [1_000usize, 10_000, 100_000, 1_000_000];
    let mut em_err = vec![Vec::new(); sizes.len()];
    let mut ls_err = vec![Vec::new(); sizes.len()];
    let mut gap = Vec::new();
    for seed in 0..20 {
        let records = uniformized_rounds(&s, &prior, 1000 + seed, 1_000_000);
        for (k, &n) in sizes.iter().enumerate() {
            let counts = m.counts(&s, &records[..n]).unwrap();
            let em = estimate_em(&m, &counts, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let ls = estimate_ls(&m, &counts, DEFAULT_MAX_ITER).unwrap();
            assert!(em.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
            em_err[k].push(em.l1_distance(&prior));
            ls_err[k].push(ls.l1_distance(&prior));
            if n == 1_000_000 {
                gap.push(em.weights.iter().zip(&ls.weights).map(|(a, b)| (a - b).abs()).sum::<f64>());
            }
        }
    }
    let em_med: Vec<f64> = em_err.iter().cloned().map(median).collect();
    let ls_med: Vec<f64> = ls_err.iter().cloned().map(median).collect();
    println!("median L1 error, EM {em_med:?}, LS {ls_med:?}");
    println!(
        "N = 10^6: max EM error {:.5}, max LS error {:.5}, max EM-LS gap {:.5}",
        em_err[3].iter().cloned().fold(0.0, f64::max),
        ls_err[3].iter().cloned().fold(0.0, f64::max),
        gap.iter().cloned().fold(0.0, f64::max)
    );
    assert!(em_med.windows(2).all(|w| w[1] < w[0]));
    assert!(ls_med.windows(2).all(|w| w[1] < w[0]));
    assert!(em_err[3].iter().all(|&e| e <= 0.02));
    assert!(gap.iter().all(|&d| d <= 0.01));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_lands_on_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // idempotent
        let q = project_simplex(&p);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn em_stays_on_simplex_and_climbs(counts in prop::collection::vec(0u64..50, 16)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let s = builtin::frw();
        let m = ModelMatrix::build(&s, &s.all_partitions()).unwrap();
        match estimate_em(&m, &counts, DEFAULT_TOL, 2_000) {
            Ok(r) => {
                prop_assert!(r.weights.iter().all(|&w| w >= 0.0));
                prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(r.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
            }
            Err(InferenceError::Mismatch(_)) => {
                // some observed tuple is impossible under every partition
                let bad = (0..16).any(|t| counts[t] > 0 && (0..4).all(|o| m.get(t, o) == 0.0));
                prop_assert!(bad);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
