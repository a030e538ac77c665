use proptest::prelude::*;

use svdcond::matcore::{expm, singular_values};
use svdcond::ortho::{
    apply_treatments, nog, olr, ow_map, spectral_normalize, TreatmentConfig, NOG_RANK_TOL,
};
use svdcond::random;
use svdcond::Matrix;

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    (a - b).max_abs() <= tol * b.max_abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nog_ignores_positive_scale(seed in any::<u64>(), n in 2usize..10, log_c in -6.0f64..6.0) {
        let mut rng = random::rng(seed);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let c = 10f64.powf(log_c);
        let r = nog(&g, NOG_RANK_TOL).unwrap().value;
        let rc = nog(&g.scale(c), NOG_RANK_TOL).unwrap().value;
        prop_assert!(close(&rc, &r, 1e-10));
        let neg = nog(&g.scale(-1.0), NOG_RANK_TOL).unwrap().value;
        prop_assert!(close(&neg, &r.scale(-1.0), 1e-10));
    }

    #[test]
    fn nog_is_orthogonally_equivariant(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = random::rng(seed);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let q1 = random::orthogonal_matrix(&mut rng, n);
        let q2 = random::orthogonal_matrix(&mut rng, n);
        let lhs = nog(&q1.matmul(&g).matmul(&q2), NOG_RANK_TOL).unwrap().value;
        let rhs = q1.matmul(&nog(&g, NOG_RANK_TOL).unwrap().value).matmul(&q2);
        prop_assert!(close(&lhs, &rhs, 1e-9));
    }

    #[test]
    fn nog_is_a_local_minimum_of_the_distance(seed in any::<u64>(), n in 2usize..8) {
        // Every nearby orthogonal matrix R·exp(εK) is farther from G.
        let mut rng = random::rng(seed);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let r = nog(&g, NOG_RANK_TOL).unwrap().value;
        let best = (&g - &r).frobenius_norm();
        for _ in 0..20 {
            let k = random::skew_matrix(&mut rng, n, 1e-3);
            let q = r.matmul(&expm(&k).unwrap());
            prop_assert!((&g - &q).frobenius_norm() >= best);
        }
    }

    #[test]
    fn olr_scales_inversely_with_the_gradient(seed in any::<u64>(), n in 2usize..10, log_c in -3.0f64..3.0) {
        let mut rng = random::rng(seed);
        let w = random::gaussian_matrix(&mut rng, n, n);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let c = 10f64.powf(log_c);
        let base = olr(&w, &g, 1.0).unwrap().eta_star;
        let scaled_g = olr(&w, &g.scale(c), 1.0).unwrap().eta_star;
        let scaled_w = olr(&w.scale(c), &g, 1.0).unwrap().eta_star;
        prop_assert!((scaled_g * c - base).abs() <= 1e-12 * base.abs().max(1e-300));
        prop_assert!((scaled_w / c - base).abs() <= 1e-12 * base.abs().max(1e-300));
    }

    #[test]
    fn switch_rule_never_exceeds_base_rate(seed in any::<u64>(), n in 2usize..8, lr in 1e-4f64..2.0, nog_on in any::<bool>()) {
        let mut rng = random::rng(seed);
        let w = random::gaussian_matrix(&mut rng, n, n);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let config = TreatmentConfig { use_olr: true, use_nog: nog_on, ..TreatmentConfig::baseline(lr) };
        let step = apply_treatments(&w, &g, &config).unwrap();
        prop_assert!(step.step_lr > 0.0 && step.step_lr <= lr);
        let outcome = step.olr.unwrap();
        prop_assert_eq!(outcome.used, step.step_lr < lr);
    }

    #[test]
    fn spectral_norm_of_an_orthogonal_weight_is_a_no_op(seed in any::<u64>(), n in 2usize..16) {
        let mut rng = random::rng(seed);
        let v = random::gaussian_matrix(&mut rng, n, n);
        let q = ow_map(&v).unwrap();
        let once = spectral_normalize(&q).unwrap();
        prop_assert!(close(&once, &q, 1e-12));
        let twice = spectral_normalize(&once).unwrap();
        prop_assert!(close(&twice, &once, 1e-12));
    }

    #[test]
    fn spectral_normalization_has_unit_top_singular_value(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9, log_c in -4.0f64..4.0) {
        let mut rng = random::rng(seed);
        let w = random::gaussian_matrix(&mut rng, rows, cols).scale(10f64.powf(log_c));
        let s = spectral_normalize(&w).unwrap();
        let top = singular_values(&s).unwrap()[0];
        prop_assert!((top - 1.0).abs() < 1e-12);
    }
}

#[test]
fn olr_hits_one_third_on_aligned_orthogonal_pairs() {
    let mut rng = random::rng(3);
    for n in [1, 2, 5, 16, 64] {
        let w = random::orthogonal_matrix(&mut rng, n);
        let out = olr(&w, &w, 1.0).unwrap();
        assert!((out.eta_star - 1.0 / 3.0).abs() < 1e-12, "n={n}");
        assert!(out.used);
    }
}

#[test]
fn orthogonal_weight_map_up_to_64() {
    let mut rng = random::rng(4);
    for n in [1, 2, 3, 8, 17, 32, 64] {
        let v = random::gaussian_matrix(&mut rng, n, n);
        let q = ow_map(&v).unwrap();
        assert!(q.orthogonality_error() <= 1e-10, "n={n}: {:e}", q.orthogonality_error());
    }
}

#[test]
fn nog_beats_brute_force_candidates() {
    let mut rng = random::rng(5);
    for n in [2, 3, 4] {
        let g = random::gaussian_matrix(&mut rng, n, n);
        let r = nog(&g, NOG_RANK_TOL).unwrap().value;
        let best = (&g - &r).frobenius_norm();
        for _ in 0..2000 {
            let q = random::orthogonal_matrix(&mut rng, n);
            assert!((&g - &q).frobenius_norm() >= best);
        }
    }
}
