use svdcond::directions::{jacobian, jacobian_directions, spectrum_flatness, weight_directions, DEFAULT_K};
use svdcond::ortho::{nog, ow_map, NOG_RANK_TOL};
use svdcond::random;
use svdcond::Matrix;

fn apply(a: &Matrix, v: &[f64]) -> Vec<f64> {
    a.matmul(&Matrix::column_vector(v)).into_vec()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn top_direction_beats_random_unit_vectors() {
    let mut rng = random::rng(31);
    for (m, n) in [(8, 6), (5, 9), (12, 12)] {
        let a = random::gaussian_matrix(&mut rng, m, n);
        let d = weight_directions(&a, 1).unwrap();
        let best = norm(&apply(&a, &d.vectors.column(0)));
        assert!((best * best - d.spectrum[0]).abs() < 1e-10 * d.spectrum[0]);
        for _ in 0..1000 {
            let v = random::unit_vector(&mut rng, n);
            assert!(norm(&apply(&a, &v)) <= best * (1.0 + 1e-12));
        }
    }
}

#[test]
fn directions_are_orthonormal_and_sorted() {
    let mut rng = random::rng(32);
    let a = random::gaussian_matrix(&mut rng, 10, 8);
    let d = weight_directions(&a, DEFAULT_K).unwrap();
    assert_eq!(d.vectors.shape(), (8, DEFAULT_K));
    assert!(d.vectors.column_orthonormality_error() < 1e-10);
    assert!(d.spectrum.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn positive_scaling_keeps_the_directions() {
    let mut rng = random::rng(33);
    let a = random::gaussian_matrix(&mut rng, 7, 5);
    let d = weight_directions(&a, 3).unwrap();
    for c in [1e-3, 0.5, 7.0, 1e4] {
        let dc = weight_directions(&a.scale(c), 3).unwrap();
        assert!((&dc.vectors - &d.vectors).max_abs() < 1e-9, "c={c}");
        for (s, sc) in d.spectrum.iter().zip(&dc.spectrum) {
            assert!((sc / (c * c) - s).abs() < 1e-9 * s);
        }
    }
}

#[test]
fn orthogonal_projectors_have_flat_spectra() {
    let mut rng = random::rng(34);
    for n in [2, 5, 16, 33] {
        let v = random::gaussian_matrix(&mut rng, n, n);
        let q = ow_map(&v).unwrap();
        assert!((spectrum_flatness(&q).unwrap() - 1.0).abs() < 1e-10);
        let d = weight_directions(&q, n.min(DEFAULT_K)).unwrap();
        assert!(d.flat);
        let g = random::gaussian_matrix(&mut rng, n, n);
        let r = nog(&g, NOG_RANK_TOL).unwrap().value;
        assert!((spectrum_flatness(&r).unwrap() - 1.0).abs() < 1e-10);
        assert!(spectrum_flatness(&g).unwrap() < 1.0);
    }
}

#[test]
fn linear_generators_reduce_to_weight_directions() {
    let mut rng = random::rng(35);
    for (m, n) in [(6, 4), (9, 6), (4, 7)] {
        let a = random::gaussian_matrix(&mut rng, m, n);
        let z0 = random::unit_vector(&mut rng, n);
        let gen = |z: &[f64]| apply(&a, z);
        let j = jacobian(gen, &z0, 1e-4).unwrap();
        assert!((&j - &a).max_abs() < 1e-8);
        let k = n.min(4);
        let from_j = jacobian_directions(gen, &z0, k, 1e-4).unwrap();
        let from_a = weight_directions(&a, k).unwrap();
        assert!((&from_j.vectors - &from_a.vectors).max_abs() < 1e-5);
    }
}

#[test]
fn top_jacobian_direction_moves_a_two_layer_generator_most() {
    let mut rng = random::rng(36);
    let latent = 6;
    let w1 = random::gaussian_matrix(&mut rng, 12, latent).scale(0.5 / (latent as f64).sqrt());
    let w2 = random::gaussian_matrix(&mut rng, 10, 12);
    let gen = |z: &[f64]| {
        let h: Vec<f64> = apply(&w1, z).into_iter().map(f64::tanh).collect();
        apply(&w2, &h)
    };
    let z0 = random::unit_vector(&mut rng, latent);
    let base = gen(&z0);
    let shift = |n: &[f64], alpha: f64| {
        let z: Vec<f64> = z0.iter().zip(n).map(|(a, b)| a + alpha * b).collect();
        let out = gen(&z);
        norm(&out.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let d = jacobian_directions(gen, &z0, 1, 1e-5).unwrap();
    let n1 = d.vectors.column(0);
    // The sign of an eigenvector is arbitrary; either way counts.
    let best = shift(&n1, 0.1).max(shift(&n1, -0.1));
    for _ in 0..500 {
        let v = random::unit_vector(&mut rng, latent);
        assert!(shift(&v, 0.1) <= best);
    }
}
