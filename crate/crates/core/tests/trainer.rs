use svdcond::config::{parse_treatment_label, ExperimentConfig};
use svdcond::ortho::TreatmentConfig;
use svdcond::random;
use svdcond::svdlayer::{GradStabilizer, SecondStepCovariance};
use svdcond::trainer::{
    synth_data, synth_maps, train, two_step_sim, Dataset, HeadMode, ToyModel, TrainOptions, TAIL_FRACTION,
};
use svdcond::Matrix;

fn small_gcp() -> (Dataset, Dataset, ToyModel) {
    let data = synth_maps(3, 120, 6, 8, 3, 50.0).unwrap();
    let (tr, va) = data.split(0.25).unwrap();
    let mut rng = random::rng(3);
    let model = ToyModel::new(&mut rng, tr.dim(), 4, 3, HeadMode::Gcp { positions: 8 }, false).unwrap();
    (tr, va, model)
}

fn options(epochs: usize) -> TrainOptions {
    TrainOptions {
        epochs,
        batch_size: 16,
        seed: 9,
        ..TrainOptions::default()
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let (tr, va, model) = small_gcp();
    let t = parse_treatment_label("ow+nog+olr", 0.2, 1e-3).unwrap();
    let run = || {
        let mut rng = random::rng(3);
        let mut m = ToyModel::new(&mut rng, tr.dim(), 4, 3, model.head, true).unwrap();
        train(&mut m, &tr, &va, &t, &options(3)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn zero_epochs_record_only_the_initial_state() {
    let (tr, va, mut model) = small_gcp();
    let before = model.clone();
    let trace = train(&mut model, &tr, &va, &TreatmentConfig::baseline(0.1), &options(0)).unwrap();
    assert!(trace.steps.is_empty());
    assert!(trace.epoch_accuracy.is_empty());
    assert!(trace.initial_kappa.is_finite() && trace.initial_kappa >= 1.0);
    assert_eq!(trace.initial_loss, trace.final_loss);
    assert_eq!(model, before);
}

#[test]
fn step_indices_are_monotone_and_lr_is_capped() {
    let (tr, va, mut model) = small_gcp();
    let t = parse_treatment_label("nog+olr", 0.2, 1e-3).unwrap();
    let trace = train(&mut model, &tr, &va, &t, &options(4)).unwrap();
    for (i, s) in trace.steps.iter().enumerate() {
        assert_eq!(s.step, i);
        assert!(s.lr > 0.0 && s.lr <= 0.2);
        assert_eq!(s.olr_fired, s.lr < 0.2);
        assert!(s.kappa >= 1.0);
    }
    assert_eq!(trace.epoch_accuracy.len(), 4);
}

#[test]
fn loss_decreases_under_every_treatment_on_the_default_config() {
    let cfg = ExperimentConfig {
        treatments: ["svd", "sn", "ol", "ow", "nog", "olr", "sn+nog", "ol+nog", "ow+nog", "ow+nog+olr"]
            .iter()
            .map(|l| parse_treatment_label(l, 0.3, 1e-3).unwrap())
            .collect(),
        ..ExperimentConfig::default()
    };
    for trace in cfg.run_all().unwrap() {
        assert!(
            trace.final_loss < trace.initial_loss,
            "{}: {} -> {}",
            trace.label,
            trace.initial_loss,
            trace.final_loss
        );
        assert_eq!(trace.failures, 0, "{}", trace.label);
    }
}

#[test]
fn nog_and_ow_lower_the_tail_conditioning_by_ten() {
    let cfg = ExperimentConfig {
        treatments: ["svd", "nog", "ow"]
            .iter()
            .map(|l| parse_treatment_label(l, 0.3, 1e-3).unwrap())
            .collect(),
        ..ExperimentConfig::default()
    };
    let traces = cfg.run_all().unwrap();
    let tail: Vec<f64> = traces
        .iter()
        .map(|t| t.median_tail_kappa(TAIL_FRACTION).unwrap())
        .collect();
    assert!(tail[0] >= 10.0 * tail[1], "svd {:e} vs nog {:e}", tail[0], tail[1]);
    assert!(tail[0] >= 10.0 * tail[2], "svd {:e} vs ow {:e}", tail[0], tail[2]);

    // Orthogonal weights keep κ within a constant factor of where it started.
    let ow = &traces[2];
    for s in &ow.steps {
        let ratio = s.kappa / ow.initial_kappa;
        assert!((0.25..4.0).contains(&ratio), "step {}: {ratio}", s.step);
    }
}

#[test]
fn second_step_covariance_without_update_is_exact() {
    let mut rng = random::rng(21);
    let w = random::gaussian_matrix(&mut rng, 4, 6);
    let g = random::gaussian_matrix(&mut rng, 4, 6);
    let y = random::gaussian_matrix(&mut rng, 6, 10);
    let c = SecondStepCovariance::direct(&w, &g, &y, 0.0);
    let wy = w.matmul(&y);
    assert_eq!(c, wy.matmul_t(&wy));
    let e = SecondStepCovariance::expand(&w, &g, &y, 0.0).unwrap();
    assert_eq!(e.quadratic.max_abs(), 0.0);
    assert_eq!(e.grad_left.max_abs(), 0.0);
}

fn whiten_model(seed: u64, ow: bool) -> (Matrix, Vec<usize>, Matrix, ToyModel) {
    let data = synth_data(seed, 64, 10, 3, 20.0).unwrap();
    let (x, labels) = data.gather(&(0..32).collect::<Vec<_>>());
    let (y, _) = data.gather(&(32..64).collect::<Vec<_>>());
    let mut rng = random::rng(seed);
    let model = ToyModel::new(&mut rng, 10, 5, 3, HeadMode::Whiten, ow).unwrap();
    (x, labels, y, model)
}

#[test]
fn quadratic_term_is_second_order_at_small_lr() {
    for seed in 0..10 {
        let (x, labels, y, model) = whiten_model(seed, false);
        let t = TreatmentConfig::baseline(1e-3);
        let sim = two_step_sim(&model, &x, &labels, &y, &t, GradStabilizer::default()).unwrap();
        // ‖η²GYYᵀGᵀ‖ ≤ η‖G‖·‖ηGYYᵀ‖ by sub-multiplicativity.
        let first = sim.expansion.grad_left.frobenius_norm();
        let second = sim.expansion.quadratic.frobenius_norm();
        let gyy = sim.grad.matmul(&y).matmul_t(&y).scale(1e-3);
        let bound = 1e-3 * sim.grad.frobenius_norm() * gyy.frobenius_norm();
        assert!(second <= bound, "seed {seed}: {second:e} > {bound:e}");
        assert!(sim.residual <= 1e-10);

        // Ten times smaller η: the first-order terms shrink tenfold, the
        // quadratic term a hundredfold.
        let w = model.weight().unwrap();
        let small = SecondStepCovariance::expand(&w, &sim.grad, &y, 1e-4).unwrap();
        let r1 = small.grad_left.frobenius_norm() / first;
        let r2 = small.quadratic.frobenius_norm() / second;
        assert!((r1 - 0.1).abs() < 1e-12 && (r2 - 0.01).abs() < 1e-12);
    }
}

#[test]
fn nearest_orthogonal_gradient_is_perfectly_conditioned() {
    for seed in 0..5 {
        let (x, labels, y, model) = whiten_model(seed, false);
        let t = parse_treatment_label("nog", 0.1, 1e-3).unwrap();
        let sim = two_step_sim(&model, &x, &labels, &y, &t, GradStabilizer::default()).unwrap();
        assert!((sim.grad_kappa - 1.0).abs() < 1e-9, "seed {seed}: {}", sim.grad_kappa);
        let plain = two_step_sim(&model, &x, &labels, &y, &TreatmentConfig::baseline(0.1), GradStabilizer::default())
            .unwrap();
        assert!(plain.grad_kappa > 1.0 + 1e-6);
    }
}

#[test]
fn two_step_works_on_covariance_pooling() {
    let (tr, _, model) = small_gcp();
    let (x, labels) = tr.gather(&(0..16).collect::<Vec<_>>());
    let (y, _) = tr.gather(&(16..32).collect::<Vec<_>>());
    let t = parse_treatment_label("ow+nog+olr", 0.1, 1e-3).unwrap();
    let mut rng = random::rng(4);
    let ow_model = ToyModel::new(&mut rng, tr.dim(), 4, 3, model.head, true).unwrap();
    let sim = two_step_sim(&ow_model, &x, &labels, &y, &t, GradStabilizer::default()).unwrap();
    assert_eq!(sim.c.shape(), (4, 4));
    assert!(sim.residual <= 1e-10);
    assert!(sim.step_lr <= 0.1);
}

#[test]
fn anisotropy_drives_data_conditioning() {
    for (aniso, lo, hi) in [(1.0, 1.0, 2.0), (1e6, 1e5, 1e7)] {
        let data = synth_data(5, 2000, 8, 2, aniso).unwrap();
        let cov = svdcond::svdlayer::covariance(&data.features, true).unwrap();
        let k = svdcond::matcore::cond_number(&cov).unwrap();
        // Class means add some spread on top of the within-class covariance.
        assert!(k >= lo && k <= hi * 10.0, "anisotropy {aniso:e}: κ = {k:e}");
    }
}
