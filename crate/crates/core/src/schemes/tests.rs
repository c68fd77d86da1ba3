use super::*;
use crate::networks::{Activation, MlpConfig};
use crate::problems::{Bsb, BsbParams, Exact, Toy};
use crate::simulate::{anchored_x0, coarsen, sample_increments, Domain, NoiseKey};
use alloc::vec;
use proptest::prelude::*;

const FIELD_KINDS: [SchemeKind; 3] = [SchemeKind::Scheme1, SchemeKind::Scheme2, SchemeKind::Scheme3];

fn key(counter: u64) -> NoiseKey {
    NoiseKey::new(23, Domain::Scratch, counter)
}

fn bsb(dim: usize) -> Bsb {
    Bsb::new(BsbParams::with_dim(dim)).unwrap()
}

fn tiny_field(dim: usize, seed: u64) -> Model {
    let cfg = NetworkConfig::Mlp(MlpConfig::scalar_field(dim, 1, 4));
    Model::Field(cfg.init(seed).unwrap())
}

fn tiny_deep_bsde(dim: usize, n_steps: usize, seed: u64) -> Model {
    let cfg = DeepBsdeConfig {
        dim,
        n_steps,
        hidden_layers: 1,
        hidden_width: 4,
        activation: Activation::Sine,
    };
    let mut p = DeepBsdeParams::init(cfg, seed, 1.3).unwrap();
    p.z0 = Matrix::from_fn(1, dim, |_, j| 0.2 * j as f64 - 0.1);
    Model::DeepBsde(p)
}

fn config(kind: SchemeKind, n_steps: usize, batch: usize) -> SchemeConfig {
    SchemeConfig {
        beta1: 0.7,
        beta2: 0.3,
        ..SchemeConfig::new(kind, TimeGrid::new(n_steps, 1.0).unwrap(), batch)
    }
}

/// Relative 2-norm distance between taped and central-difference gradients.
fn gradient_mismatch<P: Fbsde>(problem: &P, model: &Model, cfg: &SchemeConfig, batch: &Batch) -> f64 {
    let (_, grads) = loss_and_grad(problem, model, cfg, batch).unwrap();
    let h = 1e-5;
    let mut probe = model.clone();
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (k, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + h;
            let up = loss(problem, &probe, cfg, batch).unwrap().total;
            probe.tensors_mut()[k].data_mut()[i] = orig - h;
            let down = loss(problem, &probe, cfg, batch).unwrap().total;
            probe.tensors_mut()[k].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - g.data()[i]).powi(2);
            norm += fd * fd;
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let p = bsb(2);
    for seed in 0..4 {
        let grid = TimeGrid::new(2, 1.0).unwrap();
        let dw = sample_increments(key(seed), 2, &grid, 2);
        let x0 = anchored_x0(&p, 2);
        let batch = Batch::whole(&x0, &dw);
        for kind in FIELD_KINDS {
            let err = gradient_mismatch(&p, &tiny_field(2, seed), &config(kind, 2, 2), &batch);
            assert!(err < 1e-4, "{kind} seed {seed}: {err}");
        }
        let cfg = config(SchemeKind::DeepBsde, 2, 2);
        let err = gradient_mismatch(&p, &tiny_deep_bsde(2, 2, seed), &cfg, &batch);
        assert!(err < 1e-4, "deep bsde seed {seed}: {err}");
    }
}

#[test]
fn coupled_scheme3_gradients_match_finite_differences() {
    let p = Toy {
        drift: 0.3,
        sigma: 0.4,
        rate: -0.2,
        terminal_scale: 0.5,
        coupling: 0.25,
        ..Toy::frozen(vec![0.8, -0.6])
    };
    let grid = TimeGrid::new(2, 1.0).unwrap();
    let dw = sample_increments(key(40), 2, &grid, 2);
    let x0 = anchored_x0(&p, 2);
    let batch = Batch::whole(&x0, &dw);
    for sigma in [Scheme3Sigma::AsPrinted, Scheme3Sigma::OwnBranch] {
        let cfg = SchemeConfig {
            scheme3_sigma: sigma,
            ..config(SchemeKind::Scheme3, 2, 2)
        };
        let err = gradient_mismatch(&p, &tiny_field(2, 9), &cfg, &batch);
        assert!(err < 1e-4, "{sigma:?}: {err}");
    }
}

#[test]
fn unpenalised_total_is_the_pathwise_term() {
    let p = bsb(3);
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let dw = sample_increments(key(1), 5, &grid, 3);
    let x0 = anchored_x0(&p, 5);
    for kind in FIELD_KINDS {
        let cfg = SchemeConfig {
            beta1: 0.0,
            beta2: 0.0,
            ..config(kind, 4, 5)
        };
        let l = loss(&p, &tiny_field(3, 2), &cfg, &Batch::whole(&x0, &dw)).unwrap();
        assert_eq!(l.total, l.pathwise, "{kind}");
    }
}

/// `u_θ(t₁, x₀) − u_θ(t₀, x₀)` for the tiny network.
fn one_step_variation(model: &Model, x0: &[f64]) -> f64 {
    let net = model.field().unwrap();
    net.eval_point(1.0, x0).unwrap() - net.eval_point(0.0, x0).unwrap()
}

#[test]
fn collapsed_single_step_losses_are_the_time_variation() {
    let p = Toy::frozen(vec![0.5, -1.5]);
    let model = tiny_field(2, 4);
    let dw = vec![Matrix::zeros(3, 2)];
    let x0 = anchored_x0(&p, 3);
    let expect = one_step_variation(&model, p.x0()).powi(2);
    for kind in FIELD_KINDS {
        let l = loss(&p, &model, &config(kind, 1, 3), &Batch::whole(&x0, &dw)).unwrap();
        assert!((l.pathwise - expect).abs() < 1e-14, "{kind}: {} vs {expect}", l.pathwise);
    }
}

#[test]
fn frozen_scheme2_paths_measure_network_drift_in_time() {
    let p = Toy::frozen(vec![0.2, 0.9]);
    let model = tiny_field(2, 5);
    let net = model.field().unwrap();
    let n = 4;
    let dw = vec![Matrix::zeros(2, 2); n];
    let x0 = anchored_x0(&p, 2);
    let l = loss(&p, &model, &config(SchemeKind::Scheme2, n, 2), &Batch::whole(&x0, &dw)).unwrap();
    let u0 = net.eval_point(0.0, p.x0()).unwrap();
    let expect = (1..=n)
        .map(|k| (net.eval_point(k as f64 / n as f64, p.x0()).unwrap() - u0).powi(2))
        .sum::<f64>()
        / n as f64;
    assert!((l.pathwise - expect).abs() < 1e-14, "{} vs {expect}", l.pathwise);
}

#[test]
fn exact_terminal_fit_has_no_terminal_penalty() {
    let p = bsb(2);
    let grid = TimeGrid::new(3, 1.0).unwrap();
    let dw = sample_increments(key(2), 6, &grid, 2);
    let x0 = anchored_x0(&p, 6);
    let cfg = config(SchemeKind::Scheme2, 3, 6);
    let terms = scheme2_loss(&p, &Eager, &Exact(&p), &cfg, &Batch::whole(&x0, &dw)).unwrap();
    let l = terms.breakdown(&Eager);
    assert!(l.terminal_value < 1e-20, "{}", l.terminal_value);
    assert!(l.terminal_grad < 1e-20, "{}", l.terminal_grad);
}

#[test]
fn scheme3_collapses_to_scheme2_on_decoupled_problems() {
    let p = bsb(3);
    let grid = TimeGrid::new(5, 1.0).unwrap();
    let dw = sample_increments(key(3), 4, &grid, 3);
    let x0 = anchored_x0(&p, 4);
    let model = tiny_field(3, 6);
    let batch = Batch::whole(&x0, &dw);
    let s2 = loss(&p, &model, &config(SchemeKind::Scheme2, 5, 4), &batch).unwrap();
    let s3 = loss(&p, &model, &config(SchemeKind::Scheme3, 5, 4), &batch).unwrap();
    assert_eq!(s2, s3);
    let (_, g2) = loss_and_grad(&p, &model, &config(SchemeKind::Scheme2, 5, 4), &batch).unwrap();
    let (_, g3) = loss_and_grad(&p, &model, &config(SchemeKind::Scheme3, 5, 4), &batch).unwrap();
    assert_eq!(g2, g3);
}

#[test]
fn scheme3_sigma_readings_differ_only_when_coupled() {
    let x0v = vec![0.7, 1.1];
    let coupled = Toy {
        sigma: 0.5,
        rate: 0.1,
        terminal_scale: 1.0,
        coupling: 0.8,
        ..Toy::frozen(x0v.clone())
    };
    let decoupled = Toy {
        coupling: 0.0,
        ..coupled.clone()
    };
    let grid = TimeGrid::new(3, 1.0).unwrap();
    let dw = sample_increments(key(4), 3, &grid, 2);
    let model = tiny_field(2, 7);
    let x0 = Matrix::row_vector(x0v).broadcast_rows(3);
    let batch = Batch::whole(&x0, &dw);
    let run = |p: &Toy, sigma| {
        let cfg = SchemeConfig {
            scheme3_sigma: sigma,
            ..config(SchemeKind::Scheme3, 3, 3)
        };
        loss(p, &model, &cfg, &batch).unwrap().total
    };
    assert_eq!(
        run(&decoupled, Scheme3Sigma::AsPrinted),
        run(&decoupled, Scheme3Sigma::OwnBranch)
    );
    assert_ne!(
        run(&coupled, Scheme3Sigma::AsPrinted),
        run(&coupled, Scheme3Sigma::OwnBranch)
    );
}

#[test]
fn exact_solution_pathwise_loss_decays_at_first_order() {
    let p = bsb(2);
    let m = 1000;
    let fine = sample_increments(key(5), m, &TimeGrid::new(192, 1.0).unwrap(), 2);
    let x0 = anchored_x0(&p, m);
    for kind in [SchemeKind::Scheme2, SchemeKind::Scheme3] {
        let losses: Vec<f64> = [12usize, 48, 192]
            .iter()
            .map(|&n| {
                let dw = coarsen(&fine, 192 / n).unwrap();
                let cfg = config(kind, n, m);
                let terms = field_loss(&p, &Eager, &Exact(&p), &cfg, &Batch::whole(&x0, &dw)).unwrap();
                terms.breakdown(&Eager).pathwise
            })
            .collect();
        assert!(losses[0] > losses[1] && losses[1] > losses[2], "{kind}: {losses:?}");
        let ratio = losses[0] / losses[1];
        assert!((2.5..6.0).contains(&ratio), "{kind}: {losses:?}");
    }
}

#[test]
fn scheme1_exact_solution_loss_is_small_and_decreasing() {
    let p = bsb(2);
    let m = 1000;
    let fine = sample_increments(key(6), m, &TimeGrid::new(48, 1.0).unwrap(), 2);
    let x0 = anchored_x0(&p, m);
    let at = |n: usize| {
        let dw = coarsen(&fine, 48 / n).unwrap();
        let cfg = config(SchemeKind::Scheme1, n, m);
        let terms = scheme1_loss(&p, &Eager, &Exact(&p), &cfg, &Batch::whole(&x0, &dw)).unwrap();
        terms.breakdown(&Eager).pathwise
    };
    let (coarse, fine) = (at(12), at(48));
    assert!(fine < coarse, "{coarse} {fine}");
    // local errors are O(Δt²) per step
    assert!(coarse / fine > 8.0, "{coarse} {fine}");
}

#[test]
fn deep_bsde_loss_vanishes_without_dynamics() {
    let p = Toy::frozen(vec![0.3, 0.4]);
    let Model::DeepBsde(mut params) = tiny_deep_bsde(2, 3, 1) else {
        unreachable!()
    };
    params.y0 = Matrix::scalar(0.0);
    let model = Model::DeepBsde(params);
    let grid = TimeGrid::new(3, 1.0).unwrap();
    let dw = sample_increments(key(7), 4, &grid, 2);
    let x0 = anchored_x0(&p, 4);
    let l = loss(&p, &model, &config(SchemeKind::DeepBsde, 3, 4), &Batch::whole(&x0, &dw)).unwrap();
    assert_eq!(l.total, 0.0);
}

#[test]
fn deep_bsde_single_step_hand_value() {
    // Y₁ = Y₀ + r(Y₀ − Z₀·x)Δt + Z₀·σ x ΔW and g = ‖X₁‖²
    let p = bsb(1);
    let Model::DeepBsde(mut params) = tiny_deep_bsde(1, 1, 0) else {
        unreachable!()
    };
    params.y0 = Matrix::scalar(2.0);
    params.z0 = Matrix::scalar(0.5);
    let model = Model::DeepBsde(params);
    let x0 = Matrix::scalar(1.0);
    let dw = vec![Matrix::scalar(0.3)];
    let l = loss(&p, &model, &config(SchemeKind::DeepBsde, 1, 1), &Batch::whole(&x0, &dw)).unwrap();
    let (r, s) = (0.05, 0.4);
    let y1 = 2.0 + r * (2.0 - 0.5) + 0.5 * s * 0.3;
    let x1 = 1.0 + s * 0.3;
    let expect: f64 = (y1 - x1 * x1) * (y1 - x1 * x1);
    assert!((l.total - expect).abs() < 1e-14, "{} vs {expect}", l.total);
    assert_eq!(l.weighted_sum(), l.total);
}

#[test]
fn chunked_batches_add_up_to_the_whole() {
    let p = bsb(2);
    let grid = TimeGrid::new(3, 1.0).unwrap();
    let dw = sample_increments(key(8), 6, &grid, 2);
    let x0 = anchored_x0(&p, 6);
    let models = [
        (SchemeKind::Scheme1, tiny_field(2, 1)),
        (SchemeKind::Scheme3, tiny_field(2, 2)),
        (SchemeKind::DeepBsde, tiny_deep_bsde(2, 3, 3)),
    ];
    for (kind, model) in models {
        let cfg = config(kind, 3, 6);
        let (whole, whole_grad) = loss_and_grad(&p, &model, &cfg, &Batch::whole(&x0, &dw)).unwrap();
        let mut total = LossBreakdown::zero(whole.weights);
        let mut grads: Option<Vec<Matrix>> = None;
        for range in [0..2, 2..6] {
            let x0c = x0.rows_range(range.clone());
            let dwc: Vec<Matrix> = dw.iter().map(|w| w.rows_range(range.clone())).collect();
            let chunk = Batch {
                x0: &x0c,
                dw: &dwc,
                norm_paths: 6,
                path_offset: range.start,
            };
            let (l, g) = loss_and_grad(&p, &model, &cfg, &chunk).unwrap();
            total.accumulate(&l);
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
            }
        }
        assert!((total.total - whole.total).abs() <= 1e-12 * whole.total, "{kind}");
        for (a, b) in grads.unwrap().iter().zip(&whole_grad) {
            assert!(a.zip_map(b, |x, y| x - y).max_abs() <= 1e-12 * (1.0 + b.max_abs()), "{kind}");
        }
    }
}

#[test]
fn non_finite_loss_names_path_and_station() {
    let p = bsb(2);
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let mut dw = sample_increments(key(9), 3, &grid, 2);
    dw[2].set(1, 0, f64::NAN);
    let x0 = anchored_x0(&p, 3);
    let batch = Batch {
        path_offset: 10,
        norm_paths: 20,
        ..Batch::whole(&x0, &dw)
    };
    for kind in FIELD_KINDS {
        let err = loss(&p, &tiny_field(2, 0), &config(kind, 4, 3), &batch).unwrap_err();
        assert_eq!(err, SchemeError::NonFinite { station: 3, path: 11 }, "{kind}");
    }
    let err = loss(&p, &tiny_deep_bsde(2, 4, 0), &config(SchemeKind::DeepBsde, 4, 3), &batch).unwrap_err();
    assert_eq!(err, SchemeError::NonFinite { station: 3, path: 11 });
}

#[test]
fn model_kind_must_match_scheme() {
    let p = bsb(2);
    let grid = TimeGrid::new(2, 1.0).unwrap();
    let dw = sample_increments(key(10), 1, &grid, 2);
    let x0 = anchored_x0(&p, 1);
    let batch = Batch::whole(&x0, &dw);
    assert!(matches!(
        loss(&p, &tiny_field(2, 0), &config(SchemeKind::DeepBsde, 2, 1), &batch),
        Err(SchemeError::ModelKind { .. })
    ));
    assert!(matches!(
        loss(&p, &tiny_deep_bsde(2, 2, 0), &config(SchemeKind::Scheme2, 2, 1), &batch),
        Err(SchemeError::ModelKind { .. })
    ));
    let short = &dw[..1];
    assert!(matches!(
        loss(&p, &tiny_field(2, 0), &config(SchemeKind::Scheme2, 2, 1), &Batch::whole(&x0, short)),
        Err(SchemeError::Shape(_))
    ));
}

#[test]
fn configuration_validation() {
    let grid = TimeGrid::new(2, 1.0).unwrap();
    assert!(SchemeConfig::new(SchemeKind::Scheme1, grid, 4).validate().is_ok());
    assert!(SchemeConfig::new(SchemeKind::Scheme1, grid, 0).validate().is_err());
    let negative = SchemeConfig {
        beta2: -0.1,
        ..SchemeConfig::new(SchemeKind::Scheme1, grid, 4)
    };
    assert!(negative.validate().is_err());
    for kind in SchemeKind::ALL {
        assert_eq!(kind.name().parse::<SchemeKind>().unwrap(), kind);
    }
    assert!("s4".parse::<SchemeKind>().is_err());
}

#[test]
fn deep_bsde_tensors_round_trip() {
    let model = tiny_deep_bsde(3, 4, 11);
    let tensors: Vec<Matrix> = model.tensors().into_iter().cloned().collect();
    let count: usize = tensors.iter().map(|t| t.len()).sum();
    assert_eq!(count, model.config().parameter_count());
    assert_eq!(Model::from_tensors(model.config(), tensors).unwrap(), model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn losses_are_non_negative_and_consistent(seed in 0u64..1000, kind_ix in 0usize..4, n in 1usize..4) {
        let p = bsb(2);
        let kind = SchemeKind::ALL[kind_ix];
        let model = match kind {
            SchemeKind::DeepBsde => tiny_deep_bsde(2, n, seed),
            _ => tiny_field(2, seed),
        };
        let grid = TimeGrid::new(n, 1.0).unwrap();
        let dw = sample_increments(key(seed), 3, &grid, 2);
        let x0 = anchored_x0(&p, 3);
        let l = loss(&p, &model, &config(kind, n, 3), &Batch::whole(&x0, &dw)).unwrap();
        prop_assert!(l.pathwise >= 0.0 && l.terminal_value >= 0.0 && l.terminal_grad >= 0.0);
        prop_assert!(l.total.is_finite());
        prop_assert!((l.total - l.weighted_sum()).abs() <= 1e-12 * l.total.max(1.0));
    }
}
