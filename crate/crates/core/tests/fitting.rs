use lossscale_core::{
    evaluate, fit, generate_synthetic, loss_gradient, prepare_scaling, probabilities, Calibrator,
    CalibratorKind, FitConfig, LogitDataset, LossKind, LossSpec, Method, OptimSpec, ScalingConfig,
    SyntheticSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Bayes-calibrated base logits (margin = noise variance) scaled by `scale`.
fn overconfident(classes: usize, per_class: usize, scale: f64, seed: u64) -> LogitDataset {
    let mut spec = SyntheticSpec::balanced(classes, per_class, 4.0, 2.0, seed);
    spec.overconfidence_scale = scale;
    generate_synthetic(&spec).unwrap()
}

fn ts_fit(data: &LogitDataset, optim: OptimSpec) -> Calibrator {
    let mut cal = Calibrator::new(CalibratorKind::Ts, data.class_count()).unwrap();
    fit(&mut cal, data, &FitConfig::new(LossSpec::default(), optim)).unwrap();
    cal
}

fn short() -> OptimSpec {
    OptimSpec {
        epochs: 100,
        ..OptimSpec::default()
    }
}

#[test]
fn overconfident_logits_get_a_temperature_above_one() {
    for seed in 0..3 {
        let data = overconfident(10, 200, 2.5, seed);
        let t = ts_fit(&data, short()).temperature().unwrap();
        assert!(t > 1.0, "seed {seed}: T = {t}");
        assert!((t - 2.5).abs() < 0.3, "seed {seed}: T = {t}");
    }
}

#[test]
fn labels_drawn_from_the_softmax_keep_temperature_near_one() {
    let (n, c) = (5000, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut logits = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..c)
            .map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let mut u = rng.random_range(0.0..e.iter().sum::<f64>());
        let mut y = c - 1;
        for (k, v) in e.iter().enumerate() {
            if u < *v {
                y = k;
                break;
            }
            u -= v;
        }
        logits.extend(row.iter().map(|&v| v as f32));
        labels.push(y as u32);
    }
    let data = LogitDataset::new(logits, labels, c).unwrap();
    let t = ts_fit(&data, short()).temperature().unwrap();
    // regression value recorded for this seed
    assert!((t - 1.0).abs() < 0.1, "T = {t}");
    assert!((t - 0.98189).abs() < 1e-4, "T = {t}");
}

#[test]
fn class_temperatures_follow_per_class_miscalibration() {
    // class i's logit column is inflated by s_i, which a per-class temperature can undo exactly
    let base = generate_synthetic(&SyntheticSpec::balanced(2, 2000, 4.0, 2.0, 32)).unwrap();
    let logits = base
        .logits()
        .chunks(2)
        .flat_map(|r| [2.0 * r[0], 4.0 * r[1]])
        .collect();
    let data = LogitDataset::new(logits, base.labels().to_vec(), 2).unwrap();
    let mut cal = Calibrator::new(CalibratorKind::Cts, 2).unwrap();
    fit(
        &mut cal,
        &data,
        &FitConfig::new(LossSpec::default(), short()),
    )
    .unwrap();
    let t = cal.class_temperatures().unwrap();
    assert!(t[0] < t[1], "{t:?}");
    assert!(
        (t[0] - 2.0).abs() < 0.2 && (t[1] - 4.0).abs() < 0.4,
        "{t:?}"
    );
}

#[test]
fn gradient_vanishes_at_the_fitted_minimum() {
    let data = overconfident(10, 100, 2.5, 33);
    for kind in [CalibratorKind::Ts, CalibratorKind::Cts] {
        let mut cal = Calibrator::new(kind, 10).unwrap();
        let cfg = FitConfig::new(LossSpec::default(), OptimSpec::default());
        fit(&mut cal, &data, &cfg).unwrap();
        let g = loss_gradient(&cal, &data, &LossSpec::default(), None).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{kind:?}: |g| = {norm}");
    }
}

#[test]
fn calibration_lowers_ece_without_touching_accuracy() {
    let val = overconfident(10, 300, 2.5, 34);
    let test = overconfident(10, 300, 2.5, 35);
    let before = evaluate(&probabilities(&test.logits_f64()), test.labels(), 15).unwrap();
    for kind in [CalibratorKind::Ts, CalibratorKind::Ets, CalibratorKind::Pts] {
        let mut cal = Calibrator::new(kind, 10).unwrap();
        let optim = if kind == CalibratorKind::Pts {
            OptimSpec {
                epochs: 300,
                weight_decay: 0.002,
                ..OptimSpec::first_order()
            }
        } else {
            short()
        };
        fit(&mut cal, &val, &FitConfig::new(LossSpec::default(), optim)).unwrap();
        let after = evaluate(
            &probabilities(&cal.apply_dataset(&test).unwrap()),
            test.labels(),
            15,
        )
        .unwrap();
        assert_eq!(after.correct, before.correct, "{kind:?}");
        assert!(
            after.ece < before.ece,
            "{kind:?}: {} vs {}",
            after.ece,
            before.ece
        );
    }
}

#[test]
fn quasi_newton_trace_decreases_on_temperature_nll() {
    let data = overconfident(10, 200, 2.5, 36);
    let mut cal = Calibrator::new(CalibratorKind::Ts, 10).unwrap();
    let trace = fit(
        &mut cal,
        &data,
        &FitConfig::new(LossSpec::default(), short()),
    )
    .unwrap();
    let obj: Vec<f64> = trace.records.iter().map(|r| r.objective).collect();
    assert_eq!(obj.len(), 101);
    assert!(obj.windows(2).all(|w| w[1] <= w[0]), "{obj:?}");
    assert!(obj[..6].windows(2).all(|w| w[1] < w[0]), "{obj:?}");
    assert!(obj[0] - obj[100] > 1.0);
}

#[test]
fn fitting_is_deterministic() {
    let data = overconfident(5, 50, 2.5, 37);
    for kind in CalibratorKind::ALL {
        let run = || {
            let mut cal = Calibrator::new(kind, 5).unwrap();
            let optim = OptimSpec {
                epochs: 30,
                ..OptimSpec::default()
            };
            let mut cfg = FitConfig::new(LossSpec::new(LossKind::Fl), optim);
            cfg.scaling = Some(ScalingConfig::default());
            let trace = fit(&mut cal, &data, &cfg).unwrap();
            (cal, trace)
        };
        assert_eq!(run(), run(), "{kind:?}");
    }
}

#[test]
fn ets_trains_temperature_then_weights() {
    let data = overconfident(10, 100, 2.5, 38);
    let mut cal = Calibrator::new(CalibratorKind::Ets, 10).unwrap();
    let trace = fit(
        &mut cal,
        &data,
        &FitConfig::new(LossSpec::default(), short()),
    )
    .unwrap();
    assert_eq!(trace.records.len(), 201);
    assert_eq!(trace.records[100].stage, 1);
    let w = cal.ets_weights().unwrap();
    assert!(w.iter().all(|&v| v >= 0.0), "{w:?}");
    // the constant term cancels in the softmax, so it never moves
    assert!(w[2].abs() < 1e-12, "{w:?}");
}

#[test]
fn one_descent_step_lowers_class_losses_before_scaling() {
    for seed in 0..5 {
        let data = overconfident(10, 100, 2.5, 40 + seed);
        let cal = Calibrator::new(CalibratorKind::Ts, 10).unwrap();
        let state = prepare_scaling(
            &cal,
            &data,
            &LossSpec::default(),
            &ScalingConfig::default(),
            &OptimSpec::default(),
        )
        .unwrap();
        assert!(state.l1.total() < state.l0.total(), "seed {seed}");
        assert!(state.objective <= state.objective_init);
        let half = state.beta / 2.0;
        let inside = |w: &f64| w.abs() < half || (half == 0.0 && *w == 0.0);
        assert!(
            state.weights.iter().all(inside),
            "beta {}: {:?}",
            state.beta,
            state.weights
        );
        assert!(!cal.is_fitted());
    }
}

#[test]
fn zero_learning_rate_leaves_scaling_at_init() {
    let data = overconfident(10, 100, 2.5, 45);
    let cal = Calibrator::new(CalibratorKind::Ts, 10).unwrap();
    for method in [Method::QuasiNewton, Method::FirstOrder] {
        let optim = OptimSpec {
            method,
            learning_rate: 0.0,
            ..OptimSpec::default()
        };
        let state = prepare_scaling(
            &cal,
            &data,
            &LossSpec::default(),
            &ScalingConfig::default(),
            &optim,
        )
        .unwrap();
        assert_eq!(state.l0, state.l1);
        assert_eq!((state.alpha, state.beta), (1.0, 1.5));
    }
}

#[test]
fn zero_beta_scaling_matches_plain_training() {
    let data = overconfident(10, 100, 2.5, 46);
    let optim = OptimSpec {
        epochs: 40,
        ..OptimSpec::default()
    };
    let mut plain = Calibrator::new(CalibratorKind::Cts, 10).unwrap();
    fit(
        &mut plain,
        &data,
        &FitConfig::new(LossSpec::default(), optim.clone()),
    )
    .unwrap();
    let mut scaled = Calibrator::new(CalibratorKind::Cts, 10).unwrap();
    let mut cfg = FitConfig::new(LossSpec::default(), optim);
    cfg.scaling = Some(ScalingConfig {
        beta_init: 0.0,
        beta_bounds: (0.0, 0.0),
        ..ScalingConfig::default()
    });
    let trace = fit(&mut scaled, &data, &cfg).unwrap();
    assert!(trace
        .records
        .iter()
        .all(|r| r.weights.as_ref().unwrap().iter().all(|&w| w == 0.0)));
    assert_eq!(plain.params(), scaled.params());
}

#[test]
fn subset_training_on_every_class_is_plain_training() {
    let data = overconfident(4, 50, 2.5, 47);
    let optim = short();
    let mut a = Calibrator::new(CalibratorKind::Ts, 4).unwrap();
    let ta = fit(
        &mut a,
        &data,
        &FitConfig::new(LossSpec::default(), optim.clone()),
    )
    .unwrap();
    let mut b = Calibrator::new(CalibratorKind::Ts, 4).unwrap();
    let mut cfg = FitConfig::new(LossSpec::default(), optim);
    cfg.class_subset = Some(vec![0, 1, 2, 3]);
    let tb = fit(&mut b, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
}
