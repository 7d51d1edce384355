use proptest::prelude::*;
use seedloop_core::adam::{adam_step, AdamState};
use seedloop_core::features::{featurize, SparseVector};
use seedloop_core::model::{gradient, objective, predict_proba, Example};
use seedloop_core::rng::new_rng;
use seedloop_core::train::{train, TrainError};
use seedloop_core::{ClassifierParams, Pool, Record, TrainerConfig};

const DIM: usize = 16;

fn sparse(dim: usize) -> impl Strategy<Value = SparseVector> {
    prop::collection::btree_map(0..dim as u32, 0.05f64..1.0, 1..6).prop_map(|m| {
        let norm = m.values().map(|v| v * v).sum::<f64>().sqrt();
        SparseVector {
            indices: m.keys().copied().collect(),
            values: m.values().map(|v| v / norm).collect(),
        }
    })
}

fn params() -> impl Strategy<Value = ClassifierParams> {
    (prop::collection::vec(-2.0f64..2.0, DIM), -2.0f64..2.0).prop_map(|(weights, bias)| ClassifierParams {
        weights,
        bias,
        feature_dim: DIM,
        ngram_orders: vec![1, 2, 3],
    })
}

fn examples() -> impl Strategy<Value = Vec<Example>> {
    prop::collection::vec(
        (sparse(DIM), any::<bool>()).prop_map(|(features, y)| Example {
            features,
            target: if y { 1.0 } else { 0.0 },
        }),
        1..12,
    )
}

/// Central differences of the objective, one coordinate at a time.
fn numeric_gradient(p: &ClassifierParams, batch: &[&Example], wd: f64) -> Vec<f64> {
    let h = 1e-6;
    (0..=DIM)
        .map(|i| {
            let mut up = p.clone();
            let mut down = p.clone();
            if i == DIM {
                up.bias += h;
                down.bias -= h;
            } else {
                up.weights[i] += h;
                down.weights[i] -= h;
            }
            (objective(&up, batch, wd) - objective(&down, batch, wd)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(p in params(), ex in examples(), wd in prop_oneof![Just(0.0), Just(0.01), 0.0f64..0.5]) {
        let batch: Vec<&Example> = ex.iter().collect();
        let analytic = gradient(&p, &batch, wd);
        let numeric = numeric_gradient(&p, &batch, wd);
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        prop_assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn second_moment_never_negative(grads in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 1..40), lr in 1e-6f64..1.0) {
        let mut state = AdamState::new(4, lr);
        let mut theta = vec![0.5, -0.5, 2.0, 0.0];
        for (t, g) in grads.iter().enumerate() {
            state.step(&mut theta, g).unwrap();
            prop_assert_eq!(state.t, t as u64 + 1);
            prop_assert!(state.v.iter().all(|v| *v >= 0.0));
            prop_assert!(theta.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn probabilities_stay_inside_the_unit_interval(w in prop::collection::vec(-1.0f64..1.0, DIM), b in -5.0f64..5.0, x in sparse(DIM)) {
        let p = ClassifierParams { weights: w.clone(), bias: b, feature_dim: DIM, ngram_orders: vec![1] };
        let z: f64 = x.indices.iter().zip(&x.values).map(|(&i, v)| w[i as usize] * v).sum::<f64>() + b;
        let naive = 1.0 / (1.0 + (-z).exp());
        let got = p.predict_features(&x);
        prop_assert!(got > 0.0 && got < 1.0);
        prop_assert!((got - naive).abs() <= 1e-12);
    }
}

#[test]
fn predict_proba_matches_naive_dot_on_real_text() {
    use rand::Rng;
    let mut rng = new_rng(99);
    let dim = 1 << 10;
    for i in 0..200 {
        let weights: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let params = ClassifierParams {
            weights: weights.clone(),
            bias,
            feature_dim: dim,
            ngram_orders: vec![1, 2, 3],
        };
        let text = format!("item {i} 咖啡 latte {}", rng.random_range(0..1000));
        let pool = Pool::from_records([Record {
            id: "x".into(),
            text: text.clone(),
            label: None,
        }])
        .unwrap();
        let x = featurize(&text, &[1, 2, 3], dim);
        let dot: f64 = x
            .indices
            .iter()
            .zip(&x.values)
            .map(|(&j, v)| weights[j as usize] * v)
            .sum();
        let naive = 1.0 / (1.0 + (-(dot + bias)).exp());
        assert!((predict_proba(&params, pool.points().first().unwrap()) - naive).abs() <= 1e-12);
    }
}

#[test]
fn first_adam_step_is_minus_lr() {
    for lr in [1e-5, 0.05, 0.1] {
        let mut state = AdamState::new(1, lr);
        state.weight_decay = 0.0;
        let (next, theta) = adam_step(&state, &[1.0], &[1.0]).unwrap();
        let expected = 1.0 - lr / (1.0 + state.epsilon);
        assert!(
            (theta[0] - expected).abs() <= 1e-9,
            "lr {lr}: {} vs {expected}",
            theta[0]
        );
        assert_eq!(next.t, 1);
    }
}

#[test]
fn adam_descends_a_parabola() {
    let mut state = AdamState::new(1, 0.1);
    state.weight_decay = 0.0;
    let mut theta = [1.0];
    let mut last = theta[0];
    for _ in 0..10 {
        let g = [2.0 * theta[0]];
        state.step(&mut theta, &g).unwrap();
        assert!(theta[0] < last && theta[0] > 0.0);
        last = theta[0];
    }
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut state = AdamState::new(2, 0.1);
    let mut theta = [0.0, 0.0];
    assert!(state.step(&mut theta, &[0.0, f64::NAN]).is_err());
    assert!(state.step(&mut theta, &[f64::INFINITY, 0.0]).is_err());
}

fn separable(cfg: &TrainerConfig) -> Vec<Example> {
    let pos = [
        "espresso",
        "latte",
        "mocha",
        "americano",
        "cappuccino",
        "macchiato",
        "cortado",
        "ristretto",
    ];
    let neg = ["shampoo", "towel", "soap", "tissue", "sponge", "bucket", "broom", "mop"];
    pos.iter()
        .map(|t| (t, 1.0))
        .chain(neg.iter().map(|t| (t, 0.0)))
        .map(|(t, y)| Example {
            features: featurize(t, &cfg.ngram_orders, cfg.feature_dim),
            target: y,
        })
        .collect()
}

#[test]
fn separable_set_is_fit_exactly_and_loss_falls() {
    let cfg = TrainerConfig {
        epochs: 50,
        learning_rate: 0.05,
        ..TrainerConfig::default()
    };
    let ex = separable(&cfg);
    let trained = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(1)).unwrap();
    for e in &ex {
        let p = trained.params.predict_features(&e.features);
        assert_eq!(p >= 0.5, e.target == 1.0);
    }
    assert!(trained.epoch_losses[9] < trained.epoch_losses[0]);
}

#[test]
fn training_is_bit_identical_per_seed() {
    let cfg = TrainerConfig::default();
    let ex = separable(&cfg);
    let a = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(4)).unwrap();
    let b = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(4)).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a
        .params
        .weights
        .iter()
        .zip(&b.params.weights)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_epochs_and_single_class() {
    let cfg = TrainerConfig {
        epochs: 0,
        ..TrainerConfig::default()
    };
    let ex = separable(&cfg);
    let out = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(0)).unwrap();
    assert_eq!(out.params, ClassifierParams::fresh(&cfg));
    let positives: Vec<Example> = ex.into_iter().filter(|e| e.target == 1.0).collect();
    let err = train(ClassifierParams::fresh(&cfg), &positives, &cfg, &mut new_rng(0)).unwrap_err();
    assert!(matches!(err, TrainError::SingleClass { negatives: 0, .. }));
    assert!(err.to_string().contains("single-class labeled set"));
}
