//! Mini-batch training of the reference classifier.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::adam::{AdamError, AdamState};
use crate::config::TrainerConfig;
use crate::model::{bce_from_logit, ClassifierParams, Example};
use crate::rng::shuffle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("empty labeled set")]
    Empty,
    #[error("single-class labeled set ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("parameters do not match trainer config (feature_dim {params} vs {config})")]
    Shape { params: usize, config: usize },
    #[error(transparent)]
    Optimizer(#[from] AdamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: ClassifierParams,
    /// Mean cross-entropy over the whole labeled set after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl Trained {
    /// Mean cross-entropy after the last epoch, or of the initial parameters
    /// when no epoch ran.
    pub fn final_loss(&self, examples: &[Example]) -> f64 {
        self.epoch_losses
            .last()
            .copied()
            .unwrap_or_else(|| mean_loss(&self.params, examples))
    }
}

pub fn mean_loss(params: &ClassifierParams, examples: &[Example]) -> f64 {
    examples
        .iter()
        .map(|e| bce_from_logit(params.logit(&e.features), e.target))
        .sum::<f64>()
        / examples.len() as f64
}

/// Minimizes mean cross-entropy plus L2 decay with Adam, shuffling the example
/// order with `rng` at the start of every epoch.
///
/// The labeled set must hold both classes. Given the same inputs and the same
/// rng state, the result is bit-identical.
pub fn train<R: Rng + ?Sized>(
    initial: ClassifierParams,
    examples: &[Example],
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<Trained, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let positives = examples.iter().filter(|e| e.target > 0.5).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::SingleClass { positives, negatives });
    }
    if initial.feature_dim != cfg.feature_dim {
        return Err(TrainError::Shape {
            params: initial.feature_dim,
            config: cfg.feature_dim,
        });
    }

    let dim = initial.feature_dim;
    let bias_slot = dim;
    // Parameters packed as [weights..., bias] so the optimizer sees one vector.
    let mut theta = initial.weights;
    theta.push(initial.bias);

    // Coordinates outside this set have zero weight, zero moments and zero
    // gradient for the whole run, so skipping them is exact.
    let mut active: Vec<usize> = examples
        .iter()
        .flat_map(|e| e.features.indices.iter().map(|&i| i as usize))
        .chain(
            theta[..dim]
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, _)| i),
        )
        .collect();
    active.sort_unstable();
    active.dedup();
    active.push(bias_slot);

    let mut adam = AdamState::from_trainer(dim + 1, cfg);
    let mut grad = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch_size = cfg.batch_size.min(examples.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        shuffle(rng, &mut order);
        for batch in order.chunks(batch_size) {
            let n = batch.len() as f64;
            for &j in batch {
                let e = &examples[j];
                let z = e.features.dot(&theta[..dim]) + theta[bias_slot];
                let r = (crate::model::sigmoid(z) - e.target) / n;
                for (i, x) in e.features.iter() {
                    grad[i] += r * x;
                }
                grad[bias_slot] += r;
            }
            adam.step_sparse(&mut theta, &active, &grad)?;
            for &j in batch {
                for &i in &examples[j].features.indices {
                    grad[i as usize] = 0.0;
                }
            }
            grad[bias_slot] = 0.0;
        }
        let loss = examples
            .iter()
            .map(|e| bce_from_logit(e.features.dot(&theta[..dim]) + theta[bias_slot], e.target))
            .sum::<f64>()
            / examples.len() as f64;
        epoch_losses.push(loss);
    }

    let bias = theta.pop().expect("bias slot");
    Ok(Trained {
        params: ClassifierParams {
            weights: theta,
            bias,
            feature_dim: dim,
            ngram_orders: initial.ngram_orders,
        },
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::featurize;
    use crate::model::{gradient, objective};
    use crate::rng::{new_rng, unit};
    use alloc::format;

    fn small_cfg() -> TrainerConfig {
        TrainerConfig {
            feature_dim: 1 << 12,
            epochs: 50,
            ..TrainerConfig::default()
        }
    }

    fn separable(cfg: &TrainerConfig) -> Vec<Example> {
        let pos = [
            "latte",
            "espresso",
            "mocha",
            "americano",
            "cappuccino",
            "macchiato",
            "ristretto",
            "cortado",
        ];
        let neg = ["kettle", "spoon", "napkin", "tray", "basket", "ladle", "sieve", "whisk"];
        pos.iter()
            .map(|w| (w, 1.0))
            .chain(neg.iter().map(|w| (w, 0.0)))
            .map(|(w, y)| Example {
                features: featurize(w, &cfg.ngram_orders, cfg.feature_dim),
                target: y,
            })
            .collect()
    }

    #[test]
    fn fits_separable_corpus() {
        let cfg = small_cfg();
        let ex = separable(&cfg);
        let out = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(1)).unwrap();
        for e in &ex {
            let p = out.params.predict_features(&e.features);
            assert_eq!(p >= 0.5, e.target > 0.5);
        }
        assert!(out.epoch_losses[9] < out.epoch_losses[0]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainerConfig {
            epochs: 0,
            ..small_cfg()
        };
        let ex = separable(&cfg);
        let out = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(1)).unwrap();
        assert_eq!(out.params, ClassifierParams::fresh(&cfg));
        assert!((out.final_loss(&ex) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let cfg = small_cfg();
        let ex: Vec<_> = separable(&cfg).into_iter().filter(|e| e.target > 0.5).collect();
        let err = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(1)).unwrap_err();
        assert!(matches!(
            err,
            TrainError::SingleClass {
                positives: 8,
                negatives: 0
            }
        ));
        assert!(format!("{err}").contains("single-class labeled set"));
    }

    #[test]
    fn bit_identical_under_same_seed() {
        let cfg = small_cfg();
        let ex = separable(&cfg);
        let a = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(5)).unwrap();
        let b = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_training_matches_dense_reference() {
        // Dense full-vector Adam over the packed objective gradient must agree
        // with the active-set path used by `train`.
        let cfg = TrainerConfig {
            feature_dim: 256,
            epochs: 3,
            batch_size: 4,
            ..TrainerConfig::default()
        };
        let ex = separable(&cfg);
        let trained = train(ClassifierParams::fresh(&cfg), &ex, &cfg, &mut new_rng(11)).unwrap();

        let mut rng = new_rng(11);
        let mut params = ClassifierParams::fresh(&cfg);
        let mut adam = AdamState::from_trainer(cfg.feature_dim + 1, &cfg);
        adam.weight_decay = 0.0;
        let mut order: Vec<usize> = (0..ex.len()).collect();
        for _ in 0..cfg.epochs {
            shuffle(&mut rng, &mut order);
            for batch in order.chunks(cfg.batch_size) {
                let refs: Vec<&Example> = batch.iter().map(|&j| &ex[j]).collect();
                let g = gradient(&params, &refs, cfg.weight_decay);
                let mut theta = params.weights.clone();
                theta.push(params.bias);
                adam.step(&mut theta, &g).unwrap();
                params.bias = theta.pop().unwrap();
                params.weights = theta;
            }
        }
        for (a, b) in trained.params.weights.iter().zip(&params.weights) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((trained.params.bias - params.bias).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = new_rng(77);
        let words = ["tea", "latte", "green tea", "cold brew", "mug", "oolong"];
        for _ in 0..20 {
            let mut params = ClassifierParams::zeros(32, &[1, 2]);
            params.weights.iter_mut().for_each(|w| *w = unit(&mut rng) - 0.5);
            params.bias = unit(&mut rng) - 0.5;
            let ex: Vec<Example> = words
                .iter()
                .map(|w| Example {
                    features: featurize(w, &[1, 2], 32),
                    target: if unit(&mut rng) < 0.5 { 1.0 } else { 0.0 },
                })
                .collect();
            let refs: Vec<&Example> = ex.iter().collect();
            let g = gradient(&params, &refs, 0.01);
            let h = 1e-6;
            let mut num = Vec::new();
            for i in 0..=32 {
                let mut plus = params.clone();
                let mut minus = params.clone();
                if i < 32 {
                    plus.weights[i] += h;
                    minus.weights[i] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                num.push((objective(&plus, &refs, 0.01) - objective(&minus, &refs, 0.01)) / (2.0 * h));
            }
            let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b) * (a - b)).sum();
            let scale: f64 = g
                .iter()
                .map(|a| a * a)
                .sum::<f64>()
                .max(num.iter().map(|b| b * b).sum());
            assert!(libm::sqrt(diff / scale) < 1e-5, "gradient mismatch");
        }
    }
}
