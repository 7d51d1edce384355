//! Reference classifier: logistic regression over hashed n-gram features.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::TrainerConfig;
use crate::features::{featurize, SparseVector};
use crate::types::DataPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_dim: usize,
    pub ngram_orders: Vec<usize>,
}

impl ClassifierParams {
    /// All-zero weights and bias: every prediction starts at 0.5.
    pub fn zeros(feature_dim: usize, ngram_orders: &[usize]) -> Self {
        assert!(feature_dim >= 2 && feature_dim.is_power_of_two());
        ClassifierParams {
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            feature_dim,
            ngram_orders: ngram_orders.to_vec(),
        }
    }

    pub fn fresh(trainer: &TrainerConfig) -> Self {
        Self::zeros(trainer.feature_dim, &trainer.ngram_orders)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        featurize(text, &self.ngram_orders, self.feature_dim)
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_features(&self, x: &SparseVector) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Number of trainable parameters (weights plus bias).
    pub fn len(&self) -> usize {
        self.feature_dim + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `sigmoid(w . x + b)` for the point's text.
pub fn predict_proba(params: &ClassifierParams, point: &DataPoint) -> f64 {
    params.predict_features(&params.featurize(point.text()))
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// Binary cross-entropy of logit `z` against target `y` in {0, 1}.
pub fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// A labeled training example in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub target: f64,
}

/// Training objective on a batch: mean cross-entropy plus
/// `weight_decay / 2 * |theta|^2` over weights and bias.
///
/// Its gradient is the mean cross-entropy gradient plus `weight_decay * theta`,
/// which is exactly the gradient the optimizer receives.
pub fn objective(params: &ClassifierParams, batch: &[&Example], weight_decay: f64) -> f64 {
    let n = batch.len() as f64;
    let data: f64 = batch
        .iter()
        .map(|e| bce_from_logit(params.logit(&e.features), e.target))
        .sum::<f64>()
        / n;
    let sq: f64 = params.weights.iter().map(|w| w * w).sum::<f64>() + params.bias * params.bias;
    data + 0.5 * weight_decay * sq
}

/// Dense gradient of [`objective`]; the last entry is the bias component.
pub fn gradient(params: &ClassifierParams, batch: &[&Example], weight_decay: f64) -> Vec<f64> {
    let n = batch.len() as f64;
    let mut g = vec![0.0; params.len()];
    let bias_slot = params.feature_dim;
    for e in batch {
        let r = (params.predict_features(&e.features) - e.target) / n;
        for (i, x) in e.features.iter() {
            g[i] += r * x;
        }
        g[bias_slot] += r;
    }
    for (gi, w) in g.iter_mut().zip(&params.weights) {
        *gi += weight_decay * w;
    }
    g[bias_slot] += weight_decay * params.bias;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{new_rng, unit};
    use crate::types::{Pool, Record};
    use alloc::string::ToString;

    fn point(text: &str) -> DataPoint {
        Pool::from_records([Record {
            id: "p".to_string(),
            text: text.to_string(),
            label: None,
        }])
        .unwrap()
        .points()[0]
            .clone()
    }

    #[test]
    fn zero_model_predicts_half() {
        let params = ClassifierParams::zeros(64, &[1, 2]);
        assert_eq!(predict_proba(&params, &point("anything")), 0.5);
    }

    #[test]
    fn large_bias_saturates() {
        let mut params = ClassifierParams::zeros(64, &[1, 2]);
        params.bias = 20.0;
        assert!(predict_proba(&params, &point("x")) > 0.9999);
        params.bias = -800.0;
        let p = predict_proba(&params, &point("x"));
        assert!((0.0..1e-300).contains(&p));
    }

    #[test]
    fn matches_naive_dot_and_sigmoid() {
        let mut rng = new_rng(3);
        for _ in 0..50 {
            let mut params = ClassifierParams::zeros(128, &[1, 2, 3]);
            params.weights.iter_mut().for_each(|w| *w = 4.0 * unit(&mut rng) - 2.0);
            params.bias = 2.0 * unit(&mut rng) - 1.0;
            let text = "iced latte 12 pack";
            let x = featurize(text, &[1, 2, 3], 128);
            // dense reimplementation
            let mut dense = vec![0.0; 128];
            for (i, v) in x.iter() {
                dense[i] = v;
            }
            let z: f64 = dense.iter().zip(&params.weights).map(|(a, b)| a * b).sum::<f64>() + params.bias;
            let naive = 1.0 / (1.0 + libm::exp(-z));
            assert!((predict_proba(&params, &point(text)) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }
}
