use serde::{Deserialize, Serialize};

use super::{Batch, MlError, ModelInput};
use crate::env::{dot, sigmoid};

/// Two-head linear model over `[features, indicator, 1]`.
///
/// The finishing-rate head is logistic, the stay-duration head is linear.
/// Both heads carry an intercept as their last coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub fr_weights: Vec<f64>,
    pub sd_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub fr: f64,
    pub sd: f64,
}

/// Gradient of the weighted loss, one vector per head.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorGradient {
    pub fr: Vec<f64>,
    pub sd: Vec<f64>,
}

impl PredictorGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.fr.iter().chain(&self.sd).copied().collect()
    }
}

#[inline]
fn augmented_dot(w: &[f64], input: &ModelInput<'_>) -> f64 {
    let d = input.features.len();
    dot(&w[..d], input.features) + w[d] * input.indicator() + w[d + 1]
}

impl PredictorModel {
    /// All-zero model for `feature_dim` raw features.
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            fr_weights: vec![0.0; feature_dim + 2],
            sd_weights: vec![0.0; feature_dim + 2],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fr_weights.len() - 2
    }

    pub fn is_finite(&self) -> bool {
        self.fr_weights.iter().chain(&self.sd_weights).all(|w| w.is_finite())
    }

    #[inline]
    pub fn fr_logit(&self, input: &ModelInput<'_>) -> f64 {
        augmented_dot(&self.fr_weights, input)
    }

    #[inline]
    pub fn predict(&self, input: &ModelInput<'_>) -> Prediction {
        Prediction {
            fr: sigmoid(self.fr_logit(input)),
            sd: augmented_dot(&self.sd_weights, input),
        }
    }

    /// Parameters as one vector: finishing-rate head, then stay-duration head.
    pub fn flatten(&self) -> Vec<f64> {
        self.fr_weights.iter().chain(&self.sd_weights).copied().collect()
    }

    pub fn from_flat(feature_dim: usize, flat: &[f64]) -> Self {
        let k = feature_dim + 2;
        assert_eq!(flat.len(), 2 * k);
        Self {
            fr_weights: flat[..k].to_vec(),
            sd_weights: flat[k..].to_vec(),
        }
    }

    fn check_batch(&self, batch: &Batch, weights: &[f64]) -> Result<(), MlError> {
        if weights.len() != batch.len() {
            return Err(MlError::LengthMismatch {
                weights: weights.len(),
                batch: batch.len(),
            });
        }
        if batch.is_empty() {
            return Err(MlError::EmptyBatch);
        }
        if batch.feature_dim() != self.feature_dim() {
            return Err(MlError::FeatureDim {
                expected: self.feature_dim(),
                got: batch.feature_dim(),
            });
        }
        Ok(())
    }
}

/// Numerically stable binary cross-entropy on a logit.
#[inline]
pub(crate) fn bce_from_logit(logit: f64, label: bool) -> f64 {
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    if label {
        softplus - logit
    } else {
        softplus
    }
}

/// `(1/n) Σ wᵢ [BCE(fr̂ᵢ, finishedᵢ) + ½ (sd̂ᵢ − sdᵢ)²]`.
pub fn weighted_loss(model: &PredictorModel, batch: &Batch, weights: &[f64]) -> Result<f64, MlError> {
    model.check_batch(batch, weights)?;
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let input = batch.input(i);
        let outcome = batch.outcome(i);
        let logit = model.fr_logit(&input);
        let resid = augmented_dot(&model.sd_weights, &input) - outcome.stay_duration;
        total += w * (bce_from_logit(logit, outcome.finished) + 0.5 * resid * resid);
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`weighted_loss`].
pub fn weighted_loss_gradient(
    model: &PredictorModel,
    batch: &Batch,
    weights: &[f64],
) -> Result<PredictorGradient, MlError> {
    model.check_batch(batch, weights)?;
    let d = model.feature_dim();
    let mut fr = vec![0.0; d + 2];
    let mut sd = vec![0.0; d + 2];
    for (i, &w) in weights.iter().enumerate() {
        let input = batch.input(i);
        let outcome = batch.outcome(i);
        let pred = model.predict(&input);
        let label = if outcome.finished { 1.0 } else { 0.0 };
        let fr_err = w * (pred.fr - label);
        let sd_err = w * (pred.sd - outcome.stay_duration);
        for (k, x) in input.features.iter().enumerate() {
            fr[k] += fr_err * x;
            sd[k] += sd_err * x;
        }
        let ind = input.indicator();
        fr[d] += fr_err * ind;
        sd[d] += sd_err * ind;
        fr[d + 1] += fr_err;
        sd[d + 1] += sd_err;
    }
    let scale = 1.0 / batch.len() as f64;
    fr.iter_mut().chain(sd.iter_mut()).for_each(|g| *g *= scale);
    Ok(PredictorGradient { fr, sd })
}

/// One plain gradient step on the weighted loss.
pub fn weighted_sgd_step(
    model: &PredictorModel,
    batch: &Batch,
    weights: &[f64],
    lr: f64,
) -> Result<PredictorModel, MlError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(MlError::LearningRate(lr));
    }
    let grad = weighted_loss_gradient(model, batch, weights)?;
    let step = |w: &[f64], g: &[f64]| -> Vec<f64> { w.iter().zip(g).map(|(w, g)| w - lr * g).collect() };
    Ok(PredictorModel {
        fr_weights: step(&model.fr_weights, &grad.fr),
        sd_weights: step(&model.sd_weights, &grad.sd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Outcome;
    use crate::mlcore::testutil::random_batch;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const SIGMOID_MINUS_2_5: f64 = 0.07585818002124355;

    #[test]
    fn zero_model_predicts_half_and_zero() {
        let m = PredictorModel::zeros(10);
        let x = [0.3; 10];
        let p = m.predict(&ModelInput {
            features: &x,
            is_short: true,
        });
        assert_eq!(p.fr, 0.5);
        assert_eq!(p.sd, 0.0);
    }

    #[test]
    fn intercept_only_fr() {
        let mut m = PredictorModel::zeros(10);
        m.fr_weights[11] = -2.5;
        for (x, s) in [([0.0; 10], true), ([1.0; 10], false), ([0.7; 10], true)] {
            let p = m.predict(&ModelInput {
                features: &x,
                is_short: s,
            });
            assert_abs_diff_eq!(p.fr, SIGMOID_MINUS_2_5, epsilon = 1e-12);
        }
    }

    #[test]
    fn indicator_and_intercept_dot() {
        let mut m = PredictorModel::zeros(10);
        m.sd_weights[10] = 1.0;
        m.sd_weights[11] = 2.0;
        let x = [0.4; 10];
        assert_eq!(
            m.predict(&ModelInput {
                features: &x,
                is_short: true
            })
            .sd,
            3.0
        );
        assert_eq!(
            m.predict(&ModelInput {
                features: &x,
                is_short: false
            })
            .sd,
            2.0
        );
    }

    #[test]
    fn zero_weights_leave_model_unchanged() {
        let b = random_batch(3, 16, 10);
        let mut m = PredictorModel::zeros(10);
        m.fr_weights[2] = 0.3;
        m.sd_weights[5] = -1.2;
        let next = weighted_sgd_step(&m, &b, &[0.0; 16], 0.1).unwrap();
        assert_eq!(next, m);
    }

    #[test]
    fn hand_computed_intercept_step() {
        let mut b = Batch::new(10);
        let x = [0.0; 10];
        b.push(
            ModelInput {
                features: &x,
                is_short: false,
            },
            Outcome {
                finished: false,
                stay_duration: 1.0,
            },
            true,
        );
        let m = PredictorModel::zeros(10);
        let next = weighted_sgd_step(&m, &b, &[2.0], 0.1).unwrap();
        assert_abs_diff_eq!(next.sd_weights[11], 0.2, epsilon = 1e-15);
        assert!(next.sd_weights[..11].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let b = random_batch(1, 4, 10);
        let m = PredictorModel::zeros(10);
        assert_eq!(
            weighted_sgd_step(&m, &b, &[1.0; 3], 0.1),
            Err(MlError::LengthMismatch { weights: 3, batch: 4 })
        );
        assert_eq!(
            weighted_sgd_step(&m, &b, &[1.0; 4], 0.0),
            Err(MlError::LearningRate(0.0))
        );
    }

    #[test]
    fn bce_stable_for_large_logits() {
        assert!(bce_from_logit(800.0, true).abs() < 1e-300);
        assert_abs_diff_eq!(bce_from_logit(-800.0, true), 800.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bce_from_logit(0.0, false), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    /// Weighting by the assignment indicator equals the treated-only mean
    /// gradient scaled by n_treated / n.
    #[test]
    fn indicator_weights_match_arm_gradient() {
        for seed in 0..10 {
            let b = random_batch(seed, 32, 10);
            let mut m = PredictorModel::zeros(10);
            m.fr_weights
                .iter_mut()
                .enumerate()
                .for_each(|(k, w)| *w = 0.1 * k as f64 - 0.5);
            m.sd_weights
                .iter_mut()
                .enumerate()
                .for_each(|(k, w)| *w = 0.2 - 0.05 * k as f64);
            let z: Vec<f64> = b.assignments().iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
            let treated = b.arm(true);
            let ratio = treated.len() as f64 / b.len() as f64;
            let full = weighted_loss_gradient(&m, &b, &z).unwrap().flatten();
            let arm = weighted_loss_gradient(&m, &treated, &vec![1.0; treated.len()])
                .unwrap()
                .flatten();
            for (g, a) in full.iter().zip(&arm) {
                assert_abs_diff_eq!(*g, ratio * a, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn gradient_is_linear_in_weights(seed in 0u64..1000, scale in 0.0f64..20.0) {
            let b = random_batch(seed, 12, 4);
            let m = PredictorModel::from_flat(4, &[0.1, -0.2, 0.3, 0.0, 0.5, -1.0, 1.0, 0.4, -0.3, 0.2, 0.7, 1.5]);
            let w: Vec<f64> = (0..12).map(|i| ((seed as usize + i) % 5) as f64 * 0.5).collect();
            let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let g = weighted_loss_gradient(&m, &b, &w).unwrap().flatten();
            let gs = weighted_loss_gradient(&m, &b, &ws).unwrap().flatten();
            for (a, b) in g.iter().zip(&gs) {
                prop_assert!((scale * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn unit_weights_match_unweighted_mean(seed in 0u64..1000) {
            let b = random_batch(seed, 9, 3);
            let m = PredictorModel::from_flat(3, &[0.3, -0.1, 0.2, 0.4, -1.0, 0.5, 0.5, 1.0, -0.2, 2.0]);
            let step = weighted_sgd_step(&m, &b, &[1.0; 9], 0.1).unwrap();
            // Unweighted mean-loss gradient built independently.
            let mut g = [0.0; 10];
            for i in 0..b.len() {
                let x = b.input(i);
                let o = b.outcome(i);
                let aug = [x.features[0], x.features[1], x.features[2], x.indicator(), 1.0];
                let fr = sigmoid((0..5).map(|k| m.fr_weights[k] * aug[k]).sum::<f64>());
                let sd: f64 = (0..5).map(|k| m.sd_weights[k] * aug[k]).sum();
                let y = if o.finished { 1.0 } else { 0.0 };
                for k in 0..5 {
                    g[k] += (fr - y) * aug[k] / 9.0;
                    g[5 + k] += (sd - o.stay_duration) * aug[k] / 9.0;
                }
            }
            let before = m.flatten();
            for (k, after) in step.flatten().iter().enumerate() {
                prop_assert!((after - (before[k] - 0.1 * g[k])).abs() < 1e-12);
            }
        }
    }
}
