use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::predictor::bce_from_logit;
use super::{Batch, MlError, ModelInput};
use crate::env::sigmoid;
use crate::rng::Stream;

/// Width of both hidden layers.
pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
        }
    }

    /// Apply one bias-corrected Adam update to `params`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.first_moment.len());
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

/// Propensity network: `[features, indicator] → H → H → 1`, ReLU hidden
/// layers and a sigmoid output.
///
/// Parameters live in one flat vector laid out as
/// `w1 (H×in, row per unit) | b1 | w2 (H×H) | b2 | w3 (H) | b3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightNet {
    in_dim: usize,
    hidden: usize,
    params: Vec<f64>,
    pub adam: Adam,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

fn layout(in_dim: usize, hidden: usize) -> Layout {
    let w1 = 0;
    let b1 = w1 + hidden * in_dim;
    let w2 = b1 + hidden;
    let b2 = w2 + hidden * hidden;
    let w3 = b2 + hidden;
    let b3 = w3 + hidden;
    Layout {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        total: b3 + 1,
    }
}

/// Per-sample activations kept for backpropagation.
struct Trace {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// See [`WeightNet::cache_pass`].
pub struct CachedPass {
    rows: Vec<CachedRow>,
}

struct CachedRow {
    target: bool,
    logit: f64,
    z1: Vec<f64>,
    z2: Vec<f64>,
    trace: Trace,
}

impl WeightNet {
    /// Zero-parameter network on `feature_dim` raw features (plus indicator).
    pub fn zeros(feature_dim: usize) -> Self {
        Self::zeros_with_hidden(feature_dim, HIDDEN_WIDTH)
    }

    pub fn zeros_with_hidden(feature_dim: usize, hidden: usize) -> Self {
        let in_dim = feature_dim + 1;
        let n = layout(in_dim, hidden).total;
        Self {
            in_dim,
            hidden,
            params: vec![0.0; n],
            adam: Adam::new(n, AdamConfig::default()),
        }
    }

    /// Fan-in scaled uniform initialization, `U(±√(6/fan_in))` for weights,
    /// zero biases.
    pub fn init(feature_dim: usize, rng: &mut Stream) -> Self {
        Self::init_with_hidden(feature_dim, HIDDEN_WIDTH, rng)
    }

    pub fn init_with_hidden(feature_dim: usize, hidden: usize, rng: &mut Stream) -> Self {
        let mut net = Self::zeros_with_hidden(feature_dim, hidden);
        let l = layout(net.in_dim, hidden);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [f64]| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        fill(l.w1..l.b1, net.in_dim, &mut net.params);
        fill(l.w2..l.b2, hidden, &mut net.params);
        fill(l.w3..l.b3, hidden, &mut net.params);
        net
    }

    pub fn feature_dim(&self) -> usize {
        self.in_dim - 1
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_bias_mut(&mut self) -> &mut f64 {
        let b3 = layout(self.in_dim, self.hidden).b3;
        &mut self.params[b3]
    }

    /// Mutable view of the final-layer weights.
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let l = layout(self.in_dim, self.hidden);
        &mut self.params[l.w3..l.b3]
    }

    /// Hidden-layer biases of the first layer.
    pub fn first_bias_mut(&mut self) -> &mut [f64] {
        let l = layout(self.in_dim, self.hidden);
        &mut self.params[l.b1..l.w2]
    }

    /// Parameters keyed by layer name, for state dumps.
    pub fn to_named_arrays(&self) -> BTreeMap<String, Vec<f64>> {
        let l = layout(self.in_dim, self.hidden);
        let p = &self.params;
        [
            ("w1", &p[l.w1..l.b1]),
            ("b1", &p[l.b1..l.w2]),
            ("w2", &p[l.w2..l.b2]),
            ("b2", &p[l.b2..l.w3]),
            ("w3", &p[l.w3..l.b3]),
            ("b3", &p[l.b3..]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_vec()))
        .collect()
    }

    fn trace(&self, input: &ModelInput<'_>) -> (f64, Trace) {
        let l = layout(self.in_dim, self.hidden);
        let p = &self.params;
        let mut x = Vec::with_capacity(self.in_dim);
        x.extend_from_slice(input.features);
        x.push(input.indicator());
        let h1: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[l.w1 + j * self.in_dim..l.w1 + (j + 1) * self.in_dim];
                let pre: f64 = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + p[l.b1 + j];
                pre.max(0.0)
            })
            .collect();
        let h2: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[l.w2 + j * self.hidden..l.w2 + (j + 1) * self.hidden];
                let pre: f64 = row.iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>() + p[l.b2 + j];
                pre.max(0.0)
            })
            .collect();
        let logit = p[l.w3..l.b3].iter().zip(&h2).map(|(w, v)| w * v).sum::<f64>() + p[l.b3];
        (logit, Trace { input: x, h1, h2 })
    }

    pub fn logit(&self, input: &ModelInput<'_>) -> f64 {
        self.trace(input).0
    }

    /// Estimated probability that `input` was logged under treatment.
    pub fn forward(&self, input: &ModelInput<'_>) -> f64 {
        sigmoid(self.logit(input))
    }

    /// Mean binary cross-entropy against the batch assignments (nats).
    pub fn bce_loss(&self, batch: &Batch) -> Result<f64, MlError> {
        self.check(batch)?;
        let total: f64 = (0..batch.len())
            .map(|i| bce_from_logit(self.logit(&batch.input(i)), batch.assignment(i)))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// ReLU on/off pattern of every hidden unit over the batch.
    pub fn activation_pattern(&self, batch: &Batch) -> Vec<bool> {
        let mut out = Vec::with_capacity(2 * self.hidden * batch.len());
        for i in 0..batch.len() {
            let (_, t) = self.trace(&batch.input(i));
            out.extend(t.h1.iter().chain(&t.h2).map(|&h| h > 0.0));
        }
        out
    }

    /// Mean BCE together with the ReLU pattern, from a single forward pass.
    pub fn loss_and_pattern(&self, batch: &Batch) -> Result<(f64, Vec<bool>), MlError> {
        self.check(batch)?;
        let mut total = 0.0;
        let mut pattern = Vec::with_capacity(2 * self.hidden * batch.len());
        for i in 0..batch.len() {
            let (logit, t) = self.trace(&batch.input(i));
            total += bce_from_logit(logit, batch.assignment(i));
            pattern.extend(t.h1.iter().chain(&t.h2).map(|&h| h > 0.0));
        }
        Ok((total / batch.len() as f64, pattern))
    }

    /// Forward activations of every row, kept so that single-parameter
    /// perturbations can be re-evaluated from the affected layer onwards.
    pub fn cache_pass(&self, batch: &Batch) -> Result<CachedPass, MlError> {
        self.check(batch)?;
        let l = layout(self.in_dim, self.hidden);
        let p = &self.params;
        let rows = (0..batch.len())
            .map(|i| {
                let (logit, t) = self.trace(&batch.input(i));
                let pre = |w: usize, b: usize, input: &[f64], j: usize| {
                    let row = &p[w + j * input.len()..w + (j + 1) * input.len()];
                    row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + p[b + j]
                };
                let z1 = (0..self.hidden).map(|j| pre(l.w1, l.b1, &t.input, j)).collect();
                let z2 = (0..self.hidden).map(|j| pre(l.w2, l.b2, &t.h1, j)).collect();
                CachedRow {
                    target: batch.assignment(i),
                    logit,
                    z1,
                    z2,
                    trace: t,
                }
            })
            .collect();
        Ok(CachedPass { rows })
    }

    /// Mean BCE with flat parameter `k` set to `value`, everything else as in
    /// `cache`. Returns `None` when the change flips any ReLU.
    pub fn loss_with_param(&self, cache: &CachedPass, k: usize, value: f64) -> Option<f64> {
        let l = layout(self.in_dim, self.hidden);
        let p = &self.params;
        let h = self.hidden;
        let delta = value - p[k];
        let mut total = 0.0;
        for row in &cache.rows {
            let t = &row.trace;
            let logit = if k >= l.b3 {
                row.logit + delta
            } else if k >= l.w3 {
                row.logit + delta * t.h2[k - l.w3]
            } else if k >= l.w2 {
                let (j, dz) = if k >= l.b2 {
                    (k - l.b2, delta)
                } else {
                    ((k - l.w2) / h, delta * t.h1[(k - l.w2) % h])
                };
                let z = row.z2[j] + dz;
                if (z > 0.0) != (row.z2[j] > 0.0) {
                    return None;
                }
                row.logit + p[l.w3 + j] * (z.max(0.0) - t.h2[j])
            } else {
                let (j, dz) = if k >= l.b1 {
                    (k - l.b1, delta)
                } else {
                    ((k - l.w1) / self.in_dim, delta * t.input[(k - l.w1) % self.in_dim])
                };
                let z = row.z1[j] + dz;
                if (z > 0.0) != (row.z1[j] > 0.0) {
                    return None;
                }
                let dh = z.max(0.0) - t.h1[j];
                let mut logit = p[l.b3];
                for j2 in 0..h {
                    let z2 = row.z2[j2] + p[l.w2 + j2 * h + j] * dh;
                    if (z2 > 0.0) != (row.z2[j2] > 0.0) {
                        return None;
                    }
                    logit += p[l.w3 + j2] * z2.max(0.0);
                }
                logit
            };
            total += bce_from_logit(logit, row.target);
        }
        Some(total / cache.rows.len() as f64)
    }

    /// Analytic gradient of [`WeightNet::bce_loss`] with respect to the flat
    /// parameter vector.
    pub fn bce_gradient(&self, batch: &Batch) -> Result<Vec<f64>, MlError> {
        self.check(batch)?;
        let l = layout(self.in_dim, self.hidden);
        let p = &self.params;
        let h = self.hidden;
        let mut grad = vec![0.0; l.total];
        let scale = 1.0 / batch.len() as f64;
        let mut d2 = vec![0.0; h];
        for i in 0..batch.len() {
            let (logit, t) = self.trace(&batch.input(i));
            let z = if batch.assignment(i) { 1.0 } else { 0.0 };
            let d_out = (sigmoid(logit) - z) * scale;
            grad[l.b3] += d_out;
            for j in 0..h {
                grad[l.w3 + j] += d_out * t.h2[j];
                d2[j] = if t.h2[j] > 0.0 { d_out * p[l.w3 + j] } else { 0.0 };
            }
            for j in 0..h {
                if d2[j] == 0.0 {
                    continue;
                }
                grad[l.b2 + j] += d2[j];
                let row = l.w2 + j * h;
                for k in 0..h {
                    grad[row + k] += d2[j] * t.h1[k];
                }
            }
            for k in 0..h {
                if t.h1[k] <= 0.0 {
                    continue;
                }
                let d1: f64 = (0..h).map(|j| d2[j] * p[l.w2 + j * h + k]).sum();
                grad[l.b1 + k] += d1;
                let row = l.w1 + k * self.in_dim;
                for (m, x) in t.input.iter().enumerate() {
                    grad[row + m] += d1 * x;
                }
            }
        }
        Ok(grad)
    }

    /// One Adam step on the mean BCE of the batch; consumes and returns the
    /// network with its moment state advanced by one.
    pub fn adam_step(mut self, batch: &Batch, lr: f64) -> Result<WeightNet, MlError> {
        self.adam_update(batch, lr)?;
        Ok(self)
    }

    /// In-place form of [`WeightNet::adam_step`]; on error nothing changes.
    pub fn adam_update(&mut self, batch: &Batch, lr: f64) -> Result<(), MlError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(MlError::LearningRate(lr));
        }
        let grad = self.bce_gradient(batch)?;
        self.adam.apply(&mut self.params, &grad, lr);
        Ok(())
    }

    fn check(&self, batch: &Batch) -> Result<(), MlError> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlcore::testutil::random_batch;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cached_perturbation_matches_full_forward() {
        let batch = random_batch(4, 12, 6);
        let net = WeightNet::init_with_hidden(6, 8, &mut stream(4, "init"));
        let cache = net.cache_pass(&batch).unwrap();
        let (_, pattern) = net.loss_and_pattern(&batch).unwrap();
        let mut probe = net.clone();
        let mut compared = 0;
        for k in 0..net.params().len() {
            for offset in [-0.3, 1e-4, 0.05] {
                let value = net.params()[k] + offset;
                probe.params_mut()[k] = value;
                let (full, p) = probe.loss_and_pattern(&batch).unwrap();
                match net.loss_with_param(&cache, k, value) {
                    Some(fast) => {
                        assert_eq!(p, pattern, "param {k}");
                        assert!((fast - full).abs() <= 1e-13, "param {k}: {fast} vs {full}");
                        compared += 1;
                    }
                    None => assert_ne!(p, pattern, "param {k}"),
                }
                probe.params_mut()[k] = net.params()[k];
            }
        }
        assert!(compared > net.params().len());
    }

    #[test]
    fn zero_net_outputs_half() {
        let net = WeightNet::zeros(10);
        let x = [0.9; 10];
        assert_eq!(
            net.forward(&ModelInput {
                features: &x,
                is_short: true
            }),
            0.5
        );
        assert_eq!(net.params().len(), 11 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    }

    #[test]
    fn output_bias_ten() {
        let mut net = WeightNet::zeros(10);
        *net.output_bias_mut() = 10.0;
        let x = [0.2; 10];
        assert_abs_diff_eq!(
            net.forward(&ModelInput {
                features: &x,
                is_short: false
            }),
            0.9999546021312976,
            epsilon = 1e-12
        );
    }

    #[test]
    fn raising_final_weight_raises_output() {
        let mut net = WeightNet::init(10, &mut stream(4, "init"));
        let x = [0.5; 10];
        let input = ModelInput {
            features: &x,
            is_short: true,
        };
        // Force the second hidden layer to be active through its biases.
        let l = layout(11, 64);
        for j in 0..64 {
            net.params_mut()[l.b2 + j] = 1.0;
        }
        let before = net.forward(&input);
        net.output_weights_mut()[0] += 0.5;
        assert!(net.forward(&input) > before);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = WeightNet::init(10, &mut stream(8, "model-init"));
        let b = WeightNet::init(10, &mut stream(8, "model-init"));
        assert_eq!(a, b);
        let named = a.to_named_arrays();
        let bound = (6.0f64 / 11.0).sqrt();
        assert!(named["w1"].iter().all(|w| w.abs() <= bound));
        assert!(named["b1"].iter().all(|&b| b == 0.0));
        assert_eq!(named["b3"].len(), 1);
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let mut params = [1.0, 1.0, 1.0];
        let grad = [0.37, -2.0, 1e-3];
        adam.apply(&mut params, &grad, 0.001);
        for (p, g) in params.iter().zip(grad) {
            let expected = 1.0 - 0.001 * g / (g.abs() + 1e-8);
            assert_abs_diff_eq!(*p, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(*p, 1.0 - 0.001 * g.signum(), epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_exactly() {
        let mut adam = Adam::new(2, AdamConfig::default());
        let mut params = [0.3, -0.7];
        adam.apply(&mut params, &[0.0, 0.0], 0.001);
        assert_eq!(params, [0.3, -0.7]);
    }

    #[test]
    fn adam_step_deterministic_and_counts() {
        let batch = random_batch(2, 16, 10);
        let net = WeightNet::init(10, &mut stream(1, "init"));
        let a = net.clone().adam_step(&batch, 0.001).unwrap();
        let b = net.adam_step(&batch, 0.001).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.adam.step, 1);
    }

    #[test]
    fn adam_training_reduces_loss() {
        let mut batch = random_batch(5, 64, 3);
        // Make assignment a deterministic function of the first feature.
        let rows: Vec<_> = (0..batch.len())
            .map(|i| {
                (
                    batch.input(i).features.to_vec(),
                    batch.input(i).is_short,
                    batch.outcome(i),
                )
            })
            .collect();
        batch.clear();
        for (x, s, o) in rows {
            let z = x[0] > 0.5;
            batch.push(
                ModelInput {
                    features: &x,
                    is_short: s,
                },
                o,
                z,
            );
        }
        let mut net = WeightNet::init(3, &mut stream(6, "init"));
        let start = net.bce_loss(&batch).unwrap();
        for _ in 0..300 {
            net = net.adam_step(&batch, 0.01).unwrap();
        }
        assert!(net.bce_loss(&batch).unwrap() < 0.5 * start);
    }
}
