//! Differentiable models trained inside the feedback loop.
//!
//! * [`PredictorModel`]: the two-head ranker model (logistic finishing-rate
//!   head, linear stay-duration head) trained by weighted SGD.
//! * [`WeightNet`]: the propensity network estimating `E[Z | X]`, trained
//!   with Adam on binary cross-entropy.
//! * [`gradcheck`]: finite-difference verification of both analytic
//!   gradients.
//!
//! Every training step is a pure function of its inputs; models are plain
//! values that can be cloned and sent between threads.

pub mod gradcheck;
mod predictor;
mod weightnet;

use thiserror::Error;

use crate::env::{Candidate, Outcome};

pub use predictor::{
    weighted_loss, weighted_loss_gradient, weighted_sgd_step, Prediction, PredictorGradient, PredictorModel,
};
pub use weightnet::{Adam, AdamConfig, CachedPass, WeightNet, HIDDEN_WIDTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("weights have length {weights} but batch has {batch} rows")]
    LengthMismatch { weights: usize, batch: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("model expects {expected} features, input has {got}")]
    FeatureDim { expected: usize, got: usize },
}

/// Model-facing view of one item: raw features plus the short/long indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInput<'a> {
    pub features: &'a [f64],
    pub is_short: bool,
}

impl ModelInput<'_> {
    /// 1 for short videos, 0 for long.
    #[inline]
    pub fn indicator(&self) -> f64 {
        if self.is_short {
            1.0
        } else {
            0.0
        }
    }
}

impl<'a> From<Candidate<'a>> for ModelInput<'a> {
    fn from(c: Candidate<'a>) -> Self {
        ModelInput {
            features: c.features,
            is_short: c.is_short,
        }
    }
}

/// One period's logged training data, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    feature_dim: usize,
    features: Vec<f64>,
    is_short: Vec<bool>,
    outcomes: Vec<Outcome>,
    assignments: Vec<bool>,
}

impl Batch {
    pub fn new(feature_dim: usize) -> Self {
        Self::with_capacity(feature_dim, 0)
    }

    pub fn with_capacity(feature_dim: usize, rows: usize) -> Self {
        Self {
            feature_dim,
            features: Vec::with_capacity(rows * feature_dim),
            is_short: Vec::with_capacity(rows),
            outcomes: Vec::with_capacity(rows),
            assignments: Vec::with_capacity(rows),
        }
    }

    pub fn push(&mut self, input: ModelInput<'_>, outcome: Outcome, treated: bool) {
        assert_eq!(input.features.len(), self.feature_dim, "feature dimension mismatch");
        self.features.extend_from_slice(input.features);
        self.is_short.push(input.is_short);
        self.outcomes.push(outcome);
        self.assignments.push(treated);
    }

    pub fn clear(&mut self) {
        self.features.clear();
        self.is_short.clear();
        self.outcomes.clear();
        self.assignments.clear();
    }

    pub fn len(&self) -> usize {
        self.is_short.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_short.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input(&self, i: usize) -> ModelInput<'_> {
        let start = i * self.feature_dim;
        ModelInput {
            features: &self.features[start..start + self.feature_dim],
            is_short: self.is_short[i],
        }
    }

    pub fn outcome(&self, i: usize) -> Outcome {
        self.outcomes[i]
    }

    pub fn assignment(&self, i: usize) -> bool {
        self.assignments[i]
    }

    pub fn assignments(&self) -> &[bool] {
        &self.assignments
    }

    pub fn outcomes_mut(&mut self) -> &mut [Outcome] {
        &mut self.outcomes
    }

    /// Rows whose assignment equals `treated`, in original order.
    pub fn arm(&self, treated: bool) -> Batch {
        let mut out = Batch::new(self.feature_dim);
        for i in (0..self.len()).filter(|&i| self.assignments[i] == treated) {
            out.push(self.input(i), self.outcomes[i], treated);
        }
        out
    }
}
