use serde::{Deserialize, Serialize};

use crate::stats::Metric;

/// One logged user visit during the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// Experiment period, 1-based.
    pub period: u32,
    /// Position of the user within its period's batch.
    pub user_index: u32,
    pub treated: bool,
    /// Length class of the recommended video.
    pub is_short: bool,
    pub finished: bool,
    pub stay_duration: f64,
    /// Serving model's predictions for the recommended video.
    pub fr_hat: f64,
    pub sd_hat: f64,
    /// Weighting-network output for this row, when weights were used.
    pub g_out: Option<f64>,
    pub weight_treatment: Option<f64>,
    pub weight_control: Option<f64>,
}

impl Interaction {
    /// Per-user value of `metric`.
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::ShortProportion => f64::from(u8::from(self.is_short)),
            Metric::StayDuration => self.stay_duration,
            Metric::FinishingRate => f64::from(u8::from(self.finished)),
        }
    }

    /// Realized fusion value `alpha · finished + stay_duration`.
    pub fn fusion_value(&self, alpha: f64) -> f64 {
        alpha * f64::from(u8::from(self.finished)) + self.stay_duration
    }
}
