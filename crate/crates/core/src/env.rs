//! The simulated world: candidate videos, true response models, and realized
//! user outcomes.
//!
//! Short and long videos share the feature distribution (i.i.d. uniform on
//! `[0, 1]`) but differ in their true coefficients: short videos finish more
//! often, long videos hold users longer. Outcomes depend only on the chosen
//! candidate, never on treatment assignment or on model state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{uniform, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("beta vector `{name}` has length {len}, expected feature_dim = {expected}")]
    BetaLength {
        name: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("feature_dim must be at least 1")]
    EmptyFeatures,
    #[error("n_candidates must be even and at least 2, got {0}")]
    CandidateCount(usize),
    #[error("non-finite parameter in `{0}`")]
    NonFinite(&'static str),
    #[error("stay-duration mean must be positive, got {0}")]
    NonPositiveMean(f64),
}

/// Ground-truth parameters of the finishing-rate and stay-duration models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub feature_dim: usize,
    pub n_candidates: usize,
    pub beta_fr_short: Vec<f64>,
    pub beta_fr_long: Vec<f64>,
    pub beta_sd_short: Vec<f64>,
    pub beta_sd_long: Vec<f64>,
    /// Subtracted from the linear score inside the finishing-rate sigmoid.
    pub fr_offset: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self::with_dims(10, 100).expect("default dimensions are valid")
    }
}

impl EnvParams {
    /// Reference parameters for `feature_dim` features and `n_candidates`
    /// videos per user.
    ///
    /// With `feature_dim = d`, the finishing-rate ramp is `[0, 1/d, …, (d-1)/d]`
    /// (scaled by 0.9 for short, 0.6 for long) and the stay-duration ramp is
    /// `[1, (d-1)/d, …, 1/d]` (scaled by 1.0 for short, 1.5 for long). At
    /// `d = 10` these are the reference vectors `0.9·[0, 0.1, …, 0.9]` etc.
    pub fn with_dims(feature_dim: usize, n_candidates: usize) -> Result<Self, EnvError> {
        let d = feature_dim as f64;
        let up: Vec<f64> = (0..feature_dim).map(|i| i as f64 / d).collect();
        let down: Vec<f64> = (0..feature_dim).map(|i| (feature_dim - i) as f64 / d).collect();
        let params = Self {
            feature_dim,
            n_candidates,
            beta_fr_short: up.iter().map(|b| 0.9 * b).collect(),
            beta_fr_long: up.iter().map(|b| 0.6 * b).collect(),
            beta_sd_short: down.clone(),
            beta_sd_long: down.iter().map(|b| 1.5 * b).collect(),
            fr_offset: 2.5,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.feature_dim == 0 {
            return Err(EnvError::EmptyFeatures);
        }
        if self.n_candidates < 2 || !self.n_candidates.is_multiple_of(2) {
            return Err(EnvError::CandidateCount(self.n_candidates));
        }
        for (name, beta) in [
            ("beta_fr_short", &self.beta_fr_short),
            ("beta_fr_long", &self.beta_fr_long),
            ("beta_sd_short", &self.beta_sd_short),
            ("beta_sd_long", &self.beta_sd_long),
        ] {
            if beta.len() != self.feature_dim {
                return Err(EnvError::BetaLength {
                    name,
                    len: beta.len(),
                    expected: self.feature_dim,
                });
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(EnvError::NonFinite(name));
            }
        }
        if !self.fr_offset.is_finite() {
            return Err(EnvError::NonFinite("fr_offset"));
        }
        Ok(())
    }

    fn fr_beta(&self, is_short: bool) -> &[f64] {
        if is_short {
            &self.beta_fr_short
        } else {
            &self.beta_fr_long
        }
    }

    fn sd_beta(&self, is_short: bool) -> &[f64] {
        if is_short {
            &self.beta_sd_short
        } else {
            &self.beta_sd_long
        }
    }
}

/// One candidate video as seen by the ranker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub features: &'a [f64],
    pub is_short: bool,
}

/// The candidate pool offered to one user.
///
/// Features are stored row-major; the first half of the rows are short
/// videos and the second half long.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    feature_dim: usize,
    n_short: usize,
    features: Vec<f64>,
}

impl CandidateSet {
    pub fn new(params: &EnvParams) -> Self {
        Self {
            feature_dim: params.feature_dim,
            n_short: params.n_candidates / 2,
            features: vec![0.0; params.feature_dim * params.n_candidates],
        }
    }

    /// Redraw every feature in place from `rng`.
    pub fn resample(&mut self, rng: &mut Stream) {
        for x in &mut self.features {
            *x = uniform(rng);
        }
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, index: usize) -> Candidate<'_> {
        let start = index * self.feature_dim;
        Candidate {
            features: &self.features[start..start + self.feature_dim],
            is_short: index < self.n_short,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Candidate<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// Draw a fresh candidate pool for one user.
pub fn sample_candidates(rng: &mut Stream, params: &EnvParams) -> CandidateSet {
    let mut set = CandidateSet::new(params);
    set.resample(rng);
    set
}

/// What the user did with the recommended video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub finished: bool,
    pub stay_duration: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True finishing probability of `candidate`.
pub fn true_fr(candidate: Candidate<'_>, params: &EnvParams) -> f64 {
    sigmoid(dot(params.fr_beta(candidate.is_short), candidate.features) - params.fr_offset)
}

/// True mean stay duration of `candidate`.
pub fn true_sd_mean(candidate: Candidate<'_>, params: &EnvParams) -> f64 {
    dot(params.sd_beta(candidate.is_short), candidate.features)
}

/// Realize the user's response to `candidate`.
///
/// Consumes exactly two uniforms from `rng`: the finish draw (`U < FR`), then
/// the stay duration by inverse CDF, `-mean · ln(1 - U)`.
pub fn realize_outcome(rng: &mut Stream, candidate: Candidate<'_>, params: &EnvParams) -> Result<Outcome, EnvError> {
    let mean = true_sd_mean(candidate, params);
    if mean.is_nan() || mean <= 0.0 {
        return Err(EnvError::NonPositiveMean(mean));
    }
    let finished = uniform(rng) < true_fr(candidate, params);
    let stay_duration = -mean * (1.0 - uniform(rng)).ln();
    Ok(Outcome {
        finished,
        stay_duration,
    })
}
