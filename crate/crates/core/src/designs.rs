//! The recommendation feedback loop under each experiment design.
//!
//! Every period a batch of users arrives. Each user is assigned to an arm,
//! offered a fresh candidate pool, and shown the candidate with the highest
//! `α·FR̂ + SD̂` under the arm's serving model. After the batch, models are
//! retrained on the logged data according to the design:
//!
//! * `weighted`: separate treatment and control models, each trained on the
//!   whole batch with propensity weights `G(x)/p` and `(1 − G(x))/(1 − p)`;
//!   the propensity network `G` is then updated on `(x, z)`. During warm-up
//!   the two models are trained as in `splitting` and `G` is left alone.
//! * `splitting`: each model trains only on its own arm's rows.
//! * `pooling`: one shared model trains on the whole batch.
//! * `snapshot`: one shared model that is never retrained.
//!
//! Before the experiment, a production model is built by running the loop
//! with every user in control for `production_burnin_periods` periods.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{realize_outcome, CandidateSet, EnvError, EnvParams};
use crate::interaction::Interaction;
use crate::mlcore::{weighted_sgd_step, Batch, MlError, ModelInput, PredictorModel, WeightNet};
use crate::rng::{uniform, Stream, Streams};
use crate::stats::{MetricVector, ReplicationResult, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid config: {key}: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown method `{0}` (expected weighted, splitting, pooling or snapshot)")]
    UnknownMethod(String),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> DesignError {
    DesignError::InvalidConfig {
        key,
        reason: reason.into(),
    }
}

/// Experiment design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Weighted,
    Splitting,
    Pooling,
    Snapshot,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Weighted, Method::Splitting, Method::Pooling, Method::Snapshot];

    pub fn name(self) -> &'static str {
        match self {
            Method::Weighted => "weighted",
            Method::Splitting => "splitting",
            Method::Pooling => "pooling",
            Method::Snapshot => "snapshot",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Weighted => "Weighted",
            Method::Splitting => "Data splitting",
            Method::Pooling => "Data pooling",
            Method::Snapshot => "Snapshot",
        }
    }

    fn has_two_models(self) -> bool {
        matches!(self, Method::Weighted | Method::Splitting)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DesignError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treatment,
    Control,
}

/// Everything that defines one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alpha_treatment: f64,
    pub alpha_control: f64,
    /// Probability of assigning a user to treatment.
    pub p: f64,
    pub periods: usize,
    /// Users per period.
    pub batch: usize,
    pub warmup_periods: usize,
    pub production_burnin_periods: usize,
    pub learning_rate_sgd: f64,
    pub learning_rate_adam: f64,
    pub method: Method,
    pub env: EnvParams,
    /// Replication seed; all substreams are derived from it.
    pub seed: u64,
    /// Clip propensity outputs to `[ε, 1 − ε]` before weighting.
    pub clip_epsilon: Option<f64>,
    /// Replace the propensity network output by this constant. Testing hook;
    /// the network is not trained when set.
    #[serde(default)]
    pub forced_propensity: Option<f64>,
}

impl ExperimentConfig {
    /// Reference setup: T = 10000, B = 128, N = 100, d = 10, SGD lr 0.1,
    /// Adam lr 0.001, 200 warm-up and 200 burn-in periods.
    pub fn reference(alpha_treatment: f64, alpha_control: f64, p: f64, method: Method) -> Self {
        Self {
            alpha_treatment,
            alpha_control,
            p,
            periods: 10_000,
            batch: 128,
            warmup_periods: 200,
            production_burnin_periods: 200,
            learning_rate_sgd: 0.1,
            learning_rate_adam: 0.001,
            method,
            env: EnvParams::default(),
            seed: 0,
            clip_epsilon: None,
            forced_propensity: None,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        self.env.validate()?;
        if !self.alpha_treatment.is_finite() {
            return Err(invalid("alpha_treatment", "must be finite"));
        }
        if !self.alpha_control.is_finite() {
            return Err(invalid("alpha_control", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("p", format!("{} is outside [0, 1]", self.p)));
        }
        if self.method == Method::Weighted && (self.p == 0.0 || self.p == 1.0) {
            return Err(invalid("p", "weighted training needs 0 < p < 1"));
        }
        if self.periods == 0 {
            return Err(invalid("periods", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(invalid("batch", "must be at least 1"));
        }
        if self.warmup_periods >= self.periods {
            return Err(invalid("warmup_periods", "must be smaller than periods"));
        }
        if !(self.learning_rate_sgd > 0.0 && self.learning_rate_sgd.is_finite()) {
            return Err(invalid("lr_sgd", "must be positive"));
        }
        if !(self.learning_rate_adam > 0.0 && self.learning_rate_adam.is_finite()) {
            return Err(invalid("lr_adam", "must be positive"));
        }
        if let Some(eps) = self.clip_epsilon {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(invalid("clip_epsilon", "must lie in (0, 0.5)"));
            }
        }
        if let Some(g) = self.forced_propensity {
            if !(0.0..=1.0).contains(&g) {
                return Err(invalid("forced_propensity", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn alpha(&self, treated: bool) -> f64 {
        if treated {
            self.alpha_treatment
        } else {
            self.alpha_control
        }
    }
}

/// Index of the candidate maximizing `alpha · fr̂ + sd̂`; ties go to the
/// lowest index.
pub fn rank_and_choose(model: &PredictorModel, alpha: f64, candidates: &CandidateSet) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let pred = model.predict(&ModelInput::from(c));
        let score = alpha * pred.fr + pred.sd;
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Treatment with probability `p`, drawn as `U < p`.
pub fn assign(rng: &mut Stream, p: f64) -> bool {
    uniform(rng) < p
}

/// Treatment and control training weights from a propensity output.
///
/// `p · w_t + (1 − p) · w_c = 1` for every `g`.
pub fn compute_weights(g_out: f64, p: f64) -> Result<(f64, f64), DesignError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", "weights are undefined unless 0 < p < 1"));
    }
    Ok((g_out / p, (1.0 - g_out) / (1.0 - p)))
}

/// Serving and training models of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Models {
    /// One model serves both arms (pooling, snapshot, global regimes).
    Shared(PredictorModel),
    /// One model per arm (weighted, splitting).
    Separate {
        treatment: PredictorModel,
        control: PredictorModel,
    },
}

impl Models {
    pub fn serving(&self, treated: bool) -> &PredictorModel {
        match self {
            Models::Shared(m) => m,
            Models::Separate { treatment, control } => {
                if treated {
                    treatment
                } else {
                    control
                }
            }
        }
    }
}

/// Mutable state of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub models: Models,
    pub weight_net: WeightNet,
    /// Number of completed experiment periods.
    pub period: usize,
    pub log: Vec<Interaction>,
}

impl LoopState {
    /// Initial state for `config.method`, with every model set to `production`.
    pub fn new(config: &ExperimentConfig, production: PredictorModel, streams: &mut Streams) -> Self {
        let models = if config.method.has_two_models() {
            Models::Separate {
                treatment: production.clone(),
                control: production,
            }
        } else {
            Models::Shared(production)
        };
        Self {
            models,
            weight_net: WeightNet::init(config.env.feature_dim, &mut streams.model_init),
            period: 0,
            log: Vec::with_capacity(config.periods * config.batch),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Experiment(Method),
    /// Every user in one arm, shared model trained on all data.
    Global(Arm),
}

fn step_shared(model: &PredictorModel, batch: &Batch, lr: f64) -> Result<PredictorModel, MlError> {
    weighted_sgd_step(model, batch, &vec![1.0; batch.len()], lr)
}

/// Train on the rows of one arm only; an empty arm leaves the model as is.
fn step_arm(model: &PredictorModel, batch: &Batch, treated: bool, lr: f64) -> Result<PredictorModel, MlError> {
    let own = batch.arm(treated);
    if own.is_empty() {
        Ok(model.clone())
    } else {
        step_shared(model, &own, lr)
    }
}

/// `(g, w_T, w_C)` of one logged user.
type Propensity = (f64, f64, f64);

/// One period's training: returns the updated models and, for weighted
/// periods past warm-up, the per-row `(G(x), W_T, W_C)`.
fn update_models(
    models: Models,
    weight_net: &mut WeightNet,
    batch: &Batch,
    config: &ExperimentConfig,
    regime: Regime,
    period: usize,
) -> Result<(Models, Vec<Propensity>), DesignError> {
    let lr = config.learning_rate_sgd;
    let in_warmup = period <= config.warmup_periods;
    let mut propensities = Vec::new();
    let models = match (regime, models) {
        (Regime::Experiment(Method::Snapshot), models) => models,
        (Regime::Global(_) | Regime::Experiment(Method::Pooling), Models::Shared(m)) => {
            Models::Shared(step_shared(&m, batch, lr)?)
        }
        (Regime::Experiment(Method::Splitting), Models::Separate { treatment, control })
        | (Regime::Experiment(Method::Weighted), Models::Separate { treatment, control })
            if regime == Regime::Experiment(Method::Splitting) || in_warmup =>
        {
            Models::Separate {
                treatment: step_arm(&treatment, batch, true, lr)?,
                control: step_arm(&control, batch, false, lr)?,
            }
        }
        (Regime::Experiment(Method::Weighted), Models::Separate { treatment, control }) => {
            let mut w_t = Vec::with_capacity(batch.len());
            let mut w_c = Vec::with_capacity(batch.len());
            for i in 0..batch.len() {
                let raw = match config.forced_propensity {
                    Some(g) => g,
                    None => weight_net.forward(&batch.input(i)),
                };
                let g = match config.clip_epsilon {
                    Some(eps) => raw.clamp(eps, 1.0 - eps),
                    None => raw,
                };
                let (wt, wc) = compute_weights(g, config.p)?;
                w_t.push(wt);
                w_c.push(wc);
                propensities.push((g, wt, wc));
            }
            let treatment = weighted_sgd_step(&treatment, batch, &w_t, lr)?;
            let control = weighted_sgd_step(&control, batch, &w_c, lr)?;
            if config.forced_propensity.is_none() {
                weight_net.adam_update(batch, config.learning_rate_adam)?;
            }
            Models::Separate { treatment, control }
        }
        (regime, models) => unreachable!("{regime:?} cannot drive {models:?}"),
    };
    Ok((models, propensities))
}

/// Apply `config.method`'s training rule to `models` for one logged batch.
///
/// This is the update half of [`run_period`], exposed so that training can
/// be replayed on edited batches. `period` is 1-based and decides whether
/// the weighted design is still warming up.
pub fn train_on_batch(
    models: Models,
    weight_net: &mut WeightNet,
    batch: &Batch,
    config: &ExperimentConfig,
    period: usize,
) -> Result<Models, DesignError> {
    Ok(update_models(
        models,
        weight_net,
        batch,
        config,
        Regime::Experiment(config.method),
        period,
    )?
    .0)
}

fn run_period_in(
    mut state: LoopState,
    config: &ExperimentConfig,
    streams: &mut Streams,
    regime: Regime,
    record: bool,
) -> Result<LoopState, DesignError> {
    let period = state.period + 1;
    let mut batch = Batch::with_capacity(config.env.feature_dim, config.batch);
    let mut candidates = CandidateSet::new(&config.env);
    let log_start = state.log.len();
    for user in 0..config.batch {
        let treated = match regime {
            Regime::Experiment(_) => assign(&mut streams.assignment, config.p),
            Regime::Global(arm) => arm == Arm::Treatment,
        };
        candidates.resample(&mut streams.environment);
        let model = state.models.serving(treated);
        let chosen = candidates.get(rank_and_choose(model, config.alpha(treated), &candidates));
        let pred = model.predict(&ModelInput::from(chosen));
        let outcome = realize_outcome(&mut streams.outcome, chosen, &config.env)?;
        batch.push(chosen.into(), outcome, treated);
        if record {
            state.log.push(Interaction {
                period: period as u32,
                user_index: user as u32,
                treated,
                is_short: chosen.is_short,
                finished: outcome.finished,
                stay_duration: outcome.stay_duration,
                fr_hat: pred.fr,
                sd_hat: pred.sd,
                g_out: None,
                weight_treatment: None,
                weight_control: None,
            });
        }
    }

    let (models, propensities) = update_models(state.models, &mut state.weight_net, &batch, config, regime, period)?;
    state.models = models;
    if record {
        for (row, (g, wt, wc)) in state.log[log_start..].iter_mut().zip(propensities) {
            row.g_out = Some(g);
            row.weight_treatment = Some(wt);
            row.weight_control = Some(wc);
        }
    }
    state.period = period;
    Ok(state)
}

/// Advance the experiment by one period under `config.method`.
pub fn run_period(
    state: LoopState,
    config: &ExperimentConfig,
    streams: &mut Streams,
) -> Result<LoopState, DesignError> {
    if state.period >= config.periods {
        return Err(invalid("periods", "the experiment has already finished"));
    }
    run_period_in(state, config, streams, Regime::Experiment(config.method), true)
}

/// Model both arms inherit at experiment start: zero-initialized and trained
/// without weights for `production_burnin_periods` periods with every user
/// served by the control α. Uses streams disjoint from the experiment's.
pub fn make_production_model(seed: u64, config: &ExperimentConfig) -> Result<PredictorModel, DesignError> {
    let mut streams = Streams::for_burnin(seed);
    let mut state = LoopState {
        models: Models::Shared(PredictorModel::zeros(config.env.feature_dim)),
        weight_net: WeightNet::zeros_with_hidden(config.env.feature_dim, 1),
        period: 0,
        log: Vec::new(),
    };
    for _ in 0..config.production_burnin_periods {
        state = run_period_in(state, config, &mut streams, Regime::Global(Arm::Control), false)?;
    }
    match state.models {
        Models::Shared(m) => Ok(m),
        Models::Separate { .. } => unreachable!("burn-in uses a shared model"),
    }
}

/// Run every period of one replication and return the final state,
/// including the full interaction log.
pub fn run_experiment(config: &ExperimentConfig) -> Result<LoopState, DesignError> {
    config.validate()?;
    let production = make_production_model(config.seed, config)?;
    let mut streams = Streams::for_replication(config.seed);
    let mut state = LoopState::new(config, production, &mut streams);
    for _ in 0..config.periods {
        state = run_period(state, config, &mut streams)?;
    }
    Ok(state)
}

/// Run one replication and summarize it. `rep` only labels the result.
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<ReplicationResult, DesignError> {
    let state = run_experiment(config)?;
    Ok(ReplicationResult::from_log(
        config.method,
        rep,
        config.seed,
        &state.log,
        config.alpha_treatment,
        config.alpha_control,
    )?)
}

/// Outcome of a global regime run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalRun {
    pub means: MetricVector,
    /// Mean realized fusion value under the arm's α.
    pub value: f64,
}

/// Run the loop with every user in `arm` and a single unweighted model.
///
/// The assignment stream is never consumed, so the result does not depend
/// on `config.p`.
pub fn run_global(config: &ExperimentConfig, arm: Arm) -> Result<GlobalRun, DesignError> {
    config.env.validate()?;
    if config.periods == 0 || config.batch == 0 {
        return Err(invalid("periods", "global runs need at least one period and user"));
    }
    let production = make_production_model(config.seed, config)?;
    let mut streams = Streams::for_replication(config.seed);
    let mut state = LoopState {
        models: Models::Shared(production),
        weight_net: WeightNet::zeros_with_hidden(config.env.feature_dim, 1),
        period: 0,
        log: Vec::with_capacity(config.periods * config.batch),
    };
    for _ in 0..config.periods {
        state = run_period_in(state, config, &mut streams, Regime::Global(arm), true)?;
    }
    let alpha = config.alpha(arm == Arm::Treatment);
    let n = state.log.len() as f64;
    Ok(GlobalRun {
        means: MetricVector::means(&state.log),
        value: state.log.iter().map(|r| r.fusion_value(alpha)).sum::<f64>() / n,
    })
}

/// Global treatment and control runs of one replication seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedGlobal {
    pub seed: u64,
    pub treatment: GlobalRun,
    pub control: GlobalRun,
}

impl PairedGlobal {
    pub fn run(config: &ExperimentConfig) -> Result<Self, DesignError> {
        Ok(Self {
            seed: config.seed,
            treatment: run_global(config, Arm::Treatment)?,
            control: run_global(config, Arm::Control)?,
        })
    }

    pub fn difference(&self) -> MetricVector {
        MetricVector::from_fn(|m| self.treatment.means.get(m) - self.control.means.get(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_candidates;
    use crate::rng::stream;

    fn small(method: Method) -> ExperimentConfig {
        let mut c = ExperimentConfig::reference(9.0, 10.0, 0.5, method);
        c.periods = 30;
        c.batch = 16;
        c.warmup_periods = 5;
        c.production_burnin_periods = 10;
        c.env = EnvParams::with_dims(10, 20).unwrap();
        c.seed = 42;
        c
    }

    #[test]
    fn zero_model_picks_first() {
        let p = EnvParams::default();
        let set = sample_candidates(&mut stream(1, "e"), &p);
        assert_eq!(rank_and_choose(&PredictorModel::zeros(10), 10.0, &set), 0);
    }

    #[test]
    fn alpha_steers_choice() {
        // Two candidates whose predictions are (0.9, 1) and (0.1, 9).
        let p = EnvParams::with_dims(1, 2).unwrap();
        let mut set = CandidateSet::new(&p);
        set.resample(&mut stream(0, "x"));
        let logit = |q: f64| (q / (1.0 - q)).ln();
        // Indicator and intercept only: short → (0.9, 1), long → (0.1, 9).
        let model = PredictorModel {
            fr_weights: vec![0.0, logit(0.9) - logit(0.1), logit(0.1)],
            sd_weights: vec![0.0, 1.0 - 9.0, 9.0],
        };
        let p0 = model.predict(&set.get(0).into());
        let p1 = model.predict(&set.get(1).into());
        assert!((p0.fr - 0.9).abs() < 1e-12 && (p1.sd - 9.0).abs() < 1e-12);
        // α = 10 ties only up to rounding; 9 vs 11 is decisive.
        assert_eq!(rank_and_choose(&model, 9.0, &set), 1);
        assert_eq!(rank_and_choose(&model, 11.0, &set), 0);
    }

    #[test]
    fn shifting_sd_keeps_argmax() {
        let p = EnvParams::default();
        let set = sample_candidates(&mut stream(3, "e"), &p);
        let mut m = PredictorModel::zeros(10);
        m.fr_weights
            .iter_mut()
            .enumerate()
            .for_each(|(k, w)| *w = 0.3 * k as f64 - 1.0);
        m.sd_weights
            .iter_mut()
            .enumerate()
            .for_each(|(k, w)| *w = 1.0 - 0.1 * k as f64);
        let before = rank_and_choose(&m, 10.0, &set);
        m.sd_weights[11] += 3.0;
        assert_eq!(rank_and_choose(&m, 10.0, &set), before);
    }

    #[test]
    fn assignment_extremes_and_rate() {
        let mut rng = stream(0, "assignment");
        assert!((0..1000).all(|_| !assign(&mut rng, 0.0)));
        assert!((0..1000).all(|_| assign(&mut rng, 1.0)));
        let n = 100_000;
        let hits = (0..n).filter(|_| assign(&mut rng, 0.5)).count() as f64 / n as f64;
        assert!((hits - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn weights_examples() {
        assert_eq!(compute_weights(0.5, 0.5).unwrap(), (1.0, 1.0));
        let (t, c) = compute_weights(0.8, 0.2).unwrap();
        assert!((t - 4.0).abs() < 1e-15 && (c - 0.25).abs() < 1e-15);
        assert!(compute_weights(0.5, 0.0).is_err());
        assert!(compute_weights(0.5, 1.0).is_err());
    }

    #[test]
    fn burnin_zero_gives_zero_model() {
        let mut c = small(Method::Pooling);
        c.production_burnin_periods = 0;
        assert_eq!(make_production_model(1, &c).unwrap(), PredictorModel::zeros(10));
        c.production_burnin_periods = 5;
        assert_eq!(
            make_production_model(1, &c).unwrap(),
            make_production_model(1, &c).unwrap()
        );
    }

    #[test]
    fn snapshot_is_frozen() {
        let c = small(Method::Snapshot);
        let production = make_production_model(c.seed, &c).unwrap();
        let state = run_experiment(&c).unwrap();
        assert_eq!(state.models, Models::Shared(production));
        assert_eq!(state.log.len(), c.periods * c.batch);
    }

    #[test]
    fn run_period_refuses_past_end() {
        let mut c = small(Method::Pooling);
        c.periods = 1;
        c.warmup_periods = 0;
        let mut streams = Streams::for_replication(1);
        let state = LoopState::new(&c, PredictorModel::zeros(10), &mut streams);
        let state = run_period(state, &c, &mut streams).unwrap();
        assert!(run_period(state, &c, &mut streams).is_err());
    }

    #[test]
    fn weighted_requires_interior_p() {
        let mut c = small(Method::Weighted);
        c.p = 1.0;
        assert!(matches!(c.validate(), Err(DesignError::InvalidConfig { key: "p", .. })));
        c.method = Method::Pooling;
        c.p = 1.5;
        assert!(matches!(c.validate(), Err(DesignError::InvalidConfig { key: "p", .. })));
    }

    #[test]
    fn weighted_log_carries_weights_after_warmup() {
        let c = small(Method::Weighted);
        let state = run_experiment(&c).unwrap();
        for r in &state.log {
            let after = r.period as usize > c.warmup_periods;
            assert_eq!(r.g_out.is_some(), after);
            if let (Some(wt), Some(wc)) = (r.weight_treatment, r.weight_control) {
                assert!((c.p * wt + (1.0 - c.p) * wc - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn global_ignores_p() {
        let mut c = small(Method::Pooling);
        let a = run_global(&c, Arm::Treatment).unwrap();
        c.p = 0.123;
        assert_eq!(run_global(&c, Arm::Treatment).unwrap(), a);
    }
}
