//! Treatment-effect estimators and cross-replication summaries.
//!
//! Sample variances use the `n − 1` denominator. Tests use the normal
//! critical value, which is indistinguishable from Student-t at the arm
//! sizes simulated here.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::designs::Method;
use crate::interaction::Interaction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("the {0} arm has no users; the contrast is undefined")]
    EmptyArm(&'static str),
    #[error("method `{method}` has {n} replications; at least 2 are needed")]
    TooFewReplications { method: Method, n: usize },
    #[error("no logged rows carry weighting-network outputs")]
    NoWeightOutputs,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// The three reported outcome metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ShortProportion,
    StayDuration,
    FinishingRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ShortProportion, Metric::StayDuration, Metric::FinishingRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ShortProportion => "short_proportion",
            Metric::StayDuration => "stay_duration",
            Metric::FinishingRate => "finishing_rate",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::ShortProportion => "Proportion of short videos",
            Metric::StayDuration => "Stay durations",
            Metric::FinishingRate => "Finishing rates",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| StatsError::UnknownMetric(s.to_string()))
    }
}

/// One value per metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricVector {
    pub short_proportion: f64,
    pub stay_duration: f64,
    pub finishing_rate: f64,
}

impl MetricVector {
    pub fn from_fn(mut f: impl FnMut(Metric) -> f64) -> Self {
        Self {
            short_proportion: f(Metric::ShortProportion),
            stay_duration: f(Metric::StayDuration),
            finishing_rate: f(Metric::FinishingRate),
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::ShortProportion => self.short_proportion,
            Metric::StayDuration => self.stay_duration,
            Metric::FinishingRate => self.finishing_rate,
        }
    }

    /// Per-metric mean over all rows of `log`.
    pub fn means(log: &[Interaction]) -> Self {
        let n = log.len() as f64;
        Self::from_fn(|m| log.iter().map(|r| r.metric(m)).sum::<f64>() / n)
    }
}

/// A difference-in-means estimate with its two-sample standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub treatment_mean: f64,
    pub control_mean: f64,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Sample variance; zero for a single observation.
    fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }
}

/// Difference in means between treated and control values.
///
/// `se = √(Var₁/n₁ + Var₀/n₀)`; an arm with a single observation
/// contributes zero variance.
pub fn two_sample<I>(rows: I) -> Result<Estimate, StatsError>
where
    I: IntoIterator<Item = (bool, f64)>,
{
    let mut treated = Welford::default();
    let mut control = Welford::default();
    for (z, v) in rows {
        if z {
            treated.push(v)
        } else {
            control.push(v)
        }
    }
    if treated.n == 0 {
        return Err(StatsError::EmptyArm("treatment"));
    }
    if control.n == 0 {
        return Err(StatsError::EmptyArm("control"));
    }
    let se = (treated.variance() / treated.n as f64 + control.variance() / control.n as f64).sqrt();
    Ok(Estimate {
        treatment_mean: treated.mean,
        control_mean: control.mean,
        estimate: treated.mean - control.mean,
        se,
    })
}

/// Naive A/B contrast of `metric` over an experiment log.
pub fn naive_estimate(log: &[Interaction], metric: Metric) -> Result<Estimate, StatsError> {
    two_sample(log.iter().map(|r| (r.treated, r.metric(metric))))
}

/// Two-sided critical value of the standard normal at confidence `level`.
pub fn critical_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// Whether a two-sided test at confidence `level` rejects a zero effect.
pub fn t_reject(estimate: f64, se: f64, level: f64) -> bool {
    if estimate == 0.0 {
        return false;
    }
    if se == 0.0 {
        return true;
    }
    estimate.abs() / se > critical_value(level)
}

/// Mean realized fusion value of each arm under that arm's own α.
pub fn experimentation_values(
    log: &[Interaction],
    alpha_treatment: f64,
    alpha_control: f64,
) -> Result<(f64, f64), StatsError> {
    let (mut ts, mut tn, mut cs, mut cn) = (0.0, 0usize, 0.0, 0usize);
    for r in log {
        if r.treated {
            ts += r.fusion_value(alpha_treatment);
            tn += 1;
        } else {
            cs += r.fusion_value(alpha_control);
            cn += 1;
        }
    }
    if tn == 0 {
        return Err(StatsError::EmptyArm("treatment"));
    }
    if cn == 0 {
        return Err(StatsError::EmptyArm("control"));
    }
    Ok((ts / tn as f64, cs / cn as f64))
}

/// Clamp applied to weighting outputs before taking logs.
pub const LOGLOSS_CLAMP: f64 = 1e-12;

/// Mean base-2 log loss of the weighting network over rows that carry an
/// output. Outputs are clamped to `[1e-12, 1 − 1e-12]`.
pub fn weightnet_logloss_bits(log: &[Interaction]) -> Result<f64, StatsError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for r in log {
        if let Some(g) = r.g_out {
            let g = g.clamp(LOGLOSS_CLAMP, 1.0 - LOGLOSS_CLAMP);
            total -= if r.treated { g.log2() } else { (1.0 - g).log2() };
            n += 1;
        }
    }
    if n == 0 {
        return Err(StatsError::NoWeightOutputs);
    }
    Ok(total / n as f64)
}

/// Per-replication summary of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub short_proportion: Estimate,
    pub stay_duration: Estimate,
    pub finishing_rate: Estimate,
    pub treatment_value: f64,
    pub control_value: f64,
    pub weightnet_logloss_bits: Option<f64>,
}

impl ReplicationResult {
    pub fn from_log(
        method: Method,
        rep: usize,
        seed: u64,
        log: &[Interaction],
        alpha_treatment: f64,
        alpha_control: f64,
    ) -> Result<Self, StatsError> {
        let (treatment_value, control_value) = experimentation_values(log, alpha_treatment, alpha_control)?;
        let weightnet_logloss_bits = match weightnet_logloss_bits(log) {
            Ok(bits) => Some(bits),
            Err(StatsError::NoWeightOutputs) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            method,
            rep,
            seed,
            short_proportion: naive_estimate(log, Metric::ShortProportion)?,
            stay_duration: naive_estimate(log, Metric::StayDuration)?,
            finishing_rate: naive_estimate(log, Metric::FinishingRate)?,
            treatment_value,
            control_value,
            weightnet_logloss_bits,
        })
    }

    pub fn metric(&self, metric: Metric) -> &Estimate {
        match metric {
            Metric::ShortProportion => &self.short_proportion,
            Metric::StayDuration => &self.stay_duration,
            Metric::FinishingRate => &self.finishing_rate,
        }
    }
}

/// Whether the study compares distinct arms or identical ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    AB,
    AA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub metric: Metric,
    pub bias: f64,
    pub std: f64,
    pub mean_se: f64,
    /// Rejection rate at 95 %; only reported for A/A studies.
    pub type1_rate: Option<f64>,
    pub mean_estimate: f64,
}

/// Mean experimentation values of one method with standard errors of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub method: Method,
    pub treatment_mean: f64,
    pub treatment_sem: f64,
    pub control_mean: f64,
    pub control_sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mode: Mode,
    /// Sorted by (method, metric).
    pub rows: Vec<SummaryRow>,
    pub values: Vec<ValueSummary>,
}

impl SummaryStats {
    pub fn row(&self, method: Method, metric: Metric) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    pub fn values(&self, method: Method) -> Option<&ValueSummary> {
        self.values.iter().find(|v| v.method == method)
    }
}

/// Mean and sample standard deviation, summed in sorted order so the result
/// does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = if sorted.len() > 1 {
        dev.iter().sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn sorted_mean(values: &[f64]) -> f64 {
    mean_std(values).0
}

/// Summarize replications per method against the ground-truth effect `gte`
/// (ignored in A/A mode, where the truth is zero).
pub fn aggregate(results: &[ReplicationResult], gte: &MetricVector, mode: Mode) -> Result<SummaryStats, StatsError> {
    let mut by_method: BTreeMap<Method, Vec<&ReplicationResult>> = BTreeMap::new();
    for r in results {
        by_method.entry(r.method).or_default().push(r);
    }
    let level = 0.95;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (&method, reps) in &by_method {
        if reps.len() < 2 {
            return Err(StatsError::TooFewReplications { method, n: reps.len() });
        }
        for metric in Metric::ALL {
            let estimates: Vec<f64> = reps.iter().map(|r| r.metric(metric).estimate).collect();
            let ses: Vec<f64> = reps.iter().map(|r| r.metric(metric).se).collect();
            let (mean_estimate, std) = mean_std(&estimates);
            let truth = match mode {
                Mode::AB => gte.get(metric),
                Mode::AA => 0.0,
            };
            let type1_rate = match mode {
                Mode::AA => {
                    let rejected = reps
                        .iter()
                        .filter(|r| t_reject(r.metric(metric).estimate, r.metric(metric).se, level))
                        .count();
                    Some(rejected as f64 / reps.len() as f64)
                }
                Mode::AB => None,
            };
            rows.push(SummaryRow {
                method,
                metric,
                bias: mean_estimate - truth,
                std,
                mean_se: sorted_mean(&ses),
                type1_rate,
                mean_estimate,
            });
        }
        let tv: Vec<f64> = reps.iter().map(|r| r.treatment_value).collect();
        let cv: Vec<f64> = reps.iter().map(|r| r.control_value).collect();
        let (treatment_mean, t_sd) = mean_std(&tv);
        let (control_mean, c_sd) = mean_std(&cv);
        let root_n = (reps.len() as f64).sqrt();
        values.push(ValueSummary {
            method,
            treatment_mean,
            treatment_sem: t_sd / root_n,
            control_mean,
            control_sem: c_sd / root_n,
        });
    }
    Ok(SummaryStats { mode, rows, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, uniform};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn row(treated: bool, v: f64) -> Interaction {
        Interaction {
            period: 1,
            user_index: 0,
            treated,
            is_short: v > 0.5,
            finished: v > 0.5,
            stay_duration: v,
            fr_hat: 0.5,
            sd_hat: 0.0,
            g_out: None,
            weight_treatment: None,
            weight_control: None,
        }
    }

    #[test]
    fn hand_estimate() {
        let e = two_sample([(true, 3.0), (true, 1.0), (false, 2.0), (false, 0.0)]).unwrap();
        assert_eq!(e.estimate, 1.0);
        let log: Vec<_> = [(true, 3.0), (true, 1.0), (false, 2.0), (false, 0.0)]
            .into_iter()
            .map(|(z, v)| row(z, v))
            .collect();
        assert_eq!(naive_estimate(&log, Metric::StayDuration).unwrap().estimate, 1.0);
    }

    #[test]
    fn constant_arms_have_zero_se() {
        let e = two_sample((0..10).map(|i| (i % 2 == 0, 4.0))).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn unit_variance_se() {
        // Values ±a with n = 100 per arm have sample variance 1 when a² = 99/100.
        let a = (0.99f64).sqrt();
        let rows = (0..200).map(|i| (i < 100, if i % 2 == 0 { a } else { -a }));
        let e = two_sample(rows).unwrap();
        assert_abs_diff_eq!(e.se, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.se, 0.1414213562373095, epsilon = 1e-12);
    }

    #[test]
    fn empty_arm_is_an_error() {
        assert_eq!(two_sample([(true, 1.0)]), Err(StatsError::EmptyArm("control")));
        assert_eq!(two_sample([(false, 1.0)]), Err(StatsError::EmptyArm("treatment")));
    }

    #[test]
    fn rejection_rule() {
        assert_abs_diff_eq!(critical_value(0.95), 1.959964, epsilon = 1e-6);
        assert!(t_reject(0.3, 0.1, 0.95));
        assert!(!t_reject(0.1, 0.1, 0.95));
        assert!(!t_reject(0.0, 0.1, 0.95));
        assert!(!t_reject(0.0, 0.0, 0.95));
        assert!(t_reject(0.1, 0.0, 0.95));
    }

    #[test]
    fn fusion_values() {
        let mut r = row(true, 5.0);
        r.finished = true;
        let c = row(false, 2.0);
        assert_eq!(experimentation_values(&[r, c], 10.0, 9.0).unwrap().0, 15.0);
        let mut unfinished = vec![row(true, 3.0), row(true, 1.0), row(false, 2.0)];
        unfinished.iter_mut().for_each(|r| r.finished = false);
        let (t, c) = experimentation_values(&unfinished, 9.0, 10.0).unwrap();
        assert_eq!((t, c), (2.0, 2.0));
    }

    #[test]
    fn logloss_bits() {
        let mut log: Vec<_> = (0..10).map(|i| row(i % 3 == 0, 0.1)).collect();
        log.iter_mut().for_each(|r| r.g_out = Some(0.5));
        assert_abs_diff_eq!(weightnet_logloss_bits(&log).unwrap(), 1.0, epsilon = 1e-15);
        log.iter_mut()
            .for_each(|r| r.g_out = Some(if r.treated { 1.0 } else { 0.0 }));
        assert!(weightnet_logloss_bits(&log).unwrap() < 1e-10);
        log.iter_mut().for_each(|r| r.g_out = None);
        assert_eq!(weightnet_logloss_bits(&log), Err(StatsError::NoWeightOutputs));
    }

    fn result(method: Method, rep: usize, est: f64, se: f64) -> ReplicationResult {
        let e = Estimate {
            treatment_mean: est,
            control_mean: 0.0,
            estimate: est,
            se,
        };
        ReplicationResult {
            method,
            rep,
            seed: rep as u64,
            short_proportion: e,
            stay_duration: e,
            finishing_rate: e,
            treatment_value: 10.0 + est,
            control_value: 9.0,
            weightnet_logloss_bits: None,
        }
    }

    #[test]
    fn aggregate_constant_and_pair() {
        let gte = MetricVector {
            short_proportion: 1.0,
            stay_duration: 1.0,
            finishing_rate: 1.0,
        };
        let rs: Vec<_> = (0..3).map(|i| result(Method::Pooling, i, 1.0, 0.1)).collect();
        let s = aggregate(&rs, &gte, Mode::AB).unwrap();
        let r = s.row(Method::Pooling, Metric::ShortProportion).unwrap();
        assert_eq!((r.bias, r.std), (0.0, 0.0));
        assert_eq!(r.type1_rate, None);

        let rs = vec![
            result(Method::Weighted, 0, 0.0, 1.0),
            result(Method::Weighted, 1, 2.0, 1.0),
        ];
        let s = aggregate(&rs, &MetricVector::default(), Mode::AB).unwrap();
        let r = s.row(Method::Weighted, Metric::StayDuration).unwrap();
        assert_eq!(r.bias, 1.0);
        assert_abs_diff_eq!(r.std, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn aggregate_type1_rate() {
        let rs: Vec<_> = (0..4)
            .map(|i| result(Method::Splitting, i, if i == 0 { 0.5 } else { 0.01 }, 0.1))
            .collect();
        let s = aggregate(&rs, &MetricVector::default(), Mode::AA).unwrap();
        assert_eq!(
            s.row(Method::Splitting, Metric::FinishingRate).unwrap().type1_rate,
            Some(0.25)
        );
    }

    #[test]
    fn aggregate_needs_two() {
        let rs = vec![result(Method::Snapshot, 0, 1.0, 0.1)];
        assert_eq!(
            aggregate(&rs, &MetricVector::default(), Mode::AB),
            Err(StatsError::TooFewReplications {
                method: Method::Snapshot,
                n: 1
            })
        );
    }

    /// Random rows; the first two are treated and the next two control so
    /// both arms have a variance.
    fn random_rows(seed: u64, n: usize) -> Vec<(bool, f64)> {
        let mut rng = stream(seed, "rows");
        (0..n)
            .map(|i| {
                let z = match i {
                    0 | 1 => true,
                    2 | 3 => false,
                    _ => uniform(&mut rng) < 0.4,
                };
                (z, 10.0 * uniform(&mut rng) - 3.0)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn se_matches_two_pass(seed in 0u64..500, n in 4usize..300) {
            let rows = random_rows(seed, n);
            let e = two_sample(rows.iter().copied()).unwrap();
            let arm = |z: bool| -> (f64, f64, f64) {
                let v: Vec<f64> = rows.iter().filter(|r| r.0 == z).map(|r| r.1).collect();
                let k = v.len() as f64;
                let m = v.iter().sum::<f64>() / k;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
                (m, var, k)
            };
            let (m1, v1, n1) = arm(true);
            let (m0, v0, n0) = arm(false);
            prop_assert!((e.estimate - (m1 - m0)).abs() < 1e-12);
            prop_assert!((e.se - (v1 / n1 + v0 / n0).sqrt()).abs() < 1e-12);
        }

        #[test]
        fn scaling_scales_estimate(seed in 0u64..500, a in 0.01f64..100.0) {
            let rows = random_rows(seed, 50);
            let e = two_sample(rows.iter().copied()).unwrap();
            let s = two_sample(rows.iter().map(|&(z, v)| (z, a * v))).unwrap();
            prop_assert!((s.estimate - a * e.estimate).abs() <= 1e-9 * (1.0 + s.estimate.abs()));
            prop_assert!((s.se - a * e.se).abs() <= 1e-9 * (1.0 + s.se.abs()));
            // Away from the boundary the decision is scale-free.
            let z = e.estimate.abs() / e.se;
            if (z - critical_value(0.95)).abs() > 1e-6 {
                prop_assert_eq!(t_reject(e.estimate, e.se, 0.95), t_reject(s.estimate, s.se, 0.95));
            }
        }

        #[test]
        fn aggregate_is_permutation_invariant(seed in 0u64..200) {
            let mut rng = stream(seed, "agg");
            let mut rs: Vec<_> = (0..12)
                .map(|i| {
                    let m = if i % 2 == 0 { Method::Pooling } else { Method::Weighted };
                    result(m, i, uniform(&mut rng) - 0.5, 0.1 + uniform(&mut rng))
                })
                .collect();
            let gte = MetricVector { short_proportion: 0.1, stay_duration: -0.2, finishing_rate: 0.0 };
            let a = aggregate(&rs, &gte, Mode::AA).unwrap();
            rs.reverse();
            rs.swap(0, 5);
            let b = aggregate(&rs, &gte, Mode::AA).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
