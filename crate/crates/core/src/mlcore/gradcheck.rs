//! Finite-difference checks of the analytic gradients.
//!
//! Derivatives are estimated with the fourth-order central stencil
//! `[f(θ-2h) - 8f(θ-h) + 8f(θ+h) - f(θ+2h)] / 12h`. Relative error per
//! component is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
//!
//! The weighting network is piecewise smooth. When a stencil point flips
//! any ReLU on or off (re-evaluated incrementally from the cached forward
//! pass, see [`WeightNet::cache_pass`]) the step is shrunk tenfold; components that still
//! straddle a kink at `h = 1e-7` are reported as skipped.

use super::{weighted_loss, weighted_loss_gradient, Batch, MlError, PredictorModel, WeightNet};

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-8;

/// Which loss to differentiate.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Weighted predictor loss with the given per-row weights.
    Predictor {
        model: &'a PredictorModel,
        weights: &'a [f64],
    },
    /// Mean BCE of the weighting network against assignments.
    WeightNet(&'a WeightNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Relative error per flat parameter; `None` where skipped at a kink.
    pub component_errors: Vec<Option<f64>>,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.component_errors.len() - self.skipped
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn stencil(f: impl Fn(f64) -> f64, theta: f64, h: f64) -> f64 {
    (f(theta - 2.0 * h) - 8.0 * f(theta - h) + 8.0 * f(theta + h) - f(theta + 2.0 * h)) / (12.0 * h)
}

/// Compare analytic and numeric gradients of `loss` on `batch` using base
/// step `step`.
pub fn gradient_check(loss: LossKind<'_>, batch: &Batch, step: f64) -> Result<GradCheckReport, MlError> {
    match loss {
        LossKind::Predictor { model, weights } => check_predictor(model, weights, batch, step),
        LossKind::WeightNet(net) => check_weightnet(net, batch, step),
    }
}

fn check_predictor(
    model: &PredictorModel,
    weights: &[f64],
    batch: &Batch,
    step: f64,
) -> Result<GradCheckReport, MlError> {
    let analytic = weighted_loss_gradient(model, batch, weights)?.flatten();
    let d = model.feature_dim();
    let base = model.flatten();
    let mut errors = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let f = |v: f64| {
            let mut p = base.clone();
            p[k] = v;
            weighted_loss(&PredictorModel::from_flat(d, &p), batch, weights).expect("validated batch")
        };
        errors.push(Some(relative_error(analytic[k], stencil(f, base[k], step))));
    }
    Ok(report(errors))
}

fn check_weightnet(net: &WeightNet, batch: &Batch, step: f64) -> Result<GradCheckReport, MlError> {
    let analytic = net.bce_gradient(batch)?;
    let cache = net.cache_pass(batch)?;
    let mut errors = Vec::with_capacity(analytic.len());
    for (k, &a) in analytic.iter().enumerate() {
        let theta = net.params()[k];
        let mut h = step;
        let mut result = None;
        while h >= 1e-7 {
            let values: Option<Vec<f64>> = [-2.0 * h, -h, h, 2.0 * h]
                .iter()
                .map(|o| net.loss_with_param(&cache, k, theta + o))
                .collect();
            if let Some(v) = values {
                let numeric = (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h);
                result = Some(relative_error(a, numeric));
                break;
            }
            h /= 10.0;
        }
        errors.push(result);
    }
    Ok(report(errors))
}

fn report(errors: Vec<Option<f64>>) -> GradCheckReport {
    GradCheckReport {
        max_rel_error: errors.iter().flatten().fold(0.0, |a: f64, &b| a.max(b)),
        skipped: errors.iter().filter(|e| e.is_none()).count(),
        component_errors: errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlcore::testutil::random_batch;
    use crate::rng::{stream, uniform};

    fn random_predictor(seed: u64, d: usize) -> PredictorModel {
        let mut rng = stream(seed, "pred");
        let flat: Vec<f64> = (0..2 * (d + 2)).map(|_| 2.0 * uniform(&mut rng) - 1.0).collect();
        PredictorModel::from_flat(d, &flat)
    }

    #[test]
    fn sd_head_is_exact_for_quadratic_loss() {
        let d = 10;
        let batch = random_batch(1, 32, d);
        let model = random_predictor(1, d);
        let w = vec![1.0; 32];
        let r = gradient_check(
            LossKind::Predictor {
                model: &model,
                weights: &w,
            },
            &batch,
            1e-5,
        )
        .unwrap();
        let sd_part = &r.component_errors[d + 2..];
        assert!(sd_part.iter().flatten().all(|&e| e <= 1e-7), "{sd_part:?}");
    }

    #[test]
    fn logistic_head_matches() {
        let d = 10;
        let batch = random_batch(2, 32, d);
        let model = random_predictor(2, d);
        let mut rng = stream(2, "w");
        let w: Vec<f64> = (0..32).map(|_| 3.0 * uniform(&mut rng)).collect();
        let r = gradient_check(
            LossKind::Predictor {
                model: &model,
                weights: &w,
            },
            &batch,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "{}", r.max_rel_error);
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn weightnet_matches_on_batch_of_eight() {
        let batch = random_batch(3, 8, 10);
        let net = WeightNet::init(10, &mut stream(3, "init"));
        let r = gradient_check(LossKind::WeightNet(&net), &batch, 1e-3).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{}", r.max_rel_error);
        assert!(r.skipped * 100 < r.component_errors.len());
    }
}
