//! Exact reweighting identities on finite sample spaces.
//!
//! A [`DiscreteSpace`] holds the treatment and control data distributions
//! over a finite set of `(x, y)` atoms and the assignment probability `p`.
//! The experiment distribution is the mixture `p·D_T + (1 − p)·D_C`, and the
//! joint law of (atom, Z) is `P(a, 1) = p·D_T(a)`, `P(a, 0) = (1 − p)·D_C(a)`.
//!
//! All expectations here are exact finite sums, so the propensity-weight
//! identities and the minimum-second-moment property can be checked to
//! rounding error.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, Stream};

/// Tolerance for probability vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReweightError {
    #[error("treatment probability p = {0} must lie strictly inside (0, 1)")]
    AssignmentProbability(f64),
    #[error("the {0} distribution has a negative or non-finite entry")]
    NegativeMass(&'static str),
    #[error("the {name} distribution sums to {sum}, not 1")]
    NotNormalized { name: &'static str, sum: f64 },
    #[error("distributions have {treatment} and {control} atoms")]
    AtomCount { treatment: usize, control: usize },
    #[error("atom {0} has zero experiment mass; E[Z | atom] is undefined")]
    ZeroMass(usize),
}

/// A labeled `(x, y)` point of the finite sample space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpace {
    pub atoms: Vec<Atom>,
    pub prob_treatment: Vec<f64>,
    pub prob_control: Vec<f64>,
    pub p: f64,
}

fn check_distribution(name: &'static str, v: &[f64]) -> Result<(), ReweightError> {
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(ReweightError::NegativeMass(name));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(ReweightError::NotNormalized { name, sum });
    }
    Ok(())
}

impl DiscreteSpace {
    pub fn new(
        atoms: Vec<Atom>,
        prob_treatment: Vec<f64>,
        prob_control: Vec<f64>,
        p: f64,
    ) -> Result<Self, ReweightError> {
        let space = Self {
            atoms,
            prob_treatment,
            prob_control,
            p,
        };
        space.validate()?;
        Ok(space)
    }

    /// Space over atoms `(i, 0)` for each index `i`.
    pub fn from_probabilities(prob_treatment: Vec<f64>, prob_control: Vec<f64>, p: f64) -> Result<Self, ReweightError> {
        let atoms = (0..prob_treatment.len() as u32).map(|x| Atom { x, y: 0 }).collect();
        Self::new(atoms, prob_treatment, prob_control, p)
    }

    pub fn validate(&self) -> Result<(), ReweightError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(ReweightError::AssignmentProbability(self.p));
        }
        if self.prob_treatment.len() != self.prob_control.len() || self.atoms.len() != self.prob_treatment.len() {
            return Err(ReweightError::AtomCount {
                treatment: self.prob_treatment.len(),
                control: self.prob_control.len(),
            });
        }
        check_distribution("treatment", &self.prob_treatment)?;
        check_distribution("control", &self.prob_control)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `P(atom = a, Z = 1)` and `P(atom = a, Z = 0)`.
    fn joint(&self, a: usize) -> (f64, f64) {
        (self.p * self.prob_treatment[a], (1.0 - self.p) * self.prob_control[a])
    }

    /// `E[Z | atom]` for every atom.
    pub fn propensity(&self) -> Result<Vec<f64>, ReweightError> {
        (0..self.len())
            .map(|a| {
                let (t, c) = self.joint(a);
                if t + c > 0.0 {
                    Ok(t / (t + c))
                } else {
                    Err(ReweightError::ZeroMass(a))
                }
            })
            .collect()
    }
}

/// Weights `W(a, z)` as one column per assignment value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    /// `W(a, 1)`.
    pub treated: Vec<f64>,
    /// `W(a, 0)`.
    pub control: Vec<f64>,
}

impl WeightTable {
    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            treated: vec![value; n],
            control: vec![value; n],
        }
    }

    /// Weights that depend on the atom only.
    pub fn per_atom(values: Vec<f64>) -> Self {
        Self {
            control: values.clone(),
            treated: values,
        }
    }
}

/// The experiment data distribution `p·D_T + (1 − p)·D_C`.
pub fn experiment_distribution(space: &DiscreteSpace) -> Vec<f64> {
    space
        .prob_treatment
        .iter()
        .zip(&space.prob_control)
        .map(|(t, c)| space.p * t + (1.0 - space.p) * c)
        .collect()
}

/// Propensity weights `(W_T, W_C) = (E[Z|a]/p, (1 − E[Z|a])/(1 − p))`.
pub fn oracle_weights(space: &DiscreteSpace) -> Result<(WeightTable, WeightTable), ReweightError> {
    let e = space.propensity()?;
    let p = space.p;
    let w_t = e.iter().map(|e| e / p).collect();
    let w_c = e.iter().map(|e| (1.0 - e) / (1.0 - p)).collect();
    Ok((WeightTable::per_atom(w_t), WeightTable::per_atom(w_c)))
}

/// The weighted distribution `a ↦ Σ_z P(a, z)·W(a, z)`.
pub fn apply_weights(space: &DiscreteSpace, table: &WeightTable) -> Vec<f64> {
    (0..space.len())
        .map(|a| {
            let (t, c) = space.joint(a);
            t * table.treated[a] + c * table.control[a]
        })
        .collect()
}

/// `E[W]` under the joint law of (atom, Z).
pub fn first_moment(space: &DiscreteSpace, table: &WeightTable) -> f64 {
    apply_weights(space, table).iter().sum()
}

/// `E[W²]` under the joint law of (atom, Z).
pub fn second_moment(space: &DiscreteSpace, table: &WeightTable) -> f64 {
    (0..space.len())
        .map(|a| {
            let (t, c) = space.joint(a);
            t * table.treated[a].powi(2) + c * table.control[a].powi(2)
        })
        .sum()
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest deviation `max(‖W_T·D_E − D_T‖∞, ‖W_C·D_E − D_C‖∞)`.
pub fn lemma1_deviation(space: &DiscreteSpace) -> Result<f64, ReweightError> {
    let (w_t, w_c) = oracle_weights(space)?;
    Ok(sup_distance(&apply_weights(space, &w_t), &space.prob_treatment)
        .max(sup_distance(&apply_weights(space, &w_c), &space.prob_control)))
}

/// `W(a, z) = base(a) + c_a·(z − E[Z|a])`: a perturbation with conditional
/// mean zero, so it leaves the weighted distribution unchanged.
pub fn perturb(base: &WeightTable, propensity: &[f64], coefficients: &[f64]) -> WeightTable {
    WeightTable {
        treated: (0..propensity.len())
            .map(|a| base.treated[a] + coefficients[a] * (1.0 - propensity[a]))
            .collect(),
        control: (0..propensity.len())
            .map(|a| base.control[a] - coefficients[a] * propensity[a])
            .collect(),
    }
}

/// Interval of `c` keeping `base + c·(z − e)` nonnegative at both `z`.
fn admissible(base: f64, e: f64) -> (f64, f64) {
    // z = 1: base + c(1 − e) ≥ 0;  z = 0: base − c·e ≥ 0.
    let lo = if e < 1.0 { -base / (1.0 - e) } else { f64::NEG_INFINITY };
    let hi = if e > 0.0 { base / e } else { f64::INFINITY };
    (lo.max(-10.0), hi.min(10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// Max over perturbations of `E[W_oracle²] − E[W²]`; nonpositive when the
    /// oracle weights are variance-minimal.
    pub max_violation: f64,
    /// Smallest `E[W²] − E[W_oracle²]` among nonzero perturbations.
    pub min_gap: f64,
    /// Largest `‖W·D_E − target‖∞` among perturbed weights (feasibility).
    pub max_feasibility_error: f64,
    pub perturbations: usize,
}

/// Draw `n_perturbations` feasible nonnegative perturbations of each oracle
/// weight table and compare second moments.
pub fn verify_theorem1(
    space: &DiscreteSpace,
    n_perturbations: usize,
    rng: &mut Stream,
) -> Result<Theorem1Report, ReweightError> {
    let e = space.propensity()?;
    let (w_t, w_c) = oracle_weights(space)?;
    let mut report = Theorem1Report {
        max_violation: f64::NEG_INFINITY,
        min_gap: f64::INFINITY,
        max_feasibility_error: 0.0,
        perturbations: 0,
    };
    for (oracle, target) in [(&w_t, &space.prob_treatment), (&w_c, &space.prob_control)] {
        let base_moment = second_moment(space, oracle);
        for _ in 0..n_perturbations {
            let c: Vec<f64> = (0..space.len())
                .map(|a| {
                    let (lo, hi) = admissible(oracle.treated[a], e[a]);
                    // Shrink slightly inside the admissible interval.
                    0.99 * rng.gen_range(lo..=hi)
                })
                .collect();
            let w = perturb(oracle, &e, &c);
            let gap = second_moment(space, &w) - base_moment;
            report.max_violation = report.max_violation.max(-gap);
            let nonzero = c.iter().zip(&e).any(|(c, e)| *c != 0.0 && *e > 0.0 && *e < 1.0);
            if nonzero {
                report.min_gap = report.min_gap.min(gap);
            }
            report.max_feasibility_error = report
                .max_feasibility_error
                .max(sup_distance(&apply_weights(space, &w), target));
            report.perturbations += 1;
        }
    }
    Ok(report)
}

/// Random space with 2 to `max_atoms` atoms, strictly positive masses, and
/// `p` uniform in `(0.05, 0.95)`.
pub fn random_space(rng: &mut Stream, max_atoms: usize) -> DiscreteSpace {
    let n = rng.gen_range(2..=max_atoms.max(2));
    let draw = |rng: &mut Stream| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    };
    let t = draw(rng);
    let c = draw(rng);
    let p = rng.gen_range(0.05..0.95);
    let atoms = (0..n as u32).map(|i| Atom { x: i / 5, y: i % 5 }).collect();
    DiscreteSpace::new(atoms, t, c, p).expect("normalized by construction")
}

/// Aggregate outcome of a seeded battery of random spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub spaces: usize,
    pub perturbations_per_space: usize,
    pub max_lemma1_deviation: f64,
    pub max_normalization_error: f64,
    pub max_theorem1_violation: f64,
    pub min_theorem1_gap: f64,
    pub max_feasibility_error: f64,
}

pub fn oracle_battery(seed: u64, spaces: usize, perturbations: usize) -> Result<OracleReport, ReweightError> {
    let mut rng = stream(seed, "oracle");
    let mut report = OracleReport {
        seed,
        spaces,
        perturbations_per_space: perturbations,
        max_lemma1_deviation: 0.0,
        max_normalization_error: 0.0,
        max_theorem1_violation: f64::NEG_INFINITY,
        min_theorem1_gap: f64::INFINITY,
        max_feasibility_error: 0.0,
    };
    for _ in 0..spaces {
        let space = random_space(&mut rng, 50);
        report.max_lemma1_deviation = report.max_lemma1_deviation.max(lemma1_deviation(&space)?);
        let (w_t, w_c) = oracle_weights(&space)?;
        for w in [&w_t, &w_c] {
            report.max_normalization_error = report
                .max_normalization_error
                .max((first_moment(&space, w) - 1.0).abs());
        }
        let t1 = verify_theorem1(&space, perturbations, &mut rng)?;
        report.max_theorem1_violation = report.max_theorem1_violation.max(t1.max_violation);
        report.min_theorem1_gap = report.min_theorem1_gap.min(t1.min_gap);
        report.max_feasibility_error = report.max_feasibility_error.max(t1.max_feasibility_error);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_atoms() -> DiscreteSpace {
        DiscreteSpace::from_probabilities(vec![0.8, 0.2], vec![0.2, 0.8], 0.5).unwrap()
    }

    #[test]
    fn mixture_examples() {
        let d = experiment_distribution(&two_atoms());
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-15);
        let same = DiscreteSpace::from_probabilities(vec![0.3, 0.7], vec![0.3, 0.7], 0.37).unwrap();
        let d = experiment_distribution(&same);
        assert_abs_diff_eq!(d[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_mixture_at_p_one() {
        // The mixture itself is defined at p = 1 even though weights are not.
        let s = DiscreteSpace {
            atoms: vec![Atom { x: 0, y: 0 }, Atom { x: 1, y: 0 }],
            prob_treatment: vec![0.8, 0.2],
            prob_control: vec![0.2, 0.8],
            p: 1.0,
        };
        assert_eq!(experiment_distribution(&s), vec![0.8, 0.2]);
        assert_eq!(s.validate(), Err(ReweightError::AssignmentProbability(1.0)));
    }

    #[test]
    fn oracle_weights_two_atoms() {
        let s = two_atoms();
        assert_eq!(
            s.propensity()
                .unwrap()
                .iter()
                .map(|e| (e * 1e12).round() / 1e12)
                .collect::<Vec<_>>(),
            vec![0.8, 0.2]
        );
        let (w_t, w_c) = oracle_weights(&s).unwrap();
        assert_abs_diff_eq!(w_t.treated[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(w_t.treated[1], 0.4, epsilon = 1e-12);
        for a in 0..2 {
            assert_abs_diff_eq!(0.5 * w_t.treated[a] + 0.5 * w_c.treated[a], 1.0, epsilon = 1e-12);
        }
        let applied = apply_weights(&s, &w_t);
        assert_abs_diff_eq!(applied[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(applied[1], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(second_moment(&s, &w_t), 1.36, epsilon = 1e-12);
    }

    #[test]
    fn identical_distributions_give_unit_weights() {
        let s = DiscreteSpace::from_probabilities(vec![0.1, 0.6, 0.3], vec![0.1, 0.6, 0.3], 0.3).unwrap();
        let (w_t, w_c) = oracle_weights(&s).unwrap();
        for w in w_t.treated.iter().chain(&w_c.control) {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_weight_is_identity_with_unit_second_moment() {
        let s = two_atoms();
        let one = WeightTable::constant(2, 1.0);
        assert_eq!(apply_weights(&s, &one), experiment_distribution(&s));
        assert_abs_diff_eq!(second_moment(&s, &one), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn splitting_weight_recovers_treatment() {
        let s = two_atoms();
        let split = WeightTable {
            treated: vec![1.0 / s.p; 2],
            control: vec![0.0; 2],
        };
        let applied = apply_weights(&s, &split);
        assert_abs_diff_eq!(applied[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(applied[1], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(second_moment(&s, &split), 2.0, epsilon = 1e-12);
        assert!(second_moment(&s, &split) >= 1.36);
    }

    #[test]
    fn zero_perturbation_has_zero_gap() {
        let s = two_atoms();
        let e = s.propensity().unwrap();
        let (w_t, _) = oracle_weights(&s).unwrap();
        let w = perturb(&w_t, &e, &[0.0, 0.0]);
        assert_eq!(second_moment(&s, &w) - second_moment(&s, &w_t), 0.0);
    }

    #[test]
    fn gap_is_variance_decomposition() {
        let s = two_atoms();
        let e = s.propensity().unwrap();
        let d_e = experiment_distribution(&s);
        let (w_t, _) = oracle_weights(&s).unwrap();
        let c = [0.7, -0.3];
        let w = perturb(&w_t, &e, &c);
        let expected: f64 = (0..2).map(|a| d_e[a] * c[a] * c[a] * e[a] * (1.0 - e[a])).sum();
        assert_abs_diff_eq!(
            second_moment(&s, &w) - second_moment(&s, &w_t),
            expected,
            epsilon = 1e-12
        );
        assert!(expected > 0.0);
    }

    #[test]
    fn zero_mass_atom_is_an_error() {
        let s = DiscreteSpace::from_probabilities(vec![1.0, 0.0], vec![1.0, 0.0], 0.5).unwrap();
        assert_eq!(oracle_weights(&s), Err(ReweightError::ZeroMass(1)));
    }

    #[test]
    fn invalid_spaces_rejected() {
        assert!(matches!(
            DiscreteSpace::from_probabilities(vec![0.5, 0.6], vec![0.5, 0.5], 0.5),
            Err(ReweightError::NotNormalized { name: "treatment", .. })
        ));
        assert_eq!(
            DiscreteSpace::from_probabilities(vec![1.0], vec![0.5, 0.5], 0.5),
            Err(ReweightError::AtomCount {
                treatment: 1,
                control: 2
            })
        );
    }

    proptest! {
        #[test]
        fn random_spaces_satisfy_identities(seed in 0u64..10_000) {
            let mut rng = stream(seed, "prop");
            let s = random_space(&mut rng, 50);
            prop_assert!(lemma1_deviation(&s).unwrap() <= 1e-12);
            let (w_t, w_c) = oracle_weights(&s).unwrap();
            prop_assert!((first_moment(&s, &w_t) - 1.0).abs() <= 1e-12);
            prop_assert!((first_moment(&s, &w_c) - 1.0).abs() <= 1e-12);
            for a in 0..s.len() {
                prop_assert!((s.p * w_t.treated[a] + (1.0 - s.p) * w_c.treated[a] - 1.0).abs() <= 1e-12);
            }
            let r = verify_theorem1(&s, 20, &mut rng).unwrap();
            prop_assert!(r.max_violation <= 1e-12);
            prop_assert!(r.min_gap > 0.0);
            prop_assert!(r.max_feasibility_error <= 1e-12);
        }
    }
}
