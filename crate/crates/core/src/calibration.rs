//! Score-to-probability calibration.
//!
//! Two calibrators are provided: Platt scaling, a logistic map
//! `σ(a·score + b)` fitted by Newton's method on Bayes-smoothed targets, and
//! isotonic regression, a non-decreasing step function fitted by weighted
//! pool-adjacent-violators.
//!
//! When only positive triples are available, [`calibrate`] with
//! [`NegativeStrategy::Synthetic`] draws `eta` corruptions per positive and
//! weights the sample so that the weighted share of positives equals the
//! requested base rate `alpha`:
//!
//! ```text
//! ω₊ = eta          (positives)
//! ω₋ = 1/alpha − 1  (corruptions)
//! ω₊·P / (ω₋·eta·P + ω₊·P) = alpha
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FilterIndex, Triple};
use crate::math::{sigmoid, softplus};
use crate::sampling::{sample_corruptions_with, SamplingMode};

/// Logistic sigmoid of a raw score, the uncalibrated probability.
pub fn expit(score: f64) -> f64 {
    sigmoid(score)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationWeights {
    pub omega_pos: f64,
    pub omega_neg: f64,
    pub alpha: f64,
    pub eta: usize,
}

impl CalibrationWeights {
    /// Weighted positive share of a sample with `positives` positives and
    /// `eta · positives` corruptions.
    pub fn weighted_base_rate(&self, positives: usize) -> f64 {
        let p = positives as f64;
        let n = (self.eta * positives) as f64;
        self.omega_pos * p / (self.omega_neg * n + self.omega_pos * p)
    }
}

pub fn calibration_weights(alpha: f64, eta: usize) -> Result<CalibrationWeights> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("base rate alpha must lie in (0, 1), got {alpha}")));
    }
    if eta == 0 {
        return Err(Error::domain("eta must be at least 1"));
    }
    Ok(CalibrationWeights {
        omega_pos: eta as f64,
        omega_neg: 1.0 / alpha - 1.0,
        alpha,
        eta,
    })
}

/// Labeled, weighted scores ready for a calibrator fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedSample {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn push(&mut self, score: f64, label: bool, weight: f64) {
        self.scores.push(score);
        self.labels.push(label);
        self.weights.push(weight);
    }

    /// Total weight of positives over total weight.
    pub fn weighted_positive_rate(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let pos: f64 = self.labels.iter().zip(&self.weights).filter(|(l, _)| **l).map(|(_, w)| w).sum();
        pos / total
    }
}

fn check_fit_inputs(scores: &[f64], labels: &[bool], weights: &[f64]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() || scores.len() != weights.len() {
        return Err(Error::contract(format!(
            "scores ({}), labels ({}) and weights ({}) differ in length",
            scores.len(),
            labels.len(),
            weights.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::contract("cannot fit a calibrator on an empty sample"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("scores must be finite"));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::domain("weights must be positive and finite"));
    }
    let mut w_pos = 0.0;
    let mut w_neg = 0.0;
    for (&l, &w) in labels.iter().zip(weights) {
        if l {
            w_pos += w;
        } else {
            w_neg += w;
        }
    }
    Ok((w_pos, w_neg))
}

/// `σ(a·score + b)`. With higher scores meaning more plausible triples a
/// fitted `a` is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub fn apply(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlattFit {
    pub calibrator: PlattCalibrator,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value before the first step and after every accepted step.
    pub objective_trace: Vec<f64>,
}

pub const PLATT_TOLERANCE: f64 = 1e-8;
pub const PLATT_MAX_ITERATIONS: usize = 100;

/// Weighted Platt scaling.
///
/// Targets are smoothed to `(W₊+1)/(W₊+2)` for positives and `1/(W₋+2)` for
/// negatives, `W₊`/`W₋` being total class weights, and the weighted
/// cross-entropy is minimised by Newton's method with step halving.
pub fn fit_platt(scores: &[f64], labels: &[bool], weights: &[f64]) -> Result<PlattFit> {
    let (w_pos, w_neg) = check_fit_inputs(scores, labels, weights)?;
    if w_pos == 0.0 || w_neg == 0.0 {
        return Err(Error::Fit("platt scaling needs both positive and negative labels".into()));
    }
    let t_pos = (w_pos + 1.0) / (w_pos + 2.0);
    let t_neg = 1.0 / (w_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { t_pos } else { t_neg }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .zip(weights)
            .map(|((&s, &t), &w)| {
                let z = a * s + b;
                w * (softplus(z) - t * z)
            })
            .sum()
    };
    // gradient (ga, gb) and Hessian entries (haa, hab, hbb)
    let derivatives = |a: f64, b: f64| -> [f64; 5] {
        let mut d = [0.0; 5];
        for ((&s, &t), &w) in scores.iter().zip(&targets).zip(weights) {
            let q = sigmoid(a * s + b);
            let r = w * (q - t);
            let h = w * q * (1.0 - q);
            d[0] += r * s;
            d[1] += r;
            d[2] += h * s * s;
            d[3] += h * s;
            d[4] += h;
        }
        d
    };

    let mut a = 0.0;
    let mut b = libm::log((w_pos + 1.0) / (w_neg + 1.0));
    let mut f = objective(a, b);
    let mut trace = vec![f];
    let total_weight = w_pos + w_neg;

    for iteration in 0..PLATT_MAX_ITERATIONS {
        let [ga, gb, haa, hab, hbb] = derivatives(a, b);
        let grad_norm = libm::hypot(ga, gb);
        if grad_norm < PLATT_TOLERANCE {
            return Ok(PlattFit {
                calibrator: PlattCalibrator { a, b },
                iterations: iteration,
                grad_norm,
                objective_trace: trace,
            });
        }
        // Newton direction on a lightly regularised Hessian.
        let ridge = 1e-12 * (haa + hbb) + 1e-300;
        let (h00, h11) = (haa + ridge, hbb + ridge);
        let det = h00 * h11 - hab * hab;
        let (mut da, mut db) = if det > 0.0 && det.is_finite() {
            (-(h11 * ga - hab * gb) / det, -(h00 * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };
        if da * ga + db * gb >= 0.0 {
            da = -ga;
            db = -gb;
        }
        let slope = da * ga + db * gb;
        if -slope < 1e-12 * f.abs().max(1.0) {
            // Predicted decrease is below the objective's rounding noise, so
            // the line search cannot judge it; take the plain Newton step.
            a += da;
            b += db;
            f = objective(a, b);
            trace.push(f);
            continue;
        }
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf.is_finite() && nf <= f + 1e-4 * step * slope {
                a = na;
                b = nb;
                f = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable decrease left: the iterate sits on the
            // rounding floor of the objective.
            if grad_norm < 1e-6 * total_weight.max(1.0) {
                return Ok(PlattFit {
                    calibrator: PlattCalibrator { a, b },
                    iterations: iteration,
                    grad_norm,
                    objective_trace: trace,
                });
            }
            return Err(Error::NonConvergence {
                iterations: iteration,
                a,
                b,
                grad_norm,
            });
        }
        trace.push(f);
    }
    let [ga, gb, ..] = derivatives(a, b);
    let grad_norm = libm::hypot(ga, gb);
    if grad_norm < PLATT_TOLERANCE {
        return Ok(PlattFit {
            calibrator: PlattCalibrator { a, b },
            iterations: PLATT_MAX_ITERATIONS,
            grad_norm,
            objective_trace: trace,
        });
    }
    Err(Error::NonConvergence {
        iterations: PLATT_MAX_ITERATIONS,
        a,
        b,
        grad_norm,
    })
}

/// Non-decreasing step function. `values[i]` applies on
/// `[breakpoints[i], breakpoints[i + 1])`; scores below the first breakpoint
/// take `values[0]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IsotonicCalibrator {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicCalibrator {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::contract(format!(
                "isotonic calibrator needs matching non-empty breakpoints ({}) and values ({})",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("breakpoints must be finite and strictly ascending"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain("values must be non-decreasing probabilities"));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, score: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= score);
        self.values[idx.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub calibrator: IsotonicCalibrator,
    /// Set when the sample held a single class and the fit is a constant.
    pub degenerate: bool,
}

/// Weighted isotonic regression of the labels on the scores.
///
/// Samples are sorted by score, tied scores are pooled into one block first,
/// then adjacent blocks are merged while their weighted means decrease.
pub fn fit_isotonic(scores: &[f64], labels: &[bool], weights: &[f64]) -> Result<IsotonicFit> {
    let (w_pos, w_neg) = check_fit_inputs(scores, labels, weights)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let min_score = scores[order[0]];

    if w_pos == 0.0 || w_neg == 0.0 {
        let value = if w_pos > 0.0 { 1.0 } else { 0.0 };
        return Ok(IsotonicFit {
            calibrator: IsotonicCalibrator {
                breakpoints: vec![min_score],
                values: vec![value],
            },
            degenerate: true,
        });
    }

    struct Block {
        start: f64,
        sum: f64,
        weight: f64,
    }
    impl Block {
        fn mean(&self) -> f64 {
            self.sum / self.weight
        }
    }

    let mut stack: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let start = scores[order[i]];
        let mut block = Block {
            start,
            sum: 0.0,
            weight: 0.0,
        };
        while i < order.len() && scores[order[i]] == start {
            let idx = order[i];
            block.sum += if labels[idx] { weights[idx] } else { 0.0 };
            block.weight += weights[idx];
            i += 1;
        }
        stack.push(block);
        while stack.len() >= 2 && stack[stack.len() - 2].mean() >= stack[stack.len() - 1].mean() {
            let top = stack.pop().unwrap();
            let prev = stack.last_mut().unwrap();
            prev.sum += top.sum;
            prev.weight += top.weight;
        }
    }

    let breakpoints = stack.iter().map(|b| b.start).collect();
    let values = stack.iter().map(|b| b.mean().clamp(0.0, 1.0)).collect();
    Ok(IsotonicFit {
        calibrator: IsotonicCalibrator { breakpoints, values },
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Calibrator {
    Platt(PlattCalibrator),
    Isotonic(IsotonicCalibrator),
}

impl Calibrator {
    pub fn method(&self) -> CalibrationMethod {
        match self {
            Calibrator::Platt(_) => CalibrationMethod::Platt,
            Calibrator::Isotonic(_) => CalibrationMethod::Isotonic,
        }
    }

    pub fn apply(&self, score: f64) -> f64 {
        match self {
            Calibrator::Platt(c) => c.apply(score),
            Calibrator::Isotonic(c) => c.apply(score),
        }
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CalibrationMethod {
    Platt,
    Isotonic,
}

impl CalibrationMethod {
    pub const ALL: [CalibrationMethod; 2] = [CalibrationMethod::Platt, CalibrationMethod::Isotonic];

    pub fn name(self) -> &'static str {
        match self {
            CalibrationMethod::Platt => "platt",
            CalibrationMethod::Isotonic => "isotonic",
        }
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "platt" => Ok(CalibrationMethod::Platt),
            "isotonic" => Ok(CalibrationMethod::Isotonic),
            other => Err(Error::config(format!("unknown calibration method {other:?}"))),
        }
    }
}

/// Where the negatives of the calibration sample come from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NegativeStrategy {
    /// Labeled negatives supplied by the dataset, unit weights.
    GroundTruth,
    /// `eta` corruptions per positive weighted to reproduce base rate `alpha`.
    Synthetic { eta: usize, alpha: f64 },
}

impl NegativeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            NegativeStrategy::GroundTruth => "ground_truth",
            NegativeStrategy::Synthetic { .. } => "synthetic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NegativeStrategy::GroundTruth => Ok(()),
            NegativeStrategy::Synthetic { eta, alpha } => calibration_weights(alpha, eta).map(|_| ()),
        }
    }
}

/// Inputs for [`calibrate`]. Which fields are required depends on the
/// strategy: ground truth needs `negative_scores`; synthetic needs
/// `positive_triples` and `corruption_scorer`.
#[derive(Clone, Copy)]
pub struct CalibrationInputs<'a> {
    pub positive_scores: &'a [f64],
    pub negative_scores: Option<&'a [f64]>,
    pub positive_triples: Option<&'a [Triple]>,
    pub corruption_scorer: Option<&'a dyn Fn(&[Triple]) -> Vec<f64>>,
    pub entity_count: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
    /// Redraw corruptions that are known positives.
    pub filter: Option<&'a FilterIndex>,
}

impl fmt::Debug for CalibrationInputs<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CalibrationInputs")
            .field("positive_scores", &self.positive_scores.len())
            .field("negative_scores", &self.negative_scores.map(<[f64]>::len))
            .field("positive_triples", &self.positive_triples.map(<[Triple]>::len))
            .field("corruption_scorer", &self.corruption_scorer.is_some())
            .field("entity_count", &self.entity_count)
            .field("seed", &self.seed)
            .field("sampling", &self.sampling)
            .field("filtered", &self.filter.is_some())
            .finish()
    }
}

impl<'a> CalibrationInputs<'a> {
    pub fn ground_truth(positive_scores: &'a [f64], negative_scores: &'a [f64]) -> Self {
        Self {
            positive_scores,
            negative_scores: Some(negative_scores),
            positive_triples: None,
            corruption_scorer: None,
            entity_count: 0,
            seed: 0,
            sampling: SamplingMode::UniformEntities,
            filter: None,
        }
    }

    pub fn synthetic(
        positive_triples: &'a [Triple],
        positive_scores: &'a [f64],
        scorer: &'a dyn Fn(&[Triple]) -> Vec<f64>,
        entity_count: usize,
        seed: u64,
    ) -> Self {
        Self {
            positive_scores,
            negative_scores: None,
            positive_triples: Some(positive_triples),
            corruption_scorer: Some(scorer),
            entity_count,
            seed,
            sampling: SamplingMode::UniformEntities,
            filter: None,
        }
    }
}

/// Assembles the labeled, weighted sample a calibrator is fitted on.
pub fn calibration_sample(strategy: &NegativeStrategy, inputs: &CalibrationInputs<'_>) -> Result<WeightedSample> {
    let mut sample = WeightedSample::default();
    match *strategy {
        NegativeStrategy::GroundTruth => {
            let negatives = inputs
                .negative_scores
                .ok_or_else(|| Error::config("ground-truth calibration needs labeled negative scores"))?;
            for &s in inputs.positive_scores {
                sample.push(s, true, 1.0);
            }
            for &s in negatives {
                sample.push(s, false, 1.0);
            }
        }
        NegativeStrategy::Synthetic { eta, alpha } => {
            let weights = calibration_weights(alpha, eta)?;
            let triples = inputs
                .positive_triples
                .ok_or_else(|| Error::config("synthetic calibration needs the positive triples"))?;
            let scorer = inputs
                .corruption_scorer
                .ok_or_else(|| Error::config("synthetic calibration needs a corruption scorer"))?;
            if triples.len() != inputs.positive_scores.len() {
                return Err(Error::contract(format!(
                    "{} positive triples but {} positive scores",
                    triples.len(),
                    inputs.positive_scores.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
            let batch =
                sample_corruptions_with(triples, eta, inputs.entity_count, &mut rng, inputs.sampling, inputs.filter)?;
            let neg_scores = scorer(&batch.negatives);
            if neg_scores.len() != batch.negatives.len() {
                return Err(Error::contract("corruption scorer returned the wrong number of scores"));
            }
            for &s in inputs.positive_scores {
                sample.push(s, true, weights.omega_pos);
            }
            for s in neg_scores {
                sample.push(s, false, weights.omega_neg);
            }
        }
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub calibrator: Calibrator,
    pub degenerate: bool,
    pub sample_size: usize,
}

/// Builds the calibration sample for `strategy` and fits `method` on it.
pub fn calibrate(
    strategy: &NegativeStrategy,
    method: CalibrationMethod,
    inputs: &CalibrationInputs<'_>,
) -> Result<CalibrationFit> {
    let sample = calibration_sample(strategy, inputs)?;
    fit_sample(method, &sample)
}

pub fn fit_sample(method: CalibrationMethod, sample: &WeightedSample) -> Result<CalibrationFit> {
    let (calibrator, degenerate) = match method {
        CalibrationMethod::Platt => {
            let fit = fit_platt(&sample.scores, &sample.labels, &sample.weights)?;
            (Calibrator::Platt(fit.calibrator), false)
        }
        CalibrationMethod::Isotonic => {
            let fit = fit_isotonic(&sample.scores, &sample.labels, &sample.weights)?;
            (Calibrator::Isotonic(fit.calibrator), fit.degenerate)
        }
    };
    Ok(CalibrationFit {
        calibrator,
        degenerate,
        sample_size: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expit_examples() {
        assert_eq!(expit(0.0), 0.5);
        let tiny = expit(-710.0);
        assert!(tiny > 0.0 && tiny <= 1e-300);
        assert_eq!(expit(710.0), 1.0);
    }

    #[test]
    fn weights_examples() {
        let w = calibration_weights(0.5, 20).unwrap();
        assert_eq!((w.omega_pos, w.omega_neg), (20.0, 1.0));
        let w = calibration_weights(0.1, 10).unwrap();
        assert_eq!(w.omega_pos, 10.0);
        assert!((w.omega_neg - 9.0).abs() < 1e-12);
        assert!(calibration_weights(1.0, 10).is_err());
        assert!(calibration_weights(0.0, 10).is_err());
        assert!(calibration_weights(f64::NAN, 10).is_err());
    }

    #[test]
    fn platt_identity_apply() {
        assert_eq!(PlattCalibrator { a: 1.0, b: 0.0 }.apply(0.0), 0.5);
    }

    #[test]
    fn platt_separable_is_clamped_by_targets() {
        let n = 10;
        let mut scores = vec![-10.0; n];
        scores.extend(vec![10.0; n]);
        let labels: Vec<bool> = (0..2 * n).map(|i| i >= n).collect();
        let weights = vec![1.0; 2 * n];
        let fit = fit_platt(&scores, &labels, &weights).unwrap();
        let (t_pos, t_neg) = (11.0 / 12.0, 1.0 / 12.0);
        let lo = fit.calibrator.apply(-10.0);
        let hi = fit.calibrator.apply(10.0);
        assert!(lo <= hi);
        assert!(lo >= t_neg - 1e-6 && hi <= t_pos + 1e-6, "{lo} {hi}");
        assert!(fit.calibrator.a > 0.0);
    }

    #[test]
    fn platt_constant_scores_balanced_labels() {
        let scores = vec![0.7; 8];
        let labels = [true, false, true, false, true, false, true, false];
        let fit = fit_platt(&scores, &labels, &[1.0; 8]).unwrap();
        assert!((fit.calibrator.apply(0.7) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn platt_needs_two_classes() {
        assert!(matches!(fit_platt(&[1.0, 2.0], &[true, true], &[1.0, 1.0]), Err(Error::Fit(_))));
        assert!(fit_platt(&[1.0], &[true, false], &[1.0]).is_err());
        assert!(fit_platt(&[1.0, 2.0], &[true, false], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn platt_objective_never_increases() {
        let scores: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 5.0).collect();
        let labels: Vec<bool> = (0..50).map(|i| (i * 7919) % 13 < i / 5).collect();
        let fit = fit_platt(&scores, &labels, &vec![1.5; 50]).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        assert!(fit.grad_norm < PLATT_TOLERANCE);
    }

    #[test]
    fn isotonic_hand_pava() {
        let fit = fit_isotonic(&[1.0, 2.0, 3.0, 4.0], &[false, true, false, true], &[1.0; 4]).unwrap();
        let cal = &fit.calibrator;
        let at: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&s| cal.apply(s)).collect();
        assert_eq!(at, [0.0, 0.5, 0.5, 1.0]);
        assert_eq!(cal.apply(2.5), 0.5);
        assert_eq!(cal.apply(-100.0), 0.0);
        assert_eq!(cal.apply(100.0), 1.0);
        assert!(!fit.degenerate);
    }

    #[test]
    fn isotonic_monotone_labels_are_reproduced() {
        let scores = [0.1, 0.5, 0.9, 1.3, 2.0];
        let labels = [false, false, true, true, true];
        let fit = fit_isotonic(&scores, &labels, &[1.0; 5]).unwrap();
        for (s, l) in scores.iter().zip(labels) {
            assert_eq!(fit.calibrator.apply(*s), if l { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn isotonic_ties_are_pooled() {
        let fit = fit_isotonic(&[1.0, 1.0, 2.0], &[true, false, true], &[1.0, 3.0, 1.0]).unwrap();
        assert_eq!(fit.calibrator.apply(1.0), 0.25);
        assert_eq!(fit.calibrator.breakpoints(), &[1.0, 2.0]);
    }

    #[test]
    fn isotonic_single_class_is_degenerate() {
        let fit = fit_isotonic(&[3.0, 1.0], &[false, false], &[1.0, 1.0]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.calibrator.values(), &[0.0]);
        assert_eq!(fit.calibrator.apply(10.0), 0.0);
    }

    #[test]
    fn isotonic_constructor_checks_invariants() {
        assert!(IsotonicCalibrator::new(vec![1.0, 1.0], vec![0.1, 0.2]).is_err());
        assert!(IsotonicCalibrator::new(vec![1.0, 2.0], vec![0.3, 0.2]).is_err());
        assert!(IsotonicCalibrator::new(vec![1.0], vec![1.5]).is_err());
        assert!(IsotonicCalibrator::new(vec![1.0, 2.0], vec![0.2, 0.2]).is_ok());
    }

    #[test]
    fn ground_truth_requires_negatives() {
        let inputs = CalibrationInputs {
            negative_scores: None,
            ..CalibrationInputs::ground_truth(&[1.0], &[])
        };
        let err = calibrate(&NegativeStrategy::GroundTruth, CalibrationMethod::Platt, &inputs).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn synthetic_requires_scorer() {
        let inputs = CalibrationInputs::ground_truth(&[1.0], &[0.0]);
        let strategy = NegativeStrategy::Synthetic { eta: 2, alpha: 0.5 };
        let err = calibrate(&strategy, CalibrationMethod::Isotonic, &inputs).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn synthetic_sample_bookkeeping() {
        let triples: Vec<Triple> = (0..7).map(|i| Triple::new(i, 0, i + 1)).collect();
        let scores: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let scorer = |ts: &[Triple]| -> Vec<f64> { ts.iter().map(|t| -(t.subject as f64)).collect() };
        let inputs = CalibrationInputs::synthetic(&triples, &scores, &scorer, 10, 3);
        let strategy = NegativeStrategy::Synthetic { eta: 20, alpha: 0.5 };
        let sample = calibration_sample(&strategy, &inputs).unwrap();
        assert_eq!(sample.len(), 7 + 140);
        assert!(sample.weights[..7].iter().all(|&w| w == 20.0));
        assert!(sample.weights[7..].iter().all(|&w| w == 1.0));
        assert!((sample.weighted_positive_rate() - 0.5).abs() < 1e-15);
        // deterministic per seed
        assert_eq!(sample, calibration_sample(&strategy, &inputs).unwrap());
    }

    proptest! {
        #[test]
        fn weighting_identity(alpha in 0.001f64..0.999, eta in 1usize..200, p in 1usize..500) {
            let w = calibration_weights(alpha, eta).unwrap();
            prop_assert!((w.weighted_base_rate(p) - alpha).abs() < 1e-12);
        }

        #[test]
        fn isotonic_is_monotone_and_scale_invariant(
            data in proptest::collection::vec((-5.0f64..5.0, any::<bool>(), 0.1f64..4.0), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            let weights: Vec<f64> = data.iter().map(|d| d.2).collect();
            let fit = fit_isotonic(&scores, &labels, &weights).unwrap();
            let doubled: Vec<f64> = weights.iter().map(|w| 2.0 * w).collect();
            let fit2 = fit_isotonic(&scores, &labels, &doubled).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let outputs: Vec<f64> = sorted.iter().map(|&s| fit.calibrator.apply(s)).collect();
            prop_assert!(outputs.windows(2).all(|w| w[0] <= w[1]));
            for &s in &sorted {
                prop_assert!((fit.calibrator.apply(s) - fit2.calibrator.apply(s)).abs() < 1e-12);
            }
        }

        #[test]
        fn isotonic_beats_expit_on_fitting_set(
            data in proptest::collection::vec((-5.0f64..5.0, any::<bool>(), 0.1f64..4.0), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            let weights: Vec<f64> = data.iter().map(|d| d.2).collect();
            let fit = fit_isotonic(&scores, &labels, &weights).unwrap();
            let brier = |f: &dyn Fn(f64) -> f64| -> f64 {
                scores.iter().zip(&labels).zip(&weights)
                    .map(|((&s, &l), &w)| { let y = if l { 1.0 } else { 0.0 }; w * (f(s) - y) * (f(s) - y) })
                    .sum()
            };
            let iso = brier(&|s| fit.calibrator.apply(s));
            let raw = brier(&expit);
            prop_assert!(iso <= raw + 1e-12);
        }

        #[test]
        fn platt_is_monotone_once_oriented(
            data in proptest::collection::vec((-5.0f64..5.0, 0.1f64..4.0), 4..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let weights: Vec<f64> = data.iter().map(|d| d.1).collect();
            let labels: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0).collect();
            let fit = fit_platt(&scores, &labels, &weights).unwrap();
            let sign = if fit.calibrator.a >= 0.0 { 1.0 } else { -1.0 };
            let mut oriented: Vec<f64> = scores.iter().map(|s| sign * s).collect();
            oriented.sort_by(f64::total_cmp);
            let out: Vec<f64> = oriented.iter().map(|s| fit.calibrator.apply(sign * s)).collect();
            prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
