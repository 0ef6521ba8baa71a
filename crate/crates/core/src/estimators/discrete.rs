use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{effective_sample_size, terms_mean, terms_std_error, Estimate, EstimateReport, EstimatorKind, RewardPredictions};
use crate::binning::BinningScheme;
use crate::error::{invalid, Error, Result};
use crate::models::PROPENSITY_FLOOR;
use crate::policy::{check_bins, BinPolicy};
use crate::types::{LoggedDataset, Metric};

/// Where behavior bin probabilities come from.
#[derive(Clone, Copy)]
pub enum BehaviorSource<'a> {
    /// Logged propensities, which must be bin probabilities.
    Logged,
    Model(&'a dyn BinPolicy),
    /// Logged propensity when the record has one, the model otherwise.
    LoggedOrModel(&'a dyn BinPolicy),
}

#[derive(Clone, Copy)]
pub struct DiscreteOpeInput<'a> {
    pub dataset: &'a LoggedDataset,
    pub binning: &'a BinningScheme,
    pub behavior: BehaviorSource<'a>,
    pub evaluation: &'a dyn BinPolicy,
    pub reward_model: Option<&'a RewardPredictions>,
    /// Weights are capped at this value when set.
    pub clip_lambda: Option<f64>,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSummary {
    /// Clipped importance weights, one per record.
    pub weights: Vec<f64>,
    pub clipped_count: usize,
    pub logged_propensity_count: usize,
}

impl WeightSummary {
    pub fn clipped_fraction(&self) -> f64 {
        self.clipped_count as f64 / self.weights.len() as f64
    }
}

struct Prepared {
    weights: WeightSummary,
    rewards: Vec<f64>,
    // Evaluation bin distribution of every record.
    evaluation: Vec<Vec<f64>>,
    bins: Vec<usize>,
}

fn validate(input: &DiscreteOpeInput<'_>) -> Result<()> {
    check_bins(input.evaluation, input.binning)?;
    if let BehaviorSource::Model(m) | BehaviorSource::LoggedOrModel(m) = input.behavior {
        check_bins(m, input.binning)?;
    }
    if let Some(l) = input.clip_lambda {
        if !(l > 0.0) {
            return Err(invalid(format!("clipping threshold must be positive, got {l}")));
        }
    }
    if let Some(q) = input.reward_model {
        q.check_shape(input.dataset.len(), input.binning.num_bins())?;
    }
    Ok(())
}

fn behavior_probability(input: &DiscreteOpeInput<'_>, i: usize, bin: usize) -> Result<(f64, bool)> {
    let record = &input.dataset.records()[i];
    let from_model = |m: &dyn BinPolicy| m.bin_probabilities(record.context.features())[bin];
    Ok(match (input.behavior, record.logged_propensity) {
        (BehaviorSource::Logged | BehaviorSource::LoggedOrModel(_), Some(p)) => (p, true),
        (BehaviorSource::Logged, None) => {
            return Err(invalid(format!("record {i} has no logged propensity")));
        }
        (BehaviorSource::Model(m), _) | (BehaviorSource::LoggedOrModel(m), None) => (from_model(m), false),
    })
}

fn prepare(input: &DiscreteOpeInput<'_>) -> Result<Prepared> {
    validate(input)?;
    let records = input.dataset.records();
    let lambda = input.clip_lambda.unwrap_or(f64::INFINITY);
    let mut weights = Vec::with_capacity(records.len());
    let mut evaluation = Vec::with_capacity(records.len());
    let mut bins = Vec::with_capacity(records.len());
    let (mut clipped_count, mut logged_propensity_count) = (0, 0);
    for (i, r) in records.iter().enumerate() {
        let bin = input.binning.bin_of(r.action);
        let pe = input.evaluation.bin_probabilities(r.context.features());
        let (pb, logged) = behavior_probability(input, i, bin)?;
        logged_propensity_count += usize::from(logged);
        let w = pe[bin] / pb.max(PROPENSITY_FLOOR);
        if w > lambda {
            clipped_count += 1;
        }
        weights.push(w.min(lambda));
        evaluation.push(pe);
        bins.push(bin);
    }
    Ok(Prepared {
        weights: WeightSummary { weights, clipped_count, logged_propensity_count },
        rewards: input.dataset.metric_values(input.metric),
        evaluation,
        bins,
    })
}

/// Clipped importance weights `min(lambda, pi_e(bin|x) / pi_b(bin|x))`.
pub fn importance_weights(input: &DiscreteOpeInput<'_>) -> Result<WeightSummary> {
    Ok(prepare(input)?.weights)
}

fn report(kind: EstimatorKind, input: &DiscreteOpeInput<'_>, p: &Prepared, value: f64, terms: &[f64], ess: f64) -> EstimateReport {
    EstimateReport {
        estimator_name: kind.name().to_string(),
        metric: input.metric.name().to_string(),
        value,
        std_error: terms_std_error(terms),
        effective_sample_size: ess,
        clipped_fraction: p.weights.clipped_fraction(),
        n: p.rewards.len(),
        logged_propensity_count: p.weights.logged_propensity_count,
    }
}

// `q(x_i, pi_e)` and `q(x_i, a_i)` for every record.
fn model_terms(input: &DiscreteOpeInput<'_>, p: &Prepared) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = input.reward_model.ok_or(Error::MissingRewardModel)?;
    let expected = p
        .evaluation
        .iter()
        .enumerate()
        .map(|(i, pe)| pe.iter().enumerate().map(|(b, pb)| q.get(i, b) * pb).sum())
        .collect();
    let logged = p.bins.iter().enumerate().map(|(i, &b)| q.get(i, b)).collect();
    Ok((expected, logged))
}

fn weight_sum(p: &Prepared) -> Result<f64> {
    let s: f64 = p.weights.weights.iter().sum();
    if !(s > 0.0) {
        return Err(Error::AllWeightsZero);
    }
    Ok(s)
}

fn estimate_prepared(kind: EstimatorKind, input: &DiscreteOpeInput<'_>, p: &Prepared) -> Result<Estimate> {
    let w = &p.weights.weights;
    let r = &p.rewards;
    let n = r.len() as f64;
    let ess = effective_sample_size(w);
    let (value, terms, ess) = match kind {
        EstimatorKind::Ipw => {
            let terms: Vec<f64> = w.iter().zip(r).map(|(w, r)| w * r).collect();
            (terms_mean(&terms), terms, ess)
        }
        EstimatorKind::Snipw => {
            let sum_w = weight_sum(p)?;
            let sum_wr: f64 = w.iter().zip(r).map(|(w, r)| w * r).sum();
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // The ratio is a convex combination of rewards; the clamp only absorbs rounding.
            let v = (sum_wr / sum_w).clamp(lo, hi);
            let mean_w = sum_w / n;
            let terms = w.iter().zip(r).map(|(w, r)| v + w * (r - v) / mean_w).collect();
            (v, terms, ess)
        }
        EstimatorKind::Dm => {
            let (expected, _) = model_terms(input, p)?;
            (terms_mean(&expected), expected, n)
        }
        EstimatorKind::Dr => {
            let (expected, logged) = model_terms(input, p)?;
            let terms: Vec<f64> = (0..r.len()).map(|i| expected[i] + w[i] * (r[i] - logged[i])).collect();
            (terms_mean(&terms), terms, ess)
        }
        EstimatorKind::Sndr => {
            let (expected, logged) = model_terms(input, p)?;
            let mean_w = weight_sum(p)? / n;
            let direct: Vec<f64> = (0..r.len()).map(|i| expected[i] + w[i] * (r[i] - logged[i]) / mean_w).collect();
            let v = terms_mean(&direct);
            // Delta-method terms for the self-normalized residual correction.
            let correction: f64 = (0..r.len()).map(|i| w[i] * (r[i] - logged[i])).sum::<f64>() / n / mean_w;
            let terms = (0..r.len())
                .map(|i| expected[i] + (w[i] * (r[i] - logged[i]) - correction * w[i]) / mean_w + correction)
                .collect();
            (v, terms, ess)
        }
        EstimatorKind::Continuous => return Err(invalid("continuous estimator needs a continuous input")),
    };
    Ok(Estimate { report: report(kind, input, p, value, &terms, ess), terms })
}

/// Runs several discrete estimators over one shared weight computation.
pub fn estimate_discrete(input: &DiscreteOpeInput<'_>, kinds: &[EstimatorKind]) -> Vec<Result<Estimate>> {
    match prepare(input) {
        Ok(p) => kinds.iter().map(|&k| estimate_prepared(k, input, &p)).collect(),
        Err(e) => kinds.iter().map(|_| Err(e.clone())).collect(),
    }
}

fn single(kind: EstimatorKind, input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    let p = prepare(input)?;
    Ok(estimate_prepared(kind, input, &p)?.report)
}

/// `(1/n) sum w_i r_i`.
pub fn ipw(input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    single(EstimatorKind::Ipw, input)
}

/// `sum w_i r_i / sum w_i`.
pub fn snipw(input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    single(EstimatorKind::Snipw, input)
}

/// `(1/n) sum_i sum_b q(x_i, b) pi_e(b|x_i)`.
pub fn dm(input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    single(EstimatorKind::Dm, input)
}

/// `(1/n) sum [q(x_i, pi_e) + w_i (r_i - q(x_i, a_i))]`.
pub fn dr(input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    single(EstimatorKind::Dr, input)
}

/// Doubly robust with weights normalized by their mean.
pub fn sndr(input: &DiscreteOpeInput<'_>) -> Result<EstimateReport> {
    single(EstimatorKind::Sndr, input)
}
