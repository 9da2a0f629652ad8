use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate_history, CarpModel, CauseTally, ModelParams, NetworkState};
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::mle::{fit, BoundaryFlag, FitConfig};
use crate::risk_model::HistoryMatrix;
use crate::rng::{child_seed, stream};
use crate::synthetic::synthetic_history;

/// Largest relative coordinate deviation `max_i |v1_i / v2_i - 1|`.
pub fn ks_distance(v1: &[f64], v2: &[f64]) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(CarpError::DimensionMismatch {
            expected: v2.len(),
            actual: v1.len(),
        });
    }
    if v2.contains(&0.0) {
        return Err(CarpError::InvalidParameter(
            "reference vector has a zero entry".to_string(),
        ));
    }
    Ok(v1
        .iter()
        .zip(v2)
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Shares of activations attributed to the internal and external
/// processes. Joint firings count half to each, so `a + b = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionFractions {
    pub a: f64,
    pub b: f64,
    /// Share of activations where both processes fired.
    pub both_fraction: f64,
    pub activations: u64,
}

impl AttributionFractions {
    /// `None` when the tally holds no activations.
    pub fn from_tally(tally: &CauseTally) -> Option<Self> {
        let total = tally.activations();
        if total == 0 {
            return None;
        }
        let t = total as f64;
        let half = 0.5 * tally.both as f64;
        Some(AttributionFractions {
            a: (tally.internal as f64 + half) / t,
            b: (tally.external as f64 + half) / t,
            both_fraction: tally.both as f64 / t,
            activations: total,
        })
    }

    /// Effective activation exponent `a alpha + b beta`.
    pub fn activation_param(&self, params: &ModelParams) -> f64 {
        self.a * params.alpha + self.b * params.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub replicates: usize,
    pub seed: u64,
    pub fit: FitConfig,
}

impl RecoveryConfig {
    pub fn new(seed: u64) -> Self {
        RecoveryConfig {
            replicates: 125,
            seed,
            fit: FitConfig::default(),
        }
    }
}

/// A third of the replicates, rounded up, are discarded as outliers.
fn discard_count(n: usize) -> usize {
    n.div_ceil(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub flags: Vec<BoundaryFlag>,
    pub attribution: AttributionFractions,
    /// `a alpha + b beta` with this replicate's own `a, b`.
    pub activation_param: f64,
    /// Same with the ground-truth `a, b`.
    pub activation_param_shared: f64,
    pub recovery_param: f64,
    pub ks: f64,
    pub ks_shared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedBounds {
    /// Replicate indices kept after discarding the largest KS distances.
    pub retained: Vec<usize>,
    pub activation_bound: f64,
    pub recovery_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ground_truth: ModelParams,
    pub ground_truth_attribution: AttributionFractions,
    /// True when the attribution was pooled over replicate simulations
    /// rather than supplied by the caller.
    pub attribution_pooled: bool,
    /// `(a alpha + b beta, gamma)` at the ground truth.
    pub ground_truth_vector: [f64; 2],
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
    /// Filtering and bounds with each replicate's own attribution.
    pub own: RetainedBounds,
    /// Filtering and bounds with the ground-truth attribution.
    pub shared: RetainedBounds,
}

fn retained_bounds(
    replicates: &[ReplicateResult],
    truth: [f64; 2],
    ks: impl Fn(&ReplicateResult) -> f64,
    act: impl Fn(&ReplicateResult) -> f64,
) -> RetainedBounds {
    let mut order: Vec<&ReplicateResult> = replicates.iter().collect();
    order.sort_by(|x, y| ks(x).total_cmp(&ks(y)).then(x.index.cmp(&y.index)));
    let keep = replicates.len() - discard_count(replicates.len());
    let kept = &order[..keep];
    let rel = |v: f64, t: f64| (v / t - 1.0).abs();
    RetainedBounds {
        retained: kept.iter().map(|r| r.index).collect(),
        activation_bound: kept.iter().map(|r| rel(act(r), truth[0])).fold(0.0, f64::max),
        recovery_bound: kept.iter().map(|r| rel(r.recovery_param, truth[1])).fold(0.0, f64::max),
    }
}

/// Parametric bootstrap of the fit.
///
/// Each replicate simulates a history of the same length as `history`
/// from its first month under `ground_truth`, refits it and compares
/// `(a alpha + b beta, gamma)` against the ground truth. When
/// `truth_attribution` is `None` the ground-truth `a, b` are pooled over
/// all replicate simulations. Replicates whose simulation has no
/// activation or whose fit fails are recorded as failures and excluded.
pub fn recovery_experiment(
    graph: &Graph,
    likelihoods: &[f64],
    history: &HistoryMatrix,
    ground_truth: &ModelParams,
    truth_attribution: Option<AttributionFractions>,
    cfg: &RecoveryConfig,
) -> Result<ValidationReport> {
    if cfg.replicates == 0 {
        return Err(CarpError::InvalidParameter("at least one replicate required".to_string()));
    }
    let model = CarpModel::new(graph.clone(), likelihoods, *ground_truth)?;
    let initial = NetworkState::from_active(history.column(0));
    let months = history.month_count();
    let start = history.months()[0];

    type Outcome = (CauseTally, std::result::Result<(ModelParams, f64, Vec<BoundaryFlag>), String>);
    let outcomes: Vec<Outcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|k| -> Result<Outcome> {
            let mut rng = stream(cfg.seed, k as u64);
            let run = simulate_history(&model, &initial, history.risk_ids().to_vec(), start, months, &mut rng)?;
            let fitted = match fit(&run.history, graph, likelihoods, &cfg.fit) {
                Ok(f) => Ok((f.params, f.log_likelihood, f.flags)),
                Err(e) => Err(e.to_string()),
            };
            Ok((run.tally, fitted))
        })
        .collect::<Result<_>>()?;

    let (truth_attr, pooled) = match truth_attribution {
        Some(a) => (a, false),
        None => {
            let mut all = CauseTally::default();
            outcomes.iter().for_each(|(t, _)| all.merge(t));
            let a = AttributionFractions::from_tally(&all).ok_or_else(|| CarpError::ImpossibleData {
                risk: 0,
                step: 0,
                detail: "no activations in any replicate simulation".to_string(),
            })?;
            (a, true)
        }
    };
    let truth = [truth_attr.activation_param(ground_truth), ground_truth.gamma];

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (index, (tally, fitted)) in outcomes.into_iter().enumerate() {
        let attribution = match AttributionFractions::from_tally(&tally) {
            Some(a) => a,
            None => {
                failures.push(ReplicateFailure {
                    index,
                    reason: "simulated history has no activations".to_string(),
                });
                continue;
            }
        };
        let (params, log_likelihood, flags) = match fitted {
            Ok(v) => v,
            Err(reason) => {
                failures.push(ReplicateFailure { index, reason });
                continue;
            }
        };
        let activation_param = attribution.activation_param(&params);
        let activation_param_shared = truth_attr.activation_param(&params);
        replicates.push(ReplicateResult {
            index,
            params,
            log_likelihood,
            flags,
            attribution,
            activation_param,
            activation_param_shared,
            recovery_param: params.gamma,
            ks: ks_distance(&[activation_param, params.gamma], &truth)?,
            ks_shared: ks_distance(&[activation_param_shared, params.gamma], &truth)?,
        });
    }
    if replicates.is_empty() {
        return Err(CarpError::NonConvergence {
            what: "every recovery replicate".to_string(),
            iterations: cfg.replicates,
        });
    }
    let own = retained_bounds(&replicates, truth, |r| r.ks, |r| r.activation_param);
    let shared = retained_bounds(&replicates, truth, |r| r.ks_shared, |r| r.activation_param_shared);
    Ok(ValidationReport {
        ground_truth: *ground_truth,
        ground_truth_attribution: truth_attr,
        attribution_pooled: pooled,
        ground_truth_vector: truth,
        replicates,
        failures,
        own,
        shared,
    })
}

/// Median recovery error for synthetic histories of each length.
///
/// Every replicate is its own ground truth: a history of `T` months is
/// simulated after a burn-in from the all-passive state, refitted, and its
/// error is the KS distance between the fitted and generating
/// `(a alpha + b beta, gamma)` under the replicate's own attribution.
#[allow(clippy::too_many_arguments)]
pub fn recovery_error_by_length(
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
    lengths: &[usize],
    replicates: usize,
    burn_in: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<Vec<(usize, f64)>> {
    if replicates == 0 {
        return Err(CarpError::InvalidParameter("at least one replicate required".to_string()));
    }
    let model = CarpModel::new(graph.clone(), likelihoods, *params)?;
    let ids: Vec<String> = (0..graph.node_count()).map(|i| format!("r{i}")).collect();
    let start = crate::risk_model::Month::new(2000, 1)?;
    lengths
        .iter()
        .map(|&t| {
            let mut errors: Vec<f64> = (0..replicates)
                .into_par_iter()
                .map(|k| -> Result<f64> {
                    let s = child_seed(child_seed(seed, t as u64), k as u64);
                    let run = synthetic_history(&model, ids.clone(), start, t, burn_in, s)?;
                    let attr = AttributionFractions::from_tally(&run.tally).ok_or_else(|| {
                        CarpError::ImpossibleData {
                            risk: 0,
                            step: 0,
                            detail: "synthetic history without activations".to_string(),
                        }
                    })?;
                    let f = fit(&run.history, graph, likelihoods, fit_cfg)?;
                    ks_distance(
                        &[attr.activation_param(&f.params), f.params.gamma],
                        &[attr.activation_param(params), params.gamma],
                    )
                })
                .collect::<Result<_>>()?;
            errors.sort_by(f64::total_cmp);
            let n = errors.len();
            let median = if n % 2 == 1 {
                errors[n / 2]
            } else {
                0.5 * (errors[n / 2 - 1] + errors[n / 2])
            };
            Ok((t, median))
        })
        .collect()
}
