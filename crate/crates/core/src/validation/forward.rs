use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{activity_statistics, simulate_runs, CarpModel, ModelParams, NetworkState, Trajectory};
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::risk_model::HistoryMatrix;

/// Activity of one parameter set over the forecast window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardStatistics {
    pub params: ModelParams,
    /// Active fraction over risks, months and runs.
    pub mean_active: f64,
    /// 0→1 flips per risk over the window, averaged over runs.
    pub mean_activations: f64,
    /// Active fraction per forecast month.
    pub monthly_active: Vec<f64>,
    /// Flips per risk into each forecast month.
    pub monthly_activations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub months: usize,
    pub runs: usize,
    pub ground_truth: ForwardStatistics,
    pub validation: Vec<ForwardStatistics>,
    /// Mean, highest and lowest validation `mean_active`.
    pub active_mean: f64,
    pub active_high: f64,
    pub active_low: f64,
    pub activation_mean: f64,
    pub activation_high: f64,
    pub activation_low: f64,
    /// Largest `|v / ground truth - 1|` over validation sets.
    pub worst_active_deviation: f64,
    pub worst_activation_deviation: f64,
}

#[allow(clippy::too_many_arguments)]
fn statistics(
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
    initial: &NetworkState,
    history: &HistoryMatrix,
    months: usize,
    runs: usize,
    seed: u64,
) -> Result<ForwardStatistics> {
    let model = CarpModel::new(graph.clone(), likelihoods, *params)?;
    let last = *history.months().last().expect("history has months");
    let sims = simulate_runs(&model, initial, history.risk_ids(), last, months + 1, runs, seed)?;
    let trajectories: Vec<Trajectory> = sims.iter().map(|s| s.trajectory()).collect();
    let stats = activity_statistics(&trajectories)?;
    let r = graph.node_count() as f64;
    let n = runs as f64;
    let monthly_active = (1..=months)
        .map(|t| {
            sims.iter()
                .map(|s| s.history.column(t).iter().filter(|&&a| a).count() as f64)
                .sum::<f64>()
                / (r * n)
        })
        .collect();
    let monthly_activations = (0..months)
        .map(|t| sims.iter().map(|s| s.activations_per_step[t] as f64).sum::<f64>() / (r * n))
        .collect();
    Ok(ForwardStatistics {
        params: *params,
        mean_active: stats.mean_active,
        mean_activations: stats.mean_activations,
        monthly_active,
        monthly_activations,
    })
}

/// Forecasts `months` months past the end of `history` under the ground
/// truth and each validation parameter set, starting from the last
/// observed month. All sets share the seed, so identical parameters give
/// identical statistics.
#[allow(clippy::too_many_arguments)]
pub fn forward_error_bounds(
    graph: &Graph,
    likelihoods: &[f64],
    history: &HistoryMatrix,
    ground_truth: &ModelParams,
    validation: &[ModelParams],
    months: usize,
    runs: usize,
    seed: u64,
) -> Result<ForwardReport> {
    if months == 0 || runs == 0 || validation.is_empty() {
        return Err(CarpError::InvalidParameter(
            "forecast needs months, runs and at least one validation set".to_string(),
        ));
    }
    let initial = NetworkState::from_active(history.column(history.month_count() - 1));
    let run = |p: &ModelParams| statistics(graph, likelihoods, p, &initial, history, months, runs, seed);
    let truth = run(ground_truth)?;
    let sets: Vec<ForwardStatistics> = validation.par_iter().map(run).collect::<Result<_>>()?;

    let summary = |f: fn(&ForwardStatistics) -> f64| {
        let vals: Vec<f64> = sets.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let high = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let low = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let t = f(&truth);
        let worst = if t == 0.0 {
            if vals.iter().all(|&v| v == 0.0) { 0.0 } else { f64::INFINITY }
        } else {
            vals.iter().map(|v| (v / t - 1.0).abs()).fold(0.0, f64::max)
        };
        (mean, high, low, worst)
    };
    let (active_mean, active_high, active_low, worst_active_deviation) = summary(|s| s.mean_active);
    let (activation_mean, activation_high, activation_low, worst_activation_deviation) =
        summary(|s| s.mean_activations);
    Ok(ForwardReport {
        months,
        runs,
        ground_truth: truth,
        validation: sets,
        active_mean,
        active_high,
        active_low,
        activation_mean,
        activation_high,
        activation_low,
        worst_active_deviation,
        worst_activation_deviation,
    })
}
