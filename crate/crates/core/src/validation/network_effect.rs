use serde::{Deserialize, Serialize};

use crate::engine::{mean_and_std, simulate_runs, CarpModel, ModelParams, NetworkState};
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::mle::{fit, FitConfig, FitResult};
use crate::risk_model::HistoryMatrix;

/// Per-step mean and sample standard deviation of simulated activation
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStatistics {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
}

/// Smallest `m` such that `mean ± m·std` covers every observed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMultiple {
    /// Largest finite per-step multiple.
    pub finite: f64,
    /// Steps with zero spread and an observed count off the mean.
    pub infinite_steps: Vec<usize>,
}

impl CoverageMultiple {
    pub fn value(&self) -> f64 {
        if self.infinite_steps.is_empty() {
            self.finite
        } else {
            f64::INFINITY
        }
    }
}

pub fn coverage_multiple(observed: &[usize], stats: &StepStatistics) -> CoverageMultiple {
    let mut finite: f64 = 0.0;
    let mut infinite_steps = Vec::new();
    for (t, &h) in observed.iter().enumerate() {
        let gap = (h as f64 - stats.mean[t]).abs();
        if gap == 0.0 {
            continue;
        }
        if stats.std_dev[t] == 0.0 {
            infinite_steps.push(t);
        } else {
            finite = finite.max(gap / stats.std_dev[t]);
        }
    }
    CoverageMultiple { finite, infinite_steps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEffectReport {
    /// Observed activations during each step.
    pub observed: Vec<usize>,
    pub network_params: ModelParams,
    pub independent_fit: FitResult,
    pub network: StepStatistics,
    pub independent: StepStatistics,
    pub m_network: CoverageMultiple,
    pub m_independent: CoverageMultiple,
    /// `m_network / m_independent`; `None` when either is infinite or the
    /// denominator is zero.
    pub ratio: Option<f64>,
}

fn step_statistics(model: &CarpModel, history: &HistoryMatrix, runs: usize, seed: u64) -> Result<StepStatistics> {
    let initial = NetworkState::from_active(history.column(0));
    let sims = simulate_runs(
        model,
        &initial,
        history.risk_ids(),
        history.months()[0],
        history.month_count(),
        runs,
        seed,
    )?;
    let steps = history.month_count() - 1;
    let (mean, std_dev) = (0..steps)
        .map(|t| mean_and_std(sims.iter().map(|s| s.activations_per_step[t] as f64), runs))
        .unzip();
    Ok(StepStatistics { mean, std_dev })
}

/// Compares how well the network model and the refitted independent model
/// (beta held at zero, no edges) cover the observed activation counts.
/// Both models are simulated from the first observed month with the same
/// seed.
pub fn network_effect_comparison(
    graph: &Graph,
    likelihoods: &[f64],
    history: &HistoryMatrix,
    params: &ModelParams,
    runs: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<NetworkEffectReport> {
    if runs == 0 {
        return Err(CarpError::InvalidParameter("at least one run required".to_string()));
    }
    let observed = history.activations_per_step();
    let independent_fit = fit(
        history,
        graph,
        likelihoods,
        &FitConfig {
            fixed_beta: Some(0.0),
            ..fit_cfg.clone()
        },
    )?;
    let net_model = CarpModel::new(graph.clone(), likelihoods, *params)?;
    let ind_model = CarpModel::new(
        Graph::edgeless(graph.node_count()),
        likelihoods,
        independent_fit.params,
    )?;
    let network = step_statistics(&net_model, history, runs, seed)?;
    let independent = step_statistics(&ind_model, history, runs, seed)?;
    let m_network = coverage_multiple(&observed, &network);
    let m_independent = coverage_multiple(&observed, &independent);
    let (a, b) = (m_network.value(), m_independent.value());
    let ratio = (a.is_finite() && b.is_finite() && b > 0.0).then(|| a / b);
    Ok(NetworkEffectReport {
        observed,
        network_params: *params,
        independent_fit,
        network,
        independent,
        m_network,
        m_independent,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{build_fixture, NetworkSpec};

    #[test]
    fn coverage_examples() {
        let s = StepStatistics {
            mean: vec![1.0, 2.0, 0.0],
            std_dev: vec![0.5, 1.0, 0.0],
        };
        let m = coverage_multiple(&[2, 2, 0], &s);
        assert_eq!(m.finite, 2.0);
        assert_eq!(m.value(), 2.0);
        let m = coverage_multiple(&[2, 2, 1], &s);
        assert_eq!(m.infinite_steps, vec![2]);
        assert_eq!(m.value(), f64::INFINITY);
    }

    #[test]
    fn edgeless_truth_gives_ratio_one() {
        let spec = NetworkSpec {
            risks: 10,
            density: 0.0,
            ..NetworkSpec::like_2013()
        };
        let f = build_fixture(&spec, ModelParams::new(0.1, 0.0, 1.5).unwrap(), 48, 3).unwrap();
        let l = f.network.likelihoods();
        let net_fit = fit(&f.run.history, &f.network.graph, &l, &FitConfig::default()).unwrap();
        let r = network_effect_comparison(&f.network.graph, &l, &f.run.history, &net_fit.params, 50, 9, &FitConfig::default())
            .unwrap();
        assert_eq!(r.m_network, r.m_independent);
        assert_eq!(r.ratio, Some(1.0));
    }
}
