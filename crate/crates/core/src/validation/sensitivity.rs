use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::ModelParams;
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::meanfield::{solve_steady_state, MeanFieldConfig};
use crate::mle::{fit, FitConfig};
use crate::risk_model::HistoryMatrix;
use crate::rng::stream;

/// Steady states under the four perturbation experiments.
///
/// Single-target experiments store the target's own `p̂_i` after perturbing
/// only risk `i`; all-risk experiments store the whole perturbed vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub fraction: f64,
    pub baseline_params: ModelParams,
    pub baseline: Vec<f64>,
    pub single_likelihood: Vec<f64>,
    pub single_history: Vec<f64>,
    pub single_history_params: Vec<ModelParams>,
    pub all_likelihood: Vec<f64>,
    pub all_history: Vec<f64>,
    pub all_history_params: ModelParams,
    /// Active months removed per risk by the history cut.
    pub removed_months: Vec<usize>,
}

/// Deactivates `round(fraction · active months)` uniformly chosen active
/// months of each risk in `targets`. Risk `i` draws from stream
/// `(seed, i)`, so cutting several risks at once applies exactly the
/// single-risk cuts together.
pub fn reduce_history(history: &HistoryMatrix, targets: &[usize], fraction: f64, seed: u64) -> HistoryMatrix {
    let mut out = history.clone();
    for &i in targets {
        let active: Vec<usize> = (0..history.month_count()).filter(|&t| history.state(i, t)).collect();
        let k = (fraction * active.len() as f64).round() as usize;
        let mut rng = stream(seed, i as u64);
        for pick in sample(&mut rng, active.len(), k.min(active.len())) {
            out.set_state(i, active[pick], false);
        }
    }
    out
}

fn removed(history: &HistoryMatrix, i: usize, fraction: f64) -> usize {
    (fraction * history.active_months(i) as f64).round() as usize
}

/// Runs the four sensitivity experiments around `params`, which should be
/// the fit of `history`: cutting one risk's likelihood, cutting one risk's
/// historical activity and refitting, cutting every likelihood, and cutting
/// every risk's activity and refitting. A history left unchanged by the cut
/// reuses `params` instead of refitting.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_suite(
    graph: &Graph,
    likelihoods: &[f64],
    history: &HistoryMatrix,
    params: &ModelParams,
    fraction: f64,
    seed: u64,
    fit_cfg: &FitConfig,
    mf: &MeanFieldConfig,
) -> Result<SensitivityReport> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CarpError::InvalidParameter(format!(
            "perturbation {fraction} outside [0, 1)"
        )));
    }
    let n = graph.node_count();
    let solve = |l: &[f64], p: &ModelParams| solve_steady_state(l, p, graph, mf).map(|s| s.p_hat);
    let refit = |h: &HistoryMatrix, changed: bool| -> Result<ModelParams> {
        if changed {
            Ok(fit(h, graph, likelihoods, fit_cfg)?.params)
        } else {
            Ok(*params)
        }
    };
    let baseline = solve(likelihoods, params)?;
    let scale = 1.0 - fraction;
    let removed_months: Vec<usize> = (0..n).map(|i| removed(history, i, fraction)).collect();

    let per_target: Vec<(f64, f64, ModelParams)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, ModelParams)> {
            let mut l = likelihoods.to_vec();
            l[i] *= scale;
            let by_likelihood = solve(&l, params)?[i];
            let h = reduce_history(history, &[i], fraction, seed);
            let p = refit(&h, removed_months[i] > 0)?;
            let by_history = solve(likelihoods, &p)?[i];
            Ok((by_likelihood, by_history, p))
        })
        .collect::<Result<_>>()?;

    let all_l: Vec<f64> = likelihoods.iter().map(|l| l * scale).collect();
    let all_likelihood = solve(&all_l, params)?;
    let targets: Vec<usize> = (0..n).collect();
    let h_all = reduce_history(history, &targets, fraction, seed);
    let all_history_params = refit(&h_all, removed_months.iter().any(|&k| k > 0))?;
    let all_history = solve(likelihoods, &all_history_params)?;

    Ok(SensitivityReport {
        fraction,
        baseline_params: *params,
        baseline,
        single_likelihood: per_target.iter().map(|t| t.0).collect(),
        single_history: per_target.iter().map(|t| t.1).collect(),
        single_history_params: per_target.iter().map(|t| t.2).collect(),
        all_likelihood,
        all_history,
        all_history_params,
        removed_months,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{build_fixture, NetworkSpec};

    fn fixture() -> crate::synthetic::Fixture {
        let spec = NetworkSpec {
            risks: 10,
            density: 0.3,
            ..NetworkSpec::like_2013()
        };
        build_fixture(&spec, ModelParams::new(0.1, 0.05, 1.2).unwrap(), 60, 17).unwrap()
    }

    #[test]
    fn reduction_removes_rounded_tenth() {
        let f = fixture();
        let h = &f.run.history;
        let cut = reduce_history(h, &[0, 1, 2], 0.1, 4);
        for i in 0..h.risk_count() {
            let expect = if i < 3 { h.active_months(i) - removed(h, i, 0.1) } else { h.active_months(i) };
            assert_eq!(cut.active_months(i), expect);
            // only active cells are switched off
            for t in 0..h.month_count() {
                assert!(!cut.state(i, t) || h.state(i, t));
            }
        }
        let single = reduce_history(h, &[1], 0.1, 4);
        assert_eq!(single.row(1), cut.row(1));
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let f = fixture();
        let l = f.network.likelihoods();
        let p = fit(&f.run.history, &f.network.graph, &l, &FitConfig::default()).unwrap().params;
        let r = sensitivity_suite(&f.network.graph, &l, &f.run.history, &p, 0.0, 1, &FitConfig::default(), &MeanFieldConfig::default())
            .unwrap();
        assert_eq!(r.single_likelihood, r.baseline);
        assert_eq!(r.single_history, r.baseline);
        assert_eq!(r.all_likelihood, r.baseline);
        assert_eq!(r.all_history, r.baseline);
    }

    #[test]
    fn all_likelihood_cut_lowers_every_risk() {
        let f = fixture();
        let l = f.network.likelihoods();
        let r = sensitivity_suite(&f.network.graph, &l, &f.run.history, &f.params, 0.1, 1, &FitConfig::default(), &MeanFieldConfig::default())
            .unwrap();
        for i in 0..l.len() {
            assert!(r.all_likelihood[i] <= r.baseline[i]);
            assert!(r.single_likelihood[i] <= r.baseline[i]);
        }
    }
}
