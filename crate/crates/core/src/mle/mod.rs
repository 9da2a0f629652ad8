//! Maximum likelihood fitting of `(alpha, beta, gamma)` to an observed
//! history.
//!
//! The log-likelihood sums the log-probability of every observed
//! transition `s_i(t) → s_i(t+1)`. Because all per-risk probabilities are
//! powers of `q_i = 1 - L_i`, a history reduces to a handful of counts per
//! risk: recoveries, continuations, and for each number `k` of active
//! neighbours the passive months that did or did not activate. Evaluating
//! the likelihood is then `O(risks × distinct k)`.

pub mod nelder_mead;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::ModelParams;
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::risk_model::HistoryMatrix;
use nelder_mead::{compass_polish, minimize, NelderMeadOptions};

fn check_inputs(history: &HistoryMatrix, graph: &Graph, likelihoods: &[f64]) -> Result<()> {
    let r = history.risk_count();
    if graph.node_count() != r {
        return Err(CarpError::DimensionMismatch {
            expected: r,
            actual: graph.node_count(),
        });
    }
    if likelihoods.len() != r {
        return Err(CarpError::DimensionMismatch {
            expected: r,
            actual: likelihoods.len(),
        });
    }
    if let Some(&l) = likelihoods.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(CarpError::InvalidLikelihood {
            id: String::new(),
            reason: format!("normalized likelihood {l} outside (0, 1)"),
        });
    }
    if history.month_count() < 2 {
        return Err(CarpError::HistoryTooShort(history.month_count()));
    }
    Ok(())
}

/// `ln(1 - exp(x))` for `x <= 0`.
#[inline]
fn ln_one_minus_exp(x: f64) -> f64 {
    (-x.exp_m1()).ln()
}

/// Log-probability of the transition of risk `risk` from month `t` to
/// `t + 1` (zero-based, `t < T - 1`). Neighbours are read at month `t`.
pub fn transition_log_prob(
    risk: usize,
    t: usize,
    history: &HistoryMatrix,
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    check_inputs(history, graph, likelihoods)?;
    params.validate()?;
    if risk >= history.risk_count() || t + 1 >= history.month_count() {
        return Err(CarpError::InvalidParameter(format!(
            "transition ({risk}, {t}) outside history"
        )));
    }
    let log_q = (-likelihoods[risk]).ln_1p();
    let from = history.state(risk, t);
    let to = history.state(risk, t + 1);
    let impossible = |detail: &str| CarpError::ImpossibleData {
        risk,
        step: t,
        detail: detail.to_string(),
    };
    let lp = match (from, to) {
        (false, stay) => {
            let k = graph
                .neighbors(risk)
                .iter()
                .filter(|&&j| history.state(j, t))
                .count();
            let exponent = params.alpha + params.beta * k as f64;
            if stay {
                let v = ln_one_minus_exp(exponent * log_q);
                if v == f64::NEG_INFINITY {
                    return Err(impossible("activation observed with zero activation probability"));
                }
                v
            } else {
                exponent * log_q
            }
        }
        (true, true) => {
            let v = ln_one_minus_exp(params.gamma * log_q);
            if v == f64::NEG_INFINITY {
                return Err(impossible("continuation observed with certain recovery"));
            }
            v
        }
        (true, false) => params.gamma * log_q,
    };
    Ok(lp)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct PassiveCounts {
    activations: u64,
    stays: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RiskCounts {
    log_q: f64,
    recoveries: u64,
    continuations: u64,
    /// Keyed by number of active neighbours.
    passive: Vec<(u32, PassiveCounts)>,
}

/// Sufficient statistics of a history for the CARP likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSurface {
    risks: Vec<RiskCounts>,
}

impl LikelihoodSurface {
    pub fn new(history: &HistoryMatrix, graph: &Graph, likelihoods: &[f64]) -> Result<Self> {
        check_inputs(history, graph, likelihoods)?;
        let r = history.risk_count();
        let months = history.month_count();
        let mut risks = Vec::with_capacity(r);
        #[allow(clippy::needless_range_loop)]
        for i in 0..r {
            let mut passive: BTreeMap<u32, PassiveCounts> = BTreeMap::new();
            let mut recoveries = 0;
            let mut continuations = 0;
            for t in 0..months - 1 {
                let to = history.state(i, t + 1);
                if history.state(i, t) {
                    if to {
                        continuations += 1;
                    } else {
                        recoveries += 1;
                    }
                } else {
                    let k = graph
                        .neighbors(i)
                        .iter()
                        .filter(|&&j| history.state(j, t))
                        .count() as u32;
                    let c = passive.entry(k).or_default();
                    if to {
                        c.activations += 1;
                    } else {
                        c.stays += 1;
                    }
                }
            }
            risks.push(RiskCounts {
                log_q: (-likelihoods[i]).ln_1p(),
                recoveries,
                continuations,
                passive: passive.into_iter().collect(),
            });
        }
        Ok(LikelihoodSurface { risks })
    }

    /// Log-likelihood; `-inf` when an observed transition is impossible.
    pub fn evaluate(&self, params: &ModelParams) -> f64 {
        let mut total = 0.0;
        for r in &self.risks {
            for (k, c) in &r.passive {
                let x = (params.alpha + params.beta * f64::from(*k)) * r.log_q;
                if c.stays > 0 {
                    total += c.stays as f64 * x;
                }
                if c.activations > 0 {
                    total += c.activations as f64 * ln_one_minus_exp(x);
                }
            }
            let x = params.gamma * r.log_q;
            if r.recoveries > 0 {
                total += r.recoveries as f64 * x;
            }
            if r.continuations > 0 {
                total += r.continuations as f64 * ln_one_minus_exp(x);
            }
        }
        total
    }

    pub fn activations(&self) -> u64 {
        self.risks
            .iter()
            .flat_map(|r| r.passive.iter().map(|(_, c)| c.activations))
            .sum()
    }

    pub fn recoveries(&self) -> u64 {
        self.risks.iter().map(|r| r.recoveries).sum()
    }

    fn passive_transitions(&self) -> u64 {
        self.risks
            .iter()
            .flat_map(|r| r.passive.iter().map(|(_, c)| c.activations + c.stays))
            .sum()
    }

    fn passive_transitions_with_active_neighbor(&self) -> u64 {
        self.risks
            .iter()
            .flat_map(|r| {
                r.passive
                    .iter()
                    .filter(|(k, _)| *k > 0)
                    .map(|(_, c)| c.activations + c.stays)
            })
            .sum()
    }

    fn active_transitions(&self) -> u64 {
        self.risks
            .iter()
            .map(|r| r.recoveries + r.continuations)
            .sum()
    }
}

/// Sum of per-transition log-probabilities over the whole history.
pub fn log_likelihood(
    history: &HistoryMatrix,
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    params.validate()?;
    let surface = LikelihoodSurface::new(history, graph, likelihoods)?;
    let value = surface.evaluate(params);
    if value == f64::NEG_INFINITY {
        // locate the offending cell for the error message
        for t in 0..history.month_count() - 1 {
            for i in 0..history.risk_count() {
                transition_log_prob(i, t, history, graph, likelihoods, params)?;
            }
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFlag {
    AlphaAtLowerBound,
    AlphaAtUpperBound,
    BetaAtLowerBound,
    BetaAtUpperBound,
    GammaAtLowerBound,
    GammaAtUpperBound,
    /// No passive months: alpha does not enter the likelihood.
    AlphaUnidentified,
    /// No passive month with an active neighbour: the likelihood is flat in beta.
    BetaUnidentified,
    /// No active months: gamma does not enter the likelihood.
    GammaUnidentified,
    NoActivations,
    NoRecoveries,
    /// Beta held at a caller-supplied value.
    BetaFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Grid points per free axis, log-spaced over `[grid_min, grid_max]`.
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    /// Simplex searches started from the best grid cells.
    pub top_k: usize,
    /// Upper box bound per parameter; lower bounds are zero.
    pub upper: [f64; 3],
    pub ftol: f64,
    pub max_iterations: usize,
    pub max_restarts: usize,
    /// Holds beta at this value (e.g. zero for the independent model).
    pub fixed_beta: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            grid_points: 6,
            grid_min: 1e-4,
            grid_max: 10.0,
            top_k: 5,
            upper: [10.0; 3],
            ftol: 1e-8,
            max_iterations: 5_000,
            max_restarts: 50,
            fixed_beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub evaluations: usize,
    pub flags: Vec<BoundaryFlag>,
}

impl FitResult {
    pub fn has_flag(&self, flag: BoundaryFlag) -> bool {
        self.flags.contains(&flag)
    }
}

const BOUND_SLACK: f64 = 1e-6;
const POLISH_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Deterministic multi-start maximum likelihood fit.
///
/// A coarse log-spaced grid ranks starting points; the best `top_k` seed
/// restarted simplex searches; the winner is polished by a compass search.
/// Parameters the data cannot inform are held at zero and flagged.
pub fn fit(
    history: &HistoryMatrix,
    graph: &Graph,
    likelihoods: &[f64],
    config: &FitConfig,
) -> Result<FitResult> {
    let surface = LikelihoodSurface::new(history, graph, likelihoods)?;
    fit_surface(&surface, config)
}

pub fn fit_surface(surface: &LikelihoodSurface, config: &FitConfig) -> Result<FitResult> {
    if config.grid_points < 2 || config.top_k < 1 {
        return Err(CarpError::InvalidParameter(
            "grid needs at least two points per axis and one start".to_string(),
        ));
    }
    if !(config.grid_min > 0.0 && config.grid_max > config.grid_min && config.ftol > 0.0) {
        return Err(CarpError::InvalidParameter("invalid grid range or tolerance".to_string()));
    }

    let mut flags = Vec::new();
    if surface.activations() == 0 {
        flags.push(BoundaryFlag::NoActivations);
    }
    if surface.recoveries() == 0 {
        flags.push(BoundaryFlag::NoRecoveries);
    }
    let mut fixed: [Option<f64>; 3] = [None, config.fixed_beta, None];
    if surface.passive_transitions() == 0 {
        fixed[0] = Some(0.0);
        flags.push(BoundaryFlag::AlphaUnidentified);
    }
    if config.fixed_beta.is_some() {
        flags.push(BoundaryFlag::BetaFixed);
    } else if surface.passive_transitions_with_active_neighbor() == 0 {
        fixed[1] = Some(0.0);
        flags.push(BoundaryFlag::BetaUnidentified);
    }
    if surface.active_transitions() == 0 {
        fixed[2] = Some(0.0);
        flags.push(BoundaryFlag::GammaUnidentified);
    }
    let free: Vec<usize> = (0..3).filter(|&d| fixed[d].is_none()).collect();

    let full = |x: &[f64]| -> ModelParams {
        let mut v = [0.0; 3];
        let mut it = x.iter();
        for d in 0..3 {
            v[d] = fixed[d].unwrap_or_else(|| *it.next().expect("free coordinate"));
        }
        ModelParams::from_array(v)
    };
    let objective = |x: &[f64]| -> f64 { -surface.evaluate(&full(x)) };

    if free.is_empty() {
        let params = full(&[]);
        let ll = surface.evaluate(&params);
        return Ok(FitResult {
            params,
            log_likelihood: ll,
            converged: true,
            iterations: 0,
            restarts: 0,
            evaluations: 1,
            flags,
        });
    }

    let lower = vec![0.0; free.len()];
    let upper: Vec<f64> = free.iter().map(|&d| config.upper[d]).collect();
    let axis: Vec<f64> = (0..config.grid_points)
        .map(|k| {
            let f = k as f64 / (config.grid_points - 1) as f64;
            (config.grid_min.ln() + f * (config.grid_max.ln() - config.grid_min.ln())).exp()
        })
        .collect();

    let mut evaluations = 0;
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::new();
    let total = config.grid_points.pow(free.len() as u32);
    for code in 0..total {
        let mut c = code;
        let x: Vec<f64> = upper
            .iter()
            .map(|&hi| {
                let v = axis[c % config.grid_points].min(hi);
                c /= config.grid_points;
                v
            })
            .collect();
        let v = objective(&x);
        evaluations += 1;
        cells.push((v, x));
    }
    // stable: ties keep grid order
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let opts = NelderMeadOptions {
        ftol: config.ftol,
        max_iterations: config.max_iterations,
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut restarts_used = 0;
    let mut all_converged = true;
    for (_, start) in cells.iter().take(config.top_k) {
        let mut x = start.clone();
        let mut value = f64::INFINITY;
        let mut converged = false;
        for restart in 0..=config.max_restarts {
            let step: Vec<f64> = x.iter().map(|v| (0.5 * v).max(1e-3)).collect();
            let m = minimize(objective, &x, &step, &lower, &upper, &opts);
            iterations += m.iterations;
            evaluations += m.evaluations;
            let gain = value - m.value;
            let improved = m.value < value;
            if improved {
                x = m.x;
                value = m.value;
            }
            if m.converged && (!improved || gain < config.ftol) {
                converged = true;
                restarts_used += restart;
                break;
            }
        }
        if !converged {
            all_converged = false;
            continue;
        }
        if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
            best = Some((value, x));
        }
    }

    let (mut value, mut x) = best.ok_or_else(|| CarpError::NonConvergence {
        what: "likelihood maximization".to_string(),
        iterations,
    })?;
    evaluations += compass_polish(objective, &mut x, &mut value, &POLISH_STEPS, &lower, &upper);

    let params = full(&x);
    let names = [
        (BoundaryFlag::AlphaAtLowerBound, BoundaryFlag::AlphaAtUpperBound),
        (BoundaryFlag::BetaAtLowerBound, BoundaryFlag::BetaAtUpperBound),
        (BoundaryFlag::GammaAtLowerBound, BoundaryFlag::GammaAtUpperBound),
    ];
    for (k, &d) in free.iter().enumerate() {
        if x[k] <= BOUND_SLACK {
            flags.push(names[d].0);
        } else if x[k] >= upper[k] - BOUND_SLACK {
            flags.push(names[d].1);
        }
    }

    Ok(FitResult {
        params,
        log_likelihood: -value,
        converged: all_converged,
        iterations,
        restarts: restarts_used,
        evaluations,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk_model::Month;

    fn hist(rows: &[&[u8]]) -> HistoryMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|&s| s == 1).collect()).collect();
        let months = Month::new(2000, 1).unwrap().sequence(rows[0].len());
        HistoryMatrix::from_rows(ids, months, &rows).unwrap()
    }

    fn p(a: f64, b: f64, g: f64) -> ModelParams {
        ModelParams::new(a, b, g).unwrap()
    }

    #[test]
    fn passive_stay_without_neighbors() {
        // alpha = 1 with L = 0.1 gives p_int = 0.1
        let h = hist(&[&[0, 0]]);
        let lp = transition_log_prob(0, 0, &h, &Graph::edgeless(1), &[0.1], &p(1.0, 0.0, 1.0)).unwrap();
        assert!((lp - 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recovery_log_prob() {
        let h = hist(&[&[1, 0]]);
        let lp = transition_log_prob(0, 0, &h, &Graph::edgeless(1), &[0.5], &p(1.0, 1.0, 1.0)).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn activation_with_dead_processes_is_impossible() {
        let h = hist(&[&[0, 1]]);
        let err = transition_log_prob(0, 0, &h, &Graph::edgeless(1), &[0.5], &p(0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, CarpError::ImpossibleData { risk: 0, step: 0, .. }));
        let err = log_likelihood(&h, &Graph::edgeless(1), &[0.5], &p(0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, CarpError::ImpossibleData { .. }));
    }

    #[test]
    fn three_passive_risks_two_months() {
        let h = hist(&[&[0, 0], &[0, 0], &[0, 0]]);
        let ll = log_likelihood(&h, &Graph::edgeless(3), &[0.1; 3], &p(1.0, 0.0, 1.0)).unwrap();
        assert!((ll - 3.0 * 0.9f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn single_month_rejected() {
        let h = hist(&[&[0]]);
        assert!(matches!(
            log_likelihood(&h, &Graph::edgeless(1), &[0.1], &p(1.0, 0.0, 1.0)),
            Err(CarpError::HistoryTooShort(1))
        ));
    }

    #[test]
    fn two_risk_toy_history_matches_hand_product() {
        // r0: 0 1 1 ; r1: 1 0 0 ; single edge
        let h = hist(&[&[0, 1, 1], &[1, 0, 0]]);
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let l = [0.3, 0.6];
        let (a, b, c) = (0.4, 0.7, 1.3);
        let q0: f64 = 0.7;
        let q1: f64 = 0.4;
        // t=0: r0 passive with r1 active → activates; r1 recovers
        // t=1: r0 continues; r1 passive with r0 active → stays
        let expected = (1.0 - q0.powf(a + b)) * q1.powf(c) * (1.0 - q0.powf(c)) * q1.powf(a + b);
        let ll = log_likelihood(&h, &g, &l, &p(a, b, c)).unwrap();
        assert!((ll - expected.ln()).abs() < 1e-13, "{ll} vs {}", expected.ln());
    }

    #[test]
    fn all_passive_history_flags_lower_bound() {
        let h = hist(&[&[0; 24], &[0; 24], &[0; 24]]);
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let r = fit(&h, &g, &[0.3, 0.5, 0.7], &FitConfig::default()).unwrap();
        assert!(r.params.alpha < 1e-6);
        assert!(r.has_flag(BoundaryFlag::AlphaAtLowerBound));
        assert!(r.has_flag(BoundaryFlag::NoActivations));
        assert!(r.has_flag(BoundaryFlag::BetaUnidentified));
        assert!(r.has_flag(BoundaryFlag::GammaUnidentified));
    }

    #[test]
    fn edgeless_fit_reports_flat_beta() {
        let h = hist(&[&[0, 1, 1, 0, 0, 1, 0, 0], &[1, 1, 0, 0, 0, 0, 1, 0]]);
        let r = fit(&h, &Graph::edgeless(2), &[0.4, 0.5], &FitConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.has_flag(BoundaryFlag::BetaUnidentified));
        assert_eq!(r.params.beta, 0.0);
    }

    #[test]
    fn isolated_risk_fit_matches_closed_form() {
        // Single isolated risk: p_int* = activations / passive transitions,
        // p_rec* = recoveries / active transitions.
        let h = hist(&[&[0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 1, 1, 1, 0]]);
        let l = 0.35;
        let r = fit(&h, &Graph::edgeless(1), &[l], &FitConfig::default()).unwrap();
        // passive transitions: 0→0 ×4, 0→1 ×3 ; active: 1→1 ×3, 1→0 ×3
        let p_int: f64 = 3.0 / 7.0;
        let p_rec: f64 = 3.0 / 6.0;
        let q: f64 = 1.0 - l;
        let alpha = (1.0 - p_int).ln() / q.ln();
        let gamma = p_rec.ln() / q.ln();
        assert!((r.params.alpha - alpha).abs() < 2e-3, "{} vs {alpha}", r.params.alpha);
        assert!((r.params.gamma - gamma).abs() < 2e-3, "{} vs {gamma}", r.params.gamma);
    }
}
