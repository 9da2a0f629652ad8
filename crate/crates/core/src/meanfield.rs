//! Mean-field steady state.
//!
//! Treating neighbours as independent with active probabilities `p_j`, the
//! stationary active probability of risk `i` satisfies `p_i = Φ_i(p)` with
//!
//! ```text
//! F_i(p) = 1 - q_i^(alpha + beta Σ_{j∈N_i} p_j)
//! Φ_i(p) = F_i(p) / (F_i(p) + q_i^gamma)
//! ```
//!
//! `Φ` is monotone in `p`, so successive approximation from `p = 0` climbs
//! to the least fixed point and from `p = 1` descends to the greatest one.
//! The two limits are compared to detect multiple fixed points.

use serde::{Deserialize, Serialize};

use crate::engine::ModelParams;
use crate::error::{CarpError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Least fixed point, reached from `p = 0`.
    pub p_hat: Vec<f64>,
    /// `max_i |p̂_i - Φ_i(p̂)|`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every sweep from zero was componentwise non-decreasing.
    pub monotone: bool,
    /// Greatest fixed point, reached from `p = 1`.
    pub p_upper: Vec<f64>,
    /// `max_i |p̂_i - p_upper_i|`.
    pub discrepancy: f64,
    pub multiple_fixed_points: bool,
}

/// Precomputed per-risk constants of `Φ`.
struct MeanField<'a> {
    graph: &'a Graph,
    log_q: Vec<f64>,
    rec: Vec<f64>,
    params: ModelParams,
}

impl<'a> MeanField<'a> {
    fn new(graph: &'a Graph, likelihoods: &[f64], params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if likelihoods.len() != graph.node_count() {
            return Err(CarpError::DimensionMismatch {
                expected: graph.node_count(),
                actual: likelihoods.len(),
            });
        }
        // L = 0 is allowed here: it disables a risk.
        if let Some(&l) = likelihoods.iter().find(|&&l| !(0.0..1.0).contains(&l)) {
            return Err(CarpError::InvalidLikelihood {
                id: String::new(),
                reason: format!("normalized likelihood {l} outside [0, 1)"),
            });
        }
        let log_q: Vec<f64> = likelihoods.iter().map(|&l| (-l).ln_1p()).collect();
        let rec = log_q.iter().map(|&lq| (params.gamma * lq).exp()).collect();
        Ok(MeanField {
            graph,
            log_q,
            rec,
            params: *params,
        })
    }

    #[inline]
    fn phi(&self, i: usize, p: &[f64]) -> f64 {
        let s: f64 = self.graph.neighbors(i).iter().map(|&j| p[j]).sum();
        let f = -((self.params.alpha + self.params.beta * s) * self.log_q[i]).exp_m1();
        if f == 0.0 {
            0.0
        } else {
            f / (f + self.rec[i])
        }
    }

    /// Iterates on the nodes of one component, writing into `p`.
    fn iterate(&self, nodes: &[usize], p: &mut [f64], cfg: &MeanFieldConfig) -> Iterate {
        let mut next = vec![0.0; nodes.len()];
        let mut monotone = true;
        for it in 0..cfg.max_iter {
            let mut residual: f64 = 0.0;
            for (slot, &i) in next.iter_mut().zip(nodes) {
                *slot = self.phi(i, p);
                residual = residual.max((*slot - p[i]).abs());
            }
            if residual <= cfg.tol {
                return Iterate {
                    iterations: it,
                    residual,
                    converged: true,
                    monotone,
                };
            }
            for (&v, &i) in next.iter().zip(nodes) {
                if v < p[i] - f64::EPSILON {
                    monotone = false;
                }
                p[i] = v;
            }
        }
        Iterate {
            iterations: cfg.max_iter,
            residual: f64::INFINITY,
            converged: false,
            monotone,
        }
    }
}

struct Iterate {
    iterations: usize,
    residual: f64,
    converged: bool,
    /// Non-decreasing sweeps; only meaningful from the zero start.
    monotone: bool,
}

/// One application of `Φ`.
pub fn fixed_point_map(
    p: &[f64],
    likelihoods: &[f64],
    params: &ModelParams,
    graph: &Graph,
) -> Result<Vec<f64>> {
    let mf = MeanField::new(graph, likelihoods, params)?;
    if p.len() != graph.node_count() {
        return Err(CarpError::DimensionMismatch {
            expected: graph.node_count(),
            actual: p.len(),
        });
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CarpError::InvalidParameter(
            "probability vector entries must lie in [0, 1]".to_string(),
        ));
    }
    Ok((0..p.len()).map(|i| mf.phi(i, p)).collect())
}

/// Solves `p = Φ(p)` by successive approximation.
///
/// Each connected component is iterated separately until its residual
/// `max |Φ(p) - p|` is at most `tol`, so risks in one component are not
/// perturbed by the convergence of another.
pub fn solve_steady_state(
    likelihoods: &[f64],
    params: &ModelParams,
    graph: &Graph,
    cfg: &MeanFieldConfig,
) -> Result<SteadyState> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(CarpError::InvalidParameter(
            "tolerance and iteration cap must be positive".to_string(),
        ));
    }
    let mf = MeanField::new(graph, likelihoods, params)?;
    let n = graph.node_count();
    let mut p_hat = vec![0.0; n];
    let mut p_upper = vec![1.0; n];
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut monotone = true;
    for nodes in graph.components() {
        let low = mf.iterate(&nodes, &mut p_hat, cfg);
        if !low.converged {
            return Err(CarpError::NonConvergence {
                what: "mean-field iteration from zero".to_string(),
                iterations: low.iterations,
            });
        }
        let high = mf.iterate(&nodes, &mut p_upper, cfg);
        if !high.converged {
            return Err(CarpError::NonConvergence {
                what: "mean-field iteration from one".to_string(),
                iterations: high.iterations,
            });
        }
        iterations = iterations.max(low.iterations);
        residual = residual.max(low.residual);
        monotone &= low.monotone;
    }
    let discrepancy = p_hat
        .iter()
        .zip(&p_upper)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SteadyState {
        p_hat,
        residual,
        iterations,
        converged: true,
        monotone,
        p_upper,
        discrepancy,
        multiple_fixed_points: discrepancy > 100.0 * cfg.tol,
    })
}
