//! Steady-state transition fractions and knockout influence.
//!
//! At the mean-field steady state each risk has three transition rates:
//!
//! ```text
//! A_int = (1 - p̂_i) p_int
//! A_ext = (1 - p̂_i) (1 - (1 - p_ext)^{Σ_{j∈N_i} p̂_j})
//! A_rec = p̂_i p_rec
//! ```
//!
//! normalized into fractions `a_int + a_ext + a_rec = 1`. The influence of
//! risk `i` on risk `j` is the drop in `a_j^ext` when `i` is disabled by
//! setting `L_i = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{firing, survival, ModelParams};
use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::meanfield::{solve_steady_state, MeanFieldConfig, SteadyState};
use crate::risk_model::Category;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFractions {
    pub raw_internal: Vec<f64>,
    pub raw_external: Vec<f64>,
    pub raw_recovery: Vec<f64>,
    /// `None` where all three raw rates vanish.
    pub internal: Vec<Option<f64>>,
    pub external: Vec<Option<f64>>,
    pub recovery: Vec<Option<f64>>,
}

impl TransitionFractions {
    /// `a_ext` with undefined entries read as zero.
    pub fn external_or_zero(&self, i: usize) -> f64 {
        self.external[i].unwrap_or(0.0)
    }
}

pub fn transition_fractions(
    p_hat: &[f64],
    likelihoods: &[f64],
    params: &ModelParams,
    graph: &Graph,
) -> Result<TransitionFractions> {
    let n = graph.node_count();
    for len in [p_hat.len(), likelihoods.len()] {
        if len != n {
            return Err(CarpError::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    params.validate()?;
    let mut out = TransitionFractions {
        raw_internal: Vec::with_capacity(n),
        raw_external: Vec::with_capacity(n),
        raw_recovery: Vec::with_capacity(n),
        internal: Vec::with_capacity(n),
        external: Vec::with_capacity(n),
        recovery: Vec::with_capacity(n),
    };
    for i in 0..n {
        let l = likelihoods[i];
        let s: f64 = graph.neighbors(i).iter().map(|&j| p_hat[j]).sum();
        let int = (1.0 - p_hat[i]) * firing(l, params.alpha);
        let ext = (1.0 - p_hat[i]) * firing(l, params.beta * s);
        let rec = p_hat[i] * survival(l, params.gamma);
        let total = int + ext + rec;
        out.raw_internal.push(int);
        out.raw_external.push(ext);
        out.raw_recovery.push(rec);
        let frac = |v: f64| (total > 0.0).then(|| v / total);
        out.internal.push(frac(int));
        out.external.push(frac(ext));
        out.recovery.push(frac(rec));
    }
    Ok(out)
}

/// Influence entries below this are reported as anomalies rather than
/// treated as rounding noise.
const ANOMALY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceMatrix {
    n: usize,
    /// Row-major; diagonal stored as zero but never exposed.
    entries: Vec<f64>,
    pub baseline: SteadyState,
    pub baseline_fractions: TransitionFractions,
    /// Negative entries `(source, target, value)`.
    pub anomalies: Vec<(usize, usize, f64)>,
}

impl InfluenceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Influence of `source` on `target`; `None` on the diagonal.
    pub fn get(&self, source: usize, target: usize) -> Option<f64> {
        (source != target).then(|| self.entries[source * self.n + target])
    }

    /// Off-diagonal entries as `(source, target, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.entries[i * self.n + j]))
        })
    }
}

/// Likelihood vector with risk `i` disabled.
fn knocked_out(likelihoods: &[f64], i: usize) -> Vec<f64> {
    let mut l = likelihoods.to_vec();
    l[i] = 0.0;
    l
}

/// `I[i][j] = a_j^ext - a_{j-i}^ext` over all ordered pairs, from one
/// baseline solve plus one knockout solve per risk (run in parallel).
pub fn risk_influence(
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
    cfg: &MeanFieldConfig,
) -> Result<InfluenceMatrix> {
    let n = graph.node_count();
    if n == 0 {
        return Err(CarpError::EmptyNetwork);
    }
    if let Some(&l) = likelihoods.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(CarpError::InvalidLikelihood {
            id: String::new(),
            reason: format!("normalized likelihood {l} outside (0, 1)"),
        });
    }
    let baseline = solve_steady_state(likelihoods, params, graph, cfg)?;
    let base_frac = transition_fractions(&baseline.p_hat, likelihoods, params, graph)?;

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let l = knocked_out(likelihoods, i);
            let s = solve_steady_state(&l, params, graph, cfg)?;
            let f = transition_fractions(&s.p_hat, &l, params, graph)?;
            Ok((0..n)
                .map(|j| {
                    if j == i {
                        0.0
                    } else {
                        base_frac.external_or_zero(j) - f.external_or_zero(j)
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut anomalies = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v < -ANOMALY_TOLERANCE {
                anomalies.push((i, j, v));
            }
        }
    }
    Ok(InfluenceMatrix {
        n,
        entries: rows.concat(),
        baseline,
        baseline_fractions: base_frac,
        anomalies,
    })
}

/// Largest difference in `p̂_j` and `a_j^ext` (`j ≠ node`) between disabling
/// `node` and deleting it from the graph.
pub fn knockout_deletion_discrepancy(
    graph: &Graph,
    likelihoods: &[f64],
    params: &ModelParams,
    node: usize,
    cfg: &MeanFieldConfig,
) -> Result<f64> {
    if node >= graph.node_count() {
        return Err(CarpError::InvalidParameter(format!("node {node} out of range")));
    }
    let l_ko = knocked_out(likelihoods, node);
    let ko = solve_steady_state(&l_ko, params, graph, cfg)?;
    let ko_frac = transition_fractions(&ko.p_hat, &l_ko, params, graph)?;

    let reduced = graph.without_node(node);
    let mut l_del = likelihoods.to_vec();
    l_del.remove(node);
    let del = solve_steady_state(&l_del, params, &reduced, cfg)?;
    let del_frac = transition_fractions(&del.p_hat, &l_del, params, &reduced)?;

    let mut worst: f64 = 0.0;
    for j in 0..graph.node_count() {
        if j == node {
            continue;
        }
        let k = if j > node { j - 1 } else { j };
        worst = worst
            .max((ko.p_hat[j] - del.p_hat[k]).abs())
            .max((ko_frac.external_or_zero(j) - del_frac.external_or_zero(k)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInfluence {
    /// `raw[a][b]`: aggregate influence of category `a` on category `b`,
    /// indexed by [`Category::index`].
    pub raw: [[f64; 5]; 5],
    /// Min–max scaled to `[0, 1]`; `None` when all entries are equal.
    pub normalized: Option<[[f64; 5]; 5]>,
    /// `ln(1 + kappa · normalized)`.
    pub log_scaled: Option<[[f64; 5]; 5]>,
    pub degenerate: bool,
}

pub fn category_influence(
    influence: &InfluenceMatrix,
    categories: &[Category],
    aggregation: Aggregation,
    kappa: f64,
) -> Result<CategoryInfluence> {
    if categories.len() != influence.len() {
        return Err(CarpError::DimensionMismatch {
            expected: influence.len(),
            actual: categories.len(),
        });
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(CarpError::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    let mut raw = [[0.0; 5]; 5];
    let mut counts = [[0usize; 5]; 5];
    for (i, j, v) in influence.iter() {
        let (a, b) = (categories[i].index(), categories[j].index());
        raw[a][b] += v;
        counts[a][b] += 1;
    }
    if aggregation == Aggregation::Mean {
        for a in 0..5 {
            for b in 0..5 {
                if counts[a][b] > 0 {
                    raw[a][b] /= counts[a][b] as f64;
                }
            }
        }
    }
    let flat = raw.iter().flatten();
    let min = flat.clone().copied().fold(f64::INFINITY, f64::min);
    let max = flat.copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Ok(CategoryInfluence {
            raw,
            normalized: None,
            log_scaled: None,
            degenerate: true,
        });
    }
    let normalized = raw.map(|row| row.map(|v| (v - min) / (max - min)));
    let log_scaled = normalized.map(|row| row.map(|v| (kappa * v).ln_1p()));
    Ok(CategoryInfluence {
        raw,
        normalized: Some(normalized),
        log_scaled: Some(log_scaled),
        degenerate: false,
    })
}
