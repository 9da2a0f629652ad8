//! Cascading alternating renewal dynamics.
//!
//! Each risk alternates between passive and active. A passive risk can be
//! switched on by its own internal process or by any active neighbour; an
//! active risk either continues or recovers. With normalized likelihood `L`
//! and `q = 1 - L`, the one-month probabilities are
//!
//! ```text
//! p_int = 1 - q^alpha      p_ext = 1 - q^beta      p_rec = q^gamma = 1 - p_con
//! P(0→1 | k active neighbours) = 1 - (1 - p_int)(1 - p_ext)^k = 1 - q^(alpha + beta k)
//! ```
//!
//! All risks update synchronously from the previous month's active set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CarpError, Result};
use crate::graph::Graph;
use crate::risk_model::{HistoryMatrix, Month, RiskNetwork};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = ModelParams { alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CarpError::InvalidParameter(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        ModelParams {
            alpha: v[0],
            beta: v[1],
            gamma: v[2],
        }
    }
}

/// `q^x` computed as `exp(x ln(1 - L))`.
#[inline]
pub(crate) fn survival(likelihood: f64, exponent: f64) -> f64 {
    (exponent * (-likelihood).ln_1p()).exp()
}

/// `1 - q^x` without cancellation for small exponents.
#[inline]
pub(crate) fn firing(likelihood: f64, exponent: f64) -> f64 {
    -(exponent * (-likelihood).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessProbabilities {
    pub p_int: f64,
    pub p_ext: f64,
    pub p_con: f64,
    pub p_rec: f64,
}

impl ProcessProbabilities {
    pub fn new(likelihood: f64, params: &ModelParams) -> Result<Self> {
        if !(likelihood > 0.0 && likelihood < 1.0) {
            return Err(CarpError::InvalidLikelihood {
                id: String::new(),
                reason: format!("normalized likelihood {likelihood} outside (0, 1)"),
            });
        }
        params.validate()?;
        let p_rec = survival(likelihood, params.gamma);
        Ok(ProcessProbabilities {
            p_int: firing(likelihood, params.alpha),
            p_ext: firing(likelihood, params.beta),
            p_con: 1.0 - p_rec,
            p_rec,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub t: u64,
    pub active: Vec<bool>,
}

impl NetworkState {
    pub fn passive(n: usize) -> Self {
        NetworkState {
            t: 0,
            active: vec![false; n],
        }
    }

    pub fn from_active(active: Vec<bool>) -> Self {
        NetworkState { t: 0, active }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionCause {
    Internal,
    External,
    /// Internal and external draws both fired in the same month.
    Both,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub risk: usize,
    pub cause: TransitionCause,
}

/// Running count of tagged transitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseTally {
    pub internal: u64,
    pub external: u64,
    pub both: u64,
    pub recoveries: u64,
}

impl CauseTally {
    pub fn record(&mut self, cause: TransitionCause) {
        match cause {
            TransitionCause::Internal => self.internal += 1,
            TransitionCause::External => self.external += 1,
            TransitionCause::Both => self.both += 1,
            TransitionCause::Recovery => self.recoveries += 1,
        }
    }

    pub fn activations(&self) -> u64 {
        self.internal + self.external + self.both
    }

    pub fn merge(&mut self, other: &CauseTally) {
        self.internal += other.internal;
        self.external += other.external;
        self.both += other.both;
        self.recoveries += other.recoveries;
    }
}

/// Network, per-risk process probabilities and the parameters they came from.
#[derive(Debug, Clone)]
pub struct CarpModel {
    graph: Graph,
    params: ModelParams,
    probs: Vec<ProcessProbabilities>,
    /// `ln(1 - p_ext)` per risk, so `k` neighbours give `exp(k * ln(1 - p_ext))`.
    log_no_ext: Vec<f64>,
}

impl CarpModel {
    pub fn new(graph: Graph, likelihoods: &[f64], params: ModelParams) -> Result<Self> {
        if likelihoods.len() != graph.node_count() {
            return Err(CarpError::DimensionMismatch {
                expected: graph.node_count(),
                actual: likelihoods.len(),
            });
        }
        let probs = likelihoods
            .iter()
            .map(|&l| ProcessProbabilities::new(l, &params))
            .collect::<Result<Vec<_>>>()?;
        let log_no_ext = likelihoods
            .iter()
            .map(|&l| params.beta * (-l).ln_1p())
            .collect();
        Ok(CarpModel {
            graph,
            params,
            probs,
            log_no_ext,
        })
    }

    pub fn from_network(network: &RiskNetwork, params: ModelParams) -> Result<Self> {
        Self::new(network.graph.clone(), &network.likelihoods(), params)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn probabilities(&self) -> &[ProcessProbabilities] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn check_dim(&self, state: &NetworkState) -> Result<()> {
        if state.active.len() != self.len() {
            return Err(CarpError::DimensionMismatch {
                expected: self.len(),
                actual: state.active.len(),
            });
        }
        Ok(())
    }

    pub fn active_neighbors(&self, i: usize, active: &[bool]) -> usize {
        self.graph.neighbors(i).iter().filter(|&&j| active[j]).count()
    }

    /// Probability that at least one active neighbour fires on risk `i`.
    #[inline]
    fn external_probability(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            -(k as f64 * self.log_no_ext[i]).exp_m1()
        }
    }

    /// `P(0→1)` for risk `i` given the current active set.
    pub fn activation_probability(&self, i: usize, state: &NetworkState) -> Result<f64> {
        self.check_dim(state)?;
        let k = self.active_neighbors(i, &state.active);
        let p = &self.probs[i];
        // 1 - (1 - p_int)(1 - ext), arranged to return p_int exactly when ext = 0
        Ok(p.p_int + (1.0 - p.p_int) * self.external_probability(i, k))
    }

    /// Advances one month. Passive risks draw an internal and an external
    /// uniform; the flip happens if either fires and the event is tagged by
    /// which did. Active risks draw one uniform against `p_rec`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &NetworkState,
        rng: &mut R,
    ) -> Result<(NetworkState, Vec<TransitionEvent>)> {
        self.check_dim(state)?;
        let counts: Vec<u32> = (0..self.len())
            .map(|i| self.active_neighbors(i, &state.active) as u32)
            .collect();
        let mut next = state.active.clone();
        let mut events = Vec::new();
        self.advance(&state.active, &counts, &mut next, rng, |risk, cause| {
            events.push(TransitionEvent { risk, cause })
        });
        Ok((
            NetworkState {
                t: state.t + 1,
                active: next,
            },
            events,
        ))
    }

    /// Core synchronous update. `next` must start as a copy of `active`.
    #[inline]
    fn advance<R: Rng + ?Sized>(
        &self,
        active: &[bool],
        counts: &[u32],
        next: &mut [bool],
        rng: &mut R,
        mut on_event: impl FnMut(usize, TransitionCause),
    ) {
        for i in 0..active.len() {
            let p = &self.probs[i];
            if active[i] {
                let u: f64 = rng.random();
                if u < p.p_rec {
                    next[i] = false;
                    on_event(i, TransitionCause::Recovery);
                }
            } else {
                let u_int: f64 = rng.random();
                let u_ext: f64 = rng.random();
                let internal = u_int < p.p_int;
                let external = u_ext < self.external_probability(i, counts[i] as usize);
                let cause = match (internal, external) {
                    (true, true) => Some(TransitionCause::Both),
                    (true, false) => Some(TransitionCause::Internal),
                    (false, true) => Some(TransitionCause::External),
                    (false, false) => None,
                };
                if let Some(cause) = cause {
                    next[i] = true;
                    on_event(i, cause);
                }
            }
        }
    }
}

/// Incrementally maintained simulation state.
struct Runner<'a> {
    model: &'a CarpModel,
    active: Vec<bool>,
    next: Vec<bool>,
    counts: Vec<u32>,
    flipped: Vec<usize>,
}

impl<'a> Runner<'a> {
    fn new(model: &'a CarpModel, initial: &[bool]) -> Self {
        let counts = (0..model.len())
            .map(|i| model.active_neighbors(i, initial) as u32)
            .collect();
        Runner {
            model,
            active: initial.to_vec(),
            next: initial.to_vec(),
            counts,
            flipped: Vec::new(),
        }
    }

    fn step(&mut self, rng: &mut StreamRng, mut on_event: impl FnMut(usize, TransitionCause)) {
        self.flipped.clear();
        let flipped = &mut self.flipped;
        self.model
            .advance(&self.active, &self.counts, &mut self.next, rng, |i, c| {
                flipped.push(i);
                on_event(i, c);
            });
        for &i in self.flipped.iter() {
            let now_active = self.next[i];
            self.active[i] = now_active;
            for &j in self.model.graph.neighbors(i) {
                if now_active {
                    self.counts[j] += 1;
                } else {
                    self.counts[j] -= 1;
                }
            }
        }
    }
}

/// Frequency checkpoints: powers of ten up to the horizon, plus the horizon.
pub fn checkpoint_schedule(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 1u64;
    while t < horizon {
        out.push(t);
        match t.checked_mul(10) {
            Some(v) => t = v,
            None => break,
        }
    }
    out.push(horizon);
    out
}

/// Active-frequency trajectories averaged over independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub checkpoints: Vec<u64>,
    /// `mean[c][i]`: run-average of risk `i`'s active fraction over months
    /// `1..=checkpoints[c]`.
    pub mean: Vec<Vec<f64>>,
    /// Sample standard deviation across runs, same layout (zero for one run).
    pub std_dev: Vec<Vec<f64>>,
    /// Mean number of 0→1 flips per risk per run over the whole horizon.
    pub mean_activations: Vec<f64>,
    pub runs: usize,
}

impl TrajectoryReport {
    pub fn terminal(&self) -> &[f64] {
        self.mean.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Standard error of the run-average at checkpoint `c`.
    pub fn standard_error(&self, c: usize) -> Vec<f64> {
        let n = self.runs as f64;
        self.std_dev[c].iter().map(|s| s / n.sqrt()).collect()
    }

    pub fn checkpoint_index(&self, t: u64) -> Option<usize> {
        self.checkpoints.iter().position(|&c| c == t)
    }
}

struct RunFrequencies {
    at_checkpoint: Vec<Vec<f64>>,
    activations: Vec<u64>,
}

/// Monte Carlo trajectories of active frequencies `f_i(t)`.
///
/// Month 0 is `initial`; month `t` is the state after `t` steps. Run `r`
/// uses stream `(seed, r)`; results do not depend on thread count.
pub fn simulate_trajectory(
    model: &CarpModel,
    initial: &NetworkState,
    horizon: u64,
    runs: usize,
    seed: u64,
) -> Result<TrajectoryReport> {
    model.check_dim(initial)?;
    if horizon < 1 || runs < 1 {
        return Err(CarpError::InvalidParameter(
            "horizon and run count must be at least 1".to_string(),
        ));
    }
    let checkpoints = checkpoint_schedule(horizon);
    let n = model.len();
    let per_run: Vec<RunFrequencies> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let mut runner = Runner::new(model, &initial.active);
            let mut active_months = vec![0u64; n];
            let mut activations = vec![0u64; n];
            let mut at_checkpoint = Vec::with_capacity(checkpoints.len());
            let mut next_cp = 0;
            for t in 1..=horizon {
                runner.step(&mut rng, |i, cause| {
                    if cause != TransitionCause::Recovery {
                        activations[i] += 1;
                    }
                });
                for (m, &a) in active_months.iter_mut().zip(&runner.active) {
                    *m += u64::from(a);
                }
                if t == checkpoints[next_cp] {
                    at_checkpoint.push(active_months.iter().map(|&m| m as f64 / t as f64).collect());
                    next_cp += 1;
                }
            }
            RunFrequencies {
                at_checkpoint,
                activations,
            }
        })
        .collect();

    let mut mean = vec![vec![0.0; n]; checkpoints.len()];
    let mut std_dev = vec![vec![0.0; n]; checkpoints.len()];
    for c in 0..checkpoints.len() {
        for i in 0..n {
            let values = per_run.iter().map(|r| r.at_checkpoint[c][i]);
            let (m, s) = mean_and_std(values, runs);
            mean[c][i] = m;
            std_dev[c][i] = s;
        }
    }
    let mean_activations = (0..n)
        .map(|i| per_run.iter().map(|r| r.activations[i] as f64).sum::<f64>() / runs as f64)
        .collect();
    Ok(TrajectoryReport {
        checkpoints,
        mean,
        std_dev,
        mean_activations,
        runs,
    })
}

/// Two-pass mean and sample standard deviation in iteration order.
pub(crate) fn mean_and_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

/// A full simulated history: column 0 is the initial state.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub history: HistoryMatrix,
    pub tally: CauseTally,
    /// Activations during step `t` (into month `t + 1`).
    pub activations_per_step: Vec<usize>,
}

impl SimulatedRun {
    /// Splits the initial column off as the trajectory's starting point.
    pub fn trajectory(&self) -> Trajectory {
        let h = &self.history;
        let columns: Vec<Vec<bool>> = (1..h.month_count()).map(|t| h.column(t)).collect();
        Trajectory {
            initial: Some(h.column(0)),
            states: HistoryMatrix::from_columns(h.risk_ids().to_vec(), h.months()[0].next(), &columns)
                .expect("consistent dimensions"),
        }
    }
}

/// One trajectory of states, optionally with the state preceding its first
/// month (flips out of that state count as activations).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub initial: Option<Vec<bool>>,
    pub states: HistoryMatrix,
}

/// Simulates `months - 1` steps from `initial`, recording every month.
pub fn simulate_history(
    model: &CarpModel,
    initial: &NetworkState,
    risk_ids: Vec<String>,
    start: Month,
    months: usize,
    rng: &mut StreamRng,
) -> Result<SimulatedRun> {
    model.check_dim(initial)?;
    if months < 1 {
        return Err(CarpError::InvalidParameter("at least one month required".to_string()));
    }
    let mut runner = Runner::new(model, &initial.active);
    let mut columns = Vec::with_capacity(months);
    columns.push(initial.active.clone());
    let mut tally = CauseTally::default();
    let mut activations_per_step = Vec::with_capacity(months.saturating_sub(1));
    for _ in 1..months {
        let mut fired = 0;
        runner.step(rng, |_, cause| {
            tally.record(cause);
            if cause != TransitionCause::Recovery {
                fired += 1;
            }
        });
        activations_per_step.push(fired);
        columns.push(runner.active.clone());
    }
    Ok(SimulatedRun {
        history: HistoryMatrix::from_columns(risk_ids, start, &columns)?,
        tally,
        activations_per_step,
    })
}

/// `runs` independent histories; run `r` uses stream `(seed, r)`.
pub fn simulate_runs(
    model: &CarpModel,
    initial: &NetworkState,
    risk_ids: &[String],
    start: Month,
    months: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<SimulatedRun>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            simulate_history(model, initial, risk_ids.to_vec(), start, months, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStatistics {
    /// Per risk: fraction of months active, averaged over runs.
    pub freq_active: Vec<f64>,
    /// Per risk: number of observed 0→1 flips per run.
    pub freq_activation: Vec<f64>,
    /// Active fraction over all risks, months and runs.
    pub mean_active: f64,
    /// Flips per risk per run, averaged over risks.
    pub mean_activations: f64,
}

/// Being-active and activation statistics over a set of runs.
///
/// Only observed 0→1 flips count: a run that starts active does not
/// register an activation for its first month unless an `initial` passive
/// state precedes it.
pub fn activity_statistics(runs: &[Trajectory]) -> Result<ActivityStatistics> {
    let first = runs.first().ok_or_else(|| {
        CarpError::InvalidParameter("activity statistics need at least one run".to_string())
    })?;
    let r = first.states.risk_count();
    let mut freq_active = vec![0.0; r];
    let mut freq_activation = vec![0.0; r];
    for run in runs {
        let s = &run.states;
        if s.risk_count() != r {
            return Err(CarpError::DimensionMismatch {
                expected: r,
                actual: s.risk_count(),
            });
        }
        let t = s.month_count();
        for i in 0..r {
            let row = s.row(i);
            freq_active[i] += row.iter().filter(|&&a| a).count() as f64 / t as f64;
            let mut flips = row.windows(2).filter(|w| !w[0] && w[1]).count();
            if let (Some(init), Some(&first_state)) = (&run.initial, row.first()) {
                if !init[i] && first_state {
                    flips += 1;
                }
            }
            freq_activation[i] += flips as f64;
        }
    }
    let n = runs.len() as f64;
    freq_active.iter_mut().for_each(|v| *v /= n);
    freq_activation.iter_mut().for_each(|v| *v /= n);
    let mean_active = freq_active.iter().sum::<f64>() / r as f64;
    let mean_activations = freq_activation.iter().sum::<f64>() / r as f64;
    Ok(ActivityStatistics {
        freq_active,
        freq_activation,
        mean_active,
        mean_activations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a: f64, b: f64, g: f64) -> ModelParams {
        ModelParams::new(a, b, g).unwrap()
    }

    #[test]
    fn unit_exponent_gives_likelihood() {
        let p = ProcessProbabilities::new(0.5, &params(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(p.p_int, 0.5);
        assert_eq!(p.p_rec, 0.5);
    }

    #[test]
    fn fractional_exponent_matches_high_precision_value() {
        // 1 - 0.7^0.2 evaluated at 40 digits
        let p = ProcessProbabilities::new(0.3, &params(0.2, 0.0, 0.0)).unwrap();
        assert!((p.p_int - 0.068_850_084_905_162_31).abs() < 1e-15);
    }

    #[test]
    fn boundary_likelihoods_rejected() {
        for l in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(ProcessProbabilities::new(l, &params(1.0, 1.0, 1.0)).is_err());
        }
        assert!(ModelParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(f64::INFINITY, 0.0, 0.0).is_err());
    }

    /// Likelihood that yields exactly the requested `p_int` at alpha = 1.
    fn chain(p_int: f64, p_ext: f64, n: usize, edges: &[(usize, usize)]) -> CarpModel {
        // alpha = 1 ⇒ p_int = L; beta chosen so that 1 - (1-L)^beta = p_ext
        let l = p_int;
        let beta = if p_ext == 0.0 { 0.0 } else { (1.0 - p_ext).ln() / (1.0 - l).ln() };
        CarpModel::new(Graph::from_edges(n, edges).unwrap(), &vec![l; n], params(1.0, beta, 1.0)).unwrap()
    }

    #[test]
    fn activation_probability_examples() {
        let m = chain(0.1, 0.2, 2, &[(0, 1)]);
        let none = NetworkState::from_active(vec![false, false]);
        assert!((m.activation_probability(0, &none).unwrap() - 0.1).abs() < 1e-15);
        let one = NetworkState::from_active(vec![false, true]);
        // 1 - 0.9 * 0.8
        assert!((m.activation_probability(0, &one).unwrap() - 0.28).abs() < 1e-12);
        let dead = CarpModel::new(Graph::complete(3), &[0.4, 0.5, 0.6], params(0.0, 0.0, 1.0)).unwrap();
        let all = NetworkState::from_active(vec![false, true, true]);
        assert_eq!(dead.activation_probability(0, &all).unwrap(), 0.0);
        assert!(m.activation_probability(0, &NetworkState::passive(3)).is_err());
    }

    #[test]
    fn zero_probabilities_freeze_state() {
        let frozen = CarpModel::new(Graph::complete(4), &[0.999_999; 4], params(0.0, 0.0, 1e6)).unwrap();
        assert_eq!(frozen.probabilities()[0].p_rec, 0.0);
        let state = NetworkState::from_active(vec![true, false, true, false]);
        let mut rng = stream(1, 0);
        let (next, events) = frozen.step(&state, &mut rng).unwrap();
        assert_eq!(next.active, state.active);
        assert!(events.is_empty());
        assert_eq!(next.t, 1);
    }

    #[test]
    fn certain_recovery_clears_active_risks() {
        let m = CarpModel::new(Graph::complete(3), &[0.5; 3], params(0.0, 0.0, 0.0)).unwrap();
        let state = NetworkState::from_active(vec![true, true, false]);
        let (next, events) = m.step(&state, &mut stream(3, 0)).unwrap();
        assert_eq!(next.active, vec![false, false, false]);
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e.cause == TransitionCause::Recovery));
    }

    #[test]
    fn fixed_seed_replays_bit_identically() {
        let m = chain(0.2, 0.3, 5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let run = |seed| {
            let mut rng = stream(seed, 0);
            let mut s = NetworkState::passive(5);
            let mut trace = Vec::new();
            for _ in 0..200 {
                let (n, e) = m.step(&s, &mut rng).unwrap();
                trace.push((n.active.clone(), e));
                s = n;
            }
            trace
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn simulate_history_matches_stepwise_replay() {
        let m = chain(0.2, 0.3, 4, &[(0, 1), (1, 2), (2, 3)]);
        let ids: Vec<String> = (0..4).map(|i| format!("r{i}")).collect();
        let start = Month::new(2000, 1).unwrap();
        let sim = simulate_history(&m, &NetworkState::passive(4), ids, start, 50, &mut stream(5, 2)).unwrap();
        let mut rng = stream(5, 2);
        let mut s = NetworkState::passive(4);
        let mut tally = CauseTally::default();
        for t in 1..50 {
            let (n, events) = m.step(&s, &mut rng).unwrap();
            events.iter().for_each(|e| tally.record(e.cause));
            assert_eq!(n.active, sim.history.column(t));
            s = n;
        }
        assert_eq!(tally, sim.tally);
        assert_eq!(
            sim.activations_per_step,
            sim.history.activations_per_step()
        );
    }

    #[test]
    fn checkpoints_are_powers_of_ten_plus_horizon() {
        assert_eq!(checkpoint_schedule(1), vec![1]);
        assert_eq!(checkpoint_schedule(10), vec![1, 10]);
        assert_eq!(checkpoint_schedule(2500), vec![1, 10, 100, 1000, 2500]);
    }

    #[test]
    fn vanishing_likelihood_never_activates() {
        let m = CarpModel::new(Graph::complete(3), &[1e-300; 3], params(1.0, 1.0, 1.0)).unwrap();
        let rep = simulate_trajectory(&m, &NetworkState::passive(3), 1000, 4, 9).unwrap();
        assert!(rep.mean.iter().flatten().all(|&f| f == 0.0));
    }

    #[test]
    fn isolated_risk_reaches_two_state_stationary_ratio() {
        // p_int = 0.1 at alpha = 1; p_rec = 0.4 needs (0.9)^gamma = 0.4
        let gamma = 0.4f64.ln() / 0.9f64.ln();
        let m = CarpModel::new(Graph::edgeless(1), &[0.1], params(1.0, 0.0, gamma)).unwrap();
        let rep = simulate_trajectory(&m, &NetworkState::passive(1), 200_000, 8, 21).unwrap();
        assert!((rep.terminal()[0] - 0.2).abs() < 0.005, "{}", rep.terminal()[0]);
    }

    #[test]
    fn trajectory_is_thread_count_independent() {
        let m = chain(0.1, 0.2, 6, &[(0, 1), (1, 2), (2, 3), (4, 5)]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_trajectory(&m, &NetworkState::passive(6), 500, 16, 3).unwrap());
        let b = many.install(|| simulate_trajectory(&m, &NetworkState::passive(6), 500, 16, 3).unwrap());
        assert_eq!(a, b);
    }

    fn matrix(rows: &[Vec<bool>]) -> HistoryMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let months = Month::new(2000, 1).unwrap().sequence(rows[0].len());
        HistoryMatrix::from_rows(ids, months, rows).unwrap()
    }

    #[test]
    fn activity_statistics_examples() {
        let zero = Trajectory { initial: None, states: matrix(&[vec![false; 12]]) };
        let s = activity_statistics(&[zero]).unwrap();
        assert_eq!((s.mean_active, s.mean_activations), (0.0, 0.0));

        // A P A P ... over 12 months: 6 active months, flips into months 3,5,7,9,11
        let alternating: Vec<bool> = (0..12).map(|t| t % 2 == 0).collect();
        let s = activity_statistics(&[Trajectory { initial: None, states: matrix(std::slice::from_ref(&alternating)) }]).unwrap();
        assert_eq!(s.freq_active[0], 0.5);
        assert_eq!(s.freq_activation[0], 5.0);
        let s = activity_statistics(&[Trajectory { initial: Some(vec![false]), states: matrix(&[alternating]) }]).unwrap();
        assert_eq!(s.freq_activation[0], 6.0);

        let always = Trajectory { initial: Some(vec![true]), states: matrix(&[vec![true; 12]]) };
        let s = activity_statistics(&[always]).unwrap();
        assert_eq!((s.freq_active[0], s.freq_activation[0]), (1.0, 0.0));

        assert!(activity_statistics(&[]).is_err());
    }

    proptest! {
        #[test]
        fn continuation_and_recovery_sum_to_one(l in 1e-9f64..0.999_999_999, g in 0.0f64..50.0) {
            let p = ProcessProbabilities::new(l, &params(0.0, 0.0, g)).unwrap();
            prop_assert!((p.p_con + p.p_rec - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn activation_probability_is_monotone(
            l in 0.01f64..0.99, dl in 0.0f64..0.5,
            a in 0.0f64..3.0, da in 0.0f64..1.0,
            b in 0.0f64..3.0, db in 0.0f64..1.0,
            k in 0usize..4,
        ) {
            let g = Graph::complete(5);
            let mut active = vec![false; 5];
            for a in active.iter_mut().skip(1).take(k) { *a = true; }
            let mut more = active.clone();
            more[k + 1] = true;
            let p = |l: f64, a: f64, b: f64, s: &[bool]| {
                let m = CarpModel::new(g.clone(), &[l; 5], params(a, b, 1.0)).unwrap();
                m.activation_probability(0, &NetworkState::from_active(s.to_vec())).unwrap()
            };
            let base = p(l, a, b, &active);
            let l2 = (l + dl).min(0.995);
            prop_assert!(p(l, a, b, &more) >= base);
            prop_assert!(p(l, a + da, b, &active) >= base);
            prop_assert!(p(l, a, b + db, &active) >= base);
            prop_assert!(p(l2, a, b, &active) >= base);
        }

        #[test]
        fn independent_model_reduction(l in 0.01f64..0.99, a in 0.0f64..3.0, bits in 0u8..32) {
            let active: Vec<bool> = (0..5).map(|i| bits & (1 << i) != 0).collect();
            let state = NetworkState::from_active(active);
            let no_beta = CarpModel::new(Graph::complete(5), &[l; 5], params(a, 0.0, 1.0)).unwrap();
            let edgeless = CarpModel::new(Graph::edgeless(5), &[l; 5], params(a, 2.0, 1.0)).unwrap();
            let p_int = ProcessProbabilities::new(l, &params(a, 0.0, 1.0)).unwrap().p_int;
            for i in 0..5 {
                prop_assert_eq!(no_beta.activation_probability(i, &state).unwrap(), p_int);
                prop_assert_eq!(edgeless.activation_probability(i, &state).unwrap(), p_int);
            }
        }
    }
}
