//! Synthetic networks and histories with known parameters.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate_history, CarpModel, ModelParams, NetworkState, SimulatedRun};
use crate::error::{CarpError, Result};
use crate::risk_model::{Category, ExpertPairCount, LikelihoodScale, Month, Risk, RiskNetwork};
use crate::rng::{child_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub year: String,
    pub risks: usize,
    /// Edge density `2E / (N (N - 1))`; the edge count is rounded.
    pub density: f64,
    /// Raw survey scores are drawn uniformly from this range (two decimals).
    pub raw_likelihood_range: (f64, f64),
    pub scale: LikelihoodScale,
    /// Expert counts per edge are drawn from `1..=max_pair_count`.
    pub max_pair_count: u32,
}

impl NetworkSpec {
    /// 50 risks at the density used for the 2013-like fixture.
    pub fn like_2013() -> Self {
        NetworkSpec {
            year: "2013".to_string(),
            risks: 50,
            density: 0.2,
            raw_likelihood_range: (2.2, 4.95),
            scale: LikelihoodScale::default(),
            max_pair_count: 30,
        }
    }
}

/// Uniform random graph with a fixed edge count (`G(n, m)`); categories
/// are assigned round-robin.
pub fn random_network(spec: &NetworkSpec, seed: u64) -> Result<RiskNetwork> {
    let n = spec.risks;
    if n == 0 {
        return Err(CarpError::EmptyCatalog);
    }
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(CarpError::InvalidParameter(format!(
            "density {} outside [0, 1]",
            spec.density
        )));
    }
    let (lo, hi) = spec.raw_likelihood_range;
    if !(lo > 0.0 && hi >= lo) || spec.max_pair_count == 0 {
        return Err(CarpError::InvalidParameter("invalid likelihood range or pair count".to_string()));
    }
    let mut rng = stream(seed, 0);
    let width = (n as f64).log10().floor() as usize + 1;
    let risks: Vec<Risk> = (0..n)
        .map(|i| -> Result<Risk> {
            let raw = (rng.random_range(lo..=hi) * 100.0).round() / 100.0;
            let id = format!("r{:0width$}", i + 1);
            Ok(Risk {
                likelihood: spec.scale.normalize(&id, raw)?,
                numeric_code: format!("{:0width$}", i + 1),
                name: format!("Synthetic risk {}", i + 1),
                category: Category::ALL[i % 5],
                raw_likelihood: raw,
                id,
                impact: None,
            })
        })
        .collect::<Result<_>>()?;

    let pairs_total = n * (n - 1) / 2;
    let m = (spec.density * pairs_total as f64).round() as usize;
    let mut chosen = sample(&mut rng, pairs_total, m).into_vec();
    chosen.sort_unstable();
    let mut pairs = Vec::with_capacity(m);
    let mut k = 0;
    let mut next = chosen.iter().peekable();
    'outer: for a in 0..n {
        for b in a + 1..n {
            if next.peek() == Some(&&k) {
                next.next();
                pairs.push(ExpertPairCount {
                    risk_a: risks[a].id.clone(),
                    risk_b: risks[b].id.clone(),
                    count: rng.random_range(1..=spec.max_pair_count),
                });
                if next.peek().is_none() {
                    break 'outer;
                }
            }
            k += 1;
        }
    }
    RiskNetwork::from_parts(spec.year.clone(), risks, pairs)
}

/// Simulates `burn_in` unrecorded steps from the all-passive state, then
/// records `months` months. The cause tally covers the recorded window.
pub fn synthetic_history(
    model: &CarpModel,
    risk_ids: Vec<String>,
    start: Month,
    months: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SimulatedRun> {
    let mut rng = stream(seed, 0);
    let warm = simulate_history(
        model,
        &NetworkState::passive(model.len()),
        risk_ids.clone(),
        start,
        burn_in + 1,
        &mut rng,
    )?;
    let last = warm.history.column(burn_in);
    simulate_history(model, &NetworkState::from_active(last), risk_ids, start, months, &mut rng)
}

/// A network, generating parameters and one simulated history.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub network: RiskNetwork,
    pub params: ModelParams,
    pub run: SimulatedRun,
}

pub const FIXTURE_SEED: u64 = 2013;

/// Parameters of the bundled 2013-like fixture.
pub fn fixture_params() -> ModelParams {
    ModelParams {
        alpha: 0.1,
        beta: 0.003,
        gamma: 1.0,
    }
}

/// The 2013-like fixture: 50 risks, 156 months (2000-01 to 2012-12).
pub fn fixture_2013() -> Result<Fixture> {
    build_fixture(&NetworkSpec::like_2013(), fixture_params(), 156, FIXTURE_SEED)
}

pub fn build_fixture(spec: &NetworkSpec, params: ModelParams, months: usize, seed: u64) -> Result<Fixture> {
    let network = random_network(spec, child_seed(seed, 1))?;
    let model = CarpModel::from_network(&network, params)?;
    let start = Month::new(2000, 1)?;
    let run = synthetic_history(&model, network.ids(), start, months, 120, child_seed(seed, 2))?;
    Ok(Fixture { network, params, run })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_matches_spec() {
        let spec = NetworkSpec::like_2013();
        let net = random_network(&spec, 9).unwrap();
        assert_eq!(net.len(), 50);
        assert_eq!(net.graph.edge_count(), 245);
        assert!(net.risks.iter().all(|r| r.likelihood > 0.39 && r.likelihood < 0.91));
        assert_eq!(net.risks[7].category, Category::ALL[2]);
        assert_eq!(random_network(&spec, 9).unwrap(), net);
        assert_ne!(random_network(&spec, 10).unwrap(), net);
    }

    #[test]
    fn extreme_densities() {
        let mut spec = NetworkSpec::like_2013();
        spec.risks = 6;
        spec.density = 0.0;
        assert_eq!(random_network(&spec, 1).unwrap().graph.edge_count(), 0);
        spec.density = 1.0;
        assert_eq!(random_network(&spec, 1).unwrap().graph.edge_count(), 15);
    }

    #[test]
    fn fixture_shape() {
        let f = fixture_2013().unwrap();
        assert_eq!(f.run.history.risk_count(), 50);
        assert_eq!(f.run.history.month_count(), 156);
        assert_eq!(f.run.history.cell_count(), 7_800);
        assert!(f.run.history.activation_count() > 0);
        assert!(f.run.history.recovery_count() > 0);
    }
}
