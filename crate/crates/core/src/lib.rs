//! Cascading alternating renewal process (CARP) model of interacting
//! global risks.
//!
//! Risks alternate between passive and active months. A passive risk
//! activates through an internal process or through pressure from active
//! neighbours; an active risk either continues or recovers. All process
//! probabilities derive from the risk's normalized likelihood `L` and three
//! shared exponents `(alpha, beta, gamma)`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod graph;
pub mod graph_metrics;
pub mod influence;
pub mod meanfield;
pub mod mle;
pub mod risk_model;
pub mod rng;
pub mod synthetic;
pub mod validation;

pub use engine::{CarpModel, ModelParams, NetworkState, ProcessProbabilities};
pub use error::{CarpError, ErrorKind, Result};
pub use graph::Graph;
pub use graph_metrics::{compute_properties, NetworkProperties};
pub use influence::{risk_influence, transition_fractions, InfluenceMatrix, TransitionFractions};
pub use meanfield::{solve_steady_state, MeanFieldConfig, SteadyState};
pub use mle::{fit, log_likelihood, FitConfig, FitResult};
pub use risk_model::{Category, HistoryMatrix, Month, Risk, RiskNetwork};
