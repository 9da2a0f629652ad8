//! Validation battery: synthetic parameter recovery, forward error bounds,
//! network-effect comparison and sensitivity tests.

mod forward;
mod network_effect;
mod recovery;
mod sensitivity;

pub use forward::{forward_error_bounds, ForwardReport, ForwardStatistics};
pub use network_effect::{coverage_multiple, network_effect_comparison, CoverageMultiple, NetworkEffectReport, StepStatistics};
pub use recovery::{
    ks_distance, recovery_error_by_length, recovery_experiment, AttributionFractions, RecoveryConfig,
    ReplicateFailure, ReplicateResult, RetainedBounds, ValidationReport,
};
pub use sensitivity::{reduce_history, sensitivity_suite, SensitivityReport};
