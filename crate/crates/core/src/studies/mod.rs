//! The two analysis procedures: the keypoint-correlation probe and the
//! multi-seed stability harness.

mod probe;
mod stability;

pub use probe::{default_scale_grid, probe_correlations, SensitivityTensor};
pub use stability::{stability_study, SeedOutcome, StabilityStats, StabilitySummary};
