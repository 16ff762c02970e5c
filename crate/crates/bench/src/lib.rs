//! Shared fixtures for the criterion benches.

use rachsim_core::experiments::ExperimentSpec;
use rachsim_core::ParamSet;

/// Parameters of a bundled experiment at its first grid point.
pub fn bundled_params(name: &str) -> ParamSet {
    let spec = ExperimentSpec::load(name, &[]).expect("bundled experiment");
    let point = spec.grid().into_iter().next().expect("non-empty grid");
    spec.point_params(&point).expect("valid parameters")
}

/// Torus side holding roughly `bs_count` BSs at the configured density.
pub fn side_for(params: &ParamSet, bs_count: f64) -> f64 {
    (bs_count / params.network.lambda_b()).sqrt()
}
