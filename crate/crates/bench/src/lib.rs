//! Shared fixtures for the benchmarks and the acceptance report.

use ionize_core::volterra::{precompute_cross_kernel, solve_charges, Forcing};
use ionize_core::{ChargeTrajectory, ModelParams, SolverOptions, TimeGrid};

/// Bound-state march of the reference configuration on `[0, t_max]`.
pub fn reference_march(t_max: f64, n_steps: usize) -> ChargeTrajectory {
    let params = ModelParams::default_generic();
    let grid = TimeGrid::new(t_max, n_steps).expect("valid grid");
    let table = precompute_cross_kernel(&params, grid);
    solve_charges(&params, &table, &Forcing::bound_state(&params), &SolverOptions::new(grid)).expect("march")
}
