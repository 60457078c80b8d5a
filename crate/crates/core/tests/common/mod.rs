#![allow(dead_code)]

use ionize_core::volterra::{precompute_cross_kernel, solve_charges, Forcing};
use ionize_core::{ChargeTrajectory, InitialState, ModelParams, SolverOptions, TimeGrid, C64};

pub fn march(params: &ModelParams, t_max: f64, n: usize) -> ChargeTrajectory {
    let g = TimeGrid::new(t_max, n).unwrap();
    let tab = precompute_cross_kernel(params, g);
    let f = Forcing::new(InitialState::BoundState, params).unwrap();
    solve_charges(params, &tab, &f, &SolverOptions::new(g)).unwrap()
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> C64, a: f64, b: f64, n: usize) -> C64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}
