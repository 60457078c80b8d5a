//! Time march convergence and the transform duality with the lattice solve.

mod common;

use common::march;
use ionize_core::acceptance::volterra_order;
use ionize_core::alpha::AlphaProfile;
use ionize_core::spectral::build_and_solve;
use ionize_core::{ModelParams, C64};

#[test]
fn observed_order_on_three_grids() {
    for params in [
        ModelParams::default_generic(),
        ModelParams::new(0.7, AlphaProfile::cosine(3.0, 0.3, 0.25).unwrap()).unwrap(),
    ] {
        let (order, e1, e2) = volterra_order(&params, 2.0, 100).unwrap();
        assert!(order >= 1.0, "order {order} from {e1:e}, {e2:e}");
        assert!(e2 < e1);
    }
}

#[test]
fn laplace_transform_matches_lattice_solution() {
    // Re p = 2 makes the neglected tail beyond t = 20 of order e^{-40}.
    let params = ModelParams::default_generic();
    let traj = march(&params, 20.0, 2000);
    for p in [C64::new(2.0, 0.0), C64::new(2.0, 1.3), C64::new(2.5, 2.9)] {
        let est = traj.laplace_transform(p);
        let sol = build_and_solve(p, 64, &params).unwrap();
        for (got, want) in [(est.q1, sol.component(1, 0).unwrap()), (est.q2, sol.component(2, 0).unwrap())] {
            let rel = (got - want).norm() / want.norm();
            assert!(rel < 1e-4, "p={p}: {got} vs {want} (rel {rel:e})");
        }
    }
}

#[test]
fn truncation_drift_is_negligible() {
    let params = ModelParams::default_generic();
    let p = C64::new(1.0, 0.9);
    let a = build_and_solve(p, 32, &params).unwrap();
    let b = build_and_solve(p, 64, &params).unwrap();
    for j in [1, 2] {
        assert!((a.component(j, 0).unwrap() - b.component(j, 0).unwrap()).norm() < 1e-8);
    }
}
