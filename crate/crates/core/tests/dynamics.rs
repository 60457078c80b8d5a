//! State reconstruction against momentum-space oracles.

mod common;

use std::f64::consts::PI;

use common::{march, simpson};
use ionize_core::dynamics::{
    inside_probability, inside_probability_monte_carlo, norm_squared, survival_amplitude, wavefunction,
};
use ionize_core::propagator::{evolved_bound_state, free_overlap};
use ionize_core::{BallQuadrature, ChargeTrajectory, ModelParams, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `(int_0^1 e^{-x s} ds, int_0^1 s e^{-x s} ds)` written out independently.
fn cell_weights(x: C64) -> (C64, C64) {
    if x.norm() < 1e-2 {
        let (mut g0, mut g1, mut term) = (c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        for k in 0..10 {
            g0 += term / (k + 1) as f64;
            g1 += term / (k + 2) as f64;
            term *= -x / (k + 1) as f64;
        }
        return (g0, g1);
    }
    let e = (-x).exp();
    ((1.0 - e) / x, (1.0 - e * (1.0 + x)) / (x * x))
}

/// `int_0^t q(tau) e^{-lambda (t - tau)} dtau` for the piecewise-linear charge.
fn duhamel(t: &[f64], q: &[C64], lambda: C64) -> C64 {
    let tm = *t.last().unwrap();
    let mut acc = c(0.0, 0.0);
    for j in 0..t.len() - 1 {
        let h = t[j + 1] - t[j];
        let decay = (-lambda * (tm - t[j + 1])).exp();
        if decay.norm() < 1e-300 {
            continue;
        }
        let (g0, g1) = cell_weights(lambda * h);
        // sigma = t_{j+1} - tau runs over [0, h].
        acc += decay * h * (q[j + 1] * g0 - (q[j + 1] - q[j]) * g1);
    }
    acc
}

/// `theta(t_max)` from
/// `2 pi N^2 theta = 8 N^2 int k^2 e^{-ik^2 t}/(k^2+1)^2
///   + i (2N/pi) int [k^2/(k^2+1) Q1(k) + k sin(kr)/(r(k^2+1)) Q2(k)] dk`.
fn survival_oracle(traj: &ChargeTrajectory) -> C64 {
    let mesh = traj.mesh();
    let t = *mesh.t.last().unwrap();
    let n = traj.params.bound_state().constant;
    let r = traj.params.r();
    let w = c(0.5f64.sqrt(), -(0.5f64.sqrt()));

    // k = u e^{-i pi/4}, u = tan(phi): every exponential decays.
    let free = simpson(
        |phi| {
            if phi >= PI / 2.0 {
                return c(0.0, 0.0);
            }
            let u = phi.tan();
            let k2 = c(0.0, -u * u);
            w * k2 * (-u * u * t).exp() / ((k2 + 1.0) * (k2 + 1.0)) * (1.0 + u * u)
        },
        0.0,
        PI / 2.0,
        4000,
    );
    let j1 = simpson(
        |phi| {
            let q_end = mesh.q1[mesh.q1.len() - 1];
            if phi >= PI / 2.0 {
                return w * q_end;
            }
            let u = phi.tan();
            let k2 = c(0.0, -u * u);
            let q = duhamel(&mesh.t, &mesh.q1, c(u * u, 0.0));
            w * k2 / (k2 + 1.0) * q * (1.0 + u * u)
        },
        0.0,
        PI / 2.0,
        20_000,
    );
    // Real axis for the offset center; the q2(t)/(i k^2) term is done in closed form.
    let q2_end = mesh.q2[mesh.q2.len() - 1];
    let lead = |k: f64| {
        if k == 0.0 {
            q2_end / c(0.0, 1.0)
        } else {
            q2_end * (k * r).sin() / (c(0.0, 1.0) * r * k * (k * k + 1.0))
        }
    };
    let j2 = simpson(
        |k| {
            let full = if k == 0.0 {
                c(0.0, 0.0)
            } else {
                k * (k * r).sin() / (r * (k * k + 1.0)) * duhamel(&mesh.t, &mesh.q2, c(0.0, k * k))
            };
            full - lead(k)
        },
        0.0,
        80.0,
        40_000,
    ) + q2_end / c(0.0, 1.0) / r * (PI / 2.0) * (1.0 - (-r).exp());

    (8.0 * n * n * free + c(0.0, 1.0) * (2.0 * n / PI) * (j1 + j2)) / (2.0 * PI * n * n)
}

#[test]
fn survival_with_zero_charges_matches_momentum_quadrature() {
    let params = ModelParams::default_generic();
    let mut traj = march(&params, 2.0, 200);
    for v in [&mut traj.q1, &mut traj.q2, &mut traj.fine_q1, &mut traj.fine_q2] {
        v.iter_mut().for_each(|z| *z = c(0.0, 0.0));
    }
    let s = survival_amplitude(&traj).unwrap();
    let got = *s.theta.last().unwrap();
    let want = survival_oracle(&traj);
    assert!((got - want).norm() < 1e-6, "survival {got} vs oracle {want}");
}

/// The oracle integrates the piecewise-linear charges exactly; the product
/// rule in the library is second order, so the gap must shrink with `h^2`.
#[test]
fn survival_converges_to_momentum_space_oracle() {
    let params = ModelParams::default_generic();
    let gap = |n: usize| {
        let traj = march(&params, 2.0, n);
        let s = survival_amplitude(&traj).unwrap();
        (*s.theta.last().unwrap() - survival_oracle(&traj)).norm()
    };
    let (coarse, fine) = (gap(200), gap(400));
    assert!(coarse < 1e-4, "gap {coarse}");
    assert!((coarse / fine).log2() > 1.8, "gaps {coarse} -> {fine}");
}

#[test]
fn free_evolution_matches_rotated_momentum_integral() {
    let params = ModelParams::default_generic();
    let psi = params.bound_state();
    let w = c(0.5f64.sqrt(), -(0.5f64.sqrt()));
    for &(t, x) in &[(0.3f64, 0.5f64), (1.0, 1.0), (2.5, 3.0)] {
        // (2N/(pi x)) int k sin(kx) e^{-ik^2 t}/(k^2+1) dk on k = u e^{-i pi/4}.
        let integral = simpson(
            |u| {
                let k = w * u;
                w * k * (k * x).sin() * (-u * u * t).exp() / (k * k + 1.0)
            },
            0.0,
            (40.0f64 / t).sqrt(),
            20_000,
        );
        let want = 2.0 * psi.constant / (PI * x) * integral;
        let got = evolved_bound_state(t, x, &psi).unwrap();
        assert!((got - want).norm() < 1e-9, "t={t} x={x}: {got} vs {want}");
    }
    // The overlap is the same integral against Psi0.
    let t = 0.7;
    let ov = simpson(
        |u| {
            let k2 = c(0.0, -u * u);
            w * k2 * (-u * u * t).exp() / ((k2 + 1.0) * (k2 + 1.0))
        },
        0.0,
        (40.0f64 / t).sqrt(),
        20_000,
    ) * 8.0
        * psi.constant
        * psi.constant;
    assert!((free_overlap(t, &psi) - ov).norm() < 1e-9);
}

#[test]
fn wavefunction_is_regular_between_centers() {
    let params = ModelParams::default_generic();
    let traj = march(&params, 2.0, 200);
    // Continuity across a small step off the axis between the centers.
    let a = wavefunction(2.0, [0.0, 0.0, 0.5], &traj).unwrap();
    let b = wavefunction(2.0, [1e-4, 0.0, 0.5], &traj).unwrap();
    assert!((a - b).norm() < 1e-3 * a.norm());
}

#[test]
fn norm_is_conserved() {
    let params = ModelParams::default_generic();
    let traj = march(&params, 2.0, 200);
    for t in [0.5, 2.0] {
        let v = norm_squared(&traj, t).unwrap();
        assert!((v - 1.0).abs() < 1e-4, "t={t}: {v}");
    }
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let params = ModelParams::default_generic();
    let traj = march(&params, 5.0, 500);
    let quad = inside_probability(&traj, 5.0, 2.0, &BallQuadrature::default()).unwrap();
    let (mean, err) = inside_probability_monte_carlo(&traj, 5.0, 2.0, 1_000_000, 7).unwrap();
    assert!((mean - quad).abs() < 3.0 * err, "quadrature {quad}, monte carlo {mean} +- {err}");
}
