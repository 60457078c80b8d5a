//! Invariants over random inputs.

mod common;

use std::f64::consts::PI;

use common::march;
use ionize_core::alpha::AlphaProfile;
use ionize_core::dynamics::survival_amplitude_with_stride;
use ionize_core::propagator::free_kernel;
use ionize_core::spectral::{fold, sign_lemma_value};
use ionize_core::{ComplexPoint, Coupling, ModelParams, Normalization, C64};
use proptest::prelude::*;

proptest! {
    #[test]
    fn strip_decomposition_round_trips(re in -5.0..5.0f64, im in -200.0..200.0f64, omega in 0.1..10.0f64) {
        let p = C64::new(re, im);
        let d = ComplexPoint::decompose(p, omega);
        prop_assert!(d.p0.im >= 0.0 && d.p0.im < omega);
        prop_assert_eq!(d.p0.re, re);
        prop_assert!((d.reconstruct(omega) - p).norm() <= 1e-12 * (1.0 + im.abs()));
        prop_assert_eq!(fold(p, omega), d.p0);
    }

    #[test]
    fn kernel_modulus_ignores_position(t in 1e-3..1e3f64, x in 0.0..50.0f64) {
        let k = free_kernel(t, x).unwrap();
        let want = (4.0 * PI * t).powf(-1.5);
        prop_assert!((k.norm() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn scaling_alpha_scales_its_values(a0 in -2.0..2.0f64, a1 in -1.0..1.0f64, c in -3.0..3.0f64, t in 0.0..20.0f64) {
        let p = AlphaProfile::cosine(3.0, a0, a1).unwrap();
        let s = p.scaled(c);
        prop_assert!((s.evaluate(t) - c * p.evaluate(t)).abs() <= 1e-12 * (1.0 + p.evaluate(t).abs()));
    }

    #[test]
    fn lattice_shift_has_negative_imaginary_part(
        n in -30i64..30,
        re in 1e-3..10.0f64,
        im in 0.0..3.0f64,
        r in 0.3..3.0f64,
    ) {
        let params = ModelParams::with_conventions(
            r,
            AlphaProfile::cosine(3.0, 1.0, 0.25).unwrap(),
            Normalization::Unit,
            Coupling::Printed,
        )
        .unwrap();
        let v = sign_lemma_value(n, C64::new(re, im), &params).unwrap();
        prop_assert!(v < 0.0, "n={} p={}+{}i: {}", n, re, im, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn survival_amplitude_is_bounded(r in 0.5..2.5f64, a0 in 0.0..1.5f64, a1 in 0.0..0.5f64) {
        let params = ModelParams::new(r, AlphaProfile::cosine(3.0, a0, a1).unwrap()).unwrap();
        let traj = march(&params, 3.0, 300);
        let s = survival_amplitude_with_stride(&traj, 10).unwrap();
        for z in &s.theta {
            prop_assert!(z.norm() <= 1.0 + 1e-6, "{}", z.norm());
        }
    }
}
