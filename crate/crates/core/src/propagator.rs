//! Free propagator `U0(t) = exp(i Laplacian t)` and the free evolution of the
//! bound state, evaluated in closed form through the Faddeeva function.
//!
//! Branch convention (used everywhere in the crate): fractional powers of `i`
//! are principal, `i^a = e^{i pi a / 2}`, and `sqrt` cuts along the negative
//! real axis with `arg` in `(-pi, pi]`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::model::BoundState;
use crate::special::{cis, erfcx, faddeeva, C64, I, SQRT_PI};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("bound state is singular at the origin for t = 0")]
    SingularAtOrigin,
    #[error("Re(p) must be positive, got {0}")]
    LeftHalfPlane(f64),
}

/// `e^{i pi/4}`.
pub fn e14() -> C64 {
    cis(PI / 4.0)
}

/// `e^{3i pi/4}`.
pub fn e34() -> C64 {
    cis(3.0 * PI / 4.0)
}

/// Principal square root with the `arg = pi` edge mapped to `+i`.
pub fn principal_sqrt(z: C64) -> C64 {
    // Map a negative zero imaginary part to +0 so that sqrt(-1) = +i.
    let z = if z.im == 0.0 { C64::new(z.re, 0.0) } else { z };
    z.sqrt()
}

/// Free kernel `U0(t; x) = (4 pi i t)^{-3/2} e^{i |x|^2 / 4t}`.
pub fn free_kernel(t: f64, x_norm: f64) -> Result<C64, PropagatorError> {
    if t <= 0.0 || t.is_nan() {
        return Err(PropagatorError::NonPositiveTime(t));
    }
    Ok((4.0 * PI * t).powf(-1.5) * cis(-3.0 * PI / 4.0 + x_norm * x_norm / (4.0 * t)))
}

/// `(U0(t) Psi0)(0) = N [e^{-i pi/4}/sqrt(pi t) - w(e^{3i pi/4} sqrt t)]`, `t > 0`.
fn evolved_at_origin(t: f64, n: f64) -> C64 {
    n * (cis(-PI / 4.0) / (PI * t).sqrt() - faddeeva(e34() * t.sqrt()))
}

/// Above this time the leading stationary-phase term is returned.
const LARGE_TIME: f64 = 1e10;

/// `(U0(t) Psi0)(x)` for `|x| = x_norm`.
///
/// Closed form: `(N / 2 rho) e^{i rho^2/4t} [w(z+) - w(z-)]` with
/// `z+- = (2ti -+ rho) e^{i pi/4} / (2 sqrt t)`. When `z+` falls in the lower
/// half plane (`rho > 2t`) the reflection `w(z) = 2e^{-z^2} - w(-z)` is
/// applied, which splits off the exact term `e^{it} Psi0(x)`.
pub fn evolved_bound_state(t: f64, x_norm: f64, psi: &BoundState) -> Result<C64, PropagatorError> {
    let n = psi.constant;
    if t < 0.0 || t.is_nan() {
        return Err(PropagatorError::NegativeTime(t));
    }
    if t == 0.0 {
        if x_norm == 0.0 {
            return Err(PropagatorError::SingularAtOrigin);
        }
        return Ok(C64::new(psi.value(x_norm), 0.0));
    }
    if t > LARGE_TIME {
        // Only the k -> 0 part of the spectrum survives: 4 pi N (4 pi i t)^{-3/2}.
        return Ok(4.0 * PI * n * free_kernel(t, 0.0)?);
    }
    let rho = x_norm;
    let st = t.sqrt();
    if rho < 1e-7 * (1.0 + st) {
        // The function is even and smooth in rho; the correction is O(rho^2).
        return Ok(evolved_at_origin(t, n));
    }
    let zp = (C64::new(-rho, 2.0 * t)) * e14() / (2.0 * st);
    let zm = (C64::new(rho, 2.0 * t)) * e14() / (2.0 * st);
    let phase = cis(rho * rho / (4.0 * t));
    let val = if zp.im >= 0.0 {
        (n / (2.0 * rho)) * phase * (faddeeva(zp) - faddeeva(zm))
    } else {
        cis(t) * psi.value(rho) - (n / (2.0 * rho)) * phase * (faddeeva(-zp) + faddeeva(zm))
    };
    Ok(val)
}

/// The oscillatory remainder of the evolved bound state at distance `rho`,
/// `phi(s) = sqrt(s) e^{-i rho^2/4s} [(U0(s)Psi0)(rho) - e^{is} Psi0(rho)]`.
///
/// It is bounded and vanishes as `s -> 0`; evaluated without subtraction on
/// the side `rho > 2s` where the split-off term is exact.
pub fn oscillatory_remainder(s: f64, rho: f64, psi: &BoundState) -> C64 {
    if s <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let n = psi.constant;
    let st = s.sqrt();
    let zp = (C64::new(-rho, 2.0 * s)) * e14() / (2.0 * st);
    let zm = (C64::new(rho, 2.0 * s)) * e14() / (2.0 * st);
    if zp.im >= 0.0 {
        st * ((n / (2.0 * rho)) * (faddeeva(zp) - faddeeva(zm))
            - cis(s - rho * rho / (4.0 * s)) * psi.value(rho))
    } else {
        -st * (n / (2.0 * rho)) * (faddeeva(-zp) + faddeeva(zm))
    }
}

/// Coefficients of the singular expansion of the evolved bound state at its
/// own center, `(U0(s)Psi0)(0) = c_minus s^{-1/2} + c_plus s^{1/2} - N + O(s)`.
pub fn origin_expansion(psi: &BoundState) -> (C64, C64) {
    let n = psi.constant;
    (n * cis(-PI / 4.0) / SQRT_PI, 2.0 * n * e14() / SQRT_PI)
}

/// Survival overlap `(Psi0, U0(t) Psi0)`,
/// `2 pi N^2 [(1 + 2it) w(e^{3i pi/4} sqrt t) - 2 e^{i pi/4} sqrt(t/pi)]`.
pub fn free_overlap(t: f64, psi: &BoundState) -> C64 {
    let n2 = psi.constant * psi.constant;
    if t <= 0.0 {
        return C64::new(2.0 * PI * n2, 0.0);
    }
    if t > LARGE_TIME {
        // |Psi0_hat(0)|^2 (4 pi i t)^{-3/2} = (4 pi N)^2 (4 pi i t)^{-3/2}.
        return (4.0 * PI * psi.constant).powi(2) * (4.0 * PI * t).powf(-1.5) * cis(-3.0 * PI / 4.0);
    }
    let st = t.sqrt();
    2.0 * PI * n2 * (C64::new(1.0, 2.0 * t) * faddeeva(e34() * st) - 2.0 * e14() * st / SQRT_PI)
}

/// `4 sqrt(pi i) int_0^t (U0(tau) Psi0)(0) / sqrt(t - tau) dtau = 4 pi N w(e^{3i pi/4} sqrt t)`.
pub fn abel_forcing_origin(t: f64, psi: &BoundState) -> C64 {
    let t = t.max(0.0);
    4.0 * PI * psi.constant * faddeeva(e34() * t.sqrt())
}

/// `4 sqrt(pi i) int_0^t (U0(tau) Psi0)(r) / sqrt(t - tau) dtau`.
///
/// Closed form `-(2 pi N / r)[e^{-r} D(0) - e^{i r^2/4t} D(r)]`, with
/// `D(b) = erfcx(b c/(2 sqrt t) + a sqrt t) - erfcx(b c/(2 sqrt t) - a sqrt t)`,
/// `a = e^{i pi/4}`, `c = e^{-i pi/4}`. It behaves like `8 sqrt(pi t) e^{i pi/4} Psi0(r)` as `t -> 0`.
pub fn abel_forcing_at(t: f64, r: f64, psi: &BoundState) -> C64 {
    if t <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let st = t.sqrt();
    let a = e14();
    let c = cis(-PI / 4.0);
    let d = |b: f64| {
        let base = b * c / (2.0 * st);
        erfcx(base + a * st) - erfcx(base - a * st)
    };
    -(2.0 * PI * psi.constant / r) * ((-r).exp() * d(0.0) - cis(r * r / (4.0 * t)) * d(r))
}

/// `int_0^inf e^{-pt} U0(t; x) dt = -i e^{-sqrt(-ip)|x|} / (4 pi |x|)`.
pub fn laplace_free_kernel(p: C64, x_norm: f64) -> C64 {
    let kappa = principal_sqrt(-I * p);
    -I * (-kappa * x_norm).exp() / (4.0 * PI * x_norm)
}

/// Exact Laplace transforms of [`abel_forcing_origin`] and [`abel_forcing_at`]:
/// `-4 pi i N / (kappa (1 + kappa))` and
/// `-4 pi i N (e^{-kappa r} - e^{-r}) / (r kappa (1 + ip))`, `kappa = sqrt(-ip)`.
pub fn laplace_forcing(p: C64, r: f64, psi: &BoundState) -> (C64, C64) {
    let n = psi.constant;
    let kappa = principal_sqrt(-I * p);
    let one = C64::new(1.0, 0.0);
    let f1 = -4.0 * PI * I * n / (kappa * (one + kappa));
    let f2 = -4.0 * PI * I * n * ((-kappa * r).exp() - (-r).exp()) / (r * kappa * (one + I * p));
    (f1, f2)
}

/// The Laplace-domain forcings exactly as printed:
/// `F1(p) = -2i sqrt(2 pi)/(1 + ip)`,
/// `F2(p) = -(2i sqrt(2 pi)/sqrt(-ip)) (e^{-sqrt(-ip) r} - e^{-r}) / (r (1 + ip))`.
///
/// For `N = 1/sqrt(2 pi)`, `F2` is the transform of [`abel_forcing_at`],
/// while `F1` is the forcing of the first equation after division by its
/// diagonal symbol `1 - 1/kappa`, with the opposite sign:
/// `F1 = -kappa/(kappa - 1) L[abel_forcing_origin]`.
pub fn forcing_laplace_reference(p: C64, r: f64) -> Result<(C64, C64), PropagatorError> {
    if p.re <= 0.0 {
        return Err(PropagatorError::LeftHalfPlane(p.re));
    }
    let kappa = principal_sqrt(-I * p);
    let k = 2.0 * I * (2.0 * PI).sqrt();
    let den = C64::new(1.0, 0.0) + I * p;
    let f1 = -k / den;
    let f2 = -(k / kappa) * ((-kappa * r).exp() - (-r).exp()) / (r * den);
    Ok((f1, f2))
}
