//! Special functions and small numerical kernels shared by the solvers.
//!
//! The Faddeeva function comes from the `errorfunctions` crate. Everything
//! built on top of it (the auxiliary functions `h`, `h2` used in the cell
//! moments of `e^{iB/s}`, Gauss-Legendre rules, compensated sums) lives here.

use std::f64::consts::PI;
use std::sync::OnceLock;

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;

/// Shorthand used throughout the crate.
pub type C64 = Complex64;

/// The imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);

/// `sqrt(pi)`.
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// `e^{i phi}`.
#[inline]
pub fn cis(phi: f64) -> C64 {
    let (s, c) = phi.sin_cos();
    C64::new(c, s)
}

/// Faddeeva function `w(z) = e^{-z^2} erfc(-iz)`.
#[inline]
pub fn faddeeva(z: C64) -> C64 {
    z.w()
}

/// Scaled complementary error function `erfcx(z) = e^{z^2} erfc(z) = w(iz)`.
#[inline]
pub fn erfcx(z: C64) -> C64 {
    z.erfcx()
}

/// Below this modulus `h` and `h2` are evaluated from `w` directly; above it
/// the asymptotic series is used (it converges to machine precision there and
/// avoids the cancellation in `1 + i sqrt(pi) z w(z)`).
const ASYMPTOTIC_RADIUS: f64 = 6.0;

/// `h(z) = 1 + i sqrt(pi) z w(z)`, valid for `z` in the closed upper half plane.
///
/// For large `|z|`, `h(z) = -sum_{k>=1} (2k-1)!! / (2 z^2)^k`.
pub fn h_aux(z: C64) -> C64 {
    if z.norm() < ASYMPTOTIC_RADIUS {
        return C64::new(1.0, 0.0) + I * SQRT_PI * z * faddeeva(z);
    }
    let x = 1.0 / (2.0 * z * z);
    let mut term = x;
    let mut sum = C64::new(0.0, 0.0);
    for k in 1..200 {
        sum += term;
        let next = term * x * (2 * k + 1) as f64;
        if next.norm() < 1e-18 * sum.norm() || next.norm() > term.norm() {
            break;
        }
        term = next;
    }
    -sum
}

/// `h2(z) = 1 + 2 z^2 h(z)`, with asymptotic series
/// `-sum_{k>=2} (2k-1)!! / (2 z^2)^{k-1}`.
pub fn h2_aux(z: C64) -> C64 {
    if z.norm() < ASYMPTOTIC_RADIUS {
        return C64::new(1.0, 0.0) + 2.0 * z * z * h_aux(z);
    }
    let x = 1.0 / (2.0 * z * z);
    let mut term = 3.0 * x;
    let mut sum = C64::new(0.0, 0.0);
    for k in 2..200 {
        sum += term;
        let next = term * x * (2 * k + 1) as f64;
        if next.norm() < 1e-18 * sum.norm() || next.norm() > term.norm() {
            break;
        }
        term = next;
    }
    -sum
}

/// `G0(s) = int_0^s e^{iB/u} u^{-1/2} du` for `B > 0`, `s >= 0`.
pub fn osc_g0(s: f64, b: f64) -> C64 {
    if s <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let z = cis(PI / 4.0) * (b / s).sqrt();
    2.0 * s.sqrt() * cis(b / s) * h_aux(z)
}

/// `G1(s) = int_0^s e^{iB/u} u^{1/2} du` for `B > 0`, `s >= 0`.
pub fn osc_g1(s: f64, b: f64) -> C64 {
    if s <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let z = cis(PI / 4.0) * (b / s).sqrt();
    (2.0 / 3.0) * s * s.sqrt() * cis(b / s) * h2_aux(z)
}

/// `H0(s) = int_0^s e^{iB/u} u^{-3/2} du` for `B > 0`, `s >= 0`.
pub fn osc_h0(s: f64, b: f64) -> C64 {
    if s <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let z = cis(PI / 4.0) * (b / s).sqrt();
    (PI / b).sqrt() * cis(PI / 4.0 + b / s) * faddeeva(z)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A Gauss-Legendre rule cached for reuse.
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Map the rule to `[a, b]`, returning `(points, weights)` pairs.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Cached rule with `n` points for the sizes used in the crate.
pub fn gauss_rule(n: usize) -> &'static GaussRule {
    static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        (0..=32)
            .map(|k| {
                let (nodes, weights) = gauss_legendre(k.max(1));
                GaussRule { nodes, weights }
            })
            .collect()
    });
    &rules[n.clamp(1, 32)]
}

/// Neumaier-compensated accumulator for complex sums.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: C64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

impl std::iter::FromIterator<C64> for CompensatedSum {
    fn from_iter<T: IntoIterator<Item = C64>>(iter: T) -> Self {
        let mut s = CompensatedSum::new();
        for z in iter {
            s.add(z);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    // Reference values from an independent Faddeeva implementation (scipy.special.wofz).
    #[test]
    fn faddeeva_reference_values() {
        let cases = [
            ((1.0, 1.0), (0.304_744_205_256_912_54, 0.208_218_938_202_831_6)),
            ((0.0, 2.0), (0.255_395_676_310_505_8, 0.0)),
            ((-0.7, 0.3), (0.520_191_968_973_015_1, -0.377_687_819_618_546_6)),
            ((3.0, -0.5), (-0.037_440_117_100_424_296, 0.193_028_479_427_317_46)),
            ((10.0, 10.0), (0.028_279_467_454_232_453, 0.028_138_433_276_336_9)),
        ];
        for ((x, y), (re, im)) in cases {
            let w = faddeeva(C64::new(x, y));
            assert!(close(w, C64::new(re, im), 1e-14), "{x} {y} {w}");
        }
    }

    #[test]
    fn h_series_matches_direct_at_switch() {
        for arg in [0.3, 0.785, 1.2] {
            let z = cis(arg) * 6.0;
            let direct = C64::new(1.0, 0.0) + I * SQRT_PI * z * faddeeva(z);
            assert!(close(h_aux(z * 1.000_001), direct, 1e-5));
            let direct2 = C64::new(1.0, 0.0) + 2.0 * z * z * direct;
            assert!(close(h2_aux(z * 1.000_001), direct2, 1e-4));
        }
    }

    fn num_deriv(f: impl Fn(f64) -> C64, s: f64) -> C64 {
        let e = 1e-5 * s;
        (f(s + e) - f(s - e)) / (2.0 * e)
    }

    #[test]
    fn antiderivatives_differentiate_to_integrands() {
        let b = 0.37;
        for s in [0.02, 0.3, 1.0, 7.5] {
            let k = cis(b / s);
            assert!(close(num_deriv(|u| osc_g0(u, b), s), k / s.sqrt(), 1e-7));
            assert!(close(num_deriv(|u| osc_g1(u, b), s), k * s.sqrt(), 1e-7));
            assert!(close(num_deriv(|u| osc_h0(u, b), s), k / (s * s.sqrt()), 1e-7));
        }
    }

    #[test]
    fn antiderivatives_vanish_at_origin() {
        let b = 0.25;
        assert!(osc_g0(1e-9, b).norm() < 1e-12);
        assert!(osc_g1(1e-9, b).norm() < 1e-12);
        assert!(osc_h0(1e-9, b).norm() < 1e-3);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 4, 8, 16] {
            let rule = gauss_rule(n);
            let deg = 2 * n - 1;
            let val: f64 = rule.on(0.0, 2.0).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((val - exact).abs() < 1e-12 * exact, "{n}");
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(C64::new(1e16, 0.0));
        for _ in 0..1000 {
            s.add(C64::new(1.0, 1.0));
        }
        s.add(C64::new(-1e16, 0.0));
        assert_eq!(s.value(), C64::new(1000.0, 1000.0));
    }
}
