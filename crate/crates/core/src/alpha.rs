//! The periodic strength `alpha(t) = sum_n alpha_n e^{-i n omega t}` and the
//! shift-span genericity residual of its positive Fourier tail.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{cis, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlphaError {
    #[error("omega must be positive and finite, got {0}")]
    BadOmega(f64),
    #[error("coefficient alpha_{n} is not finite")]
    NonFinite { n: i64 },
    #[error("reality violated: alpha_{n} = {a} but conj(alpha_{neg}) = {b}")]
    Reality { n: i64, neg: i64, a: C64, b: C64 },
    #[error("alpha_0 must be real, got imaginary part {0}")]
    ComplexMean(f64),
    #[error("truncation M must be at least 1")]
    BadTruncation,
}

/// Tolerance used when checking `alpha_n = conj(alpha_{-n})`.
pub const REALITY_TOL: f64 = 1e-12;

/// Fourier coefficients of a real periodic strength. Stored densely for
/// `n` in `[-n_max, n_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaProfile {
    omega: f64,
    n_max: usize,
    coeffs: Vec<C64>,
}

impl AlphaProfile {
    /// Build from `(n, alpha_n)` pairs. Pairs with `n < 0` are optional and,
    /// when present, must agree with conjugation of the `n > 0` entry.
    pub fn new(omega: f64, pairs: &[(i64, C64)]) -> Result<Self, AlphaError> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(AlphaError::BadOmega(omega));
        }
        let n_max = pairs.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * n_max + 1];
        let mut given = vec![false; 2 * n_max + 1];
        for &(n, a) in pairs {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(AlphaError::NonFinite { n });
            }
            let idx = (n + n_max as i64) as usize;
            coeffs[idx] += a;
            given[idx] = true;
        }
        for n in 1..=n_max as i64 {
            let ip = (n + n_max as i64) as usize;
            let im = (-n + n_max as i64) as usize;
            match (given[ip], given[im]) {
                (true, false) => coeffs[im] = coeffs[ip].conj(),
                (false, true) => coeffs[ip] = coeffs[im].conj(),
                _ => {}
            }
            let (a, b) = (coeffs[ip], coeffs[im].conj());
            if (a - b).norm() > REALITY_TOL * (1.0 + a.norm()) {
                return Err(AlphaError::Reality { n, neg: -n, a, b });
            }
        }
        let a0 = coeffs[n_max];
        if a0.im.abs() > REALITY_TOL * (1.0 + a0.re.abs()) {
            return Err(AlphaError::ComplexMean(a0.im));
        }
        coeffs[n_max].im = 0.0;
        let mut p = AlphaProfile { omega, n_max, coeffs };
        p.trim();
        Ok(p)
    }

    /// Constant strength `alpha(t) = alpha0`.
    pub fn constant(omega: f64, alpha0: f64) -> Result<Self, AlphaError> {
        Self::new(omega, &[(0, C64::new(alpha0, 0.0))])
    }

    /// `alpha(t) = alpha0 + 2 a1 cos(omega t)`, i.e. `alpha_{+-1} = a1`.
    pub fn cosine(omega: f64, alpha0: f64, a1: f64) -> Result<Self, AlphaError> {
        Self::new(omega, &[(0, C64::new(alpha0, 0.0)), (1, C64::new(a1, 0.0))])
    }

    fn trim(&mut self) {
        while self.n_max > 0 && self.coefficient(self.n_max as i64).norm() == 0.0 {
            let n = self.n_max;
            self.coeffs = self.coeffs[1..2 * n].to_vec();
            self.n_max -= 1;
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Largest `|n|` with a stored (nonzero) coefficient.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `alpha_n`, zero outside the stored range.
    pub fn coefficient(&self, n: i64) -> C64 {
        if n.unsigned_abs() as usize > self.n_max {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(n + self.n_max as i64) as usize]
        }
    }

    /// The mean `alpha_0` (real).
    pub fn alpha0(&self) -> f64 {
        self.coefficient(0).re
    }

    /// `sum_n |alpha_n|`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Nonzero coefficients as `(n, alpha_n)`, ascending in `n`.
    pub fn pairs(&self) -> Vec<(i64, C64)> {
        (-(self.n_max as i64)..=self.n_max as i64)
            .map(|n| (n, self.coefficient(n)))
            .filter(|(_, c)| c.norm() > 0.0)
            .collect()
    }

    /// The positive tail `(alpha_1, alpha_2, ...)`.
    pub fn positive_tail(&self) -> Vec<C64> {
        (1..=self.n_max as i64).map(|n| self.coefficient(n)).collect()
    }

    /// `alpha(t)`. The imaginary part of the raw sum vanishes by reality and is dropped.
    pub fn evaluate(&self, t: f64) -> f64 {
        let mut s = self.alpha0();
        for n in 1..=self.n_max as i64 {
            // alpha_n e^{-in w t} + conj(...) = 2 Re(alpha_n e^{-i n w t})
            s += 2.0 * (self.coefficient(n) * cis(-(n as f64) * self.omega * t)).re;
        }
        s
    }

    /// Raw complex sum over all stored `n`, exposed for the reality check.
    pub fn evaluate_raw(&self, t: f64) -> C64 {
        (-(self.n_max as i64)..=self.n_max as i64)
            .map(|n| self.coefficient(n) * cis(-(n as f64) * self.omega * t))
            .sum()
    }

    /// The same profile scaled by a real factor.
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        for a in &mut p.coeffs {
            *a *= c;
        }
        p.trim();
        p
    }
}

/// Which shift generates the span tested against `e_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shift {
    /// `(S a)_n = a_{n-1}`, `(S a)_1 = 0`: spans `z^j f(z)` in Hardy-space terms.
    #[default]
    Right,
    /// `(T a)_n = a_{n+1}`: drops the leading entry.
    Left,
}

/// Residual of `e_1` against the span of the first `M` shifts of the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub m: usize,
    pub residual: f64,
    pub residual_history: Vec<(usize, f64)>,
    pub shift: Shift,
    pub tolerance: f64,
    pub generic: bool,
    pub trivially_nongeneric: bool,
}

/// Default verdict threshold.
pub const GENERICITY_TOL: f64 = 1e-8;

/// Default truncations for residual sweeps.
pub const DEFAULT_TRUNCATIONS: [usize; 4] = [25, 50, 100, 200];

/// Distance from `e_1` to the span of `M` shifts of `tail`, solved by a
/// truncated SVD least-squares problem.
///
/// Right shifts are represented exactly (rows `M + L - 1`, `L` the tail
/// length), so the residual converges from above to the distance in the
/// infinite-dimensional space. Left shifts only ever see the finite tail.
pub fn shift_span_residual(tail: &[C64], m: usize, shift: Shift) -> f64 {
    let len = tail.iter().rposition(|a| a.norm() > 0.0).map_or(0, |i| i + 1);
    if len == 0 || m == 0 {
        return 1.0;
    }
    let tail = &tail[..len];
    let rows = match shift {
        Shift::Right => m + len - 1,
        Shift::Left => len.max(1),
    };
    let mut a = DMatrix::<C64>::zeros(rows, m);
    for j in 0..m {
        for (i, &v) in tail.iter().enumerate() {
            match shift {
                Shift::Right => a[(i + j, j)] = v,
                Shift::Left => {
                    if i >= j {
                        a[(i - j, j)] = v;
                    }
                }
            }
        }
    }
    let mut e1 = DVector::<C64>::zeros(rows);
    e1[0] = C64::new(1.0, 0.0);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13 * (rows.max(m) as f64);
    let x = match svd.solve(&e1, eps) {
        Ok(x) => x,
        Err(_) => return 1.0,
    };
    let r = &e1 - &a * x;
    r.norm().min(1.0)
}

/// Genericity residual with a residual curve over the usual truncations up to `m`.
pub fn genericity_residual(
    profile: &AlphaProfile,
    m: usize,
    shift: Shift,
) -> Result<GenericityReport, AlphaError> {
    genericity_residual_with_tol(profile, m, shift, GENERICITY_TOL)
}

pub fn genericity_residual_with_tol(
    profile: &AlphaProfile,
    m: usize,
    shift: Shift,
    tolerance: f64,
) -> Result<GenericityReport, AlphaError> {
    if m == 0 {
        return Err(AlphaError::BadTruncation);
    }
    let tail = profile.positive_tail();
    let trivially = tail.iter().all(|a| a.norm() == 0.0);
    let mut ms: Vec<usize> = (0..)
        .map(|k| 1usize << k)
        .take_while(|&v| v < m)
        .chain(DEFAULT_TRUNCATIONS.iter().copied().filter(|&v| v < m))
        .collect();
    ms.push(m);
    ms.sort_unstable();
    ms.dedup();
    // The span grows with M; enforce monotonicity against roundoff.
    let mut history = Vec::with_capacity(ms.len());
    let mut last = 1.0f64;
    for &mm in &ms {
        let r = shift_span_residual(&tail, mm, shift).min(last);
        history.push((mm, r));
        last = r;
    }
    let residual = history.last().map(|h| h.1).unwrap_or(1.0);
    Ok(GenericityReport {
        m,
        residual,
        residual_history: history,
        shift,
        tolerance,
        generic: !trivially && residual < tolerance,
        trivially_nongeneric: trivially,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn evaluate_constant_and_sum_of_coefficients() {
        let p = AlphaProfile::constant(3.0, 1.0).unwrap();
        assert_eq!(p.evaluate(0.7), 1.0);
        let q = AlphaProfile::cosine(3.0, 1.0, 0.25).unwrap();
        assert!((q.evaluate(0.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn period_mean_is_alpha0() {
        let p = AlphaProfile::new(
            2.0,
            &[(0, c(0.7)), (1, C64::new(0.2, -0.1)), (3, C64::new(0.05, 0.3))],
        )
        .unwrap();
        let period = 2.0 * std::f64::consts::PI / p.omega();
        let n = 4096;
        let mean: f64 = (0..n).map(|k| p.evaluate(period * k as f64 / n as f64)).sum::<f64>() / n as f64;
        assert!((mean - 0.7).abs() < 1e-10);
    }

    #[test]
    fn reality_is_filled_and_checked() {
        let p = AlphaProfile::new(1.0, &[(2, C64::new(0.1, 0.2))]).unwrap();
        assert_eq!(p.coefficient(-2), C64::new(0.1, -0.2));
        let bad = AlphaProfile::new(1.0, &[(1, C64::new(0.1, 0.2)), (-1, C64::new(0.1, 0.2))]);
        assert!(matches!(bad, Err(AlphaError::Reality { .. })));
        assert!(AlphaProfile::new(1.0, &[(0, C64::new(1.0, 0.5))]).is_err());
        assert!(AlphaProfile::new(-1.0, &[]).is_err());
    }

    #[test]
    fn raw_sum_is_real() {
        let p = AlphaProfile::new(3.0, &[(0, c(1.0)), (1, C64::new(0.25, 0.1)), (2, C64::new(-0.3, 0.7))])
            .unwrap();
        for k in 0..50 {
            let t = 0.37 * k as f64;
            let raw = p.evaluate_raw(t);
            assert!(raw.im.abs() < 1e-12);
            assert!((raw.re - p.evaluate(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_profile_is_trivially_nongeneric() {
        let p = AlphaProfile::constant(3.0, 1.0).unwrap();
        let r = genericity_residual(&p, 25, Shift::Right).unwrap();
        assert_eq!(r.residual, 1.0);
        assert!(r.trivially_nongeneric && !r.generic);
    }

    #[test]
    fn single_harmonic_is_generic_at_m1() {
        let p = AlphaProfile::cosine(3.0, 1.0, 0.25).unwrap();
        for shift in [Shift::Right, Shift::Left] {
            let r = genericity_residual(&p, 1, shift).unwrap();
            assert!(r.residual < 1e-14);
        }
    }

    #[test]
    fn blaschke_tail_plateaus_at_inner_factor_distance() {
        // Tail (-1/2, 1) is the polynomial z - 1/2 with a zero inside the disk.
        // Oracle: the distance from 1 to the invariant subspace B_a H^2 is sqrt(1 - |a|^2).
        let oracle = (1.0f64 - 0.25).sqrt();
        let tail = [c(-0.5), c(1.0)];
        let r200 = shift_span_residual(&tail, 200, Shift::Right);
        assert!((r200 - oracle).abs() < 5e-3, "{r200}");
        assert!(shift_span_residual(&tail, 25, Shift::Right) >= r200 - 1e-12);
    }

    #[test]
    fn left_shift_reaches_e1_for_finite_support() {
        let tail = [c(-0.5), c(1.0), c(0.3)];
        assert!(shift_span_residual(&tail, 6, Shift::Left) < 1e-10);
    }
}
