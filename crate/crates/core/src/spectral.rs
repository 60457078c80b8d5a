//! Frequency-domain solution: the Laplace-transformed charges folded onto the
//! strip `0 <= Im p < omega` become bi-infinite sequences `q_n(p) = q~(p + i omega n)`
//! that solve
//!
//! ```text
//! q1 = M1 q2 + G1
//! q2 = L q2 + M2 q1 + G2
//! ```
//!
//! with `kappa_n = sqrt(omega n - i p)` and, for coupling factor `a`,
//! `M1_n = -a e^{-r kappa_n} / (r (1 - kappa_n))`,
//! `M2_n = a e^{-r kappa_n} / (r (4 pi alpha0 + kappa_n))`,
//! `L_{n, n+k} = -4 pi alpha_k / (4 pi alpha0 + kappa_n)` for `k != 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ComplexPoint, ModelParams};
use crate::propagator::principal_sqrt;
use crate::special::{C64, I};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("coefficient singular at p = i (kappa = 1) for n = {n}")]
    SingularAtI { n: i64 },
    #[error("p = {p} is within 1e-6 of a refused point {near}")]
    RefusedPoint { p: C64, near: C64 },
    #[error("system ill-conditioned at p = {p}, N = {n}: condition {cond:e}")]
    IllConditioned { p: C64, n: usize, cond: f64 },
    #[error("truncation N = {0} below the minimum of 8")]
    BadTruncation(usize),
    #[error("Re(p) must be nonnegative, got {0}")]
    LeftHalfPlane(f64),
    #[error("no root of the pole equation found")]
    NoRoot,
    #[error("extrapolation did not converge: {0:?}")]
    Extrapolation(Vec<C64>),
    #[error("branch model rejected: residual {residual:e} above {bound:e}")]
    BranchRejected { residual: f64, bound: f64 },
}

/// Minimum truncation accepted by [`build_and_solve`].
pub const MIN_TRUNCATION: usize = 8;
/// Refusal radius around `p0` and the folded `p = i`.
pub const REFUSAL_RADIUS: f64 = 1e-6;
/// Largest condition number accepted.
pub const MAX_CONDITION: f64 = 1e12;

/// `sqrt(omega n - i p)` on the principal branch, `arg in (-pi, pi]`.
pub fn lattice_sqrt(n: i64, p: C64, omega: f64) -> C64 {
    principal_sqrt(C64::new(omega * n as f64, 0.0) - I * p)
}

/// `c_n(p) = kappa + a^2 e^{-2 r kappa} / (r^2 (1 - kappa))`.
pub fn c_n(n: i64, p: C64, params: &ModelParams) -> Result<C64, SpectralError> {
    let kappa = lattice_sqrt(n, p, params.omega());
    let one_minus = 1.0 - kappa;
    if one_minus.norm() < 1e-14 {
        return Err(SpectralError::SingularAtI { n });
    }
    let a = params.coupling().factor();
    let r = params.r();
    Ok(kappa + a * a * (-2.0 * r * kappa).exp() / (r * r * one_minus))
}

/// Assembled truncated operators for `|n| <= N`.
#[derive(Debug, Clone)]
pub struct LatticeOperators {
    pub p: C64,
    pub n_trunc: usize,
    pub diag_m1: DVector<C64>,
    pub diag_m2: DVector<C64>,
    pub l_matrix: DMatrix<C64>,
    pub g1: DVector<C64>,
    pub g2: DVector<C64>,
}

impl LatticeOperators {
    pub fn assemble(p: C64, n_trunc: usize, params: &ModelParams) -> Result<Self, SpectralError> {
        let dim = 2 * n_trunc + 1;
        let omega = params.omega();
        let r = params.r();
        let a = params.coupling().factor();
        let nc = params.bound_state().constant;
        let alpha = params.alpha();
        let beta = 4.0 * PI * alpha.alpha0();
        let idx = |j: usize| j as i64 - n_trunc as i64;

        let mut diag_m1 = DVector::zeros(dim);
        let mut diag_m2 = DVector::zeros(dim);
        let mut g1 = DVector::zeros(dim);
        let mut g2 = DVector::zeros(dim);
        let mut l_matrix = DMatrix::zeros(dim, dim);
        let kmax = alpha.n_max() as i64;
        for j in 0..dim {
            let n = idx(j);
            let kappa = lattice_sqrt(n, p, omega);
            let one_minus = 1.0 - kappa;
            if one_minus.norm() < 1e-14 {
                return Err(SpectralError::SingularAtI { n });
            }
            let ek = (-r * kappa).exp();
            let den2 = beta + kappa;
            // 1 + i p - omega n = 1 - kappa^2
            let den1 = C64::new(1.0 - omega * n as f64, 0.0) + I * p;
            diag_m1[j] = -a * ek / (r * one_minus);
            diag_m2[j] = a * ek / (r * den2);
            g1[j] = 4.0 * PI * I * nc / den1;
            g2[j] = -4.0 * PI * I * nc * (ek - (-r).exp()) / (r * den2 * den1);
            for k in -kmax..=kmax {
                if k == 0 {
                    continue;
                }
                let col = j as i64 + k;
                if col < 0 || col >= dim as i64 {
                    continue;
                }
                l_matrix[(j, col as usize)] = -4.0 * PI * alpha.coefficient(k) / den2;
            }
        }
        Ok(LatticeOperators { p, n_trunc, diag_m1, diag_m2, l_matrix, g1, g2 })
    }

    /// `I - L - M2 M1`.
    pub fn system_matrix(&self) -> DMatrix<C64> {
        let dim = self.g1.len();
        let mut a = -self.l_matrix.clone();
        for j in 0..dim {
            a[(j, j)] += C64::new(1.0, 0.0) - self.diag_m2[j] * self.diag_m1[j];
        }
        a
    }

    /// `M2 G1 + G2`.
    pub fn rhs(&self) -> DVector<C64> {
        self.diag_m2.component_mul(&self.g1) + &self.g2
    }
}

/// Solution of the truncated system at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub p: C64,
    pub n_trunc: usize,
    pub q1: Vec<C64>,
    pub q2: Vec<C64>,
    pub residual: f64,
    pub condition: f64,
}

impl SpectralSolution {
    /// Component `n` of charge `j` (1 or 2).
    pub fn component(&self, j: u8, n: i64) -> Option<C64> {
        let k = n + self.n_trunc as i64;
        if k < 0 || k as usize >= self.q1.len() {
            return None;
        }
        match j {
            1 => Some(self.q1[k as usize]),
            2 => Some(self.q2[k as usize]),
            _ => None,
        }
    }
}

/// `p` folded into the strip.
pub fn fold(p: C64, omega: f64) -> C64 {
    ComplexPoint::decompose(p, omega).p0
}

/// Points where [`build_and_solve`] refuses to work: the folded `p = i`
/// and, when a root exists, each `p0` of [`find_pole`].
pub fn refused_points(params: &ModelParams) -> Vec<C64> {
    let mut v = vec![fold(I, params.omega())];
    if let Ok(pole) = find_pole(params) {
        v.extend(pole.p0);
    }
    v
}

fn solve_unchecked(p: C64, n_trunc: usize, params: &ModelParams) -> Result<SpectralSolution, SpectralError> {
    let ops = LatticeOperators::assemble(p, n_trunc, params)?;
    let a = ops.system_matrix();
    let rhs = ops.rhs();
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(SpectralError::IllConditioned { p, n: n_trunc, cond });
    }
    let q2 = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(SpectralError::IllConditioned { p, n: n_trunc, cond })?;
    let res = (&a * &q2 - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    let q1 = ops.diag_m1.component_mul(&q2) + &ops.g1;
    Ok(SpectralSolution {
        p,
        n_trunc,
        q1: q1.iter().copied().collect(),
        q2: q2.iter().copied().collect(),
        residual: res,
        condition: cond,
    })
}

/// Assemble and solve the truncated lattice system at `p`.
pub fn build_and_solve(p: C64, n_trunc: usize, params: &ModelParams) -> Result<SpectralSolution, SpectralError> {
    if n_trunc < MIN_TRUNCATION {
        return Err(SpectralError::BadTruncation(n_trunc));
    }
    if p.re < 0.0 {
        return Err(SpectralError::LeftHalfPlane(p.re));
    }
    let pf = fold(p, params.omega());
    for near in refused_points(params) {
        if (pf - near).norm() < REFUSAL_RADIUS {
            return Err(SpectralError::RefusedPoint { p, near });
        }
    }
    solve_unchecked(p, n_trunc, params)
}

/// Roots of the pole equation and their strip images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoleLocation {
    pub lambda_roots: Vec<f64>,
    /// `|f(lambda)|` relative to the size of the two balancing terms.
    pub residuals: Vec<f64>,
    pub n0: Vec<i64>,
    pub p0: Vec<C64>,
}

/// `(r^2/a^2)(4 pi alpha0 + lambda)(lambda - 1) - e^{-2 r lambda}`.
pub fn pole_function(lambda: f64, params: &ModelParams) -> f64 {
    let a = params.coupling().factor();
    let r = params.r();
    let beta = 4.0 * PI * params.alpha().alpha0();
    r * r / (a * a) * (beta + lambda) * (lambda - 1.0) - (-2.0 * r * lambda).exp()
}

/// Scan resolution of [`find_pole`].
const POLE_SCAN_POINTS: usize = 200_000;

fn polish(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // Secant step, kept inside the bracket.
        let fhi = f(hi);
        let sec = hi - fhi * (hi - lo) / (fhi - flo);
        let x = if sec > lo && sec < hi { 0.5 * (sec + mid) } else { mid };
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots `lambda > 0` of the pole equation.
pub fn find_pole(params: &ModelParams) -> Result<PoleLocation, SpectralError> {
    let r = params.r();
    let beta = 4.0 * PI * params.alpha().alpha0();
    let a = params.coupling().factor();
    // Beyond this the exponential is below 1e-16 and the quadratic has
    // passed both of its roots and exceeds the largest possible right side.
    let lam_max = (18.42 / r).max(2.0 * (1.0 + beta.abs()) + 2.0).max(1.0 + beta.abs() + a / r + 1.0);
    let f = |x: f64| pole_function(x, params);
    let mut roots = Vec::new();
    let step = lam_max / POLE_SCAN_POINTS as f64;
    let mut x0 = step * 1e-3;
    let mut f0 = f(x0);
    for k in 1..=POLE_SCAN_POINTS {
        let x1 = step * k as f64;
        let f1 = f(x1);
        if f1 == 0.0 {
            roots.push(x1);
        } else if (f0 < 0.0) != (f1 < 0.0) && f0 != 0.0 {
            roots.push(polish(f, x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    if roots.is_empty() {
        return Err(SpectralError::NoRoot);
    }
    let omega = params.omega();
    // Roots sit close to a zero of the quadratic, where `lambda - 1` or
    // `lambda + beta` cancels. Re-polish in the offset from that zero.
    let c = r * r / (a * a);
    let mut residuals = Vec::with_capacity(roots.len());
    for x in roots.iter_mut() {
        let base = if beta < 0.0 && (*x + beta).abs() < (*x - 1.0).abs() { -beta } else { 1.0 };
        let (u, v) = (base + beta, base - 1.0);
        let g = |mu: f64| c * (u + mu) * (v + mu) - (-2.0 * r * (base + mu)).exp();
        let mu0 = *x - base;
        let w = step.max(mu0.abs() * 1e-12);
        let (mut lo, mut hi) = (mu0 - w, mu0 + w);
        while (g(lo) < 0.0) == (g(hi) < 0.0) && hi - lo < 4.0 * step {
            lo -= w;
            hi += w;
        }
        let mu = if (g(lo) < 0.0) != (g(hi) < 0.0) { polish(g, lo, hi) } else { mu0 };
        *x = base + mu;
        let scale = (c * (u + mu) * (v + mu)).abs() + (-2.0 * r * (base + mu)).exp();
        residuals.push(g(mu).abs() / scale);
    }
    let n0: Vec<i64> = roots.iter().map(|&x| (x * x / omega).floor() as i64).collect();
    let p0 = roots
        .iter()
        .zip(&n0)
        .map(|(&x, &n)| C64::new(0.0, x * x - omega * n as f64))
        .collect();
    Ok(PoleLocation { lambda_roots: roots, residuals, n0, p0 })
}

/// Result of [`limit_at_i`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitAtI {
    pub value: C64,
    pub ray_value: C64,
    pub epsilons: Vec<f64>,
    pub sequence: Vec<C64>,
    pub ray_sequence: Vec<C64>,
    /// Successive differences of the raw sequence.
    pub differences: Vec<f64>,
}

/// Neville extrapolation of `(x_k, y_k)` to `x = 0`.
pub fn extrapolate_to_zero(x: &[f64], y: &[C64]) -> C64 {
    let mut t = y.to_vec();
    let n = x.len();
    for m in 1..n {
        for i in 0..n - m {
            t[i] = (x[i + m] * t[i] - x[i] * t[i + 1]) / (x[i + m] - x[i]);
        }
    }
    t[0]
}

/// The removable limit of `q_0^{(1)}(p)` at `p = i`, approached along the
/// real direction and along a 45 degree ray.
pub fn limit_at_i(params: &ModelParams, n_trunc: usize) -> Result<LimitAtI, SpectralError> {
    let eps: Vec<f64> = (0..10).map(|k| 1e-2 * 0.5f64.powi(k)).collect();
    let eval = |dir: C64| -> Result<Vec<C64>, SpectralError> {
        eps.par_iter()
            .map(|&e| {
                let s = solve_unchecked(I + e * dir, n_trunc, params)?;
                Ok(s.component(1, 0).expect("central index"))
            })
            .collect()
    };
    let seq = eval(C64::new(1.0, 0.0))?;
    let ray = eval(crate::special::cis(PI / 4.0))?;
    // Low-order extrapolation on the last few points is stable; the full
    // Neville table amplifies roundoff from the cancellation near p = i.
    let m = 5;
    let tail = eps.len() - m;
    let value = extrapolate_to_zero(&eps[tail..], &seq[tail..]);
    let ray_value = extrapolate_to_zero(&eps[tail..], &ray[tail..]);
    let differences: Vec<f64> = seq.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(SpectralError::Extrapolation(seq));
    }
    Ok(LimitAtI { value, ray_value, epsilons: eps, sequence: seq, ray_sequence: ray, differences })
}

/// Number of half-integer powers in the branch model `sum_k c_k p^{k/2}`.
pub const BRANCH_MODEL_TERMS: usize = 6;

/// Least-squares fit of a sampled function near `p = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFit {
    pub component: u8,
    pub epsilon: f64,
    /// Constant term `c`.
    pub c: C64,
    /// Coefficient `d` of `sqrt p`.
    pub d: C64,
    /// All coefficients of `p^{k/2}`, `k = 0..BRANCH_MODEL_TERMS`.
    pub coefficients: Vec<C64>,
    /// RMS residual of the full model.
    pub residual: f64,
    /// RMS residual of the two-term model `c + d sqrt p` alone.
    pub two_term_residual: f64,
    /// `1e-4 |d| sqrt(epsilon)`.
    pub bound: f64,
    pub accepted: bool,
}

/// Sample points used by the branch fit.
pub fn branch_samples(eps: f64, resonant: bool) -> Vec<C64> {
    let mut pts: Vec<C64> = (-8..=8)
        .map(|k| eps * crate::special::cis((10.0 * k as f64).to_radians()))
        .collect();
    pts.extend([eps / 4.0, eps / 2.0].map(|x| C64::new(x, 0.0)));
    if resonant {
        // A second ring separates the branch term from nearby coefficient poles.
        pts.extend((-8..=8).map(|k| 0.5 * eps * crate::special::cis((10.0 * k as f64).to_radians())));
    }
    pts
}

/// Fit `value(p) = sum_k c_k p^{k/2}` by complex least squares.
pub fn fit_branch_model(points: &[C64], values: &[C64], terms: usize) -> (Vec<C64>, f64) {
    let m = points.len();
    let a = DMatrix::from_fn(m, terms, |i, k| principal_sqrt(points[i]).powu(k as u32));
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).expect("svd solve");
    let res = (&a * &x - &b).norm() / (m as f64).sqrt();
    (x.iter().copied().collect(), res)
}

/// Fit the `p -> 0` structure of `q_0^{(j)}` for `j = 1, 2`.
pub fn branch_fit_at_origin(
    params: &ModelParams,
    n_trunc: usize,
    eps: f64,
) -> Result<[BranchFit; 2], SpectralError> {
    let pts = branch_samples(eps, params.resonance().is_some());
    let sols: Vec<SpectralSolution> =
        pts.par_iter().map(|&p| build_and_solve(p, n_trunc, params)).collect::<Result<_, _>>()?;
    let fit = |j: u8| {
        let vals: Vec<C64> = sols.iter().map(|s| s.component(j, 0).expect("central")).collect();
        let (coef, residual) = fit_branch_model(&pts, &vals, BRANCH_MODEL_TERMS);
        let (_, two) = fit_branch_model(&pts, &vals, 2);
        let bound = 1e-4 * coef[1].norm() * eps.sqrt();
        BranchFit {
            component: j,
            epsilon: eps,
            c: coef[0],
            d: coef[1],
            coefficients: coef,
            residual,
            two_term_residual: two,
            bound,
            accepted: residual < bound,
        }
    };
    Ok([fit(1), fit(2)])
}

/// `Im c_n(p)`; negative for `Re p > 0`.
pub fn sign_lemma_value(n: i64, p: C64, params: &ModelParams) -> Result<f64, SpectralError> {
    Ok(c_n(n, p, params)?.im)
}

/// `Im(4 pi alpha0 + c_n(p))` for `p` on the imaginary axis; positive for
/// `n < 0` when `alpha0 >= 0`.
pub fn axis_lemma_value(n: i64, y: f64, params: &ModelParams) -> Result<f64, SpectralError> {
    Ok(c_n(n, C64::new(0.0, y), params)?.im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::AlphaProfile;
    use crate::model::Coupling;

    fn printed() -> ModelParams {
        ModelParams::default_generic().with_coupling(Coupling::Printed)
    }

    #[test]
    fn sqrt_edge_and_imaginary_axis() {
        assert_eq!(lattice_sqrt(0, C64::new(0.0, -1.0), 3.0), I);
        let v = lattice_sqrt(-2, C64::new(0.0, 1.0), 3.0);
        assert!(v.re.abs() < 1e-14 && v.im > 0.0);
        assert!((v.im - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn c_n_rejects_p_equal_i() {
        let p = ModelParams::default_generic();
        assert!(matches!(c_n(0, I, &p), Err(SpectralError::SingularAtI { n: 0 })));
    }

    #[test]
    fn c_n_direct_formula() {
        // Second path: kappa from polar form, the rest written out.
        let p = printed();
        let z = C64::new(3.0, 0.0) - I * C64::new(1.0, 0.0);
        let (rho, th) = (z.norm(), z.arg());
        let kappa = rho.sqrt() * crate::special::cis(th / 2.0);
        let expect = kappa + (-2.0 * kappa).exp() / ((2.0 * PI).powi(3) * (1.0 - kappa));
        let v = c_n(1, C64::new(1.0, 0.0), &p).unwrap();
        assert!((v - expect).norm() < 1e-14);
    }

    #[test]
    fn diagonal_case_decouples() {
        let alpha = AlphaProfile::constant(3.0, 1.0).unwrap();
        let params = ModelParams::new(1.0, alpha).unwrap();
        let p = C64::new(1.0, 0.3);
        let sol = build_and_solve(p, 8, &params).unwrap();
        let ops = LatticeOperators::assemble(p, 8, &params).unwrap();
        assert!(ops.l_matrix.iter().all(|z| *z == C64::new(0.0, 0.0)));
        for j in 0..17 {
            let (m1, m2) = (ops.diag_m1[j], ops.diag_m2[j]);
            let q2 = (m2 * ops.g1[j] + ops.g2[j]) / (1.0 - m2 * m1);
            assert!((sol.q2[j] - q2).norm() < 1e-13 * q2.norm().max(1e-300));
            assert!((sol.q1[j] - (m1 * q2 + ops.g1[j])).norm() < 1e-13 * sol.q1[j].norm());
        }
    }

    #[test]
    fn refuses_p_equal_i_and_small_truncation() {
        let p = ModelParams::default_generic();
        assert!(matches!(build_and_solve(I, 16, &p), Err(SpectralError::RefusedPoint { .. })));
        assert!(matches!(build_and_solve(C64::new(1.0, 0.0), 4, &p), Err(SpectralError::BadTruncation(4))));
    }

    #[test]
    fn pole_printed_default() {
        let pole = find_pole(&printed()).unwrap();
        assert_eq!(pole.lambda_roots.len(), 1);
        let lam = pole.lambda_roots[0];
        assert!(lam > 1.0 && lam < 1.01, "{lam}");
        assert!(pole.residuals[0] < 1e-12);
        let y = pole.p0[0].im;
        assert!((0.0..3.0).contains(&y));
    }

    #[test]
    fn extrapolation_of_polynomial_is_exact() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<C64> = x.iter().map(|&e| C64::new(1.0 + 2.0 * e - e * e, 3.0 * e)).collect();
        let v = extrapolate_to_zero(&x, &y);
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn synthetic_branch_fit_is_exact() {
        let pts = branch_samples(1e-3, false);
        let (c, d) = (C64::new(1.0, 2.0), C64::new(0.0, -3.0));
        let vals: Vec<C64> = pts.iter().map(|&p| c + d * principal_sqrt(p)).collect();
        let (coef, res) = fit_branch_model(&pts, &vals, 2);
        assert!((coef[0] - c).norm() < 1e-12 && (coef[1] - d).norm() < 1e-12);
        assert!(res < 1e-12);
    }
}
