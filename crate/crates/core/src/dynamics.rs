//! Reconstruction of the state from the charges:
//!
//! ```text
//! Psi_t(x) = (U0(t) Psi0)(x) + i int_0^t [q1(tau) U0(t - tau; x) + q2(tau) U0(t - tau; x - y)] dtau
//! ```
//!
//! with `y` the second center. Everything here is built on the piecewise-linear
//! charges of a [`ChargeTrajectory`] and integrates the singular kernels
//! exactly against them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BoundState;
use crate::moments::{cell_moments, Kernel, UniformWeights};
use crate::propagator::{
    evolved_bound_state, free_overlap, oscillatory_remainder, origin_expansion, PropagatorError,
};
use crate::special::{cis, gauss_rule, CompensatedSum, C64, I};
use crate::volterra::{exp_moments, second_center, ChargeTrajectory, HistoryMesh, InitialState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("this quantity needs the bound-state initial datum, trajectory has {0}")]
    NeedsBoundState(String),
    #[error("the state is singular at the interaction center (distance {0:e})")]
    AtCenter(f64),
    #[error("t = {t} outside the trajectory window [0, {t_max}]")]
    OutOfWindow { t: f64, t_max: f64 },
    #[error("ball radius must be positive, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

fn require_bound_state(traj: &ChargeTrajectory) -> Result<BoundState, DynamicsError> {
    match traj.initial {
        InitialState::BoundState => Ok(traj.params.bound_state()),
        ref other => Err(DynamicsError::NeedsBoundState(format!("{other:?}"))),
    }
}

fn check_window(traj: &ChargeTrajectory, t: f64) -> Result<(), DynamicsError> {
    let t_max = traj.grid.t_max();
    if !(0.0..=t_max * (1.0 + 1e-12)).contains(&t) {
        return Err(DynamicsError::OutOfWindow { t, t_max });
    }
    Ok(())
}

/// `theta(t) = (Psi0, Psi_t) / ||Psi0||^2` on the coarse nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub t: Vec<f64>,
    pub theta: Vec<C64>,
    pub normalization: crate::model::Normalization,
}

impl SurvivalSeries {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_theta,im_theta,abs_theta")?;
        for (t, z) in self.t.iter().zip(&self.theta) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", t, z.re, z.im, z.norm())?;
        }
        Ok(())
    }
}

/// Smooth part of `(U0(s)Psi0)(0)` after removing `c_- s^{-1/2} + c_+ s^{1/2}`.
fn origin_remainder(s: f64, psi: &BoundState, cm: C64, cp: C64) -> C64 {
    if s < 1e-12 {
        return C64::new(-psi.constant, 0.0);
    }
    let e0 = evolved_bound_state(s, 0.0, psi).expect("s > 0");
    e0 - cm / s.sqrt() - cp * s.sqrt()
}

struct SurvivalParts {
    psi: BoundState,
    r: f64,
    b: f64,
    cm: C64,
    cp: C64,
}

impl SurvivalParts {
    /// Product-integration weights of one cell `[sa, sb]` for the near and
    /// far node of each charge: `(w1_near, w1_far, w2_near, w2_far)`.
    fn cell(&self, sa: f64, sb: f64, r0: (C64, C64), phi: (C64, C64)) -> [C64; 4] {
        let d = sb - sa;
        let (a0, a1) = cell_moments(Kernel::Abel, sa, sb);
        let (s0, s1) = cell_moments(Kernel::Sqrt, sa, sb);
        let (o0, o1) = cell_moments(Kernel::Osc { b: self.b }, sa, sb);
        let pr = self.psi.value(self.r);
        [
            self.cm * (a0 - a1) + self.cp * (s0 - s1) + 0.5 * d * r0.0,
            self.cm * a1 + self.cp * s1 + 0.5 * d * r0.1,
            (o0 - o1) * phi.0 + 0.5 * d * pr * cis(sa),
            o1 * phi.1 + 0.5 * d * pr * cis(sb),
        ]
    }

    fn nodal(&self, s: f64) -> (C64, C64) {
        (origin_remainder(s, &self.psi, self.cm, self.cp), oscillatory_remainder(s, self.r, &self.psi))
    }
}

/// Survival amplitude at every `stride`-th coarse node.
pub fn survival_amplitude_with_stride(
    traj: &ChargeTrajectory,
    stride: usize,
) -> Result<SurvivalSeries, DynamicsError> {
    let psi = require_bound_state(traj)?;
    let stride = stride.max(1);
    let r = traj.params.r();
    let (cm, cp) = origin_expansion(&psi);
    let parts = SurvivalParts { psi, r, b: r * r / 4.0, cm, cp };
    let grid = traj.grid;
    let n = grid.n_steps();
    let h = grid.h();
    let su = traj.startup;
    let has_fine = !traj.fine_q1.is_empty();
    let kc = if has_fine { su.coarse_cells } else { 0 };
    let hf = h / su.refinement as f64;

    // Uniform weights by node offset k (s = k h).
    let nodal: Vec<(C64, C64)> = (0..=n).map(|k| parts.nodal(k as f64 * h)).collect();
    let ua = UniformWeights::new(Kernel::Abel, h, n, C64::new(1.0, 0.0));
    let us = UniformWeights::new(Kernel::Sqrt, h, n, C64::new(1.0, 0.0));
    let uo = UniformWeights::new(Kernel::Osc { b: parts.b }, h, n, C64::new(1.0, 0.0));
    let pr = psi.value(r);
    let trap = |k: usize| if k == 0 { 0.5 * h } else { h };
    let w1c: Vec<C64> =
        (0..n).map(|k| cm * ua.comb[k] + cp * us.comb[k] + trap(k) * nodal[k].0).collect();
    let w2c: Vec<C64> =
        (0..n).map(|k| uo.comb[k] * nodal[k].1 + trap(k) * pr * cis(k as f64 * h)).collect();
    let w1f: Vec<C64> = (0..=n)
        .map(|k| if k == 0 { C64::new(0.0, 0.0) } else { cm * ua.far[k - 1] + cp * us.far[k - 1] + 0.5 * h * nodal[k].0 })
        .collect();
    let w2f: Vec<C64> = (0..=n)
        .map(|k| if k == 0 { C64::new(0.0, 0.0) } else { uo.far[k - 1] * nodal[k].1 + 0.5 * h * pr * cis(k as f64 * h) })
        .collect();

    let norm = psi.norm_sq();
    let nodes: Vec<usize> = (0..=n).step_by(stride).collect();
    let theta: Vec<C64> = nodes
        .par_iter()
        .map(|&m| {
            let t = grid.node(m);
            if m == 0 {
                return C64::new(1.0, 0.0);
            }
            let mut j1 = CompensatedSum::new();
            let mut j2 = CompensatedSum::new();
            // Refined head: generic cells.
            if has_fine {
                let jmax = if m <= kc { m * su.refinement } else { traj.fine_q1.len() - 1 };
                let tau = |j: usize| if j == jmax && m <= kc { t } else { j as f64 * hf };
                let s: Vec<f64> = (0..=jmax).map(|j| (t - tau(j)).max(0.0)).collect();
                let nod: Vec<(C64, C64)> = s.iter().map(|&x| parts.nodal(x)).collect();
                for j in 0..jmax {
                    let (sa, sb) = (s[j + 1], s[j]);
                    if sb <= sa {
                        continue;
                    }
                    let w = parts.cell(sa, sb, (nod[j + 1].0, nod[j].0), (nod[j + 1].1, nod[j].1));
                    j1.add(traj.fine_q1[j + 1] * w[0] + traj.fine_q1[j] * w[1]);
                    j2.add(traj.fine_q2[j + 1] * w[2] + traj.fine_q2[j] * w[3]);
                }
            }
            // Uniform part from node kc to m.
            if m > kc {
                let l = m - kc;
                for k in 0..l {
                    j1.add(traj.q1[m - k] * w1c[k]);
                    j2.add(traj.q2[m - k] * w2c[k]);
                }
                j1.add(traj.q1[kc] * w1f[l]);
                j2.add(traj.q2[kc] * w2f[l]);
            }
            (free_overlap(t, &psi) + I * (j1.value() + j2.value())) / norm
        })
        .collect();
    Ok(SurvivalSeries {
        t: nodes.iter().map(|&m| grid.node(m)).collect(),
        theta,
        normalization: traj.params.normalization(),
    })
}

/// Survival amplitude on every coarse node.
pub fn survival_amplitude(traj: &ChargeTrajectory) -> Result<SurvivalSeries, DynamicsError> {
    survival_amplitude_with_stride(traj, 1)
}

/// `(4 pi i)^{-3/2}`.
fn kernel_prefactor() -> C64 {
    (4.0 * PI * I).powf(-1.5)
}

/// Split point between exact near-field moments and the far-field series.
const NEAR_WINDOW: f64 = 0.5;
/// Largest `B / s*` handled by the far-field series.
const SERIES_LIMIT: f64 = 6.0;
const SERIES_TERMS: usize = 48;

/// Evaluates `Psi_t` at many points for one fixed `t`.
pub struct WavefunctionEvaluator {
    t: f64,
    r: f64,
    initial: InitialState,
    psi: BoundState,
    /// Nodes `(tau, q1, q2)` of the history on `[0, t]`, including `t`.
    nodes: Vec<(f64, C64, C64)>,
    /// First node index of the near window `s <= s*`.
    near_start: usize,
    s_star: f64,
    /// `mu_m = int_{s*}^{t} q(t - s) s^{-3/2 - m} ds`.
    far: [Vec<C64>; 2],
}

impl WavefunctionEvaluator {
    pub fn new(traj: &ChargeTrajectory, t: f64) -> Result<Self, DynamicsError> {
        check_window(traj, t)?;
        let t = t.min(traj.grid.t_max());
        let mesh = traj.mesh();
        Ok(Self::from_mesh(&mesh, traj, t))
    }

    fn from_mesh(mesh: &HistoryMesh, traj: &ChargeTrajectory, t: f64) -> Self {
        let s_star = NEAR_WINDOW;
        let mut nodes: Vec<(f64, C64, C64)> = Vec::new();
        let last = mesh.locate(t);
        let cut = t - s_star;
        for j in 0..=last {
            let tj = mesh.t[j];
            if j > 0 && cut > mesh.t[j - 1] && cut < tj {
                let (a, b) = mesh.sample(cut);
                nodes.push((cut, a, b));
            }
            nodes.push((tj, mesh.q1[j], mesh.q2[j]));
        }
        if t > nodes.last().map_or(0.0, |n| n.0) {
            let (a, b) = mesh.sample(t);
            nodes.push((t, a, b));
        }
        let near_start = if cut <= 0.0 {
            0
        } else {
            nodes.iter().position(|n| n.0 >= cut).unwrap_or(nodes.len() - 1)
        };
        let mut far = [vec![C64::new(0.0, 0.0); SERIES_TERMS], vec![C64::new(0.0, 0.0); SERIES_TERMS]];
        let rule = gauss_rule(4);
        for j in 0..near_start {
            let (ta, qa1, qa2) = nodes[j];
            let (tb, qb1, qb2) = nodes[j + 1];
            for (tau, w) in rule.on(ta, tb) {
                let u = (tau - ta) / (tb - ta);
                let q1 = qa1 + u * (qb1 - qa1);
                let q2 = qa2 + u * (qb2 - qa2);
                let s = t - tau;
                let mut pw = w * s.powf(-1.5);
                for m in 0..SERIES_TERMS {
                    far[0][m] += q1 * pw;
                    far[1][m] += q2 * pw;
                    pw /= s;
                }
            }
        }
        WavefunctionEvaluator {
            t,
            r: traj.params.r(),
            initial: traj.initial.clone(),
            psi: traj.params.bound_state(),
            nodes,
            near_start,
            s_star,
            far,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `int_0^t q_j(tau) s^{-3/2} e^{iB/s} dtau`, `s = t - tau`.
    fn charge_integral(&self, j: usize, b: f64) -> C64 {
        let q = |k: usize| if j == 0 { self.nodes[k].1 } else { self.nodes[k].2 };
        let kern = Kernel::Osc3 { b };
        let mut acc = CompensatedSum::new();
        let direct_from = if b / self.s_star > SERIES_LIMIT { 0 } else { self.near_start };
        for k in direct_from..self.nodes.len() - 1 {
            let (sa, sb) = (self.t - self.nodes[k + 1].0, self.t - self.nodes[k].0);
            if sb <= sa {
                continue;
            }
            let (m0, m1) = cell_moments(kern, sa.max(0.0), sb);
            acc.add(q(k + 1) * (m0 - m1) + q(k) * m1);
        }
        if direct_from == self.near_start {
            let mut term = C64::new(1.0, 0.0);
            for m in 0..SERIES_TERMS {
                let add = term * self.far[j][m];
                acc.add(add);
                if m > 4 && add.norm() < 1e-17 * acc.value().norm() {
                    break;
                }
                term *= I * b / (m + 1) as f64;
            }
        }
        acc.value()
    }

    /// `Psi_t` at distances `rho` from the origin and `d` from the second center.
    pub fn eval_bipolar(&self, rho: f64, d: f64) -> Result<C64, DynamicsError> {
        let free = match &self.initial {
            InitialState::BoundState => {
                if self.t == 0.0 && rho == 0.0 {
                    return Err(DynamicsError::AtCenter(0.0));
                }
                evolved_bound_state(self.t, rho, &self.psi)?
            }
            InitialState::Zero => C64::new(0.0, 0.0),
            InitialState::Gaussian(_) => {
                return Err(DynamicsError::NeedsBoundState("gaussian datum needs a 3D point".into()))
            }
        };
        self.add_charges(free, rho, d)
    }

    fn add_charges(&self, free: C64, rho: f64, d: f64) -> Result<C64, DynamicsError> {
        if self.t == 0.0 {
            return Ok(free);
        }
        if rho < 1e-12 || d < 1e-12 {
            return Err(DynamicsError::AtCenter(rho.min(d)));
        }
        let c1 = self.charge_integral(0, rho * rho / 4.0);
        let c2 = self.charge_integral(1, d * d / 4.0);
        Ok(free + I * kernel_prefactor() * (c1 + c2))
    }

    /// `Psi_t(x)`.
    pub fn eval(&self, x: [f64; 3]) -> Result<C64, DynamicsError> {
        let y = second_center(self.r);
        let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let free = match &self.initial {
            InitialState::BoundState => {
                if self.t == 0.0 && rho == 0.0 {
                    return Err(DynamicsError::AtCenter(0.0));
                }
                evolved_bound_state(self.t, rho, &self.psi)?
            }
            InitialState::Zero => C64::new(0.0, 0.0),
            InitialState::Gaussian(g) => g.evolve(self.t, x),
        };
        self.add_charges(free, rho, d)
    }
}

/// `Psi_t(x)` for a single point.
pub fn wavefunction(t: f64, x: [f64; 3], traj: &ChargeTrajectory) -> Result<C64, DynamicsError> {
    WavefunctionEvaluator::new(traj, t)?.eval(x)
}

/// Momentum cutoff of [`norm_squared`].
const NORM_CUTOFF: f64 = 40.0;

/// `||Psi_t||^2` computed in momentum space.
///
/// `Psi_t^(k) = A(k) + e^{-ik.y} B(k)` with `A = e^{-ik^2 t} Psi0^(k) + i Q1(k)`,
/// `B = i Q2(k)` and `Qj(k) = int_0^t qj(tau) e^{-ik^2(t - tau)} dtau`; the
/// angular average of the cross term gives `sinc(k r)`. Above the cutoff
/// `|Psi^|^2 ~ (|q1(t)|^2 + |q2(t)|^2) / k^4`, integrated analytically.
pub fn norm_squared(traj: &ChargeTrajectory, t: f64) -> Result<f64, DynamicsError> {
    let psi = require_bound_state(traj)?;
    check_window(traj, t)?;
    let mesh = traj.mesh();
    let last = mesh.locate(t);
    let mut nodes: Vec<(f64, C64, C64)> = (0..=last).map(|j| (mesh.t[j], mesh.q1[j], mesh.q2[j])).collect();
    if t > mesh.t[last] {
        let (a, b) = mesh.sample(t);
        nodes.push((t, a, b));
    }
    let r = traj.params.r();
    let (qt1, qt2) = (nodes.last().unwrap().1, nodes.last().unwrap().2);

    // Panels keep the phase k^2 t from turning more than ~1.5 rad per panel.
    let mut edges = vec![0.0];
    let mut k = 0.0;
    while k < NORM_CUTOFF {
        let w = (0.05f64).min(1.5 / (2.0 * k.max(1e-3) * t.max(1e-3)));
        k = (k + w).min(NORM_CUTOFF);
        edges.push(k);
    }
    let rule = gauss_rule(8);
    let total: f64 = edges
        .par_windows(2)
        .map(|e| {
            let mut acc = 0.0;
            for (k, w) in rule.on(e[0], e[1]) {
                let k2 = k * k;
                let mut q1 = CompensatedSum::new();
                let mut q2 = CompensatedSum::new();
                for c in nodes.windows(2) {
                    let (ta, tb) = (c[0].0, c[1].0);
                    let d = tb - ta;
                    let (i0, i1) = exp_moments(C64::new(0.0, -k2 * d));
                    let ph = cis(-k2 * (t - ta)) * d;
                    q1.add(ph * (c[0].1 * (i0 - i1) + c[1].1 * i1));
                    q2.add(ph * (c[0].2 * (i0 - i1) + c[1].2 * i1));
                }
                let a = cis(-k2 * t) * psi.fourier(k) + I * q1.value();
                let b = I * q2.value();
                let sinc = if k * r < 1e-8 { 1.0 } else { (k * r).sin() / (k * r) };
                acc += w * k2 * (a.norm_sqr() + b.norm_sqr() + 2.0 * (a.conj() * b).re * sinc);
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let tail = (qt1.norm_sqr() + qt2.norm_sqr()) / NORM_CUTOFF;
    Ok((total + tail) / (2.0 * PI * PI) / psi.norm_sq())
}

/// Quadrature resolution for the inside-ball probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallQuadrature {
    /// Gauss points per panel.
    pub order: usize,
    /// Geometric grading levels toward each singular end.
    pub grading_levels: usize,
    /// Panels across the `d` interval.
    pub d_panels: usize,
}

impl Default for BallQuadrature {
    fn default() -> Self {
        BallQuadrature { order: 8, grading_levels: 24, d_panels: 4 }
    }
}

/// Panels on `[a, b]` graded geometrically toward the ends flagged singular.
fn graded_panels(a: f64, b: f64, left: bool, right: bool, levels: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![a, b];
    let len = b - a;
    let mut f = 0.5;
    for _ in 0..levels {
        if left {
            cuts.push(a + f * len * if right { 0.5 } else { 1.0 });
        }
        if right {
            cuts.push(b - f * len * if left { 0.5 } else { 1.0 });
        }
        f *= 0.5;
    }
    // Regular panels in the bulk.
    for k in 1..4 {
        cuts.push(a + len * k as f64 / 4.0);
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15 * len.max(1.0));
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// `||1_{|x| <= R} Psi_t||^2 / ||Psi0||^2` by bipolar quadrature:
/// `(2 pi / r) int_0^R rho drho int_{|rho - r|}^{rho + r} d |Psi|^2 dd`.
pub fn inside_probability(
    traj: &ChargeTrajectory,
    t: f64,
    radius: f64,
    quad: &BallQuadrature,
) -> Result<f64, DynamicsError> {
    let psi = require_bound_state(traj)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DynamicsError::BadRadius(radius));
    }
    let ev = WavefunctionEvaluator::new(traj, t)?;
    let r = traj.params.r();
    let mut panels = Vec::new();
    if r < radius {
        panels.extend(graded_panels(0.0, r, true, true, quad.grading_levels));
        panels.extend(graded_panels(r, radius, true, false, quad.grading_levels));
    } else {
        panels.extend(graded_panels(0.0, radius, true, r - radius < 0.1 * radius, quad.grading_levels));
    }
    let rule = gauss_rule(quad.order);
    let rho_pts: Vec<(f64, f64)> = panels.iter().flat_map(|&(a, b)| rule.on(a, b).collect::<Vec<_>>()).collect();
    let inner = |rho: f64| -> Result<f64, DynamicsError> {
        let (lo, hi) = ((rho - r).abs(), rho + r);
        let mut s = 0.0;
        if lo < 0.1 * hi {
            // d = e^u flattens the 1/d behaviour near the second center.
            let (ua, ub) = (lo.max(1e-14).ln(), hi.ln());
            for p in 0..quad.d_panels * 2 {
                let (a, b) = (
                    ua + (ub - ua) * p as f64 / (2 * quad.d_panels) as f64,
                    ua + (ub - ua) * (p + 1) as f64 / (2 * quad.d_panels) as f64,
                );
                for (u, w) in rule.on(a, b) {
                    let d = u.exp();
                    s += w * d * d * ev.eval_bipolar(rho, d)?.norm_sqr();
                }
            }
        } else {
            for p in 0..quad.d_panels {
                let (a, b) = (
                    lo + (hi - lo) * p as f64 / quad.d_panels as f64,
                    lo + (hi - lo) * (p + 1) as f64 / quad.d_panels as f64,
                );
                for (d, w) in rule.on(a, b) {
                    s += w * d * ev.eval_bipolar(rho, d)?.norm_sqr();
                }
            }
        }
        Ok(s)
    };
    let total: f64 = rho_pts
        .par_iter()
        .map(|&(rho, w)| inner(rho).map(|v| w * rho * v))
        .collect::<Result<Vec<f64>, _>>()?
        .iter()
        .sum();
    Ok(2.0 * PI / r * total / psi.norm_sq())
}

/// Monte Carlo estimate of [`inside_probability`] with its standard error.
///
/// Samples come from a mixture of the uniform law on the ball and two laws
/// with density `~ 1/|x - c|^2` around each center, which keeps the weight
/// `|Psi|^2 / p` bounded at the `1/|x - c|` singularities.
pub fn inside_probability_monte_carlo(
    traj: &ChargeTrajectory,
    t: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), DynamicsError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DynamicsError::BadRadius(radius));
    }
    let ev = WavefunctionEvaluator::new(traj, t)?;
    let r = traj.params.r();
    let centers = [[0.0; 3], second_center(r)];
    let reach = [radius, radius + r];
    let vol = 4.0 / 3.0 * PI * radius.powi(3);
    let weights = [0.2, 0.4, 0.4];
    let norm = match traj.initial {
        InitialState::Gaussian(g) => g.norm_sq(),
        _ => traj.params.bound_state().norm_sq(),
    };
    let density = |x: [f64; 3]| {
        let mut p = weights[0] / vol;
        for (c, (&rc, &w)) in centers.iter().zip(reach.iter().zip(&weights[1..])) {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= rc * rc {
                p += w / (4.0 * PI * rc * d2);
            }
        }
        p
    };
    // Fixed chunking keeps the result independent of the thread count.
    let chunk = 4096;
    let chunks = samples.div_ceil(chunk);
    let parts: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = chunk.min(samples - c * chunk);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let u: f64 = rng.gen();
                let dir = {
                    let z: f64 = rng.gen_range(-1.0..1.0);
                    let ph: f64 = rng.gen_range(0.0..2.0 * PI);
                    let q = (1.0 - z * z).sqrt();
                    [q * ph.cos(), q * ph.sin(), z]
                };
                let x = if u < weights[0] {
                    let rad = radius * rng.gen::<f64>().cbrt();
                    dir.map(|v| v * rad)
                } else {
                    let which = if u < weights[0] + weights[1] { 0 } else { 1 };
                    let rad = reach[which] * rng.gen::<f64>();
                    [0, 1, 2].map(|i| centers[which][i] + dir[i] * rad)
                };
                let rho2: f64 = x.iter().map(|v| v * v).sum();
                let f = if rho2 <= radius * radius {
                    match ev.eval(x) {
                        Ok(v) => v.norm_sqr() / density(x),
                        Err(_) => 0.0,
                    }
                } else {
                    0.0
                };
                s += f;
                s2 += f * f;
            }
            (s, s2, count)
        })
        .collect();
    let (s, s2, n) = parts.iter().fold((0.0, 0.0, 0usize), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    Ok((mean / norm, (var / n as f64).sqrt() / norm))
}

/// Inside-ball probability on coarse times with its Cesaro average.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IonizationSeries {
    pub t: Vec<f64>,
    pub radius: f64,
    pub inside_prob: Vec<f64>,
    pub running_average: Vec<f64>,
    /// Least-squares slope of the running average over the last quarter.
    pub final_slope: f64,
}

impl IonizationSeries {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,R,inside_prob,running_avg")?;
        for k in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[k], self.radius, self.inside_prob[k], self.running_average[k]
            )?;
        }
        Ok(())
    }
}

/// `(1/t) int_0^t f`, trapezoidal on the given nodes; the first entry is `f(t_0)`.
pub fn running_average(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
        }
        let span = t[k] - t[0];
        out.push(if span > 0.0 { acc / span } else { f[k] });
    }
    out
}

pub fn ionization_average(
    traj: &ChargeTrajectory,
    radius: f64,
    times: &[f64],
    quad: &BallQuadrature,
) -> Result<IonizationSeries, DynamicsError> {
    let inside: Vec<f64> = times
        .iter()
        .map(|&t| inside_probability(traj, t, radius, quad))
        .collect::<Result<_, _>>()?;
    let avg = running_average(times, &inside);
    let n = times.len();
    let from = n - (n / 4).max(2).min(n);
    let (xs, ys) = (&times[from..], &avg[from..]);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let final_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(IonizationSeries { t: times.to_vec(), radius, inside_prob: inside, running_average: avg, final_slope })
}
