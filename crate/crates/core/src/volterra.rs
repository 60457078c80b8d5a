//! Time-domain solver for the charges.
//!
//! The two equations are
//!
//! ```text
//! q1 + b1 A[q1]         + C[q2] = F1,   b1 = -1/sqrt(-pi i)
//! q2 + c4 A[alpha q2]   + C[q1] = F2,   c4 = 4 sqrt(pi i)
//! ```
//!
//! with the Abel operator `A[v](t) = int_0^t v(tau) (t - tau)^{-1/2} dtau` and
//! the cross operator `C[v](t) = int_0^t v(tau) c(t - tau) dtau`. The inner
//! time integral of the cross term is done in closed form:
//! `int_0^s U0(sigma; r) (s - sigma)^{-1/2} dsigma = -i e^{iB/s} / (4 pi r sqrt s)`,
//! `B = r^2/4`, so `c(s) = a e^{-3i pi/4} e^{iB/s} / (r sqrt(pi s))` where `a`
//! is the coupling factor.
//!
//! Densities are piecewise linear and all kernels are integrated exactly
//! against them (product integration). `q1` starts at `F1(0) = 4 pi N`
//! while `q2` starts like `sqrt t`; to keep second order near `t = 0` the
//! first few coarse cells are marched on a refined grid.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundState, ModelError, ModelParams};
use crate::moments::{cell_moments, Kernel, UniformWeights};
use crate::propagator::{abel_forcing_at, abel_forcing_origin, e14};
use crate::special::{cis, gauss_rule, CompensatedSum, C64, I};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolterraError {
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("invalid startup grid: {0}")]
    BadStartup(String),
    #[error("local 2x2 system singular at step {step} (t = {t})")]
    Singular { step: usize, t: f64 },
    #[error("non-finite charge at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("kernel table grid does not match the solver grid")]
    GridMismatch,
    #[error("unsupported initial state: {0}")]
    UnsupportedState(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform grid `t_k = k h`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
    h: f64,
}

impl TimeGrid {
    /// The stored `t_max` is recomputed as `h * n_steps` so the two agree exactly.
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self, VolterraError> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(VolterraError::BadGrid(format!("t_max must be positive, got {t_max}")));
        }
        if n_steps == 0 {
            return Err(VolterraError::BadGrid("n_steps must be positive".into()));
        }
        let h = t_max / n_steps as f64;
        Ok(TimeGrid { t_max: h * n_steps as f64, n_steps, h })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.h
    }
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }
}

/// Refined start: the first `coarse_cells` cells are split into
/// `refinement` sub-cells each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartupGrid {
    pub coarse_cells: usize,
    pub refinement: usize,
}

impl Default for StartupGrid {
    fn default() -> Self {
        StartupGrid { coarse_cells: 8, refinement: 64 }
    }
}

impl StartupGrid {
    /// Plain uniform march.
    pub fn none() -> Self {
        StartupGrid { coarse_cells: 0, refinement: 1 }
    }

    fn fine_cells(&self) -> usize {
        self.coarse_cells * self.refinement
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grid: TimeGrid,
    pub startup: StartupGrid,
}

impl SolverOptions {
    pub fn new(grid: TimeGrid) -> Self {
        SolverOptions { grid, startup: StartupGrid::default() }
    }

    fn validate(&self) -> Result<(), VolterraError> {
        let s = self.startup;
        if s.refinement == 0 {
            return Err(VolterraError::BadStartup("refinement must be positive".into()));
        }
        if s.coarse_cells >= self.grid.n_steps {
            return Err(VolterraError::BadStartup(format!(
                "{} refined cells leave nothing of a {}-step grid",
                s.coarse_cells, self.grid.n_steps
            )));
        }
        Ok(())
    }
}

/// `(b1, c4) = (-1/sqrt(-pi i), 4 sqrt(pi i))`.
pub fn abel_coefficients() -> (C64, C64) {
    let b1 = -1.0 / (C64::new(0.0, -PI)).sqrt();
    let c4 = 4.0 * (C64::new(0.0, PI)).sqrt();
    (b1, c4)
}

/// The cross kernel `c(s) = amplitude * s^{-1/2} e^{iB/s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossKernel {
    pub b: f64,
    pub amplitude: C64,
}

impl CrossKernel {
    pub fn new(params: &ModelParams) -> Self {
        let r = params.r();
        CrossKernel {
            b: r * r / 4.0,
            amplitude: params.coupling().factor() * cis(-3.0 * PI / 4.0) / (r * PI.sqrt()),
        }
    }

    pub fn kernel(&self) -> Kernel {
        Kernel::Osc { b: self.b }
    }

    pub fn eval(&self, s: f64) -> C64 {
        self.amplitude * self.kernel().eval(s)
    }
}

/// `K(s) = int_0^s U0(sigma; r) (s - sigma)^{-1/2} dsigma = -i e^{iB/s}/(4 pi r sqrt s)`.
///
/// `|K(s)|` grows like `s^{-1/2}` and its phase winds without limit as
/// `s -> 0`, so there is no value at `s = 0`; only the cell integrals of `K`
/// (which are finite) enter the solver.
pub fn inner_cross_integral(s: f64, r: f64) -> Option<C64> {
    if s <= 0.0 {
        return None;
    }
    Some(-I * cis(r * r / (4.0 * s)) / (4.0 * PI * r * s.sqrt()))
}

/// `K` on the grid nodes together with the product-integration weights.
#[derive(Debug, Clone)]
pub struct CrossKernelTable {
    grid: TimeGrid,
    r: f64,
    kernel: CrossKernel,
    values: Vec<C64>,
    weights: UniformWeights,
}

/// Tabulate the cross kernel for `params` on `grid`.
pub fn precompute_cross_kernel(params: &ModelParams, grid: TimeGrid) -> CrossKernelTable {
    let kernel = CrossKernel::new(params);
    let r = params.r();
    let values = (1..=grid.n_steps())
        .map(|k| inner_cross_integral(grid.node(k), r).expect("positive node"))
        .collect();
    let weights = UniformWeights::new(kernel.kernel(), grid.h(), grid.n_steps(), kernel.amplitude);
    CrossKernelTable { grid, r, kernel, values, weights }
}

impl CrossKernelTable {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn kernel(&self) -> CrossKernel {
        self.kernel
    }
    /// `K(t_k)`; `None` at `k = 0`.
    pub fn value(&self, k: usize) -> Option<C64> {
        if k == 0 {
            None
        } else {
            self.values.get(k - 1).copied()
        }
    }
    /// Exact integral of `K` over cell `k`, `[t_k, t_{k+1}]`.
    pub fn cell_integral(&self, k: usize) -> C64 {
        let (m0, _) = cell_moments(self.kernel.kernel(), self.grid.node(k), self.grid.node(k + 1));
        -I * m0 / (4.0 * PI * self.r)
    }
    pub fn weights(&self) -> &UniformWeights {
        &self.weights
    }
}

/// A Gaussian `A exp(-|x - c|^2 / (2 s^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
}

impl GaussianPacket {
    /// `(U0(t) g)(x) = A (s^2/(s^2 + 2it))^{3/2} exp(-|x - c|^2 / (2 (s^2 + 2it)))`.
    pub fn evolve(&self, t: f64, x: [f64; 3]) -> C64 {
        let s2 = self.width * self.width;
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let z = C64::new(s2, 2.0 * t);
        self.amplitude * (s2 / z).powf(1.5) * (-d2 / (2.0 * z)).exp()
    }

    /// Squared L2 norm `A^2 (pi s^2)^{3/2}`.
    pub fn norm_sq(&self) -> f64 {
        self.amplitude * self.amplitude * (PI * self.width * self.width).powf(1.5)
    }
}

/// Initial datum at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    BoundState,
    Zero,
    Gaussian(GaussianPacket),
}

/// Position of the second center; only `|r|` matters for the bound state.
pub fn second_center(r: f64) -> [f64; 3] {
    [0.0, 0.0, r]
}

/// The right-hand sides `F1(t)`, `F2(t)` for a given initial datum.
#[derive(Debug, Clone)]
pub struct Forcing {
    state: InitialState,
    r: f64,
    psi: BoundState,
}

impl Forcing {
    pub fn new(state: InitialState, params: &ModelParams) -> Result<Self, VolterraError> {
        if let InitialState::Gaussian(g) = &state {
            if !(g.width > 0.0 && g.width.is_finite() && g.amplitude.is_finite()) {
                return Err(VolterraError::UnsupportedState(format!("gaussian width {}", g.width)));
            }
        }
        Ok(Forcing { state, r: params.r(), psi: params.bound_state() })
    }

    pub fn bound_state(params: &ModelParams) -> Self {
        Forcing { state: InitialState::BoundState, r: params.r(), psi: params.bound_state() }
    }

    pub fn state(&self) -> &InitialState {
        &self.state
    }

    pub fn id(&self) -> String {
        match &self.state {
            InitialState::BoundState => format!("bound_state(N={:.17e})", self.psi.constant),
            InitialState::Zero => "zero".into(),
            InitialState::Gaussian(g) => format!(
                "gaussian(c=[{},{},{}],s={},A={})",
                g.center[0], g.center[1], g.center[2], g.width, g.amplitude
            ),
        }
    }

    /// `(F1(t), F2(t))`.
    pub fn eval(&self, t: f64) -> (C64, C64) {
        match &self.state {
            InitialState::BoundState => {
                (abel_forcing_origin(t, &self.psi), abel_forcing_at(t, self.r, &self.psi))
            }
            InitialState::Zero => (C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
            InitialState::Gaussian(g) => {
                let y = second_center(self.r);
                (
                    abel_of_smooth(t, |tau| g.evolve(tau, [0.0; 3])),
                    abel_of_smooth(t, |tau| g.evolve(tau, y)),
                )
            }
        }
    }
}

/// `4 sqrt(pi i) int_0^t f(tau) (t - tau)^{-1/2} dtau` for smooth `f`,
/// after `tau = t - u^2`.
fn abel_of_smooth(t: f64, f: impl Fn(f64) -> C64) -> C64 {
    if t <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let um = t.sqrt();
    let panels = 48;
    let rule = gauss_rule(16);
    let mut s = CompensatedSum::new();
    for j in 0..panels {
        let (a, b) = (um * j as f64 / panels as f64, um * (j + 1) as f64 / panels as f64);
        for (u, w) in rule.on(a, b) {
            s.add(2.0 * w * f(t - u * u));
        }
    }
    4.0 * (PI * I).sqrt() * s.value()
}

/// Forcing sampled on the nodes of `grid`.
pub fn forcing_from_initial_state(
    state: &InitialState,
    params: &ModelParams,
    grid: TimeGrid,
) -> Result<(Vec<C64>, Vec<C64>), VolterraError> {
    let f = Forcing::new(state.clone(), params)?;
    Ok(grid.nodes().map(|t| f.eval(t)).unzip())
}

/// Time-domain charges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChargeTrajectory {
    pub grid: TimeGrid,
    pub startup: StartupGrid,
    /// Charges on the coarse nodes `t_k = k h`.
    pub q1: Vec<C64>,
    pub q2: Vec<C64>,
    /// Charges on the refined start, `t = j h / refinement`.
    pub fine_q1: Vec<C64>,
    pub fine_q2: Vec<C64>,
    pub forcing_id: String,
    pub initial: InitialState,
    pub params: ModelParams,
}

/// Piecewise-linear representation on the merged fine-then-coarse mesh.
#[derive(Debug, Clone)]
pub struct HistoryMesh {
    pub t: Vec<f64>,
    pub q1: Vec<C64>,
    pub q2: Vec<C64>,
}

impl HistoryMesh {
    /// Linear interpolation; `t` is clamped to the mesh.
    pub fn sample(&self, t: f64) -> (C64, C64) {
        let n = self.t.len();
        if t <= self.t[0] {
            return (self.q1[0], self.q2[0]);
        }
        if t >= self.t[n - 1] {
            return (self.q1[n - 1], self.q2[n - 1]);
        }
        let j = self.t.partition_point(|&x| x <= t) - 1;
        let u = (t - self.t[j]) / (self.t[j + 1] - self.t[j]);
        (
            self.q1[j] + u * (self.q1[j + 1] - self.q1[j]),
            self.q2[j] + u * (self.q2[j + 1] - self.q2[j]),
        )
    }

    /// Index of the last mesh node `<= t`.
    pub fn locate(&self, t: f64) -> usize {
        self.t.partition_point(|&x| x <= t).saturating_sub(1)
    }
}

/// Laplace transform of the computed charges on `[0, t_max]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub p: C64,
    pub q1: C64,
    pub q2: C64,
    /// Bound on the neglected `[t_max, inf)` part assuming `|q| <= C t^{-3/2}`
    /// with `C` taken from the last node.
    pub tail_bound: f64,
}

/// `(int_0^1 e^{-zu} du, int_0^1 u e^{-zu} du)`.
pub fn exp_moments(z: C64) -> (C64, C64) {
    if z.norm() < 1e-2 {
        // Taylor series; six terms reach roundoff at |z| < 1e-2.
        let mut i0 = C64::new(0.0, 0.0);
        let mut i1 = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for k in 0..8 {
            i0 += term / (k + 1) as f64;
            i1 += term / (k + 2) as f64;
            term *= -z / (k + 1) as f64;
        }
        return (i0, i1);
    }
    let e = (-z).exp();
    let one = C64::new(1.0, 0.0);
    ((one - e) / z, (one - e * (one + z)) / (z * z))
}

impl ChargeTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.nodes()
    }

    /// Fine nodes followed by the coarse nodes past the refined start.
    pub fn mesh(&self) -> HistoryMesh {
        let hf = self.grid.h() / self.startup.refinement as f64;
        let mut t: Vec<f64> = (0..self.fine_q1.len()).map(|j| j as f64 * hf).collect();
        let mut q1 = self.fine_q1.clone();
        let mut q2 = self.fine_q2.clone();
        let k0 = if self.fine_q1.is_empty() { 0 } else { self.startup.coarse_cells + 1 };
        for k in k0..=self.grid.n_steps() {
            t.push(self.grid.node(k));
            q1.push(self.q1[k]);
            q2.push(self.q2[k]);
        }
        HistoryMesh { t, q1, q2 }
    }

    /// Exact transform of the piecewise-linear charges on `[0, t_max]`.
    pub fn laplace_transform(&self, p: C64) -> LaplaceEstimate {
        let mesh = self.mesh();
        let mut s1 = CompensatedSum::new();
        let mut s2 = CompensatedSum::new();
        for j in 0..mesh.t.len() - 1 {
            let (a, b) = (mesh.t[j], mesh.t[j + 1]);
            let d = b - a;
            let (i0, i1) = exp_moments(p * d);
            let e = (-p * a).exp() * d;
            s1.add(e * (mesh.q1[j] * (i0 - i1) + mesh.q1[j + 1] * i1));
            s2.add(e * (mesh.q2[j] * (i0 - i1) + mesh.q2[j + 1] * i1));
        }
        let tm = self.grid.t_max();
        let c = self.q1[self.grid.n_steps()].norm().max(self.q2[self.grid.n_steps()].norm()) * tm.powf(1.5);
        let tail_bound = c * (-p.re * tm).exp() * tm.powf(-1.5) / p.re;
        LaplaceEstimate { p, q1: s1.value(), q2: s2.value(), tail_bound }
    }

    /// `sup_t |q_j(t)| e^{-bt}` over the coarse nodes.
    pub fn growth_bound(&self, b: f64) -> f64 {
        self.times()
            .zip(self.q1.iter().zip(&self.q2))
            .map(|(t, (a, c))| a.norm().max(c.norm()) * (-b * t).exp())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, re_q1, im_q1, abs_q1, re_q2, im_q2, abs_q2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_q1,im_q1,abs_q1,re_q2,im_q2,abs_q2")?;
        for (k, t) in self.times().enumerate() {
            let (a, b) = (self.q1[k], self.q2[k]);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t,
                a.re,
                a.im,
                a.norm(),
                b.re,
                b.im,
                b.norm()
            )?;
        }
        Ok(())
    }
}

/// Convenience wrapper: bound-state datum, default refined start.
pub fn solve_bound_state(params: &ModelParams, grid: TimeGrid) -> Result<ChargeTrajectory, VolterraError> {
    let table = precompute_cross_kernel(params, grid);
    solve_charges(params, &table, &Forcing::bound_state(params), &SolverOptions::new(grid))
}

struct March<'a> {
    b1: C64,
    c4: C64,
    abel: &'a UniformWeights,
    cross: &'a UniformWeights,
}

struct Unknowns<'a> {
    t: &'a [f64],
    alpha: &'a [f64],
    forcing: &'a [(C64, C64)],
    q1: &'a mut [C64],
    q2: &'a mut [C64],
    aq: &'a mut [C64],
}

impl March<'_> {
    /// March nodes `start..` of a uniform run whose cells begin at node `base`.
    /// `extra(m)` supplies history from before `base` as
    /// `[A q1, A (alpha q2), C q2, C q1]`.
    fn run(
        &self,
        u: Unknowns<'_>,
        base: usize,
        start: usize,
        extra: impl Fn(usize) -> [C64; 4],
    ) -> Result<(), VolterraError> {
        let Unknowns { t, alpha, forcing, q1, q2, aq } = u;
        let (na, nc) = (self.abel.near[0], self.cross.near[0]);
        for m in start..t.len() {
            let l = m - base;
            let mut h = [CompensatedSum::new(); 4];
            for k in 1..l {
                let (ca, cc) = (self.abel.comb[k], self.cross.comb[k]);
                h[0].add(q1[m - k] * ca);
                h[1].add(aq[m - k] * ca);
                h[2].add(q2[m - k] * cc);
                h[3].add(q1[m - k] * cc);
            }
            let (fa, fc) = (self.abel.far[l - 1], self.cross.far[l - 1]);
            h[0].add(q1[base] * fa);
            h[1].add(aq[base] * fa);
            h[2].add(q2[base] * fc);
            h[3].add(q1[base] * fc);
            let e = extra(m);
            let hv: Vec<C64> = h.iter().zip(e).map(|(s, x)| s.value() + x).collect();

            let a11 = 1.0 + self.b1 * na;
            let a22 = 1.0 + self.c4 * na * alpha[m];
            let det = a11 * a22 - nc * nc;
            if !(det.norm() > 1e-300) {
                return Err(VolterraError::Singular { step: m, t: t[m] });
            }
            let r1 = forcing[m].0 - self.b1 * hv[0] - hv[2];
            let r2 = forcing[m].1 - self.c4 * hv[1] - hv[3];
            let x1 = (r1 * a22 - nc * r2) / det;
            let x2 = (a11 * r2 - nc * r1) / det;
            if !(x1.re.is_finite() && x1.im.is_finite() && x2.re.is_finite() && x2.im.is_finite()) {
                return Err(VolterraError::NonFinite { step: m, t: t[m] });
            }
            q1[m] = x1;
            q2[m] = x2;
            aq[m] = alpha[m] * x2;
        }
        Ok(())
    }
}

/// March the coupled system on `opts.grid`.
pub fn solve_charges(
    params: &ModelParams,
    table: &CrossKernelTable,
    forcing: &Forcing,
    opts: &SolverOptions,
) -> Result<ChargeTrajectory, VolterraError> {
    opts.validate()?;
    let grid = opts.grid;
    if table.grid != grid || table.r != params.r() {
        return Err(VolterraError::GridMismatch);
    }
    let (b1, c4) = abel_coefficients();
    let cross = table.kernel;
    let alpha = params.alpha();
    let n = grid.n_steps();
    let su = opts.startup;
    let nf = su.fine_cells();

    let t: Vec<f64> = grid.nodes().collect();
    let al: Vec<f64> = t.iter().map(|&x| alpha.evaluate(x)).collect();
    let fc: Vec<(C64, C64)> = t.iter().map(|&x| forcing.eval(x)).collect();
    let mut q1 = vec![C64::new(0.0, 0.0); n + 1];
    let mut q2 = vec![C64::new(0.0, 0.0); n + 1];
    let mut aq = vec![C64::new(0.0, 0.0); n + 1];

    let abel_c = UniformWeights::new(Kernel::Abel, grid.h(), n, C64::new(1.0, 0.0));
    let coarse = March { b1, c4, abel: &abel_c, cross: &table.weights };

    let (fine_q1, fine_q2) = if nf == 0 {
        q1[0] = fc[0].0;
        q2[0] = fc[0].1;
        aq[0] = al[0] * q2[0];
        coarse.run(
            Unknowns { t: &t, alpha: &al, forcing: &fc, q1: &mut q1, q2: &mut q2, aq: &mut aq },
            0,
            1,
            |_| [C64::new(0.0, 0.0); 4],
        )?;
        (Vec::new(), Vec::new())
    } else {
        let hf = grid.h() / su.refinement as f64;
        let tf: Vec<f64> = (0..=nf).map(|j| j as f64 * hf).collect();
        let alf: Vec<f64> = tf.iter().map(|&x| alpha.evaluate(x)).collect();
        let ff: Vec<(C64, C64)> = tf.iter().map(|&x| forcing.eval(x)).collect();
        let mut f1 = vec![C64::new(0.0, 0.0); nf + 1];
        let mut f2 = vec![C64::new(0.0, 0.0); nf + 1];
        let mut fa = vec![C64::new(0.0, 0.0); nf + 1];
        f1[0] = ff[0].0;
        f2[0] = ff[0].1;
        fa[0] = alf[0] * f2[0];
        let abel_f = UniformWeights::new(Kernel::Abel, hf, nf, C64::new(1.0, 0.0));
        let cross_f = UniformWeights::new(cross.kernel(), hf, nf, cross.amplitude);
        March { b1, c4, abel: &abel_f, cross: &cross_f }.run(
            Unknowns { t: &tf, alpha: &alf, forcing: &ff, q1: &mut f1, q2: &mut f2, aq: &mut fa },
            0,
            1,
            |_| [C64::new(0.0, 0.0); 4],
        )?;
        for k in 0..=su.coarse_cells {
            let j = k * su.refinement;
            q1[k] = f1[j];
            q2[k] = f2[j];
            aq[k] = al[k] * q2[k];
        }
        let t_end = grid.node(su.coarse_cells);
        let extra = |m: usize| {
            let tm = t[m];
            let mut h = [CompensatedSum::new(); 4];
            for j in 0..nf {
                // The last fine cell ends at exactly t_end.
                let tb = if j + 1 == nf { t_end } else { tf[j + 1] };
                let (sa, sb) = (tm - tb, tm - tf[j]);
                let (a0, a1) = cell_moments(Kernel::Abel, sa, sb);
                let (c0, c1) = cell_moments(cross.kernel(), sa, sb);
                let (c0, c1) = (cross.amplitude * c0, cross.amplitude * c1);
                let (an, af) = (a0 - a1, a1);
                let (cn, cf) = (c0 - c1, c1);
                h[0].add(f1[j + 1] * an + f1[j] * af);
                h[1].add(fa[j + 1] * an + fa[j] * af);
                h[2].add(f2[j + 1] * cn + f2[j] * cf);
                h[3].add(f1[j + 1] * cn + f1[j] * cf);
            }
            [h[0].value(), h[1].value(), h[2].value(), h[3].value()]
        };
        coarse.run(
            Unknowns { t: &t, alpha: &al, forcing: &fc, q1: &mut q1, q2: &mut q2, aq: &mut aq },
            su.coarse_cells,
            su.coarse_cells + 1,
            extra,
        )?;
        (f1, f2)
    };

    Ok(ChargeTrajectory {
        grid,
        startup: su,
        q1,
        q2,
        fine_q1,
        fine_q2,
        forcing_id: forcing.id(),
        initial: forcing.state().clone(),
        params: params.clone(),
    })
}

/// Small-time behaviour of the second forcing, `8 sqrt(pi t) e^{i pi/4} Psi0(r)`.
pub fn forcing_at_r_leading(t: f64, r: f64, psi: &BoundState) -> C64 {
    8.0 * (PI * t).sqrt() * e14() * psi.value(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::AlphaProfile;

    #[test]
    fn grid_product_is_exact() {
        let g = TimeGrid::new(60.0, 6000).unwrap();
        assert_eq!(g.h() * g.n_steps() as f64, g.t_max());
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(g.h() * 3.0, g.t_max());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn coefficients_have_expected_phases() {
        let (b1, c4) = abel_coefficients();
        assert!((b1 + cis(PI / 4.0) / PI.sqrt()).norm() < 1e-15);
        assert!((c4 - 4.0 * PI.sqrt() * cis(PI / 4.0)).norm() < 1e-14);
    }

    #[test]
    fn kernel_table_has_no_value_at_zero() {
        let p = ModelParams::default_generic();
        let g = TimeGrid::new(1.0, 10).unwrap();
        let tab = precompute_cross_kernel(&p, g);
        assert!(tab.value(0).is_none());
        let k1 = tab.value(10).unwrap();
        assert!((k1 - inner_cross_integral(1.0, 1.0).unwrap()).norm() < 1e-15);
        assert!(tab.cell_integral(0).norm().is_finite());
    }

    #[test]
    fn zero_forcing_gives_zero_trajectory() {
        let p = ModelParams::default_generic();
        let g = TimeGrid::new(2.0, 100).unwrap();
        let tab = precompute_cross_kernel(&p, g);
        let f = Forcing::new(InitialState::Zero, &p).unwrap();
        let tr = solve_charges(&p, &tab, &f, &SolverOptions::new(g)).unwrap();
        assert!(tr.q1.iter().chain(&tr.q2).all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn initial_values() {
        let p = ModelParams::default_generic();
        let g = TimeGrid::new(1.0, 50).unwrap();
        let tr = solve_bound_state(&p, g).unwrap();
        assert!((tr.q1[0] - 4.0 * PI * p.bound_state().constant).norm() < 1e-14);
        assert_eq!(tr.q2[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn rejects_oversized_startup() {
        let p = ModelParams::default_generic();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let tab = precompute_cross_kernel(&p, g);
        let f = Forcing::bound_state(&p);
        assert!(matches!(
            solve_charges(&p, &tab, &f, &SolverOptions::new(g)),
            Err(VolterraError::BadStartup(_))
        ));
    }

    #[test]
    fn decoupled_constant_alpha_matches_scalar_solution() {
        // With a vanishing coupling and the bound-state datum, the first
        // equation is the single-center problem, whose solution is
        // q1(t) = 4 pi N e^{it}: the bound state just rotates.
        let alpha = AlphaProfile::constant(3.0, 1.0).unwrap();
        let p = ModelParams::new(1.0, alpha).unwrap().with_coupling(crate::model::Coupling::Printed);
        let g = TimeGrid::new(2.0, 400).unwrap();
        let mut tab = precompute_cross_kernel(&p, g);
        tab.kernel.amplitude = C64::new(0.0, 0.0);
        tab.weights = UniformWeights::new(Kernel::Abel, g.h(), g.n_steps(), C64::new(0.0, 0.0));
        let opts = SolverOptions { grid: g, startup: StartupGrid::none() };
        let tr = solve_charges(&p, &tab, &Forcing::bound_state(&p), &opts).unwrap();
        let n4 = 4.0 * PI * p.bound_state().constant;
        let err = tr
            .times()
            .zip(&tr.q1)
            .map(|(t, q)| (q - n4 * cis(t)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-3 * n4, "{err}");
    }

    #[test]
    fn exp_moments_series_matches_closed_form() {
        let z = C64::new(0.011, -0.004);
        let (a0, a1) = exp_moments(z);
        let e = (-z).exp();
        let one = C64::new(1.0, 0.0);
        assert!((a0 - (one - e) / z).norm() < 1e-13);
        assert!((a1 - (one - e * (one + z)) / (z * z)).norm() < 1e-11);
    }

    #[test]
    fn gaussian_evolution_at_zero_time() {
        let g = GaussianPacket { center: [1.0, 2.0, 0.0], width: 0.5, amplitude: 2.0 };
        let v = g.evolve(0.0, [1.0, 2.5, 0.0]);
        assert!((v - 2.0 * (-0.5f64).exp()).norm() < 1e-15);
    }
}
