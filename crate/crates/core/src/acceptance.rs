//! End-to-end acceptance suite. Each check returns one [`Outcome`] line;
//! the `acceptance` test target and `ionize validate-all` both run it.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alpha::{genericity_residual, AlphaProfile, Shift};
use crate::asymptotics::{
    amplitude_bridge, amplitude_bridge_harmonic, default_window, fit_power_law, harmonic_branch_coefficients,
    FitMethod,
};
use crate::dynamics::{inside_probability, ionization_average, norm_squared, survival_amplitude, BallQuadrature};
use crate::model::{Coupling, ModelParams, Normalization};
use crate::spectral::{
    axis_lemma_value, branch_fit_at_origin, build_and_solve, find_pole, limit_at_i, sign_lemma_value,
};
use crate::special::C64;
use crate::volterra::{
    precompute_cross_kernel, solve_bound_state, solve_charges, ChargeTrajectory, Forcing, InitialState,
    SolverOptions, TimeGrid,
};

/// Knobs of the suite; the defaults are the reference configuration.
#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceOptions {
    pub t_max: f64,
    pub n_steps: usize,
    pub n_trunc: usize,
    pub seed: u64,
    /// Also report checks on a configuration outside the reference set.
    pub supplementary: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { t_max: 60.0, n_steps: 6000, n_trunc: 64, seed: 20_240_601, supplementary: true }
    }
}

/// One line of the report.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    /// Supplementary lines are informative and never fail the suite.
    pub counted: bool,
    pub detail: String,
}

impl Outcome {
    fn new(id: u8, name: &str, pass: bool, detail: String) -> Self {
        Outcome { id, name: name.into(), pass, counted: true, detail }
    }

    fn supplementary(id: u8, name: &str, pass: bool, detail: String) -> Self {
        Outcome { id, name: name.into(), pass, counted: false, detail }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match (self.pass, self.counted) {
            (true, true) => "PASS",
            (false, true) => "FAIL",
            (true, false) => "info-pass",
            (false, false) => "info-fail",
        };
        write!(f, "[{tag}] criterion {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

fn failed(id: u8, name: &str, err: impl fmt::Display) -> Outcome {
    Outcome::new(id, name, false, format!("error: {err}"))
}

/// Default generic configuration solved on the reference grid.
pub struct ReferenceRun {
    pub params: ModelParams,
    pub trajectory: ChargeTrajectory,
    pub march_seconds: f64,
}

impl ReferenceRun {
    pub fn solve(opts: &AcceptanceOptions) -> Result<Self, crate::volterra::VolterraError> {
        let params = ModelParams::default_generic();
        let grid = TimeGrid::new(opts.t_max, opts.n_steps)?;
        let start = Instant::now();
        let trajectory = solve_bound_state(&params, grid)?;
        Ok(ReferenceRun { params, trajectory, march_seconds: start.elapsed().as_secs_f64() })
    }
}

fn march(params: &ModelParams, t_max: f64, h: f64) -> Result<ChargeTrajectory, crate::volterra::VolterraError> {
    let n = (t_max / h).round() as usize;
    solve_bound_state(params, TimeGrid::new(t_max, n)?)
}

const DECAY_BAND: (f64, f64) = (-1.8, -1.2);
const DECAY_WINDOW: (f64, f64) = (15.0, 60.0);

fn decay_law_line(id: u8, name: &str, traj: &ChargeTrajectory, supplementary: bool, extra: String) -> Outcome {
    let t: Vec<f64> = traj.times().collect();
    let m2: Vec<f64> = traj.q2.iter().map(|z| z.norm()).collect();
    let theta = match survival_amplitude(traj) {
        Ok(s) => s,
        Err(e) => return failed(id, name, e),
    };
    let mt: Vec<f64> = theta.theta.iter().map(|z| z.norm()).collect();
    let f2 = fit_power_law(&t, &m2, DECAY_WINDOW, FitMethod::Envelope);
    let ft = fit_power_law(&theta.t, &mt, DECAY_WINDOW, FitMethod::RawRegression);
    let inside = |x: f64| x >= DECAY_BAND.0 && x <= DECAY_BAND.1;
    let (pass, detail) = match (&f2, &ft) {
        (Ok(a), Ok(b)) => (
            inside(a.exponent) && inside(b.exponent),
            format!(
                "|q2| envelope exponent {:.4}, |theta| raw exponent {:.4} (band [{}, {}]), |theta(60)| = {:.4}{extra}",
                a.exponent,
                b.exponent,
                DECAY_BAND.0,
                DECAY_BAND.1,
                mt.last().copied().unwrap_or(f64::NAN)
            ),
        ),
        _ => (false, format!("fit error: {:?} / {:?}", f2.err(), ft.err())),
    };
    if supplementary {
        Outcome::supplementary(id, name, pass, detail)
    } else {
        Outcome::new(id, name, pass, detail)
    }
}

/// Decay law on the reference configuration.
pub fn criterion_1(run: &ReferenceRun) -> Outcome {
    let runtime_ok = run.march_seconds <= 300.0;
    let mut o = decay_law_line(
        1,
        "decay law",
        &run.trajectory,
        false,
        format!(", march {:.2} s (limit 300 s)", run.march_seconds),
    );
    o.pass &= runtime_ok;
    o
}

/// A configuration whose bound state ionizes within the window.
pub fn ionizing_params() -> ModelParams {
    let alpha = AlphaProfile::cosine(3.0, 0.3, 0.25).expect("valid profile");
    ModelParams::new(0.7, alpha).expect("valid params")
}

pub fn criterion_1_supplementary(opts: &AcceptanceOptions) -> Outcome {
    match march(&ionizing_params(), 60.0, opts.t_max / opts.n_steps as f64) {
        Ok(tr) => decay_law_line(1, "decay law (r=0.7, alpha0=0.3)", &tr, true, String::new()),
        Err(e) => failed(1, "decay law (r=0.7, alpha0=0.3)", e),
    }
}

const DUALITY_POINTS: [(f64, f64); 3] = [(1.5, 0.4), (2.0, 0.0), (1.0, 0.9)];

/// Spectral solution against the transform of the time-domain charges.
pub fn criterion_2(run: &ReferenceRun, opts: &AcceptanceOptions) -> Outcome {
    let name = "laplace duality";
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &(re, im) in &DUALITY_POINTS {
        let p = C64::new(re, im);
        let est = run.trajectory.laplace_transform(p);
        let sol = match build_and_solve(p, opts.n_trunc, &run.params) {
            Ok(s) => s,
            Err(e) => return failed(2, name, e),
        };
        let (s1, s2) = (sol.component(1, 0).unwrap(), sol.component(2, 0).unwrap());
        let e1 = (s1 - est.q1).norm() / s1.norm();
        let e2 = (s2 - est.q2).norm() / s2.norm();
        let err = e1.max(e2) + est.tail_bound / s2.norm().min(s1.norm());
        worst = worst.max(err);
        // The printed operators use a = (2 pi)^{-3/2}; report how far they are from the charges.
        let printed = build_and_solve(p, opts.n_trunc, &run.params.clone().with_coupling(Coupling::Printed))
            .map(|s| s.component(2, 0).unwrap() / est.q2)
            .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
            .unwrap_or_else(|e| e.to_string());
        parts.push(format!("p={re}{im:+}i rel {err:.2e} (printed-coupling q2 factor {printed})"));
    }
    Outcome::new(2, name, worst <= 1e-3, format!("max rel error {worst:.2e} <= 1e-3; {}", parts.join("; ")))
}

fn printed(r: f64, alpha: AlphaProfile) -> ModelParams {
    ModelParams::with_conventions(r, alpha, Normalization::Unit, Coupling::Printed).expect("valid params")
}

/// Sign lemmas on random samples.
pub fn criterion_3(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut v1, mut v2) = (0usize, 0usize);
    let rs = [0.5, 1.0, 2.0];
    let ws = [0.5, 1.0, 3.0];
    for _ in 0..10_000 {
        let r = rs[rng.gen_range(0..3)];
        let w = ws[rng.gen_range(0..3)];
        let params = printed(r, AlphaProfile::cosine(w, rng.gen_range(0.0..2.0), 0.25).unwrap());
        let n = rng.gen_range(-40..=40);
        let p = C64::new(rng.gen_range(1e-6..10.0f64), rng.gen_range(-20.0..20.0));
        match sign_lemma_value(n, p, &params) {
            Ok(v) if v < 0.0 => {}
            _ => v1 += 1,
        }
    }
    for _ in 0..1_000 {
        let r = rs[rng.gen_range(0..3)];
        let w = ws[rng.gen_range(0..3)];
        let params = printed(r, AlphaProfile::cosine(w, rng.gen_range(0.0..2.0), 0.25).unwrap());
        let n = rng.gen_range(-40..=-1);
        // p = iy on the imaginary axis of the strip, 0 <= y < omega.
        let y = rng.gen_range(0.0..w);
        // 4 pi alpha0 is real, so only Im c_n enters.
        match axis_lemma_value(n, y, &params) {
            Ok(v) if v > 0.0 => {}
            _ => v2 += 1,
        }
    }
    Outcome::new(
        3,
        "sign lemmas",
        v1 == 0 && v2 == 0,
        format!("Im c_n < 0 violations {v1}/10000, axis Im > 0 violations {v2}/1000"),
    )
}

/// Pole equation root counts.
pub fn criterion_4(opts: &AcceptanceOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let r = rng.gen_range(0.3..3.0);
        let a0 = rng.gen_range(0.0..2.0);
        let params = printed(r, AlphaProfile::cosine(3.0, a0, 0.25).unwrap());
        match find_pole(&params) {
            Ok(pl) if pl.lambda_roots.len() == 1 && pl.residuals[0] < 1e-12 => worst = worst.max(pl.residuals[0]),
            Ok(pl) => bad.push(format!("r={r:.3} a0={a0:.3}: {} roots", pl.lambda_roots.len())),
            Err(e) => bad.push(format!("r={r:.3} a0={a0:.3}: {e}")),
        }
    }
    let mut counts = Vec::new();
    for &r in &[0.5, 1.0, 2.0] {
        for &a0 in &[-0.001, -0.01, -0.05, -0.1, -0.2, -0.5, -1.0] {
            let params = printed(r, AlphaProfile::cosine(3.0, a0, 0.25).unwrap());
            counts.push(find_pole(&params).map(|p| p.lambda_roots.len()).unwrap_or(0));
            // Counts of 0 or 3 are outside the allowed set and fail the check below.
        }
    }
    let sweep_ok = counts.iter().all(|c| (1..=2).contains(c)) && counts.contains(&2);
    Outcome::new(
        4,
        "pole uniqueness",
        bad.is_empty() && sweep_ok,
        format!(
            "alpha0 >= 0: {} of 50 configs without a unique root{} (worst relative residual {:.1e}); alpha0 < 0 root counts {:?}",
            bad.len(),
            if bad.is_empty() { String::new() } else { format!(" ({})", bad.join(", ")) },
            worst,
            counts
        ),
    )
}

/// Removable limit at `p = i` against the printed value `i sqrt(2 pi)`.
pub fn criterion_5(opts: &AcceptanceOptions) -> Outcome {
    let name = "removable singularity";
    let target = C64::new(0.0, (2.0 * PI).sqrt());
    let base = ModelParams::default_generic().with_normalization(Normalization::PaperLiteral);
    let mut lines = Vec::new();
    let mut pass = false;
    for coupling in [Coupling::Printed, Coupling::Physical] {
        match limit_at_i(&base.clone().with_coupling(coupling), opts.n_trunc) {
            Ok(l) => {
                let err = (l.value - target).norm();
                if coupling == Coupling::Printed {
                    pass = err <= 1e-3;
                }
                lines.push(format!(
                    "{coupling:?} coupling q1(i) = {:.6}{:+.6}i (|diff| {err:.3e})",
                    l.value.re, l.value.im
                ));
            }
            Err(e) => lines.push(format!("{coupling:?}: {e}")),
        }
    }
    Outcome::new(5, name, pass, format!("target 0{:+.5}i within 1e-3; {}", target.im, lines.join("; ")))
}

fn branch_line(
    id: u8,
    name: &str,
    params: &ModelParams,
    opts: &AcceptanceOptions,
    supplementary: bool,
) -> Outcome {
    let eps = 1e-3;
    let fits = match branch_fit_at_origin(params, opts.n_trunc, eps) {
        Ok(f) => f,
        Err(e) => return failed(id, name, e),
    };
    let residual_ok = fits.iter().all(|f| f.accepted);
    // The fit window must hold many periods of the driving.
    let t_max = opts.t_max.max(40.0 * params.period());
    let h = opts.t_max / opts.n_steps as f64;
    let bridge = march(params, t_max, h).map_err(|e| e.to_string()).and_then(|tr| {
        let t: Vec<f64> = tr.times().collect();
        let m2: Vec<f64> = tr.q2.iter().map(|z| z.norm()).collect();
        let fit = fit_power_law(&t, &m2, default_window(t_max), FitMethod::Envelope).map_err(|e| e.to_string())?;
        let coeffs = harmonic_branch_coefficients(params, opts.n_trunc, eps, 2, 16).map_err(|e| e.to_string())?;
        Ok((amplitude_bridge_harmonic(&fit, &coeffs, params.omega()), amplitude_bridge(&fit, fits[1].d), fit.exponent))
    });
    let (bridge_ok, bridge_text) = match bridge {
        Ok((all, central, exponent)) => (
            all.pass,
            format!(
                "bridge ratio {:.4} over all harmonics, {:.4} from central d alone (band [0.8, 1.25]), tail exponent {exponent:.3}{}",
                all.ratio,
                central.ratio,
                all.note.map(|n| format!(" [{n}]")).unwrap_or_default()
            ),
        ),
        Err(e) => (false, format!("bridge error: {e}")),
    };
    let detail = format!(
        "eps=1e-3: q1 residual {:.2e} vs bound {:.2e} (|d|={:.3e}), q2 residual {:.2e} vs bound {:.2e} (|d|={:.3e}); {bridge_text}",
        fits[0].residual,
        fits[0].bound,
        fits[0].d.norm(),
        fits[1].residual,
        fits[1].bound,
        fits[1].d.norm()
    );
    let pass = residual_ok && bridge_ok;
    if supplementary {
        Outcome::supplementary(id, name, pass, detail)
    } else {
        Outcome::new(id, name, pass, detail)
    }
}

/// Branch structure at `p = 0` in a non-resonant and a resonant configuration.
pub fn criterion_6(opts: &AcceptanceOptions) -> Vec<Outcome> {
    let mut out = Vec::new();
    for (w, label) in [(3.0, "branch structure (omega=3)"), (0.5, "branch structure (omega=1/2)")] {
        let params = ModelParams::new(1.0, AlphaProfile::cosine(w, 1.0, 0.25).unwrap()).unwrap();
        out.push(branch_line(6, label, &params, opts, false));
    }
    if opts.supplementary {
        out.push(branch_line(6, "branch structure (r=0.7, alpha0=0.3)", &ionizing_params(), opts, true));
    }
    out
}

/// Genericity residuals.
pub fn criterion_7() -> Outcome {
    let c = genericity_residual(&AlphaProfile::constant(3.0, 1.0).unwrap(), 25, Shift::Right).unwrap().residual;
    let q = genericity_residual(&AlphaProfile::cosine(3.0, 1.0, 0.25).unwrap(), 25, Shift::Right).unwrap().residual;
    let blaschke = AlphaProfile::new(3.0, &[(0, C64::new(1.0, 0.0)), (1, C64::new(-0.5, 0.0)), (2, C64::new(1.0, 0.0))])
        .unwrap();
    let b = genericity_residual(&blaschke, 200, Shift::Right).unwrap().residual;
    let pass = c == 1.0 && q < 1e-10 && (b - 0.8660).abs() <= 0.005;
    Outcome::new(
        7,
        "genericity residuals",
        pass,
        format!("constant {c} (exactly 1), alpha1=1/4 {q:.2e} (< 1e-10 at M=25), tail (-1/2, 1) {b:.5} (0.8660 +- 0.005 at M=200)"),
    )
}

/// Running average of the inside-ball probability.
pub fn criterion_8(run: &ReferenceRun) -> Outcome {
    let name = "scattering diagnostic";
    let t_max = run.trajectory.grid.t_max();
    let times: Vec<f64> = (0..=t_max.floor() as usize).map(|k| k as f64).collect();
    let series = match ionization_average(&run.trajectory, 2.0, &times, &BallQuadrature::default()) {
        Ok(s) => s,
        Err(e) => return failed(8, name, e),
    };
    let start = times.iter().position(|&t| t >= 5.0).unwrap_or(0);
    let avg = &series.running_average;
    let worst_rise = avg[start..].windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let (a5, last) = (avg[start], *avg.last().unwrap());
    let pass = worst_rise <= 1e-3 && last < 0.5 * a5;
    Outcome::new(
        8,
        name,
        pass,
        format!(
            "R=2: largest step increase on [5, {t_max}] {worst_rise:.2e} (<= 1e-3), average {a5:.5} at t=5 -> {last:.5} at t={t_max} (needs < 50%), final slope {:.2e}",
            series.final_slope
        ),
    )
}

/// Norm conservation and the closed-form inside probability.
pub fn criterion_9(run: &ReferenceRun) -> Outcome {
    let name = "unitarity budget";
    let mut norms = Vec::new();
    for t in [1.0, 2.0, 5.0] {
        match norm_squared(&run.trajectory, t) {
            Ok(v) => norms.push(v),
            Err(e) => return failed(9, name, e),
        }
    }
    let p0 = match inside_probability(&run.trajectory, 0.0, 2.0, &BallQuadrature::default()) {
        Ok(v) => v,
        Err(e) => return failed(9, name, e),
    };
    let exact = 1.0 - (-4.0f64).exp();
    let pass = norms.iter().all(|v| (0.98..=1.02).contains(v)) && (p0 - exact).abs() <= 1e-6;
    Outcome::new(
        9,
        name,
        pass,
        format!(
            "||Psi_t||^2 at t=1,2,5: {:.7}, {:.7}, {:.7} (in [0.98, 1.02]); inside(t=0, R=2) {p0:.9} vs {exact:.9} (|diff| {:.1e} <= 1e-6)",
            norms[0],
            norms[1],
            norms[2],
            (p0 - exact).abs()
        ),
    )
}

/// Observed order of the time march from three nested grids.
pub fn volterra_order(params: &ModelParams, t_max: f64, n: usize) -> Result<(f64, f64, f64), crate::volterra::VolterraError> {
    let table = |m| {
        let g = TimeGrid::new(t_max, m)?;
        let tab = precompute_cross_kernel(params, g);
        let f = Forcing::new(InitialState::BoundState, params)?;
        solve_charges(params, &tab, &f, &SolverOptions::new(g))
    };
    let (a, b, c) = (table(n)?, table(2 * n)?, table(4 * n)?);
    let diff = |x: &ChargeTrajectory, y: &ChargeTrajectory, s: usize| {
        (0..=n)
            .map(|k| (x.q1[k * s] - y.q1[2 * k * s]).norm().max((x.q2[k * s] - y.q2[2 * k * s]).norm()))
            .fold(0.0, f64::max)
    };
    let e1 = diff(&a, &b, 1);
    let e2 = diff(&b, &c, 2);
    Ok(((e1 / e2).log2(), e1, e2))
}

/// Grid-halving order and spectral truncation drift.
pub fn criterion_10() -> Outcome {
    let params = ModelParams::default_generic();
    let order = volterra_order(&params, 2.0, 200);
    let p = C64::new(1.5, 0.4);
    let drift = build_and_solve(p, 32, &params).and_then(|a| {
        build_and_solve(p, 64, &params).map(|b| {
            (a.component(1, 0).unwrap() - b.component(1, 0).unwrap())
                .norm()
                .max((a.component(2, 0).unwrap() - b.component(2, 0).unwrap()).norm())
        })
    });
    match (order, drift) {
        (Ok((ord, e1, e2)), Ok(d)) => Outcome::new(
            10,
            "convergence gates",
            ord >= 1.0 && d < 1e-8,
            format!("Volterra order {ord:.3} (>= 1; diffs {e1:.2e}, {e2:.2e}), spectral N=32->64 drift {d:.2e} (< 1e-8)"),
        ),
        (o, d) => failed(10, "convergence gates", format!("{:?} / {:?}", o.err(), d.err())),
    }
}

/// Everything, in criterion order.
pub fn run_all(opts: &AcceptanceOptions) -> Vec<Outcome> {
    let run = match ReferenceRun::solve(opts) {
        Ok(r) => r,
        Err(e) => return vec![failed(0, "reference march", e)],
    };
    let mut out = vec![criterion_1(&run)];
    if opts.supplementary {
        out.push(criterion_1_supplementary(opts));
    }
    out.push(criterion_2(&run, opts));
    out.push(criterion_3(opts));
    out.push(criterion_4(opts));
    out.push(criterion_5(opts));
    out.extend(criterion_6(opts));
    out.push(criterion_7());
    out.push(criterion_8(&run));
    out.push(criterion_9(&run));
    out.push(criterion_10());
    out
}

/// True when every counted line passed.
pub fn all_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().filter(|o| o.counted).all(|o| o.pass)
}
