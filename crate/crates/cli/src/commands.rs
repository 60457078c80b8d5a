//! One function per subcommand. Each writes its outputs through an
//! [`OutputDir`] and returns the key results for the manifest.

use std::path::Path;

use ionize_core::acceptance::{all_passed, run_all};
use ionize_core::alpha::genericity_residual;
use ionize_core::asymptotics::{default_window, fit_power_law, harmonic_branch_coefficients};
use ionize_core::dynamics::{
    inside_probability_monte_carlo, ionization_average, survival_amplitude_with_stride, BallQuadrature,
};
use ionize_core::spectral::{branch_fit_at_origin, build_and_solve, find_pole};
use ionize_core::volterra::{precompute_cross_kernel, solve_charges, Forcing};
use ionize_core::{AcceptanceOptions, ChargeTrajectory, FitMethod, SolverOptions, C64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::OutputDir;

/// Exponent band counted as a `t^{-3/2}` tail.
pub const DECAY_BAND: (f64, f64) = (-1.8, -1.2);

pub struct Context<'a> {
    pub config: &'a Config,
    pub seed: u64,
    pub input: Option<&'a Path>,
}

fn march(config: &Config) -> Result<ChargeTrajectory, CliError> {
    let params = config.params()?;
    let grid = config.grid()?;
    let opts = SolverOptions { grid, startup: config.solver.startup };
    let table = precompute_cross_kernel(&params, grid);
    let forcing = Forcing::new(config.solver.initial.clone(), &params)?;
    log::info!("marching {} steps to t = {}", grid.n_steps(), grid.t_max());
    Ok(solve_charges(&params, &table, &forcing, &opts)?)
}

fn last_abs(v: &[C64]) -> f64 {
    v.last().map_or(f64::NAN, |z| z.norm())
}

pub fn solve_charges_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let traj = march(ctx.config)?;
    out.write_with("charges.csv", |w| traj.write_csv(w))?;
    Ok(json!({
        "forcing": traj.forcing_id,
        "abs_q1_final": last_abs(&traj.q1),
        "abs_q2_final": last_abs(&traj.q2),
    }))
}

pub fn survival_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let traj = march(ctx.config)?;
    let series = survival_amplitude_with_stride(&traj, ctx.config.survival.stride)?;
    out.write_with("survival.csv", |w| series.write_csv(w))?;
    let mags: Vec<f64> = series.theta.iter().map(|z| z.norm()).collect();
    let fit = fit_power_law(&series.t, &mags, default_window(traj.grid.t_max()), FitMethod::RawRegression)
        .map(|f| json!({"exponent": f.exponent, "amplitude": f.amplitude(), "window": f.window}))
        .unwrap_or_else(|e| json!({"error": e.to_string()}));
    Ok(json!({"abs_theta_final": mags.last(), "decay_fit": fit}))
}

pub fn ionization_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let cfg = &ctx.config.ionization;
    if !(cfg.time_step > 0.0) {
        return Err(CliError::Validation(format!("time_step must be positive, got {}", cfg.time_step)));
    }
    let traj = march(ctx.config)?;
    let t_max = traj.grid.t_max();
    let count = (t_max / cfg.time_step + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|k| k as f64 * cfg.time_step).collect();
    let series = ionization_average(&traj, cfg.radius, &times, &BallQuadrature::default())?;
    out.write_with("ionization.csv", |w| series.write_csv(w))?;
    let mut key = json!({
        "radius": cfg.radius,
        "running_average_final": series.running_average.last(),
        "final_slope": series.final_slope,
    });
    if cfg.monte_carlo_samples > 0 {
        let t = cfg.monte_carlo_time.unwrap_or(t_max.min(5.0));
        let (mean, err) = inside_probability_monte_carlo(&traj, t, cfg.radius, cfg.monte_carlo_samples, ctx.seed)?;
        let mc = json!({"t": t, "samples": cfg.monte_carlo_samples, "seed": ctx.seed, "estimate": mean, "std_error": err});
        out.write_json("monte_carlo.json", &mc)?;
        key["monte_carlo"] = mc;
    }
    Ok(key)
}

pub fn spectral_solve_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let params = ctx.config.params()?;
    let n = ctx.config.spectral.n_trunc;
    let sols = ctx
        .config
        .spectral
        .points
        .iter()
        .map(|&[re, im]| build_and_solve(C64::new(re, im), n, &params))
        .collect::<Result<Vec<_>, _>>()?;
    out.write_json("spectral.json", &sols)?;
    let central: Vec<Value> = sols
        .iter()
        .map(|s| json!({"p": s.p, "q1_0": s.component(1, 0), "q2_0": s.component(2, 0), "residual": s.residual}))
        .collect();
    Ok(json!({ "central_components": central }))
}

pub fn find_pole_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let pole = find_pole(&ctx.config.params()?)?;
    out.write_json("pole.json", &pole)?;
    Ok(serde_json::to_value(&pole).expect("pole serializes"))
}

pub fn check_genericity_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let profile = ctx.config.alpha_profile()?;
    let g = &ctx.config.genericity;
    let report = genericity_residual(&profile, g.m, g.shift)?;
    let verdict = if report.generic { "generic" } else { "nongeneric" };
    let body = json!({ "verdict": verdict, "report": report });
    out.write_json("genericity.json", &body)?;
    Ok(json!({ "verdict": verdict, "residual": report.residual, "m": report.m }))
}

pub fn branch_fit_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let params = ctx.config.params()?;
    let s = &ctx.config.spectral;
    let fits = branch_fit_at_origin(&params, s.n_trunc, s.epsilon)?;
    let h1 = harmonic_branch_coefficients(&params, s.n_trunc, s.epsilon, 1, s.harmonics)?;
    let h2 = harmonic_branch_coefficients(&params, s.n_trunc, s.epsilon, 2, s.harmonics)?;
    let body = json!({ "fits": fits, "harmonics": { "q1": h1, "q2": h2 } });
    out.write_json("branch_fit.json", &body)?;
    let key: Vec<Value> = fits
        .iter()
        .map(|f| json!({"component": f.component, "d": f.d, "residual": f.residual, "accepted": f.accepted}))
        .collect();
    Ok(Value::Array(key))
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub exponent: f64,
    pub amplitude: f64,
    pub tail_amplitude: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub method: FitMethod,
    pub column: String,
    pub pass: bool,
}

/// Read `t` and one column from a CSV produced by another command.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<(String, Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Validation(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let t_col = find("t").ok_or_else(|| CliError::Validation("input has no `t` column".into()))?;
    let name = match column {
        Some(c) => c.to_string(),
        None => ["abs_q2", "abs_theta"]
            .into_iter()
            .find(|c| find(c).is_some())
            .ok_or_else(|| CliError::Validation("input has neither abs_q2 nor abs_theta".into()))?
            .to_string(),
    };
    let col = find(&name).ok_or_else(|| CliError::Validation(format!("input has no `{name}` column")))?;
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Validation(e.to_string()))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Validation(format!("bad number in row {:?}", rec.position())))
        };
        t.push(parse(t_col)?);
        v.push(parse(col)?);
    }
    Ok((name, t, v))
}

pub fn fit_decay_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let input = ctx.input.ok_or_else(|| CliError::Validation("fit-decay needs --input <csv>".into()))?;
    let f = &ctx.config.fit;
    let (column, t, v) = read_series(input, f.column.as_deref())?;
    let t_last = *t.last().ok_or_else(|| CliError::Validation("input series is empty".into()))?;
    let window = f.window.map(|[a, b]| (a, b)).unwrap_or_else(|| default_window(t_last));
    let method = f.method.unwrap_or(if column == "abs_theta" { FitMethod::RawRegression } else { FitMethod::Envelope });
    let fit = fit_power_law(&t, &v, window, method)?;
    let report = FitReport {
        exponent: fit.exponent,
        amplitude: fit.amplitude(),
        tail_amplitude: fit.tail_amplitude,
        window: fit.window,
        residual: fit.rms_residual,
        method: fit.method,
        column,
        pass: fit.exponent >= DECAY_BAND.0 && fit.exponent <= DECAY_BAND.1,
    };
    out.write_json("fit.json", &report)?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

pub fn validate_all_cmd(ctx: &Context, out: &mut OutputDir) -> Result<Value, CliError> {
    let opts = AcceptanceOptions {
        t_max: ctx.config.solver.t_max,
        n_steps: ctx.config.solver.n_steps,
        n_trunc: ctx.config.spectral.n_trunc,
        seed: ctx.seed,
        supplementary: ctx.config.acceptance.supplementary,
    };
    let outcomes = run_all(&opts);
    for o in &outcomes {
        println!("{o}");
    }
    out.write_json("acceptance.json", &outcomes)?;
    out.write_with("acceptance.txt", |w| outcomes.iter().try_for_each(|o| writeln!(w, "{o}")))?;
    let counted: Vec<_> = outcomes.iter().filter(|o| o.counted).collect();
    let failed = counted.iter().filter(|o| !o.pass).count();
    let key = json!({ "passed": counted.len() - failed, "failed": failed, "total": counted.len() });
    if !all_passed(&outcomes) {
        // The report is on disk; the manifest is still written by the caller.
        return Err(CliError::Acceptance(failed, counted.len()));
    }
    Ok(key)
}
