//! Decay fits on synthetic series with known exponents.

use ionize_core::asymptotics::fit_power_law;
use ionize_core::FitMethod;

fn series(beta: f64, amp: f64, wiggle: f64, t_max: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (1..=n).map(|k| k as f64 * t_max / n as f64).collect();
    let m = t.iter().map(|&x| amp * x.powf(beta) * (1.0 + wiggle * (3.0 * x).cos())).collect();
    (t, m)
}

#[test]
fn raw_regression_recovers_exact_power_law() {
    let (t, m) = series(-1.5, 0.8, 0.0, 60.0, 6000);
    let f = fit_power_law(&t, &m, (15.0, 60.0), FitMethod::RawRegression).unwrap();
    assert!((f.exponent + 1.5).abs() < 1e-12);
    assert!((f.amplitude() - 0.8).abs() < 1e-10);
    assert!((f.tail_amplitude - 0.8).abs() < 1e-10);
}

#[test]
fn scaling_the_series_shifts_only_the_amplitude() {
    let (t, m) = series(-1.5, 1.0, 0.3, 60.0, 6000);
    let base = fit_power_law(&t, &m, (15.0, 60.0), FitMethod::Envelope).unwrap();
    let scaled: Vec<f64> = m.iter().map(|v| 7.5 * v).collect();
    let f = fit_power_law(&t, &scaled, (15.0, 60.0), FitMethod::Envelope).unwrap();
    assert!((f.exponent - base.exponent).abs() < 1e-12);
    assert!((f.log_amplitude - base.log_amplitude - 7.5f64.ln()).abs() < 1e-12);
}

#[test]
fn rescaling_time_keeps_the_exponent() {
    let (t, m) = series(-1.5, 1.0, 0.0, 60.0, 6000);
    let base = fit_power_law(&t, &m, (15.0, 60.0), FitMethod::RawRegression).unwrap();
    let t2: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
    let f = fit_power_law(&t2, &m, (30.0, 120.0), FitMethod::RawRegression).unwrap();
    assert!((f.exponent - base.exponent).abs() < 1e-12);
    assert!((f.log_amplitude - base.log_amplitude - 1.5 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn envelope_exponent_is_robust_to_the_window() {
    let (t, m) = series(-1.5, 1.0, 0.4, 80.0, 8000);
    for w in [(10.0, 40.0), (15.0, 60.0), (20.0, 80.0), (40.0, 80.0)] {
        let f = fit_power_law(&t, &m, w, FitMethod::Envelope).unwrap();
        assert!((f.exponent + 1.5).abs() < 0.02, "{w:?}: {}", f.exponent);
    }
}

#[test]
fn short_windows_are_rejected() {
    let (t, m) = series(-1.5, 1.0, 0.0, 60.0, 60);
    assert!(fit_power_law(&t, &m, (50.0, 60.0), FitMethod::RawRegression).is_err());
}
