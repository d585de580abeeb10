use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn uniform(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n).map(|k| f(k as f64 * dt)).collect()
}

fn trace_xy(dt: f64, x: Vec<f64>, y: Vec<f64>) -> DipoleTrace {
    DipoleTrace {
        t0: 0.0,
        dt,
        channels: vec![DipoleChannel { label: "total".into(), ring_index: None, x, y }],
    }
}

#[test]
fn second_derivative_of_parabola_is_exact() {
    let f = uniform(40, 0.1, |t| t * t);
    let d = second_derivative_series(&f, 0.1).unwrap();
    for v in &d {
        assert_relative_eq!(*v, 2.0, epsilon = 1e-9);
    }
}

#[test]
fn second_derivative_of_cosine_meets_taylor_bound() {
    let (omega, dt) = (3.0, 0.05);
    let f = uniform(200, dt, |t| (omega * t).cos());
    let d = second_derivative_series(&f, dt).unwrap();
    let bound = (omega * dt).powi(2) / 12.0 * omega * omega;
    for k in 2..198 {
        let exact = -omega * omega * (omega * k as f64 * dt).cos();
        assert!((d[k] - exact).abs() <= bound, "k={k}");
    }
}

#[test]
fn derivative_contract_errors() {
    assert!(second_derivative_series(&[1.0, 2.0, 3.0, 4.0], 0.1).is_err());
    let ch = DipoleChannel { label: "total".into(), ring_index: None, x: vec![0.0; 3], y: vec![0.0; 3] };
    assert!(matches!(DipoleTrace::from_times(&[0.0, 0.1, 0.3], vec![ch]), Err(Error::Contract(_))));
}

#[test]
fn window_is_unit_normalized_in_square() {
    let w = DetectionWindow { width: 1.5 };
    let h = 1e-3;
    let s: f64 = (-10_000..=10_000).map(|k| w.value(k as f64 * h).powi(2)).sum::<f64>() * h;
    assert_relative_eq!(s, 1.0, epsilon = 1e-8);
}

#[test]
fn positive_part_reconstructs_signal() {
    let a = uniform(300, 0.02, |t| (5.0 * t).sin() + 0.3 * (11.0 * t + 0.4).cos() + 0.1);
    let ap = positive_frequency_part(&a);
    for (v, z) in a.iter().zip(&ap) {
        assert_relative_eq!(2.0 * z.re, *v, epsilon = 1e-12);
    }
}

/// Gaussian-window oracle for a unit cosine:
/// `|X(ω₀ + δ)| = ½(2/π)^{1/4}√(πΔT)e^{−δ²ΔT²/4}`.
#[test]
fn filtered_cosine_matches_gaussian_oracle() {
    let (omega0, dt) = (TAU * 0.6, 0.01);
    let n = 6000;
    let a = uniform(n, dt, |t| (omega0 * t).cos());
    let ap = positive_frequency_part(&a);
    let window = DetectionWindow { width: 1.5 };
    for delta in [0.0, 0.3, 0.8] {
        let oracle = 0.5 * (2.0 / PI).powf(0.25) * (PI * 1.5f64).sqrt() * (-(delta * 1.5f64).powi(2) / 4.0).exp();
        for t in [25.0, 30.0, 35.0] {
            let (x, edge) = filtered_field(&ap, 0.0, dt, &window, omega0 + delta, t);
            assert!(!edge);
            assert_relative_eq!(x.norm(), oracle, max_relative = 2e-3);
        }
    }
    let (_, edge) = filtered_field(&ap, 0.0, dt, &window, omega0, 1.0);
    assert!(edge);
}

#[test]
fn zero_signal_filters_to_zero() {
    let ap = positive_frequency_part(&[0.0; 256]);
    let (x, _) = filtered_field(&ap, 0.0, 0.01, &DetectionWindow { width: 0.3 }, 4.0, 1.2);
    assert_eq!(x.norm(), 0.0);
}

fn tone_stokes(x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64, f0: f64) -> [f64; 4] {
    let dt = 0.01;
    let tr = trace_xy(dt, uniform(4000, dt, x), uniform(4000, dt, y));
    let axes = Axes::uniform(20.0, 20.0, 0.1, f0 - 0.1, f0 + 0.1, 3).unwrap();
    let sg = &stokes(&tr, DetectionWindow { width: 1.5 }, &axes, Execution::Sequential)[0];
    let [s1, s2, s3] = sg.normalized(0, 1);
    [sg.s0[1], s1, s2, s3]
}

#[test]
fn x_linear_tone() {
    let w = TAU * 0.6;
    let [s0, s1, s2, s3] = tone_stokes(|t| (w * t).cos(), |_| 0.0, 0.6);
    assert!(s0 > 0.0);
    assert_relative_eq!(s1, 1.0, epsilon = 1e-9);
    assert!(s2.abs() < 1e-9 && s3.abs() < 1e-9);
}

#[test]
fn counterclockwise_tone_is_positive_circular() {
    let w = TAU * 0.6;
    let [_, s1, s2, s3] = tone_stokes(|t| (w * t).cos(), |t| (w * t).sin(), 0.6);
    assert_relative_eq!(s3, 1.0, epsilon = 1e-6);
    // residual leakage of the finite-trace analytic signal
    assert!(s1.abs() < 1e-5 && s2.abs() < 1e-5, "{s1} {s2}");
    let [_, _, _, flipped] = tone_stokes(|t| (w * t).cos(), |t| -(w * t).sin(), 0.6);
    assert_relative_eq!(flipped, -1.0, epsilon = 1e-6);
}

#[test]
fn diagonal_tone_has_s2() {
    let w = TAU * 1.1;
    let [_, s1, s2, s3] = tone_stokes(|t| (w * t).cos(), |t| (w * t).cos(), 1.1);
    assert_relative_eq!(s2, 1.0, epsilon = 1e-9);
    assert!(s1.abs() < 1e-9 && s3.abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn stokes_is_physical(
        ax in -1.0..1.0f64, ay in -1.0..1.0f64, phase in 0.0..TAU,
        f1 in 0.2..2.0f64, f2 in 0.2..2.0f64, noise in 0.0..0.5f64,
    ) {
        let dt = 0.02;
        let x = uniform(1500, dt, |t| ax * (TAU * f1 * t).cos() + noise * (TAU * f2 * t).sin());
        let y = uniform(1500, dt, |t| ay * (TAU * f1 * t + phase).cos() + noise * (7.0 * t).cos());
        let tr = trace_xy(dt, x, y);
        let axes = Axes::uniform(5.0, 25.0, 2.5, 0.0, 3.0, 16).unwrap();
        let sg = &stokes(&tr, DetectionWindow { width: 1.0 }, &axes, Execution::Sequential)[0];
        let floor = 1e-12 * sg.max_s0();
        prop_assert!(sg.s0.iter().all(|v| *v >= 0.0));
        prop_assert!(sg.degree_of_polarization(floor).iter().all(|p| *p <= 1.0 + 1e-9));
    }
}

#[test]
fn morlet_tone_response_and_ridge() {
    let (f0, dt) = (0.8, 0.005);
    let a = uniform(8000, dt, |t| (TAU * f0 * t).cos());
    let expected = PI.powf(-0.25) * 0.5 * TAU.sqrt();
    for t in [15.0, 20.0, 25.0] {
        let w = morlet_coefficient(&a, 0.0, dt, 6.0, TAU * f0, t);
        assert_relative_eq!(w.norm(), expected, max_relative = 1e-4);
    }
    let tr = trace_xy(dt, a, vec![0.0; 8000]);
    let axes = Axes::uniform(15.0, 25.0, 5.0, 0.2, 2.0, 91).unwrap();
    let sc = &wavelet_check(&tr, &axes, 6.0, Execution::Sequential)[0];
    for row in sc.power.chunks(91) {
        let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((axes.freqs[peak] - f0).abs() <= 0.02 + 1e-12);
    }
}

/// Two tones: the L1-normalized Morlet response at frequency ω is
/// `½π^{−1/4}√(2π)e^{−(ω₀(1 − ω_k/ω))²/2}` per tone.
#[test]
fn morlet_two_tones_follow_analytic_response() {
    let (f1, f2, dt) = (0.5, 1.5, 0.005);
    let a = uniform(12_000, dt, |t| (TAU * f1 * t).cos() + (TAU * f2 * t).cos());
    let response = |f: f64, fk: f64| 0.5 * PI.powf(-0.25) * TAU.sqrt() * (-(6.0 * (1.0 - fk / f)).powi(2) / 2.0).exp();
    for f in [0.5, 0.6, 1.2, 1.5, 1.7] {
        let w = morlet_coefficient(&a, 0.0, dt, 6.0, TAU * f, 30.0).norm();
        let (r1, r2) = (response(f, f1), response(f, f2));
        // the two contributions rotate at different rates; bound by their sum
        assert!(w <= r1 + r2 + 1e-4 && w >= (r1 - r2).abs() - 1e-4, "f={f}: {w} vs {r1} {r2}");
    }
    // the higher tone's ridge is wider in absolute frequency
    let half = |fk: f64| fk / (1.0 - (2f64.ln() / 36.0).sqrt() * 2f64.sqrt()) - fk;
    assert!(half(f2) > half(f1));
}

#[test]
fn correlation_of_identical_maps_is_one() {
    let a: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin()).collect();
    let mask = vec![true; 100];
    assert_relative_eq!(masked_correlation(&a, &a, &mask), 1.0, epsilon = 1e-12);
    let neg: Vec<f64> = a.iter().map(|v| -2.0 * v + 1.0).collect();
    assert_relative_eq!(masked_correlation(&a, &neg, &mask), -1.0, epsilon = 1e-12);
    assert!(masked_correlation(&a, &a, &[false; 100]).is_nan());
}

#[test]
fn quadrupole_summary() {
    let q = quadrupole_diagnostic(&[2.0, 2.0, 2.0]);
    assert_eq!((q.mean, q.oscillation), (2.0, 0.0));
    let q = quadrupole_diagnostic(&[1.0, 3.0, 2.0, 2.0]);
    assert_eq!((q.mean, q.oscillation), (2.0, 1.0));
}

#[test]
fn acceleration_spectrum_is_dipole_spectrum_reweighted_by_omega_fourth() {
    // |μ̈(ω)|² = ω⁴|μ(ω)|² for a tone, so S0 built from μ̈ is ω⁴ times S0 built from μ
    let (f0, dt) = (0.6, 0.005);
    let w = TAU * f0;
    let tr = trace_xy(dt, uniform(6000, dt, |t| (w * t).cos()), uniform(6000, dt, |t| 0.5 * (w * t).sin()));
    let accel = second_derivative(&tr).unwrap();
    let axes = Axes::uniform(15.0, 15.0, 0.1, f0 - 0.1, f0 + 0.1, 3).unwrap();
    let window = DetectionWindow { width: 1.5 };
    let raw = &stokes(&tr, window, &axes, Execution::Sequential)[0];
    let acc = &stokes(&accel, window, &axes, Execution::Sequential)[0];
    assert_relative_eq!(acc.s0[1] / raw.s0[1], w.powi(4), max_relative = 1e-3);
    assert_relative_eq!(acc.s3[1] / acc.s0[1], raw.s3[1] / raw.s0[1], epsilon = 1e-4);
}
