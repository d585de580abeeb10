use super::*;
use crate::ring_model::{occupy, solve_stationary, EigenOptions, RadialGrid, RingSpec, RingStack};
use crate::vortex_field::{BeamKind, IntensityConvention, Polarization};
use approx::assert_relative_eq;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn pulse(kind: BeamKind, m_oam: i32, n_cycles: f64) -> PulseSpec {
    PulseSpec {
        kind,
        m_oam,
        p: 0,
        photon_energy: 2.5,
        waist: 40.0,
        spot_radius: 40.0,
        peak_intensity: 1e10,
        n_cycles,
        polarization: Polarization::LinearX,
        carrier_envelope_phase: 0.0,
        intensity_convention: IntensityConvention::EffectiveAtomic,
    }
}

/// Simpson quadrature of a complex integrand on `[a, b]`.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Complex64 {
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            f(a + k as f64 * h) * w
        })
        .sum::<Complex64>()
        * (h / 3.0)
}

#[test]
fn angular_integral_matches_quadrature() {
    for m_oam in 0..=10 {
        for m0 in -10..=10 {
            for m1 in -22..=22 {
                let exact = angular_integral(m0, m1, m_oam);
                let numeric = simpson(0.0, TAU, 256, |phi| {
                    Complex64::from_polar(phi.cos(), (m_oam + m0 - m1) as f64 * phi)
                });
                assert!((exact - numeric).norm() < 1e-9, "{m0} {m1} {m_oam}");
                assert!(exact == Complex64::new(PI, 0.0) || exact == Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn angular_integral_examples() {
    assert_eq!(angular_integral(0, 3, 2).re, PI);
    assert_eq!(angular_integral(0, 1, 2).re, PI);
    assert_eq!(angular_integral(0, 2, 2).re, 0.0);
}

proptest! {
    #[test]
    fn angular_integral_depends_on_differences(m0 in -30i32..30, m1 in -30i32..30, w in -12i32..12, k in -50i32..50) {
        prop_assert_eq!(angular_integral(m0, m1, w), angular_integral(m0 + k, m1 + k, w));
    }
}

#[test]
fn envelope_coefficients_match_quadrature() {
    let p = pulse(BeamKind::LaguerreGauss, 2, 2.0);
    for de in [0.3, 1.7, 2.5, 3.9] {
        let (am, ap) = pulse_fourier_coefficients(&p, de);
        let nu = de / HBAR;
        let td = p.duration();
        let qm = simpson(0.0, td, 4000, |t| Complex64::from_polar(p.envelope(t), (nu - p.omega()) * t));
        let qp = simpson(0.0, td, 4000, |t| Complex64::from_polar(p.envelope(t), (nu + p.omega()) * t));
        assert!((am - qm).norm() < 1e-9 * td, "{de}");
        assert!((ap - qp).norm() < 1e-9 * td, "{de}");
    }
}

#[test]
fn resonant_absorption_is_half_duration() {
    let p = pulse(BeamKind::LaguerreGauss, 2, 2.0);
    let (am, ap) = pulse_fourier_coefficients(&p, 2.5);
    assert_relative_eq!(am.norm(), p.duration() / 2.0, max_relative = 1e-12);
    assert!(ap.norm() < 0.05 * am.norm());
}

#[test]
fn long_pulse_detuned_coefficient_vanishes() {
    let short = pulse_fourier_coefficients(&pulse(BeamKind::LaguerreGauss, 2, 2.0), 3.0).0.norm();
    let long = pulse_fourier_coefficients(&pulse(BeamKind::LaguerreGauss, 2, 200.0), 3.0).0.norm();
    assert!(long < 1e-3 * short, "{long} vs {short}");
}

#[test]
fn short_pulse_bandwidth_dominated_by_absorption() {
    // 1.5 cycles at 2.5 meV: absorption dominates from 1 to 5 meV.
    let p = pulse(BeamKind::LaguerreGauss, 10, 1.5);
    for k in 4..=20 {
        let de = 0.25 * k as f64;
        let (am, ap) = pulse_fourier_coefficients(&p, de);
        assert!(am.norm() > 3.0 * ap.norm(), "{de}: {} vs {}", am.norm(), ap.norm());
    }
}

fn small_ring_orbitals(m_range: (i32, i32)) -> (Vec<Orbital>, Material) {
    let m = Material::default();
    let stack = RingStack::single(RingSpec::from_width(40.0, 20.0, &m).unwrap());
    let opts = EigenOptions { radial: RadialGrid { rho_max: 120.0, spacing: 0.02 }, drift_tolerance: 1e-2 };
    (occupy(solve_stationary(&stack, &m, m_range, 2, &opts).unwrap(), &m), m)
}

/// Direct 2D quadrature of `⟨b| −iκ(2u·∇ + ∇·u) |a⟩` with Cartesian finite
/// differences of the full wave functions and of the beam field.
fn brute_force_element(a: &Orbital, b: &Orbital, p: &PulseSpec, kappa: f64) -> Complex64 {
    let shape = p.profile();
    let [ex, ey] = p.polarization.vector();
    let psi = |o: &Orbital, x: f64, y: f64| {
        let rho = x.hypot(y);
        Complex64::from_polar(o.radial_profile.value_at(rho, o.m0.unsigned_abs()), o.m0 as f64 * y.atan2(x))
            / TAU.sqrt()
    };
    let h = 1e-3;
    let n_phi = 96;
    let integrand = |rho: f64| {
        (0..n_phi)
            .map(|j| {
                let phi = TAU * j as f64 / n_phi as f64;
                let (x, y) = (rho * phi.cos(), rho * phi.sin());
                let ux = |x: f64, y: f64| ex * shape.complex_at(x, y);
                let uy = |x: f64, y: f64| ey * shape.complex_at(x, y);
                let dpx = (psi(a, x + h, y) - psi(a, x - h, y)) / (2.0 * h);
                let dpy = (psi(a, x, y + h) - psi(a, x, y - h)) / (2.0 * h);
                let div = (ux(x + h, y) - ux(x - h, y)) / (2.0 * h) + (uy(x, y + h) - uy(x, y - h)) / (2.0 * h);
                let op = 2.0 * (ux(x, y) * dpx + uy(x, y) * dpy) + div * psi(a, x, y);
                psi(b, x, y).conj() * op
            })
            .sum::<Complex64>()
            * (TAU / n_phi as f64 * rho)
    };
    -Complex64::i() * kappa * simpson(1.0, 100.0, 1980, integrand)
}

#[test]
fn matrix_element_matches_direct_quadrature() {
    let (orbs, m) = small_ring_orbitals((-4, 4));
    let find = |n: u32, mm: i32| orbs.iter().find(|o| o.n0 == n && o.m0 == mm).unwrap();
    for (kind, w) in [(BeamKind::LaguerreGauss, 2), (BeamKind::PerfectVortex, 3), (BeamKind::Gaussian, 0)] {
        let p = pulse(kind, w, 2.0);
        let shape = p.profile();
        for (a, b) in [((0, 0), (1, w + 1)), ((0, 1), (1, w)), ((0, -2), (0, w - 1)), ((1, 0), (0, w - 1))] {
            let (oa, ob) = (find(a.0, a.1), find(b.0, b.1));
            let fast = coupling_matrix_element(oa, ob, &p, &shape, m.kinetic(), false);
            let slow = brute_force_element(oa, ob, &p, m.kinetic());
            assert!((fast - slow).norm() < 2e-3 * slow.norm() + 1e-5, "{kind:?} {a:?}->{b:?}: {fast} vs {slow}");
        }
    }
}

#[test]
fn coupling_is_hermitian_pair() {
    let (orbs, m) = small_ring_orbitals((-4, 4));
    let p = pulse(BeamKind::LaguerreGauss, 2, 2.0);
    let shape = p.profile();
    for a in &orbs {
        for b in &orbs {
            let up = coupling_matrix_element(a, b, &p, &shape, m.kinetic(), false);
            let down = coupling_matrix_element(b, a, &p, &shape, m.kinetic(), true);
            assert!((up - down.conj()).norm() < 1e-5 * (1.0 + up.norm()), "{:?} {:?}: {up} vs {down}", (a.n0, a.m0), (b.n0, b.m0));
        }
    }
}

#[test]
fn forbidden_transitions_have_no_amplitude() {
    let (orbs, m) = small_ring_orbitals((-4, 4));
    let p = pulse(BeamKind::LaguerreGauss, 2, 2.0);
    let shape = p.profile();
    for a in &orbs {
        for b in &orbs {
            let c = first_order_amplitude(a, b, &p, &shape, 1e-4, &m);
            let allowed = (b.m0 - a.m0).abs() == 1 || (b.m0 - a.m0).abs() == 3;
            if !allowed {
                assert_eq!(c.norm(), 0.0);
            }
        }
    }
}

#[test]
fn strongest_line_sits_on_the_calibrated_transition() {
    let m = Material::default();
    let ring = RingSpec::from_transition(150.0, 40.0, &m, (0, 0), (1, 3), 2.5).unwrap();
    let stack = RingStack::single(ring);
    let opts = EigenOptions { radial: RadialGrid { rho_max: 320.0, spacing: 0.1 }, drift_tolerance: 1e-2 };
    let orbs = occupy(solve_stationary(&stack, &m, (-12, 12), 4, &opts).unwrap(), &m);
    let p = PulseSpec { waist: 150.0, ..pulse(BeamKind::LaguerreGauss, 2, 2.0) };
    let lines = predict_lines(&orbs, &p, 1e-4, &m);
    // first-to-second subband lines cluster on the pulse centre
    let top = &lines[0];
    assert_eq!((top.from.0, top.to.0), (0, 1), "{:?}", &lines[..3]);
    assert!((top.delta_e - 2.5).abs() < 0.2, "{}", top.delta_e);
    let calibrated = lines.iter().find(|l| l.from == (0, 0) && l.to == (1, 3)).unwrap();
    assert_relative_eq!(calibrated.delta_e, 2.5, epsilon = 1e-3);
    assert!(calibrated.weight > 0.1 * top.weight);
    let csv = lines_csv(&lines);
    assert_eq!(csv.lines().count(), lines.len() + 1);
    assert!(csv.lines().nth(1).unwrap().starts_with(&format!("{},{},{},{},", top.from.0, top.from.1, top.to.0, top.to.1)));
}

#[test]
fn gaussian_lines_pair_symmetrically() {
    let (orbs, m) = small_ring_orbitals((-5, 5));
    let p = pulse(BeamKind::Gaussian, 0, 2.0);
    let lines = predict_lines(&orbs, &p, 1e-4, &m);
    assert!(!lines.is_empty());
    for l in &lines {
        assert_eq!((l.to.1 - l.from.1).abs(), 1);
        let mirror = lines.iter().find(|k| k.from == (l.from.0, -l.from.1) && k.to == (l.to.0, -l.to.1)).unwrap();
        assert_relative_eq!(mirror.weight, l.weight, max_relative = 1e-6);
        assert_relative_eq!(mirror.delta_e, l.delta_e, epsilon = 1e-9);
    }
    let transfer: f64 = lines.iter().map(|l| (l.to.1 - l.from.1) as f64 * l.weight).sum();
    assert!(transfer.abs() < 1e-9 * lines[0].weight);
}
