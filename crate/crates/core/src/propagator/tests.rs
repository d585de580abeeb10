use super::*;
use crate::ring_model::{solve_stationary, EigenOptions, RadialGrid, RingSpec, RingStack};
use crate::vortex_field::{BeamKind, IntensityConvention, Polarization, PulseSpec};
use approx::assert_relative_eq;

fn small_ring() -> (RingStack, Material) {
    let m = Material::default();
    (RingStack::single(RingSpec::from_width(40.0, 20.0, &m).unwrap()), m)
}

fn small_grid(n: usize) -> Grid {
    Grid::new(&GridSpec { nx: n, ny: n, extent: 100.0, dt: 5.0, n_steps: 0, absorber_width: None, absorber: false })
        .unwrap()
}

fn orbitals(stack: &RingStack, m: &Material, m_range: (i32, i32)) -> Vec<Orbital> {
    let opts = EigenOptions { radial: RadialGrid { rho_max: 100.0, spacing: 0.05 }, drift_tolerance: 1e-2 };
    let mut o = solve_stationary(stack, m, m_range, 1, &opts).unwrap();
    o.iter_mut().for_each(|o| o.occupation = 1.0);
    o
}

fn weak_pulse(m_oam: i32) -> PulseSpec {
    PulseSpec {
        kind: BeamKind::LaguerreGauss,
        m_oam,
        p: 0,
        photon_energy: 8.0,
        waist: 40.0,
        spot_radius: 0.0,
        peak_intensity: 1e10,
        n_cycles: 2.0,
        polarization: Polarization::LinearX,
        carrier_envelope_phase: 0.0,
        intensity_convention: IntensityConvention::EffectiveAtomic,
    }
}

#[test]
fn embedded_orbitals_are_normalized_and_homogeneous() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (-2, 2));
    let state = initialize(&orbs, &grid, 90.0, 1e-4, Execution::Sequential).unwrap();
    for j in 0..state.len() {
        assert_relative_eq!(grid.norm_sqr(state.psi(j)), 1.0, epsilon = 1e-12);
    }
    let rho = ensemble_density(&state);
    let c = angular_harmonics(&grid, &rho, &[Annulus { inner: 0.0, outer: 95.0 }], 8);
    for k in 1..=8 {
        assert!(c[0][k].norm() < 1e-8 * c[0][0].norm(), "k={k}: {}", c[0][k].norm());
    }
}

#[test]
fn orbital_beyond_grid_is_a_geometry_error() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (0, 0));
    assert!(matches!(initialize(&orbs, &grid, 45.0, 1e-4, Execution::Sequential), Err(Error::Geometry(_))));
}

#[test]
fn stationary_state_keeps_fidelity_and_phase() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (1, 1));
    let mut state = initialize(&orbs[..1], &grid, 90.0, 1e-4, Execution::Sequential).unwrap();
    let dt = 0.005;
    let prop = Propagator::new(&grid, &stack, &m, None, dt, None, Execution::Sequential).unwrap();
    let steps = 200;
    for _ in 0..steps {
        prop.step(&mut state);
    }
    let overlap = grid.inner(&state.initial[0], state.psi(0));
    assert!(overlap.norm() > 1.0 - 1e-6, "fidelity {}", overlap.norm());
    // phase e^{−iEt/ħ} recovers the radial eigenvalue
    let t = steps as f64 * dt;
    let slip = (overlap.arg() + orbs[0].energy * t / crate::units::HBAR + std::f64::consts::PI)
        .rem_euclid(std::f64::consts::TAU)
        - std::f64::consts::PI;
    let energy_error = slip * crate::units::HBAR / t;
    assert!(energy_error.abs() < 2e-3 * orbs[0].energy, "energy error {energy_error}");
}

#[test]
fn driven_steps_preserve_norm() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (-1, 1));
    let mut state = initialize(&orbs, &grid, 90.0, 1e-4, Execution::Sequential).unwrap();
    let pulse = PulseSpec { intensity_convention: IntensityConvention::Si, peak_intensity: 1e5, ..weak_pulse(2) };
    let q0 = crate::units::gauge_wavevector(pulse.amplitude(m.effective_mass, m.dielectric_constant));
    let prop = Propagator::new(&grid, &stack, &m, Some(Drive { pulse, q0 }), 0.005, None, Execution::Sequential).unwrap();
    for _ in 0..100 {
        let before: Vec<f64> = (0..state.len()).map(|j| grid.norm_sqr(state.psi(j))).collect();
        prop.step(&mut state);
        for (j, b) in before.iter().enumerate() {
            assert!((grid.norm_sqr(state.psi(j)) - b).abs() < 1e-8);
        }
    }
}

#[test]
fn unresolved_drive_is_rejected() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let pulse = PulseSpec { intensity_convention: IntensityConvention::Si, ..weak_pulse(2) };
    let q0 = crate::units::gauge_wavevector(pulse.amplitude(m.effective_mass, m.dielectric_constant));
    let r = Propagator::new(&grid, &stack, &m, Some(Drive { pulse, q0 }), 0.005, None, Execution::Sequential);
    assert!(matches!(r, Err(Error::Stability { .. })));
}

/// Free Gaussian packet in a spatially uniform field: the centre follows
/// `x_c(t) = x₀ + (2κ/ħ)∫(k₀ + q(t′))dt′`, integrated independently here.
#[test]
fn uniform_field_reproduces_volkov_drift() {
    let grid = Grid::new(&GridSpec { nx: 128, ny: 64, extent: 200.0, dt: 1.0, n_steps: 0, absorber_width: None, absorber: false })
        .unwrap();
    // light carrier keeps the packet from spreading across the box
    let kappa = 50.0;
    let pulse = PulseSpec {
        kind: BeamKind::Gaussian,
        m_oam: 0,
        waist: 1e9,
        photon_energy: 4.0,
        n_cycles: 1.5,
        intensity_convention: IntensityConvention::Si,
        peak_intensity: 1e3,
        ..weak_pulse(0)
    };
    let q0 = 0.02;
    let k0 = 0.01;
    let sigma = 15.0;
    let packet: Vec<Complex64> = grid
        .ys
        .iter()
        .flat_map(|&y| {
            grid.xs.iter().map(move |&x| Complex64::from_polar((-(x * x + y * y) / (4.0 * sigma * sigma)).exp(), k0 * x))
        })
        .collect();
    let centre = |psi: &[Complex64]| {
        let mut s = 0.0;
        let mut n = 0.0;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let d = psi[grid.index(i, j)].norm_sqr();
                s += d * grid.xs[i];
                n += d;
            }
        }
        s / n
    };
    let t_end = pulse.duration() + 0.5;
    // reference: Simpson quadrature of the velocity
    let m = 20_000;
    let h = t_end / m as f64;
    let q = |t: f64| q0 * pulse.envelope(t) * (pulse.omega() * t).cos();
    let integral: f64 = (0..=m)
        .map(|k| {
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * (k0 + q(k as f64 * h))
        })
        .sum::<f64>()
        * h
        / 3.0;
    let exact = 2.0 * kappa / crate::units::HBAR * integral;
    let mut errors = Vec::new();
    for steps in [100usize, 200] {
        let dt = t_end / steps as f64;
        let prop = Propagator::with_potential(
            &grid,
            vec![0.0; grid.len()],
            kappa,
            Some(Drive { pulse: pulse.clone(), q0 }),
            dt,
            None,
            Execution::Sequential,
        )
        .unwrap();
        let mut state = EvolvingState::from_parts(
            &grid,
            vec![(0, 0)],
            vec![0.0],
            vec![packet.clone()],
            vec![packet.clone()],
            vec![1.0],
            vec![1.0],
            0.0,
        )
        .unwrap();
        for _ in 0..steps {
            prop.step(&mut state);
        }
        errors.push((centre(state.psi(0)) - exact).abs());
    }
    assert!(errors[0] < 0.05 * exact.abs().max(1.0), "error {errors:?} vs drift {exact}");
    // second order in dt
    assert!(errors[1] < errors[0] / 3.0 || errors[1] < 1e-9, "errors {errors:?}");
}

#[test]
fn relaxation_is_exact_exponential() {
    assert_eq!(relax_toward(0.3, 0.3, 1.0, 25.0), 0.3);
    let tau = 25.0;
    let f = relax_toward(0.9, 0.1, tau * 2f64.ln(), tau);
    assert_relative_eq!(f - 0.1, 0.4, max_relative = 1e-12);
}

#[test]
fn relaxed_weights_sum_to_equilibrium() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let mut orbs = orbitals(&stack, &m, (-1, 1));
    orbs.iter_mut().enumerate().for_each(|(k, o)| o.occupation = 0.2 + 0.1 * k as f64);
    let mut state = initialize(&orbs, &grid, 90.0, 1e-4, Execution::Sequential).unwrap();
    for _ in 0..50 {
        relax_occupations(&mut state, &m, 0.7);
    }
    for j in 0..state.len() {
        assert_relative_eq!(state.coherent[j] + state.relaxed[j], state.equilibrium[j], epsilon = 1e-14);
        assert!((0.0..=1.0).contains(&state.coherent[j]));
    }
}

#[test]
fn zero_occupations_give_zero_density() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (0, 1));
    let mut state = initialize(&orbs, &grid, 90.0, 1e-4, Execution::Sequential).unwrap();
    state.coherent.iter_mut().for_each(|w| *w = 0.0);
    assert!(ensemble_density(&state).iter().all(|v| *v == 0.0));
}

#[test]
fn sequential_and_parallel_runs_agree_bitwise() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let orbs = orbitals(&stack, &m, (-2, 2));
    let pulse = weak_pulse(2);
    let q0 = crate::units::gauge_wavevector(pulse.amplitude(m.effective_mass, m.dielectric_constant));
    let observer = Observer::new(&grid, &[Annulus { inner: 20.0, outer: 60.0 }], Annulus { inner: 0.0, outer: 90.0 }).unwrap();
    let plan = RunPlan {
        n_steps: 120,
        sample_every: 4,
        relaxation: RelaxationMode::Continuous,
        norm_tolerance: Some(1e-6),
        snapshot_times: vec![0.3],
    };
    let mut records = Vec::new();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let prop = Propagator::new(&grid, &stack, &m, Some(Drive { pulse: pulse.clone(), q0 }), 0.005, None, exec).unwrap();
        let mut state = initialize(&orbs, &grid, 90.0, 1e-4, exec).unwrap();
        records.push(run(&prop, &mut state, &observer, &m, &plan).unwrap());
    }
    assert_eq!(records[0].trace, records[1].trace);
    assert_eq!(records[0].quadrupole, records[1].quadrupole);
    assert_eq!(records[0].snapshots.len(), 1);
    assert!(records[0].norm_drift.iter().all(|d| *d < 1e-10));
    let ring = &records[0].trace.channels[0];
    assert!(ring.x.iter().any(|v| v.abs() > 0.0));
}

#[test]
fn overlapping_annuli_are_rejected() {
    let grid = small_grid(64);
    let r = Observer::new(
        &grid,
        &[Annulus { inner: 10.0, outer: 50.0 }, Annulus { inner: 40.0, outer: 60.0 }],
        Annulus { inner: 0.0, outer: 90.0 },
    );
    assert!(matches!(r, Err(Error::Geometry(_))));
}

#[test]
fn weak_drive_populations_follow_first_order() {
    let (stack, m) = small_ring();
    let grid = small_grid(64);
    let mut targets = orbitals(&stack, &m, (-4, 4));
    targets.iter_mut().for_each(|o| o.occupation = if o.m0.abs() <= 1 { 1.0 } else { 0.0 });
    let pulse = PulseSpec { peak_intensity: 1e6, ..weak_pulse(2) };
    let q0 = crate::units::gauge_wavevector(pulse.amplitude(m.effective_mass, m.dielectric_constant));
    let dt = 0.005;
    let steps = (pulse.duration() / dt).ceil() as usize;
    let exec = Execution::Sequential;
    let mut driven = initialize(&targets, &grid, 90.0, 1e-4, exec).unwrap();
    let mut free = driven.clone();
    let on = Propagator::new(&grid, &stack, &m, Some(Drive { pulse: pulse.clone(), q0 }), dt, None, exec).unwrap();
    let off = Propagator::new(&grid, &stack, &m, None, dt, None, exec).unwrap();
    for _ in 0..steps {
        on.step(&mut driven);
        off.step(&mut free);
    }
    let tdse = driven_populations(&grid, &driven, &free, &targets, exec).unwrap();
    let oracle = crate::selection_oracle::first_order_populations(&targets, &pulse, q0, &m);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| oracle[b].total_cmp(&oracle[a]));
    for &b in &order[..3] {
        let rel = (tdse[b] - oracle[b]).abs() / oracle[b];
        assert!(rel < 1e-2, "{:?}: {rel}", (targets[b].n0, targets[b].m0));
    }
    assert!(driven_populations(&grid, &driven, &initialize(&targets[..1], &grid, 90.0, 1e-4, exec).unwrap(), &targets, exec).is_err());
}
