//! First-order perturbation theory for the vortex coupling: angular selection
//! rules, envelope Fourier coefficients, radial matrix elements and the
//! resulting line list. Used to annotate spectra and as a weak-field check of
//! the propagator.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::ring_model::{fermi_dirac, Material, Orbital};
use crate::units::HBAR;
use crate::vortex_field::{PulseSpec, RadialShape};

/// `∫₀^{2π} e^{−im′φ} cosφ e^{i m_OAM φ} e^{imφ} dφ`, which is π when
/// `m′ = m + m_OAM ± 1` and zero otherwise.
pub fn angular_integral(m0: i32, m0_final: i32, m_oam: i32) -> Complex64 {
    let shift = m0_final - m0 - m_oam;
    if shift == 1 || shift == -1 {
        Complex64::new(PI, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// `∫₀^T e^{iνt} dt`.
fn window_integral(nu: f64, duration: f64) -> Complex64 {
    let x = nu * duration;
    if x.abs() < 1e-6 {
        // series keeps full precision near ν = 0
        return Complex64::new(duration, 0.0) * (1.0 + Complex64::i() * x / 2.0 - x * x / 6.0);
    }
    (Complex64::from_polar(1.0, x) - 1.0) / (Complex64::i() * nu)
}

/// `∫Ω(t)e^{iνt}dt` for the sin² envelope.
fn envelope_transform(nu: f64, duration: f64) -> Complex64 {
    let w = 2.0 * PI / duration;
    0.5 * window_integral(nu, duration) - 0.25 * (window_integral(nu + w, duration) + window_integral(nu - w, duration))
}

/// Absorption and emission coefficients `A∓ = ∫Ω(t)e^{i(ΔE/ħ ∓ ω)t}dt`
/// (ps) for a transition of energy `delta_e` (meV).
pub fn pulse_fourier_coefficients(pulse: &PulseSpec, delta_e: f64) -> (Complex64, Complex64) {
    let (nu, w, td) = (delta_e / HBAR, pulse.omega(), pulse.duration());
    (envelope_transform(nu - w, td), envelope_transform(nu + w, td))
}

/// Central-difference derivative of a sampled radial function (cell
/// centres, parity mirror at the origin for angular number `m_abs`).
fn radial_derivative(values: &[f64], h: f64, m_abs: u32) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let below = if k == 0 {
                if m_abs.is_multiple_of(2) {
                    values[0]
                } else {
                    -values[0]
                }
            } else {
                values[k - 1]
            };
            let above = if k + 1 < n { values[k + 1] } else { 0.0 };
            (above - below) / (2.0 * h)
        })
        .collect()
}

/// `⟨b| −iκ(2u·∇ + ∇·u) |a⟩` for `u = ε f(ρ)e^{iwφ}` (meV·nm), where `w` is
/// the profile winding and `conjugate` selects `u*` instead.
pub fn coupling_matrix_element(
    initial: &Orbital,
    target: &Orbital,
    pulse: &PulseSpec,
    shape: &RadialShape,
    kappa: f64,
    conjugate: bool,
) -> Complex64 {
    let [mut ex, mut ey] = pulse.polarization.vector();
    let mut w = pulse.winding();
    if conjugate {
        ex = ex.conj();
        ey = ey.conj();
        w = -w;
    }
    let s = target.m0 - initial.m0 - w;
    // e^{±iφ} components of ε·∇
    let c = match s {
        1 => 0.5 * (ex - Complex64::i() * ey),
        -1 => 0.5 * (ex + Complex64::i() * ey),
        _ => return Complex64::new(0.0, 0.0),
    };
    let (ra, rb) = (&initial.radial_profile, &target.radial_profile);
    let h = ra.spacing;
    let da = radial_derivative(&ra.values, h, initial.m0.unsigned_abs());
    let (sf, ma, wf) = (s as f64, initial.m0 as f64, w as f64);
    let fd = 1e-4 * h.max(1e-3);
    let mut acc = 0.0;
    for k in 0..ra.values.len().min(rb.values.len()) {
        let rho = ra.rho(k);
        let f = shape.value(rho);
        let df = (shape.value(rho + fd) - shape.value((rho - fd).max(0.0))) / (rho + fd - (rho - fd).max(0.0));
        let ia = ra.values[k];
        acc += rho * rb.values[k] * (2.0 * f * (da[k] - sf * ma * ia / rho) + ia * (df - sf * wf * f / rho));
    }
    -Complex64::i() * kappa * c * (acc * h)
}

/// First-order amplitude `c_{b←a}` at the end of the pulse for peak gauge
/// wavevector `q0` (nm⁻¹), including the counter-rotating term.
pub fn first_order_amplitude(
    initial: &Orbital,
    target: &Orbital,
    pulse: &PulseSpec,
    shape: &RadialShape,
    q0: f64,
    material: &Material,
) -> Complex64 {
    let kappa = material.kinetic();
    let (a_minus, a_plus) = pulse_fourier_coefficients(pulse, target.energy - initial.energy);
    let cep = pulse.carrier_envelope_phase;
    let absorb = coupling_matrix_element(initial, target, pulse, shape, kappa, false) * Complex64::from_polar(1.0, -cep) * a_minus;
    let emit = coupling_matrix_element(initial, target, pulse, shape, kappa, true) * Complex64::from_polar(1.0, cep) * a_plus;
    (absorb + emit) * q0 / (2.0 * HBAR) * -Complex64::i()
}

/// One dipole-allowed transition of the line list.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLine {
    pub from: (u32, i32),
    pub to: (u32, i32),
    /// meV
    pub delta_e: f64,
    pub frequency_thz: f64,
    pub angular: Complex64,
    pub a_minus: Complex64,
    pub a_plus: Complex64,
    /// First-order amplitude at the end of the pulse.
    pub amplitude: Complex64,
    /// `f_from (1 − f_to) |amplitude|²`
    pub weight: f64,
}

/// Every allowed line from a (partially) occupied to a (partially) empty
/// orbital, sorted by decreasing weight. Occupations are the Fermi–Dirac
/// values of `material`.
pub fn predict_lines(orbitals: &[Orbital], pulse: &PulseSpec, q0: f64, material: &Material) -> Vec<TransitionLine> {
    let shape = pulse.profile();
    let w = pulse.winding();
    let occ: Vec<f64> = orbitals.iter().map(|o| fermi_dirac(o.energy, material)).collect();
    let mut lines = Vec::new();
    for (a, from) in orbitals.iter().enumerate() {
        for (b, to) in orbitals.iter().enumerate() {
            if to.energy <= from.energy {
                continue;
            }
            let pauli = occ[a] * (1.0 - occ[b]);
            if pauli < 1e-12 {
                continue;
            }
            let forward = angular_integral(from.m0, to.m0, w);
            let backward = angular_integral(from.m0, to.m0, -w);
            if forward.norm() == 0.0 && backward.norm() == 0.0 {
                continue;
            }
            let delta_e = to.energy - from.energy;
            let (a_minus, a_plus) = pulse_fourier_coefficients(pulse, delta_e);
            let amplitude = first_order_amplitude(from, to, pulse, &shape, q0, material);
            lines.push(TransitionLine {
                from: (from.n0, from.m0),
                to: (to.n0, to.m0),
                delta_e,
                frequency_thz: crate::units::mev_to_thz(delta_e),
                angular: if forward.norm() > 0.0 { forward } else { backward },
                a_minus,
                a_plus,
                amplitude,
                weight: pauli * amplitude.norm_sqr(),
            });
        }
    }
    lines.sort_by(|x, y| {
        y.weight.total_cmp(&x.weight).then(x.from.cmp(&y.from)).then(x.to.cmp(&y.to))
    });
    lines
}

/// First-order population `Σ_a f_a |c_{b←a}|²` of every orbital `b`, with
/// `f_a` the orbitals' own occupations (no Pauli blocking, matching the
/// independent-orbital propagation).
pub fn first_order_populations(orbitals: &[Orbital], pulse: &PulseSpec, q0: f64, material: &Material) -> Vec<f64> {
    let shape = pulse.profile();
    orbitals
        .iter()
        .enumerate()
        .map(|(b, target)| {
            orbitals
                .iter()
                .enumerate()
                .filter(|(a, o)| *a != b && o.occupation > 0.0)
                .map(|(_, o)| o.occupation * first_order_amplitude(o, target, pulse, &shape, q0, material).norm_sqr())
                .sum()
        })
        .collect()
}

/// Line report as CSV: `from_n0,from_m0,to_n0,to_m0,delta_e_mev,thz,weight`.
pub fn lines_csv(lines: &[TransitionLine]) -> String {
    let mut out = String::from("from_n0,from_m0,to_n0,to_m0,delta_e_mev,thz,weight\n");
    for l in lines {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6e}\n",
            l.from.0, l.from.1, l.to.0, l.to.1, l.delta_e, l.frequency_thz, l.weight
        ));
    }
    out
}

#[cfg(test)]
mod tests;
