//! Physical constants and the internal unit system.
//!
//! Internally lengths are in nm, times in ps and energies in meV. Vector
//! potentials enter the propagator as the gauge wavevector `q = eA/ħ` in
//! nm⁻¹; SI values are kept only at the configuration boundary.

/// Reduced Planck constant, meV·ps.
pub const HBAR: f64 = 0.658_211_956_9;
/// Planck constant, meV·ps.
pub const PLANCK: f64 = HBAR * std::f64::consts::TAU;
/// ħ²/(2 mₑ), meV·nm².
pub const HBAR2_OVER_2ME: f64 = 38.099_821_2;
/// Boltzmann constant, meV/K.
pub const K_B: f64 = 0.086_173_332_62;

/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Joules per meV.
pub const J_PER_MEV: f64 = 1.602_176_634e-22;

/// Atomic unit of electric field, V/m.
pub const ATOMIC_FIELD: f64 = 5.142_206_747_63e11;

/// ħ²/(2m*) in meV·nm² for an effective mass given in units of mₑ.
pub fn kinetic_coefficient(effective_mass: f64) -> f64 {
    HBAR2_OVER_2ME / effective_mass
}

/// Converts an SI vector potential (V·s/m) into the gauge wavevector eA/ħ (nm⁻¹).
pub fn gauge_wavevector(a_si: f64) -> f64 {
    E_CHARGE / HBAR_SI * a_si * 1e-9
}

/// Photon angular frequency (rad/ps) for a photon energy in meV.
pub fn angular_frequency(photon_energy_mev: f64) -> f64 {
    photon_energy_mev / HBAR
}

/// Converts a frequency in THz (cycles per ps) to an energy in meV.
pub fn thz_to_mev(f_thz: f64) -> f64 {
    PLANCK * f_thz
}

/// Converts an energy in meV to a frequency in THz.
pub fn mev_to_thz(e_mev: f64) -> f64 {
    e_mev / PLANCK
}

/// Ratio between the effective-atomic field unit of a host material and the
/// vacuum atomic field unit: m*² / ε_r³.
pub fn effective_field_ratio(effective_mass: f64, dielectric_constant: f64) -> f64 {
    effective_mass * effective_mass / dielectric_constant.powi(3)
}
