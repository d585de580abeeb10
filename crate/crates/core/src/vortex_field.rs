//! Vector potential of Laguerre–Gaussian vortices, "perfect" vortices and
//! plain Gaussian beams in the ring plane.
//!
//! `A(ρ, φ, t) = Re{ε̂ A₀ f(ρ) Ω(t) e^{i(m φ − ω t − φ_ce)}}` with a sin²
//! envelope Ω on `[0, T_dur]`. Every radial profile is scaled to `max f = 1`
//! so that `A₀` always refers to the field at the spatial maximum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, C_LIGHT, EPS0, HBAR_SI, J_PER_MEV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamKind {
    LaguerreGauss,
    PerfectVortex,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarization {
    LinearX,
    LinearY,
    CircularPlus,
    CircularMinus,
}

impl Polarization {
    /// Complex unit vector (ε_x, ε_y).
    pub fn vector(self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::LinearX => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            Polarization::LinearY => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            Polarization::CircularPlus => [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
            Polarization::CircularMinus => [Complex64::new(s, 0.0), Complex64::new(0.0, -s)],
        }
    }
}

/// How `peak_intensity` is turned into a field amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensityConvention {
    /// Vacuum SI conversion `E₀ = √(2I/cε₀)`.
    #[default]
    Si,
    /// The quoted intensity is read in the host's effective atomic units:
    /// the SI field is rescaled by `m*²/ε_r³`.
    EffectiveAtomic,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub kind: BeamKind,
    #[serde(default)]
    pub m_oam: i32,
    /// Radial node index, Laguerre–Gauss only.
    #[serde(default)]
    pub p: u32,
    /// meV
    pub photon_energy: f64,
    /// Beam waist, or the annulus width of a perfect vortex, nm.
    pub waist: f64,
    /// Annulus radius of a perfect vortex, nm.
    #[serde(default)]
    pub spot_radius: f64,
    /// W/cm²
    pub peak_intensity: f64,
    pub n_cycles: f64,
    pub polarization: Polarization,
    /// Carrier-envelope phase, rad.
    #[serde(default, skip_serializing_if = "is_default")]
    pub carrier_envelope_phase: f64,
    #[serde(default)]
    pub intensity_convention: IntensityConvention,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_intensity > 0.0) || !self.peak_intensity.is_finite() {
            return Err(Error::validation("pulse.peak_intensity", "must be finite and > 0"));
        }
        if !(self.n_cycles > 0.0) {
            return Err(Error::validation("pulse.n_cycles", "must be > 0"));
        }
        if !(self.photon_energy > 0.0) {
            return Err(Error::validation("pulse.photon_energy", "must be > 0"));
        }
        if !(self.waist > 0.0) {
            return Err(Error::validation("pulse.waist", "must be > 0"));
        }
        if self.kind == BeamKind::PerfectVortex && !(self.spot_radius > 0.0) {
            return Err(Error::validation("pulse.spot_radius", "perfect vortex needs spot_radius > 0"));
        }
        if self.kind == BeamKind::Gaussian && self.m_oam != 0 {
            return Err(Error::validation("pulse.m_oam", "a Gaussian beam carries no orbital angular momentum"));
        }
        Ok(())
    }

    /// Effective topological charge (always 0 for a Gaussian beam).
    pub fn winding(&self) -> i32 {
        if self.kind == BeamKind::Gaussian {
            0
        } else {
            self.m_oam
        }
    }

    /// Carrier angular frequency, rad/ps.
    pub fn omega(&self) -> f64 {
        units::angular_frequency(self.photon_energy)
    }

    /// Pulse duration `n_cycles·2π/ω`, ps.
    pub fn duration(&self) -> f64 {
        self.n_cycles * std::f64::consts::TAU / self.omega()
    }

    /// sin² envelope, zero outside `[0, T_dur]`.
    pub fn envelope(&self, t: f64) -> f64 {
        let td = self.duration();
        if t <= 0.0 || t >= td {
            0.0
        } else {
            (std::f64::consts::PI * t / td).sin().powi(2)
        }
    }

    /// Unscaled radial profile.
    fn raw_profile(&self, rho: f64) -> f64 {
        let w = self.waist;
        match self.kind {
            BeamKind::Gaussian => (-(rho * rho) / (w * w)).exp(),
            BeamKind::PerfectVortex => (-(rho - self.spot_radius).powi(2) / (w * w)).exp(),
            BeamKind::LaguerreGauss => {
                let m = self.m_oam.unsigned_abs();
                let x = 2.0 * rho * rho / (w * w);
                (std::f64::consts::SQRT_2 * rho / w).powi(m as i32)
                    * laguerre(self.p, m, x)
                    * (-(rho * rho) / (w * w)).exp()
            }
        }
    }

    /// Location and value of `max |raw_profile|`.
    fn profile_peak(&self) -> (f64, f64) {
        match self.kind {
            BeamKind::Gaussian => (0.0, 1.0),
            BeamKind::PerfectVortex => (self.spot_radius, 1.0),
            BeamKind::LaguerreGauss => {
                let m = self.m_oam.unsigned_abs() as f64;
                let reach = self.waist * (3.0 + (2.0 * self.p as f64 + m).sqrt() * 1.5);
                let samples = 4000;
                let mut best = (0.0, 0.0);
                for k in 0..=samples {
                    let r = reach * k as f64 / samples as f64;
                    let v = self.raw_profile(r).abs();
                    if v > best.1 {
                        best = (r, v);
                    }
                }
                // golden-section polish around the coarse maximum
                let step = reach / samples as f64;
                let (mut a, mut b) = ((best.0 - step).max(0.0), best.0 + step);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let c = b - g * (b - a);
                    let d = a + g * (b - a);
                    if self.raw_profile(c).abs() > self.raw_profile(d).abs() {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                let r = 0.5 * (a + b);
                (r, self.raw_profile(r).abs().max(best.1))
            }
        }
    }

    /// Radius of the profile maximum, nm.
    pub fn peak_radius(&self) -> f64 {
        self.profile_peak().0
    }

    /// Builds a profile evaluator with the max-normalization constant cached.
    pub fn profile(&self) -> RadialShape {
        let (_, peak) = self.profile_peak();
        RadialShape { pulse: self.clone(), scale: if peak > 0.0 { 1.0 / peak } else { 0.0 } }
    }

    /// Field amplitude A₀ in V·s/m.
    pub fn amplitude(&self, material_mass: f64, dielectric: f64) -> f64 {
        let a0 = amplitude_from_intensity(self.peak_intensity, self.photon_energy);
        match self.intensity_convention {
            IntensityConvention::Si => a0,
            IntensityConvention::EffectiveAtomic => a0 * units::effective_field_ratio(material_mass, dielectric),
        }
    }
}

/// Max-normalized radial profile `f(ρ)`, `max |f| = 1`.
#[derive(Debug, Clone)]
pub struct RadialShape {
    pulse: PulseSpec,
    scale: f64,
}

impl RadialShape {
    pub fn value(&self, rho: f64) -> f64 {
        self.pulse.raw_profile(rho) * self.scale
    }

    /// Complex spatial factor `f(ρ)e^{imφ}` at a Cartesian point.
    pub fn complex_at(&self, x: f64, y: f64) -> Complex64 {
        let rho = x.hypot(y);
        let m = self.pulse.winding();
        let f = self.value(rho);
        if m == 0 {
            return Complex64::new(f, 0.0);
        }
        let phi = y.atan2(x);
        Complex64::from_polar(f, m as f64 * phi)
    }
}

/// Generalized Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: u32, alpha: u32, x: f64) -> f64 {
    let a = alpha as f64;
    let mut l0 = 1.0;
    if p == 0 {
        return l0;
    }
    let mut l1 = 1.0 + a - x;
    for k in 1..p {
        let k = k as f64;
        let l2 = ((2.0 * k + 1.0 + a - x) * l1 - (k + a) * l0) / (k + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// `A₀ = E₀/ω` with `E₀ = √(2I/(cε₀))`, `I` in W/cm², result in V·s/m.
pub fn amplitude_from_intensity(peak_intensity: f64, photon_energy: f64) -> f64 {
    let e0 = peak_field(peak_intensity);
    let omega = photon_energy * J_PER_MEV / HBAR_SI;
    e0 / omega
}

/// `E₀ = √(2I/(cε₀))` in V/m for `I` in W/cm².
pub fn peak_field(peak_intensity: f64) -> f64 {
    (2.0 * peak_intensity * 1e4 / (C_LIGHT * EPS0)).sqrt()
}

/// Vector potential at one point, SI (V·s/m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub ax: f64,
    pub ay: f64,
}

/// Evaluates `A(x, y, t)`. `amplitude` is A₀ (see [`PulseSpec::amplitude`]).
pub fn vector_potential(pulse: &PulseSpec, shape: &RadialShape, amplitude: f64, x: f64, y: f64, t: f64) -> FieldSample {
    let env = pulse.envelope(t);
    if env == 0.0 {
        return FieldSample { ax: 0.0, ay: 0.0 };
    }
    let carrier = Complex64::from_polar(1.0, -(pulse.omega() * t + pulse.carrier_envelope_phase));
    let spatial = shape.complex_at(x, y) * carrier * (amplitude * env);
    let [ex, ey] = pulse.polarization.vector();
    FieldSample { ax: (ex * spatial).re, ay: (ey * spatial).re }
}

/// Square integration window for [`photon_number_match`]: `[−extent, extent]²`
/// sampled at `points` cell centres per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchDomain {
    pub extent: f64,
    pub points: usize,
}

/// `∫∫|f|² dx dy` on the domain's cell centres.
fn spatial_weight(shape: &RadialShape, extent: f64, points: usize) -> f64 {
    let h = 2.0 * extent / points as f64;
    let mut sum = 0.0;
    for j in 0..points {
        let y = -extent + (j as f64 + 0.5) * h;
        for i in 0..points {
            let x = -extent + (i as f64 + 0.5) * h;
            sum += shape.value(x.hypot(y)).powi(2);
        }
    }
    sum * h * h
}

/// `∫|E(t)|²dt / A₀²` for the complex carrier-envelope, E = −∂A/∂t.
fn temporal_weight(pulse: &PulseSpec, samples: usize) -> f64 {
    let td = pulse.duration();
    let w = pulse.omega();
    let dt = td / samples as f64;
    let pi = std::f64::consts::PI;
    (0..samples)
        .map(|k| {
            let t = (k as f64 + 0.5) * dt;
            let env = (pi * t / td).sin().powi(2);
            let denv = pi / td * (2.0 * pi * t / td).sin();
            // |d/dt (Ω e^{−iωt})|² = Ω'² + ω²Ω²
            denv * denv + w * w * env * env
        })
        .sum::<f64>()
        * dt
}

/// Photon-number-weighted exposure `∫∫∫|E|²/(ħω)`, up to a constant shared
/// by all pulses.
fn exposure(pulse: &PulseSpec, domain: MatchDomain) -> Result<f64> {
    let a0 = amplitude_from_intensity(pulse.peak_intensity, pulse.photon_energy);
    let shape = pulse.profile();
    let fine = spatial_weight(&shape, domain.extent, domain.points);
    let coarse = spatial_weight(&shape, domain.extent, domain.points / 2);
    if !(fine > 0.0) || ((fine - coarse) / fine).abs() > 1e-3 {
        return Err(Error::Accuracy(format!(
            "photon-number integral unresolved: {fine:.6e} vs {coarse:.6e} at half resolution"
        )));
    }
    let t_fine = temporal_weight(pulse, 4096);
    let t_coarse = temporal_weight(pulse, 2048);
    if ((t_fine - t_coarse) / t_fine).abs() > 1e-6 {
        return Err(Error::Accuracy("temporal photon-number integral unresolved".into()));
    }
    Ok(a0 * a0 * fine * t_fine / pulse.photon_energy)
}

/// Returns `template` re-scaled in intensity so that its photon number over
/// `domain` equals that of `reference`. The template carries the target
/// beam's own shape parameters (kind, waist, winding). When the template has
/// the reference's kind and shape the reference is returned unchanged.
pub fn photon_number_match(reference: &PulseSpec, template: &PulseSpec, domain: MatchDomain) -> Result<PulseSpec> {
    reference.validate()?;
    template.validate()?;
    let same_shape = PulseSpec { peak_intensity: reference.peak_intensity, ..template.clone() };
    if same_shape == *reference {
        return Ok(reference.clone());
    }
    let target = exposure(reference, domain)?;
    let unit = exposure(&PulseSpec { peak_intensity: 1.0, ..template.clone() }, domain)?;
    Ok(PulseSpec { peak_intensity: target / unit, ..template.clone() })
}
