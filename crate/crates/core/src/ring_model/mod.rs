//! Confinement landscape, stationary radial eigenstates and Fermi–Dirac
//! occupations.
//!
//! A single ring is the Tan–Inkson potential `a1/ρ² + a2ρ² − V₀`. Several
//! concentric rings are glued into one radial profile: each well keeps the
//! Tan–Inkson form of its own ring, the gaps between wells are flat barriers,
//! and every junction is a smooth erf step so that the landscape stays
//! resolvable on a Cartesian grid.

pub mod tridiag;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::units::{kinetic_coefficient, K_B};
use tridiag::SymTridiag;

fn default_dielectric() -> f64 {
    12.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// In units of the free electron mass.
    pub effective_mass: f64,
    /// meV
    pub fermi_energy: f64,
    /// K
    pub temperature: f64,
    /// ps
    pub relaxation_time: f64,
    /// Static relative permittivity; only used to scale drive intensities
    /// quoted in effective-atomic units.
    #[serde(default = "default_dielectric")]
    pub dielectric_constant: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            effective_mass: 0.067,
            fermi_energy: 3.3,
            temperature: 4.2,
            relaxation_time: 25.0,
            dielectric_constant: default_dielectric(),
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.effective_mass > 0.0) {
            return Err(Error::validation("material.effective_mass", "must be > 0"));
        }
        if !(self.relaxation_time > 0.0) {
            return Err(Error::validation("material.relaxation_time", "must be > 0"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::validation("material.temperature", "must be >= 0"));
        }
        if !self.fermi_energy.is_finite() {
            return Err(Error::validation("material.fermi_energy", "must be finite"));
        }
        if !(self.dielectric_constant > 0.0) {
            return Err(Error::validation("material.dielectric_constant", "must be > 0"));
        }
        Ok(())
    }

    /// ħ²/2m* in meV·nm².
    pub fn kinetic(&self) -> f64 {
        kinetic_coefficient(self.effective_mass)
    }

    /// k_B·T in meV.
    pub fn thermal_energy(&self) -> f64 {
        K_B * self.temperature
    }
}

/// One Tan–Inkson ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    /// meV·nm²
    pub a1: f64,
    /// meV/nm²
    pub a2: f64,
    /// Geometric well width used for the composite landscape and for the
    /// default dipole annulus, nm.
    pub effective_width: f64,
}

impl RingSpec {
    pub fn new(a1: f64, a2: f64, effective_width: f64) -> Result<Self> {
        let ring = RingSpec { a1, a2, effective_width };
        ring.validate()?;
        Ok(ring)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 >= 0.0) || !self.a1.is_finite() {
            return Err(Error::validation("ring.a1", "must be finite and >= 0"));
        }
        if !(self.a2 > 0.0) || !self.a2.is_finite() {
            return Err(Error::validation("ring.a2", "must be finite and > 0"));
        }
        if !(self.effective_width > 0.0) {
            return Err(Error::validation("ring.effective_width", "must be > 0"));
        }
        Ok(())
    }

    /// Width calibration: `a2 = E_F/Δρ²` (the oscillator width relation with
    /// ω₀ = √(8a2/m*)) and `a1 = a2ρ₀⁴`.
    pub fn from_width(radius: f64, width: f64, material: &Material) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::validation("ring.radius", "must be >= 0"));
        }
        if !(width > 0.0) {
            return Err(Error::validation("ring.width", "must be > 0"));
        }
        if !(material.fermi_energy > 0.0) {
            return Err(Error::validation(
                "material.fermi_energy",
                "width calibration needs a positive Fermi energy",
            ));
        }
        let a2 = material.fermi_energy / (width * width);
        RingSpec::new(a2 * radius.powi(4), a2, width)
    }

    /// Transition calibration: keeps ρ₀ fixed and tunes a2 until
    /// `E(to) − E(from)` equals `gap` (meV).
    pub fn from_transition(
        radius: f64,
        width: f64,
        material: &Material,
        from: (u32, i32),
        to: (u32, i32),
        gap: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) || !(width > 0.0) || !(gap > 0.0) {
            return Err(Error::validation(
                "ring.calibration",
                "transition calibration needs positive radius, width and gap",
            ));
        }
        let mismatch = |a2: f64| {
            let ring = RingSpec { a1: a2 * radius.powi(4), a2, effective_width: width };
            analytic_energy(&ring, to.0, to.1, material) - analytic_energy(&ring, from.0, from.1, material) - gap
        };
        let (mut lo, mut hi) = (1e-12_f64, 1e3_f64);
        let (flo, fhi) = (mismatch(lo), mismatch(hi));
        if flo.signum() == fhi.signum() {
            return Err(Error::validation(
                "ring.calibration",
                format!("transition {from:?} -> {to:?} cannot be tuned to {gap} meV at fixed radius {radius} nm"),
            ));
        }
        let rising = fhi > flo;
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if (mismatch(mid) > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-15 {
                break;
            }
        }
        let a2 = (lo * hi).sqrt();
        RingSpec::new(a2 * radius.powi(4), a2, width)
    }

    /// ρ₀ = (a1/a2)^{1/4}, nm.
    pub fn mean_radius(&self) -> f64 {
        (self.a1 / self.a2).powf(0.25)
    }

    /// V₀ = 2√(a1·a2), meV.
    pub fn offset(&self) -> f64 {
        2.0 * (self.a1 * self.a2).sqrt()
    }

    /// ħω₀ with ω₀ = √(8a2/m*), meV.
    pub fn oscillator_energy(&self, material: &Material) -> f64 {
        4.0 * (self.a2 * material.kinetic()).sqrt()
    }

    /// Bare Tan–Inkson potential; finite for ρ > 0.
    pub fn tan_inkson(&self, rho: f64) -> f64 {
        let centrifugal = if self.a1 == 0.0 { 0.0 } else { self.a1 / (rho * rho) };
        centrifugal + self.a2 * rho * rho - self.offset()
    }
}

/// Closed-form Tan–Inkson level (meV).
pub fn analytic_energy(ring: &RingSpec, n0: u32, m0: i32, material: &Material) -> f64 {
    let kappa = material.kinetic();
    let hw = ring.oscillator_energy(material);
    let m2 = (m0 as f64).powi(2);
    (n0 as f64 + 0.5 + 0.5 * (m2 + ring.a1 / kappa).sqrt()) * hw - ring.offset()
}

/// Default erf step length at well/barrier junctions, nm.
pub fn default_blend_width() -> f64 {
    4.0
}

/// Concentric rings, outermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingStack {
    pub rings: Vec<RingSpec>,
    /// nm
    pub barrier_width: f64,
    /// meV
    pub barrier_height: f64,
    /// Length scale `b` of the erf step `½(1 + erf(x/b))` at each
    /// well/barrier junction, nm.
    #[serde(default = "default_blend_width")]
    pub blend_width: f64,
}

impl RingStack {
    pub fn single(ring: RingSpec) -> Self {
        RingStack { rings: vec![ring], barrier_width: 0.0, barrier_height: 0.0, blend_width: default_blend_width() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::validation("stack.rings", "at least one ring is required"));
        }
        for ring in &self.rings {
            ring.validate()?;
        }
        if self.rings.len() > 1 {
            if !(self.barrier_width >= 0.0) {
                return Err(Error::validation("stack.barrier_width", "must be >= 0"));
            }
            if !self.barrier_height.is_finite() {
                return Err(Error::validation("stack.barrier_height", "must be finite"));
            }
            if !(self.blend_width >= 0.0) {
                return Err(Error::validation("stack.blend_width", "must be >= 0"));
            }
        }
        for (i, pair) in self.rings.windows(2).enumerate() {
            let (outer, inner) = (&pair[0], &pair[1]);
            let (ro, ri) = (outer.mean_radius(), inner.mean_radius());
            if !(ri < ro) {
                return Err(Error::Geometry(format!(
                    "ring radii must strictly decrease: ring {} at {ri:.3} nm is not inside ring {i} at {ro:.3} nm",
                    i + 1
                )));
            }
            let inner_edge = ri + inner.effective_width / 2.0 + self.barrier_width;
            let outer_edge = ro - outer.effective_width / 2.0;
            if inner_edge > outer_edge + 1e-9 {
                return Err(Error::Geometry(format!(
                    "wells {i} and {} overlap: {inner_edge:.3} nm > {outer_edge:.3} nm",
                    i + 1
                )));
            }
            if self.blend_width > 0.0 && self.barrier_width < self.blend_width {
                return Err(Error::Geometry(format!(
                    "barrier between rings {i} and {} is narrower than the blend width",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Well edges `(inner, outer)` of ring `i`, nm.
    pub fn well_edges(&self, i: usize) -> (f64, f64) {
        let r = &self.rings[i];
        let rho = r.mean_radius();
        ((rho - r.effective_width / 2.0).max(0.0), rho + r.effective_width / 2.0)
    }

    /// Region owned by ring `i`: its well extended to the middle of the
    /// neighbouring barriers, open-ended for the outermost and innermost ring.
    pub fn territory(&self, i: usize) -> (f64, f64) {
        let (inner, outer) = self.well_edges(i);
        let lo = if i + 1 == self.rings.len() { 0.0 } else { inner - self.barrier_width / 2.0 };
        let hi = if i == 0 { f64::INFINITY } else { outer + self.barrier_width / 2.0 };
        (lo, hi)
    }

    /// Largest radius that any ring's well reaches, nm.
    pub fn outer_edge(&self) -> f64 {
        self.well_edges(0).1
    }
}

/// Radial confinement potential of the stack (meV).
pub fn potential(stack: &RingStack, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("potential requires rho > 0, got {rho}")));
    }
    Ok(potential_unchecked(stack, rho))
}

/// Weight of the region between junctions `lo` and `hi` (either may be
/// open) under erf steps of scale `b`; the two algebraically equal forms are
/// chosen so that the small quantities are the ones subtracted.
fn region_weight(rho: f64, lo: Option<f64>, hi: Option<f64>, b: f64) -> f64 {
    let below = |j: f64| if b > 0.0 { 0.5 * libm::erfc((j - rho) / b) } else if rho >= j { 1.0 } else { 0.0 };
    let above = |j: f64| if b > 0.0 { 0.5 * libm::erfc((rho - j) / b) } else if rho < j { 1.0 } else { 0.0 };
    match (lo, hi) {
        (None, None) => 1.0,
        (None, Some(h)) => above(h),
        (Some(l), None) => below(l),
        (Some(l), Some(h)) => {
            if rho > h {
                above(h) - above(l)
            } else {
                below(l) - below(h)
            }
        }
    }
}

pub(crate) fn potential_unchecked(stack: &RingStack, rho: f64) -> f64 {
    let rings = &stack.rings;
    if rings.len() == 1 {
        return rings[0].tan_inkson(rho);
    }
    // Regions from the origin out: innermost well, barrier, next well, ...
    // Junctions sit at the well edges; each is an erf step of scale b.
    let b = stack.blend_width;
    let n = rings.len();
    let mut total = 0.0;
    for i in (0..n).rev() {
        let (inner, outer) = stack.well_edges(i);
        let lo = (i + 1 < n).then_some(inner);
        let hi = (i > 0).then_some(outer);
        let w = region_weight(rho, lo, hi, b);
        if w > 0.0 {
            total += w * rings[i].tan_inkson(rho);
        }
        if i > 0 {
            let next_inner = stack.well_edges(i - 1).0;
            let w = region_weight(rho, Some(outer), Some(next_inner), b);
            total += w * stack.barrier_height;
        }
    }
    total
}

/// Radial discretization: cell centres `ρ_k = (k + ½)h` on `[0, rho_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialGrid {
    /// nm
    pub rho_max: f64,
    /// nm
    pub spacing: f64,
}

impl RadialGrid {
    pub fn points(&self) -> usize {
        (self.rho_max / self.spacing).round() as usize
    }

    pub fn validate(&self, stack: &RingStack) -> Result<()> {
        if !(self.spacing > 0.0) || !(self.rho_max > 0.0) {
            return Err(Error::validation("eigen.radial", "spacing and rho_max must be > 0"));
        }
        if self.points() < 16 {
            return Err(Error::validation("eigen.radial", "fewer than 16 radial points"));
        }
        if self.rho_max < stack.outer_edge() * 1.1 {
            return Err(Error::Geometry(format!(
                "radial grid ends at {} nm, too close to the outer well edge {:.1} nm",
                self.rho_max,
                stack.outer_edge()
            )));
        }
        Ok(())
    }
}

/// Radial function `R(ρ)` sampled at cell centres, normalized so that
/// `∫R²ρ dρ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn rho(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.spacing
    }

    pub fn rho_max(&self) -> f64 {
        self.values.len() as f64 * self.spacing
    }

    /// `∫R²ρ dρ` by the midpoint rule.
    pub fn norm(&self) -> f64 {
        self.values.iter().enumerate().map(|(k, r)| r * r * self.rho(k)).sum::<f64>() * self.spacing
    }

    /// `∫ R_a R_b ρ dρ`.
    pub fn overlap(&self, other: &RadialProfile) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(k, (a, b))| a * b * self.rho(k))
            .sum::<f64>()
            * self.spacing
    }

    /// Fraction of the norm inside `[lo, hi]`.
    pub fn weight_between(&self, lo: f64, hi: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| (lo..=hi).contains(&self.rho(*k)))
            .map(|(k, r)| r * r * self.rho(k))
            .sum::<f64>()
            * self.spacing
    }

    /// Cubic Lagrange interpolation; zero beyond the grid. Near the origin the
    /// profile is extended by parity, `R(−ρ) = (−1)^|m| R(ρ)`.
    pub fn value_at(&self, rho: f64, m_abs: u32) -> f64 {
        let n = self.values.len();
        let x = rho / self.spacing - 0.5;
        if x >= n as f64 - 1.0 {
            return if x <= n as f64 { self.values[n - 1] * (n as f64 - x) } else { 0.0 };
        }
        let parity = if m_abs.is_multiple_of(2) { 1.0 } else { -1.0 };
        let fetch = |j: isize| -> f64 {
            if j < 0 {
                // cell -1 mirrors cell 0, -2 mirrors 1
                parity * self.values[(-j - 1) as usize]
            } else if (j as usize) < n {
                self.values[j as usize]
            } else {
                0.0
            }
        };
        let j = x.floor() as isize;
        let t = x - j as f64;
        let (p0, p1, p2, p3) = (fetch(j - 1), fetch(j), fetch(j + 1), fetch(j + 2));
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
    }
}

/// A labeled stationary state.
#[derive(Debug, Clone)]
pub struct Orbital {
    pub n0: u32,
    pub m0: i32,
    /// meV (Richardson-extrapolated over two radial resolutions)
    pub energy: f64,
    pub radial_profile: Arc<RadialProfile>,
    pub occupation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    pub radial: RadialGrid,
    /// Largest relative eigenvalue change tolerated between spacing h and 2h.
    pub drift_tolerance: f64,
}

/// Radial Hamiltonian for angular momentum `m` in the symmetrized variable
/// `u = √ρ·R`, finite-volume form with zero flux through the origin and a hard
/// wall at `rho_max`.
fn radial_matrix(stack: &RingStack, material: &Material, m: u32, n: usize, h: f64) -> SymTridiag {
    let kappa = material.kinetic();
    let m2 = (m as f64).powi(2);
    let rho = |k: usize| (k as f64 + 0.5) * h;
    let diag = (0..n)
        .map(|k| {
            let r = rho(k);
            let face_in = k as f64 * h;
            let face_out = (k as f64 + 1.0) * h;
            kappa * (face_in + face_out) / (h * h * r) + kappa * m2 / (r * r) + potential_unchecked(stack, r)
        })
        .collect();
    let off = (0..n - 1)
        .map(|k| -kappa * (k as f64 + 1.0) * h / (h * h * (rho(k) * rho(k + 1)).sqrt()))
        .collect();
    SymTridiag::new(diag, off)
}

fn solve_block(
    stack: &RingStack,
    material: &Material,
    m: u32,
    count: usize,
    opts: &EigenOptions,
) -> Result<Vec<(f64, RadialProfile)>> {
    let h = opts.radial.spacing;
    let n = opts.radial.points();
    let fine = radial_matrix(stack, material, m, n, h).lowest(count)?;
    let coarse = radial_matrix(stack, material, m, n / 2, 2.0 * h);
    let mut out = Vec::with_capacity(count);
    for (k, (e_fine, u)) in fine.into_iter().enumerate() {
        let e_coarse = coarse.eigenvalue(k);
        let scale = e_fine.abs().max(1e-3);
        let drift = (e_fine - e_coarse).abs() / scale;
        if drift > opts.drift_tolerance {
            return Err(Error::Accuracy(format!(
                "radial grid too coarse: level (n0={k}, |m0|={m}) drifts by {drift:.2e} between spacings {h} and {} nm",
                2.0 * h
            )));
        }
        // Second-order scheme: Richardson removes the leading h² term.
        let energy = (4.0 * e_fine - e_coarse) / 3.0;
        let values = u
            .iter()
            .enumerate()
            .map(|(j, uj)| uj / ((j as f64 + 0.5) * h).sqrt() / h.sqrt())
            .collect();
        out.push((energy, RadialProfile { spacing: h, values }));
    }
    Ok(out)
}

/// Solves the `n_per_m` lowest radial states for every `m0` in
/// `m_min..=m_max`; results are sorted by energy, then by `m0`.
pub fn solve_stationary(
    stack: &RingStack,
    material: &Material,
    m_range: (i32, i32),
    n_per_m: usize,
    opts: &EigenOptions,
) -> Result<Vec<Orbital>> {
    stack.validate()?;
    material.validate()?;
    opts.radial.validate(stack)?;
    if n_per_m == 0 {
        return Err(Error::validation("eigen.n_per_m", "must be >= 1"));
    }
    let (lo, hi) = m_range;
    if lo > hi {
        return Err(Error::validation("eigen.m_range", "empty range"));
    }
    let m_abs: Vec<u32> = {
        let mut v: Vec<u32> = (lo..=hi).map(|m| m.unsigned_abs()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let counts = vec![n_per_m; m_abs.len()];
    let blocks = solve_blocks(stack, material, &m_abs, &counts, opts)?;
    let mut orbitals = Vec::new();
    for m in lo..=hi {
        let idx = m_abs.binary_search(&m.unsigned_abs()).expect("block solved");
        for (n0, (energy, profile)) in blocks[idx].iter().enumerate() {
            orbitals.push(Orbital { n0: n0 as u32, m0: m, energy: *energy, radial_profile: profile.clone(), occupation: 0.0 });
        }
    }
    sort_orbitals(&mut orbitals);
    Ok(orbitals)
}

type Block = Vec<(f64, Arc<RadialProfile>)>;

fn solve_blocks(
    stack: &RingStack,
    material: &Material,
    m_abs: &[u32],
    counts: &[usize],
    opts: &EigenOptions,
) -> Result<Vec<Block>> {
    let jobs: Vec<(u32, usize)> = m_abs.iter().copied().zip(counts.iter().copied()).collect();
    par::map(Execution::Parallel, &jobs, |&(m, count)| -> Result<Block> {
        if count == 0 {
            return Ok(Vec::new());
        }
        Ok(solve_block(stack, material, m, count, opts)?
            .into_iter()
            .map(|(e, p)| (e, Arc::new(p)))
            .collect())
    })
    .into_iter()
    .collect()
}

fn sort_orbitals(orbitals: &mut [Orbital]) {
    orbitals.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.m0.unsigned_abs().cmp(&b.m0.unsigned_abs()))
            .then(a.m0.cmp(&b.m0))
            .then(a.n0.cmp(&b.n0))
    });
}

/// Energy above which Fermi–Dirac occupations drop below `cutoff`.
pub fn occupation_ceiling(material: &Material, cutoff: f64) -> f64 {
    material.fermi_energy + material.thermal_energy() * (1.0 / cutoff - 1.0).ln().max(0.0)
}

/// Every orbital whose equilibrium occupation exceeds `cutoff`, with
/// occupations assigned. The angular range is found by counting levels below
/// the occupation ceiling, so no explicit `m0` bound is needed.
pub fn solve_occupied(
    stack: &RingStack,
    material: &Material,
    cutoff: f64,
    opts: &EigenOptions,
) -> Result<Vec<Orbital>> {
    stack.validate()?;
    material.validate()?;
    opts.radial.validate(stack)?;
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::validation("kinetics.occupation_cutoff", "must lie in (0, 0.5)"));
    }
    let ceiling = occupation_ceiling(material, cutoff);
    let n = opts.radial.points();
    let mut m_abs = Vec::new();
    let mut counts = Vec::new();
    for m in 0u32.. {
        let count = radial_matrix(stack, material, m, n, opts.radial.spacing).count_below(ceiling);
        if count == 0 {
            break;
        }
        m_abs.push(m);
        counts.push(count);
        if m > 10_000 {
            return Err(Error::Solver("occupied angular momenta do not terminate".into()));
        }
    }
    let blocks = solve_blocks(stack, material, &m_abs, &counts, opts)?;
    let mut orbitals = Vec::new();
    for (m, block) in m_abs.iter().zip(&blocks) {
        for (n0, (energy, profile)) in block.iter().enumerate() {
            let signs: &[i32] = if *m == 0 { &[1] } else { &[1, -1] };
            for s in signs {
                orbitals.push(Orbital {
                    n0: n0 as u32,
                    m0: s * *m as i32,
                    energy: *energy,
                    radial_profile: profile.clone(),
                    occupation: 0.0,
                });
            }
        }
    }
    sort_orbitals(&mut orbitals);
    let orbitals = occupy(orbitals, material);
    Ok(orbitals.into_iter().filter(|o| o.occupation > cutoff).collect())
}

/// Fermi–Dirac occupation of a level at `energy` (meV).
pub fn fermi_dirac(energy: f64, material: &Material) -> f64 {
    let kt = material.thermal_energy();
    let x = energy - material.fermi_energy;
    if kt == 0.0 {
        return if x < 0.0 {
            1.0
        } else if x > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    1.0 / (1.0 + (x / kt).exp())
}

pub fn occupy(mut orbitals: Vec<Orbital>, material: &Material) -> Vec<Orbital> {
    for o in &mut orbitals {
        o.occupation = fermi_dirac(o.energy, material);
    }
    orbitals
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaas() -> Material {
        Material::default()
    }

    fn three_ring_stack() -> RingStack {
        let m = gaas();
        RingStack {
            rings: vec![
                RingSpec::from_transition(150.0, 40.0, &m, (1, 0), (2, 3), 2.5).unwrap(),
                RingSpec::from_width(100.0, 40.0, &m).unwrap(),
                RingSpec::from_width(50.0, 40.0, &m).unwrap(),
            ],
            barrier_width: 10.0,
            barrier_height: 30.0,
            blend_width: 2.0,
        }
    }

    fn opts(spacing: f64) -> EigenOptions {
        EigenOptions { radial: RadialGrid { rho_max: 260.0, spacing }, drift_tolerance: 1e-2 }
    }

    #[test]
    fn potential_vanishes_at_mean_radius() {
        let ring = RingSpec::from_width(150.0, 40.0, &gaas()).unwrap();
        let stack = RingStack::single(ring);
        assert!(potential(&stack, ring.mean_radius()).unwrap().abs() < 1e-9);
        assert!(potential(&stack, 0.0).is_err());
        assert!(potential(&stack, -1.0).is_err());
    }

    #[test]
    fn dot_limit() {
        let dot = RingSpec::new(0.0, 0.01, 20.0).unwrap();
        let stack = RingStack::single(dot);
        assert_relative_eq!(potential(&stack, 1e-6).unwrap(), 1e-14, epsilon = 1e-12);
        let m = gaas();
        let hw = dot.oscillator_energy(&m);
        assert_relative_eq!(analytic_energy(&dot, 0, 0, &m), 0.5 * hw, max_relative = 1e-14);
        assert_relative_eq!(analytic_energy(&dot, 3, 0, &m), 3.5 * hw, max_relative = 1e-14);
    }

    #[test]
    fn width_calibration_numbers() {
        let ring = RingSpec::from_width(150.0, 40.0, &gaas()).unwrap();
        assert_relative_eq!(ring.mean_radius(), 150.0, max_relative = 1e-12);
        // 4·sqrt(3.3/1600 · 38.0998212/0.067)
        assert_relative_eq!(ring.oscillator_energy(&gaas()), 4.331_926_08, max_relative = 1e-8);
    }

    #[test]
    fn transition_calibration_hits_gap() {
        let m = gaas();
        let ring = RingSpec::from_transition(150.0, 40.0, &m, (1, 0), (2, 3), 2.5).unwrap();
        let gap = analytic_energy(&ring, 2, 3, &m) - analytic_energy(&ring, 1, 0, &m);
        assert_relative_eq!(gap, 2.5, max_relative = 1e-10);
        assert_relative_eq!(ring.mean_radius(), 150.0, max_relative = 1e-10);
        // a pure rotor gap cannot be tuned by the oscillator frequency
        assert!(RingSpec::from_transition(150.0, 40.0, &m, (0, 0), (0, 3), 2.5).is_err());
    }

    #[test]
    fn stack_barrier_and_continuity() {
        let stack = three_ring_stack();
        stack.validate().unwrap();
        // hard steps reproduce the plateau exactly; erf steps sag slightly
        let hard = RingStack { blend_width: 0.0, ..stack.clone() };
        assert_eq!(potential(&hard, 125.0).unwrap(), 30.0);
        assert_eq!(potential(&hard, 75.0).unwrap(), 30.0);
        assert_eq!(potential(&hard, 130.5).unwrap(), stack.rings[0].tan_inkson(130.5));
        for mid in [125.0, 75.0] {
            let v = potential(&stack, mid).unwrap();
            assert!(v < 30.0 && v > 29.9, "{v}");
        }
        // an erf step is half way at the junction
        let at = potential(&stack, 130.0).unwrap();
        assert_relative_eq!(at, 0.5 * (30.0 + stack.rings[0].tan_inkson(130.0)), max_relative = 1e-3);
        // every junction is continuous
        for i in 0..3 {
            let (lo, hi) = stack.well_edges(i);
            for s in [lo - 1.0, lo, lo + 1.0, hi - 1.0, hi, hi + 1.0] {
                let jump = potential(&stack, s + 1e-9).unwrap() - potential(&stack, s - 1e-9).unwrap();
                assert!(jump.abs() < 1e-6, "jump {jump} at {s}");
            }
        }
        // fine sweep away from the centrifugal wall near the origin
        let mut prev = potential(&stack, 20.0).unwrap();
        let dr = 1e-4;
        let mut r = 20.0 + dr;
        while r < 240.0 {
            let v = potential(&stack, r).unwrap();
            assert!((v - prev).abs() < 5e-3, "jump {} at {r}", v - prev);
            prev = v;
            r += dr;
        }
        // inside each well the own Tan–Inkson form applies
        for (i, ring) in stack.rings.iter().enumerate() {
            let r0 = ring.mean_radius();
            assert!(potential(&stack, r0).unwrap().abs() < 1e-9, "ring {i}");
        }
    }

    #[test]
    fn stack_geometry_errors() {
        let m = gaas();
        let mut stack = three_ring_stack();
        stack.rings.swap(0, 1);
        assert!(matches!(stack.validate(), Err(Error::Geometry(_))));
        let mut stack = three_ring_stack();
        stack.rings[2] = RingSpec::from_width(65.0, 40.0, &m).unwrap();
        assert!(matches!(stack.validate(), Err(Error::Geometry(_))));
        stack.rings[2] = RingSpec::from_width(65.0, 10.0, &m).unwrap();
        stack.validate().unwrap();
    }

    #[test]
    fn numeric_levels_match_closed_form() {
        let m = gaas();
        let ring = RingSpec::from_width(150.0, 40.0, &m).unwrap();
        let stack = RingStack::single(ring);
        let orbitals = solve_stationary(&stack, &m, (-3, 3), 3, &opts(0.1)).unwrap();
        for o in &orbitals {
            let exact = analytic_energy(&ring, o.n0, o.m0, &m);
            assert_relative_eq!(o.energy, exact, max_relative = 1e-5);
            assert_relative_eq!(o.radial_profile.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn dot_ground_state() {
        let m = gaas();
        let dot = RingSpec::new(0.0, 0.005, 30.0).unwrap();
        let stack = RingStack::single(dot);
        let o = solve_stationary(&stack, &m, (0, 0), 1, &opts(0.1)).unwrap();
        assert_relative_eq!(o[0].energy, 0.5 * dot.oscillator_energy(&m), max_relative = 1e-5);
    }

    #[test]
    fn observed_order_at_least_two() {
        let m = gaas();
        let ring = RingSpec::from_width(150.0, 40.0, &m).unwrap();
        let stack = RingStack::single(ring);
        let exact = analytic_energy(&ring, 1, 2, &m);
        let err = |h: f64| {
            let n = (260.0 / h).round() as usize;
            (radial_matrix(&stack, &m, 2, n, h).eigenvalue(1) - exact).abs()
        };
        let (e1, e2) = (err(0.4), err(0.2));
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn orthonormal_within_block() {
        let m = gaas();
        let orbitals = solve_stationary(&three_ring_stack(), &m, (2, 2), 6, &opts(0.1)).unwrap();
        for a in &orbitals {
            for b in &orbitals {
                let expect = if a.n0 == b.n0 { 1.0 } else { 0.0 };
                let d = a.radial_profile.overlap(&b.radial_profile);
                assert!((d - expect).abs() < 1e-8, "<{}|{}> = {d}", a.n0, b.n0);
            }
        }
    }

    #[test]
    fn stack_levels_localize_on_rings() {
        let m = gaas();
        let stack = three_ring_stack();
        let orbitals = solve_stationary(&stack, &m, (0, 0), 3, &opts(0.1)).unwrap();
        let mut homes = Vec::new();
        for o in &orbitals {
            let weights: Vec<f64> = (0..3)
                .map(|i| {
                    let (lo, hi) = stack.territory(i);
                    o.radial_profile.weight_between(lo, hi)
                })
                .collect();
            let best = weights.iter().cloned().fold(0.0, f64::max);
            assert!(best > 0.9, "level {} spreads: {weights:?}", o.n0);
            homes.push(weights.iter().position(|w| *w == best).unwrap());
        }
        homes.sort_unstable();
        assert_eq!(homes, vec![0, 1, 2]);
    }

    #[test]
    fn fermi_dirac_values() {
        let m = gaas();
        assert_relative_eq!(fermi_dirac(3.3, &m), 0.5);
        let kt = K_B * 4.2;
        assert_relative_eq!(fermi_dirac(3.8, &m), 1.0 / (1.0 + (0.5 / kt).exp()), max_relative = 1e-14);
        // frozen: k_B·4.2 K = 0.361928 meV
        assert_relative_eq!(fermi_dirac(3.8, &m), 0.200_778, max_relative = 1e-4);
        let cold = Material { temperature: 0.0, ..m };
        assert_eq!(fermi_dirac(3.0, &cold), 1.0);
        assert_eq!(fermi_dirac(3.6, &cold), 0.0);
        assert_eq!(fermi_dirac(3.3, &cold), 0.5);
    }

    #[test]
    fn interpolation_reproduces_samples() {
        let p = RadialProfile { spacing: 0.5, values: (0..40).map(|k| ((k as f64) * 0.3).sin()).collect() };
        for k in 2..37 {
            assert_relative_eq!(p.value_at(p.rho(k), 0), p.values[k], epsilon = 1e-12);
        }
        assert_eq!(p.value_at(100.0, 0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_is_mirror_symmetric(r in 20.0..300.0f64, w in 5.0..80.0f64, n in 0u32..8, m in 0i32..15) {
            let mat = gaas();
            let ring = RingSpec::from_width(r, w, &mat).unwrap();
            prop_assert_eq!(analytic_energy(&ring, n, m, &mat), analytic_energy(&ring, n, -m, &mat));
        }

        #[test]
        fn single_ring_potential_nonnegative(r in 20.0..300.0f64, w in 5.0..80.0f64, x in 0.1..600.0f64) {
            let ring = RingSpec::from_width(r, w, &gaas()).unwrap();
            let v = potential(&RingStack::single(ring), x).unwrap();
            prop_assert!(v >= -1e-9 * ring.offset().max(1.0));
        }

        #[test]
        fn fermi_dirac_in_unit_interval(e in -50.0..50.0f64, t in 0.0..100.0f64) {
            let mat = Material { temperature: t, ..gaas() };
            let f = fermi_dirac(e, &mat);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
