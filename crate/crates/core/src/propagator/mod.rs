//! Time evolution of the occupied orbitals on a 2D grid, relaxation-time
//! kinetics of their occupations, and the observables gathered on the way.

pub mod grid;
pub mod stepper;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::emission::{DipoleChannel, DipoleTrace};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::ring_model::{Material, Orbital};
pub use grid::{Grid, GridSpec};
pub use stepper::{absorber_mask, Drive, Propagator};

/// One propagated orbital with its private FFT work space.
#[derive(Clone)]
pub struct OrbitalField {
    pub psi: Vec<Complex64>,
    pub(crate) work: Vec<Complex64>,
    pub(crate) scratch: Vec<Complex64>,
}

impl OrbitalField {
    fn new(psi: Vec<Complex64>, grid: &Grid) -> Self {
        let n = psi.len();
        OrbitalField { psi, work: vec![Complex64::default(); n], scratch: vec![Complex64::default(); grid.scratch_len()] }
    }
}

/// Propagated orbitals plus the kinetic bookkeeping of their weights.
///
/// Each orbital `j` carries two weights: `coherent[j]` on the propagated
/// state and `relaxed[j]` on its stationary starting state. Relaxation moves
/// weight from the first to the second with time constant τ; initially all of
/// the Fermi–Dirac weight is coherent.
#[derive(Clone)]
pub struct EvolvingState {
    pub labels: Vec<(u32, i32)>,
    pub energies: Vec<f64>,
    pub(crate) fields: Vec<OrbitalField>,
    pub initial: Vec<Vec<Complex64>>,
    pub equilibrium: Vec<f64>,
    pub coherent: Vec<f64>,
    pub relaxed: Vec<f64>,
    pub(crate) t0: f64,
    pub(crate) steps: usize,
    pub(crate) time: f64,
}

impl EvolvingState {
    /// Simulation clock, ps.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn psi(&self, j: usize) -> &[Complex64] {
        &self.fields[j].psi
    }

    pub fn psi_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.fields[j].psi
    }

    /// Restores a state from raw parts (e.g. a checkpoint).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: &Grid,
        labels: Vec<(u32, i32)>,
        energies: Vec<f64>,
        psi: Vec<Vec<Complex64>>,
        initial: Vec<Vec<Complex64>>,
        equilibrium: Vec<f64>,
        coherent: Vec<f64>,
        time: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if [energies.len(), psi.len(), initial.len(), equilibrium.len(), coherent.len()].iter().any(|&l| l != n)
            || psi.iter().chain(&initial).any(|p| p.len() != grid.len())
        {
            return Err(Error::Contract("checkpoint arrays disagree in size".into()));
        }
        let relaxed = equilibrium.iter().zip(&coherent).map(|(f, w)| f - w).collect();
        Ok(EvolvingState {
            labels,
            energies,
            fields: psi.into_iter().map(|p| OrbitalField::new(p, grid)).collect(),
            initial,
            equilibrium,
            coherent,
            relaxed,
            t0: time,
            steps: 0,
            time,
        })
    }
}

/// `R(ρ)e^{imφ}/√(2π)` sampled at the grid cell centres.
pub fn embed(orbital: &Orbital, grid: &Grid) -> Vec<Complex64> {
    let m = orbital.m0;
    let profile = &orbital.radial_profile;
    let norm = 1.0 / std::f64::consts::TAU.sqrt();
    let mut out = Vec::with_capacity(grid.len());
    for &y in &grid.ys {
        for &x in &grid.xs {
            let rho = x.hypot(y);
            let r = profile.value_at(rho, m.unsigned_abs()) * norm;
            out.push(if m == 0 { Complex64::new(r, 0.0) } else { Complex64::from_polar(r, m as f64 * y.atan2(x)) });
        }
    }
    out
}

/// Embeds every orbital whose occupation exceeds `cutoff`.
pub fn initialize(orbitals: &[Orbital], grid: &Grid, clear_radius: f64, cutoff: f64, exec: Execution) -> Result<EvolvingState> {
    let kept: Vec<&Orbital> = orbitals.iter().filter(|o| o.occupation > cutoff).collect();
    if kept.is_empty() {
        return Err(Error::validation("kinetics.occupation_cutoff", "no orbital is occupied above the cutoff"));
    }
    for o in &kept {
        let outside = o.radial_profile.weight_between(clear_radius, f64::INFINITY);
        if outside > 1e-6 {
            return Err(Error::Geometry(format!(
                "orbital (n0={}, m0={}) has {outside:.2e} of its norm beyond {clear_radius:.1} nm; enlarge the grid",
                o.n0, o.m0
            )));
        }
    }
    let embedded: Vec<Result<Vec<Complex64>>> = par::map(exec, &kept, |o| {
        let mut psi = embed(o, grid);
        let raw = grid.norm_sqr(&psi);
        if (raw - 1.0).abs() > 1e-4 {
            return Err(Error::Geometry(format!(
                "orbital (n0={}, m0={}) embeds with norm {raw:.6}; the grid does not resolve it",
                o.n0, o.m0
            )));
        }
        let s = 1.0 / raw.sqrt();
        psi.iter_mut().for_each(|z| *z *= s);
        Ok(psi)
    });
    let initial: Vec<Vec<Complex64>> = embedded.into_iter().collect::<Result<_>>()?;
    let equilibrium: Vec<f64> = kept.iter().map(|o| o.occupation).collect();
    Ok(EvolvingState {
        labels: kept.iter().map(|o| (o.n0, o.m0)).collect(),
        energies: kept.iter().map(|o| o.energy).collect(),
        fields: initial.iter().map(|p| OrbitalField::new(p.clone(), grid)).collect(),
        initial,
        coherent: equilibrium.clone(),
        relaxed: vec![0.0; equilibrium.len()],
        equilibrium,
        t0: 0.0,
        steps: 0,
        time: 0.0,
    })
}

/// Exact solution of `∂f/∂t = −(f − target)/τ` over `dt`.
pub fn relax_toward(f: f64, target: f64, dt: f64, tau: f64) -> f64 {
    target + (f - target) * (-dt / tau).exp()
}

/// Relaxes the two weight sets toward equilibrium: propagated weights toward
/// 0, stationary weights toward the Fermi–Dirac value.
pub fn relax_occupations(state: &mut EvolvingState, material: &Material, dt: f64) {
    let tau = material.relaxation_time;
    for j in 0..state.len() {
        state.coherent[j] = relax_toward(state.coherent[j], 0.0, dt, tau);
        state.relaxed[j] = relax_toward(state.relaxed[j], state.equilibrium[j], dt, tau);
    }
}

/// `ρ̃ = Σ_j w_j|ψ_j|² + s_j|φ_j|²` on the grid (electrons per nm²).
pub fn ensemble_density(state: &EvolvingState) -> Vec<f64> {
    let n = state.fields.first().map_or(0, |f| f.psi.len());
    let mut rho = vec![0.0; n];
    for j in 0..state.len() {
        let (w, s) = (state.coherent[j], state.relaxed[j]);
        if w != 0.0 {
            rho.iter_mut().zip(&state.fields[j].psi).for_each(|(r, z)| *r += w * z.norm_sqr());
        }
        if s != 0.0 {
            rho.iter_mut().zip(&state.initial[j]).for_each(|(r, z)| *r += s * z.norm_sqr());
        }
    }
    rho
}

/// `⟨ψ|L_z|ψ⟩/ħ` via spectral derivatives.
pub fn angular_momentum(grid: &Grid, psi: &[Complex64]) -> f64 {
    let (dx, dy) = grid.gradient(psi);
    let mut acc = Complex64::default();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let lz = Complex64::new(0.0, -1.0) * (grid.xs[i] * dy[k] - grid.ys[j] * dx[k]);
            acc += psi[k].conj() * lz;
        }
    }
    acc.re * grid.cell_area()
}

/// Population driven into each target orbital, `Σ_a f_a |⟨b|ψ_a − ψ̄_a⟩|²`,
/// where `ψ̄_a` is the same orbital propagated without the drive and `f_a` its
/// equilibrium occupation. Both states must share labels and clock; the
/// self-projection `b = a` is skipped.
pub fn driven_populations(
    grid: &Grid,
    driven: &EvolvingState,
    free: &EvolvingState,
    targets: &[Orbital],
    exec: Execution,
) -> Result<Vec<f64>> {
    if driven.labels != free.labels || (driven.time - free.time).abs() > 1e-9 {
        return Err(Error::Contract("driven and free states differ in orbitals or time".into()));
    }
    let deltas: Vec<Vec<Complex64>> = (0..driven.len())
        .map(|a| driven.psi(a).iter().zip(free.psi(a)).map(|(x, y)| x - y).collect())
        .collect();
    Ok(par::map(exec, targets, |b| {
        let phi = embed(b, grid);
        let s = 1.0 / grid.norm_sqr(&phi).sqrt();
        deltas
            .iter()
            .enumerate()
            .filter(|(a, _)| driven.labels[*a] != (b.n0, b.m0))
            .map(|(a, d)| driven.equilibrium[a] * (grid.inner(&phi, d) * s).norm_sqr())
            .sum()
    }))
}

/// Angular Fourier coefficients `c_k = Σ f e^{−ikφ} h² / Σ h²` of a grid
/// field over each radial shell, for `k = 0..=k_max`.
pub fn angular_harmonics(grid: &Grid, field: &[f64], shells: &[Annulus], k_max: usize) -> Vec<Vec<Complex64>> {
    shells
        .iter()
        .map(|shell| {
            let mut c = vec![Complex64::default(); k_max + 1];
            let mut area = 0.0;
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let (x, y) = (grid.xs[i], grid.ys[j]);
                    let r = x.hypot(y);
                    if r < shell.inner || r >= shell.outer {
                        continue;
                    }
                    let phi = y.atan2(x);
                    let v = field[grid.index(i, j)];
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += Complex64::from_polar(v, -(k as f64) * phi);
                    }
                    area += 1.0;
                }
            }
            if area > 0.0 {
                c.iter_mut().for_each(|z| *z /= area);
            }
            c
        })
        .collect()
}

/// Radial integration domain, nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    /// Fraction of a grid cell inside the annulus, from 4×4 sub-samples.
    fn coverage(&self, x: f64, y: f64, hx: f64, hy: f64) -> f64 {
        const S: usize = 4;
        let mut inside = 0;
        for a in 0..S {
            for b in 0..S {
                let px = x + ((a as f64 + 0.5) / S as f64 - 0.5) * hx;
                let py = y + ((b as f64 + 0.5) / S as f64 - 0.5) * hy;
                let r = px.hypot(py);
                if r >= self.inner && r < self.outer {
                    inside += 1;
                }
            }
        }
        inside as f64 / (S * S) as f64
    }
}

/// Dipole, quadrupole and norm moments of the grid fields.
#[derive(Debug, Clone)]
pub struct Observer {
    labels: Vec<(String, Option<usize>)>,
    wx: Vec<Vec<f64>>,
    wy: Vec<Vec<f64>>,
    rho2: Vec<f64>,
    area: f64,
}

impl Observer {
    /// One channel per ring annulus plus a final `total` channel.
    pub fn new(grid: &Grid, rings: &[Annulus], total: Annulus) -> Result<Self> {
        let mut sorted: Vec<(usize, &Annulus)> = rings.iter().enumerate().collect();
        sorted.sort_by(|a, b| a.1.inner.total_cmp(&b.1.inner));
        for w in sorted.windows(2) {
            if w[0].1.outer > w[1].1.inner + 1e-12 {
                return Err(Error::Geometry(format!("dipole annuli of rings {} and {} overlap", w[0].0, w[1].0)));
            }
        }
        for (i, a) in rings.iter().chain(std::iter::once(&total)).enumerate() {
            if !(a.inner >= 0.0 && a.outer > a.inner) {
                return Err(Error::Geometry(format!("annulus {i} is empty or negative")));
            }
            if a.outer > grid.extent {
                return Err(Error::Geometry(format!("annulus {i} reaches {} nm, beyond the grid", a.outer)));
            }
        }
        let mut labels: Vec<(String, Option<usize>)> =
            (0..rings.len()).map(|i| (format!("ring{}", i + 1), Some(i))).collect();
        labels.push(("total".into(), None));
        let area = grid.cell_area();
        let (mut wx, mut wy) = (Vec::new(), Vec::new());
        for a in rings.iter().chain(std::iter::once(&total)) {
            let mut cx = Vec::with_capacity(grid.len());
            let mut cy = Vec::with_capacity(grid.len());
            for &y in &grid.ys {
                for &x in &grid.xs {
                    let c = a.coverage(x, y, grid.hx, grid.hy) * area;
                    cx.push(c * x);
                    cy.push(c * y);
                }
            }
            wx.push(cx);
            wy.push(cy);
        }
        let rho2 = grid.ys.iter().flat_map(|&y| grid.xs.iter().map(move |&x| (x * x + y * y) * area)).collect();
        Ok(Observer { labels, wx, wy, rho2, area })
    }

    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[(String, Option<usize>)] {
        &self.labels
    }

    /// `[μx, μy]` per channel, then `∫ρ²|ψ|²`, then `∫|ψ|²`.
    pub fn moments(&self, psi: &[Complex64]) -> Vec<f64> {
        let c = self.channels();
        let mut out = vec![0.0; 2 * c + 2];
        let mut rho2 = 0.0;
        let mut norm = 0.0;
        for (k, z) in psi.iter().enumerate() {
            let d = z.norm_sqr();
            if d == 0.0 {
                continue;
            }
            for ch in 0..c {
                out[2 * ch] += d * self.wx[ch][k];
                out[2 * ch + 1] += d * self.wy[ch][k];
            }
            rho2 += d * self.rho2[k];
            norm += d;
        }
        out[2 * c] = rho2;
        out[2 * c + 1] = norm * self.area;
        out
    }
}

/// When relaxation acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationMode {
    #[default]
    Continuous,
    AfterPulse,
    Off,
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub n_steps: usize,
    pub sample_every: usize,
    pub relaxation: RelaxationMode,
    /// Norm drift per orbital beyond which the run aborts; `None` when an
    /// absorber legitimately removes norm.
    pub norm_tolerance: Option<f64>,
    /// Requested density snapshot times, ps.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DensitySnapshot {
    pub time: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trace: DipoleTrace,
    /// `D_zz(t) = −∫ρ̃ρ²`, e·nm², on the trace's time grid.
    pub quadrupole: Vec<f64>,
    /// Largest |‖ψ_j‖² − 1| seen per orbital.
    pub norm_drift: Vec<f64>,
    pub snapshots: Vec<DensitySnapshot>,
}

fn sample(observer: &Observer, state: &EvolvingState, base: &[Vec<f64>], exec: Execution) -> (Vec<f64>, Vec<f64>) {
    let per_orbital = par::map(exec, &state.fields, |f| observer.moments(&f.psi));
    let width = 2 * observer.channels() + 1;
    let mut total = vec![0.0; width];
    let mut norms = Vec::with_capacity(state.len());
    for (j, m) in per_orbital.iter().enumerate() {
        for c in 0..width {
            total[c] += state.coherent[j] * m[c] + state.relaxed[j] * base[j][c];
        }
        norms.push(m[width]);
    }
    (total, norms)
}

/// Propagates `state` through `plan`, relaxing occupations and sampling the
/// observables every `sample_every` steps (including t = 0).
pub fn run(
    propagator: &Propagator,
    state: &mut EvolvingState,
    observer: &Observer,
    material: &Material,
    plan: &RunPlan,
) -> Result<RunRecord> {
    if plan.sample_every == 0 {
        return Err(Error::validation("analysis.sample_interval", "must span at least one step"));
    }
    let exec = propagator.execution();
    let dt = propagator.dt();
    let base: Vec<Vec<f64>> = par::map(exec, &state.initial, |p| observer.moments(p));
    let channels = observer.channels();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); channels];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); channels];
    let mut quadrupole = Vec::new();
    let mut norm_drift = vec![0.0_f64; state.len()];
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = plan.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let pulse_end = propagator.drive().map_or(0.0, |d| d.pulse.duration());
    let t_start = state.time;

    for step in 0..=plan.n_steps {
        let t = state.time;
        while pending.last().is_some_and(|&ts| ts <= t + 1e-12) {
            pending.pop();
            snapshots.push(DensitySnapshot { time: t, density: ensemble_density(state) });
        }
        if step % plan.sample_every == 0 {
            let (moments, norms) = sample(observer, state, &base, exec);
            if moments.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time_ps: t });
            }
            for c in 0..channels {
                xs[c].push(moments[2 * c]);
                ys[c].push(moments[2 * c + 1]);
            }
            quadrupole.push(-moments[2 * channels]);
            for (d, n) in norm_drift.iter_mut().zip(&norms) {
                *d = d.max((n - 1.0).abs());
            }
            if let Some(tol) = plan.norm_tolerance {
                if let Some((j, d)) = norm_drift.iter().enumerate().find(|(_, d)| **d > tol) {
                    return Err(Error::Stability {
                        time_ps: t,
                        message: format!(
                            "orbital {:?} norm drifted by {d:.3e} (> {tol:.1e}); reduce dt",
                            state.labels[j]
                        ),
                    });
                }
            }
        }
        if step == plan.n_steps {
            break;
        }
        propagator.step(state);
        let relax = match plan.relaxation {
            RelaxationMode::Continuous => true,
            RelaxationMode::AfterPulse => state.time > pulse_end,
            RelaxationMode::Off => false,
        };
        if relax {
            relax_occupations(state, material, dt);
        }
    }
    let channels = observer
        .labels()
        .iter()
        .zip(xs.into_iter().zip(ys))
        .map(|((label, ring), (x, y))| DipoleChannel { label: label.clone(), ring_index: *ring, x, y })
        .collect();
    Ok(RunRecord {
        trace: DipoleTrace { t0: t_start, dt: dt * plan.sample_every as f64, channels },
        quadrupole,
        norm_drift,
        snapshots,
    })
}

#[cfg(test)]
mod tests;
