//! Scenario documents: parsing, command-line overrides, provenance hashes and
//! the bundled figure scenarios.
//!
//! A scenario is a TOML document. Unknown keys are rejected everywhere, and
//! every optional section falls back to defaults that are echoed back in the
//! resolved copy written next to the run artifacts. An optional `[ci]` table
//! holds dotted-key overrides that turn the full-resolution setup into the
//! desk-scale one used by the acceptance suite.

pub mod artifacts;
pub mod pipeline;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::propagator::{Annulus, GridSpec, RelaxationMode};
use crate::ring_model::{EigenOptions, Material, RadialGrid, RingSpec, RingStack};
use crate::vortex_field::{BeamKind, Polarization, PulseSpec};

pub use artifacts::{ArrayHeader, ArtifactRecord, AxisInfo, RunManifest};
pub use pipeline::{run_pipeline, run_scan, RunOutput, ScanOutput, Stage};

/// How a ring's Tan–Inkson coefficients are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Calibration {
    /// `a2 = E_F/Δρ²`.
    #[default]
    Width,
    /// Tune `a2` at fixed radius until `E(to) − E(from) = gap` (meV). Labels
    /// are `(n0, m0)` with `n0` counted from 0.
    Transition { from: (u32, i32), to: (u32, i32), gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    /// nm
    pub radius: f64,
    /// nm
    pub width: f64,
    #[serde(default)]
    pub calibration: Calibration,
}

impl RingConfig {
    pub fn build(&self, material: &Material) -> Result<RingSpec> {
        match self.calibration {
            Calibration::Width => RingSpec::from_width(self.radius, self.width, material),
            Calibration::Transition { from, to, gap } => {
                RingSpec::from_transition(self.radius, self.width, material, from, to, gap)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub rings: Vec<RingConfig>,
    #[serde(default)]
    pub barrier_width: f64,
    #[serde(default)]
    pub barrier_height: f64,
    #[serde(default = "crate::ring_model::default_blend_width")]
    pub blend_width: f64,
}

impl StackConfig {
    pub fn build(&self, material: &Material) -> Result<RingStack> {
        let rings = self
            .rings
            .iter()
            .enumerate()
            .map(|(i, r)| r.build(material).map_err(|e| e.context(format!("stack.rings[{i}]"))))
            .collect::<Result<Vec<_>>>()?;
        let stack = RingStack {
            rings,
            barrier_width: self.barrier_width,
            barrier_height: self.barrier_height,
            blend_width: self.blend_width,
        };
        stack.validate()?;
        Ok(stack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Radial cell size, nm.
    pub spacing: f64,
    /// Radial box; defaults to the grid half-width.
    pub rho_max: Option<f64>,
    pub drift_tolerance: f64,
    /// Orbitals with a smaller equilibrium occupation are not propagated.
    pub occupation_cutoff: f64,
    /// Radial levels per angular momentum offered to the line oracle.
    pub oracle_levels: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { spacing: 0.1, rho_max: None, drift_tolerance: 1e-2, occupation_cutoff: 1e-4, oracle_levels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticsConfig {
    pub relaxation: RelaxationMode,
    /// Abort when any orbital norm drifts further; only meaningful without
    /// an absorber.
    pub norm_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Detector time resolution ΔT, ps.
    pub window: f64,
    /// THz
    pub f_min: f64,
    pub f_max: f64,
    pub n_freq: usize,
    /// Spectrogram time step, ps.
    pub time_step: f64,
    /// Dipole sampling interval, ps; a multiple of the propagation step.
    pub sample_interval: f64,
    /// Dipole annulus per ring; defaults to the well edges.
    pub annuli: Option<Vec<Annulus>>,
    /// Whole-stack annulus; defaults to the hull of the ring annuli.
    pub total: Option<Annulus>,
    /// Density snapshot times, ps.
    pub snapshot_times: Vec<f64>,
    /// Highest angular harmonic reported for density snapshots.
    pub harmonics: usize,
    /// Morlet centre frequency ω₀ (dimensionless).
    pub wavelet_cycles: f64,
    /// Relative S0 floor for polarization diagnostics.
    pub stokes_floor: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window: 1.5,
            f_min: 0.0,
            f_max: 5.0,
            n_freq: 512,
            time_step: 0.1,
            sample_interval: 0.02,
            annuli: None,
            total: None,
            snapshot_times: Vec::new(),
            harmonics: 8,
            wavelet_cycles: 6.0,
            stokes_floor: 1e-12,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Overrides the output root chosen on the command line.
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default = "yes")]
    pub orbitals: bool,
    #[serde(default = "yes")]
    pub densities: bool,
    #[serde(default = "yes")]
    pub wavelet: bool,
    /// Final orbital fields, weights and clock.
    #[serde(default)]
    pub checkpoint: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig { directory: None, orbitals: true, densities: true, wavelet: true, checkpoint: false }
    }
}

fn default_match_points() -> usize {
    512
}

/// A second run with a different beam carrying the same photon number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub kind: BeamKind,
    pub waist: f64,
    #[serde(default)]
    pub m_oam: i32,
    #[serde(default)]
    pub spot_radius: f64,
    #[serde(default)]
    pub polarization: Option<Polarization>,
    /// Points per axis of the photon-number quadrature.
    #[serde(default = "default_match_points")]
    pub match_points: usize,
}

impl ComparisonConfig {
    pub fn template(&self, reference: &PulseSpec) -> PulseSpec {
        PulseSpec {
            kind: self.kind,
            m_oam: self.m_oam,
            waist: self.waist,
            spot_radius: self.spot_radius,
            polarization: self.polarization.unwrap_or(reference.polarization),
            ..reference.clone()
        }
    }
}

fn total_label() -> String {
    "total".into()
}

/// Grid of runs over winding number and intensity, each reduced to the S0
/// value at one time–frequency probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub m_oam: Vec<i32>,
    /// W/cm²
    pub peak_intensity: Vec<f64>,
    /// THz
    pub probe_frequency: f64,
    /// ps
    pub probe_time: f64,
    #[serde(default = "total_label")]
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub material: Material,
    pub stack: StackConfig,
    pub pulse: PulseSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub kinetics: KineticsConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    /// Dotted-key overrides applied by `--ci-scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<toml::Table>,
}

const REQUIRED: [&str; 5] = ["name", "material", "stack", "pulse", "grid"];

/// Parses and validates a scenario document as written.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    load(text, false, &[])
}

/// Parses a scenario, optionally applies its `[ci]` overrides, then the
/// `key=value` overrides in order, and validates the result.
pub fn load(text: &str, ci_scale: bool, overrides: &[String]) -> Result<Scenario> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::validation("scenario", e.message().to_string()))?;
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !doc.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::validation("scenario", format!("missing required fields: {}", missing.join(", "))));
    }
    if ci_scale {
        let patches = match doc.get("ci") {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(Error::validation("ci", "must be a table of dotted-key overrides")),
            None => return Err(Error::validation("ci", "scenario has no CI-scale variant")),
        };
        for (key, value) in patches {
            set_path(&mut doc, &key, value).map_err(|e| e.context("applying [ci]"))?;
        }
    }
    for o in overrides {
        let (key, value) = parse_override(o)?;
        set_path(&mut doc, &key, value)?;
    }
    let scenario: Scenario = doc.try_into().map_err(|e: toml::de::Error| Error::validation("scenario", e.message().to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Reads a scenario from a bundled name or a file path.
pub fn resolve(name_or_path: &str, ci_scale: bool, overrides: &[String]) -> Result<Scenario> {
    let text = match bundled(name_or_path) {
        Some(text) => text.to_string(),
        None => {
            let path = Path::new(name_or_path);
            if !path.exists() {
                return Err(Error::validation(
                    "scenario",
                    format!("`{name_or_path}` is neither a bundled scenario nor a readable file"),
                ));
            }
            std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
        }
    };
    load(&text, ci_scale, overrides)
}

/// Splits `a.b.c=value`; the value is read as a TOML literal, falling back
/// to a bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::validation("--override", format!("`{text}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::validation("--override", "empty key"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Writes `value` at a dotted path, creating tables on the way. Numeric
/// segments index arrays.
fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let bad = |msg: &str| Error::validation(key.to_string(), msg.to_string());
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty path segment"));
    }
    let mut node = doc.entry(parts[0].to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for part in &parts[1..] {
        node = match node {
            toml::Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| bad("array segment must be an index"))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| bad(&format!("index {i} out of range (length {len})")))?
            }
            _ => return Err(bad("path runs through a scalar")),
        };
    }
    *node = value;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        self.material.validate()?;
        self.pulse.validate()?;
        self.grid.validate()?;
        let stack = self.stack.build(&self.material)?;
        self.eigen_options().radial.validate(&stack)?;
        if !(self.eigen.occupation_cutoff > 0.0 && self.eigen.occupation_cutoff < 0.5) {
            return Err(Error::validation("eigen.occupation_cutoff", "must lie in (0, 0.5)"));
        }
        if self.eigen.oracle_levels == 0 {
            return Err(Error::validation("eigen.oracle_levels", "must be >= 1"));
        }
        if stack.outer_edge() >= self.grid.clear_radius() {
            return Err(Error::Geometry(format!(
                "outer well edge {:.1} nm lies beyond the absorber-free radius {:.1} nm",
                stack.outer_edge(),
                self.grid.clear_radius()
            )));
        }
        if self.grid.absorber && self.kinetics.norm_tolerance.is_some() {
            return Err(Error::validation(
                "kinetics.norm_tolerance",
                "a norm tolerance contradicts an active absorber; disable one of them",
            ));
        }
        let a = &self.analysis;
        if !(a.window > 0.0) {
            return Err(Error::validation("analysis.window", "must be > 0"));
        }
        if !(a.time_step > 0.0) {
            return Err(Error::validation("analysis.time_step", "must be > 0"));
        }
        if a.n_freq < 2 || !(a.f_max > a.f_min) || a.f_min < 0.0 {
            return Err(Error::validation("analysis.f_min/f_max/n_freq", "need >= 2 bins over a non-negative range"));
        }
        self.sample_every()?;
        if self.duration() < 5.0 * a.sample_interval {
            return Err(Error::validation("grid.n_steps", "propagation covers fewer than five dipole samples"));
        }
        let annuli = self.annuli()?;
        if annuli.len() != stack.rings.len() {
            return Err(Error::validation("analysis.annuli", "need exactly one annulus per ring"));
        }
        for s in &a.snapshot_times {
            if !(*s >= 0.0 && *s <= self.duration() + 1e-9) {
                return Err(Error::validation("analysis.snapshot_times", format!("{s} ps is outside the run")));
            }
        }
        if let Some(c) = &self.comparison {
            c.template(&self.pulse).validate().map_err(|e| e.context("comparison"))?;
        }
        if let Some(s) = &self.scan {
            if s.m_oam.is_empty() || s.peak_intensity.is_empty() {
                return Err(Error::validation("scan", "m_oam and peak_intensity must be non-empty"));
            }
            if s.peak_intensity.iter().any(|i| !(*i > 0.0)) {
                return Err(Error::validation("scan.peak_intensity", "must be > 0"));
            }
            if !(s.probe_frequency >= a.f_min && s.probe_frequency <= a.f_max) {
                return Err(Error::validation("scan.probe_frequency", "outside the analysis band"));
            }
            if !(s.probe_time >= 0.0 && s.probe_time <= self.duration()) {
                return Err(Error::validation("scan.probe_time", "outside the run"));
            }
            let labels: Vec<String> = (1..=stack.rings.len()).map(|i| format!("ring{i}")).chain(["total".into()]).collect();
            if !labels.contains(&s.channel) {
                return Err(Error::validation("scan.channel", format!("unknown channel; expected one of {labels:?}")));
            }
        }
        Ok(())
    }

    pub fn ring_stack(&self) -> Result<RingStack> {
        self.stack.build(&self.material)
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            radial: RadialGrid { rho_max: self.eigen.rho_max.unwrap_or(self.grid.extent), spacing: self.eigen.spacing },
            drift_tolerance: self.eigen.drift_tolerance,
        }
    }

    /// Propagation length, ps.
    pub fn duration(&self) -> f64 {
        self.grid.n_steps as f64 * self.grid.dt_ps()
    }

    /// Propagation steps per dipole sample.
    pub fn sample_every(&self) -> Result<usize> {
        let ratio = self.analysis.sample_interval / self.grid.dt_ps();
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-6 * n {
            return Err(Error::validation(
                "analysis.sample_interval",
                format!("{} ps is not a whole multiple of the {} fs step", self.analysis.sample_interval, self.grid.dt),
            ));
        }
        Ok(n as usize)
    }

    /// Ring annuli, falling back to the well edges.
    pub fn annuli(&self) -> Result<Vec<Annulus>> {
        match &self.analysis.annuli {
            Some(a) => Ok(a.clone()),
            None => {
                let stack = self.ring_stack()?;
                Ok((0..stack.rings.len())
                    .map(|i| {
                        let (inner, outer) = stack.well_edges(i);
                        Annulus { inner, outer }
                    })
                    .collect())
            }
        }
    }

    pub fn total_annulus(&self) -> Result<Annulus> {
        if let Some(t) = self.analysis.total {
            return Ok(t);
        }
        let a = self.annuli()?;
        let inner = a.iter().map(|x| x.inner).fold(f64::INFINITY, f64::min);
        let outer = a.iter().map(|x| x.outer).fold(0.0, f64::max);
        Ok(Annulus { inner, outer })
    }

    /// Canonical JSON used for hashing and the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the whole resolved scenario.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// SHA-256 of everything that shapes the dipole traces; analysis-only
    /// changes keep it fixed, so a stored trace can be re-analysed.
    pub fn physics_hash(&self) -> String {
        let part = serde_json::json!({
            "material": self.material,
            "stack": self.stack,
            "pulse": self.pulse,
            "grid": self.grid,
            "eigen": self.eigen,
            "kinetics": self.kinetics,
            "sample_interval": self.analysis.sample_interval,
            "annuli": self.annuli().ok(),
            "total": self.total_annulus().ok(),
            "comparison": self.comparison,
        });
        sha256_hex(part.to_string().as_bytes())
    }

    /// Resolved document as TOML, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../scenarios/", $name, ".toml")))),*]
    };
}

/// Scenario documents shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = bundle!(
    "fig1", "fig2a", "fig2b", "fig2c", "fig4", "fig4-r65", "fig5a", "fig5b", "fig6",
);

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
