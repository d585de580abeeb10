//! Run orchestration: eigensolve → occupy → propagate + relax → dipoles →
//! spectrograms → Stokes → reports, plus the scan driver and re-analysis of
//! stored traces. Everything here is deterministic; wall-clock time only
//! appears in the manifest.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifacts::{self, ArraySpec, ArtifactWriter, AxisInfo, RunManifest};
use super::Scenario;
use crate::emission::{
    masked_correlation, quadrupole_diagnostic, second_derivative, stokes, wavelet_check, Axes, DetectionWindow,
    DipoleChannel, DipoleTrace, Scalogram, Spectrogram,
};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::propagator::{
    angular_harmonics, initialize, run, Annulus, Drive, EvolvingState, Grid, Observer, Propagator, RunPlan, RunRecord,
};
use crate::ring_model::{occupy, potential, solve_occupied, solve_stationary, Orbital, RingStack};
use crate::selection_oracle::{lines_csv, predict_lines, TransitionLine};
use crate::units::{gauge_wavevector, thz_to_mev};
use crate::vortex_field::{photon_number_match, MatchDomain, PulseSpec};

/// Analysis stages that can be re-run on a stored dipole trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// S0 spectrograms and the Morlet cross-check.
    Spectrum,
    /// S1–S3 spectrograms.
    Stokes,
}

/// Peak gauge wavevector of a pulse in the scenario's material, nm⁻¹.
pub fn peak_wavevector(scenario: &Scenario, pulse: &PulseSpec) -> f64 {
    gauge_wavevector(pulse.amplitude(scenario.material.effective_mass, scenario.material.dielectric_constant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub label: String,
    pub ring_index: Option<usize>,
    /// ps
    pub peak_time: f64,
    /// THz
    pub peak_frequency: f64,
    pub peak_energy_mev: f64,
    pub peak_s0: f64,
    /// `(S1, S2, S3)/S0` at the peak.
    pub peak_stokes: [f64; 3],
    pub min_s0: f64,
    /// Largest degree of polarization where S0 exceeds the floor.
    pub max_degree: f64,
    pub wavelet_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellHarmonics {
    pub label: String,
    /// `|c_k|` for `k = 0..=harmonics`.
    pub magnitudes: Vec<f64>,
    /// Largest `|c_k|` with `k ≥ 1`.
    pub dominant: usize,
    /// Local minima of the angular profile rebuilt from `k ≥ 1`.
    pub minima: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub time: f64,
    pub shells: Vec<ShellHarmonics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scenario_hash: String,
    pub pulse: PulseSpec,
    /// nm⁻¹
    pub peak_wavevector: f64,
    pub orbitals: usize,
    pub max_norm_drift: f64,
    pub quadrupole_mean: f64,
    pub quadrupole_oscillation: f64,
    pub channels: Vec<ChannelSummary>,
    pub snapshots: Vec<SnapshotSummary>,
}

/// One propagated pulse with its analysis.
#[derive(Debug, Clone)]
pub struct PulseRun {
    pub pulse: PulseSpec,
    pub record: RunRecord,
    pub spectrograms: Vec<Spectrogram>,
    pub scalograms: Vec<Scalogram>,
    pub summary: RunSummary,
}

#[derive(Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub orbitals: Vec<Orbital>,
    pub lines: Vec<TransitionLine>,
    pub main: PulseRun,
    pub comparison: Option<PulseRun>,
    pub grid: Grid,
    /// Final state of the main run.
    pub state: EvolvingState,
}

#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub manifest: RunManifest,
    pub m_oam: Vec<i32>,
    pub peak_intensity: Vec<f64>,
    /// `values[i][j]` for `m_oam[i]`, `peak_intensity[j]`.
    pub values: Vec<Vec<f64>>,
}

fn tolerances(s: &Scenario) -> BTreeMap<String, f64> {
    let mut t = BTreeMap::new();
    t.insert("eigen.drift_tolerance".into(), s.eigen.drift_tolerance);
    t.insert("eigen.occupation_cutoff".into(), s.eigen.occupation_cutoff);
    t.insert("analysis.stokes_floor".into(), s.analysis.stokes_floor);
    if let Some(n) = s.kinetics.norm_tolerance {
        t.insert("kinetics.norm_tolerance".into(), n);
    }
    t
}

fn open_writer(s: &Scenario, dir: &Path, command: &str) -> Result<ArtifactWriter> {
    let mut w = ArtifactWriter::create(dir, &s.name, &s.hash(), &s.physics_hash(), command, tolerances(s))?;
    w.text("scenario.toml", &s.to_toml()?)?;
    Ok(w)
}

/// Runs `body`, then finalizes the manifest as complete or failed.
fn with_manifest<T>(mut w: ArtifactWriter, body: impl FnOnce(&mut ArtifactWriter) -> Result<T>) -> Result<(RunManifest, T)> {
    match body(&mut w) {
        Ok(v) => Ok((w.finalize(Ok(()))?, v)),
        Err(e) => {
            let _ = w.finalize(Err(&e));
            Err(e)
        }
    }
}

fn orbitals_csv(orbitals: &[Orbital]) -> String {
    let mut out = String::from("n0,m0,energy_mev,occupation\n");
    for o in orbitals {
        out.push_str(&format!("{},{},{:.10},{:.10e}\n", o.n0, o.m0, o.energy, o.occupation));
    }
    out
}

fn write_orbitals(w: &mut ArtifactWriter, stack: &RingStack, orbitals: &[Orbital], prefix: &str) -> Result<()> {
    w.text(&format!("{prefix}.csv"), &orbitals_csv(orbitals))?;
    let Some(first) = orbitals.first() else { return Ok(()) };
    let n = first.radial_profile.values.len();
    let rho: Vec<f64> = (0..n).map(|k| first.radial_profile.rho(k)).collect();
    let data: Vec<f64> = orbitals.iter().flat_map(|o| o.radial_profile.values.iter().copied()).collect();
    let labels: Vec<String> = orbitals.iter().map(|o| format!("{},{}", o.n0, o.m0)).collect();
    let spec = ArraySpec::new(
        "radial profile R(rho)",
        "nm^-1",
        vec![
            AxisInfo { name: "orbital".into(), units: String::new(), values: Vec::new(), labels },
            AxisInfo::numeric("rho", "nm", rho.clone()),
        ],
    )
    .extra("energies_mev", serde_json::json!(orbitals.iter().map(|o| o.energy).collect::<Vec<_>>()));
    w.array(&format!("{prefix}_radial"), spec, &[orbitals.len(), n], &data)?;
    if prefix == "orbitals" {
        let v: Vec<f64> = rho.iter().map(|r| potential(stack, *r)).collect::<Result<_>>()?;
        w.array("potential", ArraySpec::new("confinement potential", "meV", vec![AxisInfo::numeric("rho", "nm", rho)]), &[n], &v)?;
    }
    Ok(())
}

/// Occupied orbitals of the scenario's stack.
pub fn occupied_orbitals(s: &Scenario) -> Result<(RingStack, Vec<Orbital>)> {
    let stack = s.ring_stack()?;
    let orbitals = solve_occupied(&stack, &s.material, s.eigen.occupation_cutoff, &s.eigen_options())
        .map_err(|e| e.context("eigensolve"))?;
    Ok((stack, orbitals))
}

/// Occupied orbitals plus enough empty ones for every first-order line.
pub fn oracle_orbitals(s: &Scenario, stack: &RingStack, occupied: &[Orbital]) -> Result<Vec<Orbital>> {
    let reach = occupied.iter().map(|o| o.m0.abs()).max().unwrap_or(0) + s.pulse.winding().abs() + 1;
    let levels = s.eigen.oracle_levels.max(occupied.iter().map(|o| o.n0 as usize + 1).max().unwrap_or(1) + 1);
    let all = solve_stationary(stack, &s.material, (-reach, reach), levels, &s.eigen_options())
        .map_err(|e| e.context("oracle eigensolve"))?;
    Ok(occupy(all, &s.material))
}

pub fn predicted_lines(s: &Scenario, stack: &RingStack, occupied: &[Orbital]) -> Result<Vec<TransitionLine>> {
    let orbitals = oracle_orbitals(s, stack, occupied)?;
    Ok(predict_lines(&orbitals, &s.pulse, peak_wavevector(s, &s.pulse), &s.material))
}

/// Eigensolve only: orbital table, radial profiles and the potential.
pub fn eigensolve(s: &Scenario, dir: &Path) -> Result<(RunManifest, Vec<Orbital>)> {
    let w = open_writer(s, dir, "eigensolve")?;
    with_manifest(w, |w| {
        let (stack, orbitals) = occupied_orbitals(s)?;
        write_orbitals(w, &stack, &orbitals, "orbitals")?;
        Ok(orbitals)
    })
}

/// Line predictions of first-order perturbation theory.
pub fn oracle(s: &Scenario, dir: &Path) -> Result<(RunManifest, Vec<TransitionLine>)> {
    let w = open_writer(s, dir, "oracle")?;
    with_manifest(w, |w| {
        let (stack, occupied) = occupied_orbitals(s)?;
        let lines = predicted_lines(s, &stack, &occupied)?;
        w.text("lines.csv", &lines_csv(&lines))?;
        Ok(lines)
    })
}

/// Propagates the occupied orbitals under `pulse` with the scenario's grid,
/// kinetics and observers.
pub fn propagate(
    s: &Scenario,
    stack: &RingStack,
    orbitals: &[Orbital],
    grid: &Grid,
    pulse: &PulseSpec,
    exec: Execution,
) -> Result<(RunRecord, EvolvingState)> {
    let q0 = peak_wavevector(s, pulse);
    let absorber = s.grid.absorber.then(|| s.grid.absorber_width());
    let prop = Propagator::new(grid, stack, &s.material, Some(Drive { pulse: pulse.clone(), q0 }), s.grid.dt_ps(), absorber, exec)?;
    let mut state = initialize(orbitals, grid, s.grid.clear_radius(), s.eigen.occupation_cutoff, exec)?;
    let observer = Observer::new(grid, &s.annuli()?, s.total_annulus()?)?;
    let plan = RunPlan {
        n_steps: s.grid.n_steps,
        sample_every: s.sample_every()?,
        relaxation: s.kinetics.relaxation,
        norm_tolerance: s.kinetics.norm_tolerance,
        snapshot_times: s.analysis.snapshot_times.clone(),
    };
    let record = run(&prop, &mut state, &observer, &s.material, &plan).map_err(|e| e.context("propagation"))?;
    Ok((record, state))
}

/// Spectrogram axes spanning a trace.
pub fn analysis_axes(s: &Scenario, trace: &DipoleTrace) -> Result<Axes> {
    let a = &s.analysis;
    Axes::uniform(trace.t0, trace.end(), a.time_step, a.f_min, a.f_max, a.n_freq)
}

/// Bins where both the windowed FT and the Morlet transform are free of
/// edge effects and the frequency is positive.
pub fn shared_support(spec: &Spectrogram, trace: &DipoleTrace, cycles: f64) -> Vec<bool> {
    let (t0, t1) = (trace.t0, trace.end());
    let mut mask = Vec::with_capacity(spec.s0.len());
    for (it, &t) in spec.axes.times.iter().enumerate() {
        for &f in &spec.axes.freqs {
            let ok = if f > 0.0 {
                let reach = 3.0 * cycles / (TAU * f);
                !spec.edge[it] && t - reach >= t0 && t + reach <= t1
            } else {
                false
            };
            mask.push(ok);
        }
    }
    mask
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter().map(|x| x / m).collect()
    } else {
        v.to_vec()
    }
}

pub fn wavelet_correlation(spec: &Spectrogram, scal: &Scalogram, trace: &DipoleTrace) -> f64 {
    let mask = shared_support(spec, trace, scal.cycles);
    masked_correlation(&normalized(&spec.s0), &normalized(&scal.power), &mask)
}

fn channel_summary(spec: &Spectrogram, scal: Option<&Scalogram>, trace: &DipoleTrace, floor: f64) -> ChannelSummary {
    let (it, jf, v) = spec.peak();
    let f = spec.axes.freqs[jf];
    let abs_floor = floor * spec.max_s0();
    let max_degree = spec
        .degree_of_polarization(abs_floor)
        .into_iter()
        .zip(&spec.s0)
        .filter(|(_, s0)| **s0 > abs_floor)
        .map(|(p, _)| p)
        .fold(0.0, f64::max);
    ChannelSummary {
        label: spec.label.clone(),
        ring_index: spec.ring_index,
        peak_time: spec.axes.times[it],
        peak_frequency: f,
        peak_energy_mev: thz_to_mev(f),
        peak_s0: v,
        peak_stokes: if v > 0.0 { spec.normalized(it, jf) } else { [0.0; 3] },
        min_s0: spec.s0.iter().cloned().fold(f64::INFINITY, f64::min),
        max_degree,
        wavelet_correlation: scal.map(|w| wavelet_correlation(spec, w, trace)),
    }
}

/// Counts strict local minima of a periodic profile.
fn circular_minima(p: &[f64]) -> usize {
    let n = p.len();
    (0..n).filter(|&i| p[i] < p[(i + n - 1) % n] && p[i] < p[(i + 1) % n]).count()
}

pub fn shell_harmonics(grid: &Grid, density: &[f64], shells: &[(String, Annulus)], k_max: usize) -> Vec<ShellHarmonics> {
    let annuli: Vec<Annulus> = shells.iter().map(|(_, a)| *a).collect();
    angular_harmonics(grid, density, &annuli, k_max)
        .into_iter()
        .zip(shells)
        .map(|(c, (label, _))| {
            let magnitudes: Vec<f64> = c.iter().map(|z| z.norm()).collect();
            let dominant = (1..magnitudes.len()).max_by(|a, b| magnitudes[*a].total_cmp(&magnitudes[*b])).unwrap_or(0);
            let profile: Vec<f64> = (0..720)
                .map(|i| {
                    let phi = TAU * i as f64 / 720.0;
                    c.iter().enumerate().skip(1).map(|(k, z)| 2.0 * (z * num_complex::Complex64::from_polar(1.0, k as f64 * phi)).re).sum()
                })
                .collect();
            ShellHarmonics { label: label.clone(), magnitudes, dominant, minima: circular_minima(&profile) }
        })
        .collect()
}

/// Spectrograms (and optionally scalograms) of a dipole trace.
pub fn analyze(s: &Scenario, trace: &DipoleTrace, wavelet: bool, exec: Execution) -> Result<(Vec<Spectrogram>, Vec<Scalogram>)> {
    let accel = second_derivative(trace)?;
    let axes = analysis_axes(s, trace)?;
    let spectrograms = stokes(&accel, DetectionWindow { width: s.analysis.window }, &axes, exec);
    let scalograms = if wavelet { wavelet_check(&accel, &axes, s.analysis.wavelet_cycles, exec) } else { Vec::new() };
    Ok((spectrograms, scalograms))
}

fn summarize(
    s: &Scenario,
    pulse: &PulseSpec,
    grid: &Grid,
    record: &RunRecord,
    spectrograms: &[Spectrogram],
    scalograms: &[Scalogram],
) -> Result<RunSummary> {
    let mut shells: Vec<(String, Annulus)> =
        s.annuli()?.into_iter().enumerate().map(|(i, a)| (format!("ring{}", i + 1), a)).collect();
    shells.push(("total".into(), s.total_annulus()?));
    let q = quadrupole_diagnostic(&record.quadrupole);
    Ok(RunSummary {
        scenario: s.name.clone(),
        scenario_hash: s.hash(),
        pulse: pulse.clone(),
        peak_wavevector: peak_wavevector(s, pulse),
        orbitals: record.norm_drift.len(),
        max_norm_drift: record.norm_drift.iter().cloned().fold(0.0, f64::max),
        quadrupole_mean: q.mean,
        quadrupole_oscillation: q.oscillation,
        channels: spectrograms
            .iter()
            .map(|sp| channel_summary(sp, scalograms.iter().find(|w| w.label == sp.label), &record.trace, s.analysis.stokes_floor))
            .collect(),
        snapshots: record
            .snapshots
            .iter()
            .map(|snap| SnapshotSummary { time: snap.time, shells: shell_harmonics(grid, &snap.density, &shells, s.analysis.harmonics) })
            .collect(),
    })
}

fn trace_array(trace: &DipoleTrace) -> (Vec<usize>, Vec<f64>, Vec<AxisInfo>) {
    let nt = trace.len();
    let labels: Vec<&str> = trace.channels.iter().map(|c| c.label.as_str()).collect();
    let mut data = Vec::with_capacity(trace.channels.len() * 2 * nt);
    for c in &trace.channels {
        data.extend_from_slice(&c.x);
        data.extend_from_slice(&c.y);
    }
    let axes = vec![AxisInfo::labeled("channel", &labels), AxisInfo::labeled("component", &["x", "y"]), AxisInfo::numeric("time", "ps", trace.times())];
    (vec![trace.channels.len(), 2, nt], data, axes)
}

fn spectrogram_axes(spec: &Spectrogram) -> Vec<AxisInfo> {
    vec![AxisInfo::numeric("time", "ps", spec.axes.times.clone()), AxisInfo::numeric("frequency", "THz", spec.axes.freqs.clone())]
}

fn write_spectra(w: &mut ArtifactWriter, prefix: &str, stage: Stage, spectrograms: &[Spectrogram], scalograms: &[Scalogram]) -> Result<()> {
    for sp in spectrograms {
        let (nt, nf) = (sp.nt(), sp.nf());
        match stage {
            Stage::Spectrum => {
                let spec = ArraySpec::new("Stokes S0", "W/sr (per unit detector bandwidth)", spectrogram_axes(sp))
                    .channel(&sp.label, sp.ring_index)
                    .window(sp.window.width)
                    .extra("edge_rows", serde_json::json!(sp.edge));
                w.array(&format!("{prefix}spectrogram/{}", sp.label), spec, &[nt, nf], &sp.s0)?;
            }
            Stage::Stokes => {
                let mut axes = vec![AxisInfo::labeled("stokes", &["S1", "S2", "S3"])];
                axes.extend(spectrogram_axes(sp));
                let spec = ArraySpec::new("Stokes S1, S2, S3", "W/sr (per unit detector bandwidth)", axes)
                    .channel(&sp.label, sp.ring_index)
                    .window(sp.window.width);
                let data: Vec<f64> = [&sp.s1, &sp.s2, &sp.s3].iter().flat_map(|v| v.iter().copied()).collect();
                w.array(&format!("{prefix}stokes/{}", sp.label), spec, &[3, nt, nf], &data)?;
            }
        }
    }
    if stage == Stage::Spectrum {
        for sc in scalograms {
            let axes = vec![AxisInfo::numeric("time", "ps", sc.axes.times.clone()), AxisInfo::numeric("frequency", "THz", sc.axes.freqs.clone())];
            let spec = ArraySpec::new("Morlet power |Wx|^2 + |Wy|^2", "(e nm/ps)^2", axes)
                .channel(&sc.label, None)
                .extra("omega0", serde_json::json!(sc.cycles));
            w.array(&format!("{prefix}wavelet/{}", sc.label), spec, &[sc.axes.times.len(), sc.axes.freqs.len()], &sc.power)?;
        }
    }
    Ok(())
}

fn write_pulse_run(w: &mut ArtifactWriter, grid: &Grid, prefix: &str, run: &PulseRun, densities: bool) -> Result<()> {
    let (dims, data, axes) = trace_array(&run.record.trace);
    w.array(&format!("{prefix}dipole"), ArraySpec::new("dipole moment", "e nm", axes), &dims, &data)?;
    let times = run.record.trace.times();
    w.array(
        &format!("{prefix}quadrupole"),
        ArraySpec::new("planar quadrupole D_zz", "e nm^2", vec![AxisInfo::numeric("time", "ps", times.clone())]),
        &[times.len()],
        &run.record.quadrupole,
    )?;
    w.array(
        &format!("{prefix}norm_drift"),
        ArraySpec::new("max |norm - 1| per orbital", "", vec![AxisInfo::index("orbital", run.record.norm_drift.len())]),
        &[run.record.norm_drift.len()],
        &run.record.norm_drift,
    )?;
    if densities && !run.record.snapshots.is_empty() {
        let snaps = &run.record.snapshots;
        let data: Vec<f64> = snaps.iter().flat_map(|sn| sn.density.iter().copied()).collect();
        let axes = vec![
            AxisInfo::numeric("time", "ps", snaps.iter().map(|sn| sn.time).collect()),
            AxisInfo::numeric("y", "nm", grid.ys.clone()),
            AxisInfo::numeric("x", "nm", grid.xs.clone()),
        ];
        w.array(&format!("{prefix}density"), ArraySpec::new("ensemble density", "nm^-2", axes), &[snaps.len(), grid.ny, grid.nx], &data)?;
    }
    write_spectra(w, prefix, Stage::Spectrum, &run.spectrograms, &run.scalograms)?;
    write_spectra(w, prefix, Stage::Stokes, &run.spectrograms, &run.scalograms)?;
    w.json(&format!("{prefix}summary.json"), &run.summary)?;
    Ok(())
}

fn pulse_run(
    s: &Scenario,
    stack: &RingStack,
    orbitals: &[Orbital],
    grid: &Grid,
    pulse: &PulseSpec,
    exec: Execution,
) -> Result<(PulseRun, EvolvingState)> {
    log::info!(
        "propagating {} orbitals for {} steps on {}x{} ({:?}, m_oam = {})",
        orbitals.len(),
        s.grid.n_steps,
        grid.nx,
        grid.ny,
        pulse.kind,
        pulse.m_oam
    );
    let (record, state) = propagate(s, stack, orbitals, grid, pulse, exec)?;
    log::info!("analysing {} dipole channels", record.trace.channels.len());
    let (spectrograms, scalograms) = analyze(s, &record.trace, s.outputs.wavelet, exec)?;
    let summary = summarize(s, pulse, grid, &record, &spectrograms, &scalograms)?;
    Ok((PulseRun { pulse: pulse.clone(), record, spectrograms, scalograms, summary }, state))
}

/// Photon-number-matched comparison pulse, if the scenario asks for one.
pub fn comparison_pulse(s: &Scenario) -> Result<Option<PulseSpec>> {
    let Some(c) = &s.comparison else { return Ok(None) };
    let domain = MatchDomain { extent: s.grid.extent, points: c.match_points };
    photon_number_match(&s.pulse, &c.template(&s.pulse), domain).map(Some).map_err(|e| e.context("comparison"))
}

/// Full simulation of a scenario into `dir`.
pub fn run_pipeline(s: &Scenario, dir: &Path, exec: Execution) -> Result<RunOutput> {
    let w = open_writer(s, dir, "simulate")?;
    let (manifest, out) = with_manifest(w, |w| {
        let (stack, orbitals) = occupied_orbitals(s)?;
        if s.outputs.orbitals {
            write_orbitals(w, &stack, &orbitals, "orbitals")?;
        }
        let lines = predicted_lines(s, &stack, &orbitals)?;
        w.text("lines.csv", &lines_csv(&lines))?;
        let grid = Grid::new(&s.grid)?;
        let (main, state) = pulse_run(s, &stack, &orbitals, &grid, &s.pulse, exec)?;
        write_pulse_run(w, &grid, "", &main, s.outputs.densities)?;
        if s.outputs.checkpoint {
            artifacts::write_checkpoint(w, "checkpoint", &state, &grid)?;
        }
        let comparison = match comparison_pulse(s)? {
            Some(p) => {
                let (run, _) = pulse_run(s, &stack, &orbitals, &grid, &p, exec)?;
                write_pulse_run(w, &grid, "comparison/", &run, s.outputs.densities)?;
                Some(run)
            }
            None => None,
        };
        Ok((orbitals, lines, main, comparison, grid, state))
    })?;
    let (orbitals, lines, main, comparison, grid, state) = out;
    Ok(RunOutput { manifest, orbitals, lines, main, comparison, grid, state })
}

/// Rebuilds a trace from a stored `dipole` array.
pub fn load_trace(dir: &Path, name: &str) -> Result<(super::ArrayHeader, DipoleTrace)> {
    let (header, data) = artifacts::read_array(dir, name)?;
    if header.dims.len() != 3 || header.dims[1] != 2 {
        return Err(Error::Provenance(format!("{name}: not a dipole trace")));
    }
    let (nc, nt) = (header.dims[0], header.dims[2]);
    let times = &header.axes[2].values;
    let channels = (0..nc)
        .map(|c| {
            let label = header.axes[0].labels[c].clone();
            let ring_index = label.strip_prefix("ring").and_then(|r| r.parse::<usize>().ok()).map(|i| i - 1);
            DipoleChannel { label, ring_index, x: data[(2 * c) * nt..(2 * c + 1) * nt].to_vec(), y: data[(2 * c + 1) * nt..(2 * c + 2) * nt].to_vec() }
        })
        .collect();
    let trace = DipoleTrace::from_times(times, channels)?;
    Ok((header, trace))
}

/// Re-runs one analysis stage on the trace stored in `dir`. The trace must
/// come from the same physics; when only analysis settings changed, the new
/// artifacts go to `dir/analysis-<hash>` with their own manifest.
pub fn reanalyze(s: &Scenario, dir: &Path, stage: Stage, exec: Execution) -> Result<RunManifest> {
    let (header, trace) = load_trace(dir, "dipole")?;
    if header.physics_hash != s.physics_hash() {
        return Err(Error::Provenance(format!(
            "stored trace in {} was produced by a different physical setup; re-run `simulate`",
            dir.display()
        )));
    }
    let target = if header.scenario_hash == s.hash() { dir.to_path_buf() } else { dir.join(format!("analysis-{}", &s.hash()[..12])) };
    let command = match stage {
        Stage::Spectrum => "spectrum",
        Stage::Stokes => "stokes",
    };
    let mut w = if target == dir {
        reopen(s, dir, command)?
    } else {
        open_writer(s, &target, command)?
    };
    let wavelet = stage == Stage::Spectrum && s.outputs.wavelet;
    let result = analyze(s, &trace, wavelet, exec).and_then(|(sp, sc)| write_spectra(&mut w, "", stage, &sp, &sc));
    match result {
        Ok(()) => w.finalize(Ok(())),
        Err(e) => {
            let _ = w.finalize(Err(&e));
            Err(e)
        }
    }
}

/// Continues an existing manifest, keeping its artifact list.
fn reopen(s: &Scenario, dir: &Path, command: &str) -> Result<ArtifactWriter> {
    let old = artifacts::read_manifest(dir)?;
    let mut w = ArtifactWriter::create(dir, &s.name, &s.hash(), &s.physics_hash(), command, tolerances(s))?;
    w.adopt(old.artifacts);
    Ok(w)
}

/// S0 at one time–frequency point of one channel.
pub fn probe(s: &Scenario, trace: &DipoleTrace, channel: &str, time: f64, frequency: f64) -> Result<f64> {
    let accel = second_derivative(trace)?;
    let ch = accel
        .channels
        .iter()
        .find(|c| c.label == channel)
        .ok_or_else(|| Error::validation("scan.channel", format!("no channel `{channel}`")))?;
    let single = DipoleTrace { t0: accel.t0, dt: accel.dt, channels: vec![ch.clone()] };
    let axes = Axes { times: vec![time], freqs: vec![frequency] };
    let sp = stokes(&single, DetectionWindow { width: s.analysis.window }, &axes, Execution::Sequential);
    Ok(sp[0].s0[0])
}

/// Runs the scenario for every `(m_oam, intensity)` pair of its `[scan]`.
pub fn run_scan(s: &Scenario, dir: &Path, exec: Execution) -> Result<ScanOutput> {
    let scan = s.scan.clone().ok_or_else(|| Error::validation("scan", "scenario has no [scan] section"))?;
    let w = open_writer(s, dir, "scan")?;
    let (manifest, values) = with_manifest(w, |w| {
        let (stack, orbitals) = occupied_orbitals(s)?;
        let grid = Grid::new(&s.grid)?;
        let mut values = Vec::with_capacity(scan.m_oam.len());
        let mut csv = String::from("m_oam,peak_intensity_w_cm2,probe_s0\n");
        for &m in &scan.m_oam {
            let mut row = Vec::with_capacity(scan.peak_intensity.len());
            for &i in &scan.peak_intensity {
                let pulse = PulseSpec { m_oam: m, peak_intensity: i, ..s.pulse.clone() };
                pulse.validate()?;
                log::info!("scan point m_oam = {m}, I = {i:e} W/cm^2");
                let (record, _) = propagate(s, &stack, &orbitals, &grid, &pulse, exec)
                    .map_err(|e| e.context(format!("scan point m_oam={m}, I={i:e}")))?;
                let v = probe(s, &record.trace, &scan.channel, scan.probe_time, scan.probe_frequency)?;
                csv.push_str(&format!("{m},{i:e},{v:.10e}\n"));
                row.push(v);
            }
            values.push(row);
        }
        let axes = vec![
            AxisInfo::numeric("m_oam", "", scan.m_oam.iter().map(|m| *m as f64).collect()),
            AxisInfo::numeric("peak_intensity", "W/cm^2", scan.peak_intensity.clone()),
        ];
        let spec = ArraySpec::new("probe S0", "W/sr (per unit detector bandwidth)", axes)
            .channel(&scan.channel, None)
            .window(s.analysis.window)
            .extra("probe_time_ps", serde_json::json!(scan.probe_time))
            .extra("probe_frequency_thz", serde_json::json!(scan.probe_frequency));
        let flat: Vec<f64> = values.iter().flatten().copied().collect();
        w.array("scan", spec, &[scan.m_oam.len(), scan.peak_intensity.len()], &flat)?;
        w.text("scan.csv", &csv)?;
        Ok(values)
    })?;
    Ok(ScanOutput { manifest, m_oam: scan.m_oam, peak_intensity: scan.peak_intensity, values })
}
