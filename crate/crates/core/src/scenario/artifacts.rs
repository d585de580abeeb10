//! On-disk artifacts: raw little-endian f64 arrays with JSON sidecars, text
//! tables, the run manifest and orbital checkpoints.
//!
//! `<name>.f64` holds the row-major data and `<name>.json` its header. Every
//! header carries the scenario hash and the SHA-256 of the data bytes, so a
//! file that does not belong to the run recorded in `manifest.json` (or whose
//! bytes changed) is detected by [`audit`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::propagator::{EvolvingState, Grid};

pub const FORMAT: &str = "f64-le";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisInfo {
    pub name: String,
    #[serde(default)]
    pub units: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

impl AxisInfo {
    pub fn numeric(name: &str, units: &str, values: Vec<f64>) -> Self {
        AxisInfo { name: name.into(), units: units.into(), values, labels: Vec::new() }
    }

    pub fn labeled(name: &str, labels: &[&str]) -> Self {
        AxisInfo { name: name.into(), units: String::new(), values: Vec::new(), labels: labels.iter().map(|s| s.to_string()).collect() }
    }

    /// Index axis `0..n` without units.
    pub fn index(name: &str, n: usize) -> Self {
        AxisInfo::numeric(name, "", (0..n).map(|i| i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub format: String,
    pub quantity: String,
    pub units: String,
    /// Row-major, slowest axis first.
    pub dims: Vec<usize>,
    pub axes: Vec<AxisInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_index: Option<usize>,
    /// Detector window ΔT, ps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    pub scenario: String,
    pub scenario_hash: String,
    pub physics_hash: String,
    /// SHA-256 of the data file.
    pub data_sha256: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// What a writer needs to know about an array besides its data.
#[derive(Debug, Clone, Default)]
pub struct ArraySpec {
    pub quantity: String,
    pub units: String,
    pub axes: Vec<AxisInfo>,
    pub channel: Option<String>,
    pub ring_index: Option<usize>,
    pub window: Option<f64>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ArraySpec {
    pub fn new(quantity: &str, units: &str, axes: Vec<AxisInfo>) -> Self {
        ArraySpec { quantity: quantity.into(), units: units.into(), axes, ..Default::default() }
    }

    pub fn channel(mut self, label: &str, ring_index: Option<usize>) -> Self {
        self.channel = Some(label.into());
        self.ring_index = ring_index;
        self
    }

    pub fn window(mut self, width: f64) -> Self {
        self.window = Some(width);
        self
    }

    pub fn extra(mut self, key: &str, value: serde_json::Value) -> Self {
        self.extra.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub scenario_hash: String,
    pub physics_hash: String,
    pub code_version: String,
    pub command: String,
    pub status: RunStatus,
    /// Seconds since the Unix epoch.
    pub started: f64,
    #[serde(default)]
    pub finished: Option<f64>,
    #[serde(default)]
    pub wall_seconds: Option<f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(default)]
    pub error: Option<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes the artifacts of one run into a directory and keeps the manifest
/// up to date.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl ArtifactWriter {
    /// Creates the directory and writes a `running` manifest.
    pub fn create(
        dir: &Path,
        scenario: &str,
        scenario_hash: &str,
        physics_hash: &str,
        command: &str,
        tolerances: BTreeMap<String, f64>,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = RunManifest {
            scenario: scenario.into(),
            scenario_hash: scenario_hash.into(),
            physics_hash: physics_hash.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            status: RunStatus::Running,
            started: now(),
            finished: None,
            wall_seconds: None,
            tolerances,
            artifacts: Vec::new(),
            error: None,
        };
        let writer = ArtifactWriter { dir: dir.to_path_buf(), manifest };
        writer.flush_manifest()?;
        Ok(writer)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Carries over artifacts recorded by an earlier manifest of the same
    /// directory.
    pub fn adopt(&mut self, records: Vec<ArtifactRecord>) {
        for r in records {
            if !self.manifest.artifacts.iter().any(|a| a.path == r.path) {
                self.manifest.artifacts.push(r);
            }
        }
    }

    fn flush_manifest(&self) -> Result<()> {
        write_file(&self.dir.join(MANIFEST), &json_bytes(&self.manifest)?)
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        let sha256 = sha256_file_bytes(bytes);
        match self.manifest.artifacts.iter_mut().find(|a| a.path == rel) {
            Some(a) => a.sha256 = sha256,
            None => self.manifest.artifacts.push(ArtifactRecord { path: rel.into(), sha256 }),
        }
    }

    /// Writes `<name>.f64` and `<name>.json`. `name` may contain `/`.
    pub fn array(&mut self, name: &str, spec: ArraySpec, dims: &[usize], data: &[f64]) -> Result<()> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Contract(format!("array {name}: dims {dims:?} do not match {} values", data.len())));
        }
        let mut bytes = Vec::with_capacity(8 * data.len());
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let header = ArrayHeader {
            format: FORMAT.into(),
            quantity: spec.quantity,
            units: spec.units,
            dims: dims.to_vec(),
            axes: spec.axes,
            channel: spec.channel,
            ring_index: spec.ring_index,
            window: spec.window,
            scenario: self.manifest.scenario.clone(),
            scenario_hash: self.manifest.scenario_hash.clone(),
            physics_hash: self.manifest.physics_hash.clone(),
            data_sha256: sha256_file_bytes(&bytes),
            extra: spec.extra,
        };
        let (data_rel, header_rel) = (format!("{name}.f64"), format!("{name}.json"));
        self.ensure_parent(&data_rel)?;
        write_file(&self.dir.join(&data_rel), &bytes)?;
        let header_bytes = json_bytes(&header)?;
        write_file(&self.dir.join(&header_rel), &header_bytes)?;
        self.record(&data_rel, &bytes);
        self.record(&header_rel, &header_bytes);
        Ok(())
    }

    /// Writes a text artifact (CSV, JSON, TOML) verbatim.
    pub fn text(&mut self, rel: &str, content: &str) -> Result<()> {
        self.ensure_parent(rel)?;
        write_file(&self.dir.join(rel), content.as_bytes())?;
        self.record(rel, content.as_bytes());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let bytes = json_bytes(value)?;
        self.text(rel, std::str::from_utf8(&bytes).expect("JSON is UTF-8"))
    }

    fn ensure_parent(&self, rel: &str) -> Result<()> {
        if let Some(parent) = self.dir.join(rel).parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(())
    }

    /// Marks the run finished (or failed) and rewrites the manifest.
    pub fn finalize(mut self, outcome: std::result::Result<(), &Error>) -> Result<RunManifest> {
        let end = now();
        self.manifest.finished = Some(end);
        self.manifest.wall_seconds = Some(end - self.manifest.started);
        match outcome {
            Ok(()) => self.manifest.status = RunStatus::Complete,
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e.to_string());
            }
        }
        self.flush_manifest()?;
        Ok(self.manifest)
    }
}

/// Reads an array and checks its bytes against the header.
pub fn read_array(dir: &Path, name: &str) -> Result<(ArrayHeader, Vec<f64>)> {
    let header_path = dir.join(format!("{name}.json"));
    let data_path = dir.join(format!("{name}.f64"));
    let header: ArrayHeader = serde_json::from_slice(&std::fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?)
        .map_err(|e| Error::Serde(format!("{}: {e}", header_path.display())))?;
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    if header.format != FORMAT {
        return Err(Error::Provenance(format!("{name}: unknown format {}", header.format)));
    }
    if sha256_file_bytes(&bytes) != header.data_sha256 {
        return Err(Error::Provenance(format!("{name}: data does not match its header checksum")));
    }
    let expected: usize = header.dims.iter().product();
    if bytes.len() != 8 * expected {
        return Err(Error::Provenance(format!("{name}: {} bytes for dims {:?}", bytes.len(), header.dims)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, data))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    serde_json::from_slice(&std::fs::read(&path).map_err(|e| Error::io(&path, e))?)
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

/// Array artifacts in `dir` (recursively) that are not part of the run in
/// its manifest: wrong scenario hash, changed bytes, missing sidecar or
/// absent from the manifest. Paths are relative to `dir`.
pub fn audit(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(dir)?;
    let listed: BTreeMap<&str, &str> = manifest.artifacts.iter().map(|a| (a.path.as_str(), a.sha256.as_str())).collect();
    let mut orphans = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&d)
            .map_err(|e| Error::io(&d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            if path.extension().and_then(|e| e.to_str()) != Some("f64") {
                continue;
            }
            let rel = path.strip_prefix(dir).expect("inside dir").to_string_lossy().replace('\\', "/");
            let name = rel.trim_end_matches(".f64");
            let fine = match read_array(dir, name) {
                Ok((header, _)) => {
                    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    header.scenario_hash == manifest.scenario_hash
                        && listed.get(rel.as_str()) == Some(&sha256_file_bytes(&bytes).as_str())
                }
                Err(_) => false,
            };
            if !fine {
                orphans.push(rel);
            }
        }
    }
    orphans.sort();
    Ok(orphans)
}

/// Stores every propagated and starting field, the weights and the clock.
pub fn write_checkpoint(writer: &mut ArtifactWriter, name: &str, state: &EvolvingState, grid: &Grid) -> Result<()> {
    let n = state.len();
    let mut data = Vec::with_capacity(n * 2 * grid.len() * 2);
    for j in 0..n {
        for field in [state.psi(j), &state.initial[j][..]] {
            for z in field {
                data.push(z.re);
                data.push(z.im);
            }
        }
    }
    let labels: Vec<String> = state.labels.iter().map(|(n0, m0)| format!("{n0},{m0}")).collect();
    let spec = ArraySpec::new(
        "orbital fields",
        "nm^-1",
        vec![
            AxisInfo { name: "orbital".into(), units: String::new(), values: Vec::new(), labels },
            AxisInfo::labeled("field", &["propagated", "initial"]),
            AxisInfo::numeric("y", "nm", grid.ys.clone()),
            AxisInfo::numeric("x", "nm", grid.xs.clone()),
            AxisInfo::labeled("part", &["re", "im"]),
        ],
    )
    .extra("time_ps", serde_json::json!(state.time()))
    .extra("energies_mev", serde_json::json!(state.energies))
    .extra("equilibrium", serde_json::json!(state.equilibrium))
    .extra("coherent", serde_json::json!(state.coherent));
    writer.array(name, spec, &[n, 2, grid.ny, grid.nx, 2], &data)
}

pub fn read_checkpoint(dir: &Path, name: &str, grid: &Grid) -> Result<EvolvingState> {
    let (header, data) = read_array(dir, name)?;
    if header.dims.len() != 5 || header.dims[2] != grid.ny || header.dims[3] != grid.nx {
        return Err(Error::Contract(format!("checkpoint dims {:?} do not fit the grid", header.dims)));
    }
    let get = |key: &str| -> Result<serde_json::Value> {
        header.extra.get(key).cloned().ok_or_else(|| Error::Provenance(format!("checkpoint lacks `{key}`")))
    };
    let floats = |key: &str| -> Result<Vec<f64>> {
        serde_json::from_value(get(key)?).map_err(|e| Error::Serde(e.to_string()))
    };
    let labels = header.axes[0]
        .labels
        .iter()
        .map(|l| {
            let (a, b) = l.split_once(',').ok_or_else(|| Error::Provenance(format!("bad orbital label {l}")))?;
            Ok((a.parse().map_err(|_| Error::Provenance(l.clone()))?, b.parse().map_err(|_| Error::Provenance(l.clone()))?))
        })
        .collect::<Result<Vec<(u32, i32)>>>()?;
    let time: f64 = serde_json::from_value(get("time_ps")?).map_err(|e| Error::Serde(e.to_string()))?;
    let cells = grid.len();
    let mut psi = Vec::new();
    let mut initial = Vec::new();
    for (j, chunk) in data.chunks_exact(4 * cells).enumerate() {
        let field = |f: usize| -> Vec<Complex64> {
            chunk[2 * f * cells..2 * (f + 1) * cells].chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
        };
        psi.push(field(0));
        initial.push(field(1));
        debug_assert!(j < labels.len());
    }
    EvolvingState::from_parts(grid, labels, floats("energies_mev")?, psi, initial, floats("equilibrium")?, floats("coherent")?, time)
}
