//! Experiment runner behind the `howard-web` binary: spec parsing, dispatch
//! to the library, CSV output and a reproducibility manifest.

pub mod config;
pub mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{parse_spec, serialize_spec, Diagnostic, ExperimentSpec, Kind};
pub use experiments::{run_experiment, GateCheck, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", render(.0))]
    Config(Vec<Diagnostic>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] howard_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(Diagnostic::to_string).collect::<Vec<_>>().join("\n")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const SEED_RULE: &str = "replica r of a run with master seed m uses derive_seed(m, r) = \
    mix64(mix64(m ^ 0xD1B54A32D192ED03) + r * 0x9E3779B97F4A7C15) (wrapping), mix64 being the SplitMix64 finalizer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub requested: bool,
    pub passed: bool,
    pub checks: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    /// Canonical text of the spec that was run; `--config manifest.json` reruns it.
    pub spec: String,
    pub master_seed: u64,
    pub seed_rule: String,
    pub threads: usize,
    pub timings: Vec<Timing>,
    pub outputs: Vec<OutputDigest>,
    pub warnings: Vec<String>,
    pub gate: GateSummary,
}

impl RunManifest {
    /// The gate verdict; vacuously true when there is nothing to check.
    pub fn gate_passed(&self) -> bool {
        self.gate.passed
    }
}

/// Reads a spec file, or the spec echoed in a manifest written by [`run`].
pub fn load_spec(path: &Path, kind: Option<Kind>) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let text = match serde_json::from_str::<RunManifest>(&text) {
        Ok(m) => m.spec,
        Err(_) => text,
    };
    parse_spec(&text, kind).map_err(CliError::Config)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `spec` and writes its outputs, `summary.json` and `manifest.json`
/// into `spec.out`. Everything except the timings is a function of the spec.
pub fn run(spec: &ExperimentSpec, gate: bool) -> Result<RunManifest, CliError> {
    let t0 = Instant::now();
    let outcome = run_experiment(spec)?;
    let dir = Path::new(&spec.out);
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = outcome.files;
    let mut summary = serde_json::to_string_pretty(&outcome.summary)?;
    summary.push('\n');
    files.push(("summary.json".into(), summary.into_bytes()));
    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
        outputs.push(OutputDigest {
            file: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }
    let mut timings: Vec<Timing> = outcome
        .timings
        .into_iter()
        .map(|(stage, seconds)| Timing { stage, seconds })
        .collect();
    timings.push(Timing {
        stage: "total".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    let checks = outcome
        .checks
        .iter()
        .map(serde_json::to_value)
        .collect::<Result<_, _>>()?;
    let manifest = RunManifest {
        tool: "howard-web".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: spec.kind.to_string(),
        spec: serialize_spec(spec),
        master_seed: spec.model.seed,
        seed_rule: SEED_RULE.into(),
        threads: rayon::current_num_threads(),
        timings,
        outputs,
        warnings: outcome.warnings,
        gate: GateSummary {
            requested: gate,
            passed: outcome.checks.iter().all(|c| c.passed),
            checks,
        },
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = dir.join("manifest.json");
    fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}
