use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Stage};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    /// Full configuration of the run that produced the stage.
    pub config: serde_json::Value,
    /// Hash of the configuration keys that shape this stage.
    pub config_sha256: String,
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name within the stage directory → content hash.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub converged: bool,
    pub summary: serde_json::Value,
}

/// What a stage body hands back.
pub struct StageOutput {
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    pub converged: bool,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn config_hash(cfg: &RunConfig, stage: Stage) -> String {
    let full = serde_json::to_value(cfg).expect("config serializes");
    let relevant: BTreeMap<&str, &serde_json::Value> = stage
        .config_keys()
        .iter()
        .map(|k| (*k, &full[*k]))
        .collect();
    hex(&Sha256::digest(serde_json::to_vec(&relevant).expect("serializes")))
}

fn hash_inputs(inputs: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// The stage directory already holds outputs of this exact configuration
/// and these exact inputs.
fn is_fresh(dir: &Path, config_sha: &str, inputs: &BTreeMap<String, String>) -> bool {
    let Ok(text) = fs::read_to_string(dir.join(MANIFEST)) else {
        return false;
    };
    let Ok(m) = serde_json::from_str::<RunManifest>(&text) else {
        return false;
    };
    m.version == env!("CARGO_PKG_VERSION")
        && m.config_sha256 == config_sha
        && &m.inputs == inputs
        && m.outputs
            .iter()
            .all(|(f, h)| sha256_file(&dir.join(f)).is_ok_and(|x| &x == h))
}

/// Runs `body` in the stage directory unless its manifest shows the outputs
/// are current, then records a fresh manifest.
pub fn run_stage(
    cfg: &RunConfig,
    stage: Stage,
    force: bool,
    body: impl FnOnce(&Path) -> Result<StageOutput, CliError>,
) -> Result<(), CliError> {
    let inputs = cfg.stage_inputs(stage);
    let missing: Vec<String> = inputs
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| format!("{}: missing input {}", stage.name(), p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(missing));
    }
    let dir = cfg.stage_dir(stage);
    let config_sha = config_hash(cfg, stage);
    let input_hashes = hash_inputs(&inputs)?;
    if !force && is_fresh(&dir, &config_sha, &input_hashes) {
        log::info!("{}: outputs are up to date in {}", stage.name(), dir.display());
        return Ok(());
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    // a partial rerun must never look fresh
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    }
    let started = now();
    log::info!("{}: running", stage.name());
    let out = body(&dir)?;
    let outputs = out
        .files
        .iter()
        .map(|f| Ok((f.clone(), sha256_file(&dir.join(f))?)))
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;
    let manifest = RunManifest {
        stage: stage.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        config_sha256: config_sha,
        inputs: input_hashes,
        outputs,
        started_unix: started,
        finished_unix: now(),
        converged: out.converged,
        summary: out.summary,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| CliError::io(&manifest_path, e))?;
    log::info!("{}: wrote {}", stage.name(), dir.display());
    if !out.converged {
        let msg = format!("{}: at least one fit did not converge", stage.name());
        if cfg.fatal_nonconvergence {
            return Err(CliError::NonConvergence(msg));
        }
        log::warn!("{msg}");
    }
    Ok(())
}
