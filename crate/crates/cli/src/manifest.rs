use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, IoContext, Result};

pub const MANIFEST: &str = "manifest.json";

/// Quantities computed from the config and the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub rows: usize,
    pub cols: usize,
    pub sigma2: f64,
    /// Observed pixel count (inpainting) or `rows * cols`.
    pub observed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SapgSummary {
    pub theta: f64,
    pub rho2: f64,
    pub iterations: u64,
    pub stopped_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub iterations: u64,
    pub retained: u64,
    /// ESS of the slowest-component series, when enough samples were kept.
    pub ess_slowest: Option<f64>,
    pub ess_log_posterior: Option<f64>,
    pub final_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// FNV-1a hash of the observation's raw bytes; runs are comparable only
    /// when this matches.
    pub observation: String,
    pub derived: Derived,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub grad_evals: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sapg: Option<SapgSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSummary>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, observation: String, derived: Derived) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            observation,
            derived,
            timings: BTreeMap::new(),
            grad_evals: 0,
            sapg: None,
            chain: None,
            files: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    /// Records every file in `dir` except the manifest, then writes it there.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).at(dir)? {
            let entry = entry.at(dir)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST || !entry.file_type().at(entry.path())?.is_file() {
                continue;
            }
            let bytes = entry.metadata().at(entry.path())?.len();
            files.push(FileEntry { path: name, bytes });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files = files;
        let path = dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).at(&path)?;
        Ok(path)
    }
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}
