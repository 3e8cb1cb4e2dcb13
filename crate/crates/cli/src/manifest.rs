use std::path::{Path, PathBuf};

use awopt_core::experiment::ExperimentConfig;
use awopt_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::config_hash;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-execute a run: the fully resolved
/// configuration, the seeds and the program version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub config: ExperimentConfig,
}

pub fn version_string() -> String {
    format!("awopt {}", env!("CARGO_PKG_VERSION"))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(variant: &str, config: &ExperimentConfig, output_dir: &Path) -> Result<Self> {
        Ok(Self {
            config_hash: config_hash(config)?,
            variant: variant.to_owned(),
            seeds: config.seeds.clone(),
            output_dir: output_dir.to_path_buf(),
            version: version_string(),
            started_at: now(),
            finished_at: None,
            config: config.clone(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `--out` if given, else `AWOPT_OUT_DIR`, else `runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("AWOPT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed_{seed}"))
}
