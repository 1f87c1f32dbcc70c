use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use chef_core::pipeline::PipelineConfig;

use crate::CliError;

/// Contents of the `--config` file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Takes precedence over `pipeline.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl CliConfig {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: CliConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.out_dir = base.join(&cfg.out_dir);
        if let Some(s) = seed.or(cfg.seed) {
            cfg.pipeline.seed = s;
        }
        cfg.pipeline
            .validate()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }
}
