use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use visfield::field::{Architecture, TrainConfig};
use visfield::geom::SamplingParams;
use visfield::oracle::BakeConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub count: usize,
    /// Square image size of each reference view, in pixels.
    pub size: usize,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig { count: 4, size: 128 }
    }
}

/// The whole pipeline in one JSON document. Every field has a default; command-line
/// flags override whatever the document sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mesh: Option<PathBuf>,
    pub directions: usize,
    pub bake: BakeConfig,
    pub train: TrainConfig,
    pub arch: Architecture,
    pub views: RigConfig,
    /// Directions blended when reading visibility toward a camera.
    pub interp_k: usize,
    pub grid_resolution: usize,
    /// Reconstruction keeps surface pieces with at least this fraction of the largest one's area.
    pub min_component: f64,
    pub light: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mesh: None,
            directions: 64,
            bake: BakeConfig {
                sampling: SamplingParams::default(),
                surface_count: 1000,
            },
            train: TrainConfig::default(),
            arch: Architecture::default(),
            views: RigConfig::default(),
            interp_k: 4,
            grid_resolution: 128,
            min_component: 0.02,
            light: None,
            output_dir: PathBuf::from("."),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| visfield::Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.mesh, &self.light].into_iter().flatten() {
            if !p.exists() {
                bail!(visfield::Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.views.count == 0 || self.views.size < 8 {
            bail!(visfield::Error::Config("the rig needs at least one view of at least 8×8 pixels".into()));
        }
        if self.interp_k == 0 || self.interp_k > self.directions {
            bail!(visfield::Error::Config(format!(
                "interpolation k must be in 1..={}, got {}",
                self.directions, self.interp_k
            )));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            directions: self.directions,
            ..self.arch
        }
    }
}

/// Hex SHA-256 of the canonical JSON of `value`, truncated to 16 characters.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Identification stamped into every output document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, effective: &T) -> Self {
        Provenance {
            tool: "visfield".into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_hash: config_hash(effective),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {} {} config {}", self.tool, self.version, self.command, self.config_hash)
    }
}
