use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorConfig;
use crate::clustering::ApcParams;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::features::HogConfig;
use crate::suppression::{ApcSuppressionConfig, SuppressionConfig};

/// The configuration document. Every section is optional and falls back to
/// its defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub anchors: Option<AnchorConfig>,
    pub hog: HogConfig,
    pub apc: ApcParams,
    pub suppression: SuppressionConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = &self.anchors {
            a.validate()?;
        }
        self.hog.validate()?;
        self.apc.validate()?;
        self.suppression.validate()?;
        self.eval.validate()
    }

    pub fn apc_suppression(&self) -> ApcSuppressionConfig {
        ApcSuppressionConfig {
            suppression: self.suppression,
            apc: self.apc,
            hog: self.hog,
        }
    }
}
