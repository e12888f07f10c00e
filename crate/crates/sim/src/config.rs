use std::path::Path;

use eprqkd_core::{ConfigError, ProtocolConfig};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Everything needed to reproduce a batch of trials. Echoed verbatim into
/// every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
    pub protocol: ProtocolConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials: 1,
            seed: 0,
            protocol: ProtocolConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        self.protocol.validate()
    }

    /// Seed of trial `index`; each trial derives its party streams from it.
    pub fn trial_seed(&self, index: u64) -> u64 {
        self.seed ^ index
    }

    /// Reads a config from a JSON file holding either a bare config or a
    /// full report whose `config` field is echoed back.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let inner = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        Ok(serde_json::from_value(inner)?)
    }
}
