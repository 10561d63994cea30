use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use abevo::Result;
use serde::Serialize;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
    /// Effective key-value settings after all overrides.
    pub settings: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Option<&Path>, seed: u64, settings: String) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        RunManifest {
            subcommand: subcommand.to_string(),
            config: config.map(|p| p.display().to_string()),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            settings,
        }
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(dir.join(name), s)?;
        Ok(())
    }
}
