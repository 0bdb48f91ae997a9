//! Per-run provenance record.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{config_fingerprint, write_atomic};
use crate::error::Result;
use crate::params::ModelParams;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_fingerprint: String,
    pub grid_n: usize,
    pub u_onsite: String,
    /// Which extended repulsion u was in force.
    pub u_label: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<String>,
    pub cache: Option<CacheStats>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, params: &ModelParams, grid_n: usize) -> Self {
        RunManifest {
            tool: "pairfiber".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_fingerprint: config_fingerprint(params, grid_n),
            grid_n,
            u_onsite: params.u_onsite.to_string(),
            u_label: params.u_label.clone(),
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
            cache: None,
        }
    }

    /// Manifest file name for a command.
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    pub fn add_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished_unix = Some(unix_now());
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        write_atomic(&dir.join(Self::file_name(&self.command)), format!("{text}\n").as_bytes())?;
        Ok(())
    }
}
