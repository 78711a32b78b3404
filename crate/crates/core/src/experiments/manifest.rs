use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::Invocation;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written next to every result file. Re-running the recorded invocation
/// reproduces the result files bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub invocation: Invocation,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Derived facts worth keeping with the results (layer widths, data sizes).
    pub notes: BTreeMap<String, String>,
}

pub fn version_string() -> String {
    option_env!("LPNET_GIT_DESCRIBE")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(invocation: Invocation) -> Self {
        Self {
            version: version_string(),
            invocation,
            started_unix: unix_now(),
            finished_unix: 0,
            notes: BTreeMap::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.to_string(), value.to_string());
    }

    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("serializing manifest: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(0, format!("bad manifest: {e}")))
    }
}
