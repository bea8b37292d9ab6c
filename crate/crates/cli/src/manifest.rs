//! Run manifests: every run directory carries a `manifest.json` describing
//! the exact configuration, the artifacts written, the tool version and the
//! creation time.
//!
//! The config snapshot holds the *effective* settings after flag/file
//! merging, so feeding the manifest back via `--config` reproduces the run.
//! The timestamp is the only field that differs between two such runs; all
//! listed artifacts are bitwise-reproducible.

use std::path::Path as FsPath;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use repgeo::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_utc: String,
    /// Convergence outcome for synthesis runs (`converged`,
    /// `max_outer_reached`, `diverged`); absent for other commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    /// Effective run configuration, shaped like the command's config file.
    pub config: serde_json::Value,
    /// Paths of written artifacts, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "repgeo".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_utc: utc_now(),
            outcome: None,
            config,
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, dir: &FsPath) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// Read from a manifest file or a run directory containing one.
    pub fn read(path: &FsPath) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Check that every listed artifact exists in the run directory.
    pub fn verify(&self, dir: &FsPath) -> Result<()> {
        for artifact in &self.artifacts {
            if !dir.join(artifact).is_file() {
                return Err(Error::Format(format!(
                    "manifest lists missing artifact '{artifact}' in {}",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

/// `YYYY-MM-DDTHH:MM:SSZ` from the system clock, no external time crate.
fn utc_now() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    let days = secs.div_euclid(86_400);
    let tod = secs.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        tod / 3600,
        (tod % 3600) / 60,
        tod % 60
    )
}

/// Gregorian date from days since 1970-01-01 (Hinnant's algorithm).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}
