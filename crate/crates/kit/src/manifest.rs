//! Run manifest written next to every data file.

use std::collections::BTreeMap;

use serde::Serialize;

/// Record of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand name.
    pub command: String,
    /// Model file, if any.
    pub model_path: Option<String>,
    /// All arguments after defaults were applied.
    pub parameters: serde_json::Value,
    /// Tool version.
    pub tool_version: String,
    /// Wall time in seconds.
    pub wall_time_s: f64,
    /// Tolerances in effect.
    pub tolerances: BTreeMap<String, f64>,
    /// Worker threads.
    pub jobs: usize,
}

/// Path of the manifest for a data file: `<data>.manifest.json`.
pub fn manifest_path(data: &std::path::Path) -> std::path::PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}
