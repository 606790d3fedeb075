//! Session-config and scenario files, TOML or JSON by extension.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use gaitway_core::session::{RecallScript, SessionConfig};
use gaitway_core::sim::{LoadFactors, Scenario, WalkerParams};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Everything that shapes the synthetic walker for one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub walker: WalkerParams,
    pub scenario: Scenario,
    pub factors: LoadFactors,
    /// How batch runs answer the recall prompt.
    pub recall: RecallScript,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FileError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = if is_json(path) {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| FileError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn load_config(path: Option<&Path>) -> Result<SessionConfig, FileError> {
    path.map_or_else(|| Ok(SessionConfig::default()), load)
}

pub fn load_scenario(path: Option<&Path>) -> Result<ScenarioFile, FileError> {
    path.map_or_else(|| Ok(ScenarioFile::default()), load)
}
