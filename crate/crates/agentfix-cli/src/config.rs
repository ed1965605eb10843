//! The JSON config file behind `--config`, with defaults for fully offline
//! operation.

use agentfix::gateway::ProviderConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which search backend is active. Exactly one; the fixture backend with no
/// path serves empty results.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchChoice {
    Fixture { path: Option<PathBuf> },
    Live { endpoint: String, api_key_env: String },
}

impl Default for SearchChoice {
    fn default() -> Self {
        SearchChoice::Fixture { path: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub provider: ProviderConfig,
    /// Scripted turns for the mock provider, as a JSON file.
    pub provider_script: Option<PathBuf>,
    pub search: SearchChoice,
    pub rules_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub run_dir: PathBuf,
    /// none, nfr, nws, or nca.
    pub ablation: String,
    pub search_limit: usize,
    pub rate_limit_per_minute: u32,
    pub max_iterations: usize,
    pub test_timeout_s: f64,
    /// Test launch tokens; `{test_file}` expands to the test path.
    pub runner_command: Vec<String>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            provider: ProviderConfig::default(),
            provider_script: None,
            search: SearchChoice::default(),
            rules_dir: None,
            prompts_dir: None,
            run_dir: PathBuf::from("runs"),
            ablation: "none".into(),
            search_limit: 5,
            rate_limit_per_minute: 60,
            max_iterations: 3,
            test_timeout_s: 300.0,
            runner_command: vec!["python3".into(), "{test_file}".into()],
        }
    }
}

impl GlobalConfig {
    pub fn load(path: Option<&Path>) -> Result<GlobalConfig, String> {
        match path {
            None => Ok(GlobalConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("config {}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
            }
        }
    }
}
