//! Versioned JSON experiment config. Every field is optional; command-line
//! flags given explicitly take precedence over it.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::{Deserialize, Serialize};
use visor_core::episode::RunOptions;
use visor_core::learn::{SftConfig, SyntheticConfig, TrainConfig};
use visor_core::waypoints::WaypointParams;
use visor_core::world::WorldConfig;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub episodes: Option<usize>,
    pub split: Option<String>,
    pub min_start_distance: Option<f64>,
    pub max_decisions: Option<usize>,
    pub world: Option<WorldConfig>,
    pub waypoints: Option<WaypointParams>,
    pub sft: Option<SftConfig>,
    pub gspo: Option<TrainConfig>,
    pub synthetic: Option<SyntheticConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self {
                version: CONFIG_VERSION,
                ..Self::default()
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        if let Some(w) = &cfg.world {
            w.validate()
                .map_err(|e| CliError::config(format!("world config: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn world(&self) -> WorldConfig {
        self.world.clone().unwrap_or_default()
    }

    pub fn run_options(&self) -> RunOptions {
        let mut r = RunOptions::default();
        if let Some(w) = &self.waypoints {
            r.waypoints = w.clone();
        }
        if let Some(m) = self.max_decisions {
            r.max_decisions = m;
        }
        r
    }
}

/// Flags typed on the command line, as opposed to clap defaults.
pub struct Given<'a>(pub &'a ArgMatches);

impl Given<'_> {
    pub fn has(&self, id: &str) -> bool {
        matches!(self.0.value_source(id), Some(ValueSource::CommandLine))
    }

    /// The flag if typed, else the config value, else the flag's default.
    pub fn pick<T>(&self, id: &str, flag: T, file: Option<T>) -> T {
        if self.has(id) {
            flag
        } else {
            file.unwrap_or(flag)
        }
    }
}
