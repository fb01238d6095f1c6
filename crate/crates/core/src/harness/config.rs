use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::curriculum::CurriculumConfig;
use crate::network::TrainConfig;
use crate::search::SearchConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub channels: usize,
    pub blocks: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channels: 32,
            blocks: 2,
        }
    }
}

/// Everything a training run depends on.
///
/// `search.i_max` is only used by the evaluation commands; training episodes
/// take their step cap from the curriculum stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub level: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub max_iterations: u32,
    pub output_dir: PathBuf,
    pub network: NetworkConfig,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub curriculum: CurriculumConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            level: PathBuf::new(),
            seed: 0,
            workers: 4,
            max_iterations: 100,
            output_dir: PathBuf::from("runs/default"),
            network: NetworkConfig::default(),
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML config. A relative `level` path is taken relative to
    /// the config file.
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.level.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.level = dir.join(&cfg.level);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.level.as_os_str().is_empty() {
            return bad("level path is required".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if self.network.channels == 0 {
            return bad("network.channels must be at least 1".into());
        }
        self.search
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train.validate().map_err(HarnessError::Config)?;
        self.curriculum
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// The parts of the config that determine results, for the manifest.
    /// Output location, worker count and the iteration budget are left out.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("workers");
            obj.remove("max_iterations");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml_str(
            "level = \"a.xsb\"\nseed = 4\n[search]\nrounds_per_move = 64\n[curriculum]\nboards_per_iteration = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.search.rounds_per_move, 64);
        assert_eq!(cfg.search.cput, 1.25);
        assert_eq!(cfg.curriculum.boards_per_iteration, 8);
        assert_eq!(cfg.curriculum.plateau_window, 5);
        assert_eq!(cfg.train.minibatch, 160);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml_str("levle = \"x\"").is_err());
        let cfg = RunConfig::from_toml_str("level = \"a\"\nworkers = 0").unwrap();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let cfg = RunConfig::from_toml_str("level = \"a\"\n[search]\ncput = -1.0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_err());
    }

    #[test]
    fn snapshot_omits_location() {
        let cfg = RunConfig {
            level: "x.xsb".into(),
            ..RunConfig::default()
        };
        let snap = cfg.snapshot();
        assert!(snap.get("output_dir").is_none());
        assert!(snap.get("workers").is_none());
        assert_eq!(snap["level"], "x.xsb");
    }
}
