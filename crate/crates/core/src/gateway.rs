//! Experiment configuration shared by the command line and the review service.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::BackendConfig;
use crate::budget::TokenCounter;
use crate::eval::DEFAULT_SUPPORT_THRESHOLD;
use crate::runner::{RunStore, DEFAULT_PARALLELISM, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_path: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub models: Vec<BackendConfig>,
    #[serde(default)]
    pub counter: TokenCounter,
    #[serde(default = "default_threshold")]
    pub support_threshold: usize,
    /// Directory holding one subdirectory per run.
    pub store_root: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_threshold() -> usize {
    DEFAULT_SUPPORT_THRESHOLD
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.into(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_json(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            config.corpus_path = base.join(&config.corpus_path);
            config.store_root = base.join(&config.store_root);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if let TokenCounter::Approximate { chars_per_token } = self.counter {
            if chars_per_token.is_nan() || chars_per_token <= 0.0 {
                return Err(ConfigError::Invalid("chars_per_token must be positive".into()));
            }
        }
        let mut names = HashSet::new();
        for m in &self.models {
            m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !names.insert(m.profile.name.as_str()) {
                return Err(ConfigError::Invalid(format!("model {} listed twice", m.profile.name)));
            }
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Option<&BackendConfig> {
        self.models.iter().find(|m| m.profile.name == name)
    }

    /// Run directories under `store_root`, sorted by name.
    pub fn runs(&self) -> std::io::Result<Vec<RunStore>> {
        let mut dirs: Vec<PathBuf> = Vec::new();
        if !self.store_root.exists() {
            return Ok(Vec::new());
        }
        for entry in std::fs::read_dir(&self.store_root)? {
            let path = entry?.path();
            if path.join(MANIFEST_FILE).is_file() {
                dirs.push(path);
            }
        }
        dirs.sort();
        Ok(dirs.into_iter().map(RunStore::new).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"corpus_path":"fixtures/annotations.csv","seed":7,"store_root":"runs"}"#;

    #[test]
    fn defaults_apply() {
        let c = ExperimentConfig::from_json(MINIMAL, "inline").unwrap();
        assert_eq!(c.support_threshold, 100);
        assert_eq!(c.parallelism, DEFAULT_PARALLELISM);
        assert_eq!(c.counter, TokenCounter::default());
        assert!(c.models.is_empty());
    }

    #[test]
    fn models_by_name_or_profile() {
        let text = r#"{"corpus_path":"c.csv","seed":1,"store_root":"r","models":[
            {"profile":"flan-ul2","base_url":"http://localhost:8000/v1"},
            {"profile":{"name":"tiny","context_limit":512,"temperature":0.0},"base_url":"http://localhost:9/v1"}]}"#;
        let c = ExperimentConfig::from_json(text, "inline").unwrap();
        assert_eq!(c.model("flan-ul2").unwrap().profile.context_limit, 2048);
        assert_eq!(c.model("tiny").unwrap().profile.max_output, 200);
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = r#"{"corpus_path":"c","seed":1,"store_root":"r","colour":"blue"}"#;
        assert!(matches!(
            ExperimentConfig::from_json(unknown, "x"),
            Err(ConfigError::Parse { .. })
        ));
        let zero = r#"{"corpus_path":"c","seed":1,"store_root":"r","parallelism":0}"#;
        assert!(matches!(
            ExperimentConfig::from_json(zero, "x"),
            Err(ConfigError::Invalid(_))
        ));
        let dup = r#"{"corpus_path":"c","seed":1,"store_root":"r","models":[
            {"profile":"flan-ul2","base_url":"http://a/v1"},{"profile":"flan-ul2","base_url":"http://b/v1"}]}"#;
        assert!(matches!(
            ExperimentConfig::from_json(dup, "x"),
            Err(ConfigError::Invalid(_))
        ));
        let url =
            r#"{"corpus_path":"c","seed":1,"store_root":"r","models":[{"profile":"flan-ul2","base_url":"ftp://a"}]}"#;
        assert!(matches!(
            ExperimentConfig::from_json(url, "x"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("experiment.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.store_root, dir.path().join("runs"));
        assert!(c.runs().unwrap().is_empty());
    }
}
