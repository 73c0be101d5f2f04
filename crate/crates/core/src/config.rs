//! `fpm.toml` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudicator::{ChatClient, HttpClient, MockClient, RetryPolicy};
use crate::depgraph::EdgeLabel;
use crate::ingest::CriteriaMode;
use crate::reportgen::DecodeParams;
use crate::slicer::{Direction, SliceOptions, DEFAULT_LABELS};

pub const CONFIG_FILE: &str = "fpm.toml";
pub const KEY_ENV: &str = "FPM_LLM_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config `{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Mock,
    Http,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Responses used for every warning, cycled over sample indices.
    pub script: Vec<String>,
    /// Per-warning scripts keyed by warning id.
    pub responses: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: Provider,
    pub endpoint: String,
    pub model: String,
    pub n_samples: u32,
    pub temperature: f64,
    pub max_concurrency: usize,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub mock: MockConfig,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let d = DecodeParams::default();
        LlmConfig {
            provider: Provider::Mock,
            endpoint: String::new(),
            model: String::new(),
            n_samples: d.n_samples,
            temperature: d.temperature,
            max_concurrency: 12,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 500,
            mock: MockConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    pub direction: Direction,
    pub labels: Vec<EdgeLabel>,
    pub criteria_mode: CriteriaMode,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig { direction: Direction::Backward, labels: DEFAULT_LABELS.to_vec(), criteria_mode: CriteriaMode::FullTrace }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesConfig {
    /// Directory of `*.toml` templates overriding the shipped ones;
    /// relative paths are taken from the config file's directory.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub llm: LlmConfig,
    pub slice: SliceConfig,
    pub templates: TemplatesConfig,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if let Some(dir) = cfg.templates.dir.as_mut().filter(|d| d.is_relative()) {
            *dir = path.parent().unwrap_or(Path::new("")).join(&*dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.llm;
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if l.n_samples == 0 {
            return bad("llm.n_samples must be at least 1");
        }
        if l.max_concurrency == 0 {
            return bad("llm.max_concurrency must be at least 1");
        }
        if !(0.0..=2.0).contains(&l.temperature) {
            return bad("llm.temperature must lie in [0, 2]");
        }
        if l.retries == 0 {
            return bad("llm.retries must be at least 1");
        }
        if l.provider == Provider::Http && (l.endpoint.is_empty() || l.model.is_empty()) {
            return bad("llm.endpoint and llm.model are required for the http provider");
        }
        if self.slice.labels.is_empty() {
            return bad("slice.labels must not be empty");
        }
        Ok(())
    }

    pub fn decode(&self) -> DecodeParams {
        DecodeParams { n_samples: self.llm.n_samples, temperature: self.llm.temperature }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { attempts: self.llm.retries, base_delay: Duration::from_millis(self.llm.backoff_ms) }
    }

    pub fn slice_options(&self) -> SliceOptions {
        SliceOptions { direction: self.slice.direction, labels: self.slice.labels.clone() }
    }

    /// The configured client; the API key comes from `FPM_LLM_KEY`.
    pub fn client(&self) -> Box<dyn ChatClient> {
        let l = &self.llm;
        match l.provider {
            Provider::Http => {
                let key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
                Box::new(HttpClient::new(&l.endpoint, &l.model, key, Duration::from_secs(l.timeout_secs)))
            }
            Provider::Mock => {
                // Keys are matched against the rendered report, which quotes the id in backticks.
                let keyed = l.mock.responses.iter().map(|(k, v)| (format!("`{k}`"), v.clone())).collect();
                Box::new(MockClient::keyed(keyed, l.mock.script.clone()))
            }
        }
    }
}
