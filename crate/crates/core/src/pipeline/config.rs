use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::analytics::{CollectionWindow, DEFAULT_PER_PROVIDER_CAP};
use crate::intel::{SearchEngine, BING_ENDPOINT, GOOGLE_ENDPOINT, VIRUSTOTAL_ENDPOINT};
use crate::seo::SeoHeuristicConfig;

/// Tag patterns that mark a MalPDF; a trailing `*` matches any suffix.
pub const MALPDF_TAGS: [&str; 5] = ["js-embedded", "file-embedded", "exploit", "cve-*", "launch-action"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// 0 = one worker per core.
    pub workers: usize,
    pub paths: PathsConfig,
    pub window: CollectionWindow,
    pub seo: SeoHeuristicConfig,
    pub dbscan: DbscanConfig,
    pub sampler: SamplerConfig,
    pub ingest: IngestConfig,
    pub clients: ClientsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            workers: 0,
            paths: PathsConfig::default(),
            window: CollectionWindow::default(),
            seo: SeoHeuristicConfig::default(),
            dbscan: DbscanConfig::default(),
            sampler: SamplerConfig::default(),
            ingest: IngestConfig::default(),
            clients: ClientsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Metadata sidecar for `ingest` (tags, first_seen, provider, language).
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        DbscanConfig { eps: 35.0, min_pts: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// URL-reputation lookup budget.
    pub url_budget: usize,
    pub per_provider_cap: usize,
    pub validation_per_cluster: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            url_budget: 20_000,
            per_provider_cap: DEFAULT_PER_PROVIDER_CAP,
            validation_per_cluster: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub excluded_tags: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            excluded_tags: MALPDF_TAGS.iter().map(|t| t.to_string()).collect(),
        }
    }
}

impl IngestConfig {
    pub fn is_excluded(&self, tag: &str) -> bool {
        let tag = tag.to_ascii_lowercase();
        self.excluded_tags.iter().any(|p| match p.strip_suffix('*') {
            Some(prefix) => tag.starts_with(&prefix.to_ascii_lowercase()),
            None => tag == p.to_ascii_lowercase(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    /// Live network access; otherwise a replay log is required.
    pub live: bool,
    pub replay_log: Option<PathBuf>,
    /// Live mode only: append exchanges to this log.
    pub record_log: Option<PathBuf>,
    pub rate_limit_ms: u64,
    pub timeout_secs: u64,
    pub max_body_bytes: u64,
    pub engines: Vec<SearchEngine>,
    pub virustotal: ApiConfig,
    pub google: ApiConfig,
    pub bing: ApiConfig,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        ClientsConfig {
            live: false,
            replay_log: None,
            record_log: None,
            rate_limit_ms: 1_000,
            timeout_secs: 30,
            max_body_bytes: 64 << 20,
            engines: vec![SearchEngine::Google, SearchEngine::Bing],
            virustotal: ApiConfig::new(VIRUSTOTAL_ENDPOINT, "VT_API_KEY"),
            google: ApiConfig::new(GOOGLE_ENDPOINT, "GOOGLE_API_KEY"),
            bing: ApiConfig::new(BING_ENDPOINT, "BING_API_KEY"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub endpoint: String,
    /// Environment variable holding the key; keys never live in config.
    pub api_key_env: String,
    /// Google programmable search engine id.
    pub cx: String,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig::new("", "")
    }
}

impl ApiConfig {
    fn new(endpoint: &str, env: &str) -> Self {
        ApiConfig {
            endpoint: endpoint.into(),
            api_key_env: env.into(),
            cx: String::new(),
        }
    }

    /// Key from the environment; empty when unset (fine for replay).
    pub fn api_key(&self) -> String {
        std::env::var(&self.api_key_env).unwrap_or_default()
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.seo.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.dbscan.eps > 0.0 && self.dbscan.eps.is_finite()) || self.dbscan.min_pts == 0 {
            return Err(PipelineError::Config(format!(
                "dbscan needs eps > 0 and min_pts >= 1, got {} / {}",
                self.dbscan.eps, self.dbscan.min_pts
            )));
        }
        if self.window.start > self.window.end {
            return Err(PipelineError::Config(format!("window start after end: {}", self.window)));
        }
        if self.sampler.validation_per_cluster == 0 || self.sampler.per_provider_cap == 0 {
            return Err(PipelineError::Config("sampler caps must be at least 1".into()));
        }
        for path in [&self.paths.input, &self.paths.sidecar, &self.clients.replay_log].into_iter().flatten() {
            if !path.exists() {
                return Err(PipelineError::MissingInput(path.display().to_string()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
