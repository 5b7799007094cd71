//! Run configuration: flags > config file > environment, with the
//! effective result dumped into the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use value_lens::backend::{BackendConfig, BackendParams, DEFAULT_CONCURRENCY};
use value_lens::error::{Error, Result};
use value_lens::scoring::DEFAULT_NEUTRAL_CONTEXTS;

pub const DEFAULT_ENDPOINT_ENV: &str = "VALUE_LENS_ENDPOINT";
pub const DEFAULT_CREDENTIAL_ENV: &str = "VALUE_LENS_CREDENTIAL";
pub const DEFAULT_CACHE_FILE: &str = "value-lens-cache.jsonl";

/// Config-file form: every field optional so files can be partial.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub catalog: Option<PathBuf>,
    pub backend: Option<String>,
    pub model: Option<String>,
    pub mode: Option<String>,
    pub template: Option<String>,
    pub prior_file: Option<PathBuf>,
    pub estimate_priors: Option<bool>,
    pub items: Option<Vec<String>>,
    pub countries: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub length_normalize: Option<bool>,
    pub cache: Option<PathBuf>,
    pub mock_seeds: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub endpoint_env: Option<String>,
    pub credential_env: Option<String>,
    pub neutral_contexts: Option<Vec<String>>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::SchemaViolation {
            location: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub catalog: PathBuf,
    pub backend: String,
    pub model: String,
    pub mode: String,
    pub template: Option<String>,
    pub prior_file: Option<PathBuf>,
    pub estimate_priors: bool,
    pub items: Option<Vec<String>>,
    pub countries: Option<Vec<String>>,
    pub out_dir: PathBuf,
    pub concurrency: usize,
    pub length_normalize: bool,
    pub cache: PathBuf,
    pub mock_seeds: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub endpoint_env: String,
    pub credential_env: String,
    pub neutral_contexts: Vec<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

/// Flag-level options shared by the scoring commands. `None` means "not
/// given on the command line".
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub catalog: Option<PathBuf>,
    pub backend: Option<String>,
    pub model: Option<String>,
    pub mode: Option<String>,
    pub template: Option<String>,
    pub prior_file: Option<PathBuf>,
    pub estimate_priors: bool,
    pub items: Option<Vec<String>>,
    pub countries: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub length_normalize: bool,
    pub cache: Option<PathBuf>,
    pub mock_seeds: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub endpoint_env: Option<String>,
    pub credential_env: Option<String>,
    pub neutral_contexts: Option<Vec<String>>,
}

pub fn resolve(overrides: CliOverrides, file: ConfigFile) -> Result<RunConfig> {
    let endpoint_env = overrides
        .endpoint_env
        .or(file.endpoint_env)
        .unwrap_or_else(|| DEFAULT_ENDPOINT_ENV.to_string());
    let credential_env = overrides
        .credential_env
        .or(file.credential_env)
        .unwrap_or_else(|| DEFAULT_CREDENTIAL_ENV.to_string());
    let endpoint = overrides
        .endpoint
        .or(file.endpoint)
        .or_else(|| std::env::var(&endpoint_env).ok());

    let catalog = overrides
        .catalog
        .or(file.catalog)
        .ok_or_else(|| Error::SchemaViolation {
            location: "config".into(),
            detail: "a catalog path is required (--catalog or config file)".into(),
        })?;

    Ok(RunConfig {
        catalog,
        backend: overrides
            .backend
            .or(file.backend)
            .unwrap_or_else(|| "mock".to_string()),
        model: overrides
            .model
            .or(file.model)
            .unwrap_or_else(|| "mock-model".to_string()),
        mode: overrides
            .mode
            .or(file.mode)
            .unwrap_or_else(|| "sets".to_string()),
        template: overrides.template.or(file.template),
        prior_file: overrides.prior_file.or(file.prior_file),
        estimate_priors: overrides.estimate_priors || file.estimate_priors.unwrap_or(false),
        items: overrides.items.or(file.items),
        countries: overrides.countries.or(file.countries),
        out_dir: overrides
            .out_dir
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        concurrency: overrides
            .concurrency
            .or(file.concurrency)
            .unwrap_or(DEFAULT_CONCURRENCY),
        length_normalize: overrides.length_normalize || file.length_normalize.unwrap_or(false),
        cache: overrides
            .cache
            .or(file.cache)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_FILE)),
        mock_seeds: overrides.mock_seeds.or(file.mock_seeds),
        endpoint,
        endpoint_env,
        credential_env,
        neutral_contexts: overrides
            .neutral_contexts
            .or(file.neutral_contexts)
            .unwrap_or_else(|| {
                DEFAULT_NEUTRAL_CONTEXTS
                    .iter()
                    .map(|c| c.to_string())
                    .collect()
            }),
        timeout_ms: file.timeout_ms.unwrap_or(30_000),
        max_retries: file.max_retries.unwrap_or(3),
        retry_backoff_ms: file.retry_backoff_ms.unwrap_or(1_000),
    })
}

impl RunConfig {
    pub fn credential(&self) -> Option<String> {
        std::env::var(&self.credential_env).ok()
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            backend: self.backend.clone(),
            model_id: self.model.clone(),
            params: BackendParams {
                length_normalize: self.length_normalize,
                timeout_ms: self.timeout_ms,
                max_retries: self.max_retries,
                retry_backoff_ms: self.retry_backoff_ms,
            },
            endpoint: self.endpoint.clone(),
            credential: self.credential(),
            seed_file: self.mock_seeds.clone(),
        }
    }

    /// The effective config as recorded in the manifest. Credentials never
    /// appear; only the env-var name does.
    pub fn manifest_view(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
