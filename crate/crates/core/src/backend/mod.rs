//! Pluggable scoring backends and the batch/caching layer above them.
//!
//! Backends implement [`ScoringBackend`] and are registered by name;
//! selection happens at runtime via config or CLI. All probability
//! arithmetic downstream receives log-space values.

mod cache;
mod fixture;
mod mock;
mod remote;

pub use cache::{CacheStats, ScoreCache};
pub use fixture::{fixture_key, write_fixture, FixtureServer};
pub use mock::{MockBackend, MockSeed};
pub use remote::RemoteBackend;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompts::ScoringRequest;

/// Default cap on concurrent in-flight backend requests.
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    RemoteScoring,
    Mock,
}

impl BackendId {
    pub fn name(&self) -> &'static str {
        match self {
            BackendId::RemoteScoring => "remote",
            BackendId::Mock => "mock",
        }
    }
}

/// Scoring parameters that travel with a backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendParams {
    /// Divide the summed continuation log-probability by its token count.
    pub length_normalize: bool,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for BackendParams {
    fn default() -> Self {
        BackendParams {
            length_normalize: false,
            timeout_ms: 30_000,
            max_retries: 3,
            retry_backoff_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: BackendId,
    pub model_id: String,
    pub params: BackendParams,
}

/// What a backend returns for one (prompt, continuation) pair: the summed
/// continuation log-probability and how many tokens the span covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawScore {
    pub summed_log_likelihood: f64,
    pub token_count: usize,
}

/// One cached model score. `log_likelihood` already reflects the
/// length-normalization choice recorded in the request key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub request_key: String,
    pub log_likelihood: f64,
    pub retrieved_at: DateTime<Utc>,
    pub token_count: usize,
}

pub trait ScoringBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Raw summed continuation log-probability; length normalization is
    /// applied by the caller so the convention is recorded exactly once.
    fn score_raw(&self, prompt: &str, continuation: &str) -> Result<RawScore>;
}

/// Stable identity of a scoring request: a pure function of the backend,
/// model, texts, and the value-affecting scoring params.
pub fn request_key(descriptor: &BackendDescriptor, prompt: &str, continuation: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(descriptor.backend_id.name().as_bytes());
    hasher.update([0x1f]);
    hasher.update(descriptor.model_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(continuation.as_bytes());
    hasher.update([0x1f]);
    hasher.update([descriptor.params.length_normalize as u8]);
    hex::encode(hasher.finalize())
}

/// Score one request, bypassing any cache.
pub fn score(request: &ScoringRequest, backend: &dyn ScoringBackend) -> Result<ScoreRecord> {
    let descriptor = backend.descriptor();
    let raw = backend.score_raw(&request.rendered.text, &request.continuation_text)?;
    Ok(finish_record(descriptor, request, raw))
}

fn finish_record(
    descriptor: &BackendDescriptor,
    request: &ScoringRequest,
    raw: RawScore,
) -> ScoreRecord {
    let token_count = raw.token_count.max(1);
    let log_likelihood = if descriptor.params.length_normalize {
        raw.summed_log_likelihood / token_count as f64
    } else {
        raw.summed_log_likelihood
    };
    ScoreRecord {
        request_key: request_key(descriptor, &request.rendered.text, &request.continuation_text),
        log_likelihood,
        retrieved_at: Utc::now(),
        token_count,
    }
}

/// Score a batch through the cache. Hits are served without backend
/// traffic; misses are deduplicated by key, fetched with up to
/// `concurrency` in-flight requests, and written through. Output order
/// equals input order; per-request failures are reported in place rather
/// than dropping the batch.
pub fn score_batch(
    requests: &[ScoringRequest],
    backend: &dyn ScoringBackend,
    cache: &ScoreCache,
    concurrency: usize,
) -> Vec<Result<ScoreRecord>> {
    let descriptor = backend.descriptor();
    let keys: Vec<String> = requests
        .iter()
        .map(|r| request_key(descriptor, &r.rendered.text, &r.continuation_text))
        .collect();

    let mut slots: Vec<Option<Result<ScoreRecord>>> = Vec::with_capacity(requests.len());
    let mut miss_indices: HashMap<String, Vec<usize>> = HashMap::new();
    let mut miss_order: Vec<usize> = Vec::new(); // first request index per unique key
    let mut hits = 0u64;
    for (i, key) in keys.iter().enumerate() {
        if let Some(record) = cache.get(key) {
            slots.push(Some(Ok(record)));
            hits += 1;
        } else {
            slots.push(None);
            let entry = miss_indices.entry(key.clone()).or_default();
            if entry.is_empty() {
                miss_order.push(i);
            }
            entry.push(i);
        }
    }
    cache.record_hits(hits);

    if !miss_order.is_empty() {
        let fetched: Mutex<Vec<Option<Result<ScoreRecord>>>> =
            Mutex::new((0..miss_order.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = concurrency.max(1).min(miss_order.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = next.fetch_add(1, Ordering::Relaxed);
                    if slot >= miss_order.len() {
                        break;
                    }
                    let index = miss_order[slot];
                    let result = score(&requests[index], backend).map_err(|e| {
                        Error::RequestFailed {
                            request_key: keys[index].clone(),
                            source: Box::new(e),
                        }
                    });
                    fetched.lock().expect("batch lock")[slot] = Some(result);
                });
            }
        });
        cache.record_backend_calls(miss_order.len() as u64);

        let fetched = fetched.into_inner().expect("batch lock");
        for (slot, first_index) in miss_order.iter().enumerate() {
            let result = fetched[slot]
                .as_ref()
                .expect("every miss slot is filled");
            if let Ok(record) = result {
                if let Err(e) = cache.put(record) {
                    // surface the write failure on every request for this key
                    for &i in &miss_indices[&keys[*first_index]] {
                        slots[i] = Some(Err(e.duplicate()));
                    }
                    continue;
                }
            }
            for &i in &miss_indices[&keys[*first_index]] {
                slots[i] = Some(match result {
                    Ok(record) => Ok(record.clone()),
                    Err(e) => Err(e.duplicate()),
                });
            }
        }
    }

    slots
        .into_iter()
        .map(|slot| slot.expect("every request slot is filled"))
        .collect()
}

/// Collapse batch outcomes into all-or-nothing, naming the failed keys.
pub fn collect_batch(outcomes: Vec<Result<ScoreRecord>>) -> Result<Vec<ScoreRecord>> {
    let total = outcomes.len();
    let mut records = Vec::with_capacity(total);
    let mut failures: Vec<String> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if failures.is_empty() {
        Ok(records)
    } else {
        Err(Error::BatchFailed {
            failed: failures.len(),
            total,
            detail: failures.join("; "),
        })
    }
}

// ---------------------------------------------------------------------------
// Backend registry: implementations registered by name, selected at runtime.

/// Everything needed to construct any registered backend.
#[derive(Debug, Clone, Default)]
pub struct BackendConfig {
    pub backend: String,
    pub model_id: String,
    pub params: BackendParams,
    pub endpoint: Option<String>,
    pub credential: Option<String>,
    pub seed_file: Option<PathBuf>,
}

pub type BackendFactory = fn(&BackendConfig) -> Result<Arc<dyn ScoringBackend>>;

fn make_mock(config: &BackendConfig) -> Result<Arc<dyn ScoringBackend>> {
    let backend = match &config.seed_file {
        Some(path) => MockBackend::from_seed_file(&config.model_id, config.params, path)?,
        None => MockBackend::new(&config.model_id, config.params),
    };
    Ok(Arc::new(backend))
}

fn make_remote(config: &BackendConfig) -> Result<Arc<dyn ScoringBackend>> {
    let endpoint = config.endpoint.clone().ok_or_else(|| Error::SchemaViolation {
        location: "config.endpoint".into(),
        detail: "remote backend requires an endpoint URL".into(),
    })?;
    Ok(Arc::new(RemoteBackend::new(
        &config.model_id,
        config.params,
        endpoint,
        config.credential.clone(),
    )))
}

static BACKENDS: Lazy<Vec<(&'static str, BackendFactory)>> =
    Lazy::new(|| vec![("mock", make_mock), ("remote", make_remote)]);

pub fn backend_names() -> Vec<&'static str> {
    BACKENDS.iter().map(|(name, _)| *name).collect()
}

/// Construct the backend registered under `config.backend`.
pub fn create_backend(config: &BackendConfig) -> Result<Arc<dyn ScoringBackend>> {
    let factory = BACKENDS
        .iter()
        .find(|(name, _)| *name == config.backend)
        .map(|(_, factory)| factory)
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "backend",
            name: config.backend.clone(),
            known: backend_names().join(", "),
        })?;
    factory(config)
}
