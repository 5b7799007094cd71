//! Deterministic mock backend for desk-scale runs and tests.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendDescriptor, BackendId, BackendParams, RawScore, ScoringBackend};
use crate::error::{Error, Result};

const FALLBACK_LO: f64 = -4.605170185988091; // ln(0.01)
#[allow(clippy::excessive_precision)] // frozen high-precision constant
const FALLBACK_HI: f64 = -0.010050335853501441; // ln(0.99)

/// One seeded (prompt, continuation) → log-likelihood entry, as stored in a
/// seed file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSeed {
    pub prompt: String,
    pub continuation: String,
    pub log_likelihood: f64,
}

/// Backend returning seeded log-likelihoods; unseeded pairs fall back to a
/// hash-derived value in [ln 0.01, ln 0.99] so results are always
/// reproducible.
pub struct MockBackend {
    descriptor: BackendDescriptor,
    seeds: HashMap<(String, String), f64>,
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>, params: BackendParams) -> MockBackend {
        MockBackend {
            descriptor: BackendDescriptor {
                backend_id: BackendId::Mock,
                model_id: model_id.into(),
                params,
            },
            seeds: HashMap::new(),
        }
    }

    pub fn with_seeds(
        model_id: impl Into<String>,
        params: BackendParams,
        seeds: impl IntoIterator<Item = MockSeed>,
    ) -> MockBackend {
        let mut backend = MockBackend::new(model_id, params);
        for seed in seeds {
            backend.seed(seed.prompt, seed.continuation, seed.log_likelihood);
        }
        backend
    }

    pub fn seed(
        &mut self,
        prompt: impl Into<String>,
        continuation: impl Into<String>,
        log_likelihood: f64,
    ) {
        self.seeds
            .insert((prompt.into(), continuation.into()), log_likelihood);
    }

    /// Load seeds from a JSON array of [`MockSeed`] records.
    pub fn from_seed_file(
        model_id: impl Into<String>,
        params: BackendParams,
        path: &Path,
    ) -> Result<MockBackend> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let seeds: Vec<MockSeed> =
            serde_json::from_str(&text).map_err(|e| Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        Ok(MockBackend::with_seeds(model_id, params, seeds))
    }

    pub fn seed_count(&self) -> usize {
        self.seeds.len()
    }
}

/// Hash-derived fallback: a pure function of (prompt, continuation).
fn fallback_log_likelihood(prompt: &str, continuation: &str) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(continuation.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let unit = u64::from_be_bytes(bytes) as f64 / u64::MAX as f64;
    FALLBACK_LO + unit * (FALLBACK_HI - FALLBACK_LO)
}

impl ScoringBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score_raw(&self, prompt: &str, continuation: &str) -> Result<RawScore> {
        let key = (prompt.to_string(), continuation.to_string());
        let log_likelihood = self
            .seeds
            .get(&key)
            .copied()
            .unwrap_or_else(|| fallback_log_likelihood(prompt, continuation));
        Ok(RawScore {
            summed_log_likelihood: log_likelihood,
            token_count: continuation.split_whitespace().count().max(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_pairs_return_seeded_values() {
        let mut backend = MockBackend::new("mock-model", BackendParams::default());
        backend.seed("Is it?\nAnswer: ", "yes", (0.8f64).ln());
        backend.seed("Is it?\nAnswer: ", "no", (0.2f64).ln());
        let yes = backend.score_raw("Is it?\nAnswer: ", "yes").unwrap();
        let no = backend.score_raw("Is it?\nAnswer: ", "no").unwrap();
        assert_eq!(yes.summed_log_likelihood, (0.8f64).ln());
        assert_eq!(no.summed_log_likelihood, (0.2f64).ln());
    }

    #[test]
    fn unseeded_pairs_are_deterministic_and_bounded() {
        let backend = MockBackend::new("mock-model", BackendParams::default());
        let a = backend.score_raw("p", "c").unwrap();
        let b = backend.score_raw("p", "c").unwrap();
        assert_eq!(a.summed_log_likelihood, b.summed_log_likelihood);
        assert!(a.summed_log_likelihood >= FALLBACK_LO);
        assert!(a.summed_log_likelihood <= FALLBACK_HI);
        let other = backend.score_raw("p", "different").unwrap();
        assert_ne!(a.summed_log_likelihood, other.summed_log_likelihood);
    }

    #[test]
    fn token_count_is_whitespace_tokens_min_one() {
        let backend = MockBackend::new("mock-model", BackendParams::default());
        assert_eq!(backend.score_raw("p", "yes").unwrap().token_count, 1);
        assert_eq!(
            backend
                .score_raw("p", "need to be very careful dealing with people")
                .unwrap()
                .token_count,
            8
        );
        assert_eq!(backend.score_raw("p", "").unwrap().token_count, 1);
    }

    #[test]
    fn seed_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.json");
        let seeds = vec![MockSeed {
            prompt: "p".into(),
            continuation: "c".into(),
            log_likelihood: -0.75,
        }];
        std::fs::write(&path, serde_json::to_string(&seeds).unwrap()).unwrap();
        let backend =
            MockBackend::from_seed_file("m", BackendParams::default(), &path).unwrap();
        assert_eq!(backend.seed_count(), 1);
        assert_eq!(backend.score_raw("p", "c").unwrap().summed_log_likelihood, -0.75);
    }
}
