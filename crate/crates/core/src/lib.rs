//! Distributional value benchmarking for language models.
//!
//! The pipeline turns survey items into paraphrase prompt sets, extracts
//! per-anchor likelihoods from a pluggable scoring backend, debiases them
//! against the model's anchor priors, and scores the resulting
//! distributions against national reference distributions and a two-factor
//! cultural map.
//!
//! Interchangeable pieces — pipeline versions, scoring backends, and
//! divergence metrics — each sit behind a trait and are registered by
//! name, so runs select them via config or CLI:
//!
//! - pipeline modes: [`scoring::strategy`] (`naive`, `sets`, `sets-bayes`)
//! - backends: [`backend::create_backend`] (`mock`, `remote`)
//! - metrics: [`divergence::lookup_metric`] (`l1`, `kl`)

pub mod backend;
pub mod catalog;
pub mod cultural_map;
pub mod distribution;
pub mod divergence;
pub mod error;
pub mod prompts;
pub mod report;
pub mod scoring;

pub use distribution::Distribution;
pub use error::{Error, Result};

pub mod hash {
    //! Content hashing used for manifests and cache keys.

    use sha2::{Digest, Sha256};
    use std::path::Path;

    use crate::error::{Error, Result};

    pub fn sha256_hex(bytes: &[u8]) -> String {
        hex::encode(Sha256::digest(bytes))
    }

    pub fn file_sha256(path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }
}
