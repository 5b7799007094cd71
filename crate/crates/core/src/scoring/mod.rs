//! From raw anchor log-likelihoods to item-level distributions: softmax
//! normalization, paraphrase aggregation, anchor-prior estimation, and
//! Bayesian correction.

mod strategy;

pub use strategy::{
    select_mode_paraphrases, strategy, strategy_for_mode, strategy_names, PipelineMode,
    PipelineStrategy,
};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{collect_batch, score_batch, ScoreCache, ScoreRecord, ScoringBackend};
use crate::catalog::{collapse_distribution, AnchorSet, SurveyItem};
use crate::distribution::Distribution;
use crate::divergence::l1_distance;
use crate::error::{Error, Result};
use crate::prompts::{render_requests_for, PromptTemplate, RenderedPrompt, ScoringRequest};

/// Floor applied to prior entries before renormalization, so correction
/// never divides by a vanishing prior.
pub const PRIOR_FLOOR: f64 = 1e-4;

/// Content-free frames used to estimate anchor priors.
pub const DEFAULT_NEUTRAL_CONTEXTS: [&str; 3] = ["Answer: ", "The answer is ", "Response: "];

pub const PRIORS_SCHEMA: &str = "value-lens-priors/1";

/// One anchor's log-likelihood within a single paraphrase's score set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorScore {
    pub anchor_id: String,
    pub log_likelihood: f64,
}

impl AnchorScore {
    pub fn new(anchor_id: impl Into<String>, log_likelihood: f64) -> AnchorScore {
        AnchorScore {
            anchor_id: anchor_id.into(),
            log_likelihood,
        }
    }
}

/// The model's baseline anchor distribution under neutral contexts, with
/// the context hashes that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDistribution {
    pub distribution: Distribution,
    /// Hashes of the neutral-context prompts used.
    pub provenance: Vec<String>,
}

/// The aggregated, optionally corrected distribution for one item under
/// one pipeline mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: String,
    pub mode: PipelineMode,
    /// Fine-grained (pre-collapse) distribution per scored paraphrase.
    pub per_paraphrase: Vec<Distribution>,
    /// Final distribution: aggregated, corrected in sets-bayes mode, then
    /// collapsed when the item has a collapse spec.
    pub aggregate: Distribution,
    pub prior_used: Option<PriorDistribution>,
}

/// Numerically stable softmax over log-likelihoods.
pub fn softmax(log_likelihoods: &[f64]) -> Vec<f64> {
    let max = log_likelihoods
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_likelihoods.iter().map(|ll| (ll - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax-normalize one paraphrase's anchor scores into a distribution
/// ordered like the anchor set.
pub fn normalize(anchor_set: &AnchorSet, scores: &[AnchorScore]) -> Result<Distribution> {
    let mut by_anchor: HashMap<&str, f64> = HashMap::with_capacity(scores.len());
    for score in scores {
        if anchor_set.anchor(&score.anchor_id).is_none() {
            return Err(Error::AnchorSetMismatch {
                detail: format!("score for unknown anchor {:?}", score.anchor_id),
            });
        }
        if by_anchor
            .insert(score.anchor_id.as_str(), score.log_likelihood)
            .is_some()
        {
            return Err(Error::DuplicateAnchorScore {
                anchor_id: score.anchor_id.clone(),
            });
        }
    }
    let mut log_likelihoods = Vec::with_capacity(anchor_set.len());
    for anchor in &anchor_set.anchors {
        let ll = by_anchor
            .get(anchor.id.as_str())
            .ok_or_else(|| Error::MissingAnchorScore {
                anchor_id: anchor.id.clone(),
            })?;
        log_likelihoods.push(*ll);
    }
    Distribution::new(anchor_set.ids(), softmax(&log_likelihoods))
}

/// Elementwise arithmetic mean of distributions over a shared anchor set,
/// renormalized to absorb accumulated rounding.
pub fn aggregate(distributions: &[Distribution]) -> Result<Distribution> {
    let weights = vec![1.0; distributions.len()];
    aggregate_weighted(distributions, &weights)
}

/// Weighted mean in probability space. Uniform weights reproduce
/// [`aggregate`]; per-paraphrase weights come from the catalog.
pub fn aggregate_weighted(
    distributions: &[Distribution],
    weights: &[f64],
) -> Result<Distribution> {
    let Some(first) = distributions.first() else {
        return Err(Error::AnchorSetMismatch {
            detail: "cannot aggregate zero distributions".into(),
        });
    };
    if weights.len() != distributions.len() {
        return Err(Error::AnchorSetMismatch {
            detail: format!(
                "{} weights for {} distributions",
                weights.len(),
                distributions.len()
            ),
        });
    }
    for dist in &distributions[1..] {
        first.check_same_anchors(dist)?;
    }
    let weight_sum: f64 = weights.iter().sum();
    let mut mean = vec![0.0; first.len()];
    for (dist, &weight) in distributions.iter().zip(weights) {
        for (slot, p) in mean.iter_mut().zip(dist.probs()) {
            *slot += weight * p;
        }
    }
    for slot in &mut mean {
        *slot /= weight_sum;
    }
    Distribution::from_weights(first.anchor_ids().to_vec(), mean)
}

/// Floor entries at `floor` and renormalize such that no entry ends below
/// the floor: floored entries are pinned, the rest rescaled.
fn floor_and_renormalize(probs: &mut [f64], floor: f64) {
    let n = probs.len();
    let mut pinned = vec![false; n];
    loop {
        let pinned_count = pinned.iter().filter(|&&p| p).count();
        let pinned_mass = floor * pinned_count as f64;
        let unpinned_sum: f64 = probs
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(value, _)| *value)
            .sum();
        let scale = (1.0 - pinned_mass) / unpinned_sum;
        let mut changed = false;
        for i in 0..n {
            if !pinned[i] && probs[i] * scale < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            for i in 0..n {
                probs[i] = if pinned[i] { floor } else { probs[i] * scale };
            }
            return;
        }
    }
}

fn context_hash(context: &str) -> String {
    hex::encode(Sha256::digest(context.as_bytes()))
}

/// Estimate the model's baseline anchor preference from neutral contexts:
/// score every anchor under each context, normalize per context, average,
/// then floor and renormalize.
pub fn estimate_priors(
    anchor_set: &AnchorSet,
    neutral_contexts: &[String],
    backend: &dyn ScoringBackend,
    cache: &ScoreCache,
    concurrency: usize,
) -> Result<PriorDistribution> {
    if neutral_contexts.is_empty() {
        return Err(Error::SchemaViolation {
            location: "neutral_contexts".into(),
            detail: "at least one neutral context is required".into(),
        });
    }
    let mut requests = Vec::with_capacity(neutral_contexts.len() * anchor_set.len());
    for (index, context) in neutral_contexts.iter().enumerate() {
        for anchor in &anchor_set.anchors {
            requests.push(ScoringRequest {
                rendered: RenderedPrompt {
                    item_id: "anchor-prior".into(),
                    paraphrase_index: index,
                    text: context.clone(),
                },
                anchor_id: anchor.id.clone(),
                continuation_text: anchor.text.clone(),
            });
        }
    }
    let records = collect_batch(score_batch(&requests, backend, cache, concurrency))?;
    let per_context = per_chunk_distributions(anchor_set, &requests, &records)?;
    let averaged = aggregate(&per_context)?;

    let mut probs = averaged.probs().to_vec();
    floor_and_renormalize(&mut probs, PRIOR_FLOOR);
    let distribution = Distribution::new(averaged.anchor_ids().to_vec(), probs)?;
    Ok(PriorDistribution {
        distribution,
        provenance: neutral_contexts.iter().map(|c| context_hash(c)).collect(),
    })
}

/// Divide observed mass by prior mass and renormalize.
pub fn bayes_correct(observed: &Distribution, prior: &PriorDistribution) -> Result<Distribution> {
    observed.check_same_anchors(&prior.distribution)?;
    let mut weights = Vec::with_capacity(observed.len());
    for (p_observed, p_prior) in observed.probs().iter().zip(prior.distribution.probs()) {
        if *p_prior <= 0.0 {
            return Err(Error::InvalidDistribution {
                detail: "prior entries must be strictly positive".into(),
            });
        }
        weights.push(p_observed / p_prior);
    }
    Distribution::from_weights(observed.anchor_ids().to_vec(), weights)
}

/// Split batch records back into per-paraphrase (or per-context) chunks and
/// normalize each chunk.
fn per_chunk_distributions(
    anchor_set: &AnchorSet,
    requests: &[ScoringRequest],
    records: &[ScoreRecord],
) -> Result<Vec<Distribution>> {
    let chunk = anchor_set.len();
    debug_assert_eq!(requests.len(), records.len());
    requests
        .chunks(chunk)
        .zip(records.chunks(chunk))
        .map(|(request_chunk, record_chunk)| {
            let scores: Vec<AnchorScore> = request_chunk
                .iter()
                .zip(record_chunk)
                .map(|(request, record)| {
                    AnchorScore::new(request.anchor_id.clone(), record.log_likelihood)
                })
                .collect();
            normalize(anchor_set, &scores)
        })
        .collect()
}

fn selected_weights(item: &SurveyItem, indices: &[usize]) -> Vec<f64> {
    match &item.paraphrase_weights {
        Some(weights) => indices
            .iter()
            .map(|&i| weights.get(i).copied().unwrap_or(1.0))
            .collect(),
        None => vec![1.0; indices.len()],
    }
}

/// Run the full per-item pipeline for one mode: select paraphrases, render,
/// score, normalize, aggregate, correct (sets-bayes), then collapse.
pub fn run_item(
    item: &SurveyItem,
    mode: PipelineMode,
    template: &PromptTemplate,
    backend: &dyn ScoringBackend,
    cache: &ScoreCache,
    prior: Option<&PriorDistribution>,
    concurrency: usize,
) -> Result<ItemResult> {
    let strategy = strategy_for_mode(mode);
    if strategy.requires_prior() != prior.is_some() {
        return Err(Error::for_item(
            &item.id,
            match prior {
                None => Error::PriorRequired {
                    mode: mode.name().into(),
                },
                Some(_) => Error::SchemaViolation {
                    location: format!("items[{}]", item.id),
                    detail: format!("mode {mode} does not take a prior"),
                },
            },
        ));
    }
    let wrap = |e: Error| Error::for_item(&item.id, e);

    let anchor_set = item.anchor_set();
    let indices = strategy.paraphrase_indices(item);
    let requests =
        render_requests_for(item, &anchor_set, template, &indices).map_err(wrap)?;
    let records =
        collect_batch(score_batch(&requests, backend, cache, concurrency)).map_err(wrap)?;
    let per_paraphrase = per_chunk_distributions(&anchor_set, &requests, &records).map_err(wrap)?;

    let weights = selected_weights(item, &indices);
    let averaged = aggregate_weighted(&per_paraphrase, &weights).map_err(wrap)?;
    let corrected = strategy.correct(&averaged, prior).map_err(wrap)?;
    let final_dist = match &item.collapse {
        Some(spec) => collapse_distribution(&corrected, spec).map_err(wrap)?,
        None => corrected,
    };

    Ok(ItemResult {
        item_id: item.id.clone(),
        mode,
        per_paraphrase,
        aggregate: final_dist,
        prior_used: prior.cloned(),
    })
}

/// Both sides of an irrelevant-alternatives check, restricted to the
/// anchors the two runs share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IIAReport {
    pub item_id: String,
    pub removed_anchor: String,
    pub shared_anchor_ids: Vec<String>,
    /// Full-set aggregate renormalized over the shared anchors.
    pub full_restricted: Distribution,
    /// Aggregate recomputed with the anchor actually removed.
    pub reduced: Distribution,
    /// L1 distance between the two: the IIA violation magnitude.
    pub violation_l1: f64,
}

/// Score an item twice — with the full anchor set and with one anchor
/// removed — and measure how much the shared anchors' relative mass moved.
pub fn iia_diagnostic(
    item: &SurveyItem,
    removed_anchor: &str,
    template: &PromptTemplate,
    backend: &dyn ScoringBackend,
    cache: &ScoreCache,
    concurrency: usize,
) -> Result<IIAReport> {
    if item.anchors.len() < 3 {
        return Err(Error::TooFewAnchors {
            item_id: item.id.clone(),
        });
    }
    let full_set = item.anchor_set();
    if full_set.anchor(removed_anchor).is_none() {
        return Err(Error::AnchorSetMismatch {
            detail: format!("anchor {removed_anchor:?} is not in item {}", item.id),
        });
    }
    let indices: Vec<usize> = (0..item.paraphrases.len()).collect();
    let weights = selected_weights(item, &indices);

    let aggregate_over = |set: &AnchorSet| -> Result<Distribution> {
        let requests = render_requests_for(item, set, template, &indices)?;
        let records = collect_batch(score_batch(&requests, backend, cache, concurrency))?;
        let dists = per_chunk_distributions(set, &requests, &records)?;
        aggregate_weighted(&dists, &weights)
    };

    let full = aggregate_over(&full_set).map_err(|e| Error::for_item(&item.id, e))?;
    let reduced_set = full_set.without(removed_anchor);
    let reduced = aggregate_over(&reduced_set).map_err(|e| Error::for_item(&item.id, e))?;

    let shared_anchor_ids = reduced_set.ids();
    let full_restricted = full.restrict(&shared_anchor_ids)?;
    let violation_l1 = l1_distance(&full_restricted, &reduced)?;

    Ok(IIAReport {
        item_id: item.id.clone(),
        removed_anchor: removed_anchor.to_string(),
        shared_anchor_ids,
        full_restricted,
        reduced,
        violation_l1,
    })
}

// ---------------------------------------------------------------------------
// Prior persistence: one prior per distinct anchor set.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrior {
    pub anchor_set_key: String,
    pub anchor_ids: Vec<String>,
    pub probs: Vec<f64>,
    pub provenance: Vec<String>,
}

/// Reusable prior file: anchor-set-keyed priors plus the context hashes
/// they were estimated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorStore {
    pub schema: String,
    pub floor: f64,
    pub neutral_contexts: Vec<String>,
    pub context_hashes: Vec<String>,
    pub priors: Vec<StoredPrior>,
}

impl PriorStore {
    pub fn new(neutral_contexts: Vec<String>) -> PriorStore {
        let context_hashes = neutral_contexts.iter().map(|c| context_hash(c)).collect();
        PriorStore {
            schema: PRIORS_SCHEMA.into(),
            floor: PRIOR_FLOOR,
            neutral_contexts,
            context_hashes,
            priors: Vec::new(),
        }
    }

    pub fn insert(&mut self, anchor_set: &AnchorSet, prior: &PriorDistribution) {
        let key = anchor_set.identity_key();
        self.priors.retain(|p| p.anchor_set_key != key);
        self.priors.push(StoredPrior {
            anchor_set_key: key,
            anchor_ids: prior.distribution.anchor_ids().to_vec(),
            probs: prior.distribution.probs().to_vec(),
            provenance: prior.provenance.clone(),
        });
    }

    pub fn lookup(&self, anchor_set: &AnchorSet) -> Result<Option<PriorDistribution>> {
        let key = anchor_set.identity_key();
        let Some(stored) = self.priors.iter().find(|p| p.anchor_set_key == key) else {
            return Ok(None);
        };
        let distribution = Distribution::new(stored.anchor_ids.clone(), stored.probs.clone())?;
        Ok(Some(PriorDistribution {
            distribution,
            provenance: stored.provenance.clone(),
        }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("prior store serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PriorStore> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let store: PriorStore =
            serde_json::from_str(&text).map_err(|e| Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        if store.schema != PRIORS_SCHEMA {
            return Err(Error::SchemaViolation {
                location: format!("{}: schema", path.display()),
                detail: format!("unsupported schema {:?}, expected {PRIORS_SCHEMA:?}", store.schema),
            });
        }
        Ok(store)
    }
}
