//! Distributional comparison against human references: L1 distance, KL
//! divergence, country ranking, and cross-item aggregation.
//!
//! Direction is fixed throughout: P is the human reference, Q is the
//! model. The reversed direction is deliberately not exposed.

use std::sync::Arc;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};

/// Floor applied to model probabilities inside KL so zero-mass anchors
/// yield a defined (flagged) value.
pub const KL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    Kl,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::Kl => "kl",
        }
    }

    pub fn all() -> [Metric; 2] {
        [Metric::L1, Metric::Kl]
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One metric evaluation, with whether epsilon smoothing kicked in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOutcome {
    pub value: f64,
    pub smoothed: bool,
}

/// One (item, country, metric) comparison result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScore {
    pub item_id: String,
    pub country: String,
    pub metric: Metric,
    pub value: f64,
    pub smoothed: bool,
}

/// Sum of absolute per-anchor probability differences; symmetric, in [0,2].
pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    p.check_same_anchors(q)?;
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// KL divergence of the human distribution `p` from the model `q`:
/// Σ_{x: p(x)>0} p(x)·ln(p(x)/q'(x)), where q' is q floored at
/// [`KL_EPSILON`] and renormalized only when flooring changed anything.
/// Returns the value and the smoothed flag.
pub fn kl_divergence(p_human: &Distribution, q_model: &Distribution) -> Result<MetricOutcome> {
    p_human.check_same_anchors(q_model)?;
    let smoothed = q_model.probs().iter().any(|&q| q < KL_EPSILON);
    let q_effective: Vec<f64> = if smoothed {
        let floored: Vec<f64> = q_model
            .probs()
            .iter()
            .map(|&q| q.max(KL_EPSILON))
            .collect();
        let sum: f64 = floored.iter().sum();
        floored.into_iter().map(|q| q / sum).collect()
    } else {
        q_model.probs().to_vec()
    };
    let mut value = 0.0;
    for (&p, &q) in p_human.probs().iter().zip(&q_effective) {
        if p > 0.0 {
            value += p * (p / q).ln();
        }
    }
    // Gibbs' inequality: exact KL is nonnegative, so a negative here is
    // pure rounding noise.
    Ok(MetricOutcome {
        value: value.max(0.0),
        smoothed,
    })
}

/// Evaluate a metric with the fixed human/model convention.
pub fn evaluate_metric(
    metric: Metric,
    human: &Distribution,
    model: &Distribution,
) -> Result<MetricOutcome> {
    metric_impl(metric).compute(human, model)
}

/// Either a per-item ranking or the cross-item aggregate ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scope", content = "item_id")]
pub enum RankingScope {
    Item(String),
    Aggregate,
}

/// Countries ordered by ascending divergence; lower is closer alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRanking {
    #[serde(flatten)]
    pub scope: RankingScope,
    pub metric: Metric,
    /// (country, value) ascending; ties broken by country code.
    pub entries: Vec<(String, f64)>,
    /// Countries lacking reference data, listed rather than imputed.
    pub omitted: Vec<String>,
}

/// Rank reference countries by a metric against one model distribution.
pub fn rank_countries(
    scope: RankingScope,
    references: &[(String, Distribution)],
    model: &Distribution,
    metric: Metric,
    omitted: Vec<String>,
) -> Result<CountryRanking> {
    if references.is_empty() {
        let item_id = match &scope {
            RankingScope::Item(id) => id.clone(),
            RankingScope::Aggregate => "<aggregate>".into(),
        };
        return Err(Error::NoReferenceData { item_id });
    }
    let mut entries = Vec::with_capacity(references.len());
    for (country, reference) in references {
        let outcome = evaluate_metric(metric, reference, model)?;
        entries.push((country.clone(), outcome.value));
    }
    entries.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(CountryRanking {
        scope,
        metric,
        entries,
        omitted,
    })
}

/// Unweighted mean of one country's per-item scores; the item count is
/// reported alongside because coverage varies by country.
pub fn aggregate_country_scores(scores: &[DivergenceScore]) -> Result<(f64, usize)> {
    let Some(first) = scores.first() else {
        return Err(Error::NoReferenceData {
            item_id: "<aggregate>".into(),
        });
    };
    if scores.iter().any(|s| s.metric != first.metric) {
        return Err(Error::MixedMetrics);
    }
    let sum: f64 = scores.iter().map(|s| s.value).sum();
    Ok((sum / scores.len() as f64, scores.len()))
}

// ---------------------------------------------------------------------------
// Metric registry: both comparison metrics behind one trait, by name.

pub trait DivergenceMetric: Send + Sync {
    fn name(&self) -> &'static str;

    fn metric(&self) -> Metric;

    /// Compute with the fixed convention: `human` is P, `model` is Q.
    fn compute(&self, human: &Distribution, model: &Distribution) -> Result<MetricOutcome>;
}

struct L1Metric;

impl DivergenceMetric for L1Metric {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn metric(&self) -> Metric {
        Metric::L1
    }

    fn compute(&self, human: &Distribution, model: &Distribution) -> Result<MetricOutcome> {
        Ok(MetricOutcome {
            value: l1_distance(human, model)?,
            smoothed: false,
        })
    }
}

struct KlMetric;

impl DivergenceMetric for KlMetric {
    fn name(&self) -> &'static str {
        "kl"
    }

    fn metric(&self) -> Metric {
        Metric::Kl
    }

    fn compute(&self, human: &Distribution, model: &Distribution) -> Result<MetricOutcome> {
        kl_divergence(human, model)
    }
}

static METRICS: Lazy<Vec<Arc<dyn DivergenceMetric>>> =
    Lazy::new(|| vec![Arc::new(L1Metric), Arc::new(KlMetric)]);

pub fn metric_names() -> Vec<&'static str> {
    METRICS.iter().map(|m| m.name()).collect()
}

pub fn lookup_metric(name: &str) -> Result<Arc<dyn DivergenceMetric>> {
    METRICS
        .iter()
        .find(|m| m.name() == name)
        .cloned()
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "metric",
            name: name.into(),
            known: metric_names().join(", "),
        })
}

fn metric_impl(metric: Metric) -> Arc<dyn DivergenceMetric> {
    METRICS
        .iter()
        .find(|m| m.metric() == metric)
        .cloned()
        .expect("every metric is registered")
}
