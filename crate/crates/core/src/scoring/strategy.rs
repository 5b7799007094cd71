//! Pipeline version strategies, registered by name.
//!
//! Each strategy decides which paraphrases an item contributes and what
//! correction (if any) is applied to the aggregated distribution. The CLI
//! selects one at runtime via `--mode`.

use std::sync::Arc;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use super::{bayes_correct, PriorDistribution};
use crate::catalog::SurveyItem;
use crate::distribution::Distribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    Naive,
    #[serde(rename = "sets")]
    PromptSets,
    #[serde(rename = "sets-bayes")]
    PromptSetsBayes,
}

impl PipelineMode {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineMode::Naive => "naive",
            PipelineMode::PromptSets => "sets",
            PipelineMode::PromptSetsBayes => "sets-bayes",
        }
    }
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(strategy(s)?.mode())
    }
}

pub trait PipelineStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn mode(&self) -> PipelineMode;

    /// Which paraphrase indices this pipeline version scores.
    fn paraphrase_indices(&self, item: &SurveyItem) -> Vec<usize>;

    fn requires_prior(&self) -> bool {
        false
    }

    /// Final correction applied to the aggregated distribution.
    fn correct(
        &self,
        aggregate: &Distribution,
        prior: Option<&PriorDistribution>,
    ) -> Result<Distribution>;
}

/// Single canonical wording, no correction.
struct NaiveStrategy;

impl PipelineStrategy for NaiveStrategy {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn mode(&self) -> PipelineMode {
        PipelineMode::Naive
    }

    fn paraphrase_indices(&self, _item: &SurveyItem) -> Vec<usize> {
        // index 0 is by convention the canonical wording
        vec![0]
    }

    fn correct(
        &self,
        aggregate: &Distribution,
        _prior: Option<&PriorDistribution>,
    ) -> Result<Distribution> {
        Ok(aggregate.clone())
    }
}

/// Full paraphrase set, averaged, no correction.
struct PromptSetsStrategy;

impl PipelineStrategy for PromptSetsStrategy {
    fn name(&self) -> &'static str {
        "sets"
    }

    fn mode(&self) -> PipelineMode {
        PipelineMode::PromptSets
    }

    fn paraphrase_indices(&self, item: &SurveyItem) -> Vec<usize> {
        (0..item.paraphrases.len()).collect()
    }

    fn correct(
        &self,
        aggregate: &Distribution,
        _prior: Option<&PriorDistribution>,
    ) -> Result<Distribution> {
        Ok(aggregate.clone())
    }
}

/// Full paraphrase set plus anchor-prior correction.
struct PromptSetsBayesStrategy;

impl PipelineStrategy for PromptSetsBayesStrategy {
    fn name(&self) -> &'static str {
        "sets-bayes"
    }

    fn mode(&self) -> PipelineMode {
        PipelineMode::PromptSetsBayes
    }

    fn paraphrase_indices(&self, item: &SurveyItem) -> Vec<usize> {
        (0..item.paraphrases.len()).collect()
    }

    fn requires_prior(&self) -> bool {
        true
    }

    fn correct(
        &self,
        aggregate: &Distribution,
        prior: Option<&PriorDistribution>,
    ) -> Result<Distribution> {
        let prior = prior.ok_or_else(|| Error::PriorRequired {
            mode: self.name().into(),
        })?;
        bayes_correct(aggregate, prior)
    }
}

static STRATEGIES: Lazy<Vec<Arc<dyn PipelineStrategy>>> = Lazy::new(|| {
    vec![
        Arc::new(NaiveStrategy),
        Arc::new(PromptSetsStrategy),
        Arc::new(PromptSetsBayesStrategy),
    ]
});

pub fn strategy_names() -> Vec<&'static str> {
    STRATEGIES.iter().map(|s| s.name()).collect()
}

/// Look up a pipeline strategy by its registered name.
pub fn strategy(name: &str) -> Result<Arc<dyn PipelineStrategy>> {
    STRATEGIES
        .iter()
        .find(|s| s.name() == name)
        .cloned()
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "pipeline mode",
            name: name.into(),
            known: strategy_names().join(", "),
        })
}

pub fn strategy_for_mode(mode: PipelineMode) -> Arc<dyn PipelineStrategy> {
    STRATEGIES
        .iter()
        .find(|s| s.mode() == mode)
        .cloned()
        .expect("every mode has a registered strategy")
}

/// The paraphrase indices a pipeline mode scores for an item.
pub fn select_mode_paraphrases(item: &SurveyItem, mode: PipelineMode) -> Vec<usize> {
    strategy_for_mode(mode).paraphrase_indices(item)
}
