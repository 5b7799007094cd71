//! Deterministic rendering of (paraphrase × anchor) scoring requests.

use serde::{Deserialize, Serialize};

use crate::catalog::{AnchorSet, SurveyItem};
use crate::error::{Error, Result};

pub const QUESTION_PLACEHOLDER: &str = "{question}";
pub const ANCHOR_PLACEHOLDER: &str = "{anchor}";
pub const OPTIONS_PLACEHOLDER: &str = "{options}";

/// Template joining a question paraphrase to an anchor continuation.
///
/// `{question}` and `{anchor}` are required. The optional `{options}`
/// placeholder expands to the comma-separated anchor texts of the current
/// anchor set, which makes scoring sensitive to the option-set composition
/// (the effect the IIA diagnostic measures). Text up to `{anchor}` becomes
/// the prompt; the anchor text plus any trailing template text becomes the
/// scored continuation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            text: "{question}\nAnswer: {anchor}".into(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyTemplate);
        }
        for placeholder in [QUESTION_PLACEHOLDER, ANCHOR_PLACEHOLDER] {
            if !text.contains(placeholder) {
                return Err(Error::MissingPlaceholder {
                    placeholder: placeholder.into(),
                });
            }
        }
        Ok(PromptTemplate { text })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// The fully rendered text presented before the anchor continuation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub item_id: String,
    pub paraphrase_index: usize,
    pub text: String,
}

/// One unit of work for a scoring backend: a prompt and the anchor
/// continuation to score against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringRequest {
    pub rendered: RenderedPrompt,
    pub anchor_id: String,
    pub continuation_text: String,
}

/// Render the full |paraphrases| × |anchors| request set for an item, in
/// deterministic paraphrase-major order.
pub fn render_requests(item: &SurveyItem, template: &PromptTemplate) -> Result<Vec<ScoringRequest>> {
    let indices: Vec<usize> = (0..item.paraphrases.len()).collect();
    render_requests_for(item, &item.anchor_set(), template, &indices)
}

/// Render requests for a chosen paraphrase subset over a given anchor set.
/// The anchor set is passed explicitly so diagnostics can score reduced
/// sets without rewriting the item.
pub fn render_requests_for(
    item: &SurveyItem,
    anchor_set: &AnchorSet,
    template: &PromptTemplate,
    paraphrase_indices: &[usize],
) -> Result<Vec<ScoringRequest>> {
    if item.paraphrases.is_empty() {
        return Err(Error::for_item(
            &item.id,
            Error::SchemaViolation {
                location: "paraphrases".into(),
                detail: "at least one paraphrase is required to render requests".into(),
            },
        ));
    }
    if anchor_set.len() < 2 {
        return Err(Error::TooFewAnchors {
            item_id: item.id.clone(),
        });
    }
    let options_text = anchor_set
        .anchors
        .iter()
        .map(|a| a.text.as_str())
        .collect::<Vec<_>>()
        .join(", ");

    let mut requests = Vec::with_capacity(paraphrase_indices.len() * anchor_set.len());
    for &index in paraphrase_indices {
        let paraphrase = item.paraphrases.get(index).ok_or_else(|| {
            Error::for_item(
                &item.id,
                Error::SchemaViolation {
                    location: format!("paraphrases[{index}]"),
                    detail: "paraphrase index out of range".into(),
                },
            )
        })?;
        let filled = template
            .text
            .replace(QUESTION_PLACEHOLDER, paraphrase)
            .replace(OPTIONS_PLACEHOLDER, &options_text);
        // Split at the anchor placeholder: prefix is the prompt, anchor text
        // plus any suffix is the continuation.
        let (prefix, suffix) = filled
            .split_once(ANCHOR_PLACEHOLDER)
            .ok_or(Error::MissingPlaceholder {
                placeholder: ANCHOR_PLACEHOLDER.into(),
            })?;
        if prefix.trim().is_empty() {
            return Err(Error::EmptyTemplate);
        }
        let rendered = RenderedPrompt {
            item_id: item.id.clone(),
            paraphrase_index: index,
            text: prefix.to_string(),
        };
        for anchor in &anchor_set.anchors {
            requests.push(ScoringRequest {
                rendered: rendered.clone(),
                anchor_id: anchor.id.clone(),
                continuation_text: format!("{}{}", anchor.text, suffix),
            });
        }
    }
    Ok(requests)
}
