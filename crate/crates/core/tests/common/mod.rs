//! Shared fixtures for the integration tests: designed mock backends and
//! catalog items with known distributions.
#![allow(dead_code)] // not every test binary uses every fixture

use value_lens::backend::{BackendParams, MockBackend};
use value_lens::catalog::{Axis, CollapseSpec, Orientation, RawAnchor, SurveyItem};

pub const IMPORTANCE_ANCHORS: [(&str, &str); 4] = [
    ("very_important", "very important"),
    ("rather_important", "rather important"),
    ("not_very_important", "not very important"),
    ("not_at_all_important", "not at all important"),
];

pub fn importance_item(id: &str, paraphrases: &[&str]) -> SurveyItem {
    SurveyItem {
        id: id.into(),
        wording: paraphrases[0].into(),
        axis: Axis::TraditionalSecular,
        loading: Some(0.70),
        anchors: IMPORTANCE_ANCHORS
            .iter()
            .map(|(anchor_id, text)| RawAnchor {
                id: (*anchor_id).into(),
                text: (*text).into(),
                scale_position: None,
            })
            .collect(),
        paraphrases: paraphrases.iter().map(|p| p.to_string()).collect(),
        // anchors run very → not at all important, so position 1 is the
        // secular pole
        orientation: Orientation::Ascends,
        collapse: None,
        paraphrase_weights: None,
    }
}

pub fn ten_point_item(id: &str) -> SurveyItem {
    let anchors: Vec<RawAnchor> = (1..=10)
        .map(|i| RawAnchor {
            id: format!("p{i}"),
            text: i.to_string(),
            scale_position: None,
        })
        .collect();
    let ids: Vec<String> = anchors.iter().map(|a| a.id.clone()).collect();
    SurveyItem {
        id: id.into(),
        wording: "rate it 1 to 10".into(),
        axis: Axis::TraditionalSecular,
        loading: Some(0.61),
        anchors,
        paraphrases: vec!["Rate it on a scale of 1 to 10.".into()],
        orientation: Orientation::Ascends,
        collapse: Some(CollapseSpec::ten_point_default(&ids)),
        paraphrase_weights: None,
    }
}

/// Prompt text the default template renders for a paraphrase.
pub fn prompt_for(paraphrase: &str) -> String {
    format!("{paraphrase}\nAnswer: ")
}

/// Mock whose seeded probabilities are exact: seeding ln(p) for a
/// unit-sum row makes the softmax reproduce the row.
pub fn mock_with_probability_rows(
    rows: &[(&str, &[(&str, f64)])],
) -> MockBackend {
    let mut backend = MockBackend::new("mock-model", BackendParams::default());
    for (prompt, entries) in rows {
        for (continuation, probability) in entries.iter() {
            backend.seed(*prompt, *continuation, probability.ln());
        }
    }
    backend
}
