//! Survey catalog: items, anchors, collapse specs, factor loadings, and
//! per-country reference distributions.
//!
//! Loading is a structural parse only; invariants are enforced by
//! [`validate_catalog`], which reports violations as data rather than
//! failing, so a whole catalog can be audited in one pass.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distribution::{Distribution, REFERENCE_SUM_TOLERANCE};
use crate::error::{Error, Result};

pub const CATALOG_SCHEMA: &str = "value-lens-catalog/1";

/// Anchor id of the negative category in collapsed space.
pub const COLLAPSED_NEGATIVE: &str = "negative";
/// Anchor id of the positive category in collapsed space.
pub const COLLAPSED_POSITIVE: &str = "positive";

/// Which of the two cultural-map axes an item loads on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    TraditionalSecular,
    SurvivalSelfExpression,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::TraditionalSecular => write!(f, "traditional_secular"),
            Axis::SurvivalSelfExpression => write!(f, "survival_self_expression"),
        }
    }
}

/// Whether the anchor scale ascends toward the Secular / Self-Expression
/// pole (`Ascends`) or toward the Traditional / Survival pole (`Descends`).
/// Required per item; never inferred from wording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Ascends,
    Descends,
}

/// One answer option, scored as a continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub text: String,
    /// Position on the item's scale in [0,1]. Defaults to even spacing.
    pub scale_position: f64,
}

/// The ordered anchor scale of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.anchors.iter().map(|a| a.id.clone()).collect()
    }

    pub fn anchor(&self, id: &str) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }

    pub fn position_of(&self, id: &str) -> Option<f64> {
        self.anchor(id).map(|a| a.scale_position)
    }

    /// Stable identity of this anchor set (ids and texts, in order). Items
    /// sharing a key share one prior.
    pub fn identity_key(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.anchors {
            hasher.update(a.id.as_bytes());
            hasher.update([0x1f]);
            hasher.update(a.text.as_bytes());
            hasher.update([0x1e]);
        }
        hex::encode(hasher.finalize())
    }

    /// A copy of this set with one anchor removed (for the IIA diagnostic).
    pub fn without(&self, anchor_id: &str) -> AnchorSet {
        AnchorSet {
            anchors: self
                .anchors
                .iter()
                .filter(|a| a.id != anchor_id)
                .cloned()
                .collect(),
        }
    }
}

/// Maps every source anchor onto the binary negative/positive categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSpec {
    pub negative: Vec<String>,
    pub positive: Vec<String>,
}

impl CollapseSpec {
    /// Even 10-point split: first five anchors negative, last five positive.
    pub fn ten_point_default(anchor_ids: &[String]) -> CollapseSpec {
        let mid = anchor_ids.len() / 2;
        CollapseSpec {
            negative: anchor_ids[..mid].to_vec(),
            positive: anchor_ids[mid..].to_vec(),
        }
    }

    pub fn target_of(&self, anchor_id: &str) -> Option<&'static str> {
        if self.negative.iter().any(|a| a == anchor_id) {
            Some(COLLAPSED_NEGATIVE)
        } else if self.positive.iter().any(|a| a == anchor_id) {
            Some(COLLAPSED_POSITIVE)
        } else {
            None
        }
    }

    pub fn collapsed_ids() -> Vec<String> {
        vec![COLLAPSED_NEGATIVE.to_string(), COLLAPSED_POSITIVE.to_string()]
    }
}

/// One survey question with its anchor scale, paraphrase set, and map
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyItem {
    pub id: String,
    pub wording: String,
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loading: Option<f64>,
    pub anchors: Vec<RawAnchor>,
    pub paraphrases: Vec<String>,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_weights: Option<Vec<f64>>,
}

/// Anchor as written in the catalog document; `scale_position` may be
/// omitted to request even spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnchor {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_position: Option<f64>,
}

impl SurveyItem {
    /// The anchor set with default positions resolved.
    pub fn anchor_set(&self) -> AnchorSet {
        let n = self.anchors.len();
        let anchors = self
            .anchors
            .iter()
            .enumerate()
            .map(|(i, raw)| Anchor {
                id: raw.id.clone(),
                text: raw.text.clone(),
                scale_position: raw.scale_position.unwrap_or(even_position(i, n)),
            })
            .collect();
        AnchorSet { anchors }
    }

    /// Anchor ids of the space item results live in: collapsed when a
    /// collapse spec exists, the fine scale otherwise.
    pub fn result_anchor_ids(&self) -> Vec<String> {
        match &self.collapse {
            Some(_) => CollapseSpec::collapsed_ids(),
            None => self.anchors.iter().map(|a| a.id.clone()).collect(),
        }
    }

    pub fn result_anchor_count(&self) -> usize {
        match &self.collapse {
            Some(_) => 2,
            None => self.anchors.len(),
        }
    }
}

fn even_position(index: usize, count: usize) -> f64 {
    if count < 2 {
        0.0
    } else {
        index as f64 / (count - 1) as f64
    }
}

/// One country's response distribution for one item, as transcribed into
/// the catalog. Probabilities are raw here; see
/// [`Catalog::reference_distribution`] for the checked form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceDistribution {
    pub country: String,
    pub item_id: String,
    pub probs: Vec<f64>,
}

/// The loaded survey catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub schema: String,
    pub countries: Vec<String>,
    pub items: Vec<SurveyItem>,
    pub references: Vec<ReferenceDistribution>,
}

impl Catalog {
    pub fn item(&self, id: &str) -> Option<&SurveyItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn reference(&self, country: &str, item_id: &str) -> Option<&ReferenceDistribution> {
        self.references
            .iter()
            .find(|r| r.country == country && r.item_id == item_id)
    }

    /// The checked reference distribution for (country, item), over the
    /// item's result space. `None` when the pair has no data.
    pub fn reference_distribution(
        &self,
        country: &str,
        item_id: &str,
    ) -> Result<Option<Distribution>> {
        let Some(reference) = self.reference(country, item_id) else {
            return Ok(None);
        };
        let item = self.item(item_id).ok_or_else(|| Error::SchemaViolation {
            location: format!("references[{country}/{item_id}]"),
            detail: "item_id does not resolve to a catalog item".into(),
        })?;
        let dist =
            Distribution::new_reference(item.result_anchor_ids(), reference.probs.clone())?;
        Ok(Some(dist))
    }

    /// Countries that have reference data for an item.
    pub fn countries_with_reference(&self, item_id: &str) -> Vec<String> {
        self.countries
            .iter()
            .filter(|c| self.reference(c, item_id).is_some())
            .cloned()
            .collect()
    }

    /// Declared (country, item) pairs with no reference row. Gaps are
    /// expected and reported, never imputed.
    pub fn missing_reference_pairs(&self) -> Vec<(String, String)> {
        let mut missing = Vec::new();
        for item in &self.items {
            for country in &self.countries {
                if self.reference(country, &item.id).is_none() {
                    missing.push((country.clone(), item.id.clone()));
                }
            }
        }
        missing
    }

    /// Canonical serialized form; `load` of this string reproduces the
    /// catalog exactly.
    pub fn to_json_string(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("catalog serializes");
        out.push('\n');
        out
    }

    /// Content hash of the canonical serialized form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }
}

/// Parse a catalog document. Structural errors only; invariant breaches are
/// left for [`validate_catalog`].
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_catalog_str(&text, path)
}

pub fn load_catalog_str(text: &str, path: &Path) -> Result<Catalog> {
    // Separate pure syntax errors from schema errors.
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let catalog: Catalog =
        serde_json::from_value(value).map_err(|e| Error::SchemaViolation {
            location: path.display().to_string(),
            detail: e.to_string(),
        })?;
    if catalog.schema != CATALOG_SCHEMA {
        return Err(Error::SchemaViolation {
            location: format!("{}: schema", path.display()),
            detail: format!(
                "unsupported schema {:?}, expected {CATALOG_SCHEMA:?}",
                catalog.schema
            ),
        });
    }
    // Reference arity against a known item is structural: the row cannot be
    // interpreted as a distribution over the anchor set at all.
    for reference in &catalog.references {
        if let Some(item) = catalog.item(&reference.item_id) {
            let expected = item.result_anchor_count();
            if reference.probs.len() != expected {
                return Err(Error::SchemaViolation {
                    location: format!(
                        "references[{}/{}]",
                        reference.country, reference.item_id
                    ),
                    detail: format!(
                        "item {} has {expected} (collapsed) anchors but the reference row has {} probabilities",
                        reference.item_id,
                        reference.probs.len()
                    ),
                });
            }
        }
    }
    Ok(catalog)
}

/// One invariant breach, with coordinates back into the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "0 violations");
        }
        writeln!(f, "{} violations:", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Check every catalog invariant; violations are data, not failures.
pub fn validate_catalog(catalog: &Catalog) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen_ids = BTreeSet::new();
    for item in &catalog.items {
        let loc = format!("items[{}]", item.id);
        if !seen_ids.insert(item.id.clone()) {
            report.push(&loc, "duplicate item id");
        }
        validate_item(item, &loc, &mut report);
    }

    let mut seen_refs = BTreeSet::new();
    for reference in &catalog.references {
        let loc = format!("references[{}/{}]", reference.country, reference.item_id);
        if !seen_refs.insert((reference.country.clone(), reference.item_id.clone())) {
            report.push(&loc, "duplicate (country, item) reference row");
        }
        if !catalog.countries.contains(&reference.country) {
            report.push(
                &loc,
                format!("country {:?} is not in the declared country list", reference.country),
            );
        }
        let Some(item) = catalog.item(&reference.item_id) else {
            report.push(&loc, "item_id does not resolve to a catalog item");
            continue;
        };
        let expected = item.result_anchor_count();
        if reference.probs.len() != expected {
            report.push(
                &loc,
                format!(
                    "expected {expected} probabilities for the (collapsed) anchor set, found {}",
                    reference.probs.len()
                ),
            );
            continue;
        }
        if reference.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            report.push(&loc, "probabilities must be finite and ≥ 0");
        } else {
            let sum: f64 = reference.probs.iter().sum();
            if (sum - 1.0).abs() > REFERENCE_SUM_TOLERANCE {
                report.push(
                    &loc,
                    format!("probabilities sum to {sum} ≠ 1 ± {REFERENCE_SUM_TOLERANCE:e}"),
                );
            }
        }
    }

    report
}

fn validate_item(item: &SurveyItem, loc: &str, report: &mut ValidationReport) {
    if item.anchors.len() < 2 {
        report.push(loc, format!("anchors must have ≥2 entries, found {}", item.anchors.len()));
    }
    let mut seen = BTreeSet::new();
    for anchor in &item.anchors {
        if !seen.insert(anchor.id.clone()) {
            report.push(
                format!("{loc}.anchors[{}]", anchor.id),
                "duplicate anchor id",
            );
        }
    }

    let given = item
        .anchors
        .iter()
        .filter(|a| a.scale_position.is_some())
        .count();
    if given != 0 && given != item.anchors.len() {
        report.push(
            format!("{loc}.anchors"),
            "scale positions must be given for all anchors or none",
        );
    } else if item.anchors.len() >= 2 {
        let set = item.anchor_set();
        let positions: Vec<f64> = set.anchors.iter().map(|a| a.scale_position).collect();
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            report.push(format!("{loc}.anchors"), "scale positions must be strictly increasing");
        }
        if positions.first() != Some(&0.0) {
            report.push(format!("{loc}.anchors"), "first scale position must be 0");
        }
        if positions.last() != Some(&1.0) {
            report.push(format!("{loc}.anchors"), "last scale position must be 1");
        }
    }

    if let Some(loading) = item.loading {
        if !(loading > 0.0 && loading <= 1.0) {
            report.push(format!("{loc}.loading"), format!("loading {loading} outside (0,1]"));
        }
    }

    if item.paraphrases.is_empty() {
        report.push(format!("{loc}.paraphrases"), "at least one paraphrase is required");
    }
    for (i, paraphrase) in item.paraphrases.iter().enumerate() {
        if paraphrase.trim().is_empty() {
            report.push(
                format!("{loc}.paraphrases[{i}]"),
                "paraphrase is empty after whitespace trimming",
            );
        }
    }

    if let Some(weights) = &item.paraphrase_weights {
        if weights.len() != item.paraphrases.len() {
            report.push(
                format!("{loc}.paraphrase_weights"),
                format!(
                    "{} weights for {} paraphrases",
                    weights.len(),
                    item.paraphrases.len()
                ),
            );
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            report.push(format!("{loc}.paraphrase_weights"), "weights must be finite and > 0");
        }
    }

    if let Some(spec) = &item.collapse {
        let anchor_ids: BTreeSet<_> = item.anchors.iter().map(|a| a.id.as_str()).collect();
        for mapped in spec.negative.iter().chain(&spec.positive) {
            if !anchor_ids.contains(mapped.as_str()) {
                report.push(
                    format!("{loc}.collapse"),
                    format!("mapped anchor {mapped:?} is not in the anchor set"),
                );
            }
        }
        for id in &anchor_ids {
            if spec.target_of(id).is_none() {
                report.push(
                    format!("{loc}.collapse"),
                    format!("anchor {id:?} is not mapped to a target category"),
                );
            }
        }
        if spec.negative.is_empty() || spec.positive.is_empty() {
            report.push(
                format!("{loc}.collapse"),
                "collapse must map onto both the negative and positive categories",
            );
        }
        let mut mapped_once = BTreeSet::new();
        for mapped in spec.negative.iter().chain(&spec.positive) {
            if !mapped_once.insert(mapped.clone()) {
                report.push(
                    format!("{loc}.collapse"),
                    format!("anchor {mapped:?} is mapped to more than one category"),
                );
            }
        }
    }
}

/// Collapse a fine-grained distribution onto the binary negative/positive
/// categories. Each target's mass is the sum of its mapped source masses;
/// total mass is preserved.
pub fn collapse_distribution(dist: &Distribution, spec: &CollapseSpec) -> Result<Distribution> {
    let mut negative = 0.0;
    let mut positive = 0.0;
    for (anchor_id, p) in dist.iter() {
        match spec.target_of(anchor_id) {
            Some(COLLAPSED_NEGATIVE) => negative += p,
            Some(COLLAPSED_POSITIVE) => positive += p,
            _ => {
                return Err(Error::UnmappedAnchor {
                    anchor_id: anchor_id.to_string(),
                })
            }
        }
    }
    Distribution::with_tolerance(
        CollapseSpec::collapsed_ids(),
        vec![negative, positive],
        REFERENCE_SUM_TOLERANCE,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn anchor(id: &str, text: &str) -> RawAnchor {
        RawAnchor {
            id: id.into(),
            text: text.into(),
            scale_position: None,
        }
    }

    fn four_point_item(id: &str, loading: Option<f64>) -> SurveyItem {
        SurveyItem {
            id: id.into(),
            wording: format!("wording for {id}"),
            axis: Axis::TraditionalSecular,
            loading,
            anchors: vec![
                anchor("a1", "not important"),
                anchor("a2", "not very important"),
                anchor("a3", "somewhat important"),
                anchor("a4", "very important"),
            ],
            paraphrases: vec![format!("paraphrase for {id}")],
            orientation: Orientation::Descends,
            collapse: None,
            paraphrase_weights: None,
        }
    }

    fn minimal_catalog() -> Catalog {
        Catalog {
            schema: CATALOG_SCHEMA.into(),
            countries: vec!["AU".into()],
            items: vec![SurveyItem {
                id: "Q17".into(),
                wording: "Do you think it's important for children to learn obedience at home?"
                    .into(),
                axis: Axis::TraditionalSecular,
                loading: Some(0.61),
                anchors: vec![anchor("yes", "yes"), anchor("no", "no")],
                paraphrases: vec!["Is obedience an important thing for children to learn?".into()],
                orientation: Orientation::Ascends,
                collapse: None,
                paraphrase_weights: None,
            }],
            references: vec![ReferenceDistribution {
                country: "AU".into(),
                item_id: "Q17".into(),
                probs: vec![0.28, 0.72],
            }],
        }
    }

    fn load_from_value(value: serde_json::Value) -> Result<Catalog> {
        load_catalog_str(&value.to_string(), Path::new("test.json"))
    }

    #[test]
    fn minimal_document_loads() {
        let catalog = minimal_catalog();
        let loaded = load_catalog_str(&catalog.to_json_string(), Path::new("test.json")).unwrap();
        assert_eq!(loaded.items.len(), 1);
        assert_eq!(loaded.references.len(), 1);
        assert_eq!(loaded, catalog);
    }

    #[test]
    fn map_loadings_round_trip_exactly() {
        // the ten canonical map items and their published factor loadings
        let loadings = [
            ("Q17", 0.61),
            ("Q45", 0.51),
            ("Q46", 0.59),
            ("Q57", 0.44),
            ("Q156", 0.59),
            ("Q164", 0.70),
            ("Q182", 0.58),
            ("Q184", 0.61),
            ("Q209", 0.54),
            ("Q254", 0.60),
        ];
        let mut catalog = minimal_catalog();
        catalog.references.clear();
        catalog.items = loadings
            .iter()
            .map(|(id, loading)| four_point_item(id, Some(*loading)))
            .collect();

        let reloaded =
            load_catalog_str(&catalog.to_json_string(), Path::new("test.json")).unwrap();
        for (id, loading) in loadings {
            let got = reloaded.item(id).unwrap().loading.unwrap();
            assert_eq!(got.to_bits(), loading.to_bits(), "loading for {id}");
        }
        assert!(validate_catalog(&reloaded).is_empty());
    }

    #[test]
    fn reference_arity_mismatch_is_schema_violation_naming_item() {
        let mut catalog = minimal_catalog();
        catalog.items[0] = four_point_item("Q164", Some(0.70));
        catalog.references = vec![ReferenceDistribution {
            country: "AU".into(),
            item_id: "Q164".into(),
            probs: vec![0.2, 0.3, 0.5],
        }];
        let err =
            load_catalog_str(&catalog.to_json_string(), Path::new("test.json")).unwrap_err();
        match err {
            Error::SchemaViolation { location, detail } => {
                assert!(location.contains("Q164"), "location: {location}");
                assert!(detail.contains('4') && detail.contains('3'), "detail: {detail}");
            }
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_string_rejected() {
        let mut catalog = minimal_catalog();
        catalog.schema = "value-lens-catalog/999".into();
        let err =
            load_catalog_str(&catalog.to_json_string(), Path::new("test.json")).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }));
    }

    #[test]
    fn syntax_error_is_malformed_document() {
        let err = load_catalog_str("{ not json", Path::new("test.json")).unwrap_err();
        assert!(matches!(err, Error::MalformedDocument { .. }));
    }

    #[test]
    fn unknown_field_is_schema_violation() {
        let mut value = serde_json::to_value(minimal_catalog()).unwrap();
        value["unexpected"] = serde_json::json!(1);
        let err = load_from_value(value).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation { .. }));
    }

    #[test]
    fn valid_catalog_validates_clean() {
        assert!(validate_catalog(&minimal_catalog()).is_empty());
    }

    #[test]
    fn reference_sum_breach_reported() {
        let mut catalog = minimal_catalog();
        catalog.references[0].probs = vec![0.28, 0.70];
        let report = validate_catalog(&catalog);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert!(v.location.contains("AU/Q17"));
        assert!(v.message.contains("sum to 0.98"), "message: {}", v.message);
    }

    #[test]
    fn loading_range_breach_reported() {
        let mut catalog = minimal_catalog();
        catalog.items[0].loading = Some(1.3);
        let report = validate_catalog(&catalog);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("outside (0,1]"));
    }

    #[test]
    #[allow(clippy::type_complexity)]
    fn single_field_corruptions_each_flagged() {
        // every seeded corruption must produce ≥1 violation naming the field
        let corruptions: Vec<(&str, Box<dyn Fn(&mut Catalog)>)> = vec![
            ("anchors", Box::new(|c| c.items[0].anchors.truncate(1))),
            ("anchors", Box::new(|c| {
                c.items[0].anchors[1].id = c.items[0].anchors[0].id.clone();
                c.references.clear();
            })),
            ("anchors", Box::new(|c| {
                c.items[0].anchors[0].scale_position = Some(0.9);
                c.items[0].anchors[1].scale_position = Some(0.3);
            })),
            ("loading", Box::new(|c| c.items[0].loading = Some(0.0))),
            ("loading", Box::new(|c| c.items[0].loading = Some(1.3))),
            ("paraphrases", Box::new(|c| c.items[0].paraphrases = vec!["   ".into()])),
            ("paraphrases", Box::new(|c| c.items[0].paraphrases.clear())),
            ("references", Box::new(|c| c.references[0].probs = vec![0.3, 0.3])),
            ("references", Box::new(|c| c.references[0].probs = vec![-0.1, 1.1])),
            ("references", Box::new(|c| c.references[0].item_id = "Q999".into())),
            ("references", Box::new(|c| c.references[0].country = "ZZ".into())),
            ("items", Box::new(|c| {
                let dup = c.items[0].clone();
                c.items.push(dup);
            })),
            ("paraphrase_weights", Box::new(|c| {
                c.items[0].paraphrase_weights = Some(vec![1.0, 2.0]);
            })),
        ];
        for (field, corrupt) in corruptions {
            let mut catalog = minimal_catalog();
            corrupt(&mut catalog);
            let report = validate_catalog(&catalog);
            assert!(
                !report.is_empty(),
                "corruption of {field} produced no violation"
            );
            assert!(
                report
                    .violations
                    .iter()
                    .any(|v| v.location.contains(field) || v.message.contains(field)
                        || field == "items"),
                "no violation names {field}: {report}"
            );
        }
    }

    #[test]
    fn collapse_additivity() {
        let dist = Distribution::new(
            vec!["a1".into(), "a2".into(), "a3".into(), "a4".into()],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let spec = CollapseSpec {
            negative: vec!["a1".into(), "a2".into()],
            positive: vec!["a3".into(), "a4".into()],
        };
        let collapsed = collapse_distribution(&dist, &spec).unwrap();
        assert_eq!(collapsed.anchor_ids(), &["negative", "positive"]);
        assert!((collapsed.probs()[0] - 0.3).abs() < 1e-15);
        assert!((collapsed.probs()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn collapse_uniform_ten_point_split() {
        let ids: Vec<String> = (1..=10).map(|i| format!("p{i}")).collect();
        let dist = Distribution::uniform(ids.clone()).unwrap();
        let spec = CollapseSpec::ten_point_default(&ids);
        let collapsed = collapse_distribution(&dist, &spec).unwrap();
        assert!((collapsed.probs()[0] - 0.5).abs() < 1e-15);
        assert!((collapsed.probs()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collapse_ten_point_marginals_match_hand_summed_oracle() {
        // 10-point justifiability-style marginals; expected masses were
        // summed by hand: 0.226+0.097+0.081+0.046+0.118 = 0.568 and
        // 0.084+0.058+0.101+0.049+0.140 = 0.432.
        let ids: Vec<String> = (1..=10).map(|i| format!("p{i}")).collect();
        let probs = vec![0.226, 0.097, 0.081, 0.046, 0.118, 0.084, 0.058, 0.101, 0.049, 0.140];
        let dist = Distribution::new_reference(ids.clone(), probs).unwrap();
        let spec = CollapseSpec::ten_point_default(&ids);
        let collapsed = collapse_distribution(&dist, &spec).unwrap();
        assert!((collapsed.probs()[0] - 0.568).abs() < 1e-12);
        assert!((collapsed.probs()[1] - 0.432).abs() < 1e-12);
    }

    #[test]
    fn collapse_unmapped_anchor_errors() {
        let dist = Distribution::new(vec!["a1".into(), "zz".into()], vec![0.5, 0.5]).unwrap();
        let spec = CollapseSpec {
            negative: vec!["a1".into()],
            positive: vec!["a2".into()],
        };
        let err = collapse_distribution(&dist, &spec).unwrap_err();
        assert!(matches!(err, Error::UnmappedAnchor { anchor_id } if anchor_id == "zz"));
    }

    #[test]
    fn default_positions_even_first_zero_last_one() {
        let item = four_point_item("Q164", None);
        let set = item.anchor_set();
        let positions: Vec<f64> = set.anchors.iter().map(|a| a.scale_position).collect();
        assert_eq!(positions[0], 0.0);
        assert_eq!(*positions.last().unwrap(), 1.0);
        assert!((positions[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_pairs_enumerable() {
        let mut catalog = minimal_catalog();
        catalog.countries.push("FR".into());
        let missing = catalog.missing_reference_pairs();
        assert_eq!(missing, vec![("FR".to_string(), "Q17".to_string())]);
    }

    proptest! {
        #[test]
        fn collapse_preserves_total_mass(weights in proptest::collection::vec(0.001f64..1.0, 2..12)) {
            let ids: Vec<String> = (0..weights.len()).map(|i| format!("a{i}")).collect();
            let dist = Distribution::from_weights(ids.clone(), weights).unwrap();
            let split = ids.len() / 2;
            let spec = CollapseSpec {
                negative: ids[..split.max(1)].to_vec(),
                positive: ids[split.max(1)..].to_vec(),
            };
            if spec.positive.is_empty() {
                return Ok(());
            }
            let collapsed = collapse_distribution(&dist, &spec).unwrap();
            let input_sum: f64 = dist.probs().iter().sum();
            let output_sum: f64 = collapsed.probs().iter().sum();
            prop_assert!((input_sum - output_sum).abs() < 1e-12);
        }

        #[test]
        fn serialize_load_round_trip(
            loading in proptest::option::of(0.01f64..=1.0),
            n_anchors in 2usize..6,
            n_paraphrases in 1usize..4,
        ) {
            let mut catalog = minimal_catalog();
            catalog.items[0].loading = loading;
            catalog.items[0].anchors = (0..n_anchors)
                .map(|i| anchor(&format!("a{i}"), &format!("anchor {i}")))
                .collect();
            catalog.items[0].paraphrases = (0..n_paraphrases)
                .map(|i| format!("paraphrase {i}"))
                .collect();
            catalog.references[0].probs = {
                let mut probs = vec![1.0 / n_anchors as f64; n_anchors];
                let extra = 1.0 - probs.iter().sum::<f64>();
                probs[0] += extra;
                probs
            };
            let loaded =
                load_catalog_str(&catalog.to_json_string(), Path::new("test.json")).unwrap();
            prop_assert_eq!(loaded, catalog);
        }
    }
}
