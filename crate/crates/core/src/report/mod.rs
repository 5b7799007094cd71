//! Run outputs: the provenance manifest, the machine-readable bundle, CSV
//! tables, and deterministic SVG plots.
//!
//! Everything emitted is a pure function of the bundle; two emissions of
//! the same bundle are byte-identical (timestamps live in the manifest and
//! only change when a new run builds a new manifest).

pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cultural_map::MapCoordinates;
use crate::distribution::Distribution;
use crate::divergence::{CountryRanking, DivergenceScore};
use crate::error::{Error, Result};
use crate::scoring::ItemResult;

pub const RESULTS_SCHEMA: &str = "value-lens-results/1";
pub const MANIFEST_SCHEMA: &str = "value-lens-manifest/1";

/// Backend identity as recorded in the manifest. The credential itself is
/// never stored; only the env-var name and whether one was present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBackend {
    pub name: String,
    pub model_id: String,
    pub endpoint: Option<String>,
    pub credential_env: Option<String>,
    pub credential_present: bool,
    pub length_normalize: bool,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

/// Wall-clock and traffic counters for one invocation. Everything outside
/// this block is a pure function of (catalog, config, cache contents);
/// only this block may differ between two otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub started_at: String,
    pub finished_at: String,
    pub backend_calls: u64,
    pub cache_hits: u64,
}

/// Provenance record: every setting that influenced a number in the
/// results. Re-running with an identical manifest and a warm cache
/// reproduces results bitwise, modulo the session block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub backend: ManifestBackend,
    pub catalog_path: String,
    pub catalog_hash: String,
    pub template: String,
    pub mode: String,
    /// Paraphrase count per item id, for the items in this run.
    pub paraphrase_counts: BTreeMap<String, usize>,
    pub anchor_counts: BTreeMap<String, usize>,
    pub prior_file: Option<String>,
    pub prior_file_hash: Option<String>,
    pub prior_floor: f64,
    /// How priors are keyed; recorded because the alternative (one global
    /// prior over a canonical scale) is also defensible.
    pub prior_scope: String,
    pub neutral_context_hashes: Vec<String>,
    pub length_normalization: bool,
    /// KL evaluations where epsilon flooring changed the model distribution.
    pub smoothing_events: u64,
    pub failed_items: BTreeMap<String, String>,
    pub effective_config: serde_json::Value,
    pub session: SessionStats,
}

/// Everything the pipeline produced for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub result: ItemResult,
    /// Country → reference distribution over the item's result space.
    pub references: BTreeMap<String, Distribution>,
    pub scores: Vec<DivergenceScore>,
    /// Declared countries with no reference row for this item.
    pub missing_countries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBundle {
    pub schema: String,
    pub manifest: RunManifest,
    pub items: Vec<ItemReport>,
    pub rankings: Vec<CountryRanking>,
    pub map: Option<MapCoordinates>,
}

impl RunBundle {
    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("bundle serializes");
        text.push('\n');
        text
    }

    /// Internal id consistency: every score and every per-item ranking
    /// refers to an item report that exists.
    pub fn check_consistency(&self) -> Result<()> {
        for report in &self.items {
            for score in &report.scores {
                if score.item_id != report.result.item_id {
                    return Err(Error::SchemaViolation {
                        location: format!("items[{}].scores", report.result.item_id),
                        detail: format!("score references item {}", score.item_id),
                    });
                }
            }
        }
        for ranking in &self.rankings {
            if let crate::divergence::RankingScope::Item(item_id) = &ranking.scope {
                if !self.items.iter().any(|r| &r.result.item_id == item_id) {
                    return Err(Error::SchemaViolation {
                        location: "rankings".into(),
                        detail: format!("ranking references missing item {item_id}"),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn load_bundle(path: &Path) -> Result<RunBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bundle: RunBundle = serde_json::from_str(&text).map_err(|e| Error::MalformedDocument {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if bundle.schema != RESULTS_SCHEMA {
        return Err(Error::SchemaViolation {
            location: format!("{}: schema", path.display()),
            detail: format!("unsupported schema {:?}, expected {RESULTS_SCHEMA:?}", bundle.schema),
        });
    }
    bundle.check_consistency()?;
    Ok(bundle)
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_significant(value: f64) -> String {
    format!("{value:.16e}")
}

fn write_file(path: &Path, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Render one item's grouped bar chart (model vs per-country references).
pub fn render_item_chart(report: &ItemReport) -> String {
    let references: Vec<(String, Distribution)> = report
        .references
        .iter()
        .map(|(country, dist)| (country.clone(), dist.clone()))
        .collect();
    svg::item_bar_chart(
        &report.result.item_id,
        &report.result.aggregate,
        &references,
        &report.missing_countries,
    )
}

fn item_csv(report: &ItemReport) -> String {
    let mut csv = String::from("anchor,model");
    for country in report.references.keys() {
        let _ = write!(csv, ",{country}");
    }
    csv.push('\n');
    for (anchor_id, model_prob) in report.result.aggregate.iter() {
        let _ = write!(csv, "{anchor_id},{}", fmt_significant(model_prob));
        for reference in report.references.values() {
            let _ = write!(
                csv,
                ",{}",
                fmt_significant(reference.prob_of(anchor_id).unwrap_or(0.0))
            );
        }
        csv.push('\n');
    }
    for metric in crate::divergence::Metric::all() {
        let _ = write!(csv, "{},", metric.name());
        for country in report.references.keys() {
            let score = report
                .scores
                .iter()
                .find(|s| s.metric == metric && &s.country == country);
            match score {
                Some(score) => {
                    let _ = write!(csv, ",{}", fmt_significant(score.value));
                }
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    csv
}

fn rankings_csv(rankings: &[CountryRanking]) -> String {
    let mut csv = String::from("scope,metric,rank,country,value\n");
    for ranking in rankings {
        let scope = match &ranking.scope {
            crate::divergence::RankingScope::Item(id) => id.clone(),
            crate::divergence::RankingScope::Aggregate => "aggregate".into(),
        };
        for (rank, (country, value)) in ranking.entries.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{scope},{},{},{country},{}",
                ranking.metric.name(),
                rank + 1,
                fmt_significant(*value)
            );
        }
    }
    csv
}

fn map_csv(map: &MapCoordinates, label: &str) -> String {
    let mut csv = String::from("label,mode,trad_sec,surv_self,coverage\n");
    let _ = writeln!(
        csv,
        "{label},{},{},{},{}",
        map.mode.name(),
        fmt_significant(map.traditional_secular),
        fmt_significant(map.survival_selfexpression),
        fmt_significant(map.coverage)
    );
    csv
}

/// Write `map.csv` and `map.svg` for one coordinate row, with optional
/// overlay points (reference coordinates, human country positions) plotted
/// after the run's own point.
pub fn emit_map_files(
    map: &MapCoordinates,
    label: &str,
    overlay: &[svg::MapPoint],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    write_file(&out_dir.join("map.csv"), &map_csv(map, label), &mut written)?;
    let mut points = vec![svg::MapPoint {
        label: label.to_string(),
        mode: map.mode.name().into(),
        trad_sec: map.traditional_secular,
        surv_self: map.survival_selfexpression,
    }];
    points.extend_from_slice(overlay);
    write_file(
        &out_dir.join("map.svg"),
        &svg::map_scatter_svg(&points),
        &mut written,
    )?;
    Ok(written)
}

/// Write the full output tree. Layout is fixed: `manifest.json`,
/// `results.json`, `items/<id>.csv`, `items/<id>.svg`, `rankings.csv`,
/// `map.csv`, `map.svg`. Returns the written paths in order.
pub fn emit_bundle(bundle: &RunBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let mut manifest_json =
        serde_json::to_string_pretty(&bundle.manifest).expect("manifest serializes");
    manifest_json.push('\n');
    write_file(&out_dir.join("manifest.json"), &manifest_json, &mut written)?;
    write_file(&out_dir.join("results.json"), &bundle.to_json_string(), &mut written)?;

    if !bundle.items.is_empty() {
        let items_dir = out_dir.join("items");
        std::fs::create_dir_all(&items_dir).map_err(|e| Error::io(&items_dir, e))?;
        for report in &bundle.items {
            let csv_path = items_dir.join(format!("{}.csv", report.result.item_id));
            write_file(&csv_path, &item_csv(report), &mut written)?;
            if !report.references.is_empty() {
                let svg_path = items_dir.join(format!("{}.svg", report.result.item_id));
                write_file(&svg_path, &render_item_chart(report), &mut written)?;
            }
        }
    }

    if !bundle.rankings.is_empty() {
        write_file(
            &out_dir.join("rankings.csv"),
            &rankings_csv(&bundle.rankings),
            &mut written,
        )?;
    }

    if let Some(map) = &bundle.map {
        written.extend(emit_map_files(
            map,
            &bundle.manifest.backend.model_id,
            &[],
            out_dir,
        )?);
    }

    Ok(written)
}
