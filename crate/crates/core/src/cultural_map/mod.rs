//! Projection of item results onto the two-factor cultural map.
//!
//! Each item contributes a scalar in [0,1] — the probability-weighted mean
//! of its anchor scale positions, reflected so that 1 always points toward
//! the Secular / Self-Expression pole — and each axis coordinate is the
//! loading-weighted mean of its items' scalars with normalized weights.
//! This projection convention is ours; the published coordinates shipped
//! as a fixture are format checks, never reproduction targets.

use serde::{Deserialize, Serialize};

use crate::catalog::{Axis, Catalog, CollapseSpec, Orientation, SurveyItem};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::report::svg::{map_scatter_svg, MapPoint};
use crate::scoring::{ItemResult, PipelineMode};

/// The canonical indicator count for the two-factor map; coverage is
/// reported against it.
pub const CANONICAL_MAP_ITEM_COUNT: usize = 10;

/// A plottable position on the two-factor map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCoordinates {
    pub traditional_secular: f64,
    pub survival_selfexpression: f64,
    pub mode: PipelineMode,
    pub items_used_traditional_secular: Vec<String>,
    pub items_used_survival_selfexpression: Vec<String>,
    /// Fraction of the canonical ten indicators present.
    pub coverage: f64,
}

/// The probability-weighted mean anchor position for one item's
/// distribution, oriented so 1 points at the Secular / Self-Expression
/// pole.
pub fn item_scalar(dist: &Distribution, item: &SurveyItem) -> Result<f64> {
    let anchor_set = item.anchor_set();
    let fine_ids = anchor_set.ids();
    let positions: Vec<f64> = if dist.anchor_ids() == fine_ids.as_slice() {
        anchor_set.anchors.iter().map(|a| a.scale_position).collect()
    } else if item.collapse.is_some() && dist.anchor_ids() == CollapseSpec::collapsed_ids() {
        vec![0.0, 1.0]
    } else {
        return Err(Error::AnchorSetMismatch {
            detail: format!(
                "distribution over {:?} does not match item {} anchors",
                dist.anchor_ids(),
                item.id
            ),
        });
    };
    let expectation: f64 = dist
        .probs()
        .iter()
        .zip(&positions)
        .map(|(p, pos)| p * pos)
        .sum();
    let scalar = match item.orientation {
        Orientation::Ascends => expectation,
        Orientation::Descends => 1.0 - expectation,
    };
    Ok(scalar.clamp(0.0, 1.0))
}

/// Project item results onto both axes using the catalog's factor
/// loadings. Items without a loading are not part of the map; missing
/// canonical items lower coverage but do not fail.
pub fn map_coordinates(results: &[ItemResult], catalog: &Catalog) -> Result<MapCoordinates> {
    let mode = results
        .first()
        .map(|r| r.mode)
        .unwrap_or(PipelineMode::Naive);

    let mut sums = [(0.0f64, 0.0f64); 2]; // (Σ loading·scalar, Σ loading) per axis
    let mut items_used: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    for result in results {
        let Some(item) = catalog.item(&result.item_id) else {
            continue;
        };
        let Some(loading) = item.loading else {
            continue;
        };
        let scalar = item_scalar(&result.aggregate, item)?;
        let axis_index = match item.axis {
            Axis::TraditionalSecular => 0,
            Axis::SurvivalSelfExpression => 1,
        };
        sums[axis_index].0 += loading * scalar;
        sums[axis_index].1 += loading;
        items_used[axis_index].push(item.id.clone());
    }

    for (axis_index, axis) in [Axis::TraditionalSecular, Axis::SurvivalSelfExpression]
        .iter()
        .enumerate()
    {
        if sums[axis_index].1 == 0.0 {
            return Err(Error::AxisUncovered {
                axis: axis.to_string(),
            });
        }
    }

    let coverage = (items_used[0].len() + items_used[1].len()) as f64
        / CANONICAL_MAP_ITEM_COUNT as f64;
    let [trad_items, surv_items] = items_used;
    Ok(MapCoordinates {
        traditional_secular: (sums[0].0 / sums[0].1).clamp(0.0, 1.0),
        survival_selfexpression: (sums[1].0 / sums[1].1).clamp(0.0, 1.0),
        mode,
        items_used_traditional_secular: trad_items,
        items_used_survival_selfexpression: surv_items,
        coverage,
    })
}

// ---------------------------------------------------------------------------
// Bundled reference coordinates (plotting/format fixture).

/// One labelled coordinate row from the bundled fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFixtureRow {
    pub label: String,
    pub mode: String,
    pub trad_sec: f64,
    pub surv_self: f64,
}

/// Outcome of a fixture check: the parsed rows and the scatter they render
/// into.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFixtureReport {
    pub rows: Vec<MapFixtureRow>,
    pub svg: String,
}

/// The reference coordinate rows bundled with the crate.
pub fn builtin_map_fixture() -> &'static str {
    include_str!("reference_points.csv")
}

/// Parse fixture CSV rows, verify every coordinate lies in [0,1]², and
/// render them into the scatter plot. A plumbing check: the distributions
/// behind these coordinates are not available, only the plotted values.
pub fn check_map_fixture(csv_text: &str) -> Result<MapFixtureReport> {
    let mut rows = Vec::new();
    let mut lines = csv_text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "label,mode,trad_sec,surv_self" => {}
        Some((_, header)) => {
            return Err(Error::FixtureCorrupt {
                detail: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Ok(MapFixtureReport {
                rows,
                svg: map_scatter_svg(&[]),
            })
        }
    }
    for (line_number, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::FixtureCorrupt {
                detail: format!("line {}: expected 4 fields, found {}", line_number + 1, fields.len()),
            });
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| Error::FixtureCorrupt {
                detail: format!("line {}: {name} {field:?} is not a number", line_number + 1),
            })
        };
        let row = MapFixtureRow {
            label: fields[0].trim().to_string(),
            mode: fields[1].trim().to_string(),
            trad_sec: parse(fields[2], "trad_sec")?,
            surv_self: parse(fields[3], "surv_self")?,
        };
        for (name, value) in [("trad_sec", row.trad_sec), ("surv_self", row.surv_self)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::FixtureCorrupt {
                    detail: format!(
                        "row {} ({}): {name} = {value} outside [0,1]",
                        line_number + 1,
                        row.label
                    ),
                });
            }
        }
        rows.push(row);
    }

    let points: Vec<MapPoint> = rows
        .iter()
        .map(|row| MapPoint {
            label: row.label.clone(),
            mode: row.mode.clone(),
            trad_sec: row.trad_sec,
            surv_self: row.surv_self,
        })
        .collect();
    let svg = map_scatter_svg(&points);
    for row in &rows {
        let marker = format!("{} ({})", row.label, row.mode);
        if !svg.contains(&marker) {
            return Err(Error::FixtureCorrupt {
                detail: format!("row {marker:?} did not render into the plot"),
            });
        }
    }
    Ok(MapFixtureReport { rows, svg })
}
