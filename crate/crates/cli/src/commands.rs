//! Subcommand implementations. Each returns the process exit code:
//! 0 success, 1 validation violations, 2 usage/parse, 3 backend,
//! 4 partial run failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use value_lens::backend::{create_backend, ScoreCache};
use value_lens::catalog::{load_catalog, validate_catalog, Catalog, SurveyItem};
use value_lens::cultural_map::{
    builtin_map_fixture, check_map_fixture, map_coordinates,
};
use value_lens::distribution::Distribution;
use value_lens::divergence::{
    evaluate_metric, rank_countries, CountryRanking, DivergenceScore, Metric, RankingScope,
};
use value_lens::error::{Error, Result};
use value_lens::prompts::PromptTemplate;
use value_lens::report::{
    emit_bundle, emit_map_files, load_bundle, ItemReport, ManifestBackend, RunBundle,
    RunManifest, SessionStats, MANIFEST_SCHEMA, RESULTS_SCHEMA,
};
use value_lens::scoring::{
    estimate_priors, iia_diagnostic, run_item, strategy, ItemResult, PipelineMode,
    PriorStore, PRIOR_FLOOR,
};

use crate::config::RunConfig;

const PRIOR_SCOPE_NOTE: &str =
    "one prior per distinct anchor set (keyed by anchor ids and texts)";

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn file_hash(path: &Path) -> Result<String> {
    value_lens::hash::file_sha256(path)
}

pub fn cmd_validate(catalog_path: &Path) -> Result<i32> {
    let catalog = load_catalog(catalog_path)?;
    let report = validate_catalog(&catalog);
    println!("{report}");
    Ok(if report.is_empty() { 0 } else { 1 })
}

fn load_valid_catalog(path: &Path) -> Result<std::result::Result<Catalog, i32>> {
    let catalog = load_catalog(path)?;
    let report = validate_catalog(&catalog);
    if !report.is_empty() {
        eprintln!("catalog failed validation:\n{report}");
        return Ok(Err(1));
    }
    Ok(Ok(catalog))
}

fn select_items<'a>(catalog: &'a Catalog, filter: &Option<Vec<String>>) -> Result<Vec<&'a SurveyItem>> {
    match filter {
        None => Ok(catalog.items.iter().collect()),
        Some(wanted) => {
            let mut selected = Vec::with_capacity(wanted.len());
            for id in wanted {
                let item = catalog.item(id).ok_or_else(|| Error::SchemaViolation {
                    location: "--items".into(),
                    detail: format!("unknown item {id:?}"),
                })?;
                selected.push(item);
            }
            Ok(selected)
        }
    }
}

fn select_countries(catalog: &Catalog, filter: &Option<Vec<String>>) -> Result<Vec<String>> {
    match filter {
        None => Ok(catalog.countries.clone()),
        Some(wanted) => {
            for country in wanted {
                if !catalog.countries.contains(country) {
                    return Err(Error::SchemaViolation {
                        location: "--countries".into(),
                        detail: format!("unknown country {country:?}"),
                    });
                }
            }
            Ok(wanted.clone())
        }
    }
}

fn open_cache(path: &Path) -> Result<ScoreCache> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    ScoreCache::open(path)
}

fn template_from(config: &RunConfig) -> Result<PromptTemplate> {
    match &config.template {
        Some(text) => PromptTemplate::new(text.clone()),
        None => Ok(PromptTemplate::default()),
    }
}

pub fn cmd_estimate_priors(config: &RunConfig, out: &Path) -> Result<i32> {
    let catalog = match load_valid_catalog(&config.catalog)? {
        Ok(catalog) => catalog,
        Err(code) => return Ok(code),
    };
    let items = select_items(&catalog, &config.items)?;
    let backend = create_backend(&config.backend_config())?;
    let cache = open_cache(&config.cache)?;

    let mut store = PriorStore::new(config.neutral_contexts.clone());
    for item in &items {
        let anchor_set = item.anchor_set();
        if store.lookup(&anchor_set)?.is_some() {
            continue;
        }
        let prior = estimate_priors(
            &anchor_set,
            &config.neutral_contexts,
            backend.as_ref(),
            &cache,
            config.concurrency,
        )?;
        println!("anchor set of {} ({} anchors):", item.id, anchor_set.len());
        for (anchor_id, p) in prior.distribution.iter() {
            println!("  {anchor_id:<28} {p:.6}");
        }
        store.insert(&anchor_set, &prior);
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    store.save(out)?;
    println!(
        "wrote {} prior(s) to {} (floor {PRIOR_FLOOR:e})",
        store.priors.len(),
        out.display()
    );
    Ok(0)
}

pub fn cmd_run(config: &RunConfig) -> Result<i32> {
    let started_at = now_rfc3339();
    let catalog = match load_valid_catalog(&config.catalog)? {
        Ok(catalog) => catalog,
        Err(code) => return Ok(code),
    };
    let items = select_items(&catalog, &config.items)?;
    let countries = select_countries(&catalog, &config.countries)?;

    let mode: PipelineMode = config.mode.parse()?;
    let pipeline = strategy(&config.mode)?;
    let template = template_from(config)?;
    let backend = create_backend(&config.backend_config())?;
    let cache = open_cache(&config.cache)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    // Priors: from a file, or estimated inline and persisted beside the run.
    let mut prior_file = config.prior_file.clone();
    let prior_store = if pipeline.requires_prior() {
        if let Some(path) = &config.prior_file {
            Some(PriorStore::load(path)?)
        } else if config.estimate_priors {
            let mut store = PriorStore::new(config.neutral_contexts.clone());
            for item in &items {
                let anchor_set = item.anchor_set();
                if store.lookup(&anchor_set)?.is_none() {
                    let prior = estimate_priors(
                        &anchor_set,
                        &config.neutral_contexts,
                        backend.as_ref(),
                        &cache,
                        config.concurrency,
                    )?;
                    store.insert(&anchor_set, &prior);
                }
            }
            let path = config.out_dir.join("priors.json");
            store.save(&path)?;
            prior_file = Some(path);
            Some(store)
        } else {
            return Err(Error::SchemaViolation {
                location: "config".into(),
                detail: "mode sets-bayes requires --prior <file> or --estimate-priors".into(),
            });
        }
    } else {
        None
    };
    let prior_file_hash = match &prior_file {
        Some(path) if pipeline.requires_prior() => Some(file_hash(path)?),
        _ => None,
    };

    let mut failed_items: BTreeMap<String, String> = BTreeMap::new();
    let mut item_reports: Vec<ItemReport> = Vec::new();
    let mut rankings: Vec<CountryRanking> = Vec::new();
    let mut smoothing_events = 0u64;

    for item in &items {
        let prior = match &prior_store {
            Some(store) => match store.lookup(&item.anchor_set())? {
                Some(prior) => Some(prior),
                None => {
                    failed_items.insert(
                        item.id.clone(),
                        "no prior recorded for this item's anchor set".into(),
                    );
                    continue;
                }
            },
            None => None,
        };
        let result = match run_item(
            item,
            mode,
            &template,
            backend.as_ref(),
            &cache,
            prior.as_ref(),
            config.concurrency,
        ) {
            Ok(result) => result,
            Err(e) => {
                failed_items.insert(item.id.clone(), e.to_string());
                continue;
            }
        };

        let mut references: BTreeMap<String, Distribution> = BTreeMap::new();
        let mut missing_countries = Vec::new();
        let mut scores = Vec::new();
        for country in &countries {
            match catalog.reference_distribution(country, &item.id)? {
                Some(reference) => {
                    for metric in Metric::all() {
                        let outcome = evaluate_metric(metric, &reference, &result.aggregate)?;
                        if outcome.smoothed {
                            smoothing_events += 1;
                        }
                        scores.push(DivergenceScore {
                            item_id: item.id.clone(),
                            country: country.clone(),
                            metric,
                            value: outcome.value,
                            smoothed: outcome.smoothed,
                        });
                    }
                    references.insert(country.clone(), reference);
                }
                None => missing_countries.push(country.clone()),
            }
        }
        if !references.is_empty() {
            let reference_list: Vec<(String, Distribution)> = references
                .iter()
                .map(|(country, dist)| (country.clone(), dist.clone()))
                .collect();
            for metric in Metric::all() {
                rankings.push(rank_countries(
                    RankingScope::Item(item.id.clone()),
                    &reference_list,
                    &result.aggregate,
                    metric,
                    missing_countries.clone(),
                )?);
            }
        }
        item_reports.push(ItemReport {
            result,
            references,
            scores,
            missing_countries,
        });
    }

    // Cross-item aggregate ranking: unweighted mean per country, with the
    // per-country item count implicit in the per-item rankings above.
    for metric in Metric::all() {
        let mut entries: Vec<(String, f64)> = Vec::new();
        let mut omitted: Vec<String> = Vec::new();
        for country in &countries {
            let values: Vec<&DivergenceScore> = item_reports
                .iter()
                .flat_map(|r| &r.scores)
                .filter(|s| &s.country == country && s.metric == metric)
                .collect();
            if values.is_empty() {
                omitted.push(country.clone());
            } else {
                let mean = values.iter().map(|s| s.value).sum::<f64>() / values.len() as f64;
                entries.push((country.clone(), mean));
            }
        }
        if !entries.is_empty() {
            entries.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            });
            rankings.push(CountryRanking {
                scope: RankingScope::Aggregate,
                metric,
                entries,
                omitted,
            });
        }
    }

    let results_for_map: Vec<ItemResult> =
        item_reports.iter().map(|r| r.result.clone()).collect();
    let map = match map_coordinates(&results_for_map, &catalog) {
        Ok(map) => Some(map),
        Err(Error::AxisUncovered { axis }) => {
            eprintln!("note: no map coordinates ({axis} axis has no loaded items)");
            None
        }
        Err(e) => return Err(e),
    };

    let stats = cache.stats();
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        backend: ManifestBackend {
            name: config.backend.clone(),
            model_id: config.model.clone(),
            endpoint: config.endpoint.clone(),
            credential_env: Some(config.credential_env.clone()),
            credential_present: config.credential().is_some(),
            length_normalize: config.length_normalize,
            timeout_ms: config.timeout_ms,
            max_retries: config.max_retries,
        },
        catalog_path: config.catalog.display().to_string(),
        catalog_hash: file_hash(&config.catalog)?,
        template: template.as_str().to_string(),
        mode: config.mode.clone(),
        paraphrase_counts: items
            .iter()
            .map(|i| (i.id.clone(), i.paraphrases.len()))
            .collect(),
        anchor_counts: items
            .iter()
            .map(|i| (i.id.clone(), i.anchors.len()))
            .collect(),
        prior_file: prior_file.map(|p| p.display().to_string()),
        prior_file_hash,
        prior_floor: PRIOR_FLOOR,
        prior_scope: PRIOR_SCOPE_NOTE.into(),
        neutral_context_hashes: PriorStore::new(config.neutral_contexts.clone()).context_hashes,
        length_normalization: config.length_normalize,
        smoothing_events,
        failed_items: failed_items.clone(),
        effective_config: config.manifest_view(),
        session: SessionStats {
            started_at,
            finished_at: now_rfc3339(),
            backend_calls: stats.backend_calls,
            cache_hits: stats.hits,
        },
    };

    let bundle = RunBundle {
        schema: RESULTS_SCHEMA.into(),
        manifest,
        items: item_reports,
        rankings,
        map,
    };
    let written = emit_bundle(&bundle, &config.out_dir)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!(
        "{} item(s), {} failed; backend calls {}, cache hits {}",
        bundle.items.len(),
        failed_items.len(),
        stats.backend_calls,
        stats.hits
    );
    Ok(if failed_items.is_empty() { 0 } else { 4 })
}

pub fn cmd_diag_iia(config: &RunConfig, item_id: &str, anchor_id: &str) -> Result<i32> {
    let catalog = match load_valid_catalog(&config.catalog)? {
        Ok(catalog) => catalog,
        Err(code) => return Ok(code),
    };
    let item = catalog.item(item_id).ok_or_else(|| Error::SchemaViolation {
        location: "--item".into(),
        detail: format!("unknown item {item_id:?}"),
    })?;
    let template = template_from(config)?;
    let backend = create_backend(&config.backend_config())?;
    let cache = open_cache(&config.cache)?;

    let report = iia_diagnostic(
        item,
        anchor_id,
        &template,
        backend.as_ref(),
        &cache,
        config.concurrency,
    )?;
    println!("item {item_id}, removed anchor {anchor_id}");
    println!("shared anchors: {}", report.shared_anchor_ids.join(", "));
    println!("full set (renormalized over shared anchors):");
    for (anchor, p) in report.full_restricted.iter() {
        println!("  {anchor:<28} {p:.6}");
    }
    println!("reduced set (re-scored without {anchor_id}):");
    for (anchor, p) in report.reduced.iter() {
        println!("  {anchor:<28} {p:.6}");
    }
    println!("IIA violation magnitude (L1): {:.6}", report.violation_l1);
    Ok(0)
}

pub fn cmd_map(
    results: Option<&Path>,
    catalog_override: Option<&Path>,
    out: Option<&Path>,
    overlay: Option<&Path>,
    check_fixture: bool,
    fixture: Option<&Path>,
) -> Result<i32> {
    if check_fixture {
        let text = match fixture {
            Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
            None => builtin_map_fixture().to_string(),
        };
        let report = check_map_fixture(&text)?;
        println!("{} fixture row(s), all within [0,1]²", report.rows.len());
        for row in &report.rows {
            println!(
                "  {} ({}): trad_sec {:.4}, surv_self {:.4}",
                row.label, row.mode, row.trad_sec, row.surv_self
            );
        }
        println!("rendered {} point(s) into the scatter", report.rows.len());
        return Ok(0);
    }

    let results_path = results.ok_or_else(|| Error::SchemaViolation {
        location: "--results".into(),
        detail: "a results.json path is required unless --check-fixture is given".into(),
    })?;
    let bundle = load_bundle(results_path)?;
    let catalog_path = match catalog_override {
        Some(path) => path.to_path_buf(),
        None => PathBuf::from(&bundle.manifest.catalog_path),
    };
    let catalog = load_catalog(&catalog_path)?;
    let item_results: Vec<ItemResult> = bundle.items.iter().map(|r| r.result.clone()).collect();
    let map = map_coordinates(&item_results, &catalog)?;
    println!(
        "trad_sec {:.4}, surv_self {:.4} (mode {}, coverage {:.2})",
        map.traditional_secular,
        map.survival_selfexpression,
        map.mode,
        map.coverage
    );
    let out_dir = match out {
        Some(path) => path.to_path_buf(),
        None => results_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let overlay_points = match overlay {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            check_map_fixture(&text)?
                .rows
                .into_iter()
                .map(|row| value_lens::report::svg::MapPoint {
                    label: row.label,
                    mode: row.mode,
                    trad_sec: row.trad_sec,
                    surv_self: row.surv_self,
                })
                .collect()
        }
        None => Vec::new(),
    };
    let written = emit_map_files(
        &map,
        &bundle.manifest.backend.model_id,
        &overlay_points,
        &out_dir,
    )?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub fn cmd_report(results: &Path, out: &Path) -> Result<i32> {
    let bundle = load_bundle(results)?;
    let written = emit_bundle(&bundle, out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}
