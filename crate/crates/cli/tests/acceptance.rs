#![allow(clippy::excessive_precision)] // frozen oracle values keep their full digits

//! Acceptance suite: one test per criterion, each printing a pass line and
//! holding to its stated tolerance and runtime budget.
//!
//! Run with `cargo test -p value-lens-cli --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use value_lens::backend::{
    score, write_fixture, BackendParams, FixtureServer, MockBackend, RemoteBackend, ScoreCache,
};
use value_lens::catalog::{load_catalog, Axis, Orientation, RawAnchor, SurveyItem};
use value_lens::cultural_map::{builtin_map_fixture, check_map_fixture, map_coordinates};
use value_lens::distribution::Distribution;
use value_lens::error::Error;
use value_lens::prompts::{PromptTemplate, RenderedPrompt, ScoringRequest};
use value_lens::scoring::{
    aggregate, bayes_correct, estimate_priors, iia_diagnostic, run_item, softmax, ItemResult,
    PipelineMode, PriorDistribution, DEFAULT_NEUTRAL_CONTEXTS,
};

fn sample_catalog() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sample/catalog.json")
}

fn sample_seeds() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sample/mock_seeds.json")
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Distribution {
    let ids: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    Distribution::from_weights(ids, weights).unwrap()
}

fn budget(start: Instant, limit: Duration, criterion: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < limit,
        "{criterion} exceeded its runtime budget: {elapsed:?} > {limit:?}"
    );
}

#[test]
fn criterion_1_metric_correctness() {
    let start = Instant::now();

    // 0.92 vs 0.84 contributes 0.08, exact to 1e-12
    let contribution = (0.92f64 - 0.84f64).abs();
    assert!((contribution - 0.08).abs() < 1e-12);

    // KL(p, p) = 0 for 1000 random distributions
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.gen_range(2..8);
        let p = random_distribution(&mut rng, n);
        let outcome = value_lens::divergence::kl_divergence(&p, &p).unwrap();
        assert_eq!(outcome.value, 0.0);
    }

    // KL([0.5,0.5],[0.9,0.1]) against the 50-digit oracle value
    let p = Distribution::new(vec!["a".into(), "b".into()], vec![0.5, 0.5]).unwrap();
    let q = Distribution::new(vec!["a".into(), "b".into()], vec![0.9, 0.1]).unwrap();
    let outcome = value_lens::divergence::kl_divergence(&p, &q).unwrap();
    assert!((outcome.value - 0.5108256237659906832055141).abs() < 1e-12);

    budget(start, Duration::from_secs(1), "criterion 1");
    println!("[criterion 1] PASS — metric correctness against frozen oracle values");
}

/// Independent softmax: no max-shift, compensated summation.
fn oracle_softmax(log_likelihoods: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = log_likelihoods.iter().map(|ll| ll.exp()).collect();
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for e in &exps {
        let y = e - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    exps.iter().map(|e| e / sum).collect()
}

#[test]
fn criterion_2_softmax_and_aggregation_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    for case in 0..10_000 {
        let n = rng.gen_range(2..9);
        let lls: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..10.0)).collect();
        let got = softmax(&lls);
        let want = oracle_softmax(&lls);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "case {case}: {g} vs {w}");
        }
        let sum: f64 = got.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "case {case}: sum {sum}");

        // aggregation against a compensated elementwise mean
        let k = rng.gen_range(1..6);
        let ids: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
        let dists: Vec<Distribution> = (0..k)
            .map(|_| random_distribution(&mut rng, n))
            .map(|d| Distribution::new(ids.clone(), d.probs().to_vec()).unwrap())
            .collect();
        let combined = aggregate(&dists).unwrap();
        for j in 0..n {
            let mut sum = 0.0;
            let mut compensation = 0.0;
            for d in &dists {
                let y = d.probs()[j] - compensation;
                let t = sum + y;
                compensation = (t - sum) - y;
                sum = t;
            }
            let mean = sum / k as f64;
            assert!(
                (combined.probs()[j] - mean).abs() < 1e-12,
                "case {case} anchor {j}"
            );
        }
        let total: f64 = combined.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    budget(start, Duration::from_secs(5), "criterion 2");
    println!("[criterion 2] PASS — 10,000 fuzzed softmax/aggregation cases match oracles");
}

#[test]
fn criterion_3_bayes_correction_properties() {
    let start = Instant::now();

    // uniform-prior identity, exact on a dyadic fixture
    let ids: Vec<String> = (0..4).map(|i| format!("a{i}")).collect();
    let observed =
        Distribution::new(ids.clone(), vec![0.5, 0.25, 0.125, 0.125]).unwrap();
    let uniform = PriorDistribution {
        distribution: Distribution::uniform(ids.clone()).unwrap(),
        provenance: vec![],
    };
    let corrected = bayes_correct(&observed, &uniform).unwrap();
    assert_eq!(corrected.probs(), observed.probs());

    // self-correction lands exactly on uniform
    let prior = PriorDistribution {
        distribution: observed.clone(),
        provenance: vec![],
    };
    let self_corrected = bayes_correct(&observed, &prior).unwrap();
    assert_eq!(self_corrected.probs(), &[0.25, 0.25, 0.25, 0.25]);

    // reconstruction: observed ∝ prior × target ⇒ output = target
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rng.gen_range(2..8);
        let prior_dist = random_distribution(&mut rng, n);
        let target = Distribution::new(
            prior_dist.anchor_ids().to_vec(),
            random_distribution(&mut rng, n).probs().to_vec(),
        )
        .unwrap();
        let observed_weights: Vec<f64> = prior_dist
            .probs()
            .iter()
            .zip(target.probs())
            .map(|(p, t)| p * t)
            .collect();
        let observed =
            Distribution::from_weights(prior_dist.anchor_ids().to_vec(), observed_weights)
                .unwrap();
        let prior = PriorDistribution {
            distribution: prior_dist,
            provenance: vec![],
        };
        let reconstructed = bayes_correct(&observed, &prior).unwrap();
        for (got, want) in reconstructed.probs().iter().zip(target.probs()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    budget(start, Duration::from_secs(1), "criterion 3");
    println!("[criterion 3] PASS — Bayes correction identities and reconstruction");
}

#[test]
fn criterion_4_pipeline_version_separation() {
    let start = Instant::now();

    let catalog = load_catalog(&sample_catalog()).unwrap();
    let item = catalog.item("Q164").unwrap();
    let backend = MockBackend::from_seed_file(
        "mock-model",
        BackendParams::default(),
        &sample_seeds(),
    )
    .unwrap();
    let cache = ScoreCache::in_memory();
    let template = PromptTemplate::default();
    let contexts: Vec<String> = DEFAULT_NEUTRAL_CONTEXTS
        .iter()
        .map(|c| c.to_string())
        .collect();

    let prior =
        estimate_priors(&item.anchor_set(), &contexts, &backend, &cache, 4).unwrap();
    let naive = run_item(item, PipelineMode::Naive, &template, &backend, &cache, None, 4)
        .unwrap();
    let sets = run_item(item, PipelineMode::PromptSets, &template, &backend, &cache, None, 4)
        .unwrap();
    let bayes = run_item(
        item,
        PipelineMode::PromptSetsBayes,
        &template,
        &backend,
        &cache,
        Some(&prior),
        4,
    )
    .unwrap();

    let distinct = |a: &Distribution, b: &Distribution| {
        a.probs()
            .iter()
            .zip(b.probs())
            .any(|(x, y)| (x - y).abs() > 1e-6)
    };
    assert!(distinct(&naive.aggregate, &sets.aggregate), "naive vs sets");
    assert!(distinct(&sets.aggregate, &bayes.aggregate), "sets vs bayes");
    assert!(distinct(&naive.aggregate, &bayes.aggregate), "naive vs bayes");

    // the correction direction: corrected mass on the over-preferred
    // anchor is strictly below the uncorrected mass
    let uncorrected = sets.aggregate.prob_of("very_important").unwrap();
    let corrected = bayes.aggregate.prob_of("very_important").unwrap();
    assert!(
        corrected < uncorrected,
        "corrected {corrected} vs uncorrected {uncorrected}"
    );

    budget(start, Duration::from_secs(2), "criterion 4");
    println!("[criterion 4] PASS — naive / sets / sets-bayes separate; correction reduces the preferred anchor");
}

#[test]
fn criterion_5_cultural_map_properties() {
    let start = Instant::now();

    // constant scalars 0.5 on every item → exactly (0.5, 0.5)
    let mut items = Vec::new();
    let mut results = Vec::new();
    let specs: [(&str, Axis, f64); 10] = [
        ("Q17", Axis::TraditionalSecular, 0.61),
        ("Q45", Axis::TraditionalSecular, 0.51),
        ("Q164", Axis::TraditionalSecular, 0.70),
        ("Q184", Axis::TraditionalSecular, 0.61),
        ("Q254", Axis::TraditionalSecular, 0.60),
        ("Q46", Axis::SurvivalSelfExpression, 0.59),
        ("Q57", Axis::SurvivalSelfExpression, 0.44),
        ("Q156", Axis::SurvivalSelfExpression, 0.59),
        ("Q182", Axis::SurvivalSelfExpression, 0.58),
        ("Q209", Axis::SurvivalSelfExpression, 0.54),
    ];
    for (id, axis, loading) in specs {
        let item = SurveyItem {
            id: id.into(),
            wording: id.into(),
            axis,
            loading: Some(loading),
            anchors: vec![
                RawAnchor {
                    id: "low".into(),
                    text: "low".into(),
                    scale_position: None,
                },
                RawAnchor {
                    id: "high".into(),
                    text: "high".into(),
                    scale_position: None,
                },
            ],
            paraphrases: vec![id.into()],
            orientation: Orientation::Ascends,
            collapse: None,
            paraphrase_weights: None,
        };
        results.push(ItemResult {
            item_id: id.into(),
            mode: PipelineMode::PromptSets,
            per_paraphrase: vec![],
            aggregate: Distribution::new(
                vec!["low".into(), "high".into()],
                vec![0.5, 0.5],
            )
            .unwrap(),
            prior_used: None,
        });
        items.push(item);
    }
    let catalog = value_lens::catalog::Catalog {
        schema: value_lens::catalog::CATALOG_SCHEMA.into(),
        countries: vec![],
        items: items.clone(),
        references: vec![],
    };
    let coords = map_coordinates(&results, &catalog).unwrap();
    assert_eq!(coords.traditional_secular, 0.5);
    assert_eq!(coords.survival_selfexpression, 0.5);

    // loading-rescale invariance within 1e-12
    let mut rescaled_catalog = catalog.clone();
    for item in &mut rescaled_catalog.items {
        item.loading = item.loading.map(|l| l * 0.371);
    }
    let mut varied_results = results.clone();
    for (i, result) in varied_results.iter_mut().enumerate() {
        let p = 0.1 + 0.08 * i as f64;
        result.aggregate =
            Distribution::new(vec!["low".into(), "high".into()], vec![1.0 - p, p]).unwrap();
    }
    let base = map_coordinates(&varied_results, &catalog).unwrap();
    let rescaled = map_coordinates(&varied_results, &rescaled_catalog).unwrap();
    assert!((base.traditional_secular - rescaled.traditional_secular).abs() < 1e-12);
    assert!(
        (base.survival_selfexpression - rescaled.survival_selfexpression).abs() < 1e-12
    );

    // published factor loadings round-trip through the catalog bit-exact
    let loaded = load_catalog(&sample_catalog()).unwrap();
    let expected: BTreeMap<&str, f64> = [
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
    ]
    .into_iter()
    .collect();
    for (id, loading) in expected {
        let got = loaded.item(id).unwrap().loading.unwrap();
        assert_eq!(got.to_bits(), loading.to_bits(), "loading for {id}");
    }

    // the six bundled coordinate rows parse, lie in [0,1]², and render
    let fixture = check_map_fixture(builtin_map_fixture()).unwrap();
    assert_eq!(fixture.rows.len(), 6);
    for row in &fixture.rows {
        assert!((0.0..=1.0).contains(&row.trad_sec));
        assert!((0.0..=1.0).contains(&row.surv_self));
    }
    assert!(fixture.svg.contains("<circle"));

    budget(start, Duration::from_secs(1), "criterion 5");
    println!("[criterion 5] PASS — cultural-map identities, loadings bit-exact, fixture renders");
}

#[test]
fn criterion_6_iia_diagnostic() {
    let start = Instant::now();

    let anchors: [(&str, &str); 4] = [
        ("a0", "very important"),
        ("a1", "rather important"),
        ("a2", "not very important"),
        ("a3", "not at all important"),
    ];
    let item = SurveyItem {
        id: "family".into(),
        wording: "How important is family in your life?".into(),
        axis: Axis::TraditionalSecular,
        loading: None,
        anchors: anchors
            .iter()
            .map(|(id, text)| RawAnchor {
                id: (*id).into(),
                text: (*text).into(),
                scale_position: None,
            })
            .collect(),
        paraphrases: vec!["How important is family in your life?".into()],
        orientation: Orientation::Descends,
        collapse: None,
        paraphrase_weights: None,
    };

    // context-free mock: violation magnitude 0 within 1e-9
    let mut context_free = MockBackend::new("mock-model", BackendParams::default());
    let plain_prompt = "How important is family in your life?\nAnswer: ";
    for (probability, (_, text)) in [0.84f64, 0.05, 0.07, 0.04].iter().zip(anchors) {
        context_free.seed(plain_prompt, text, probability.ln());
    }
    let cache = ScoreCache::in_memory();
    let report = iia_diagnostic(
        &item,
        "a3",
        &PromptTemplate::default(),
        &context_free,
        &cache,
        4,
    )
    .unwrap();
    assert!(report.violation_l1 < 1e-9, "violation {}", report.violation_l1);

    // option-sensitive fixture patterned on 84/7 → 75/15; hand-computed
    // L1 over shared anchors: |0.875−0.75| + |0.052083…−0.10| +
    // |0.072917…−0.15| = 0.25
    let template =
        PromptTemplate::new("{question} Options: {options}.\nAnswer: {anchor}").unwrap();
    let full_prompt = "How important is family in your life? Options: very important, rather important, not very important, not at all important.\nAnswer: ";
    let reduced_prompt = "How important is family in your life? Options: very important, rather important, not very important.\nAnswer: ";
    let mut sensitive = MockBackend::new("mock-model", BackendParams::default());
    for (probability, (_, text)) in [0.84f64, 0.05, 0.07, 0.04].iter().zip(anchors) {
        sensitive.seed(full_prompt, text, probability.ln());
    }
    for (probability, (_, text)) in [0.75f64, 0.10, 0.15].iter().zip(&anchors[..3]) {
        sensitive.seed(reduced_prompt, *text, probability.ln());
    }
    let cache = ScoreCache::in_memory();
    let report = iia_diagnostic(&item, "a3", &template, &sensitive, &cache, 4).unwrap();
    assert!(
        (report.violation_l1 - 0.25).abs() < 1e-9,
        "violation {}",
        report.violation_l1
    );

    budget(start, Duration::from_secs(1), "criterion 6");
    println!("[criterion 6] PASS — IIA zero for context-free scoring; patterned fixture shift reproduced");
}

fn run_sample(dir: &Path, out: &str, extra: &[&str]) -> serde_json::Value {
    let output = Command::new(env!("CARGO_BIN_EXE_value-lens"))
        .current_dir(dir)
        .args(["run", "--backend", "mock", "--mode", "sets", "--out", out])
        .args(["--cache", "cache.jsonl"])
        .args(extra)
        .arg("--mock-seeds")
        .arg(sample_seeds())
        .arg("--catalog")
        .arg(sample_catalog())
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_str(
        &std::fs::read_to_string(dir.join(out).join("manifest.json")).unwrap(),
    )
    .unwrap()
}

fn null_session(text: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(text).unwrap();
    if value.get("session").is_some() {
        value["session"] = json!(null);
    }
    if value.get("manifest").is_some() {
        value["manifest"]["session"] = json!(null);
    }
    value.to_string()
}

#[test]
fn criterion_7_end_to_end_determinism_and_cache_audit() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let first = run_sample(dir.path(), "out", &[]);
    // cold-cache call count equals Σ |paraphrases| × |anchors| exactly
    let paraphrases = first["paraphrase_counts"].as_object().unwrap();
    let anchors = first["anchor_counts"].as_object().unwrap();
    let expected_calls: u64 = paraphrases
        .iter()
        .map(|(id, count)| count.as_u64().unwrap() * anchors[id].as_u64().unwrap())
        .sum();
    assert_eq!(
        first["session"]["backend_calls"].as_u64().unwrap(),
        expected_calls
    );

    // a single-item cold run shows the per-item count exactly
    let single_dir = tempfile::tempdir().unwrap();
    let single = run_sample(single_dir.path(), "out", &["--items", "Q164"]);
    assert_eq!(single["session"]["backend_calls"].as_u64().unwrap(), 4 * 4);

    // preserve the first run's outputs, then rerun into the same out dir
    let kept = dir.path().join("kept");
    copy_tree(&dir.path().join("out"), &kept);
    let second = run_sample(dir.path(), "out", &[]);
    assert_eq!(second["session"]["backend_calls"].as_u64().unwrap(), 0);

    let mut compared = 0;
    for entry in walk(&kept) {
        let relative = entry.strip_prefix(&kept).unwrap();
        let twin = dir.path().join("out").join(relative);
        let a = std::fs::read(&entry).unwrap();
        let b = std::fs::read(&twin).unwrap();
        if relative == Path::new("manifest.json") || relative == Path::new("results.json") {
            assert_eq!(
                null_session(&String::from_utf8(a).unwrap()),
                null_session(&String::from_utf8(b).unwrap()),
                "differs beyond the session block: {}",
                relative.display()
            );
        } else {
            assert_eq!(a, b, "differs: {}", relative.display());
        }
        compared += 1;
    }
    assert!(compared > 10, "expected a full output tree, saw {compared} files");

    budget(start, Duration::from_secs(5), "criterion 7");
    println!("[criterion 7] PASS — deterministic reruns; call counts match paraphrase × anchor cardinality");
}

fn copy_tree(from: &Path, to: &Path) {
    for entry in walk(from) {
        let relative = entry.strip_prefix(from).unwrap();
        let target = to.join(relative);
        std::fs::create_dir_all(target.parent().unwrap()).unwrap();
        std::fs::copy(&entry, &target).unwrap();
    }
}

#[test]
fn criterion_8_hermetic_wire_protocol() {
    let start = Instant::now();
    let fixtures = tempfile::tempdir().unwrap();
    let model = "fixture-model";

    // frozen response: two continuation tokens whose sum the client must
    // reproduce bit for bit
    let logprobs = [-0.3566749439387324, -0.9162907318741551];
    write_fixture(
        fixtures.path(),
        model,
        "Q\nAnswer: ",
        "very important",
        &json!({
            "tokens": ["Q", "\nAnswer: ", "very ", "important"],
            "token_logprobs": [-1.0, -0.5, logprobs[0], logprobs[1]],
            "continuation_span": [2, 4],
        }),
    )
    .unwrap();
    // a misaligned recording: span tokens do not reassemble the continuation
    write_fixture(
        fixtures.path(),
        model,
        "Q\nAnswer: ",
        "rather important",
        &json!({
            "tokens": ["Q", "rather", "-important"],
            "token_logprobs": [-1.0, -0.5, -0.25],
            "continuation_span": [1, 3],
        }),
    )
    .unwrap();

    let server = FixtureServer::start(fixtures.path()).unwrap();
    let params = BackendParams {
        length_normalize: false,
        timeout_ms: 2_000,
        max_retries: 3,
        retry_backoff_ms: 5,
    };
    let backend = RemoteBackend::new(model, params, server.url(), None);
    let request = |continuation: &str| ScoringRequest {
        rendered: RenderedPrompt {
            item_id: "Q".into(),
            paraphrase_index: 0,
            text: "Q\nAnswer: ".into(),
        },
        anchor_id: continuation.replace(' ', "_"),
        continuation_text: continuation.into(),
    };

    let record = score(&request("very important"), &backend).unwrap();
    let expected: f64 = logprobs.iter().sum();
    assert_eq!(record.log_likelihood.to_bits(), expected.to_bits());
    assert_eq!(record.token_count, 2);

    let misaligned = score(&request("rather important"), &backend).unwrap_err();
    assert!(
        matches!(misaligned, Error::ContinuationMisaligned { .. }),
        "{misaligned}"
    );

    // an endpoint with nothing recorded for the request
    let missing = score(&request("not very important"), &backend).unwrap_err();
    assert!(matches!(missing, Error::BackendUnavailable { .. }), "{missing}");

    // and an endpoint that is not listening at all
    drop(server);
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let dead = RemoteBackend::new(model, params, format!("http://127.0.0.1:{port}"), None);
    let unavailable = score(&request("very important"), &dead).unwrap_err();
    assert!(
        matches!(unavailable, Error::BackendUnavailable { .. }),
        "{unavailable}"
    );

    budget(start, Duration::from_secs(5), "criterion 8");
    println!("[criterion 8] PASS — recorded fixtures replay bit-exact; misaligned and unavailable paths surface");
}

fn walk(root: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    files
}
