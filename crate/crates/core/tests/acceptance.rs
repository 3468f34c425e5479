//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits nonzero if any failed.

mod common;

use std::cell::LazyCell;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hamspace::bitcode::{hamming_distance, projected_hamming_dissimilarity, HashCode};
use hamspace::cfhash::{self, CfConfig, Measure};
use hamspace::corpus::{build_vocabulary, documents_to_jsonl, vectorize, Document, TfIdfVector, TfVariant};
use hamspace::evalbench::{label_precision, run_benchmark, BenchMode, MeanStats, TIMING_FIELDS};
use hamspace::hashtrain::losses::{relaxed_hamming, relaxed_projected};
use hamspace::hashtrain::{train, Objective, TrainConfig};
use hamspace::mih::{linear_scan_knn, linear_scan_radius, CandidateStats, MihIndex};
use hamspace::synthetic::{block_ratings, topic_corpus, BlockRatingsSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn report(id: u32, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = out.passed && in_time;
    let mut err = std::io::stderr();
    writeln!(
        err,
        "{} criterion {id:>2} {name}: {} [{:.1}s of {}s]{}",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { " over time limit" }
    )
    .unwrap();
    passed
}

fn random_codes(n: usize, bits: u32, rng: &mut ChaCha8Rng) -> Vec<HashCode> {
    (0..n).map(|_| HashCode::random(bits, rng).unwrap()).collect()
}

fn mih_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for bits in [32u32, 64] {
        let codes = random_codes(10_000, bits, &mut rng);
        // half the queries are perturbed database codes so small radii have hits
        let mut queries = random_codes(100, bits, &mut rng);
        for _ in 0..100 {
            let mut q = codes[rng.gen_range(0..codes.len())];
            for _ in 0..rng.gen_range(0..6) {
                let j = rng.gen_range(0..bits);
                q = q.with_bit(j, !q.bit(j));
            }
            queries.push(q);
        }
        for m in [2u32, 4, 8] {
            let index = MihIndex::build(codes.clone(), m).unwrap();
            let mut searcher = index.searcher();
            for (qi, q) in queries.iter().enumerate() {
                for r in 0..=10 {
                    let got = searcher.radius_search(q, r).unwrap().0;
                    let want = linear_scan_radius(&codes, q, r).unwrap();
                    checked += 1;
                    if got.hits != want.hits {
                        mismatches.push(format!("B={bits} m={m} q={qi} r={r}"));
                    }
                }
                for k in [1usize, 10, 100] {
                    let got = searcher.knn_search(q, k).unwrap().0;
                    let want = linear_scan_knn(&codes, q, k).unwrap();
                    checked += 1;
                    if got.hits != want.hits {
                        mismatches.push(format!("B={bits} m={m} q={qi} k={k}"));
                    }
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{checked} searches, {} mismatches {:?}", mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

fn signed(code: u128) -> [i8; 8] {
    let mut v = [0i8; 8];
    for (j, s) in v.iter_mut().enumerate() {
        *s = if code >> j & 1 == 1 { 1 } else { -1 };
    }
    v
}

fn phd_equivalence() -> Outcome {
    let mut mismatches = 0;
    for u in 0u128..256 {
        for i in 0u128..256 {
            let (su, si) = (signed(u), signed(i));
            let oracle = (0..8).filter(|&j| su[j] == 1 && si[j] == -1).count() as u32;
            let got = projected_hamming_dissimilarity(
                &HashCode::from_u128(u, 8).unwrap(),
                &HashCode::from_u128(i, 8).unwrap(),
            )
            .unwrap();
            if got != oracle {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("65536 pairs, {mismatches} mismatches"))
}

fn relaxed_consistency() -> Outcome {
    let mut mismatches = 0;
    for a in 0u128..256 {
        for b in 0u128..256 {
            let ca = HashCode::from_u128(a, 8).unwrap();
            let cb = HashCode::from_u128(b, 8).unwrap();
            let (fa, fb) = (ca.to_f64(), cb.to_f64());
            if relaxed_hamming(&fa, &fb) != hamming_distance(&ca, &cb).unwrap() as f64 {
                mismatches += 1;
            }
            if relaxed_projected(&fa, &fb) != projected_hamming_dissimilarity(&ca, &cb).unwrap() as f64 {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("65536 pairs x 2 measures, {mismatches} mismatches"))
}

fn gradient_correctness() -> Outcome {
    let mut worst: Vec<(String, f64)> = Vec::new();
    for objective in [Objective::Vae, Objective::Rbsh, Objective::Pairrec, Objective::Mish] {
        let err = (0..3).map(|s| common::doc_gradient_error(objective, s).0).fold(0.0, f64::max);
        worst.push((objective.to_string(), err));
    }
    for measure in [Measure::Hamming, Measure::Phd] {
        let err = (0..3).map(|s| common::cf_gradient_error(measure, s)).fold(0.0, f64::max);
        worst.push((format!("cf-{measure}"), err));
    }
    let passed = worst.iter().all(|(_, e)| *e <= 1e-4);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(passed, format!("max relative error: {detail}"))
}

struct TopicData {
    docs: Vec<Document>,
    data: Vec<TfIdfVector>,
    labels: Vec<String>,
}

fn topic_data() -> TopicData {
    let docs = topic_corpus(10, 200, 50, 20, 2024);
    let vocab = build_vocabulary(&docs, 10_000, TfVariant::Raw).unwrap();
    let data = vectorize(&docs, &vocab);
    let labels = docs.iter().map(|d| d.label.clone().unwrap()).collect();
    TopicData { docs, data, labels }
}

fn precision_of(codes: Vec<HashCode>, labels: &[String], m: u32) -> (f64, MeanStats) {
    let index = MihIndex::build(codes, m).unwrap();
    let (report, stats) = label_precision(&index, labels, 10, Value::Null, 0).unwrap();
    (report.mean, stats)
}

fn doc_config(objective: Objective, bits: u32) -> TrainConfig {
    TrainConfig {
        objective,
        bits,
        hidden: 100,
        epochs: 60,
        batch_size: 64,
        learning_rate: 5e-3,
        neighbors: 50,
        seed: 17,
        ..Default::default()
    }
}

fn document_effectiveness(topics: &TopicData) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random = precision_of(random_codes(topics.docs.len(), 16, &mut rng), &topics.labels, 2).0;
    let mut p = Vec::new();
    for objective in [Objective::Vae, Objective::Rbsh, Objective::Pairrec] {
        let out = train(&topics.data, &doc_config(objective, 16)).unwrap();
        p.push(precision_of(out.codes, &topics.labels, 2).0);
    }
    let (vae, rbsh, pairrec) = (p[0], p[1], p[2]);
    let passed = vae >= 3.0 * random
        && rbsh >= vae - 0.02
        && pairrec >= vae - 0.02
        && (rbsh > vae || pairrec > vae);
    outcome(
        passed,
        format!("precision@10 random {random:.4}, vae {vae:.4}, rbsh {rbsh:.4}, pairrec {pairrec:.4}"),
    )
}

fn knn_candidates(codes: Vec<HashCode>, m: u32, k: usize) -> f64 {
    let index = MihIndex::build(codes, m).unwrap();
    let mut searcher = index.searcher();
    let mut stats: Vec<CandidateStats> = Vec::with_capacity(index.len());
    for q in index.codes() {
        stats.push(searcher.knn_search(q, k).unwrap().1);
    }
    MeanStats::from_stats(&stats).mean_unique_candidates
}

fn mish_efficiency(topics: &TopicData) -> Outcome {
    let mut results = Vec::new();
    for objective in [Objective::Vae, Objective::Mish] {
        let mut cfg = doc_config(objective, 32);
        cfg.substrings = Some(4);
        // about six same-topic documents share a 64-document batch
        cfg.mish_k = 1;
        let out = train(&topics.data, &cfg).unwrap();
        let precision = precision_of(out.codes.clone(), &topics.labels, 4).0;
        results.push((knn_candidates(out.codes, 4, 10), precision));
    }
    let ((vae_c, vae_p), (mish_c, mish_p)) = (results[0], results[1]);
    let passed = mish_c <= 0.9 * vae_c && (mish_p - vae_p).abs() <= 0.03;
    outcome(
        passed,
        format!(
            "unique candidates vae {vae_c:.1}, mish {mish_c:.1} (ratio {:.3}); precision@10 vae {vae_p:.4}, mish {mish_p:.4}",
            mish_c / vae_c
        ),
    )
}

struct CfData {
    items: Vec<TfIdfVector>,
    triples: Vec<hamspace::corpus::RatingTriple>,
    users: usize,
}

fn cf_data() -> CfData {
    let spec = BlockRatingsSpec::default();
    let data = block_ratings(&spec);
    let vocab = build_vocabulary(&data.items, 10_000, TfVariant::Raw).unwrap();
    CfData {
        items: vectorize(&data.items, &vocab),
        triples: data.triples,
        users: spec.users,
    }
}

fn cf_config(measure: Measure) -> CfConfig {
    CfConfig {
        measure,
        bits: 32,
        hidden: 100,
        epochs: 100,
        batch_size: 32,
        learning_rate: 3e-3,
        seed: 23,
        ..Default::default()
    }
}

fn coldstart_direction(cf: &CfData) -> Outcome {
    let split = cfhash::coldstart_split(&cf.triples, cf.items.len(), 0.2, 31).unwrap();
    let cfg = cf_config(Measure::Hamming);
    let out = cfhash::train_cf(&cf.items, &split.train, cf.users, &cfg).unwrap();
    let users = out.model.user_codes().unwrap();
    let items = out.model.item_codes(&cf.items).unwrap();
    let tasks = cfhash::coldstart_tasks(&split);
    let ndcg = cfhash::mean_ndcg(&users, &items, &tasks, 10, cfg.measure).unwrap();
    let random =
        cfhash::random_code_ndcg(cf.users, cf.items.len(), cfg.bits, &tasks, 10, cfg.measure, 3, 10).unwrap();
    outcome(
        ndcg >= 2.0 * random,
        format!(
            "held-out NDCG@10 {ndcg:.4} vs random {random:.4} (ratio {:.2}) over {} users, {} held-out items",
            ndcg / random,
            tasks.len(),
            split.heldout_items.len()
        ),
    )
}

fn phd_direction(cf: &CfData) -> Outcome {
    let (train_t, test_t) = cfhash::triple_split(&cf.triples, 0.2, 37).unwrap();
    let tasks = cfhash::warm_tasks(&train_t, &test_t, cf.items.len());
    let mut res = Vec::new();
    for measure in [Measure::Hamming, Measure::Phd] {
        let out = cfhash::train_cf(&cf.items, &train_t, cf.users, &cf_config(measure)).unwrap();
        let users = out.model.user_codes().unwrap();
        let items = out.model.item_codes(&cf.items).unwrap();
        let (a, c) = out.model.scale();
        let mse = cfhash::code_mse(&users, &items, &train_t, measure, a, c).unwrap();
        let ndcg = cfhash::mean_ndcg(&users, &items, &tasks, 10, measure).unwrap();
        res.push((mse, ndcg));
    }
    let ((h_mse, h_ndcg), (p_mse, p_ndcg)) = (res[0], res[1]);
    let passed = p_mse <= 1.05 * h_mse && p_ndcg >= 0.95 * h_ndcg;
    outcome(
        passed,
        format!("MSE hamming {h_mse:.4}, phd {p_mse:.4}; NDCG@10 hamming {h_ndcg:.4}, phd {p_ndcg:.4}"),
    )
}

fn sublinearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let codes = random_codes(100_000, 64, &mut rng);
    let queries = random_codes(100, 64, &mut rng);
    let index = MihIndex::build(codes, 4).unwrap();
    match run_benchmark(&index, &queries, BenchMode::Knn(10), 15) {
        Ok(r) => outcome(
            r.mih_ns_per_query < r.linear_ns_per_query,
            format!(
                "median per query: mih {:.0} ns, linear {:.0} ns, speedup {:.2}, mean unique candidates {:.0}",
                r.mih_ns_per_query, r.linear_ns_per_query, r.speedup, r.stats.mean_unique_candidates
            ),
        ),
        Err(e) => outcome(false, format!("benchmark failed: {e}")),
    }
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let docs = topic_corpus(10, 40, 30, 20, 41);
    fs::write(dir.join("docs.jsonl"), documents_to_jsonl(&docs).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cf = block_ratings(&BlockRatingsSpec { users: 120, items: 80, seed: 6, ..Default::default() });
    fs::write(dir.join("items.jsonl"), documents_to_jsonl(&cf.items).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    fs::write(dir.join("ratings.tsv"), cf.to_tsv()).map_err(|e| e.to_string())?;
    fs::write(
        dir.join("run.json"),
        r#"{"train": {"bits": 32, "hidden": 64, "epochs": 5, "batch_size": 32, "neighbors": 10, "mish_k": 1, "seed": 12},
            "ratings": "ratings.tsv", "items": "items.jsonl",
            "cf": {"bits": 32, "hidden": 32, "epochs": 5, "batch_size": 32, "seed": 13}}"#,
    )
    .map_err(|e| e.to_string())?;
    let steps: [&[&str]; 13] = [
        &["corpus", "build", "--input", "docs.jsonl", "--out", "corpus"],
        &["train", "--objective", "vae", "--config", "run.json", "--corpus", "corpus", "--out", "vae.ckpt"],
        &["train", "--objective", "mish", "--config", "run.json", "--corpus", "corpus", "--out", "mish.ckpt"],
        &["encode", "--ckpt", "vae.ckpt", "--input", "docs.jsonl", "--out", "vae.bin"],
        &["encode", "--ckpt", "mish.ckpt", "--input", "docs.jsonl", "--out", "mish.bin"],
        &["index", "build", "--codes", "mish.bin", "--m", "4", "--out", "mish.idx"],
        &["search", "--index", "mish.idx", "--query-id", "d3", "--knn", "10", "--oracle", "--out", "search.json"],
        &["eval", "--index", "mish.idx", "--input", "docs.jsonl", "--k", "10", "--out", "eval.json", "--csv", "eval.csv"],
        &["bench", "--index", "mish.idx", "--queries", "50", "--knn", "10", "--reps", "1", "--out", "bench.json"],
        &["cf", "train", "--measure", "phd", "--config", "run.json", "--out", "cf.ckpt"],
        &["cf", "eval", "--measure", "hamming", "--config", "run.json", "--out", "warm.json"],
        &["cf", "eval", "--coldstart", "--measure", "phd", "--config", "run.json", "--out", "cold.json"],
        &["cf", "eval", "--coldstart", "--measure", "hamming", "--config", "run.json", "--out", "cold-h.json"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_hamspace"))
            .current_dir(dir)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn artifacts(root: &Path, dir: &Path, into: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            artifacts(root, &path, into)?;
            continue;
        }
        let name = path.strip_prefix(root).unwrap().display().to_string();
        let mut bytes = fs::read(&path)?;
        if name == "bench.json" {
            let mut v: Value = serde_json::from_slice(&bytes)?;
            for f in TIMING_FIELDS {
                v.as_object_mut().map(|o| o.remove(f));
            }
            bytes = serde_json::to_vec(&v)?;
        }
        into.insert(name, bytes);
    }
    Ok(())
}

fn determinism() -> Outcome {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let tmp = match tempfile::tempdir() {
            Ok(t) => t,
            Err(e) => return outcome(false, e.to_string()),
        };
        if let Err(e) = pipeline(tmp.path()) {
            return outcome(false, e);
        }
        let mut files = BTreeMap::new();
        if let Err(e) = artifacts(tmp.path(), tmp.path(), &mut files) {
            return outcome(false, e.to_string());
        }
        runs.push(files);
    }
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(name, bytes)| runs[1].get(*name) != Some(bytes))
        .map(|(name, _)| name)
        .collect();
    let same_names = runs[0].keys().eq(runs[1].keys());
    outcome(
        differing.is_empty() && same_names,
        format!("{} artifacts compared, differing: {differing:?}", runs[0].len()),
    )
}

fn main() {
    // `cargo test --test acceptance -- 3 9` runs only the listed criteria
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);
    let mins = |m: u64| Duration::from_secs(60 * m);
    let topics = LazyCell::new(topic_data);
    let cf = LazyCell::new(cf_data);
    let criteria: Vec<(u32, &str, Duration, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "MIH exactness", Duration::from_secs(60), Box::new(mih_exactness)),
        (2, "PHD formula equivalence", Duration::from_secs(1), Box::new(phd_equivalence)),
        (3, "relaxed-to-binary consistency", Duration::from_secs(60), Box::new(relaxed_consistency)),
        (4, "gradient correctness", Duration::from_secs(30), Box::new(gradient_correctness)),
        (5, "document effectiveness direction", mins(10), Box::new(|| document_effectiveness(&topics))),
        (6, "MISH efficiency property", mins(15), Box::new(|| mish_efficiency(&topics))),
        (7, "cold-start direction", mins(10), Box::new(|| coldstart_direction(&cf))),
        (8, "PHD effectiveness direction", mins(10), Box::new(|| phd_direction(&cf))),
        (9, "sub-linearity smoke test", mins(5), Box::new(sublinearity)),
        (10, "determinism", mins(10), Box::new(determinism)),
    ];
    let mut passed = Vec::new();
    for (id, name, limit, run) in &criteria {
        if wanted(*id) {
            passed.push(report(*id, name, *limit, run));
        }
    }
    let failed = passed.iter().filter(|p| !**p).count();
    eprintln!("acceptance: {} of {} criteria passed", passed.len() - failed, passed.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
