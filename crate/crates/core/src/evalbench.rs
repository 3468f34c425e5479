//! Retrieval metrics and search benchmarks.
//!
//! Reports serialize to JSON with a `schema_version` field. Benchmarks check
//! every index answer against a linear scan before anything is timed.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bitcode::HashCode;
use crate::error::{Error, Result};
use crate::mih::{linear_scan_knn, linear_scan_radius, CandidateStats, MihIndex, SearchResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `|top-k ∩ relevant| / k`. Short rankings count missing slots as misses.
pub fn precision_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    let hits = ranked.iter().take(k).filter(|id| relevant.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

/// Normalised discounted cumulative gain with `gain / log2(rank + 1)` for
/// 1-based ranks. Ids missing from `gains` have gain 0; all-zero gains give 0.
pub fn ndcg_at_k<T: Eq + Hash>(ranked: &[T], gains: &HashMap<T, f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    if gains.values().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::usage("gains must be finite and nonnegative"));
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| gains.get(id).copied().unwrap_or(0.0) * discount(i))
        .sum();
    let mut ideal: Vec<f64> = gains.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, g)| g * discount(i)).sum();
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok((dcg / idcg).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub metric: String,
    pub k: usize,
    pub per_query: Vec<f64>,
    pub mean: f64,
    pub config: Value,
    pub seed: u64,
}

impl MetricReport {
    pub fn new(metric: &str, k: usize, per_query: Vec<f64>, config: Value, seed: u64) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.iter().sum::<f64>() / per_query.len() as f64
        };
        MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            metric: metric.to_string(),
            k,
            per_query,
            mean,
            config,
            seed,
        }
    }

    /// `query,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("query,{}\n", self.metric);
        for (i, v) in self.per_query.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Label-based retrieval quality of a code collection: every item queries
/// the collection for its `k` nearest other items, ranked by `(distance, id)`,
/// and an answer is relevant when it shares the query's label.
///
/// Returns the precision@k report and the mean multi-index candidate
/// statistics of the searches, which ask for `k + 1` neighbours so the query
/// itself can be dropped.
pub fn label_precision(
    index: &MihIndex,
    labels: &[String],
    k: usize,
    config: Value,
    seed: u64,
) -> Result<(MetricReport, MeanStats)> {
    if labels.len() != index.len() {
        return Err(Error::usage("one label per indexed code is required"));
    }
    if k == 0 || k >= index.len() {
        return Err(Error::usage(format!(
            "k = {k} must lie in 1..{} for a collection of {}",
            index.len(),
            index.len()
        )));
    }
    let mut searcher = index.searcher();
    let mut per_query = Vec::with_capacity(index.len());
    let mut stats = Vec::with_capacity(index.len());
    for (q, code) in index.codes().iter().enumerate() {
        let (result, s) = searcher.knn_search(code, k + 1)?;
        stats.push(s);
        let mut ids = result.ids();
        match ids.iter().position(|&id| id as usize == q) {
            Some(pos) => {
                ids.remove(pos);
            }
            None => {
                ids.pop();
            }
        }
        let hits = ids.iter().filter(|&&id| labels[id as usize] == labels[q]).count();
        per_query.push(hits as f64 / k as f64);
    }
    Ok((
        MetricReport::new("precision@k", k, per_query, config, seed),
        MeanStats::from_stats(&stats),
    ))
}

/// Averages of [`CandidateStats`] over a query set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    pub queries: usize,
    pub mean_lookups: f64,
    pub mean_raw_candidates: f64,
    pub mean_unique_candidates: f64,
    pub median_unique_candidates: f64,
    pub mean_verified: f64,
}

impl MeanStats {
    pub fn from_stats(stats: &[CandidateStats]) -> Self {
        if stats.is_empty() {
            return MeanStats::default();
        }
        let n = stats.len() as f64;
        let mean = |f: fn(&CandidateStats) -> u64| stats.iter().map(|s| f(s) as f64).sum::<f64>() / n;
        let unique: Vec<f64> = stats.iter().map(|s| s.unique_candidates as f64).collect();
        MeanStats {
            queries: stats.len(),
            mean_lookups: mean(|s| s.lookups),
            mean_raw_candidates: mean(|s| s.raw_candidates),
            mean_unique_candidates: mean(|s| s.unique_candidates),
            median_unique_candidates: median(unique),
            mean_verified: mean(|s| s.verified),
        }
    }
}

/// Median, averaging the two middle values of an even-length input.
pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum BenchMode {
    Knn(usize),
    Radius(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub threads_used: usize,
}

impl Hardware {
    pub fn detect() -> Self {
        Hardware {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads_used: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub schema_version: u32,
    pub n: usize,
    pub bits: u32,
    pub substrings: u32,
    pub query: BenchMode,
    pub queries: usize,
    pub repetitions: usize,
    pub stats: MeanStats,
    /// Median over repetitions of the mean wall time per query.
    pub mih_ns_per_query: f64,
    pub linear_ns_per_query: f64,
    /// `linear_ns_per_query / mih_ns_per_query`.
    pub speedup: f64,
    pub hardware: Hardware,
}

/// Field names that carry wall-clock measurements.
pub const TIMING_FIELDS: [&str; 3] = ["mih_ns_per_query", "linear_ns_per_query", "speedup"];

impl EfficiencyReport {
    /// JSON form with the timing fields removed, stable across reruns.
    pub fn without_timings(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            for f in TIMING_FIELDS {
                obj.remove(f);
            }
        }
        Ok(v)
    }

    /// Header line and one value line.
    pub fn to_csv(&self) -> String {
        let (mode, value) = match self.query {
            BenchMode::Knn(k) => ("knn", k as u64),
            BenchMode::Radius(r) => ("radius", r as u64),
        };
        format!(
            "n,bits,substrings,mode,value,queries,repetitions,mean_lookups,mean_unique_candidates,median_unique_candidates,mih_ns_per_query,linear_ns_per_query,speedup\n\
             {},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.n,
            self.bits,
            self.substrings,
            mode,
            value,
            self.queries,
            self.repetitions,
            self.stats.mean_lookups,
            self.stats.mean_unique_candidates,
            self.stats.median_unique_candidates,
            self.mih_ns_per_query,
            self.linear_ns_per_query,
            self.speedup
        )
    }
}

fn same_answer(a: &SearchResult, b: &SearchResult) -> bool {
    a.hits == b.hits && a.k_exceeds_len == b.k_exceeds_len
}

/// Verifies every query against the linear scan, warms up, then times both
/// methods `repetitions` times on a single thread.
pub fn run_benchmark(
    index: &MihIndex,
    queries: &[HashCode],
    mode: BenchMode,
    repetitions: usize,
) -> Result<EfficiencyReport> {
    if queries.is_empty() || repetitions == 0 {
        return Err(Error::usage("benchmark needs at least one query and one repetition"));
    }
    let mut searcher = index.searcher();
    let run_mih = |s: &mut crate::mih::Searcher<'_>, q: &HashCode| match mode {
        BenchMode::Knn(k) => s.knn_search(q, k),
        BenchMode::Radius(r) => s.radius_search(q, r),
    };
    let run_linear = |q: &HashCode| match mode {
        BenchMode::Knn(k) => linear_scan_knn(index.codes(), q, k),
        BenchMode::Radius(r) => linear_scan_radius(index.codes(), q, r),
    };

    let mut stats = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let (got, s) = run_mih(&mut searcher, q)?;
        let want = run_linear(q)?;
        if !same_answer(&got, &want) {
            return Err(Error::contract(format!(
                "index and linear scan disagree on query {i}; refusing to report timings"
            )));
        }
        stats.push(s);
    }

    let mut mih_times = Vec::with_capacity(repetitions);
    let mut linear_times = Vec::with_capacity(repetitions);
    for rep in 0..=repetitions {
        let start = Instant::now();
        for q in queries {
            black_box(run_mih(&mut searcher, black_box(q))?);
        }
        let mih = start.elapsed().as_nanos() as f64 / queries.len() as f64;
        let start = Instant::now();
        for q in queries {
            black_box(run_linear(black_box(q))?);
        }
        let linear = start.elapsed().as_nanos() as f64 / queries.len() as f64;
        // repetition 0 is the warm-up
        if rep > 0 {
            mih_times.push(mih);
            linear_times.push(linear);
        }
    }
    let mih_ns = median(mih_times);
    let linear_ns = median(linear_times);
    Ok(EfficiencyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n: index.len(),
        bits: index.bits(),
        substrings: index.substrings(),
        query: mode,
        queries: queries.len(),
        repetitions,
        stats: MeanStats::from_stats(&stats),
        mih_ns_per_query: mih_ns,
        linear_ns_per_query: linear_ns,
        speedup: if mih_ns > 0.0 { linear_ns / mih_ns } else { f64::INFINITY },
        hardware: Hardware::detect(),
    })
}
