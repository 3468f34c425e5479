//! The `hamspace` command line: corpus preparation, training, encoding,
//! indexing, search, evaluation and benchmarking, plus the rating pipeline.
//!
//! Human-readable summaries go to the writer handed to [`run`]; everything a
//! script would consume is written to files. Every output refuses to replace
//! an existing file unless `--force` is given.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cfhash::{self, CfConfig, Measure};
use crate::codefile::{self, Sidecar};
use crate::corpus::{
    build_vocabulary, documents_to_jsonl, load_documents, load_ratings, vectorize, Document,
    TfVariant, Vocabulary, DEFAULT_VOCAB_SIZE,
};
use crate::error::{Error, Result};
use crate::evalbench::{label_precision, run_benchmark, BenchMode, MetricReport, REPORT_SCHEMA_VERSION};
use crate::hashtrain::{self, Objective, TrainConfig};
use crate::mih::{linear_scan_knn, linear_scan_radius, MihIndex};
use crate::HashCode;

/// Version of the JSON artifacts written by the command line itself.
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "hamspace", version, about = "Learned binary hash codes and exact Hamming search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Corpus preparation.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a document hashing model on a prepared corpus.
    Train(TrainArgs),
    /// Encode documents with a trained checkpoint.
    Encode(EncodeArgs),
    /// Multi-index hashing indexes.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Look up the neighbours of one stored code.
    Search(SearchArgs),
    /// Label precision@k of an index against labelled documents.
    Eval(EvalArgs),
    /// Time index search against a linear scan.
    Bench(BenchArgs),
    /// Hash codes for users and items from ratings.
    #[command(subcommand)]
    Cf(CfCommand),
}

#[derive(Subcommand, Debug)]
pub enum CorpusCommand {
    /// Build the vocabulary of a JSON-lines document file.
    Build(CorpusBuildArgs),
}

#[derive(Subcommand, Debug)]
pub enum IndexCommand {
    /// Build an index over a code file.
    Build(IndexBuildArgs),
}

#[derive(Subcommand, Debug)]
pub enum CfCommand {
    /// Train user codes and an item content encoder.
    Train(CfTrainArgs),
    /// Train on a split of the ratings and report NDCG@k on the rest.
    Eval(CfEvalArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; nested objects and dotted keys are equivalent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct CorpusBuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
    /// Term-frequency variant: raw or log.
    #[arg(long, default_value = "raw", value_parser = parse_tf)]
    pub tf: TfVariant,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    /// Corpus directory from `corpus build`; overrides the `corpus` key.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint path; the training log goes to `<out>.log.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct IndexBuildArgs {
    #[arg(long)]
    pub codes: PathBuf,
    /// Number of substrings; must divide the code width.
    #[arg(long)]
    pub m: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["knn", "radius"]))]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Stored id of the query, or its position when the index has no ids.
    #[arg(long)]
    pub query_id: String,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub radius: Option<u32>,
    /// Also run the linear scan and fail unless both agree exactly.
    #[arg(long)]
    pub oracle: bool,
    /// Optional JSON result file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Labelled documents; matched to the index by id.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-query CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["knn", "radius"]))]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// A number of stored codes to sample as queries, or a code file.
    #[arg(long)]
    pub queries: String,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub radius: Option<u32>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Seed for sampling queries.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CfInputs {
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<Measure>,
    /// `user<TAB>item<TAB>rating` file; overrides the `ratings` key.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Item documents; overrides the `items` key.
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct CfTrainArgs {
    #[command(flatten)]
    pub inputs: CfInputs,
    /// Checkpoint path; codes go to `<out>.users.bin` and `<out>.items.bin`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CfEvalArgs {
    #[command(flatten)]
    pub inputs: CfInputs,
    /// Hold out whole items and rank them for every user.
    #[arg(long)]
    pub coldstart: bool,
    /// Share of items (cold start) or ratings (otherwise) held out.
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seed of the split and of the random-code baseline.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_measure(s: &str) -> std::result::Result<Measure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tf(s: &str) -> std::result::Result<TfVariant, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown tf variant {s:?}, expected raw|log"))
}

/// Flat run configuration: every key is a dotted path such as
/// `train.epochs`. Keys are kept sorted so serialized copies are stable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, Value>,
}

const TOP_LEVEL_KEYS: [&str; 5] = ["corpus", "ratings", "items", "vocab_size", "tf"];
const SECTIONS: [&str; 2] = ["train", "cf"];

impl RunConfig {
    pub fn from_json(value: &Value) -> Result<Self> {
        let Value::Object(map) = value else {
            return Err(Error::usage("configuration must be a JSON object"));
        };
        let mut cfg = RunConfig::default();
        flatten("", map, &mut cfg.entries);
        for key in cfg.entries.keys() {
            check_key(key)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        Self::from_json(&value)
    }

    /// Applies a `key=value` override. The value is read as JSON when it
    /// parses and as a plain string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
        let key = key.trim();
        check_key(key)?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(other) => Err(Error::usage(format!("{key} must be a path string, got {other}"))),
        }
    }

    fn required_path(&self, key: &str, flag: &str) -> Result<PathBuf> {
        self.path(key)?
            .ok_or_else(|| Error::usage(format!("no {key} given: pass {flag} or set {key:?} in the config")))
    }

    /// Deserializes every `prefix.*` key into `T`.
    pub fn section<T: DeserializeOwned>(&self, prefix: &str) -> Result<T> {
        let dotted = format!("{prefix}.");
        let map: Map<String, Value> = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&dotted).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::usage(format!("bad {prefix} configuration: {e}")))
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    fn from_args(args: &ConfigArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => RunConfig::default(),
        };
        for assignment in &args.set {
            cfg.set(assignment)?;
        }
        Ok(cfg)
    }
}

fn flatten(prefix: &str, map: &Map<String, Value>, out: &mut BTreeMap<String, Value>) {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn check_key(key: &str) -> Result<()> {
    let known = TOP_LEVEL_KEYS.contains(&key)
        || SECTIONS
            .iter()
            .any(|s| key.strip_prefix(s).is_some_and(|rest| rest.len() > 1 && rest.starts_with('.')));
    if known {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "unknown configuration key {key:?}; expected one of {} or a train.* / cf.* key",
            TOP_LEVEL_KEYS.join(", ")
        )))
    }
}

/// Runs one command, writing its human summary to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCommand::Build(a)) => corpus_build(a, out),
        Command::Train(a) => train(a, out),
        Command::Encode(a) => encode(a, out),
        Command::Index(IndexCommand::Build(a)) => index_build(a, out),
        Command::Search(a) => search(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Cf(CfCommand::Train(a)) => cf_train(a, out),
        Command::Cf(CfCommand::Eval(a)) => cf_eval(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("writing summary", e))
}

/// Fails when any output already exists and `force` is off.
fn guard(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::usage(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

const CORPUS_DOCUMENTS: &str = "documents.jsonl";
const CORPUS_VOCAB: &str = "vocab.jsonl";
const CORPUS_MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, serde::Deserialize)]
struct CorpusManifest {
    schema_version: u32,
    input: String,
    documents: usize,
    vocab_cap: usize,
    vocab_len: usize,
    tf: TfVariant,
}

fn corpus_build(a: CorpusBuildArgs, out: &mut dyn Write) -> Result<()> {
    let docs_path = a.out.join(CORPUS_DOCUMENTS);
    let vocab_path = a.out.join(CORPUS_VOCAB);
    let manifest_path = a.out.join(CORPUS_MANIFEST);
    guard(&[&docs_path, &vocab_path, &manifest_path], a.force)?;
    let docs = load_documents(&a.input)?;
    let vocab = build_vocabulary(&docs, a.vocab_size, a.tf)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    write_file(&docs_path, documents_to_jsonl(&docs)?.as_bytes())?;
    write_file(&vocab_path, vocab.to_jsonl()?.as_bytes())?;
    write_json(
        &manifest_path,
        &CorpusManifest {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            input: path_str(&a.input),
            documents: docs.len(),
            vocab_cap: a.vocab_size,
            vocab_len: vocab.len(),
            tf: a.tf,
        },
    )?;
    say(out, format!("corpus: {} documents, {} terms -> {}", docs.len(), vocab.len(), a.out.display()))
}

fn load_corpus(dir: &Path) -> Result<(Vec<Document>, Vocabulary)> {
    let manifest_path = dir.join(CORPUS_MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(Error::format(format!("{} has an unsupported schema", manifest_path.display())));
    }
    let docs = load_documents(&dir.join(CORPUS_DOCUMENTS))?;
    if docs.len() != manifest.documents {
        return Err(Error::format("corpus document count disagrees with its manifest"));
    }
    let vocab_path = dir.join(CORPUS_VOCAB);
    let vocab_text = fs::read_to_string(&vocab_path)
        .map_err(|e| Error::io(format!("reading {}", vocab_path.display()), e))?;
    let vocab = Vocabulary::from_jsonl(&vocab_text, manifest.documents, manifest.vocab_cap, manifest.tf)?;
    Ok((docs, vocab))
}

/// JSON-lines log: a header line with the configuration, then one line per
/// epoch.
fn write_log<T: Serialize>(path: &Path, kind: &str, run: &RunConfig, seed: u64, epochs: &[T]) -> Result<()> {
    let mut text = serde_json::to_string(&json!({
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "kind": kind,
        "config": run.to_json(),
        "seed": seed,
    }))?;
    text.push('\n');
    for e in epochs {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let log_path = with_suffix(&a.out, ".log.jsonl");
    guard(&[&a.out, &log_path], a.force)?;
    let mut run = RunConfig::from_args(&a.config)?;
    if let Some(objective) = a.objective {
        run.insert("train.objective", json!(objective));
    }
    if let Some(corpus) = &a.corpus {
        run.insert("corpus", json!(path_str(corpus)));
    }
    let corpus = run.required_path("corpus", "--corpus")?;
    let cfg: TrainConfig = run.section("train")?;
    let (docs, vocab) = load_corpus(&corpus)?;
    let data = vectorize(&docs, &vocab);
    let outcome = hashtrain::train(&data, &cfg)?;
    hashtrain::save_checkpoint(&a.out, &outcome, &vocab)?;
    write_log(&log_path, "train_log", &run, cfg.seed, &outcome.log)?;
    let last = outcome.log.last().map_or(f64::NAN, |l| l.loss.total);
    say(
        out,
        format!(
            "trained {} model: {} documents, {} bits, {} epochs, final loss {last:.6} -> {}",
            outcome.config.objective,
            docs.len(),
            outcome.config.bits,
            outcome.config.epochs,
            a.out.display()
        ),
    )
}

fn encode(a: EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let sidecar_path = Sidecar::path_for(&a.out);
    guard(&[&a.out, &sidecar_path], a.force)?;
    let (model, header) = hashtrain::load_checkpoint(&a.ckpt)?;
    let docs = load_documents(&a.input)?;
    let data = vectorize(&docs, &header.vocabulary);
    let codes = model.codes(&data)?;
    let bits = header.config.bits;
    codefile::save_codes(&a.out, bits, &codes)?;
    let mut sidecar = Sidecar::new("document", bits, codes.len());
    sidecar.ids = Some(docs.iter().map(|d| d.id.clone()).collect());
    sidecar.provenance = json!({
        "command": "encode",
        "checkpoint": path_str(&a.ckpt),
        "input": path_str(&a.input),
        "config": header.config,
        "seed": header.seed,
    });
    sidecar.save(&a.out)?;
    say(out, format!("encoded {} documents into {bits}-bit codes -> {}", codes.len(), a.out.display()))
}

fn index_build(a: IndexBuildArgs, out: &mut dyn Write) -> Result<()> {
    let sidecar_path = Sidecar::path_for(&a.out);
    guard(&[&a.out, &sidecar_path], a.force)?;
    let (bits, codes) = codefile::load_codes(&a.codes)?;
    let source = Sidecar::load(&a.codes)?;
    let ids = source.as_ref().and_then(|s| s.ids.clone());
    let index = MihIndex::build_with_width(codes, bits, a.m)?;
    let provenance = json!({
        "command": "index build",
        "codes": path_str(&a.codes),
        "substrings": a.m,
        "source": source.map(|s| s.provenance),
    });
    index.save(&a.out, ids, provenance)?;
    say(
        out,
        format!(
            "indexed {} codes of {bits} bits in {} tables -> {}",
            index.len(),
            a.m,
            a.out.display()
        ),
    )
}

fn resolve_query(sidecar: &Sidecar, len: usize, query_id: &str) -> Result<usize> {
    match &sidecar.ids {
        Some(ids) => ids
            .iter()
            .position(|id| id == query_id)
            .ok_or_else(|| Error::usage(format!("no stored code has id {query_id:?}"))),
        None => {
            let pos: usize = query_id
                .parse()
                .map_err(|_| Error::usage(format!("index has no ids; {query_id:?} is not a position")))?;
            if pos >= len {
                return Err(Error::usage(format!("position {pos} is outside an index of {len} codes")));
            }
            Ok(pos)
        }
    }
}

fn id_of(sidecar: &Sidecar, pos: u32) -> String {
    sidecar
        .ids
        .as_ref()
        .map_or_else(|| pos.to_string(), |ids| ids[pos as usize].clone())
}

fn search(a: SearchArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.out {
        guard(&[p], a.force)?;
    }
    let (index, sidecar) = MihIndex::load(&a.index)?;
    let pos = resolve_query(&sidecar, index.len(), &a.query_id)?;
    let query = index.codes()[pos];
    let (result, stats, mode) = match (a.knn, a.radius) {
        (Some(k), _) => {
            let (r, s) = index.knn_search(&query, k)?;
            (r, s, json!({"mode": "knn", "value": k}))
        }
        (None, Some(r)) => {
            let (res, s) = index.radius_search(&query, r)?;
            (res, s, json!({"mode": "radius", "value": r}))
        }
        (None, None) => return Err(Error::usage("pass --knn or --radius")),
    };
    if a.oracle {
        let expected = match (a.knn, a.radius) {
            (Some(k), _) => linear_scan_knn(index.codes(), &query, k)?,
            (None, Some(r)) => linear_scan_radius(index.codes(), &query, r)?,
            (None, None) => unreachable!("mode checked above"),
        };
        if expected.hits != result.hits {
            return Err(Error::contract(format!(
                "index result ({} hits) differs from the linear scan ({} hits)",
                result.hits.len(),
                expected.hits.len()
            )));
        }
    }
    for (rank, h) in result.hits.iter().enumerate() {
        say(out, format!("{}\t{}\t{}", rank + 1, id_of(&sidecar, h.id), h.distance))?;
    }
    let radius = result.radius_used.map_or(String::new(), |r| format!(", radius {r}"));
    say(
        out,
        format!(
            "{} hits{radius}; {} lookups, {} unique candidates{}",
            result.hits.len(),
            stats.lookups,
            stats.unique_candidates,
            if a.oracle { "; linear-scan oracle agrees" } else { "" }
        ),
    )?;
    if let Some(p) = &a.out {
        let hits: Vec<Value> = result
            .hits
            .iter()
            .map(|h| json!({"id": id_of(&sidecar, h.id), "position": h.id, "distance": h.distance}))
            .collect();
        write_json(
            p,
            &json!({
                "schema_version": ARTIFACT_SCHEMA_VERSION,
                "index": path_str(&a.index),
                "query_id": a.query_id,
                "query": mode,
                "hits": hits,
                "radius_used": result.radius_used,
                "k_exceeds_len": result.k_exceeds_len,
                "stats": stats,
                "oracle_checked": a.oracle,
                "provenance": sidecar.provenance,
            }),
        )?;
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(c) = &a.csv {
        outputs.push(c);
    }
    guard(&outputs, a.force)?;
    let (index, sidecar) = MihIndex::load(&a.index)?;
    let docs = load_documents(&a.input)?;
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let ids = sidecar
        .ids
        .clone()
        .ok_or_else(|| Error::usage("the index has no ids to match against documents"))?;
    let labels = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .and_then(|d| d.label.clone())
                .ok_or_else(|| Error::usage(format!("document {id:?} is missing or unlabelled")))
        })
        .collect::<Result<Vec<String>>>()?;
    let config = json!({
        "index": path_str(&a.index),
        "input": path_str(&a.input),
        "provenance": sidecar.provenance,
    });
    let seed = sidecar.provenance.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let (report, stats) = label_precision(&index, &labels, a.k, config, seed)?;
    write_json(&a.out, &json!({"report": report, "candidates": stats}))?;
    if let Some(c) = &a.csv {
        write_file(c, report.to_csv().as_bytes())?;
    }
    say(
        out,
        format!(
            "precision@{} {:.4} over {} queries; mean unique candidates {:.1}",
            a.k, report.mean, stats.queries, stats.mean_unique_candidates
        ),
    )
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(c) = &a.csv {
        outputs.push(c);
    }
    guard(&outputs, a.force)?;
    let (index, _) = MihIndex::load(&a.index)?;
    let queries: Vec<HashCode> = match a.queries.parse::<usize>() {
        Ok(count) => {
            if count == 0 || count > index.len() {
                return Err(Error::usage(format!(
                    "cannot sample {count} queries from an index of {} codes",
                    index.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut picks = sample(&mut rng, index.len(), count).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| index.codes()[i]).collect()
        }
        Err(_) => codefile::load_codes(Path::new(&a.queries))?.1,
    };
    let mode = match (a.knn, a.radius) {
        (Some(k), _) => BenchMode::Knn(k),
        (None, Some(r)) => BenchMode::Radius(r),
        (None, None) => return Err(Error::usage("pass --knn or --radius")),
    };
    let report = run_benchmark(&index, &queries, mode, a.reps)?;
    write_json(&a.out, &report)?;
    if let Some(c) = &a.csv {
        write_file(c, report.to_csv().as_bytes())?;
    }
    say(
        out,
        format!(
            "{} queries: index {:.0} ns, linear scan {:.0} ns per query, speedup {:.2}",
            queries.len(),
            report.mih_ns_per_query,
            report.linear_ns_per_query,
            report.speedup
        ),
    )
}

struct CfData {
    run: RunConfig,
    cfg: CfConfig,
    item_docs: Vec<Document>,
    vocab: Vocabulary,
    items: Vec<crate::corpus::TfIdfVector>,
    users: Vec<String>,
    triples: Vec<crate::corpus::RatingTriple>,
}

fn load_cf(inputs: &CfInputs) -> Result<CfData> {
    let mut run = RunConfig::from_args(&inputs.config)?;
    if let Some(m) = inputs.measure {
        run.insert("cf.measure", json!(m));
    }
    if let Some(p) = &inputs.ratings {
        run.insert("ratings", json!(path_str(p)));
    }
    if let Some(p) = &inputs.items {
        run.insert("items", json!(path_str(p)));
    }
    let cfg: CfConfig = run.section("cf")?;
    let ratings_path = run.required_path("ratings", "--ratings")?;
    let items_path = run.required_path("items", "--items")?;
    let cap = match run.get("vocab_size") {
        None => DEFAULT_VOCAB_SIZE,
        Some(v) => v
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::usage("vocab_size must be a positive integer"))?,
    };
    let tf = match run.get("tf") {
        None => TfVariant::Raw,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| Error::usage("tf must be raw or log"))?,
    };
    let item_docs = load_documents(&items_path)?;
    let vocab = build_vocabulary(&item_docs, cap, tf)?;
    let items = vectorize(&item_docs, &vocab);
    let item_ids: Vec<String> = item_docs.iter().map(|d| d.id.clone()).collect();
    let ratings = load_ratings(&ratings_path, &item_ids)?;
    Ok(CfData {
        run,
        cfg,
        item_docs,
        vocab,
        items,
        users: ratings.users,
        triples: ratings.triples,
    })
}

fn save_role_codes(path: &Path, role: &str, codes: &[HashCode], ids: Vec<String>, provenance: Value) -> Result<()> {
    let bits = codes.first().map_or(0, |c| c.bits());
    codefile::save_codes(path, bits, codes)?;
    let mut sidecar = Sidecar::new(role, bits, codes.len());
    sidecar.ids = Some(ids);
    sidecar.provenance = provenance;
    sidecar.save(path)
}

fn cf_train(a: CfTrainArgs, out: &mut dyn Write) -> Result<()> {
    let log_path = with_suffix(&a.out, ".log.jsonl");
    let users_path = with_suffix(&a.out, ".users.bin");
    let items_path = with_suffix(&a.out, ".items.bin");
    guard(
        &[
            &a.out,
            &log_path,
            &users_path,
            &Sidecar::path_for(&users_path),
            &items_path,
            &Sidecar::path_for(&items_path),
        ],
        a.force,
    )?;
    let d = load_cf(&a.inputs)?;
    let outcome = cfhash::train_cf(&d.items, &d.triples, d.users.len(), &d.cfg)?;
    cfhash::save_checkpoint(&a.out, &outcome, &d.users, &d.vocab)?;
    write_log(&log_path, "cf_train_log", &d.run, d.cfg.seed, &outcome.log)?;
    let provenance = json!({
        "command": "cf train",
        "checkpoint": path_str(&a.out),
        "config": d.run.to_json(),
        "seed": d.cfg.seed,
    });
    let user_codes = outcome.model.user_codes()?;
    let item_codes = outcome.model.item_codes(&d.items)?;
    save_role_codes(&users_path, "user", &user_codes, d.users.clone(), provenance.clone())?;
    let item_ids = d.item_docs.iter().map(|doc| doc.id.clone()).collect();
    save_role_codes(&items_path, "item", &item_codes, item_ids, provenance)?;
    let (ca, cc) = outcome.model.scale();
    let mse = cfhash::code_mse(&user_codes, &item_codes, &d.triples, d.cfg.measure, ca, cc)?;
    say(
        out,
        format!(
            "trained {} rating model: {} users, {} items, {} ratings, training MSE {mse:.6} -> {}",
            d.cfg.measure,
            d.users.len(),
            d.items.len(),
            d.triples.len(),
            a.out.display()
        ),
    )
}

#[derive(Debug, Serialize)]
struct CfEvalReport {
    schema_version: u32,
    protocol: &'static str,
    measure: Measure,
    fraction: f64,
    split_seed: u64,
    heldout_items: Option<usize>,
    train_ratings: usize,
    test_ratings: usize,
    test_mse: Option<f64>,
    ndcg: MetricReport,
    random_baseline: f64,
}

/// Repeats of the random-code baseline.
const RANDOM_REPEATS: usize = 10;

fn cf_eval(a: CfEvalArgs, out: &mut dyn Write) -> Result<()> {
    guard(&[&a.out], a.force)?;
    if !(a.fraction > 0.0 && a.fraction < 1.0) {
        return Err(Error::usage("--fraction must lie strictly between 0 and 1"));
    }
    let d = load_cf(&a.inputs)?;
    let measure = d.cfg.measure;
    let (train_t, test_t, tasks, heldout) = if a.coldstart {
        let split = cfhash::coldstart_split(&d.triples, d.items.len(), a.fraction, a.split_seed)?;
        let tasks = cfhash::coldstart_tasks(&split);
        let heldout = split.heldout_items.len();
        (split.train, split.test, tasks, Some(heldout))
    } else {
        let (train_t, test_t) = cfhash::triple_split(&d.triples, a.fraction, a.split_seed)?;
        let tasks = cfhash::warm_tasks(&train_t, &test_t, d.items.len());
        (train_t, test_t, tasks, None)
    };
    let outcome = cfhash::train_cf(&d.items, &train_t, d.users.len(), &d.cfg)?;
    let users = outcome.model.user_codes()?;
    let items = outcome.model.item_codes(&d.items)?;
    let mut per_user = Vec::with_capacity(tasks.len());
    for t in &tasks {
        per_user.push(cfhash::mean_ndcg(&users, &items, std::slice::from_ref(t), a.k, measure)?);
    }
    let random = cfhash::random_code_ndcg(
        d.users.len(),
        d.items.len(),
        d.cfg.bits,
        &tasks,
        a.k,
        measure,
        a.split_seed,
        RANDOM_REPEATS,
    )?;
    let test_mse = if a.coldstart || test_t.is_empty() {
        None
    } else {
        let (ca, cc) = outcome.model.scale();
        Some(cfhash::code_mse(&users, &items, &test_t, measure, ca, cc)?)
    };
    let ndcg = MetricReport::new("ndcg", a.k, per_user, d.run.to_json(), d.cfg.seed);
    let mean = ndcg.mean;
    let report = CfEvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        protocol: if a.coldstart { "coldstart" } else { "warm" },
        measure,
        fraction: a.fraction,
        split_seed: a.split_seed,
        heldout_items: heldout,
        train_ratings: train_t.len(),
        test_ratings: test_t.len(),
        test_mse,
        ndcg,
        random_baseline: random,
    };
    write_json(&a.out, &report)?;
    say(
        out,
        format!(
            "{} NDCG@{} {mean:.4} over {} users (random codes {random:.4}){}",
            report.protocol,
            a.k,
            tasks.len(),
            test_mse.map_or(String::new(), |m| format!("; test MSE {m:.6}"))
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_dotted_configs_agree() {
        let nested = RunConfig::from_json(&json!({"train": {"bits": 16, "epochs": 3}, "corpus": "c"})).unwrap();
        let dotted = RunConfig::from_json(&json!({"train.bits": 16, "train.epochs": 3, "corpus": "c"})).unwrap();
        assert_eq!(nested, dotted);
        let cfg: TrainConfig = nested.section("train").unwrap();
        assert_eq!((cfg.bits, cfg.epochs), (16, 3));
    }

    #[test]
    fn set_overrides_and_parses_values() {
        let mut run = RunConfig::from_json(&json!({"train.bits": 16})).unwrap();
        run.set("train.bits=32").unwrap();
        run.set("train.objective=mish").unwrap();
        run.set("corpus=some/dir").unwrap();
        let cfg: TrainConfig = run.section("train").unwrap();
        assert_eq!(cfg.bits, 32);
        assert_eq!(cfg.objective, Objective::Mish);
        assert_eq!(run.path("corpus").unwrap(), Some(PathBuf::from("some/dir")));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = RunConfig::from_json(&json!({"trian.bits": 3})).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let run = RunConfig::from_json(&json!({"train.bitz": 3})).unwrap();
        assert_eq!(run.section::<TrainConfig>("train").unwrap_err().exit_code(), 2);
        assert!(RunConfig::default().set("noequals").is_err());
        assert!(RunConfig::from_json(&json!([1])).is_err());
    }

    #[test]
    fn serialized_config_is_sorted() {
        let run = RunConfig::from_json(&json!({"train.seed": 1, "corpus": "x", "cf.bits": 8})).unwrap();
        let text = serde_json::to_string(&run.to_json()).unwrap();
        assert_eq!(text, r#"{"cf.bits":8,"corpus":"x","train.seed":1}"#);
    }
}
