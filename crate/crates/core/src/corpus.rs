//! Document ingestion, vocabulary construction and tf-idf vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VOCAB_SIZE: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Only used to judge relevance at evaluation time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Parses JSON-lines documents. Blank lines are skipped; ids must be unique.
pub fn parse_documents(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::format(format!(
                "line {}: duplicate document id {:?}",
                lineno + 1,
                doc.id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_documents(&text)
}

pub fn documents_to_jsonl(docs: &[Document]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

/// Lowercases, then splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// How term frequency enters the tf-idf weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfVariant {
    /// Raw term count.
    #[default]
    Raw,
    /// `1 + ln(count)`.
    Log,
}

impl TfVariant {
    fn weight(self, count: u32) -> f64 {
        match self {
            TfVariant::Raw => count as f64,
            TfVariant::Log => 1.0 + (count as f64).ln(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    cap: usize,
    tf: TfVariant,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    cap: usize,
    tf: TfVariant,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_parts(r.terms, r.df, r.n_docs, r.cap, r.tf)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
            cap: v.cap,
            tf: v.tf,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabLine {
    term: String,
    id: u32,
    df: u32,
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: usize, cap: usize, tf: TfVariant) -> Result<Self> {
        if terms.len() != df.len() {
            return Err(Error::format("vocabulary terms and document frequencies differ in length"));
        }
        if terms.len() > cap {
            return Err(Error::format("vocabulary larger than its cap"));
        }
        if df.iter().any(|&d| d == 0 || d as usize > n_docs) {
            return Err(Error::format("document frequency outside [1, n_docs]"));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::format(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Vocabulary {
            terms,
            df,
            n_docs,
            cap,
            tf,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn tf_variant(&self) -> TfVariant {
        self.tf
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn df(&self, id: u32) -> u32 {
        self.df[id as usize]
    }

    pub fn idf(&self, id: u32) -> f64 {
        (self.n_docs as f64 / self.df[id as usize] as f64).ln()
    }

    /// One `{term, id, df}` object per line, in id order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (i, term) in self.terms.iter().enumerate() {
            out.push_str(&serde_json::to_string(&VocabLine {
                term: term.clone(),
                id: i as u32,
                df: self.df[i],
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, n_docs: usize, cap: usize, tf: TfVariant) -> Result<Self> {
        let mut terms = Vec::new();
        let mut df = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: VocabLine = serde_json::from_str(line)
                .map_err(|e| Error::format(format!("vocabulary line {}: {e}", lineno + 1)))?;
            if entry.id as usize != terms.len() {
                return Err(Error::format(format!(
                    "vocabulary line {}: ids must be dense and in order",
                    lineno + 1
                )));
            }
            terms.push(entry.term);
            df.push(entry.df);
        }
        Self::from_parts(terms, df, n_docs, cap, tf)
    }
}

/// Keeps the `cap` most frequent terms (total occurrences across the
/// corpus), ties broken lexicographically; ids follow that order.
pub fn build_vocabulary(docs: &[Document], cap: usize, tf: TfVariant) -> Result<Vocabulary> {
    if cap == 0 {
        return Err(Error::usage("vocabulary size must be at least 1"));
    }
    if docs.is_empty() {
        return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: BTreeMap<String, (u64, u32)> = BTreeMap::new();
    for doc in docs {
        let tokens = tokenize(&doc.text);
        let mut in_doc = HashSet::new();
        for t in tokens {
            let entry = counts.entry(t.clone()).or_default();
            entry.0 += 1;
            if in_doc.insert(t) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64, u32)> = counts
        .into_iter()
        .map(|(t, (count, df))| (t, count, df))
        .collect();
    // BTreeMap order is lexicographic, so a stable sort by count keeps ties sorted
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(cap);
    let (terms, df): (Vec<String>, Vec<u32>) = ranked.into_iter().map(|(t, _, d)| (t, d)).unzip();
    Vocabulary::from_parts(terms, df, docs.len(), cap, tf)
}

/// Sparse nonnegative term weights, L2-normalised unless all zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfVector {
    /// `(term id, weight)` with ascending ids and strictly positive weights.
    pub entries: Vec<(u32, f64)>,
    pub dim: usize,
}

impl TfIdfVector {
    pub fn zeros(dim: usize) -> Self {
        TfIdfVector {
            entries: Vec::new(),
            dim,
        }
    }

    /// Normalises the given weights, dropping zeros.
    pub fn from_weights(mut entries: Vec<(u32, f64)>, dim: usize) -> Self {
        entries.retain(|&(_, w)| w > 0.0);
        entries.sort_by_key(|&(t, _)| t);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        TfIdfVector { entries, dim }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn weight(&self, term: u32) -> f64 {
        self.entries
            .binary_search_by_key(&term, |&(t, _)| t)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn dot(&self, other: &TfIdfVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// `tf(t) * ln(N / df(t))` over in-vocabulary terms, then L2-normalised.
pub fn tfidf(text: &str, vocab: &Vocabulary) -> TfIdfVector {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(id) = vocab.id(&token) {
            *counts.entry(id).or_default() += 1;
        }
    }
    let weights = counts
        .into_iter()
        .map(|(id, c)| (id, vocab.tf.weight(c) * vocab.idf(id)))
        .collect();
    TfIdfVector::from_weights(weights, vocab.len())
}

pub fn vectorize(docs: &[Document], vocab: &Vocabulary) -> Vec<TfIdfVector> {
    docs.iter().map(|d| tfidf(&d.text, vocab)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` into train/validation/test. Validation and test
/// sizes are rounded down; the remainder goes to train.
pub fn split(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::usage("split ratios must be finite and nonnegative"));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::usage("split ratios must sum to 1"));
    }
    let n_val = (n as f64 * va + 1e-9).floor() as usize;
    let n_test = (n as f64 * te + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = order[..n_val].to_vec();
    let mut test = order[n_val..n_val + n_test].to_vec();
    let mut train = order[n_val + n_test..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

/// One observed rating with dense user and item indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingTriple {
    pub user: u32,
    pub item: u32,
    /// Normalised to `[0, 1]`.
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ratings {
    /// External user ids in order of first appearance.
    pub users: Vec<String>,
    pub triples: Vec<RatingTriple>,
}

/// Parses `user<TAB>item<TAB>rating` lines. Items are resolved against
/// `item_ids` (the item documents); `#` lines and blank lines are skipped.
/// Ratings already inside `[0, 1]` are kept, otherwise all ratings are
/// min-max scaled into that range.
pub fn parse_ratings_tsv(text: &str, item_ids: &[String]) -> Result<Ratings> {
    let item_index: HashMap<&str, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut users = Vec::new();
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(format!(
                "ratings line {}: expected 3 tab-separated fields",
                lineno + 1
            )));
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| {
            Error::format(format!("ratings line {}: bad rating {:?}", lineno + 1, fields[2]))
        })?;
        if !rating.is_finite() {
            return Err(Error::format(format!("ratings line {}: non-finite rating", lineno + 1)));
        }
        let item = *item_index.get(fields[1]).ok_or_else(|| {
            Error::format(format!("ratings line {}: unknown item {:?}", lineno + 1, fields[1]))
        })?;
        let user = match user_index.get(fields[0]) {
            Some(&u) => u,
            None => {
                let u = users.len() as u32;
                user_index.insert(fields[0].to_string(), u);
                users.push(fields[0].to_string());
                u
            }
        };
        triples.push(RatingTriple { user, item, rating });
    }
    let (lo, hi) = triples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t.rating), hi.max(t.rating)));
    if !triples.is_empty() && (lo < 0.0 || hi > 1.0) {
        for t in &mut triples {
            t.rating = if hi > lo { (t.rating - lo) / (hi - lo) } else { 1.0 };
        }
    }
    Ok(Ratings { users, triples })
}

pub fn load_ratings(path: &Path, item_ids: &[String]) -> Result<Ratings> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_ratings_tsv(&text, item_ids)
}
