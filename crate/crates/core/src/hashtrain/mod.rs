//! End-to-end learning of document hash codes.
//!
//! An encoder maps a tf-idf vector to per-bit Bernoulli probabilities; bits
//! are sampled during training with a straight-through gradient and a softmax
//! decoder reconstructs the input from the sampled code. Four objectives are
//! supported:
//!
//! * `vae`: reconstruction plus a KL term toward the uniform Bernoulli prior,
//! * `rbsh`: `vae` plus a hinge on mined (query, similar, dissimilar) triplets,
//! * `pairrec`: the code of a mined similar document must also reconstruct the query,
//! * `mish`: `vae` plus two terms shaping codes for multi-index search, a
//!   substring false-positive penalty and a k-th neighbour distance hinge.

pub mod losses;
pub mod mining;

use std::collections::HashMap;
use std::fmt;
use std::ops::AddAssign;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitcode::HashCode;
use crate::checkpoint;
use crate::corpus::{TfIdfVector, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{self, Adam, BitMode, DecoderShape, EncoderPass, EncoderShape};

use losses::*;
pub use mining::{
    make_triplets, mine_neighbors, mine_neighbors_hamming, quantize_median, random_hyperplane_codes,
    sample_triplet, MiningMetric, Triplet,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Vae,
    Rbsh,
    Pairrec,
    Mish,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vae" => Ok(Objective::Vae),
            "rbsh" => Ok(Objective::Rbsh),
            "pairrec" => Ok(Objective::Pairrec),
            "mish" => Ok(Objective::Mish),
            other => Err(Error::usage(format!(
                "unknown objective {other:?}, expected vae|rbsh|pairrec|mish"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Vae => "vae",
            Objective::Rbsh => "rbsh",
            Objective::Pairrec => "pairrec",
            Objective::Mish => "mish",
        })
    }
}

/// Training configuration. Fields left as `None` scale with the code width;
/// see the accessor of the same name for the rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub bits: u32,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// KL weight, reached after linear annealing from zero.
    pub kl_weight: f64,
    /// Fraction of all steps over which the KL weight is annealed.
    pub kl_anneal_fraction: f64,
    /// Ranking hinge margin, default `B / 4`.
    pub margin: Option<f64>,
    pub ranking_weight: f64,
    pub fp_weight: f64,
    pub knn_weight: f64,
    /// Allowed k-th neighbour distance, default `B / 8`.
    pub target_radius: Option<f64>,
    /// Substring count for the multi-index terms, default `B / 8`.
    pub substrings: Option<u32>,
    pub substring_margin: f64,
    /// Full-distance threshold above which a pair counts as a potential
    /// false positive, default `B / 4`.
    pub fp_gate: Option<f64>,
    /// Which in-batch neighbour the k-th distance hinge looks at.
    pub mish_k: usize,
    /// Neighbour list length used for mining triplets and pairs.
    pub neighbors: usize,
    pub negatives_per_query: usize,
    pub mining: MiningMetric,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Vae,
            bits: 32,
            hidden: 1000,
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            kl_weight: 0.01,
            kl_anneal_fraction: 0.2,
            margin: None,
            ranking_weight: 1.0,
            fp_weight: 1.0,
            knn_weight: 1.0,
            target_radius: None,
            substrings: None,
            substring_margin: 1.0,
            fp_gate: None,
            mish_k: 10,
            neighbors: 100,
            negatives_per_query: 1,
            mining: MiningMetric::Cosine,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(self.bits as f64 / 4.0)
    }

    pub fn target_radius(&self) -> f64 {
        self.target_radius.unwrap_or(self.bits as f64 / 8.0)
    }

    pub fn substrings(&self) -> u32 {
        self.substrings.unwrap_or((self.bits / 8).max(1))
    }

    pub fn fp_gate(&self) -> f64 {
        self.fp_gate.unwrap_or(self.bits as f64 / 4.0)
    }

    /// Copy with every width-dependent default filled in, for provenance.
    pub fn resolved(&self) -> Self {
        TrainConfig {
            margin: Some(self.margin()),
            target_radius: Some(self.target_radius()),
            substrings: Some(self.substrings()),
            fp_gate: Some(self.fp_gate()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::bitcode::check_width(self.bits)?;
        crate::bitcode::check_split(self.bits, self.substrings())?;
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::usage("hidden width and batch size must be positive"));
        }
        let weights = [
            self.learning_rate,
            self.kl_weight,
            self.margin(),
            self.ranking_weight,
            self.fp_weight,
            self.knn_weight,
            self.target_radius(),
            self.substring_margin,
            self.fp_gate(),
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::usage("weights, margins and the learning rate must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.kl_anneal_fraction) {
            return Err(Error::usage("kl_anneal_fraction must lie in [0, 1]"));
        }
        if self.objective == Objective::Mish && self.mish_k == 0 {
            return Err(Error::usage("mish_k must be at least 1"));
        }
        if matches!(self.objective, Objective::Rbsh) && self.negatives_per_query == 0 {
            return Err(Error::usage("negatives_per_query must be at least 1"));
        }
        Ok(())
    }
}

/// Encoder and decoder parameters in one flat vector: encoder first (see
/// [`EncoderShape`]), then decoder (see [`DecoderShape`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DocModel {
    pub encoder: EncoderShape,
    pub decoder: DecoderShape,
    pub params: Vec<f64>,
}

impl DocModel {
    pub fn new<R: Rng + ?Sized>(vocab: usize, hidden: usize, bits: usize, rng: &mut R) -> Self {
        let encoder = EncoderShape { vocab, hidden, bits };
        let decoder = DecoderShape { vocab, bits };
        let mut params = vec![0.0; encoder.n_params() + decoder.n_params()];
        let split = encoder.n_params();
        encoder.init(&mut params[..split], rng);
        decoder.init(&mut params[split..], rng);
        DocModel {
            encoder,
            decoder,
            params,
        }
    }

    pub fn encoder_params(&self) -> &[f64] {
        &self.params[..self.encoder.n_params()]
    }

    pub fn decoder_params(&self) -> &[f64] {
        &self.params[self.encoder.n_params()..]
    }

    /// Bit probabilities for one document.
    pub fn encode(&self, x: &TfIdfVector) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.encoder.forward(self.encoder_params(), x).sigma)
    }

    /// Deterministic inference code for one document.
    pub fn code(&self, x: &TfIdfVector) -> Result<HashCode> {
        nn::threshold_code(&self.encode(x)?)
    }

    pub fn codes(&self, data: &[TfIdfVector]) -> Result<Vec<HashCode>> {
        data.iter().map(|x| self.code(x)).collect()
    }

    fn check_input(&self, x: &TfIdfVector) -> Result<()> {
        if x.dim != self.encoder.vocab {
            return Err(Error::usage(format!(
                "input dimension {} does not match model vocabulary {}",
                x.dim, self.encoder.vocab
            )));
        }
        Ok(())
    }
}

/// Mined companion of a batch query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partner {
    None,
    Similar(usize),
    Triplet { similar: usize, dissimilar: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub queries: Vec<usize>,
    pub partners: Vec<Partner>,
}

/// The random and discrete choices of one forward pass: the straight-through
/// offsets `bit - sigma` of every encoded document and the selected k-th
/// neighbour of every query. Replaying them makes the loss a smooth function
/// of the parameters whose gradient is the straight-through gradient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenNoise {
    docs: Vec<usize>,
    offsets: Vec<Vec<f64>>,
    kth: Vec<usize>,
}

pub enum Noise<'a> {
    Sample(&'a mut ChaCha8Rng),
    Frozen(&'a FrozenNoise),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub ranking: f64,
    pub fp: f64,
    pub knn: f64,
}

impl AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.recon += o.recon;
        self.kl += o.kl;
        self.ranking += o.ranking;
        self.fp += o.fp;
        self.knn += o.knn;
    }
}

impl LossTerms {
    fn scaled(self, s: f64) -> Self {
        LossTerms {
            total: self.total * s,
            recon: self.recon * s,
            kl: self.kl * s,
            ranking: self.ranking * s,
            fp: self.fp * s,
            knn: self.knn * s,
        }
    }
}

/// Total loss of one batch under `cfg.objective` with KL weight `beta`,
/// its gradient with respect to `model.params`, and the noise that was used.
///
/// Per-query terms are averaged over the batch queries; the false-positive
/// term is averaged over unordered query pairs.
pub fn batch_objective(
    model: &DocModel,
    cfg: &TrainConfig,
    data: &[TfIdfVector],
    batch: &Batch,
    beta: f64,
    noise: Noise<'_>,
) -> Result<(LossTerms, Vec<f64>, FrozenNoise)> {
    if batch.queries.len() != batch.partners.len() {
        return Err(Error::usage("every batch query needs a partner entry"));
    }
    if batch.queries.is_empty() {
        return Err(Error::usage("empty batch"));
    }

    // every distinct document touched by the batch, in first-use order
    let mut docs: Vec<usize> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut add = |d: usize, docs: &mut Vec<usize>| -> usize {
        *slot.entry(d).or_insert_with(|| {
            docs.push(d);
            docs.len() - 1
        })
    };
    let q_slots: Vec<usize> = batch.queries.iter().map(|&q| add(q, &mut docs)).collect();
    let p_slots: Vec<(Option<usize>, Option<usize>)> = batch
        .partners
        .iter()
        .map(|p| match *p {
            Partner::None => (None, None),
            Partner::Similar(s) => (Some(add(s, &mut docs)), None),
            Partner::Triplet { similar, dissimilar } => {
                (Some(add(similar, &mut docs)), Some(add(dissimilar, &mut docs)))
            }
        })
        .collect();
    if let Some(&bad) = docs.iter().find(|&&d| d >= data.len()) {
        return Err(Error::usage(format!("document index {bad} out of range")));
    }

    let enc_n = model.encoder.n_params();
    let (enc_p, dec_p) = model.params.split_at(enc_n);
    let passes: Vec<EncoderPass> = docs
        .iter()
        .map(|&d| model.encoder.forward(enc_p, &data[d]))
        .collect();

    let mut frozen = FrozenNoise {
        docs: docs.clone(),
        offsets: Vec::with_capacity(docs.len()),
        kth: Vec::new(),
    };
    let replay = match noise {
        Noise::Sample(rng) => {
            for pass in &passes {
                let bits = nn::sample_bits(&pass.sigma, rng, BitMode::Stochastic);
                frozen
                    .offsets
                    .push(bits.iter().zip(&pass.sigma).map(|(b, s)| b - s).collect());
            }
            None
        }
        Noise::Frozen(f) => {
            if f.docs != docs {
                return Err(Error::usage("frozen noise was recorded for a different batch"));
            }
            frozen.offsets = f.offsets.clone();
            Some(f)
        }
    };
    let z: Vec<Vec<f64>> = passes
        .iter()
        .zip(&frozen.offsets)
        .map(|(pass, off)| pass.sigma.iter().zip(off).map(|(s, o)| s + o).collect())
        .collect();

    let bits = model.encoder.bits;
    let mut grad = vec![0.0; model.params.len()];
    let mut dz = vec![vec![0.0; bits]; docs.len()];
    let mut dsigma = vec![vec![0.0; bits]; docs.len()];
    let mut terms = LossTerms::default();
    let nq = batch.queries.len() as f64;

    {
        let (_, dec_grad) = grad.split_at_mut(enc_n);
        for (qi, &qs) in q_slots.iter().enumerate() {
            let x = &data[batch.queries[qi]];
            terms.recon += model
                .decoder
                .recon_backward(dec_p, &z[qs], x, 1.0 / nq, dec_grad, &mut dz[qs]);
            terms.kl += kl_backward(&passes[qs].sigma, beta / nq, &mut dsigma[qs]);

            match cfg.objective {
                Objective::Pairrec => {
                    let ss = p_slots[qi]
                        .0
                        .ok_or_else(|| Error::usage("pairrec batches need a similar document per query"))?;
                    terms.recon += model
                        .decoder
                        .recon_backward(dec_p, &z[ss], x, 1.0 / nq, dec_grad, &mut dz[ss]);
                    terms.kl += kl_backward(&passes[ss].sigma, beta / nq, &mut dsigma[ss]);
                }
                Objective::Rbsh => {
                    let (Some(ps), Some(ns)) = p_slots[qi] else {
                        return Err(Error::usage("rbsh batches need a triplet per query"));
                    };
                    let (mut dq, mut dp, mut dn) = (vec![0.0; bits], vec![0.0; bits], vec![0.0; bits]);
                    terms.ranking += ranking_backward(
                        &z[qs],
                        &z[ps],
                        &z[ns],
                        cfg.margin(),
                        cfg.ranking_weight / nq,
                        &mut dq,
                        &mut dp,
                        &mut dn,
                    );
                    add_into(&mut dz[qs], &dq);
                    add_into(&mut dz[ps], &dp);
                    add_into(&mut dz[ns], &dn);
                }
                _ => {}
            }
        }
    }

    if cfg.objective == Objective::Mish {
        let m = cfg.substrings() as usize;
        let nq_usize = q_slots.len();
        let pairs = nq_usize * (nq_usize - 1) / 2;
        if pairs > 0 {
            let scale = cfg.fp_weight / pairs as f64;
            for a in 0..nq_usize {
                for b in a + 1..nq_usize {
                    let (sa, sb) = (q_slots[a], q_slots[b]);
                    if sa == sb {
                        continue;
                    }
                    let (mut da, mut db) = (vec![0.0; bits], vec![0.0; bits]);
                    terms.fp += mish_false_positive_backward(
                        &z[sa],
                        &z[sb],
                        m,
                        cfg.substring_margin,
                        cfg.fp_gate(),
                        scale,
                        &mut da,
                        &mut db,
                    )?;
                    add_into(&mut dz[sa], &da);
                    add_into(&mut dz[sb], &db);
                }
            }
        }

        for a in 0..nq_usize {
            let others: Vec<usize> = (0..nq_usize).filter(|&b| b != a).collect();
            let pick = match replay {
                Some(f) => *f
                    .kth
                    .get(a)
                    .ok_or_else(|| Error::usage("frozen noise lacks k-th neighbour choices"))?,
                None => {
                    let refs: Vec<&[f64]> = others.iter().map(|&b| z[q_slots[b]].as_slice()).collect();
                    kth_nearest(&z[q_slots[a]], &refs, cfg.mish_k)?
                }
            };
            frozen.kth.push(pick);
            let (sa, sk) = (q_slots[a], q_slots[others[pick]]);
            let (mut da, mut dk) = (vec![0.0; bits], vec![0.0; bits]);
            terms.knn += mish_knn_backward(
                &z[sa],
                &z[sk],
                cfg.target_radius(),
                cfg.knn_weight / nq,
                &mut da,
                &mut dk,
            );
            add_into(&mut dz[sa], &da);
            add_into(&mut dz[sk], &dk);
        }
    }

    // straight-through: the sampled bit passes its gradient to sigma unchanged
    let (enc_grad, _) = grad.split_at_mut(enc_n);
    for (i, &d) in docs.iter().enumerate() {
        add_into(&mut dsigma[i], &dz[i]);
        model
            .encoder
            .backward(enc_p, &data[d], &passes[i], &dsigma[i], enc_grad);
    }

    terms.total = terms.recon + terms.kl + terms.ranking + terms.fp + terms.knn;
    Ok((terms, grad, frozen))
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// KL weight at the end of the epoch.
    pub beta: f64,
    /// Mean over the epoch's batches. Epoch 0 is a pass at the initial
    /// parameters without updates.
    pub loss: LossTerms,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DocModel,
    pub codes: Vec<HashCode>,
    pub log: Vec<EpochLog>,
    pub config: TrainConfig,
}

fn make_batches(order: &[usize], batch_size: usize, min_batch: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < min_batch) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

fn partners_for<R: Rng + ?Sized>(
    objective: Objective,
    queries: &[usize],
    neighbors: Option<&[Vec<usize>]>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Partner>> {
    queries
        .iter()
        .map(|&q| match (objective, neighbors) {
            (Objective::Rbsh, Some(nb)) => {
                let t = sample_triplet(q, &nb[q], n, rng)?;
                Ok(Partner::Triplet {
                    similar: t.similar,
                    dissimilar: t.dissimilar,
                })
            }
            (Objective::Pairrec, Some(nb)) => Ok(Partner::Similar(nb[q][rng.gen_range(0..nb[q].len())])),
            _ => Ok(Partner::None),
        })
        .collect()
}

/// Trains a document model on `data` and returns it with the deterministic
/// codes of every training document. Identical inputs and seed give
/// bitwise-identical results.
pub fn train(data: &[TfIdfVector], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::usage("cannot train on an empty corpus"));
    }
    let vocab = data[0].dim;
    if data.iter().any(|x| x.dim != vocab) {
        return Err(Error::usage("all training vectors must share one vocabulary"));
    }
    if cfg.objective == Objective::Mish && n < cfg.mish_k + 1 {
        return Err(Error::usage("corpus smaller than mish_k + 1"));
    }

    let neighbors = match cfg.objective {
        Objective::Rbsh | Objective::Pairrec => {
            if cfg.objective == Objective::Rbsh && n < cfg.neighbors + 2 {
                return Err(Error::usage(format!(
                    "corpus of {n} documents is smaller than K + 2 = {}",
                    cfg.neighbors + 2
                )));
            }
            Some(match cfg.mining {
                MiningMetric::Cosine => mine_neighbors(data, cfg.neighbors)?,
                MiningMetric::Hamming => {
                    let first = train(
                        data,
                        &TrainConfig {
                            objective: Objective::Vae,
                            ..cfg.clone()
                        },
                    )?;
                    mine_neighbors_hamming(&first.codes, cfg.neighbors)?
                }
            })
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DocModel::new(vocab, cfg.hidden, cfg.bits as usize, &mut rng);
    let mut opt = Adam::new(model.params.len(), cfg.learning_rate);

    let min_batch = if cfg.objective == Objective::Mish { cfg.mish_k + 1 } else { 1 };
    let n_batches = make_batches(&(0..n).collect::<Vec<_>>(), cfg.batch_size, min_batch).len();
    let total_steps = cfg.epochs * n_batches;
    let warm = (cfg.kl_anneal_fraction * total_steps as f64).ceil();
    let beta_at = |step: usize| {
        if warm <= 0.0 {
            cfg.kl_weight
        } else {
            cfg.kl_weight * (step as f64 / warm).min(1.0)
        }
    };

    let mut log = Vec::with_capacity(cfg.epochs + 1);
    {
        let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);
        let order: Vec<usize> = (0..n).collect();
        let batches = make_batches(&order, cfg.batch_size, min_batch);
        let mut sum = LossTerms::default();
        for b in &batches {
            let partners = partners_for(cfg.objective, b, neighbors.as_deref(), n, &mut eval_rng)?;
            let batch = Batch {
                queries: b.clone(),
                partners,
            };
            let (terms, _, _) = batch_objective(&model, cfg, data, &batch, beta_at(0), Noise::Sample(&mut eval_rng))?;
            sum += terms;
        }
        log.push(EpochLog {
            epoch: 0,
            beta: beta_at(0),
            loss: sum.scaled(1.0 / batches.len() as f64),
        });
    }

    let mut step = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let batches = make_batches(&order, cfg.batch_size, min_batch);
        let mut sum = LossTerms::default();
        for b in &batches {
            let partners = partners_for(cfg.objective, b, neighbors.as_deref(), n, &mut rng)?;
            let batch = Batch {
                queries: b.clone(),
                partners,
            };
            let beta = beta_at(step);
            let (terms, grad, _) = batch_objective(&model, cfg, data, &batch, beta, Noise::Sample(&mut rng))?;
            if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}, step {step}: {terms:?}"
                )));
            }
            opt.step(&mut model.params, &grad);
            sum += terms;
            step += 1;
        }
        log.push(EpochLog {
            epoch,
            beta: beta_at(step.saturating_sub(1)),
            loss: sum.scaled(1.0 / batches.len() as f64),
        });
    }

    // codes are taken at checkpoint precision so a reloaded model reproduces them
    nn::round_to_f32(&mut model.params);
    let codes = model.codes(data)?;
    Ok(TrainOutcome {
        model,
        codes,
        log,
        config: cfg.resolved(),
    })
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DocCheckpointHeader {
    pub schema_version: u32,
    pub kind: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub encoder: EncoderShape,
    pub decoder: DecoderShape,
    pub vocabulary: Vocabulary,
}

pub fn save_checkpoint(path: &Path, outcome: &TrainOutcome, vocabulary: &Vocabulary) -> Result<()> {
    let header = DocCheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        kind: "document".into(),
        config: outcome.config.clone(),
        seed: outcome.config.seed,
        epoch: outcome.log.last().map_or(0, |l| l.epoch),
        encoder: outcome.model.encoder,
        decoder: outcome.model.decoder,
        vocabulary: vocabulary.clone(),
    };
    checkpoint::save(path, &header, &outcome.model.params)
}

pub fn load_checkpoint(path: &Path) -> Result<(DocModel, DocCheckpointHeader)> {
    let (header, params): (DocCheckpointHeader, Vec<f64>) = checkpoint::load(path)?;
    if header.kind != "document" || header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::format(format!(
            "{} is not a document checkpoint of schema {CHECKPOINT_SCHEMA_VERSION}",
            path.display()
        )));
    }
    if params.len() != header.encoder.n_params() + header.decoder.n_params() {
        return Err(Error::format("checkpoint parameter count does not match its shapes"));
    }
    Ok((
        DocModel {
            encoder: header.encoder,
            decoder: header.decoder,
            params,
        },
        header,
    ))
}
