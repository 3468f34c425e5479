//! Hash codes for collaborative filtering.
//!
//! Users are a table of bit logits indexed by user id. Items are encoded from
//! their content with the same encoder as documents, so items never seen in
//! training get codes the same way as training items. A rating is predicted
//! from the dissimilarity of the two codes with a learned affine link
//! `clamp(c + a (1 - 2 delta / B), 0, 1)`, and training minimises the squared
//! error on observed ratings with straight-through bits on both sides.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bitcode::{hamming_distance, projected_hamming_dissimilarity, HashCode};
use crate::checkpoint;
use crate::corpus::{RatingTriple, TfIdfVector, Vocabulary};
use crate::error::{Error, Result};
use crate::evalbench::ndcg_at_k;
use crate::hashtrain::losses::{relaxed_hamming, relaxed_projected};
use crate::mih::MihIndex;
use crate::nn::{self, clamped_logistic, Adam, BitMode, EncoderPass, EncoderShape};

/// Dissimilarity between a user code and an item code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    Hamming,
    /// Bits set in the user code but not in the item code.
    Phd,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(Measure::Hamming),
            "phd" => Ok(Measure::Phd),
            other => Err(Error::usage(format!("unknown measure {other:?}, expected hamming|phd"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Hamming => "hamming",
            Measure::Phd => "phd",
        })
    }
}

impl Measure {
    /// Expected `1 - 2δ/B` between two uniformly random codes.
    pub fn random_similarity(self) -> f64 {
        match self {
            Measure::Hamming => 0.0,
            Measure::Phd => 0.5,
        }
    }

    /// Relaxed dissimilarity of user `u` and item `i`; exact on 0/1 inputs.
    pub fn relaxed(self, u: &[f64], i: &[f64]) -> f64 {
        match self {
            Measure::Hamming => relaxed_hamming(u, i),
            Measure::Phd => relaxed_projected(u, i),
        }
    }

    pub fn binary(self, u: &HashCode, i: &HashCode) -> Result<u32> {
        match self {
            Measure::Hamming => hamming_distance(u, i),
            Measure::Phd => projected_hamming_dissimilarity(u, i),
        }
    }
}

/// `clamp(c + a (1 - 2 delta / B), 0, 1)` on relaxed or 0/1 codes.
pub fn predict_rating(u: &[f64], i: &[f64], measure: Measure, a: f64, c: f64) -> Result<f64> {
    if u.len() != i.len() || u.is_empty() {
        return Err(Error::usage(format!(
            "user and item codes have widths {} and {}",
            u.len(),
            i.len()
        )));
    }
    if !(a > 0.0) || !a.is_finite() || !c.is_finite() {
        return Err(Error::usage("the link slope must be positive and both link parameters finite"));
    }
    let delta = measure.relaxed(u, i);
    Ok((c + a * (1.0 - 2.0 * delta / u.len() as f64)).clamp(0.0, 1.0))
}

/// [`predict_rating`] on packed codes.
pub fn predict_rating_codes(u: &HashCode, i: &HashCode, measure: Measure, a: f64, c: f64) -> Result<f64> {
    let delta = measure.binary(u, i)?;
    if !(a > 0.0) || !a.is_finite() || !c.is_finite() {
        return Err(Error::usage("the link slope must be positive and both link parameters finite"));
    }
    Ok((c + a * (1.0 - 2.0 * delta as f64 / u.bits() as f64)).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfConfig {
    pub measure: Measure,
    pub bits: u32,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Standard deviation of the initial user logits.
    pub user_init_scale: f64,
    pub seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            measure: Measure::Hamming,
            bits: 32,
            hidden: 100,
            epochs: 20,
            batch_size: 128,
            learning_rate: 3e-3,
            user_init_scale: 0.5,
            seed: 0,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        crate::bitcode::check_width(self.bits)?;
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::usage("hidden width and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || !(self.user_init_scale >= 0.0 && self.user_init_scale.is_finite())
        {
            return Err(Error::usage("learning rate and init scale must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Parameter layout: user logits `U[users][bits]`, then the item encoder (see
/// [`EncoderShape`]), then `log_a` and `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct CfModel {
    pub users: usize,
    pub encoder: EncoderShape,
    pub params: Vec<f64>,
}

impl CfModel {
    pub fn new<R: Rng + ?Sized>(
        users: usize,
        vocab: usize,
        hidden: usize,
        bits: usize,
        measure: Measure,
        user_init_scale: f64,
        mean_rating: f64,
        rng: &mut R,
    ) -> Self {
        let encoder = EncoderShape { vocab, hidden, bits };
        let mut params = vec![0.0; users * bits + encoder.n_params() + 2];
        for p in &mut params[..users * bits] {
            *p = user_init_scale * rng.sample::<f64, _>(StandardNormal);
        }
        let enc = users * bits..users * bits + encoder.n_params();
        encoder.init(&mut params[enc], rng);
        let n = params.len();
        // start every measure at the same spread around the mean rating for
        // uniformly random codes
        let expected = measure.random_similarity();
        let a = 0.5 / (1.0 - expected);
        params[n - 2] = a.ln();
        params[n - 1] = mean_rating - a * expected;
        CfModel {
            users,
            encoder,
            params,
        }
    }

    pub fn bits(&self) -> usize {
        self.encoder.bits
    }

    fn user_span(&self) -> usize {
        self.users * self.bits()
    }

    pub fn encoder_params(&self) -> &[f64] {
        &self.params[self.user_span()..self.user_span() + self.encoder.n_params()]
    }

    /// Link parameters `(a, c)`.
    pub fn scale(&self) -> (f64, f64) {
        let n = self.params.len();
        (self.params[n - 2].exp(), self.params[n - 1])
    }

    fn user_logits(&self, u: usize) -> &[f64] {
        let b = self.bits();
        &self.params[u * b..(u + 1) * b]
    }

    pub fn user_sigma(&self, u: usize) -> Result<Vec<f64>> {
        if u >= self.users {
            return Err(Error::usage(format!("user {u} out of range ({} users)", self.users)));
        }
        Ok(self.user_logits(u).iter().map(|&l| clamped_logistic(l).0).collect())
    }

    pub fn user_code(&self, u: usize) -> Result<HashCode> {
        nn::threshold_code(&self.user_sigma(u)?)
    }

    pub fn user_codes(&self) -> Result<Vec<HashCode>> {
        (0..self.users).map(|u| self.user_code(u)).collect()
    }

    /// Bit probabilities of an item from its content. Training and
    /// cold-start items both go through here.
    pub fn item_sigma(&self, content: &TfIdfVector) -> Result<Vec<f64>> {
        if content.dim != self.encoder.vocab {
            return Err(Error::usage(format!(
                "item content dimension {} does not match model vocabulary {}",
                content.dim, self.encoder.vocab
            )));
        }
        Ok(self.encoder.forward(self.encoder_params(), content).sigma)
    }

    pub fn encode_item<R: Rng + ?Sized>(&self, content: &TfIdfVector, mode: BitMode, rng: &mut R) -> Result<HashCode> {
        let bits = nn::sample_bits(&self.item_sigma(content)?, rng, mode);
        HashCode::from_bools(&bits.iter().map(|&b| b == 1.0).collect::<Vec<_>>())
    }

    pub fn item_code(&self, content: &TfIdfVector) -> Result<HashCode> {
        nn::threshold_code(&self.item_sigma(content)?)
    }

    pub fn item_codes(&self, contents: &[TfIdfVector]) -> Result<Vec<HashCode>> {
        contents.iter().map(|x| self.item_code(x)).collect()
    }
}

/// Straight-through offsets of the users and items of one batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CfFrozenNoise {
    users: Vec<u32>,
    items: Vec<u32>,
    user_offsets: Vec<Vec<f64>>,
    item_offsets: Vec<Vec<f64>>,
}

pub enum CfNoise<'a> {
    Sample(&'a mut ChaCha8Rng),
    Frozen(&'a CfFrozenNoise),
}

fn check_triples(triples: &[RatingTriple], users: usize, items: usize) -> Result<()> {
    for t in triples {
        if t.user as usize >= users || t.item as usize >= items {
            return Err(Error::usage(format!(
                "rating ({}, {}) refers to an id outside {users} users and {items} items",
                t.user, t.item
            )));
        }
        if !t.rating.is_finite() {
            return Err(Error::usage("ratings must be finite"));
        }
    }
    Ok(())
}

fn distinct(ids: impl Iterator<Item = u32>) -> (Vec<u32>, HashMap<u32, usize>) {
    let mut order = Vec::new();
    let mut slot = HashMap::new();
    for id in ids {
        slot.entry(id).or_insert_with(|| {
            order.push(id);
            order.len() - 1
        });
    }
    (order, slot)
}

/// Mean squared rating error of one batch, its parameter gradient and the
/// noise that was used.
pub fn cf_batch_objective(
    model: &CfModel,
    measure: Measure,
    items: &[TfIdfVector],
    batch: &[RatingTriple],
    noise: CfNoise<'_>,
) -> Result<(f64, Vec<f64>, CfFrozenNoise)> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    check_triples(batch, model.users, items.len())?;
    let bits = model.bits();
    let (users, u_slot) = distinct(batch.iter().map(|t| t.user));
    let (item_ids, i_slot) = distinct(batch.iter().map(|t| t.item));

    let u_sigma: Vec<Vec<f64>> = users.iter().map(|&u| model.user_sigma(u as usize)).collect::<Result<_>>()?;
    let enc_p = model.encoder_params();
    let passes: Vec<EncoderPass> = item_ids
        .iter()
        .map(|&i| {
            let x = &items[i as usize];
            if x.dim != model.encoder.vocab {
                return Err(Error::usage("item content does not match the model vocabulary"));
            }
            Ok(model.encoder.forward(enc_p, x))
        })
        .collect::<Result<_>>()?;

    let mut frozen = CfFrozenNoise {
        users: users.clone(),
        items: item_ids.clone(),
        ..Default::default()
    };
    match noise {
        CfNoise::Sample(rng) => {
            let mut offsets = |sigma: &[f64]| -> Vec<f64> {
                nn::sample_bits(sigma, rng, BitMode::Stochastic)
                    .iter()
                    .zip(sigma)
                    .map(|(b, s)| b - s)
                    .collect()
            };
            frozen.user_offsets = u_sigma.iter().map(|s| offsets(s)).collect();
            frozen.item_offsets = passes.iter().map(|p| offsets(&p.sigma)).collect();
        }
        CfNoise::Frozen(f) => {
            if f.users != users || f.items != item_ids {
                return Err(Error::usage("frozen noise was recorded for a different batch"));
            }
            frozen.user_offsets = f.user_offsets.clone();
            frozen.item_offsets = f.item_offsets.clone();
        }
    }
    let add = |s: &[f64], o: &[f64]| -> Vec<f64> { s.iter().zip(o).map(|(a, b)| a + b).collect() };
    let zu: Vec<Vec<f64>> = u_sigma.iter().zip(&frozen.user_offsets).map(|(s, o)| add(s, o)).collect();
    let zi: Vec<Vec<f64>> = passes.iter().zip(&frozen.item_offsets).map(|(p, o)| add(&p.sigma, o)).collect();

    let (a, c) = model.scale();
    let n = batch.len() as f64;
    let bf = bits as f64;
    let mut dzu = vec![vec![0.0; bits]; users.len()];
    let mut dzi = vec![vec![0.0; bits]; item_ids.len()];
    let (mut dlog_a, mut dc) = (0.0, 0.0);
    let mut loss = 0.0;
    for t in batch {
        let (us, is) = (u_slot[&t.user], i_slot[&t.item]);
        let (u, i) = (&zu[us], &zi[is]);
        let delta = measure.relaxed(u, i);
        let lin = 1.0 - 2.0 * delta / bf;
        let pre = c + a * lin;
        let pred = pre.clamp(0.0, 1.0);
        let err = pred - t.rating;
        loss += err * err / n;
        if pre <= 0.0 || pre >= 1.0 {
            continue;
        }
        let dpre = 2.0 * err / n;
        dc += dpre;
        dlog_a += dpre * a * lin;
        let ddelta = -dpre * 2.0 * a / bf;
        for j in 0..bits {
            match measure {
                Measure::Hamming => {
                    dzu[us][j] += ddelta * (1.0 - 2.0 * i[j]);
                    dzi[is][j] += ddelta * (1.0 - 2.0 * u[j]);
                }
                Measure::Phd => {
                    dzu[us][j] += ddelta * (1.0 - i[j]);
                    dzi[is][j] -= ddelta * u[j];
                }
            }
        }
    }

    let mut grad = vec![0.0; model.params.len()];
    for (s, &u) in users.iter().enumerate() {
        let logits = model.user_logits(u as usize);
        for j in 0..bits {
            let (sig, clamped) = clamped_logistic(logits[j]);
            if !clamped {
                grad[u as usize * bits + j] += dzu[s][j] * sig * (1.0 - sig);
            }
        }
    }
    let span = model.user_span();
    {
        let enc_grad = &mut grad[span..span + model.encoder.n_params()];
        for (s, &i) in item_ids.iter().enumerate() {
            model
                .encoder
                .backward(enc_p, &items[i as usize], &passes[s], &dzi[s], enc_grad);
        }
    }
    let np = grad.len();
    grad[np - 2] = dlog_a;
    grad[np - 1] = dc;
    Ok((loss, grad, frozen))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfEpochLog {
    pub epoch: usize,
    /// Mean batch loss; epoch 0 is a pass at the initial parameters.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct CfOutcome {
    pub model: CfModel,
    pub log: Vec<CfEpochLog>,
    pub config: CfConfig,
}

/// Trains user logits, item encoder and link on observed `triples`.
pub fn train_cf(items: &[TfIdfVector], triples: &[RatingTriple], users: usize, cfg: &CfConfig) -> Result<CfOutcome> {
    cfg.validate()?;
    if triples.is_empty() || items.is_empty() || users == 0 {
        return Err(Error::usage("training needs users, items and at least one rating"));
    }
    check_triples(triples, users, items.len())?;
    let vocab = items[0].dim;
    if items.iter().any(|x| x.dim != vocab) {
        return Err(Error::usage("all item contents must share one vocabulary"));
    }
    let mean = triples.iter().map(|t| t.rating).sum::<f64>() / triples.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CfModel::new(
        users,
        vocab,
        cfg.hidden,
        cfg.bits as usize,
        cfg.measure,
        cfg.user_init_scale,
        mean,
        &mut rng,
    );
    let mut opt = Adam::new(model.params.len(), cfg.learning_rate);

    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);
    let mut sum = 0.0;
    let chunks: Vec<&[RatingTriple]> = triples.chunks(cfg.batch_size).collect();
    for b in &chunks {
        sum += cf_batch_objective(&model, cfg.measure, items, b, CfNoise::Sample(&mut eval_rng))?.0;
    }
    log.push(CfEpochLog {
        epoch: 0,
        loss: sum / chunks.len() as f64,
    });

    let mut order: Vec<RatingTriple> = triples.to_vec();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for b in order.chunks(cfg.batch_size) {
            let (loss, grad, _) = cf_batch_objective(&model, cfg.measure, items, b, CfNoise::Sample(&mut rng))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!("non-finite loss at epoch {epoch}")));
            }
            opt.step(&mut model.params, &grad);
            sum += loss;
            batches += 1;
        }
        log.push(CfEpochLog {
            epoch,
            loss: sum / batches as f64,
        });
    }
    nn::round_to_f32(&mut model.params);
    Ok(CfOutcome {
        model,
        log,
        config: cfg.clone(),
    })
}

/// Mean squared error of deterministic-code predictions on `triples`.
pub fn code_mse(
    user_codes: &[HashCode],
    item_codes: &[HashCode],
    triples: &[RatingTriple],
    measure: Measure,
    a: f64,
    c: f64,
) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::usage("no ratings to evaluate"));
    }
    check_triples(triples, user_codes.len(), item_codes.len())?;
    let mut sum = 0.0;
    for t in triples {
        let p = predict_rating_codes(&user_codes[t.user as usize], &item_codes[t.item as usize], measure, a, c)?;
        sum += (p - t.rating).powi(2);
    }
    Ok(sum / triples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdStartSplit {
    /// Ratings of items that stay in training.
    pub train: Vec<RatingTriple>,
    /// Held-out item ids, ascending.
    pub heldout_items: Vec<u32>,
    /// Ratings of held-out items.
    pub test: Vec<RatingTriple>,
}

/// Holds out `floor(fraction * items)` items chosen by `seed`, with all of
/// their ratings.
pub fn coldstart_split(triples: &[RatingTriple], items: usize, fraction: f64, seed: u64) -> Result<ColdStartSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::usage(format!("cold-start fraction {fraction} must lie in (0, 1)")));
    }
    let count = (fraction * items as f64).floor() as usize;
    if count == 0 {
        return Err(Error::usage(format!(
            "fraction {fraction} of {items} items holds out nothing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..items as u32).collect();
    order.shuffle(&mut rng);
    let mut heldout_items = order[..count].to_vec();
    heldout_items.sort_unstable();
    let held: HashSet<u32> = heldout_items.iter().copied().collect();
    let (test, train) = triples.iter().partition(|t| held.contains(&t.item));
    Ok(ColdStartSplit {
        train,
        heldout_items,
        test,
    })
}

/// Random `(train, test)` partition of the ratings with
/// `floor(test_fraction * len)` test triples; both keep input order.
pub fn triple_split(
    triples: &[RatingTriple],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<RatingTriple>, Vec<RatingTriple>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::usage(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(&mut rng);
    let count = (test_fraction * triples.len() as f64).floor() as usize;
    let test_set: HashSet<usize> = order[..count].iter().copied().collect();
    let (test, train): (Vec<_>, Vec<_>) = triples.iter().enumerate().partition(|(i, _)| test_set.contains(i));
    Ok((
        train.into_iter().map(|(_, t)| *t).collect(),
        test.into_iter().map(|(_, t)| *t).collect(),
    ))
}

/// Top-`k` items for a user code by linear scan, ascending dissimilarity with
/// ties broken by item id. `k` beyond the item count returns every item.
pub fn recommend(user: &HashCode, items: &[HashCode], k: usize, measure: Measure) -> Result<Vec<(u32, u32)>> {
    let mut scored: Vec<(u32, u32)> = items
        .iter()
        .enumerate()
        .map(|(id, c)| Ok((measure.binary(user, c)?, id as u32)))
        .collect::<Result<_>>()?;
    scored.sort_unstable();
    scored.truncate(k);
    Ok(scored)
}

/// [`recommend`] over a multi-index table; Hamming only, since the
/// substring bound does not carry over to the projected dissimilarity.
pub fn recommend_indexed(user: &HashCode, index: &MihIndex, k: usize) -> Result<Vec<(u32, u32)>> {
    let k = k.min(index.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let (result, _) = index.knn_search(user, k)?;
    Ok(result.hits.iter().map(|h| (h.distance, h.id)).collect())
}

/// One user's ranking problem: order `candidates`, score with `gains`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingTask {
    pub user: u32,
    pub candidates: Vec<u32>,
    pub gains: HashMap<u32, f64>,
}

fn tasks_from(test: &[RatingTriple], candidates: impl Fn(u32) -> Vec<u32>) -> Vec<RankingTask> {
    let mut by_user: std::collections::BTreeMap<u32, HashMap<u32, f64>> = Default::default();
    for t in test {
        by_user.entry(t.user).or_default().insert(t.item, t.rating);
    }
    by_user
        .into_iter()
        .filter(|(_, g)| g.values().any(|&r| r > 0.0))
        .map(|(user, gains)| RankingTask {
            user,
            candidates: candidates(user),
            gains,
        })
        .collect()
}

/// Every user with a positive held-out rating ranks all held-out items;
/// unrated held-out items have gain 0.
pub fn coldstart_tasks(split: &ColdStartSplit) -> Vec<RankingTask> {
    tasks_from(&split.test, |_| split.heldout_items.clone())
}

/// Every user with a positive test rating ranks all items absent from their
/// training ratings.
pub fn warm_tasks(train: &[RatingTriple], test: &[RatingTriple], items: usize) -> Vec<RankingTask> {
    let mut seen: HashMap<u32, HashSet<u32>> = HashMap::new();
    for t in train {
        seen.entry(t.user).or_default().insert(t.item);
    }
    tasks_from(test, |u| {
        let s = seen.get(&u);
        (0..items as u32).filter(|i| s.is_none_or(|s| !s.contains(i))).collect()
    })
}

/// Mean NDCG@k over `tasks`, ranking each task's candidates by `(delta, id)`.
pub fn mean_ndcg(
    user_codes: &[HashCode],
    item_codes: &[HashCode],
    tasks: &[RankingTask],
    k: usize,
    measure: Measure,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::usage("no users to evaluate"));
    }
    let mut sum = 0.0;
    for task in tasks {
        let user = user_codes
            .get(task.user as usize)
            .ok_or_else(|| Error::usage(format!("user {} has no code", task.user)))?;
        let mut scored: Vec<(u32, u32)> = task
            .candidates
            .iter()
            .map(|&i| {
                let code = item_codes
                    .get(i as usize)
                    .ok_or_else(|| Error::usage(format!("item {i} has no code")))?;
                Ok((measure.binary(user, code)?, i))
            })
            .collect::<Result<_>>()?;
        scored.sort_unstable();
        let ranked: Vec<u32> = scored.iter().map(|&(_, i)| i).collect();
        sum += ndcg_at_k(&ranked, &task.gains, k)?;
    }
    Ok(sum / tasks.len() as f64)
}

/// [`mean_ndcg`] with uniformly random user and item codes, averaged over
/// `repeats` draws.
pub fn random_code_ndcg(
    users: usize,
    items: usize,
    bits: u32,
    tasks: &[RankingTask],
    k: usize,
    measure: Measure,
    seed: u64,
    repeats: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..repeats.max(1) {
        let uc: Vec<HashCode> = (0..users).map(|_| HashCode::random(bits, &mut rng)).collect::<Result<_>>()?;
        let ic: Vec<HashCode> = (0..items).map(|_| HashCode::random(bits, &mut rng)).collect::<Result<_>>()?;
        sum += mean_ndcg(&uc, &ic, tasks, k, measure)?;
    }
    Ok(sum / repeats.max(1) as f64)
}

pub const CF_CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CfCheckpointHeader {
    pub schema_version: u32,
    pub kind: String,
    pub config: CfConfig,
    pub seed: u64,
    pub epoch: usize,
    pub users: usize,
    pub user_ids: Vec<String>,
    pub encoder: EncoderShape,
    pub vocabulary: Vocabulary,
}

pub fn save_checkpoint(path: &Path, outcome: &CfOutcome, user_ids: &[String], vocabulary: &Vocabulary) -> Result<()> {
    let header = CfCheckpointHeader {
        schema_version: CF_CHECKPOINT_SCHEMA_VERSION,
        kind: "cf".into(),
        config: outcome.config.clone(),
        seed: outcome.config.seed,
        epoch: outcome.log.last().map_or(0, |l| l.epoch),
        users: outcome.model.users,
        user_ids: user_ids.to_vec(),
        encoder: outcome.model.encoder,
        vocabulary: vocabulary.clone(),
    };
    checkpoint::save(path, &header, &outcome.model.params)
}

pub fn load_checkpoint(path: &Path) -> Result<(CfModel, CfCheckpointHeader)> {
    let (header, params): (CfCheckpointHeader, Vec<f64>) = checkpoint::load(path)?;
    if header.kind != "cf" || header.schema_version != CF_CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::format(format!(
            "{} is not a cf checkpoint of schema {CF_CHECKPOINT_SCHEMA_VERSION}",
            path.display()
        )));
    }
    if params.len() != header.users * header.encoder.bits + header.encoder.n_params() + 2 {
        return Err(Error::format("checkpoint parameter count does not match its shapes"));
    }
    Ok((
        CfModel {
            users: header.users,
            encoder: header.encoder,
            params,
        },
        header,
    ))
}
