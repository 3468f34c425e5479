//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use hamspace::cfhash::{cf_batch_objective, CfModel, CfNoise, Measure};
use hamspace::corpus::{build_vocabulary, vectorize, RatingTriple, TfIdfVector, TfVariant};
use hamspace::hashtrain::{batch_objective, Batch, DocModel, LossTerms, Noise, Objective, Partner, TrainConfig};
use hamspace::synthetic::topic_corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
pub const FD_FLOOR: f64 = 1e-8;

/// Largest `|a - n| / max(|a|, |n|, floor)` over all coordinates, where `n`
/// is the five-point central difference of `f` at `params`.
pub fn max_relative_error(f: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64]) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        let mut at = |d: f64| {
            p[i] = orig + d;
            f(&p)
        };
        let (up2, up, down, down2) = (at(2.0 * FD_STEP), at(FD_STEP), at(-FD_STEP), at(-2.0 * FD_STEP));
        p[i] = orig;
        let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * FD_STEP);
        let scale = analytic[i].abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Twenty-term corpus: 4 topics of 5 terms.
pub fn tiny_docs() -> Vec<TfIdfVector> {
    let docs = topic_corpus(4, 6, 5, 8, 11);
    let vocab = build_vocabulary(&docs, 20, TfVariant::Raw).unwrap();
    assert_eq!(vocab.len(), 20);
    vectorize(&docs, &vocab)
}

/// Config with thresholds off the integer grid, so hinges and gates are
/// never exactly at a kink when codes are binary.
pub fn gradient_config(objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        bits: 8,
        hidden: 8,
        margin: Some(1.5),
        substrings: Some(2),
        substring_margin: 1.5,
        fp_gate: Some(2.5),
        target_radius: Some(1.5),
        mish_k: 3,
        kl_weight: 0.3,
        ..Default::default()
    }
}

/// Max relative error of the analytic gradient of one document objective
/// on a V=20, H=8, B=8 model, with the loss terms at the checked point.
pub fn doc_gradient_error(objective: Objective, seed: u64) -> (f64, LossTerms) {
    let data = tiny_docs();
    let cfg = gradient_config(objective);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DocModel::new(20, 8, 8, &mut rng);
    let queries: Vec<usize> = (0..8).collect();
    let partners = queries
        .iter()
        .map(|&q| match objective {
            Objective::Rbsh => Partner::Triplet {
                similar: (q + 9) % data.len(),
                dissimilar: (q + 13) % data.len(),
            },
            Objective::Pairrec => Partner::Similar((q + 11) % data.len()),
            _ => Partner::None,
        })
        .collect();
    let batch = Batch { queries, partners };
    let beta = cfg.kl_weight;
    let (terms, grad, frozen) = batch_objective(&model, &cfg, &data, &batch, beta, Noise::Sample(&mut rng)).unwrap();
    let f = |p: &[f64]| {
        let m = DocModel {
            params: p.to_vec(),
            ..model.clone()
        };
        batch_objective(&m, &cfg, &data, &batch, beta, Noise::Frozen(&frozen))
            .unwrap()
            .0
            .total
    };
    (max_relative_error(f, &model.params, &grad), terms)
}

/// Same check for the rating model over a batch of 30 random triples.
pub fn cf_gradient_error(measure: Measure, seed: u64) -> f64 {
    let items = tiny_docs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = 6;
    // c away from 0.5 so the clamp corners sit between integer distances
    let model = CfModel::new(users, 20, 8, 8, measure, 1.0, 0.37, &mut rng);
    let batch: Vec<RatingTriple> = (0..30)
        .map(|_| RatingTriple {
            user: rng.gen_range(0..users as u32),
            item: rng.gen_range(0..items.len() as u32),
            rating: [0.0, 0.25, 0.75, 1.0][rng.gen_range(0..4)],
        })
        .collect();
    let (_, grad, frozen) = cf_batch_objective(&model, measure, &items, &batch, CfNoise::Sample(&mut rng)).unwrap();
    let f = |p: &[f64]| {
        let m = CfModel {
            params: p.to_vec(),
            ..model.clone()
        };
        cf_batch_objective(&m, measure, &items, &batch, CfNoise::Frozen(&frozen))
            .unwrap()
            .0
    };
    max_relative_error(f, &model.params, &grad)
}
