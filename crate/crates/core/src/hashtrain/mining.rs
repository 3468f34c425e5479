//! Weak supervision mined from the unlabeled corpus, plus code baselines.


use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bitcode::HashCode;
use crate::corpus::TfIdfVector;
use crate::error::{Error, Result};
use crate::mih::linear_scan_knn;

/// Which similarity ranks documents when mining neighbours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiningMetric {
    /// Brute-force tf-idf cosine similarity.
    #[default]
    Cosine,
    /// Hamming distance between codes of a first-pass `vae` model.
    Hamming,
}

/// For every document, the `k` most cosine-similar other documents, ties by id.
pub fn mine_neighbors(vectors: &[TfIdfVector], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = vectors.len();
    if k == 0 || k >= n {
        return Err(Error::usage(format!(
            "neighbour count {k} must be in [1, {})",
            n
        )));
    }
    let dim = vectors.iter().map(|v| v.dim).max().unwrap_or(0);
    let mut postings: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for (d, v) in vectors.iter().enumerate() {
        for &(t, w) in &v.entries {
            postings[t as usize].push((d, w));
        }
    }
    let mut scores = vec![0.0f64; n];
    let mut out = Vec::with_capacity(n);
    for (q, v) in vectors.iter().enumerate() {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for &(t, w) in &v.entries {
            for &(d, wd) in &postings[t as usize] {
                scores[d] += w * wd;
            }
        }
        let mut ids: Vec<usize> = (0..n).filter(|&d| d != q).collect();
        let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
        ids.sort_by(cmp);
        out.push(ids);
    }
    Ok(out)
}

/// Neighbour lists by Hamming distance between `codes`, ties by id, self excluded.
pub fn mine_neighbors_hamming(codes: &[HashCode], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = codes.len();
    if k == 0 || k >= n {
        return Err(Error::usage(format!(
            "neighbour count {k} must be in [1, {})",
            n
        )));
    }
    codes
        .iter()
        .enumerate()
        .map(|(q, code)| {
            let res = linear_scan_knn(codes, code, k + 1)?;
            Ok(res
                .hits
                .iter()
                .map(|h| h.id as usize)
                .filter(|&d| d != q)
                .take(k)
                .collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub query: usize,
    pub similar: usize,
    pub dissimilar: usize,
}

/// Draws one triplet for `query`: the similar document uniformly from its
/// neighbour list, the dissimilar one uniformly from every other document
/// outside that list.
pub fn sample_triplet<R: Rng + ?Sized>(query: usize, neighbors: &[usize], n: usize, rng: &mut R) -> Result<Triplet> {
    if n < neighbors.len() + 2 {
        return Err(Error::usage(format!(
            "corpus of {n} documents is smaller than K + 2 = {}",
            neighbors.len() + 2
        )));
    }
    if neighbors.is_empty() {
        return Err(Error::usage("empty neighbour list"));
    }
    let similar = neighbors[rng.gen_range(0..neighbors.len())];
    // pool = everything except the query and its neighbours, in id order
    let mut excluded: Vec<usize> = neighbors.to_vec();
    excluded.push(query);
    excluded.sort_unstable();
    excluded.dedup();
    let pool = n - excluded.len();
    let mut pick = rng.gen_range(0..pool);
    // map the pick-th non-excluded id by walking the sorted exclusion list
    for &e in &excluded {
        if e <= pick {
            pick += 1;
        } else {
            break;
        }
    }
    Ok(Triplet {
        query,
        similar,
        dissimilar: pick,
    })
}

/// `per_query` triplets for every document, deterministic given the RNG state.
pub fn make_triplets<R: Rng + ?Sized>(neighbors: &[Vec<usize>], per_query: usize, rng: &mut R) -> Result<Vec<Triplet>> {
    let n = neighbors.len();
    let mut out = Vec::with_capacity(n * per_query);
    for (q, list) in neighbors.iter().enumerate() {
        for _ in 0..per_query {
            out.push(sample_triplet(q, list, n, rng)?);
        }
    }
    Ok(out)
}

/// Thresholds every column at its median (the lower middle value for an even
/// row count): a bit is 1 iff the value is strictly above the median.
pub fn quantize_median(rows: &[Vec<f64>]) -> Result<Vec<HashCode>> {
    let Some(first) = rows.first() else {
        return Err(Error::usage("cannot quantize an empty matrix"));
    };
    let width = first.len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::usage("ragged matrix"));
    }
    let medians: Vec<f64> = (0..width)
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            col[(col.len() - 1) / 2]
        })
        .collect();
    rows.iter()
        .map(|r| {
            let bools: Vec<bool> = r.iter().zip(&medians).map(|(v, m)| v > m).collect();
            HashCode::from_bools(&bools)
        })
        .collect()
}

/// Sign of random Gaussian projections; a data-independent baseline.
pub fn random_hyperplane_codes<R: Rng + ?Sized>(vectors: &[TfIdfVector], bits: u32, rng: &mut R) -> Result<Vec<HashCode>> {
    crate::bitcode::check_width(bits)?;
    let dim = vectors.iter().map(|v| v.dim).max().unwrap_or(0);
    let planes: Vec<Vec<f64>> = (0..bits)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    vectors
        .iter()
        .map(|v| {
            let bools: Vec<bool> = planes
                .iter()
                .map(|p| v.entries.iter().map(|&(t, w)| w * p[t as usize]).sum::<f64>() > 0.0)
                .collect();
            HashCode::from_bools(&bools)
        })
        .collect()
}
