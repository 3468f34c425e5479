//! Loss terms over relaxed codes in `[0, 1]^B`.
//!
//! Each `*_backward` function adds `scale * dLoss/dinput` into the supplied
//! gradient buffers and returns `scale * loss`.

use crate::error::{Error, Result};

/// `sum_j a_j (1 - b_j) + (1 - a_j) b_j`; the Hamming distance on 0/1 inputs.
pub fn relaxed_hamming(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * (1.0 - y) + (1.0 - x) * y).sum()
}

fn relaxed_hamming_backward(a: &[f64], b: &[f64], scale: f64, da: &mut [f64], db: &mut [f64]) {
    for j in 0..a.len() {
        da[j] += scale * (1.0 - 2.0 * b[j]);
        db[j] += scale * (1.0 - 2.0 * a[j]);
    }
}

/// `sum_j u_j (1 - i_j)`; the projected Hamming dissimilarity on 0/1 inputs.
pub fn relaxed_projected(u: &[f64], i: &[f64]) -> f64 {
    u.iter().zip(i).map(|(x, y)| x * (1.0 - y)).sum()
}

/// KL divergence from `Bernoulli(sigma_j)` to `Bernoulli(1/2)`, summed over bits.
pub fn kl_loss(sigma: &[f64]) -> f64 {
    sigma
        .iter()
        .map(|&s| s * (2.0 * s).ln() + (1.0 - s) * (2.0 * (1.0 - s)).ln())
        .sum()
}

pub fn kl_backward(sigma: &[f64], scale: f64, dsigma: &mut [f64]) -> f64 {
    for (d, &s) in dsigma.iter_mut().zip(sigma) {
        *d += scale * (s / (1.0 - s)).ln();
    }
    scale * kl_loss(sigma)
}

/// Hinge on the triplet gap: `max(0, margin - (D(q, n) - D(q, p)))`.
pub fn ranking_loss(q: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (margin - (relaxed_hamming(q, n) - relaxed_hamming(q, p))).max(0.0)
}

#[allow(clippy::too_many_arguments)]
pub fn ranking_backward(
    q: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
    scale: f64,
    dq: &mut [f64],
    dp: &mut [f64],
    dn: &mut [f64],
) -> f64 {
    let loss = ranking_loss(q, p, n, margin);
    if loss > 0.0 {
        relaxed_hamming_backward(q, n, -scale, dq, dn);
        relaxed_hamming_backward(q, p, scale, dq, dp);
    }
    scale * loss
}

fn check_substrings(bits: usize, m: usize) -> Result<usize> {
    if m == 0 || !bits.is_multiple_of(m) {
        return Err(Error::usage(format!(
            "substring count {m} does not divide code width {bits}"
        )));
    }
    Ok(bits / m)
}

/// Substring-level false-positive penalty for one pair of codes.
///
/// When the full relaxed distance exceeds `gate`, every substring whose
/// relaxed distance is below `margin` is pushed apart:
/// `sum_j max(0, margin - D_j(a, b))`. Pairs within `gate` cost nothing.
pub fn mish_false_positive_loss(a: &[f64], b: &[f64], m: usize, margin: f64, gate: f64) -> Result<f64> {
    let len = check_substrings(a.len(), m)?;
    if relaxed_hamming(a, b) <= gate {
        return Ok(0.0);
    }
    Ok((0..m)
        .map(|j| {
            let r = j * len..(j + 1) * len;
            (margin - relaxed_hamming(&a[r.clone()], &b[r])).max(0.0)
        })
        .sum())
}

#[allow(clippy::too_many_arguments)]
pub fn mish_false_positive_backward(
    a: &[f64],
    b: &[f64],
    m: usize,
    margin: f64,
    gate: f64,
    scale: f64,
    da: &mut [f64],
    db: &mut [f64],
) -> Result<f64> {
    let len = check_substrings(a.len(), m)?;
    if relaxed_hamming(a, b) <= gate {
        return Ok(0.0);
    }
    let mut loss = 0.0;
    for j in 0..m {
        let r = j * len..(j + 1) * len;
        let gap = margin - relaxed_hamming(&a[r.clone()], &b[r.clone()]);
        if gap > 0.0 {
            loss += gap;
            relaxed_hamming_backward(&a[r.clone()], &b[r.clone()], -scale, &mut da[r.clone()], &mut db[r]);
        }
    }
    Ok(scale * loss)
}

/// `max(0, D(q, kth) - target)`: keeps the k-th neighbour within `target`.
pub fn mish_knn_distance_loss(q: &[f64], kth: &[f64], target: f64) -> f64 {
    (relaxed_hamming(q, kth) - target).max(0.0)
}

pub fn mish_knn_backward(q: &[f64], kth: &[f64], target: f64, scale: f64, dq: &mut [f64], dk: &mut [f64]) -> f64 {
    let loss = mish_knn_distance_loss(q, kth, target);
    if loss > 0.0 {
        relaxed_hamming_backward(q, kth, scale, dq, dk);
    }
    scale * loss
}

/// Position (into `others`) of the `k`-th nearest code to `q` by relaxed
/// Hamming distance, ties broken by position. `k` is 1-based.
pub fn kth_nearest(q: &[f64], others: &[&[f64]], k: usize) -> Result<usize> {
    if k == 0 || others.len() < k {
        return Err(Error::usage(format!(
            "batch has {} other codes, fewer than k = {k}",
            others.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = others
        .iter()
        .enumerate()
        .map(|(i, o)| (relaxed_hamming(q, o), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order[k - 1].1)
}
