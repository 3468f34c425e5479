//! Small dense building blocks shared by the document and collaborative
//! filtering models: a tf-idf encoder producing bit probabilities, a softmax
//! decoder over the vocabulary, Bernoulli bit sampling and Adam.
//!
//! Parameters live in flat `f64` slices with fixed layouts so the optimizer,
//! checkpoints and finite-difference checks can treat every model the same.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TfIdfVector;

/// Bit probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic squashing followed by the probability clamp. Returns the value
/// and whether the clamp was active (in which case the gradient is zero).
#[inline]
pub fn clamped_logistic(x: f64) -> (f64, bool) {
    let s = logistic(x);
    if s < PROB_EPS {
        (PROB_EPS, true)
    } else if s > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (s, false)
    }
}

fn uniform_init<R: Rng + ?Sized>(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.gen_range(-limit..limit);
    }
}

/// Feed-forward map from a tf-idf vector to `bits` Bernoulli probabilities:
/// `tanh` hidden layer, then logistic output.
///
/// Parameter layout: `W1[vocab][hidden]`, `b1[hidden]`, `W2[bits][hidden]`,
/// `b2[bits]`, all row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub vocab: usize,
    pub hidden: usize,
    pub bits: usize,
}

/// Intermediate values of one encoder forward pass.
#[derive(Clone, Debug)]
pub struct EncoderPass {
    pub hidden: Vec<f64>,
    pub sigma: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl EncoderShape {
    pub fn n_params(&self) -> usize {
        self.vocab * self.hidden + self.hidden + self.bits * self.hidden + self.bits
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.vocab * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.bits * self.hidden;
        (b1, w2, b2)
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        assert_eq!(params.len(), self.n_params());
        let (b1, w2, b2) = self.offsets();
        uniform_init(&mut params[..b1], self.vocab, self.hidden, rng);
        params[b1..w2].iter_mut().for_each(|b| *b = 0.0);
        uniform_init(&mut params[w2..b2], self.hidden, self.bits, rng);
        params[b2..].iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn forward(&self, p: &[f64], x: &TfIdfVector) -> EncoderPass {
        debug_assert_eq!(p.len(), self.n_params());
        let (b1, w2, b2) = self.offsets();
        let h = self.hidden;
        let mut pre = p[b1..w2].to_vec();
        for &(t, xt) in &x.entries {
            let row = &p[t as usize * h..(t as usize + 1) * h];
            for (acc, w) in pre.iter_mut().zip(row) {
                *acc += xt * w;
            }
        }
        let hidden: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
        let mut sigma = Vec::with_capacity(self.bits);
        let mut clamped = Vec::with_capacity(self.bits);
        for b in 0..self.bits {
            let row = &p[w2 + b * h..w2 + (b + 1) * h];
            let logit = p[b2 + b] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
            let (s, c) = clamped_logistic(logit);
            sigma.push(s);
            clamped.push(c);
        }
        EncoderPass {
            hidden,
            sigma,
            clamped,
        }
    }

    /// Accumulates into `grad` the parameter gradient given `dsigma`, the
    /// loss gradient with respect to the output probabilities.
    pub fn backward(&self, p: &[f64], x: &TfIdfVector, pass: &EncoderPass, dsigma: &[f64], grad: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let h = self.hidden;
        let mut dhidden = vec![0.0; h];
        for b in 0..self.bits {
            if pass.clamped[b] {
                continue;
            }
            let s = pass.sigma[b];
            let dlogit = dsigma[b] * s * (1.0 - s);
            if dlogit == 0.0 {
                continue;
            }
            grad[b2 + b] += dlogit;
            let row = w2 + b * h;
            for k in 0..h {
                grad[row + k] += dlogit * pass.hidden[k];
                dhidden[k] += dlogit * p[row + k];
            }
        }
        let dpre: Vec<f64> = dhidden
            .iter()
            .zip(&pass.hidden)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        for k in 0..h {
            grad[b1 + k] += dpre[k];
        }
        for &(t, xt) in &x.entries {
            let row = t as usize * h;
            for k in 0..h {
                grad[row + k] += xt * dpre[k];
            }
        }
    }
}

/// Linear scores over the vocabulary from a (relaxed) code, with a softmax
/// reconstruction loss weighted by the target tf-idf vector.
///
/// Parameter layout: `W[vocab][bits]`, `b[vocab]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderShape {
    pub vocab: usize,
    pub bits: usize,
}

impl DecoderShape {
    pub fn n_params(&self) -> usize {
        self.vocab * self.bits + self.vocab
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        assert_eq!(params.len(), self.n_params());
        let w = self.vocab * self.bits;
        uniform_init(&mut params[..w], self.bits, self.vocab, rng);
        params[w..].iter_mut().for_each(|b| *b = 0.0);
    }

    fn log_softmax(&self, p: &[f64], z: &[f64]) -> Vec<f64> {
        let bias = self.vocab * self.bits;
        let scores: Vec<f64> = (0..self.vocab)
            .map(|t| {
                let row = &p[t * self.bits..(t + 1) * self.bits];
                p[bias + t] + row.iter().zip(z).map(|(w, zj)| w * zj).sum::<f64>()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        scores.into_iter().map(|s| s - lse).collect()
    }

    /// `-sum_t x_t log softmax_t(W z + b)`.
    pub fn recon_loss(&self, p: &[f64], z: &[f64], x: &TfIdfVector) -> f64 {
        if x.is_zero() {
            return 0.0;
        }
        let logp = self.log_softmax(p, z);
        -x.entries.iter().map(|&(t, w)| w * logp[t as usize]).sum::<f64>()
    }

    /// Loss times `scale`, accumulating parameter gradients into `grad` and
    /// the code gradient into `dz`.
    pub fn recon_backward(&self, p: &[f64], z: &[f64], x: &TfIdfVector, scale: f64, grad: &mut [f64], dz: &mut [f64]) -> f64 {
        if x.is_zero() {
            return 0.0;
        }
        let logp = self.log_softmax(p, z);
        let mass: f64 = x.entries.iter().map(|(_, w)| w).sum();
        let loss = -x.entries.iter().map(|&(t, w)| w * logp[t as usize]).sum::<f64>();
        let bias = self.vocab * self.bits;
        let mut dscore: Vec<f64> = logp.iter().map(|lp| scale * mass * lp.exp()).collect();
        for &(t, w) in &x.entries {
            dscore[t as usize] -= scale * w;
        }
        for (t, &ds) in dscore.iter().enumerate() {
            grad[bias + t] += ds;
            let row = t * self.bits;
            for j in 0..self.bits {
                grad[row + j] += ds * z[j];
                dz[j] += ds * p[row + j];
            }
        }
        scale * loss
    }
}

/// How bits are drawn from probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitMode {
    /// Bit `j` is 1 when a uniform draw falls below `sigma_j` (training).
    Stochastic,
    /// Bit `j` is 1 iff `sigma_j > 0.5` (inference).
    Deterministic,
}

/// Draws 0/1 bits from `sigma`. In training the backward pass treats the
/// draw as the identity in `sigma` (straight-through).
pub fn sample_bits<R: Rng + ?Sized>(sigma: &[f64], rng: &mut R, mode: BitMode) -> Vec<f64> {
    match mode {
        BitMode::Stochastic => sigma
            .iter()
            .map(|&s| if rng.gen::<f64>() < s { 1.0 } else { 0.0 })
            .collect(),
        BitMode::Deterministic => sigma.iter().map(|&s| if s > 0.5 { 1.0 } else { 0.0 }).collect(),
    }
}

/// Deterministic bits packed into a [`crate::HashCode`].
pub fn threshold_code(sigma: &[f64]) -> crate::Result<crate::HashCode> {
    let bools: Vec<bool> = sigma.iter().map(|&s| s > 0.5).collect();
    crate::HashCode::from_bools(&bools)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Rounds every parameter through `f32`, the precision checkpoints store.
pub fn round_to_f32(params: &mut [f64]) {
    params.iter_mut().for_each(|p| *p = *p as f32 as f64);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sparse(entries: &[(u32, f64)], dim: usize) -> TfIdfVector {
        TfIdfVector {
            entries: entries.to_vec(),
            dim,
        }
    }

    #[test]
    fn zero_input_gives_logistic_of_output_bias() {
        let shape = EncoderShape { vocab: 4, hidden: 3, bits: 2 };
        let mut p = vec![0.0; shape.n_params()];
        shape.init(&mut p, &mut ChaCha8Rng::seed_from_u64(1));
        let n = p.len();
        p[n - 2] = 0.7;
        p[n - 1] = -1.3;
        let pass = shape.forward(&p, &TfIdfVector::zeros(4));
        // b1 = 0 so the hidden layer is tanh(0) = 0
        assert!((pass.sigma[0] - logistic(0.7)).abs() < 1e-15);
        assert!((pass.sigma[1] - logistic(-1.3)).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_hand_matrix_arithmetic() {
        // V = 3, H = 2, B = 2
        let shape = EncoderShape { vocab: 3, hidden: 2, bits: 2 };
        let w1 = [[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]];
        let b1 = [0.05, -0.05];
        let w2 = [[0.7, -0.8], [0.9, 1.0]];
        let b2: [f64; 2] = [0.1, -0.1];
        let mut p = Vec::new();
        w1.iter().for_each(|r| p.extend_from_slice(r));
        p.extend_from_slice(&b1);
        w2.iter().for_each(|r| p.extend_from_slice(r));
        p.extend_from_slice(&b2);
        let x: [f64; 3] = [0.6, 0.0, 0.8];
        let input = sparse(&[(0, 0.6), (2, 0.8)], 3);

        let mut hidden = [0.0; 2];
        for k in 0..2 {
            let mut s = b1[k];
            for t in 0..3 {
                s += x[t] * w1[t][k];
            }
            hidden[k] = s.tanh();
        }
        let mut expected = [0.0; 2];
        for b in 0..2 {
            let a = b2[b] + w2[b][0] * hidden[0] + w2[b][1] * hidden[1];
            expected[b] = 1.0 / (1.0 + (-a).exp());
        }
        let pass = shape.forward(&p, &input);
        for b in 0..2 {
            assert!((pass.sigma[b] - expected[b]).abs() < 1e-14);
        }
        let again = shape.forward(&p, &input);
        assert_eq!(pass.sigma, again.sigma);
    }

    #[test]
    fn outputs_stay_inside_the_clamp() {
        let shape = EncoderShape { vocab: 2, hidden: 1, bits: 2 };
        let mut p = vec![0.0; shape.n_params()];
        let n = p.len();
        p[n - 2] = 100.0;
        p[n - 1] = -100.0;
        let pass = shape.forward(&p, &TfIdfVector::zeros(2));
        assert_eq!(pass.sigma, vec![1.0 - PROB_EPS, PROB_EPS]);
        assert_eq!(pass.clamped, vec![true, true]);
    }

    #[test]
    fn uniform_decoder_gives_log_vocab() {
        let dec = DecoderShape { vocab: 7, bits: 3 };
        let p = vec![0.0; dec.n_params()];
        let x = sparse(&[(4, 1.0)], 7);
        let loss = dec.recon_loss(&p, &[1.0, 0.0, 1.0], &x);
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert_eq!(dec.recon_loss(&p, &[1.0, 0.0, 1.0], &TfIdfVector::zeros(7)), 0.0);
    }

    #[test]
    fn recon_matches_hand_softmax() {
        let dec = DecoderShape { vocab: 3, bits: 2 };
        let p = vec![0.2, -0.4, 0.5, 0.1, -0.3, 0.8, 0.01, 0.02, -0.03];
        let z = [1.0, 0.0];
        let x = sparse(&[(0, 0.6), (2, 0.8)], 3);
        let scores = [0.2 + 0.01, 0.5 + 0.02, -0.3 - 0.03];
        let denom: f64 = scores.iter().map(|s: &f64| s.exp()).sum();
        let expected = -(0.6 * (scores[0].exp() / denom).ln() + 0.8 * (scores[2].exp() / denom).ln());
        assert!((dec.recon_loss(&p, &z, &x) - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_stochastic_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_bits(&[0.9, 0.2], &mut rng, BitMode::Deterministic), vec![1.0, 0.0]);
        let hot = sample_bits(&[1.0 - PROB_EPS; 64], &mut rng, BitMode::Stochastic);
        assert!(hot.iter().all(|&b| b == 1.0));
    }

    #[test]
    fn stochastic_bit_mean_within_three_standard_errors() {
        let sigma = [0.1, 0.35, 0.5, 0.8, 0.97];
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sums = [0.0; 5];
        for _ in 0..draws {
            for (s, b) in sums.iter_mut().zip(sample_bits(&sigma, &mut rng, BitMode::Stochastic)) {
                *s += b;
            }
        }
        for (j, &s) in sigma.iter().enumerate() {
            let mean = sums[j] / draws as f64;
            let se = (s * (1.0 - s) / draws as f64).sqrt();
            assert!((mean - s).abs() <= 3.0 * se, "bit {j}: {mean} vs {s}");
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }
}
