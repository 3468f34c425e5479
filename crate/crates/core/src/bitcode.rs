//! Packed binary hash codes and the bit-level computations on them.
//!
//! A code of width `B` stores bit `j` at bit position `j` of a `u128`; every
//! position at or above `B` is zero. In the ±1 algebra used for the projected
//! Hamming dissimilarity a set bit stands for +1 and a clear bit for −1.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Code widths accepted everywhere in the toolkit.
pub const SUPPORTED_WIDTHS: [u32; 5] = [8, 16, 32, 64, 128];

pub fn check_width(bits: u32) -> Result<()> {
    if SUPPORTED_WIDTHS.contains(&bits) {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "unsupported code width {bits}, expected one of {SUPPORTED_WIDTHS:?}"
        )))
    }
}

#[inline]
fn width_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// A fixed-width binary hash code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashCode {
    value: u128,
    bits: u32,
}

impl HashCode {
    pub fn zeros(bits: u32) -> Result<Self> {
        check_width(bits)?;
        Ok(HashCode { value: 0, bits })
    }

    pub fn ones(bits: u32) -> Result<Self> {
        check_width(bits)?;
        Ok(HashCode {
            value: width_mask(bits),
            bits,
        })
    }

    /// Builds a code from the low `bits` bits of `value`. Higher bits must be zero.
    pub fn from_u128(value: u128, bits: u32) -> Result<Self> {
        check_width(bits)?;
        if value & !width_mask(bits) != 0 {
            return Err(Error::usage(format!(
                "value has bits set beyond width {bits}"
            )));
        }
        Ok(HashCode { value, bits })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let width = bits.len() as u32;
        check_width(width)?;
        let value = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u128, |acc, (j, _)| acc | (1u128 << j));
        Ok(HashCode { value, bits: width })
    }

    /// Parses a string of `0`/`1` characters, character `j` being bit `j`.
    pub fn parse_bits(s: &str) -> Result<Self> {
        let bools = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::usage(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bools(&bools)
    }

    /// Decodes `bits / 8` bytes, bit 0 of byte 0 being code bit 0.
    pub fn from_le_bytes(bytes: &[u8], bits: u32) -> Result<Self> {
        check_width(bits)?;
        let n = (bits / 8) as usize;
        if bytes.len() != n {
            return Err(Error::format(format!(
                "expected {n} bytes for a {bits}-bit code, got {}",
                bytes.len()
            )));
        }
        let mut buf = [0u8; 16];
        buf[..n].copy_from_slice(bytes);
        Ok(HashCode {
            value: u128::from_le_bytes(buf),
            bits,
        })
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.value.to_le_bytes()[..(self.bits / 8) as usize].to_vec()
    }

    pub fn random<R: Rng + ?Sized>(bits: u32, rng: &mut R) -> Result<Self> {
        check_width(bits)?;
        let value = rng.gen::<u128>() & width_mask(bits);
        Ok(HashCode { value, bits })
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn value(&self) -> u128 {
        self.value
    }

    #[inline]
    pub fn bit(&self, j: u32) -> bool {
        j < self.bits && (self.value >> j) & 1 == 1
    }

    pub fn with_bit(mut self, j: u32, on: bool) -> Self {
        assert!(j < self.bits, "bit {j} out of range for width {}", self.bits);
        if on {
            self.value |= 1u128 << j;
        } else {
            self.value &= !(1u128 << j);
        }
        self
    }

    #[inline]
    pub fn count_ones(&self) -> u32 {
        self.value.count_ones()
    }

    /// Bitwise complement within the code width.
    pub fn complement(&self) -> Self {
        HashCode {
            value: !self.value & width_mask(self.bits),
            bits: self.bits,
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.bits).map(|j| self.bit(j)).collect()
    }

    /// Bits as 0.0 / 1.0, the form consumed by the relaxed distances.
    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.bits).map(|j| if self.bit(j) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashCode({self})")
    }
}

impl fmt::Display for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.bits {
            f.write_str(if self.bit(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn same_width(a: &HashCode, b: &HashCode) -> Result<()> {
    if a.bits == b.bits {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "code width mismatch: {} vs {}",
            a.bits, b.bits
        )))
    }
}

/// Number of positions where `a` and `b` differ.
pub fn hamming_distance(a: &HashCode, b: &HashCode) -> Result<u32> {
    same_width(a, b)?;
    Ok(hamming_unchecked(a, b))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &HashCode, b: &HashCode) -> u32 {
    (a.value ^ b.value).count_ones()
}

/// Projected Hamming dissimilarity of item code `i` under user code `u`.
///
/// Counts the positions where `u` is +1 and `i` is −1: dimensions where the
/// user code is −1 are ignored entirely. Costs the same as a Hamming distance.
pub fn projected_hamming_dissimilarity(u: &HashCode, i: &HashCode) -> Result<u32> {
    same_width(u, i)?;
    Ok(projected_unchecked(u, i))
}

#[inline]
pub(crate) fn projected_unchecked(u: &HashCode, i: &HashCode) -> u32 {
    (u.value & !i.value).count_ones()
}

/// One of the `count` disjoint, equal-width slices of a code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Substring {
    pub value: u128,
    pub len: u32,
    pub index: u32,
    pub count: u32,
}

impl fmt::Display for Substring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if (self.value >> j) & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn check_split(bits: u32, m: u32) -> Result<u32> {
    if m == 0 || !bits.is_multiple_of(m) {
        return Err(Error::usage(format!(
            "substring count {m} does not divide code width {bits}"
        )));
    }
    Ok(bits / m)
}

/// Value of substring `index` of width `len`, without validation.
#[inline]
pub(crate) fn substring_value(code: &HashCode, index: u32, len: u32) -> u128 {
    (code.value >> (index * len)) & width_mask(len)
}

/// Splits `code` into `m` substrings; substring `j` holds bits `j*B/m .. (j+1)*B/m`.
pub fn split_substrings(code: &HashCode, m: u32) -> Result<Vec<Substring>> {
    let len = check_split(code.bits, m)?;
    Ok((0..m)
        .map(|index| Substring {
            value: substring_value(code, index, len),
            len,
            index,
            count: m,
        })
        .collect())
}

/// Inverse of [`split_substrings`]. Substrings must be given in index order.
pub fn concat_substrings(parts: &[Substring]) -> Result<HashCode> {
    let Some(first) = parts.first() else {
        return Err(Error::usage("no substrings to concatenate"));
    };
    let bits = first.len * first.count;
    if parts.len() as u32 != first.count {
        return Err(Error::usage("substring set is incomplete"));
    }
    let mut value = 0u128;
    for (j, part) in parts.iter().enumerate() {
        if part.index != j as u32 || part.len != first.len || part.count != first.count {
            return Err(Error::usage("substrings are not a consistent ordered split"));
        }
        value |= part.value << (j as u32 * part.len);
    }
    HashCode::from_u128(value, bits)
}

/// Per-substring search radius guaranteed by the pigeonhole principle: if two
/// codes are within `r`, at least one of their `m` substring pairs is within
/// `r / m` (rounded down).
#[inline]
pub fn pigeonhole_threshold(r: u32, m: u32) -> u32 {
    assert!(m >= 1, "substring count must be positive");
    r / m
}

/// Number of `k`-subsets of an `n`-set, saturating at `u64::MAX`.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Iterator over every `len`-bit mask with exactly `flips` bits set, in
/// ascending lexicographic order of the set-position tuple.
#[derive(Clone, Debug)]
pub struct FlipMasks {
    positions: Vec<u32>,
    len: u32,
    done: bool,
}

impl FlipMasks {
    pub fn new(len: u32, flips: u32) -> Self {
        FlipMasks {
            positions: (0..flips).collect(),
            len,
            done: flips > len,
        }
    }
}

impl Iterator for FlipMasks {
    type Item = u128;

    fn next(&mut self) -> Option<u128> {
        if self.done {
            return None;
        }
        let mask = self
            .positions
            .iter()
            .fold(0u128, |acc, &p| acc | (1u128 << p));

        // advance to the next combination
        let k = self.positions.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.positions[i] < self.len - (k - i) as u32 {
                self.positions[i] += 1;
                for j in i + 1..k {
                    self.positions[j] = self.positions[j - 1] + 1;
                }
                break;
            }
        }
        Some(mask)
    }
}

/// Every substring value within Hamming distance `t` of `s`, ordered by flip
/// count and then by flipped-position tuple.
pub fn enumerate_perturbations(s: &Substring, t: u32) -> Result<Vec<u128>> {
    if t > s.len {
        return Err(Error::usage(format!(
            "perturbation radius {t} exceeds substring width {}",
            s.len
        )));
    }
    let total: u64 = (0..=t).map(|d| binomial(s.len, d)).fold(0u64, u64::saturating_add);
    let mut out = Vec::with_capacity(total.min(1 << 24) as usize);
    for d in 0..=t {
        out.extend(FlipMasks::new(s.len, d).map(|mask| s.value ^ mask));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn code(s: &str) -> HashCode {
        HashCode::parse_bits(s).unwrap()
    }

    // ±1 reading of each bit, compared dimension by dimension.
    fn signed(c: &HashCode) -> Vec<i8> {
        c.to_bools().iter().map(|&b| if b { 1 } else { -1 }).collect()
    }

    #[test]
    fn hamming_basic_cases() {
        let c = code("10110100");
        assert_eq!(hamming_distance(&c, &c).unwrap(), 0);
        assert_eq!(
            hamming_distance(&code("00000000"), &code("11111111")).unwrap(),
            8
        );
    }

    #[test]
    fn hamming_matches_per_bit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = HashCode::random(64, &mut rng).unwrap();
            let b = HashCode::random(64, &mut rng).unwrap();
            let expected = (0..64).filter(|&j| a.bit(j) != b.bit(j)).count() as u32;
            assert_eq!(hamming_distance(&a, &b).unwrap(), expected);
        }
    }

    #[test]
    fn width_mismatch_is_usage_error() {
        let a = HashCode::zeros(8).unwrap();
        let b = HashCode::zeros(16).unwrap();
        assert!(matches!(hamming_distance(&a, &b), Err(Error::Usage(_))));
        assert!(matches!(
            projected_hamming_dissimilarity(&a, &b),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn unsupported_widths_rejected() {
        assert!(HashCode::zeros(12).is_err());
        assert!(HashCode::parse_bits("1010").is_err());
        assert!(HashCode::from_u128(1 << 9, 8).is_err());
    }

    #[test]
    fn projected_examples() {
        let zero = HashCode::zeros(8).unwrap();
        let i = code("01101110");
        assert_eq!(projected_hamming_dissimilarity(&zero, &i).unwrap(), 0);
        assert_eq!(projected_hamming_dissimilarity(&i, &i).unwrap(), 0);
        // u = 1010, i = 0110 padded to a supported width
        let u = code("10100000");
        let i = code("01100000");
        assert_eq!(projected_hamming_dissimilarity(&u, &i).unwrap(), 1);
    }

    #[test]
    fn projected_exhaustive_against_signed_oracle() {
        for a in 0u128..256 {
            for b in 0u128..256 {
                let u = HashCode::from_u128(a, 8).unwrap();
                let i = HashCode::from_u128(b, 8).unwrap();
                let (su, si) = (signed(&u), signed(&i));
                let oracle = (0..8).filter(|&j| su[j] == 1 && si[j] == -1).count() as u32;
                assert_eq!(projected_hamming_dissimilarity(&u, &i).unwrap(), oracle);
                assert_eq!(
                    hamming_distance(&u, &i).unwrap(),
                    projected_unchecked(&u, &i) + projected_unchecked(&i, &u)
                );
            }
        }
    }

    #[test]
    fn hamming_metric_axioms_exhaustive_8bit() {
        let codes: Vec<HashCode> = (0u128..256)
            .map(|v| HashCode::from_u128(v, 8).unwrap())
            .collect();
        for a in &codes {
            for b in &codes {
                let d = hamming_unchecked(a, b);
                assert_eq!(d, hamming_unchecked(b, a));
                assert_eq!(d == 0, a == b);
            }
        }
        // the triangle inequality over all triples is 16M checks; a stride keeps it quick
        for a in codes.iter().step_by(3) {
            for b in codes.iter().step_by(5) {
                for c in &codes {
                    assert!(
                        hamming_unchecked(a, c) <= hamming_unchecked(a, b) + hamming_unchecked(b, c)
                    );
                }
            }
        }
    }

    #[test]
    fn split_examples() {
        let c = code("10110100");
        let parts = split_substrings(&c, 2).unwrap();
        assert_eq!(parts[0].to_string(), "1011");
        assert_eq!(parts[1].to_string(), "0100");
        assert_eq!(split_substrings(&c, 1).unwrap()[0].value, c.value());
        let bitwise = split_substrings(&c, 8).unwrap();
        assert_eq!(bitwise.len(), 8);
        assert_eq!(concat_substrings(&bitwise).unwrap(), c);
        assert!(matches!(split_substrings(&c, 3), Err(Error::Usage(_))));
        assert!(split_substrings(&c, 0).is_err());
    }

    #[test]
    fn pigeonhole_examples() {
        assert_eq!(pigeonhole_threshold(2, 4), 0);
        assert_eq!(pigeonhole_threshold(7, 2), 3);
        assert_eq!(pigeonhole_threshold(0, 5), 0);
    }

    #[test]
    fn pigeonhole_guarantee_holds_exhaustively_16bit_m4() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let a = HashCode::random(16, &mut rng).unwrap();
            let b = HashCode::random(16, &mut rng).unwrap();
            let d = hamming_unchecked(&a, &b);
            let t = pigeonhole_threshold(d, 4);
            let sa = split_substrings(&a, 4).unwrap();
            let sb = split_substrings(&b, 4).unwrap();
            assert!(sa
                .iter()
                .zip(&sb)
                .any(|(x, y)| (x.value ^ y.value).count_ones() <= t));
        }
    }

    #[test]
    fn perturbation_counts() {
        let s8 = split_substrings(&code("10110100"), 1).unwrap()[0];
        assert_eq!(enumerate_perturbations(&s8, 0).unwrap(), vec![s8.value]);
        assert_eq!(enumerate_perturbations(&s8, 1).unwrap().len(), 9);
        let s4 = split_substrings(&code("10110100"), 2).unwrap()[0];
        assert_eq!(enumerate_perturbations(&s4, 2).unwrap().len(), 11);
        assert!(enumerate_perturbations(&s4, 5).is_err());
    }

    #[test]
    fn perturbation_order_is_flip_count_then_positions() {
        let s = Substring {
            value: 0,
            len: 4,
            index: 0,
            count: 1,
        };
        let got = enumerate_perturbations(&s, 2).unwrap();
        let expected: Vec<u128> = vec![
            0b0000, 0b0001, 0b0010, 0b0100, 0b1000, 0b0011, 0b0101, 0b1001, 0b0110, 0b1010,
            0b1100,
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn perturbations_are_exactly_the_ball() {
        for len in [4u32, 8, 16] {
            for t in 0..=len.min(4) {
                let s = Substring {
                    value: 0b1011 & width_mask(len),
                    len,
                    index: 0,
                    count: 1,
                };
                let got = enumerate_perturbations(&s, t).unwrap();
                let set: HashSet<u128> = got.iter().copied().collect();
                assert_eq!(set.len(), got.len(), "duplicates");
                let expected: u64 = (0..=t).map(|d| binomial(len, d)).sum();
                assert_eq!(got.len() as u64, expected);
                let brute: HashSet<u128> = (0..(1u128 << len))
                    .filter(|v| (v ^ s.value).count_ones() <= t)
                    .collect();
                assert_eq!(set, brute);
            }
        }
    }

    #[test]
    fn byte_layout_is_little_endian_bit_order() {
        let c = code("1000000001000000");
        assert_eq!(c.to_le_bytes(), vec![0b0000_0001, 0b0000_0010]);
        assert_eq!(HashCode::from_le_bytes(&c.to_le_bytes(), 16).unwrap(), c);
        assert!(HashCode::from_le_bytes(&[0u8; 3], 16).is_err());
    }

    proptest! {
        #[test]
        fn split_concat_round_trip(value in any::<u128>(), wi in 0usize..5, mexp in 0u32..8) {
            let bits = SUPPORTED_WIDTHS[wi];
            let m = 1u32 << mexp;
            prop_assume!(m <= bits);
            let c = HashCode::from_u128(value & width_mask(bits), bits).unwrap();
            let parts = split_substrings(&c, m).unwrap();
            prop_assert!(parts.iter().all(|p| p.len == bits / m));
            prop_assert_eq!(concat_substrings(&parts).unwrap(), c);
        }

        #[test]
        fn hamming_decomposes_into_projections(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let a = HashCode::from_u128(a as u128, 64).unwrap();
            let b = HashCode::from_u128(b as u128, 64).unwrap();
            let c = HashCode::from_u128(c as u128, 64).unwrap();
            prop_assert_eq!(
                hamming_distance(&a, &b).unwrap(),
                projected_unchecked(&a, &b) + projected_unchecked(&b, &a)
            );
            prop_assert!(hamming_unchecked(&a, &c) <= hamming_unchecked(&a, &b) + hamming_unchecked(&b, &c));
            prop_assert_eq!(hamming_unchecked(&a.complement(), &b.complement()), hamming_unchecked(&a, &b));
        }
    }
}
