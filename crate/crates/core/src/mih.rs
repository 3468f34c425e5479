//! Exact radius and k-nearest-neighbour search in Hamming space with
//! multi-index hashing.
//!
//! Each code is split into `m` disjoint substrings and substring `j` of every
//! code is indexed in table `j`. A radius-`r` query probes every table with
//! all substring values within `r / m` of the query's substring, unions the
//! ids it finds and verifies each candidate with a full Hamming distance.
//! The linear scans at the bottom of the module are the ground-truth oracle.

use std::collections::{BinaryHeap, HashMap};
use std::ops::{AddAssign, BitAnd, BitXor};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bitcode::{
    binomial, check_split, hamming_unchecked, pigeonhole_threshold, substring_value,
    HashCode,
};
use crate::codefile::{self, Sidecar};
use crate::error::{Error, Result};

/// Widest substring the tables accept as an integer key.
pub const MAX_SUBSTRING_BITS: u32 = 32;
/// Substrings up to this width get a directly addressed table.
const DENSE_SUBSTRING_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hit {
    pub distance: u32,
    pub id: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Sorted ascending by `(distance, id)`.
    pub hits: Vec<Hit>,
    /// Final radius reached by a kNN search.
    pub radius_used: Option<u32>,
    /// Set when a kNN search asked for more neighbours than there are codes.
    pub k_exceeds_len: bool,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<u32> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStats {
    /// Hash-table probes performed.
    pub lookups: u64,
    /// Ids returned by probes, before de-duplication.
    pub raw_candidates: u64,
    pub unique_candidates: u64,
    /// Full-width distance computations.
    pub verified: u64,
}

impl AddAssign for CandidateStats {
    fn add_assign(&mut self, rhs: Self) {
        self.lookups += rhs.lookups;
        self.raw_candidates += rhs.raw_candidates;
        self.unique_candidates += rhs.unique_candidates;
        self.verified += rhs.verified;
    }
}

/// Packed code storage used for verification inside the tables.
trait Word: Copy + BitXor<Output = Self> + BitAnd<Output = Self> {
    fn from_u128(v: u128) -> Self;
    fn ones(self) -> u32;
    /// Popcount of every byte, each left in its own byte.
    fn byte_counts(self) -> Self;
    /// Sum of the bytes of a [`Word::byte_counts`] result.
    fn sum_bytes(self) -> u32;

    #[inline]
    fn from_code(c: &HashCode) -> Self {
        Self::from_u128(c.value())
    }
}

impl Word for u64 {
    #[inline]
    fn from_u128(v: u128) -> Self {
        v as u64
    }

    #[inline]
    fn ones(self) -> u32 {
        self.count_ones()
    }

    #[inline]
    fn byte_counts(self) -> Self {
        let x = self - ((self >> 1) & 0x5555_5555_5555_5555);
        let x = (x & 0x3333_3333_3333_3333) + ((x >> 2) & 0x3333_3333_3333_3333);
        (x + (x >> 4)) & 0x0f0f_0f0f_0f0f_0f0f
    }

    #[inline]
    fn sum_bytes(self) -> u32 {
        (self.wrapping_mul(0x0101_0101_0101_0101) >> 56) as u32
    }
}

impl Word for u128 {
    #[inline]
    fn from_u128(v: u128) -> Self {
        v
    }

    #[inline]
    fn ones(self) -> u32 {
        self.count_ones()
    }

    #[inline]
    fn byte_counts(self) -> Self {
        let lo = (self as u64).byte_counts();
        let hi = ((self >> 64) as u64).byte_counts();
        (u128::from(hi) << 64) | u128::from(lo)
    }

    #[inline]
    fn sum_bytes(self) -> u32 {
        (self as u64).sum_bytes() + ((self >> 64) as u64).sum_bytes()
    }
}

#[derive(Clone, Debug)]
enum Lookup {
    /// `offsets[key]..offsets[key + 1]` for every possible key.
    Dense(Vec<u32>),
    Sparse(HashMap<u32, (u32, u32)>),
}

/// A bucket entry: the id and its full code, side by side so a lookup and
/// its verification touch the same cache lines.
#[derive(Clone, Copy, Debug)]
struct Entry<W> {
    word: W,
    id: u32,
}

/// One substring table, entries stored contiguously bucket by bucket.
#[derive(Clone, Debug)]
struct SubstringTable<W> {
    lookup: Lookup,
    /// `(key, start, end)` of every non-empty bucket, ascending by key.
    buckets: Vec<(u32, u32, u32)>,
    entries: Vec<Entry<W>>,
}

impl<W: Word> SubstringTable<W> {
    fn build(keys_by_id: &[u32], words: &[W], len: u32) -> Self {
        let mut order: Vec<u32> = (0..keys_by_id.len() as u32).collect();
        order.sort_by_key(|&id| keys_by_id[id as usize]);
        let mut buckets: Vec<(u32, u32, u32)> = Vec::new();
        for (pos, &id) in order.iter().enumerate() {
            let key = keys_by_id[id as usize];
            match buckets.last_mut() {
                Some(b) if b.0 == key => b.2 += 1,
                _ => buckets.push((key, pos as u32, pos as u32 + 1)),
            }
        }
        let lookup = if len <= DENSE_SUBSTRING_BITS {
            let mut offsets = vec![0u32; (1usize << len) + 1];
            for &k in keys_by_id {
                offsets[k as usize + 1] += 1;
            }
            for i in 1..offsets.len() {
                offsets[i] += offsets[i - 1];
            }
            Lookup::Dense(offsets)
        } else {
            Lookup::Sparse(buckets.iter().map(|&(k, s, e)| (k, (s, e))).collect())
        };
        SubstringTable {
            lookup,
            buckets,
            entries: order
                .iter()
                .map(|&id| Entry {
                    word: words[id as usize],
                    id,
                })
                .collect(),
        }
    }

    #[inline]
    fn prefetch_key(&self, key: u32) {
        if let Lookup::Dense(offsets) = &self.lookup {
            prefetch(offsets.as_ptr().wrapping_add(key as usize));
        }
    }

    #[inline]
    fn range(&self, key: u32) -> (usize, usize) {
        match &self.lookup {
            Lookup::Dense(offsets) => {
                let k = key as usize;
                (offsets[k] as usize, offsets[k + 1] as usize)
            }
            Lookup::Sparse(map) => map.get(&key).map_or((0, 0), |&(s, e)| (s as usize, e as usize)),
        }
    }
}

#[derive(Clone, Debug)]
struct Tables<W> {
    tables: Vec<SubstringTable<W>>,
    /// Bit mask of each substring within the full code.
    masks: Vec<W>,
}

#[derive(Clone, Debug)]
enum Store {
    Narrow(Tables<u64>),
    Wide(Tables<u128>),
}

fn build_tables<W: Word>(codes: &[HashCode], m: u32, substring_bits: u32) -> Tables<W> {
    let words: Vec<W> = codes.iter().map(W::from_code).collect();
    let tables = (0..m)
        .map(|j| {
            let keys: Vec<u32> = codes
                .iter()
                .map(|c| substring_value(c, j, substring_bits) as u32)
                .collect();
            SubstringTable::build(&keys, &words, substring_bits)
        })
        .collect();
    let masks = (0..m)
        .map(|j| W::from_u128(((1u128 << substring_bits) - 1) << (j * substring_bits)))
        .collect();
    Tables { tables, masks }
}

/// Multi-index hashing index over an immutable collection of codes.
#[derive(Clone, Debug)]
pub struct MihIndex {
    bits: u32,
    substrings: u32,
    substring_bits: u32,
    store: Store,
    codes: Vec<HashCode>,
}

impl MihIndex {
    /// Builds an index of `codes` with `m` substring tables. An empty `codes`
    /// needs the width supplied separately, see [`MihIndex::build_with_width`].
    pub fn build(codes: Vec<HashCode>, m: u32) -> Result<Self> {
        let bits = match codes.first() {
            Some(c) => c.bits(),
            None => return Err(Error::usage("cannot infer code width from an empty collection")),
        };
        Self::build_with_width(codes, bits, m)
    }

    pub fn build_with_width(codes: Vec<HashCode>, bits: u32, m: u32) -> Result<Self> {
        crate::bitcode::check_width(bits)?;
        let substring_bits = check_split(bits, m)?;
        if substring_bits > MAX_SUBSTRING_BITS {
            return Err(Error::usage(format!(
                "substrings of {substring_bits} bits exceed the {MAX_SUBSTRING_BITS}-bit key limit; use more substrings"
            )));
        }
        if let Some(bad) = codes.iter().find(|c| c.bits() != bits) {
            return Err(Error::usage(format!(
                "code width mismatch: {} in a {bits}-bit index",
                bad.bits()
            )));
        }
        if codes.len() > u32::MAX as usize {
            return Err(Error::usage("too many codes for 32-bit ids"));
        }
        let store = if bits <= 64 {
            Store::Narrow(build_tables(&codes, m, substring_bits))
        } else {
            Store::Wide(build_tables(&codes, m, substring_bits))
        };
        Ok(MihIndex {
            bits,
            substrings: m,
            substring_bits,
            store,
            codes,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn substrings(&self) -> u32 {
        self.substrings
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[HashCode] {
        &self.codes
    }

    /// Ids stored under `key` in table `table`, ascending.
    pub fn table_entries(&self, table: u32, key: u32) -> Vec<u32> {
        fn entries<W: Word>(t: &Tables<W>, table: u32, key: u32) -> Vec<u32> {
            let tab = &t.tables[table as usize];
            let (s, e) = tab.range(key);
            tab.entries[s..e].iter().map(|e| e.id).collect()
        }
        match &self.store {
            Store::Narrow(t) => entries(t, table, key),
            Store::Wide(t) => entries(t, table, key),
        }
    }

    /// A searcher with its own scratch space; reuse it across queries.
    pub fn searcher(&self) -> Searcher<'_> {
        Searcher {
            index: self,
            found: Vec::new(),
            keys: Vec::with_capacity(self.substrings as usize),
            rings: Vec::new(),
            ranges: Vec::new(),
        }
    }

    pub fn radius_search(&self, query: &HashCode, r: u32) -> Result<(SearchResult, CandidateStats)> {
        self.searcher().radius_search(query, r)
    }

    pub fn knn_search(&self, query: &HashCode, k: usize) -> Result<(SearchResult, CandidateStats)> {
        self.searcher().knn_search(query, k)
    }

    /// Persists the codes in the shared code format with an index sidecar.
    /// Tables are rebuilt on load.
    pub fn save(&self, path: &Path, ids: Option<Vec<String>>, provenance: serde_json::Value) -> Result<()> {
        if let Some(ids) = &ids {
            if ids.len() != self.codes.len() {
                return Err(Error::usage("id list length differs from code count"));
            }
        }
        codefile::save_codes(path, self.bits, &self.codes)?;
        let mut sidecar = Sidecar::new("index", self.bits, self.codes.len());
        sidecar.substrings = Some(self.substrings);
        sidecar.ids = ids;
        sidecar.provenance = provenance;
        sidecar.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Sidecar)> {
        let (bits, codes) = codefile::load_codes(path)?;
        let sidecar = Sidecar::load(path)?
            .ok_or_else(|| Error::format(format!("{} has no index sidecar", path.display())))?;
        let m = sidecar
            .substrings
            .ok_or_else(|| Error::format("index sidecar lacks the substring count"))?;
        if sidecar.bits != bits || sidecar.count != codes.len() as u64 {
            return Err(Error::format("index sidecar disagrees with the code file"));
        }
        let index = Self::build_with_width(codes, bits, m)?;
        Ok((index, sidecar))
    }

    fn check_query(&self, query: &HashCode) -> Result<()> {
        if query.bits() != self.bits {
            return Err(Error::usage(format!(
                "query width {} does not match index width {}",
                query.bits(),
                self.bits
            )));
        }
        Ok(())
    }
}

/// Reusable search state for one index.
pub struct Searcher<'a> {
    index: &'a MihIndex,
    /// Every verified candidate of the current query.
    found: Vec<Hit>,
    keys: Vec<u32>,
    /// Flip masks of each ring, built on first use.
    rings: Vec<Vec<u32>>,
    ranges: Vec<(usize, usize)>,
}

impl Searcher<'_> {
    fn begin(&mut self, query: &HashCode) {
        self.found.clear();
        let idx = self.index;
        self.keys.clear();
        self.keys.extend(
            (0..idx.substrings).map(|j| substring_value(query, j, idx.substring_bits) as u32),
        );
    }

    fn probe_ring(&mut self, query: &HashCode, flips: u32, stats: &mut CandidateStats) {
        let len = self.index.substring_bits;
        while self.rings.len() <= flips as usize {
            let f = self.rings.len() as u32;
            // listing more masks than a table has buckets is never useful
            let masks = if binomial(len, f) > self.index.len() as u64 {
                Vec::new()
            } else {
                GosperMasks::new(len, f).collect()
            };
            self.rings.push(masks);
        }
        let ring = &self.rings[flips as usize];
        match &self.index.store {
            Store::Narrow(t) => probe_ring(t, self.index.substring_bits, &self.keys, query, flips, ring, &mut self.ranges, &mut self.found, stats),
            Store::Wide(t) => probe_ring(t, self.index.substring_bits, &self.keys, query, flips, ring, &mut self.ranges, &mut self.found, stats),
        }
    }

    /// All codes within Hamming distance `r` of `query`.
    pub fn radius_search(&mut self, query: &HashCode, r: u32) -> Result<(SearchResult, CandidateStats)> {
        let idx = self.index;
        idx.check_query(query)?;
        if r > idx.bits {
            return Err(Error::usage(format!("radius {r} exceeds code width {}", idx.bits)));
        }
        let mut stats = CandidateStats::default();
        if idx.is_empty() {
            return Ok((SearchResult::default(), stats));
        }
        self.begin(query);
        let t = pigeonhole_threshold(r, idx.substrings);
        for flips in 0..=t {
            self.probe_ring(query, flips, &mut stats);
        }
        let mut hits: Vec<Hit> = self.found.iter().copied().filter(|h| h.distance <= r).collect();
        hits.sort_unstable();
        Ok((
            SearchResult {
                hits,
                radius_used: None,
                k_exceeds_len: false,
            },
            stats,
        ))
    }

    /// The `k` nearest codes under the `(distance, id)` order, found by growing
    /// the radius one step at a time from zero.
    pub fn knn_search(&mut self, query: &HashCode, k: usize) -> Result<(SearchResult, CandidateStats)> {
        let idx = self.index;
        idx.check_query(query)?;
        if k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        let mut stats = CandidateStats::default();
        let k_exceeds_len = k > idx.len();
        if idx.is_empty() {
            return Ok((
                SearchResult {
                    hits: Vec::new(),
                    radius_used: Some(0),
                    k_exceeds_len,
                },
                stats,
            ));
        }
        let want = k.min(idx.len());
        self.begin(query);

        let mut per_distance = vec![0usize; idx.bits as usize + 1];
        let mut seen_upto = 0usize;
        let mut probed: Option<u32> = None;
        let mut r = 0u32;
        loop {
            let t = pigeonhole_threshold(r, idx.substrings);
            // only the newly reachable ring is probed when the threshold grows
            while probed.is_none_or(|p| p < t) {
                let next = probed.map_or(0, |p| p + 1);
                self.probe_ring(query, next, &mut stats);
                probed = Some(next);
            }
            for h in &self.found[seen_upto..] {
                per_distance[h.distance as usize] += 1;
            }
            seen_upto = self.found.len();
            let within: usize = per_distance[..=r as usize].iter().sum();
            if within >= want || r == idx.bits {
                break;
            }
            r += 1;
        }

        let mut hits: Vec<Hit> = self.found.iter().copied().filter(|h| h.distance <= r).collect();
        hits.sort_unstable();
        hits.truncate(want);
        Ok((
            SearchResult {
                hits,
                radius_used: Some(r),
                k_exceeds_len,
            },
            stats,
        ))
    }
}

/// Probes every table with the keys at exactly `flips` substring distance
/// from the query's substrings and verifies the candidates seen for the
/// first time.
///
/// Probe order is ring by ring, tables in order within a ring, so a code is
/// new exactly when no earlier `(ring, table)` pair could have returned it:
/// no other substring is closer than `flips`, and none of an earlier table
/// is equally close. No per-id bookkeeping is needed.
fn probe_ring<W: Word>(
    t: &Tables<W>,
    len: u32,
    qkeys: &[u32],
    query: &HashCode,
    flips: u32,
    ring_masks: &[u32],
    ranges: &mut Vec<(usize, usize)>,
    found: &mut Vec<Hit>,
    stats: &mut CandidateStats,
) {
    let qw = W::from_code(query);
    let masks = binomial(len, flips);
    let byte_aligned = len.is_multiple_of(8);
    for (j, table) in t.tables.iter().enumerate() {
        let qkey = qkeys[j];
        // a candidate was already returned by table jj when its substring
        // distance there is below `limits[jj]`
        let limits: Vec<(W, u32)> = t
            .masks
            .iter()
            .enumerate()
            .filter(|&(jj, _)| jj != j)
            .map(|(jj, &mask)| (mask, flips + u32::from(jj < j)))
            .collect();
        let mut visit = |start: usize, end: usize, stats: &mut CandidateStats| {
            stats.lookups += 1;
            stats.raw_candidates += (end - start) as u64;
            for e in &table.entries[start..end] {
                let x = e.word ^ qw;
                let distance = if byte_aligned {
                    // one byte-wise popcount serves every substring
                    let counts = x.byte_counts();
                    if !limits.iter().all(|&(mask, limit)| (counts & mask).sum_bytes() >= limit) {
                        continue;
                    }
                    counts.sum_bytes()
                } else {
                    if !limits.iter().all(|&(mask, limit)| (x & mask).ones() >= limit) {
                        continue;
                    }
                    x.ones()
                };
                stats.unique_candidates += 1;
                stats.verified += 1;
                found.push(Hit { distance, id: e.id });
            }
        };
        // Enumerating more keys than the table has buckets is wasted work;
        // walking the buckets instead visits exactly the same ones.
        if masks > table.buckets.len() as u64 {
            for &(key, start, end) in &table.buckets {
                if (key ^ qkey).count_ones() == flips {
                    visit(start as usize, end as usize, stats);
                } else {
                    stats.lookups += 1;
                }
            }
        } else {
            // resolve every bucket range first, then walk the buckets, each
            // stage prefetching a few steps ahead so the misses overlap
            ranges.clear();
            for (i, &mask) in ring_masks.iter().enumerate() {
                if let Some(&ahead) = ring_masks.get(i + PREFETCH_DISTANCE) {
                    table.prefetch_key(qkey ^ ahead);
                }
                ranges.push(table.range(qkey ^ mask));
            }
            for (i, &(start, end)) in ranges.iter().enumerate() {
                if let Some(&(ahead, _)) = ranges.get(i + PREFETCH_DISTANCE) {
                    prefetch(table.entries.as_ptr().wrapping_add(ahead));
                }
                visit(start, end, stats);
            }
        }
    }
}

/// How many probes ahead the lookups prefetch.
const PREFETCH_DISTANCE: usize = 32;

#[inline(always)]
fn prefetch<T>(p: *const T) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetching is a hint and never faults, even out of bounds.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        _mm_prefetch::<_MM_HINT_T0>(p.cast());
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = p;
}

/// Every `len`-bit mask with `flips` bits set, in ascending numeric order.
struct GosperMasks {
    next: u64,
    limit: u64,
}

impl GosperMasks {
    fn new(len: u32, flips: u32) -> Self {
        debug_assert!(len <= MAX_SUBSTRING_BITS && flips <= len);
        GosperMasks {
            next: (1u64 << flips) - 1,
            limit: 1u64 << len,
        }
    }
}

impl Iterator for GosperMasks {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        let c = self.next;
        if c >= self.limit {
            return None;
        }
        self.next = if c == 0 {
            self.limit
        } else {
            let low = c & c.wrapping_neg();
            let ripple = c + low;
            ripple | (((c ^ ripple) >> 2) / low)
        };
        Some(c as u32)
    }
}

fn width_mismatch(code: &HashCode, query: &HashCode) -> Error {
    Error::usage(format!(
        "code width mismatch: {} vs query {}",
        code.bits(),
        query.bits()
    ))
}

/// Exhaustive radius search.
pub fn linear_scan_radius(codes: &[HashCode], query: &HashCode, r: u32) -> Result<SearchResult> {
    let mut hits = Vec::new();
    for (id, c) in codes.iter().enumerate() {
        if c.bits() != query.bits() {
            return Err(width_mismatch(c, query));
        }
        let distance = hamming_unchecked(query, c);
        if distance <= r {
            hits.push(Hit {
                distance,
                id: id as u32,
            });
        }
    }
    hits.sort_unstable();
    Ok(SearchResult {
        hits,
        radius_used: None,
        k_exceeds_len: false,
    })
}

/// Exhaustive kNN under the `(distance, id)` order, in one pass with a
/// bounded max-heap of the best `k` so far.
pub fn linear_scan_knn(codes: &[HashCode], query: &HashCode, k: usize) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    let want = k.min(codes.len());
    let mut heap: BinaryHeap<Hit> = BinaryHeap::with_capacity(want + 1);
    // ids only grow, so a later code displaces the worst kept one only when
    // it is strictly closer
    let mut worst = u32::MAX;
    for (id, c) in codes.iter().enumerate() {
        if c.bits() != query.bits() {
            return Err(width_mismatch(c, query));
        }
        let distance = hamming_unchecked(query, c);
        if heap.len() < want {
            heap.push(Hit {
                distance,
                id: id as u32,
            });
            if heap.len() == want {
                worst = heap.peek().map_or(u32::MAX, |h| h.distance);
            }
        } else if distance < worst {
            if let Some(mut top) = heap.peek_mut() {
                *top = Hit {
                    distance,
                    id: id as u32,
                };
            }
            worst = heap.peek().map_or(u32::MAX, |h| h.distance);
        }
    }
    Ok(SearchResult {
        hits: heap.into_sorted_vec(),
        radius_used: None,
        k_exceeds_len: k > codes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_codes(n: usize, bits: u32, seed: u64) -> Vec<HashCode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| HashCode::random(bits, &mut rng).unwrap()).collect()
    }

    fn sorted_scan(codes: &[HashCode], q: &HashCode) -> Vec<Hit> {
        let mut all: Vec<Hit> = codes
            .iter()
            .enumerate()
            .map(|(id, c)| Hit {
                distance: (c.value() ^ q.value()).count_ones(),
                id: id as u32,
            })
            .collect();
        all.sort();
        all
    }

    #[test]
    fn gosper_masks_cover_the_same_set() {
        for len in [1u32, 5, 8, 16] {
            for flips in 0..=len.min(5) {
                let fast: Vec<u128> = GosperMasks::new(len, flips).map(u128::from).collect();
                assert!(fast.windows(2).all(|w| w[0] < w[1]));
                let mut slow: Vec<u128> = crate::bitcode::FlipMasks::new(len, flips).collect();
                slow.sort_unstable();
                assert_eq!(fast, slow, "len {len} flips {flips}");
            }
        }
    }

    #[test]
    fn every_id_once_per_table() {
        let codes = random_codes(3, 16, 1);
        let index = MihIndex::build(codes.clone(), 2).unwrap();
        for j in 0..2 {
            let total: usize = (0..256u32).map(|k| index.table_entries(j, k).len()).sum();
            assert_eq!(total, 3);
        }
    }

    #[test]
    fn empty_index_is_valid() {
        let index = MihIndex::build_with_width(Vec::new(), 32, 4).unwrap();
        assert!(index.is_empty());
        let q = HashCode::zeros(32).unwrap();
        assert!(index.radius_search(&q, 5).unwrap().0.hits.is_empty());
        let (res, _) = index.knn_search(&q, 3).unwrap();
        assert!(res.hits.is_empty());
        assert!(res.k_exceeds_len);
        assert!(MihIndex::build(Vec::new(), 4).is_err());
    }

    #[test]
    fn duplicate_codes_share_a_bucket() {
        let c = HashCode::parse_bits("1011000011110000").unwrap();
        let other = HashCode::parse_bits("0000000000000001").unwrap();
        let index = MihIndex::build(vec![c, other, c], 2).unwrap();
        // brute-force reconstruction of table contents
        for j in 0..2u32 {
            let key = ((c.value() >> (j * 8)) & 0xff) as u32;
            let expected: Vec<u32> = [c, other, c]
                .iter()
                .enumerate()
                .filter(|(_, x)| ((x.value() >> (j * 8)) & 0xff) as u32 == key)
                .map(|(i, _)| i as u32)
                .collect();
            assert_eq!(index.table_entries(j, key), expected.as_slice());
        }
        let (res, _) = index.radius_search(&c, 0).unwrap();
        assert_eq!(res.ids(), vec![0, 2]);
    }

    #[test]
    fn build_errors() {
        let mut codes = random_codes(4, 32, 2);
        assert!(matches!(MihIndex::build(codes.clone(), 3), Err(Error::Usage(_))));
        codes.push(HashCode::zeros(16).unwrap());
        assert!(matches!(MihIndex::build(codes, 2), Err(Error::Usage(_))));
        assert!(MihIndex::build(random_codes(2, 64, 3), 1).is_err());
    }

    #[test]
    fn full_radius_returns_everything() {
        let codes = random_codes(50, 32, 4);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        let (res, _) = index.radius_search(&codes[0], 32).unwrap();
        assert_eq!(res.hits.len(), 50);
        assert!(index.radius_search(&codes[0], 33).is_err());
    }

    #[test]
    fn zero_radius_finds_the_query_and_probes_once_per_table() {
        let codes = random_codes(100, 32, 5);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        let (res, stats) = index.radius_search(&codes[17], 0).unwrap();
        assert_eq!(res.hits, vec![Hit { distance: 0, id: 17 }]);
        assert_eq!(stats.lookups, 4);
    }

    #[test]
    fn radius_matches_linear_scan() {
        let codes = random_codes(1000, 32, 6);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        let queries = random_codes(30, 32, 7);
        let mut searcher = index.searcher();
        for q in &queries {
            let (res, stats) = searcher.radius_search(q, 6).unwrap();
            let oracle = linear_scan_radius(&codes, q, 6).unwrap();
            assert_eq!(res.hits, oracle.hits);
            assert!(stats.unique_candidates <= stats.raw_candidates);
            assert_eq!(stats.verified, stats.unique_candidates);
        }
    }

    #[test]
    fn radius_is_monotone() {
        let codes = random_codes(500, 16, 8);
        let index = MihIndex::build(codes.clone(), 2).unwrap();
        let q = codes[3];
        let mut prev: Vec<u32> = Vec::new();
        for r in 0..=16 {
            let mut ids = index.radius_search(&q, r).unwrap().0.ids();
            ids.sort();
            assert!(prev.iter().all(|id| ids.binary_search(id).is_ok()));
            prev = ids;
        }
    }

    #[test]
    fn knn_examples() {
        let codes = random_codes(1000, 32, 9);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        let (res, _) = index.knn_search(&codes[42], 1).unwrap();
        assert_eq!(res.hits, vec![Hit { distance: 0, id: 42 }]);
        assert_eq!(res.radius_used, Some(0));

        for q in random_codes(20, 32, 10) {
            let (res, _) = index.knn_search(&q, 10).unwrap();
            assert_eq!(res.hits, sorted_scan(&codes, &q)[..10].to_vec());
            assert_eq!(res.hits, linear_scan_knn(&codes, &q, 10).unwrap().hits);
        }
    }

    #[test]
    fn knn_full_ranking_and_overflow() {
        let codes = random_codes(60, 16, 11);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        let q = random_codes(1, 16, 12)[0];
        let (res, _) = index.knn_search(&q, 60).unwrap();
        assert_eq!(res.hits, sorted_scan(&codes, &q));
        assert!(!res.k_exceeds_len);
        let (res, _) = index.knn_search(&q, 100).unwrap();
        assert_eq!(res.hits.len(), 60);
        assert!(res.k_exceeds_len);
        assert!(index.knn_search(&q, 0).is_err());
    }

    #[test]
    fn knn_is_prefix_consistent() {
        let codes = random_codes(300, 32, 13);
        let index = MihIndex::build(codes, 8).unwrap();
        let q = random_codes(1, 32, 14)[0];
        let mut searcher = index.searcher();
        let mut prev = searcher.knn_search(&q, 1).unwrap().0.hits;
        for k in 2..40 {
            let hits = searcher.knn_search(&q, k).unwrap().0.hits;
            assert_eq!(&hits[..k - 1], prev.as_slice());
            prev = hits;
        }
    }

    #[test]
    fn hits_are_among_candidates() {
        let codes = random_codes(400, 32, 15);
        let index = MihIndex::build(codes, 4).unwrap();
        let q = random_codes(1, 32, 16)[0];
        let (res, stats) = index.knn_search(&q, 25).unwrap();
        assert!(res.hits.len() as u64 <= stats.unique_candidates);
    }

    #[test]
    fn wide_substrings_use_sparse_tables() {
        let codes = random_codes(500, 64, 17);
        let index = MihIndex::build(codes.clone(), 2).unwrap();
        for q in random_codes(5, 64, 18) {
            let (res, _) = index.knn_search(&q, 5).unwrap();
            assert_eq!(res.hits, sorted_scan(&codes, &q)[..5].to_vec());
        }
        let (res, _) = index.radius_search(&codes[0], 64).unwrap();
        assert_eq!(res.hits.len(), 500);
    }

    #[test]
    fn linear_scan_edges() {
        let q = HashCode::zeros(8).unwrap();
        assert!(linear_scan_radius(&[], &q, 3).unwrap().hits.is_empty());
        assert!(linear_scan_knn(&[], &q, 3).unwrap().hits.is_empty());
        let one = HashCode::parse_bits("11100000").unwrap();
        assert!(linear_scan_radius(&[one], &q, 2).unwrap().hits.is_empty());
        assert_eq!(linear_scan_radius(&[one], &q, 3).unwrap().ids(), vec![0]);
    }

    #[test]
    fn save_and_load_rebuilds_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx");
        let codes = random_codes(200, 32, 19);
        let index = MihIndex::build(codes.clone(), 4).unwrap();
        index.save(&path, None, serde_json::json!({"seed": 1})).unwrap();
        let (loaded, sidecar) = MihIndex::load(&path).unwrap();
        assert_eq!(sidecar.substrings, Some(4));
        assert_eq!(loaded.codes(), index.codes());
        let q = codes[9];
        assert_eq!(
            loaded.knn_search(&q, 7).unwrap(),
            index.knn_search(&q, 7).unwrap()
        );
    }
}
