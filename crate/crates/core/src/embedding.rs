//! Visual vocabulary and binary signature embedding.
//!
//! Descriptors are quantized to their nearest visual word and reduced to a
//! short binary signature: an orthonormal projection (drawn once from a
//! seed) followed by per-word, per-dimension median thresholds. Distances
//! between signatures within the same word approximate descriptor
//! similarity via Hamming distance.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, standard_normal};

/// Hard ceiling on signature length; shipped configurations use 64 or 128.
pub const MAX_SIGNATURE_BITS: usize = 256;

const SIGNATURE_WORDS: usize = MAX_SIGNATURE_BITS / 64;

/// A packed binary signature of `len` bits. Bits beyond `len` are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    words: [u64; SIGNATURE_WORDS],
    len: u16,
}

impl Signature {
    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1 && len <= MAX_SIGNATURE_BITS, "signature length {len} out of range");
        Self { words: [0; SIGNATURE_WORDS], len: len as u16 }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len());
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn complement(&self) -> Self {
        let mut out = *self;
        for (i, w) in out.words.iter_mut().enumerate() {
            *w = !*w & tail_mask(self.len(), i);
        }
        out
    }

    /// Packed little-endian bytes, `ceil(len / 8)` of them.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for i in 0..nbytes {
            out.push((self.words[i / 8] >> (8 * (i % 8))) as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Container(format!(
                "signature byte length {} does not match {len} bits",
                bytes.len()
            )));
        }
        let mut sig = Self::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            sig.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        for (i, w) in sig.words.iter().enumerate() {
            if *w & !tail_mask(len, i) != 0 {
                return Err(Error::Container("signature has bits set beyond its length".into()));
            }
        }
        Ok(sig)
    }
}

fn tail_mask(len: usize, word: usize) -> u64 {
    let lo = word * 64;
    if len >= lo + 64 {
        u64::MAX
    } else if len <= lo {
        0
    } else {
        (1u64 << (len - lo)) - 1
    }
}

/// Number of differing bits. Panics if lengths differ (caller contract).
pub fn hamming_distance(a: &Signature, b: &Signature) -> u32 {
    assert_eq!(a.len, b.len, "hamming_distance on signatures of different length");
    a.words
        .iter()
        .zip(b.words.iter())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// Dense row-major set of descriptors, all of the same dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        assert!(dim >= 1);
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "descriptor dimension mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// A flat k-means vocabulary over descriptor space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    dim: usize,
    /// Row-major `word_count x dim`.
    centroids: Vec<f32>,
}

impl Vocabulary {
    pub fn new(dim: usize, centroids: Vec<f32>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(Error::InvalidModel("vocabulary shape is inconsistent".into()));
        }
        if !centroids.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel("vocabulary has non-finite centroid entries".into()));
        }
        Ok(Self { dim, centroids })
    }

    pub fn word_count(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, word: u32) -> &[f32] {
        let w = word as usize;
        &self.centroids[w * self.dim..(w + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest id.
    pub fn assign(&self, descriptor: &[f32]) -> u32 {
        assert_eq!(descriptor.len(), self.dim, "descriptor dimension mismatch");
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for w in 0..self.word_count() {
            let d = squared_distance(descriptor, self.centroid(w as u32));
            if d < best_d {
                best_d = d;
                best = w as u32;
            }
        }
        best
    }
}

const KMEANS_MAX_ITERS: usize = 100;

/// Lloyd k-means with seeded weighted (k-means++ style) initialization.
///
/// Requires at least `k` distinct descriptors. Assignment ties and all
/// sampling are deterministic in `seed`; rerunning reproduces the
/// vocabulary bit-identically.
pub fn train_vocabulary(descriptors: &DescriptorSet, k: usize, seed: u64) -> Result<Vocabulary> {
    let n = descriptors.len();
    let dim = descriptors.dim();
    if k == 0 {
        return Err(Error::Training("word count must be at least 1".into()));
    }
    if !has_k_distinct(descriptors, k) {
        return Err(Error::Training(format!(
            "need at least {k} distinct descriptors, got fewer among {n}"
        )));
    }

    let mut rng = derive_rng(seed, 0x766f_6361, 0); // vocabulary stream
    let mut centroids: Vec<f32> = Vec::with_capacity(k * dim);

    // Weighted farthest-first seeding: next center drawn with probability
    // proportional to squared distance from the chosen set.
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(descriptors.row(first));
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_distance(descriptors.row(i), &centroids[0..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass is on duplicates; fall back to the first
            // descriptor not yet present (guaranteed by the distinct check).
            (0..n)
                .find(|&i| {
                    (0..c).all(|j| {
                        squared_distance(descriptors.row(i), &centroids[j * dim..(j + 1) * dim])
                            > 0.0
                    })
                })
                .expect("distinct descriptor must exist")
        };
        let base = centroids.len();
        centroids.extend_from_slice(descriptors.row(pick));
        let new = &centroids[base..base + dim];
        d2.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = v.min(squared_distance(descriptors.row(i), new));
        });
    }

    let mut assignments = vec![u32::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let vocab = Vocabulary { dim, centroids: centroids.clone() };
        let next: Vec<u32> =
            (0..n).into_par_iter().map(|i| vocab.assign(descriptors.row(i))).collect();
        let changed = next != assignments;
        assignments = next;

        // Means accumulated serially in index order for reproducibility.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a as usize] += 1;
            let row = descriptors.row(i);
            let s = &mut sums[a as usize * dim..(a as usize + 1) * dim];
            for (acc, &v) in s.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }

        // Re-seed any emptied cluster with the point farthest from its
        // current centroid (lowest index on ties).
        for w in 0..k {
            if counts[w] > 0 {
                continue;
            }
            let mut far = 0usize;
            let mut far_d = -1.0f64;
            for i in 0..n {
                let a = assignments[i] as usize;
                if counts[a] <= 1 {
                    continue; // do not orphan another cluster
                }
                let d = squared_distance(descriptors.row(i), &centroids[a * dim..(a + 1) * dim]);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            let old = assignments[far] as usize;
            counts[old] -= 1;
            let row = descriptors.row(far);
            for (acc, &v) in sums[old * dim..(old + 1) * dim].iter_mut().zip(row) {
                *acc -= v as f64;
            }
            assignments[far] = w as u32;
            counts[w] = 1;
            for (acc, &v) in sums[w * dim..(w + 1) * dim].iter_mut().zip(row) {
                *acc += v as f64;
            }
        }

        for w in 0..k {
            let c = counts[w].max(1) as f64;
            for d in 0..dim {
                centroids[w * dim + d] = (sums[w * dim + d] / c) as f32;
            }
        }

        if !changed {
            break;
        }
    }

    Vocabulary::new(dim, centroids)
}

fn has_k_distinct(descriptors: &DescriptorSet, k: usize) -> bool {
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    for row in descriptors.rows() {
        if seen.len() >= k {
            return true;
        }
        seen.insert(row.iter().map(|v| v.to_bits()).collect());
    }
    seen.len() >= k
}

/// Orthonormal projection and per-word median thresholds that binarize a
/// descriptor into a `bits`-long signature.
///
/// The projection is the first `bits` rows of the orthogonal factor of a
/// seeded Gaussian matrix, rounded once to f32 so that in-memory values
/// match the serialized container exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    bits: usize,
    dim: usize,
    word_count: usize,
    seed: u64,
    /// Row-major `bits x dim`.
    projection: Vec<f32>,
    /// Row-major `word_count x bits`.
    thresholds: Vec<f32>,
}

impl EmbeddingParams {
    pub fn from_parts(
        bits: usize,
        dim: usize,
        word_count: usize,
        seed: u64,
        projection: Vec<f32>,
        thresholds: Vec<f32>,
    ) -> Result<Self> {
        if bits == 0 || bits > dim || bits > MAX_SIGNATURE_BITS {
            return Err(Error::InvalidModel(format!("signature bits {bits} out of range (dim {dim})")));
        }
        if projection.len() != bits * dim || thresholds.len() != word_count * bits {
            return Err(Error::InvalidModel("embedding parameter shapes are inconsistent".into()));
        }
        Ok(Self { bits, dim, word_count, seed, projection, thresholds })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self) -> &[f32] {
        &self.projection
    }

    pub fn thresholds(&self) -> &[f32] {
        &self.thresholds
    }

    pub fn threshold(&self, word: u32, bit: usize) -> f32 {
        self.thresholds[word as usize * self.bits + bit]
    }

    /// Projected coordinates of a descriptor (f64 accumulation).
    pub fn project(&self, descriptor: &[f32]) -> Vec<f64> {
        assert_eq!(descriptor.len(), self.dim, "descriptor dimension mismatch");
        (0..self.bits)
            .map(|b| {
                let row = &self.projection[b * self.dim..(b + 1) * self.dim];
                row.iter().zip(descriptor).map(|(&p, &x)| p as f64 * x as f64).sum()
            })
            .collect()
    }

    /// Binarize projected coordinates against a word's thresholds.
    /// A coordinate exactly equal to the threshold maps to bit 0.
    pub fn binarize(&self, projected: &[f64], word: u32) -> Signature {
        assert_eq!(projected.len(), self.bits);
        let mut sig = Signature::zeros(self.bits);
        for (b, &v) in projected.iter().enumerate() {
            if v > self.threshold(word, b) as f64 {
                sig.set_bit(b, true);
            }
        }
        sig
    }

    pub fn encode(&self, descriptor: &[f32], word: u32) -> Signature {
        self.binarize(&self.project(descriptor), word)
    }
}

/// Draws the seeded Gaussian matrix and returns the first `bits` rows of
/// the transposed orthogonal QR factor, in f64.
fn orthonormal_projection(dim: usize, bits: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let mut rng = derive_rng(seed, 0x656d_6264, 0); // embedding stream
    let gaussian = nalgebra::DMatrix::<f64>::from_fn(dim, dim, |_, _| standard_normal(&mut rng));
    let q = gaussian.qr().q();
    // Rows of the projection are columns of Q.
    let mut proj = nalgebra::DMatrix::<f64>::zeros(bits, dim);
    for b in 0..bits {
        for d in 0..dim {
            proj[(b, d)] = q[(d, b)];
        }
    }
    proj
}

/// Trains embedding parameters: seeded orthonormal projection plus
/// per-word, per-dimension medians of the projected training descriptors.
///
/// Words with no training descriptors keep zero thresholds; their number is
/// returned as a warning count.
pub fn train_embedding(
    descriptors: &DescriptorSet,
    words: &[u32],
    vocab: &Vocabulary,
    bits: usize,
    seed: u64,
) -> Result<(EmbeddingParams, usize)> {
    let dim = descriptors.dim();
    let k = vocab.word_count();
    if vocab.dim() != dim {
        return Err(Error::Training("vocabulary dimension does not match descriptors".into()));
    }
    if bits == 0 || bits > dim || bits > MAX_SIGNATURE_BITS {
        return Err(Error::Training(format!(
            "signature bits {bits} must be in [1, min(dim={dim}, {MAX_SIGNATURE_BITS})]"
        )));
    }
    if words.len() != descriptors.len() {
        return Err(Error::Training("word assignment length mismatch".into()));
    }
    if let Some(&w) = words.iter().find(|&&w| w as usize >= k) {
        return Err(Error::Training(format!("word assignment {w} out of range ({k} words)")));
    }

    let proj_f64 = orthonormal_projection(dim, bits, seed);
    // Round once to the f32 grid; all later projections use these values.
    let mut projection = Vec::with_capacity(bits * dim);
    for b in 0..bits {
        for d in 0..dim {
            projection.push(proj_f64[(b, d)] as f32);
        }
    }
    let params = EmbeddingParams {
        bits,
        dim,
        word_count: k,
        seed,
        projection,
        thresholds: vec![0.0; k * bits],
    };

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (i, &w) in words.iter().enumerate() {
        members[w as usize].push(i as u32);
    }
    let untrained = members.iter().filter(|m| m.is_empty()).count();

    let threshold_rows: Vec<Vec<f32>> = members
        .par_iter()
        .map(|idx| {
            if idx.is_empty() {
                return vec![0.0f32; bits];
            }
            let mut coords = vec![0.0f64; idx.len() * bits];
            for (r, &i) in idx.iter().enumerate() {
                let p = params.project(descriptors.row(i as usize));
                coords[r * bits..(r + 1) * bits].copy_from_slice(&p);
            }
            (0..bits)
                .map(|b| {
                    let mut column: Vec<f64> =
                        (0..idx.len()).map(|r| coords[r * bits + b]).collect();
                    median_in_place(&mut column) as f32
                })
                .collect()
        })
        .collect();

    let mut thresholds = vec![0.0f32; k * bits];
    for (w, row) in threshold_rows.into_iter().enumerate() {
        thresholds[w * bits..(w + 1) * bits].copy_from_slice(&row);
    }

    Ok((EmbeddingParams { thresholds, ..params }, untrained))
}

/// Median with the even-count convention: mean of the two middle values.
fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite projected coordinate"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Assigns a query descriptor to its nearest word and binarizes it.
pub fn encode_query(
    descriptor: &[f32],
    vocab: &Vocabulary,
    embedding: &EmbeddingParams,
) -> (u32, Signature) {
    let word = vocab.assign(descriptor);
    (word, embedding.encode(descriptor, word))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_from(rows: &[&[f32]]) -> DescriptorSet {
        let mut s = DescriptorSet::new(rows[0].len());
        for r in rows {
            s.push(r);
        }
        s
    }

    #[test]
    fn hamming_identity_and_complement() {
        let mut s = Signature::zeros(64);
        s.set_bit(0, true);
        s.set_bit(63, true);
        s.set_bit(17, true);
        assert_eq!(hamming_distance(&s, &s), 0);
        assert_eq!(hamming_distance(&s, &s.complement()), 64);
    }

    #[test]
    fn hamming_counts_xor_bits() {
        // First byte 0xFF vs 0x0F, rest equal: four differing bits.
        let a = Signature::from_bytes(&[0xFF, 0, 0, 0, 0, 0, 0, 0], 64).unwrap();
        let b = Signature::from_bytes(&[0x0F, 0, 0, 0, 0, 0, 0, 0], 64).unwrap();
        assert_eq!(hamming_distance(&a, &b), 4);
    }

    #[test]
    #[should_panic(expected = "different length")]
    fn hamming_length_mismatch_panics() {
        let a = Signature::zeros(64);
        let b = Signature::zeros(32);
        hamming_distance(&a, &b);
    }

    #[test]
    fn signature_byte_round_trip() {
        let mut s = Signature::zeros(24);
        for i in [0usize, 3, 8, 23] {
            s.set_bit(i, true);
        }
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 3);
        assert_eq!(Signature::from_bytes(&bytes, 24).unwrap(), s);
    }

    #[test]
    fn exact_fit_recovers_inputs() {
        let rows: Vec<Vec<f32>> = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let set = set_from(&refs);
        let vocab = train_vocabulary(&set, 3, 1).unwrap();
        let mut got: Vec<Vec<f32>> =
            (0..3).map(|w| vocab.centroid(w as u32).to_vec()).collect();
        let mut want = rows.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        // total distortion is zero
        for r in &rows {
            let w = vocab.assign(r);
            assert_eq!(squared_distance(r, vocab.centroid(w)), 0.0);
        }
    }

    #[test]
    fn single_cluster_is_arithmetic_mean() {
        let set = set_from(&[&[1.0, 5.0], &[3.0, 7.0], &[5.0, 0.0]]);
        let vocab = train_vocabulary(&set, 1, 9).unwrap();
        assert_eq!(vocab.centroid(0), &[3.0, 4.0]);
    }

    #[test]
    fn two_blobs_recover_their_means() {
        let mut rng = derive_rng(5, 99, 0);
        let sigma = 0.5;
        let mut set = DescriptorSet::new(2);
        let mut sums = [[0.0f64; 2]; 2];
        let n_per = 400;
        for blob in 0..2 {
            let center = [blob as f64 * 20.0, 5.0];
            for _ in 0..n_per {
                let x = center[0] + sigma * standard_normal(&mut rng);
                let y = center[1] + sigma * standard_normal(&mut rng);
                sums[blob][0] += x;
                sums[blob][1] += y;
                set.push(&[x as f32, y as f32]);
            }
        }
        let vocab = train_vocabulary(&set, 2, 31).unwrap();
        // compare each centroid against the nearest sample mean (oracle:
        // blob means computed directly), within 3 sigma / sqrt(n)
        let tol = 3.0 * sigma / (n_per as f64).sqrt();
        for blob in 0..2 {
            let mean = [sums[blob][0] / n_per as f64, sums[blob][1] / n_per as f64];
            let c = vocab.centroid(vocab.assign(&[mean[0] as f32, mean[1] as f32]));
            assert!((c[0] as f64 - mean[0]).abs() < tol, "x off: {} vs {}", c[0], mean[0]);
            assert!((c[1] as f64 - mean[1]).abs() < tol, "y off: {} vs {}", c[1], mean[1]);
        }
    }

    #[test]
    fn too_few_distinct_descriptors_fail() {
        let set = set_from(&[&[1.0, 1.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(train_vocabulary(&set, 3, 0).is_err());
        assert!(train_vocabulary(&set, 2, 0).is_ok());
    }

    #[test]
    fn projection_rows_are_orthonormal() {
        // Construction-time property, checked on the f64 factor.
        let proj = orthonormal_projection(16, 8, 77);
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..16).map(|d| proj[(i, d)] * proj[(j, d)]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "rows {i},{j}: {dot}");
            }
        }
        // After the one-time f32 rounding the property holds to f32 grain.
        let proj_ref = &proj;
        let stored: Vec<f32> =
            (0..8).flat_map(|b| (0..16).map(move |d| proj_ref[(b, d)] as f32)).collect();
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..16)
                    .map(|d| stored[i * 16 + d] as f64 * stored[j * 16 + d] as f64)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 2e-6, "stored rows {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn medians_follow_the_even_odd_convention() {
        assert_eq!(median_in_place(&mut [1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median_in_place(&mut [3.0, 1.0]), 2.0);
        assert_eq!(median_in_place(&mut [5.0]), 5.0);
    }

    #[test]
    fn thresholds_are_projected_medians() {
        // One word, identity-ish data: thresholds must equal the median of
        // the projected coordinates, recomputed here independently.
        let set = set_from(&[&[1.0, 0.0, 0.0], &[2.0, 1.0, 0.0], &[3.0, 0.0, 2.0]]);
        let vocab = Vocabulary::new(3, vec![0.0, 0.0, 0.0]).unwrap();
        let words = vec![0u32; 3];
        let (emb, warnings) = train_embedding(&set, &words, &vocab, 2, 123).unwrap();
        assert_eq!(warnings, 0);
        for b in 0..2 {
            let mut coords: Vec<f64> = set.rows().map(|r| emb.project(r)[b]).collect();
            let want = median_in_place(&mut coords) as f32;
            assert_eq!(emb.threshold(0, b), want);
        }
    }

    #[test]
    fn untrained_words_are_flagged_and_zeroed() {
        let set = set_from(&[&[1.0, 0.0], &[2.0, 0.0]]);
        let vocab = Vocabulary::new(2, vec![0.0, 0.0, 100.0, 100.0]).unwrap();
        let words = vec![0u32, 0u32];
        let (emb, warnings) = train_embedding(&set, &words, &vocab, 2, 5).unwrap();
        assert_eq!(warnings, 1);
        assert_eq!(emb.threshold(1, 0), 0.0);
        assert_eq!(emb.threshold(1, 1), 0.0);
    }

    #[test]
    fn retraining_is_bit_identical() {
        let mut rng = derive_rng(17, 3, 0);
        let mut set = DescriptorSet::new(8);
        for _ in 0..64 {
            let row: Vec<f32> =
                (0..8).map(|_| (standard_normal(&mut rng) * 10.0) as f32).collect();
            set.push(&row);
        }
        let vocab = train_vocabulary(&set, 4, 11).unwrap();
        let words: Vec<u32> = set.rows().map(|r| vocab.assign(r)).collect();
        let (a, _) = train_embedding(&set, &words, &vocab, 6, 99).unwrap();
        let (b, _) = train_embedding(&set, &words, &vocab, 6, 99).unwrap();
        assert_eq!(a, b);
        let vocab2 = train_vocabulary(&set, 4, 11).unwrap();
        assert_eq!(vocab, vocab2);
    }

    #[test]
    fn encode_query_picks_nearest_word_with_low_id_ties() {
        let vocab =
            Vocabulary::new(2, vec![0.0, 0.0, /* word 0 */ 4.0, 0.0 /* word 1 */]).unwrap();
        assert_eq!(vocab.assign(&[0.1, 0.0]), 0);
        assert_eq!(vocab.assign(&[3.9, 0.0]), 1);
        // exactly equidistant: lowest id wins
        assert_eq!(vocab.assign(&[2.0, 0.0]), 0);
        // descriptor equal to a centroid
        assert_eq!(vocab.assign(&[4.0, 0.0]), 1);
    }

    #[test]
    fn coordinate_equal_to_threshold_maps_to_zero_bit() {
        let params =
            EmbeddingParams::from_parts(1, 1, 1, 0, vec![1.0], vec![2.5]).unwrap();
        assert!(!params.binarize(&[2.5], 0).bit(0));
        assert!(params.binarize(&[2.5 + 1e-9], 0).bit(0));
        assert!(!params.binarize(&[2.5 - 1e-9], 0).bit(0));
    }

    #[test]
    fn encode_is_pure_and_deterministic() {
        let set = set_from(&[&[1.0, 0.0, 3.0], &[0.0, 2.0, 1.0], &[4.0, 4.0, 0.0]]);
        let vocab = train_vocabulary(&set, 2, 3).unwrap();
        let words: Vec<u32> = set.rows().map(|r| vocab.assign(r)).collect();
        let (emb, _) = train_embedding(&set, &words, &vocab, 2, 8).unwrap();
        let d = [2.0f32, 1.0, 0.5];
        let (w1, s1) = encode_query(&d, &vocab, &emb);
        let (w2, s2) = encode_query(&d, &vocab, &emb);
        assert_eq!((w1, s1), (w2, s2));
    }
}
