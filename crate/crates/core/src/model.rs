//! The compressed localization map: 3D points, one binary signature per
//! (point, visual word) pair, the visibility graph, and the quantization
//! parameters needed to encode queries against it.

use std::collections::BTreeMap;

use crate::embedding::{DescriptorSet, EmbeddingParams, Signature, Vocabulary};
use crate::error::{Error, Result};
use crate::scene::{Point3D, VisibilityGraph};

/// One signature entry. Entries are stored sorted by (word, point) so the
/// inverted index is a plain offset table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEntry {
    pub point_id: u32,
    pub word_id: u32,
    pub signature: Signature,
}

/// Word-assigned raw descriptors of one 3D point, one row per observation.
#[derive(Debug, Clone)]
pub struct PointObservations {
    pub words: Vec<u32>,
    pub descriptors: DescriptorSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub points: Vec<Point3D>,
    entries: Vec<ModelEntry>,
    /// CSR offsets into `entries`, length `word_count + 1`.
    word_offsets: Vec<u32>,
    pub graph: VisibilityGraph,
    pub vocab: Vocabulary,
    pub embedding: EmbeddingParams,
}

impl CompressedModel {
    /// Assembles a model from parts, validating entry ordering, uniqueness
    /// and id ranges, and building the inverted index.
    pub fn from_parts(
        points: Vec<Point3D>,
        entries: Vec<ModelEntry>,
        graph: VisibilityGraph,
        vocab: Vocabulary,
        embedding: EmbeddingParams,
    ) -> Result<Self> {
        let k = vocab.word_count();
        if embedding.word_count() != k || embedding.dim() != vocab.dim() {
            return Err(Error::InvalidModel(
                "embedding and vocabulary disagree on shape".into(),
            ));
        }
        for pair in entries.windows(2) {
            let a = (pair[0].word_id, pair[0].point_id);
            let b = (pair[1].word_id, pair[1].point_id);
            if a >= b {
                return Err(Error::InvalidModel(
                    "entries must be strictly sorted by (word, point)".into(),
                ));
            }
        }
        for e in &entries {
            if e.word_id as usize >= k {
                return Err(Error::InvalidModel(format!("entry word {} out of range", e.word_id)));
            }
            if e.point_id as usize >= points.len() {
                return Err(Error::InvalidModel(format!("entry point {} out of range", e.point_id)));
            }
            if e.signature.len() != embedding.bits() {
                return Err(Error::InvalidModel("entry signature length mismatch".into()));
            }
        }

        let mut word_offsets = vec![0u32; k + 1];
        for e in &entries {
            word_offsets[e.word_id as usize + 1] += 1;
        }
        for w in 0..k {
            word_offsets[w + 1] += word_offsets[w];
        }

        Ok(Self { points, entries, word_offsets, graph, vocab, embedding })
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    /// Entries quantized into `word`, plus the index of the first one;
    /// `entry index = base + position`.
    pub fn entries_of_word(&self, word: u32) -> (u32, &[ModelEntry]) {
        let lo = self.word_offsets[word as usize] as usize;
        let hi = self.word_offsets[word as usize + 1] as usize;
        (lo as u32, &self.entries[lo..hi])
    }

    pub fn entry(&self, idx: u32) -> &ModelEntry {
        &self.entries[idx as usize]
    }

    pub fn point_position(&self, point_id: u32) -> [f64; 3] {
        self.points[point_id as usize].position
    }
}

/// Componentwise mean rounded half-up to integers, as f32 values.
pub fn integer_mean(descriptors: &[&[f32]]) -> Vec<f32> {
    assert!(!descriptors.is_empty());
    let dim = descriptors[0].len();
    let mut mean = vec![0.0f64; dim];
    for d in descriptors {
        assert_eq!(d.len(), dim);
        for (m, &v) in mean.iter_mut().zip(d.iter()) {
            *m += v as f64;
        }
    }
    let n = descriptors.len() as f64;
    mean.iter().map(|&s| (s / n + 0.5).floor() as f32).collect()
}

/// Collapses each point's descriptors to one signature per visual word:
/// the per-word integer mean descriptor, binarized.
pub fn compress_model(
    points: Vec<Point3D>,
    observations: &[PointObservations],
    graph: VisibilityGraph,
    vocab: Vocabulary,
    embedding: EmbeddingParams,
) -> Result<CompressedModel> {
    if observations.len() != points.len() {
        return Err(Error::InvalidModel(format!(
            "{} observation groups for {} points",
            observations.len(),
            points.len()
        )));
    }

    // (word, point) -> signature, built in sorted order.
    let mut grouped: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for (point_id, obs) in observations.iter().enumerate() {
        if obs.descriptors.is_empty() {
            return Err(Error::InvalidModel(format!("point {point_id} has no descriptors")));
        }
        if obs.words.len() != obs.descriptors.len() {
            return Err(Error::InvalidModel(format!(
                "point {point_id} word assignments do not match descriptors"
            )));
        }
        for (row, &w) in obs.words.iter().enumerate() {
            if w as usize >= vocab.word_count() {
                return Err(Error::InvalidModel(format!("point {point_id} assigned to unknown word {w}")));
            }
            grouped.entry((w, point_id as u32)).or_default().push(row as u32);
        }
    }

    let mut entries = Vec::with_capacity(grouped.len());
    for ((word_id, point_id), rows) in grouped {
        let descs: Vec<&[f32]> = rows
            .iter()
            .map(|&r| observations[point_id as usize].descriptors.row(r as usize))
            .collect();
        let mean = integer_mean(&descs);
        let signature = embedding.encode(&mean, word_id);
        entries.push(ModelEntry { point_id, word_id, signature });
    }

    CompressedModel::from_parts(points, entries, graph, vocab, embedding)
}
