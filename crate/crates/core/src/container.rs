//! Single-file binary model container.
//!
//! Layout (all little-endian): magic `CPFL`, u32 format version, then five
//! length-prefixed sections in fixed order — vocabulary (u32 word count,
//! u32 dim, word_count x dim f32), embedding (u32 bits, u64 seed,
//! bits x dim f32 projection, word_count x bits f32 thresholds), points
//! (u64 count; per point u32 id, 3 x f64), entries (u64 count; per entry
//! u32 point, u32 word, ceil(bits/8) signature bytes, strictly sorted by
//! (word, point)), visibility (u64 edge count; per edge u32 point,
//! u32 image, sorted by (point, image)). Each section is prefixed by its
//! u64 byte length. Writing a read-back model reproduces the input bytes.

use std::fs;
use std::path::Path;

use crate::embedding::{EmbeddingParams, Signature, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{CompressedModel, ModelEntry};
use crate::scene::{Point3D, VisibilityGraph};

pub const MAGIC: [u8; 4] = *b"CPFL";
pub const FORMAT_VERSION: u32 = 1;

pub fn signature_bytes(bits: usize) -> usize {
    bits.div_ceil(8)
}

pub fn vocabulary_section_len(word_count: usize, dim: usize) -> u64 {
    (8 + word_count * dim * 4) as u64
}

pub fn embedding_section_len(word_count: usize, dim: usize, bits: usize) -> u64 {
    (4 + 8 + bits * dim * 4 + word_count * bits * 4) as u64
}

pub fn points_section_len(points: usize) -> u64 {
    (8 + points * (4 + 24)) as u64
}

pub fn entries_section_len(entries: usize, bits: usize) -> u64 {
    (8 + entries * (4 + 4 + signature_bytes(bits))) as u64
}

pub fn visibility_section_len(edges: usize) -> u64 {
    (8 + edges * 8) as u64
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Container("unexpected end of container".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Serializes a model to its canonical container bytes.
pub fn write_model(model: &CompressedModel) -> Vec<u8> {
    let k = model.vocab.word_count();
    let dim = model.vocab.dim();
    let bits = model.embedding.bits();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u32(FORMAT_VERSION);

    // vocabulary
    w.u64(vocabulary_section_len(k, dim) - 0);
    w.u32(k as u32);
    w.u32(dim as u32);
    for &c in model.vocab.centroids() {
        w.f32(c);
    }

    // embedding
    w.u64(embedding_section_len(k, dim, bits));
    w.u32(bits as u32);
    w.u64(model.embedding.seed());
    for &p in model.embedding.projection() {
        w.f32(p);
    }
    for &t in model.embedding.thresholds() {
        w.f32(t);
    }

    // points
    w.u64(points_section_len(model.points.len()));
    w.u64(model.points.len() as u64);
    for p in &model.points {
        w.u32(p.id);
        for &c in &p.position {
            w.f64(c);
        }
    }

    // entries
    w.u64(entries_section_len(model.entries().len(), bits));
    w.u64(model.entries().len() as u64);
    for e in model.entries() {
        w.u32(e.point_id);
        w.u32(e.word_id);
        w.buf.extend_from_slice(&e.signature.to_bytes());
    }

    // visibility
    w.u64(visibility_section_len(model.graph.edge_count()));
    w.u64(model.graph.edge_count() as u64);
    for (p, d) in model.graph.edges() {
        w.u32(p);
        w.u32(d);
    }

    w.buf
}

pub fn write_model_to_path(model: &CompressedModel, path: &Path) -> Result<()> {
    fs::write(path, write_model(model))?;
    Ok(())
}

/// Parses container bytes back into a model, validating the layout and
/// every structural invariant.
pub fn read_model(bytes: &[u8]) -> Result<CompressedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Container("bad magic; not a model container".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Container(format!("unsupported format version {version}")));
    }

    // vocabulary
    let vocab_len = r.u64()?;
    let section_start = r.pos;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 || k == 0 {
        return Err(Error::Container("empty vocabulary".into()));
    }
    let mut centroids = Vec::with_capacity(k * dim);
    for _ in 0..k * dim {
        centroids.push(r.f32()?);
    }
    check_section("vocabulary", vocab_len, section_start, r.pos)?;
    let vocab = Vocabulary::new(dim, centroids)
        .map_err(|e| Error::Container(format!("vocabulary: {e}")))?;

    // embedding
    let emb_len = r.u64()?;
    let section_start = r.pos;
    let bits = r.u32()? as usize;
    let seed = r.u64()?;
    let mut projection = Vec::with_capacity(bits * dim);
    for _ in 0..bits * dim {
        projection.push(r.f32()?);
    }
    let mut thresholds = Vec::with_capacity(k * bits);
    for _ in 0..k * bits {
        thresholds.push(r.f32()?);
    }
    check_section("embedding", emb_len, section_start, r.pos)?;
    let embedding = EmbeddingParams::from_parts(bits, dim, k, seed, projection, thresholds)
        .map_err(|e| Error::Container(format!("embedding: {e}")))?;

    // points
    let points_len = r.u64()?;
    let section_start = r.pos;
    let num_points = r.u64()? as usize;
    let mut points = Vec::with_capacity(num_points);
    for _ in 0..num_points {
        let id = r.u32()?;
        let position = [r.f64()?, r.f64()?, r.f64()?];
        points.push(Point3D { id, position });
    }
    check_section("points", points_len, section_start, r.pos)?;

    // entries
    let entries_len = r.u64()?;
    let section_start = r.pos;
    let num_entries = r.u64()? as usize;
    let sig_bytes = signature_bytes(bits);
    let mut entries = Vec::with_capacity(num_entries);
    for _ in 0..num_entries {
        let point_id = r.u32()?;
        let word_id = r.u32()?;
        let signature = Signature::from_bytes(r.take(sig_bytes)?, bits)?;
        entries.push(ModelEntry { point_id, word_id, signature });
    }
    check_section("entries", entries_len, section_start, r.pos)?;

    // visibility
    let vis_len = r.u64()?;
    let section_start = r.pos;
    let num_edges = r.u64()? as usize;
    let mut edges = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        edges.push((r.u32()?, r.u32()?));
    }
    check_section("visibility", vis_len, section_start, r.pos)?;
    if r.pos != bytes.len() {
        return Err(Error::Container("trailing bytes after last section".into()));
    }
    for pair in edges.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::Container("visibility edges not sorted by (point, image)".into()));
        }
    }
    let graph = VisibilityGraph::from_edges(num_points, &edges)?;

    CompressedModel::from_parts(points, entries, graph, vocab, embedding)
        .map_err(|e| Error::Container(format!("model: {e}")))
}

pub fn read_model_from_path(path: &Path) -> Result<CompressedModel> {
    read_model(&fs::read(path)?)
}

fn check_section(name: &str, declared: u64, start: usize, end: usize) -> Result<()> {
    if (end - start) as u64 != declared {
        return Err(Error::Container(format!(
            "{name} section length {} does not match declared {declared}",
            end - start
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{train_embedding, train_vocabulary, DescriptorSet};
    use crate::model::{compress_model, PointObservations};
    use crate::rng::{derive_rng, standard_normal};
    use crate::scene::{build_visibility_graph, DatabaseImage};

    pub(crate) fn tiny_model(seed: u64) -> CompressedModel {
        let mut rng = derive_rng(seed, 0xc0, 0);
        let dim = 8;
        let n_points = 12u32;
        let points: Vec<Point3D> = (0..n_points)
            .map(|id| {
                Point3D {
                    id,
                    position: [
                        standard_normal(&mut rng),
                        standard_normal(&mut rng),
                        standard_normal(&mut rng) + 5.0,
                    ],
                }
            })
            .collect();
        let images: Vec<DatabaseImage> = (0..4)
            .map(|id| DatabaseImage {
                id,
                observed_points: (0..n_points).filter(|p| (p + id) % 2 == 0).collect(),
            })
            .collect();
        let graph = build_visibility_graph(&points, &images).unwrap();

        let mut all = DescriptorSet::new(dim);
        let mut observations = Vec::new();
        for _ in 0..n_points {
            let mut set = DescriptorSet::new(dim);
            let base: Vec<f32> =
                (0..dim).map(|_| (standard_normal(&mut rng) * 20.0) as f32).collect();
            for _ in 0..3 {
                let row: Vec<f32> = base
                    .iter()
                    .map(|&b| b + standard_normal(&mut rng) as f32)
                    .collect();
                set.push(&row);
                all.push(&row);
            }
            observations.push(set);
        }
        let vocab = train_vocabulary(&all, 4, seed).unwrap();
        let words_per_point: Vec<Vec<u32>> = observations
            .iter()
            .map(|s| s.rows().map(|r| vocab.assign(r)).collect())
            .collect();
        let mut train_words = Vec::new();
        for w in &words_per_point {
            train_words.extend_from_slice(w);
        }
        let (embedding, _) = train_embedding(&all, &train_words, &vocab, 6, seed ^ 1).unwrap();
        let obs: Vec<PointObservations> = observations
            .into_iter()
            .zip(words_per_point)
            .map(|(descriptors, words)| PointObservations { words, descriptors })
            .collect();
        compress_model(points, &obs, graph, vocab, embedding).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = tiny_model(5);
        let bytes = write_model(&model);
        let read = read_model(&bytes).unwrap();
        let bytes2 = write_model(&read);
        assert_eq!(bytes, bytes2, "write-read-write must be identical");
        assert_eq!(model.points, read.points);
        assert_eq!(model.entries(), read.entries());
        assert_eq!(model.graph, read.graph);
    }

    #[test]
    fn section_lengths_match_the_formulas() {
        let model = tiny_model(6);
        let bytes = write_model(&model);
        let k = model.vocab.word_count();
        let dim = model.vocab.dim();
        let bits = model.embedding.bits();
        let expected = 4 + 4 // magic + version
            + 8 + vocabulary_section_len(k, dim)
            + 8 + embedding_section_len(k, dim, bits)
            + 8 + points_section_len(model.points.len())
            + 8 + entries_section_len(model.entries().len(), bits)
            + 8 + visibility_section_len(model.graph.edge_count());
        assert_eq!(bytes.len() as u64, expected);
    }

    #[test]
    fn corrupted_containers_are_rejected() {
        let model = tiny_model(7);
        let bytes = write_model(&model);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(read_model(&bad_magic).is_err());

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        assert!(read_model(&bad_version).is_err());

        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_model(truncated).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(read_model(&trailing).is_err());
    }
}
