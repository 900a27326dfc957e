//! Memory accounting for the model container, against the uncompressed
//! integer-mean baseline.

use serde::{Deserialize, Serialize};

use crate::container;
use crate::model::CompressedModel;

/// Bytes an integer-mean descriptor would occupy per entry instead of the
/// binary signature.
pub const BASELINE_DESCRIPTOR_BYTES: u64 = 128;
/// Point id + word id per entry.
const ENTRY_KEY_BYTES: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub points: usize,
    pub entries: usize,
    pub edges: usize,
    pub word_count: usize,
    pub dim: usize,
    pub bits: usize,
    /// Signature payload alone: one `bits/8`-byte signature per entry.
    pub signature_payload_bytes: u64,
    /// Entry table: ids plus signature per entry.
    pub entry_table_bytes: u64,
    /// The same table with a 128-byte integer mean instead of a signature.
    pub baseline_entry_table_bytes: u64,
    /// Container section sizes.
    pub vocabulary_bytes: u64,
    pub embedding_bytes: u64,
    pub points_bytes: u64,
    pub visibility_bytes: u64,
    pub total_container_bytes: u64,
    /// baseline_entry_table_bytes / entry_table_bytes
    pub entry_reduction_factor: f64,
}

/// Computes the byte budget of a model, section by section, using the
/// same layout arithmetic as the container writer.
pub fn memory_report(model: &CompressedModel) -> MemoryReport {
    let entries = model.entries().len();
    let bits = model.embedding.bits();
    let k = model.vocab.word_count();
    let dim = model.vocab.dim();
    let sig_bytes = container::signature_bytes(bits) as u64;

    let signature_payload_bytes = entries as u64 * sig_bytes;
    let entry_table_bytes = entries as u64 * (ENTRY_KEY_BYTES + sig_bytes);
    let baseline_entry_table_bytes =
        entries as u64 * (ENTRY_KEY_BYTES + BASELINE_DESCRIPTOR_BYTES);

    let vocabulary_bytes = container::vocabulary_section_len(k, dim);
    let embedding_bytes = container::embedding_section_len(k, dim, bits);
    let points_bytes = container::points_section_len(model.points.len());
    let entries_section = container::entries_section_len(entries, bits);
    let visibility_bytes = container::visibility_section_len(model.graph.edge_count());
    // magic + version + five section length prefixes
    let total_container_bytes = 8
        + 5 * 8
        + vocabulary_bytes
        + embedding_bytes
        + points_bytes
        + entries_section
        + visibility_bytes;

    MemoryReport {
        points: model.points.len(),
        entries,
        edges: model.graph.edge_count(),
        word_count: k,
        dim,
        bits,
        signature_payload_bytes,
        entry_table_bytes,
        baseline_entry_table_bytes,
        vocabulary_bytes,
        embedding_bytes,
        points_bytes,
        visibility_bytes,
        total_container_bytes,
        entry_reduction_factor: if entry_table_bytes == 0 {
            0.0
        } else {
            baseline_entry_table_bytes as f64 / entry_table_bytes as f64
        },
    }
}

impl MemoryReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model: {} points, {} entries, {} visibility edges, {} words, dim {}, {} bits\n",
            self.points, self.entries, self.edges, self.word_count, self.dim, self.bits
        ));
        out.push_str(&format!(
            "signature payload:     {:>12} bytes ({} per entry)\n",
            self.signature_payload_bytes,
            container::signature_bytes(self.bits)
        ));
        out.push_str(&format!("entry table:           {:>12} bytes\n", self.entry_table_bytes));
        out.push_str(&format!(
            "integer-mean baseline: {:>12} bytes\n",
            self.baseline_entry_table_bytes
        ));
        out.push_str(&format!("entry reduction:       {:.2}x\n", self.entry_reduction_factor));
        out.push_str(&format!("vocabulary section:    {:>12} bytes\n", self.vocabulary_bytes));
        out.push_str(&format!("embedding section:     {:>12} bytes\n", self.embedding_bytes));
        out.push_str(&format!("points section:        {:>12} bytes\n", self.points_bytes));
        out.push_str(&format!("visibility section:    {:>12} bytes\n", self.visibility_bytes));
        out.push_str(&format!("container total:       {:>12} bytes\n", self.total_container_bytes));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_entry_arithmetic() {
        // 1M entries at 64 bits: 8 MB of signatures, 8.5x table reduction
        let entries = 1_000_000u64;
        let sig = entries * 8;
        assert_eq!(sig, 8_000_000);
        let table = entries * (8 + 8);
        let baseline = entries * (8 + 128);
        assert_eq!(baseline as f64 / table as f64, 8.5);
        // 128 bits: 16 bytes per signature
        assert_eq!(container::signature_bytes(128), 16);
    }
}
