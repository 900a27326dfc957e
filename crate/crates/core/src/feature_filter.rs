//! Feature-wise match filtering: coarse Hamming candidate generation, the
//! bilateral ratio test, Gaussian distance weighting and the partition of
//! the scored pool into confident and ordinary matches.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{hamming_distance, Signature};
use crate::model::CompressedModel;
use crate::params::{PipelineParams, RunOptions};

/// An encoded local feature of the query image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryFeature {
    /// Index of the feature within its image.
    pub id: u32,
    /// Pixel position, origin top-left, inside `[0, w) x [0, h)`.
    pub pixel: [f64; 2],
    pub word_id: u32,
    pub signature: Signature,
}

/// A query image whose features are already encoded against the model's
/// vocabulary and embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryImage {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub features: Vec<QueryFeature>,
}

/// Confidence classes a match can acquire along the cascade.
///
/// Implications: feature+visibility confident requires both parents;
/// visibility-only excludes feature confidence; a promoted match is always
/// a visibility-only match first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchFlags {
    /// Feature-wisely confident: score at or above the threshold.
    pub fc: bool,
    /// Visibility-wisely confident: point seen in a top-ranked image.
    pub vc: bool,
    /// Both of the above.
    pub vfc: bool,
    /// Visibility-confident but not feature-confident.
    pub vnfc: bool,
    /// Promoted from vnfc by co-visibility with vfc matches.
    pub vfc_i: bool,
}

/// A candidate 2D-3D pairing with its scores along the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query_id: u32,
    pub point_id: u32,
    pub word_id: u32,
    /// Index of the model entry this match was formed against.
    pub entry_idx: u32,
    pub hamming: u32,
    /// Image-side ratio test value.
    pub t_image: f64,
    /// Model-side ratio test value.
    pub t_model: f64,
    /// Final feature-wise score.
    pub score: f64,
    /// Score after co-visibility promotion; equals `score` until the
    /// visibility stage updates it.
    pub promoted_score: f64,
    pub flags: MatchFlags,
}

/// The scored feature-wise match pool. Matches are sorted by
/// (query id, point id) and unique per pair.
#[derive(Debug, Clone, Default)]
pub struct MatchPool {
    pub matches: Vec<Match>,
}

impl MatchPool {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Indices of feature-wisely confident matches.
    pub fn confident_indices(&self) -> Vec<u32> {
        self.matches
            .iter()
            .enumerate()
            .filter(|(_, m)| m.flags.fc)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn confident_count(&self) -> usize {
        self.matches.iter().filter(|m| m.flags.fc).count()
    }
}

/// One raw candidate produced by the coarse Hamming search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub query_id: u32,
    pub entry_idx: u32,
    pub hamming: u32,
}

/// Candidates plus the neighborhood sums both ratio tests consume.
///
/// `query_sums[q]` aggregates all candidates of query feature `q` (the
/// model-side neighborhood); `entry_sums[e]` aggregates all candidates of
/// model entry `e` (the image-side neighborhood). Distances of zero enter
/// the sums clamped to one, mirroring their treatment in the ratio
/// denominators.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    query_sums: Vec<(u32, u64)>,
    entry_sums: HashMap<u32, (u32, u64)>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    /// (count, clamped distance sum) over the query feature's candidates.
    pub fn query_neighborhood(&self, query_id: u32) -> (u32, u64) {
        self.query_sums[query_id as usize]
    }

    /// (count, clamped distance sum) over the model entry's candidates.
    pub fn entry_neighborhood(&self, entry_idx: u32) -> (u32, u64) {
        self.entry_sums.get(&entry_idx).copied().unwrap_or((0, 0))
    }
}

fn clamp_h(h: u32) -> u64 {
    h.max(1) as u64
}

/// Coarse candidate search: every (feature, entry) pair sharing a visual
/// word with Hamming distance at most `tau`, annotated with the distance.
pub fn find_candidates(
    features: &[QueryFeature],
    model: &CompressedModel,
    tau: u32,
) -> CandidateSet {
    let mut set = CandidateSet {
        candidates: Vec::new(),
        query_sums: vec![(0, 0); features.len()],
        entry_sums: HashMap::new(),
    };
    for feature in features {
        let (base, entries) = model.entries_of_word(feature.word_id);
        for (i, entry) in entries.iter().enumerate() {
            let h = hamming_distance(&feature.signature, &entry.signature);
            if h <= tau {
                let entry_idx = base + i as u32;
                set.candidates.push(Candidate { query_id: feature.id, entry_idx, hamming: h });
                let q = &mut set.query_sums[feature.id as usize];
                q.0 += 1;
                q.1 += clamp_h(h);
                let e = set.entry_sums.entry(entry_idx).or_insert((0, 0));
                e.0 += 1;
                e.1 += clamp_h(h);
            }
        }
    }
    set
}

/// Piecewise Gaussian distance weighting.
///
/// Returns `(sigma/h)^2 * exp(-(h/sigma)^2)` for `0.5*sigma < h <= tau`,
/// the plateau value `4*exp(-0.25)` for `0 <= h <= 0.5*sigma`, and zero
/// beyond `tau`. The two branches agree at `h = 0.5*sigma`.
pub fn gaussian_weight(h: u32, sigma: f64, tau: u32) -> f64 {
    let hf = h as f64;
    if h > tau {
        0.0
    } else if hf <= 0.5 * sigma {
        4.0 * (-0.25f64).exp()
    } else {
        let r = sigma / hf;
        r * r * (-(hf / sigma) * (hf / sigma)).exp()
    }
}

/// Variant with an exclusive lower bound on the plateau: an exact
/// signature match (distance zero) weighs zero. Kept for fidelity
/// experiments; the pipeline uses [`gaussian_weight`].
pub fn gaussian_weight_zero_excluded(h: u32, sigma: f64, tau: u32) -> f64 {
    if h == 0 {
        0.0
    } else {
        gaussian_weight(h, sigma, tau)
    }
}

/// Output of the bilateral ratio test for one match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralScores {
    /// Image-side ratio: mean neighborhood distance over the match's own,
    /// additionally penalized by the neighborhood size.
    pub t_image: f64,
    /// Model-side ratio: mean neighborhood distance over the match's own.
    pub t_model: f64,
    /// `t_model` when `t_image` passes the floor, zero otherwise.
    pub gated: f64,
}

/// Evaluates the bilateral ratio test from raw neighborhood distances.
///
/// `point_side` are the distances of all query features matching the same
/// model entry (the match's own distance included); `query_side` those of
/// all entries matching the same query feature. Zero distances are clamped
/// to one so that exact matches keep the largest possible ratios.
pub fn bilateral_ratio_test(
    hamming: u32,
    point_side: &[u32],
    query_side: &[u32],
    phi: f64,
) -> BilateralScores {
    assert!(!point_side.is_empty() && !query_side.is_empty());
    let h = clamp_h(hamming) as f64;
    let point_sum: u64 = point_side.iter().map(|&d| clamp_h(d)).sum();
    let query_sum: u64 = query_side.iter().map(|&d| clamp_h(d)).sum();
    let np = point_side.len() as f64;
    let nq = query_side.len() as f64;
    let t_image = point_sum as f64 / (h * np * np);
    let t_model = query_sum as f64 / (h * nq);
    let gated = if t_image >= phi { t_model } else { 0.0 };
    BilateralScores { t_image, t_model, gated }
}

fn scores_from_sums(cands: &CandidateSet, c: &Candidate, phi: f64) -> BilateralScores {
    let h = clamp_h(c.hamming) as f64;
    let (np, point_sum) = cands.entry_neighborhood(c.entry_idx);
    let (nq, query_sum) = cands.query_neighborhood(c.query_id);
    let t_image = point_sum as f64 / (h * np as f64 * np as f64);
    let t_model = query_sum as f64 / (h * nq as f64);
    let gated = if t_image >= phi { t_model } else { 0.0 };
    BilateralScores { t_image, t_model, gated }
}

/// Scores every candidate and keeps the pool of positively scored matches;
/// matches at or above the confidence threshold are flagged.
///
/// Under baseline voting the ratio test is skipped: the score is the
/// Gaussian weight alone under the baseline Hamming cutoff, and every
/// retained match counts as confident for voting purposes.
pub fn score_and_partition(
    cands: &CandidateSet,
    model: &CompressedModel,
    params: &PipelineParams,
    options: &RunOptions,
) -> MatchPool {
    let mut matches = Vec::new();
    for c in &cands.candidates {
        let entry = model.entry(c.entry_idx);
        let m = if options.baseline_voting {
            let w = gaussian_weight(c.hamming, params.gaussian_sigma, options.baseline_threshold);
            if w <= 0.0 {
                continue;
            }
            Match {
                query_id: c.query_id,
                point_id: entry.point_id,
                word_id: entry.word_id,
                entry_idx: c.entry_idx,
                hamming: c.hamming,
                t_image: 0.0,
                t_model: 0.0,
                score: w,
                promoted_score: w,
                flags: MatchFlags { fc: true, ..Default::default() },
            }
        } else {
            let scores = scores_from_sums(cands, c, params.ratio_test_floor);
            let w = gaussian_weight(c.hamming, params.gaussian_sigma, params.hamming_threshold);
            let score = scores.gated * w;
            if score <= 0.0 {
                continue;
            }
            Match {
                query_id: c.query_id,
                point_id: entry.point_id,
                word_id: entry.word_id,
                entry_idx: c.entry_idx,
                hamming: c.hamming,
                t_image: scores.t_image,
                t_model: scores.t_model,
                score,
                promoted_score: score,
                flags: MatchFlags {
                    fc: score >= params.confidence_threshold,
                    ..Default::default()
                },
            }
        };
        matches.push(m);
    }
    matches.sort_by_key(|m| (m.query_id, m.point_id));
    MatchPool { matches }
}
