//! Visibility-wise match filtering: high-confidence matches vote for
//! database images through the point-image graph; matches observed in the
//! top-ranked images are retained, and borderline matches are promoted by
//! their co-visibility with confident ones.

use std::collections::HashMap;

use crate::feature_filter::MatchPool;
use crate::params::{PipelineParams, RunOptions};
use crate::scene::VisibilityGraph;

/// Minimum number of locally unique votes an image needs to be ranked.
pub const MIN_VOTES: usize = 3;

/// A ranked database image with its accumulated voting score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageVote {
    pub image_id: u32,
    pub score: f64,
    /// Locally unique confident votes received.
    pub vote_count: u32,
}

/// Votes database images with the confident matches.
///
/// Votes are locally unique: one vote per (image, query feature), keeping
/// the highest-scoring match (lowest point id on ties). Images with fewer
/// than [`MIN_VOTES`] votes are dropped. The score is the vote score sum
/// normalized by the square root of how many points the image observes.
/// Output is sorted by score descending, ties by lower image id.
pub fn vote_images(pool: &MatchPool, graph: &VisibilityGraph) -> Vec<ImageVote> {
    // best match index per (image, query feature)
    let mut best: Vec<HashMap<u32, usize>> = vec![HashMap::new(); graph.num_images()];
    for (idx, m) in pool.matches.iter().enumerate() {
        if !m.flags.fc {
            continue;
        }
        for &d in graph.images_of_point(m.point_id) {
            let slot = best[d as usize].entry(m.query_id).or_insert(idx);
            // The pool is ordered by (query, point): on equal scores the
            // incumbent already has the lower point id.
            if pool.matches[*slot].score < m.score {
                *slot = idx;
            }
        }
    }

    let mut votes = Vec::new();
    for (d, per_query) in best.iter().enumerate() {
        if per_query.len() < MIN_VOTES {
            continue;
        }
        let mut queries: Vec<u32> = per_query.keys().copied().collect();
        queries.sort_unstable();
        let sum: f64 = queries.iter().map(|q| pool.matches[per_query[q]].score).sum();
        let observed = graph.points_of_image(d as u32).len() as f64;
        votes.push(ImageVote {
            image_id: d as u32,
            score: sum / observed.sqrt(),
            vote_count: per_query.len() as u32,
        });
    }
    votes.sort_by(|a, b| {
        b.score.partial_cmp(&a.score).expect("finite vote score").then(a.image_id.cmp(&b.image_id))
    });
    votes
}

/// Indices of pool matches whose 3D point is observed by at least one of
/// the first `top_k` ranked images.
pub fn select_pool(
    pool: &MatchPool,
    ranking: &[ImageVote],
    top_k: usize,
    graph: &VisibilityGraph,
) -> Vec<u32> {
    let mut in_top = vec![false; graph.num_images()];
    for v in ranking.iter().take(top_k) {
        in_top[v.image_id as usize] = true;
    }
    pool.matches
        .iter()
        .enumerate()
        .filter(|(_, m)| graph.images_of_point(m.point_id).iter().any(|&d| in_top[d as usize]))
        .map(|(i, _)| i as u32)
        .collect()
}

/// Splits visibility-confident matches into feature-confident and not.
pub fn split_confidence(pool: &MatchPool, selected: &[u32], alpha: f64) -> (Vec<u32>, Vec<u32>) {
    let mut confident = Vec::new();
    let mut rest = Vec::new();
    for &i in selected {
        if pool.matches[i as usize].score >= alpha {
            confident.push(i);
        } else {
            rest.push(i);
        }
    }
    (confident, rest)
}

/// Promotes borderline matches by co-visibility: each top image where a
/// match's point is seen contributes a log bonus proportional to that
/// image's confident-to-borderline match ratio. Matches whose updated
/// score reaches the threshold are flagged as promoted.
///
/// Updated scores are written onto the pool; returns the promoted indices.
pub fn promote_matches(
    pool: &mut MatchPool,
    confident: &[u32],
    borderline: &[u32],
    top_images: &[u32],
    graph: &VisibilityGraph,
    alpha: f64,
) -> Vec<u32> {
    let slot_of: HashMap<u32, usize> =
        top_images.iter().enumerate().map(|(s, &d)| (d, s)).collect();
    let mut confident_count = vec![0u32; top_images.len()];
    let mut borderline_count = vec![0u32; top_images.len()];
    for &i in confident {
        for d in graph.images_of_point(pool.matches[i as usize].point_id) {
            if let Some(&s) = slot_of.get(d) {
                confident_count[s] += 1;
            }
        }
    }
    for &i in borderline {
        for d in graph.images_of_point(pool.matches[i as usize].point_id) {
            if let Some(&s) = slot_of.get(d) {
                borderline_count[s] += 1;
            }
        }
    }

    let mut promoted = Vec::new();
    for &i in borderline {
        let m = &mut pool.matches[i as usize];
        let mut bonus = 0.0;
        for d in graph.images_of_point(m.point_id) {
            if let Some(&s) = slot_of.get(d) {
                if borderline_count[s] > 0 {
                    let ratio = confident_count[s] as f64 / borderline_count[s] as f64;
                    bonus += 0.5 * alpha * (1.0 + ratio).ln();
                }
            }
        }
        m.promoted_score = m.score + bonus;
        if m.promoted_score >= alpha {
            m.flags.vfc_i = true;
            promoted.push(i);
        }
    }
    promoted
}

/// Result of the visibility stage.
#[derive(Debug, Clone, Default)]
pub struct VisibilityOutcome {
    pub ranking: Vec<ImageVote>,
    /// Matches feeding the auxiliary pose (confident plus promoted; under
    /// baseline voting, everything seen in the strict top images).
    pub selected: Vec<u32>,
    /// Confident subset of `selected`.
    pub confident: Vec<u32>,
    /// Promoted subset of `selected`.
    pub promoted: Vec<u32>,
    /// The relaxed visibility-wise match pool from the larger image set.
    pub pool: Vec<u32>,
}

/// Runs the whole visibility stage, updating flags and promoted scores on
/// the pool. An empty ranking yields an empty outcome; the caller reports
/// the query as not localizable.
pub fn run_visibility_filter(
    pool: &mut MatchPool,
    graph: &VisibilityGraph,
    params: &PipelineParams,
    options: &RunOptions,
) -> VisibilityOutcome {
    let ranking = vote_images(pool, graph);
    if ranking.is_empty() {
        return VisibilityOutcome::default();
    }

    let relaxed = select_pool(pool, &ranking, params.pool_top_k, graph);
    let strict = select_pool(pool, &ranking, params.vote_top_k, graph);
    for &i in &strict {
        pool.matches[i as usize].flags.vc = true;
    }

    if options.baseline_voting {
        return VisibilityOutcome {
            ranking,
            selected: strict.clone(),
            confident: strict,
            promoted: Vec::new(),
            pool: relaxed,
        };
    }

    let (confident, borderline) =
        split_confidence(pool, &strict, params.confidence_threshold);
    for &i in &confident {
        pool.matches[i as usize].flags.vfc = true;
    }
    for &i in &borderline {
        pool.matches[i as usize].flags.vnfc = true;
    }

    let top_images: Vec<u32> =
        ranking.iter().take(params.vote_top_k).map(|v| v.image_id).collect();
    let promoted = promote_matches(
        pool,
        &confident,
        &borderline,
        &top_images,
        graph,
        params.confidence_threshold,
    );

    let mut selected: Vec<u32> = confident.iter().chain(promoted.iter()).copied().collect();
    selected.sort_unstable();
    VisibilityOutcome { ranking, selected, confident, promoted, pool: relaxed }
}
