//! End-to-end query localization: composition of the three filtering
//! stages and the two pose estimations, with per-stage counts and timings.

use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::encode_query;
use crate::feature_filter::{find_candidates, score_and_partition, MatchPool, QueryFeature, QueryImage};
use crate::geometry::{
    estimate_auxiliary_pose, estimate_final_pose, geometry_filter, select_by_score,
    spatial_reconfigure, CameraPose, Correspondence,
};
use crate::io::RawQueryImage;
use crate::model::CompressedModel;
use crate::params::{PipelineParams, RunOptions};
use crate::rng::mix;
use crate::visibility::run_visibility_filter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Localized,
    Failed,
}

/// Stage at which a failed query gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Feature,
    Visibility,
    Selection,
    AuxiliaryPose,
    GeometryFilter,
    FinalPose,
}

/// Match-set sizes after each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    /// Scored feature-wise pool.
    pub matches: usize,
    /// Feature-wisely confident subset.
    pub confident: usize,
    /// Selected for the auxiliary pose (after spatial selection).
    pub selected: usize,
    /// Relaxed visibility-wise pool.
    pub pool: usize,
    /// Pool matches recovered by the auxiliary pose.
    pub recovered: usize,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub feature_ms: f64,
    pub visibility_ms: f64,
    pub selection_ms: f64,
    pub aux_ms: f64,
    pub filter_ms: f64,
    pub final_ms: f64,
    pub total_ms: f64,
}

/// The evaluation record of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub query_id: u32,
    pub status: Status,
    pub failed_stage: Option<Stage>,
    pub pose: Option<CameraPose>,
    pub inlier_count: usize,
    pub counts: StageCounts,
    pub timings: StageTimings,
}

impl LocalizationResult {
    fn failed(query_id: u32, stage: Stage, counts: StageCounts, timings: StageTimings) -> Self {
        Self {
            query_id,
            status: Status::Failed,
            failed_stage: Some(stage),
            pose: None,
            inlier_count: 0,
            counts,
            timings,
        }
    }

    pub fn is_localized(&self) -> bool {
        self.status == Status::Localized
    }
}

/// Encodes a raw query image (pixels + descriptors) against the model's
/// vocabulary and embedding.
pub fn encode_query_image(raw: &RawQueryImage, model: &CompressedModel) -> QueryImage {
    let features = raw
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (word_id, signature) = encode_query(&f.descriptor, &model.vocab, &model.embedding);
            QueryFeature { id: i as u32, pixel: [f.x, f.y], word_id, signature }
        })
        .collect();
    QueryImage { id: raw.id, width: raw.width, height: raw.height, features }
}

fn correspondences(pool: &MatchPool, indices: &[u32], query: &QueryImage, model: &CompressedModel) -> Vec<Correspondence> {
    indices
        .iter()
        .map(|&i| {
            let m = &pool.matches[i as usize];
            let pixel = query.features[m.query_id as usize].pixel;
            let world = model.point_position(m.point_id);
            Correspondence {
                query_id: m.query_id,
                point_id: m.point_id,
                pixel: Vector2::new(pixel[0], pixel[1]),
                world: Vector3::new(world[0], world[1], world[2]),
            }
        })
        .collect()
}

fn ms(from: Instant) -> f64 {
    from.elapsed().as_secs_f64() * 1e3
}

/// Localizes a single query image against the model.
///
/// The stages run in order: candidate search and scoring, visibility
/// filtering, spatial selection, auxiliary pose, pool recovery, final
/// pose. Any stage ending with nothing to work on fails the query with
/// that stage recorded. Deterministic in `seed`.
pub fn localize(
    query: &QueryImage,
    model: &CompressedModel,
    params: &PipelineParams,
    options: &RunOptions,
    seed: u64,
) -> LocalizationResult {
    let started = Instant::now();
    let mut counts = StageCounts::default();
    let mut timings = StageTimings::default();
    let query_seed = mix(seed ^ mix(query.id as u64 + 1));

    // feature-wise
    let stage = Instant::now();
    let candidates = find_candidates(&query.features, model, params.hamming_threshold);
    let mut pool = score_and_partition(&candidates, model, params, options);
    counts.matches = pool.len();
    counts.confident = pool.confident_count();
    timings.feature_ms = ms(stage);
    if pool.is_empty() {
        timings.total_ms = ms(started);
        return LocalizationResult::failed(query.id, Stage::Feature, counts, timings);
    }

    // visibility-wise
    let stage = Instant::now();
    let outcome = run_visibility_filter(&mut pool, &model.graph, params, options);
    counts.pool = outcome.pool.len();
    timings.visibility_ms = ms(stage);
    if outcome.selected.is_empty() || outcome.pool.is_empty() {
        timings.total_ms = ms(started);
        return LocalizationResult::failed(query.id, Stage::Visibility, counts, timings);
    }

    // spatial selection
    let stage = Instant::now();
    let selected = if options.spatial_reconfiguration {
        spatial_reconfigure(
            &pool,
            &outcome.confident,
            &outcome.promoted,
            &query.features,
            (query.width, query.height),
            params.selection_budget,
            params.promoted_cap_ratio,
        )
    } else {
        let shaped = spatial_reconfigure(
            &pool,
            &outcome.confident,
            &outcome.promoted,
            &query.features,
            (query.width, query.height),
            params.selection_budget,
            params.promoted_cap_ratio,
        );
        let n_promoted =
            shaped.iter().filter(|&&i| pool.matches[i as usize].flags.vfc_i).count();
        select_by_score(
            &pool,
            &outcome.confident,
            &outcome.promoted,
            shaped.len() - n_promoted,
            n_promoted,
        )
    };
    counts.selected = selected.len();
    timings.selection_ms = ms(stage);
    if selected.is_empty() {
        timings.total_ms = ms(started);
        return LocalizationResult::failed(query.id, Stage::Selection, counts, timings);
    }

    let principal_point = Vector2::new(query.width as f64 * 0.5, query.height as f64 * 0.5);
    let selected_corrs = correspondences(&pool, &selected, query, model);
    let pool_corrs = correspondences(&pool, &outcome.pool, query, model);

    // auxiliary pose
    let stage = Instant::now();
    let aux = estimate_auxiliary_pose(
        &selected_corrs,
        params,
        principal_point,
        options.median_focal_selection,
        mix(query_seed ^ 0xa0),
    );
    timings.aux_ms = ms(stage);
    let Some(aux) = aux else {
        timings.total_ms = ms(started);
        return LocalizationResult::failed(query.id, Stage::AuxiliaryPose, counts, timings);
    };

    // geometry filter over the relaxed pool
    let stage = Instant::now();
    let recovered = geometry_filter(&pool_corrs, &aux.pose, params.filter_threshold_px);
    counts.recovered = recovered.len();
    timings.filter_ms = ms(stage);
    if recovered.len() < 3 {
        timings.total_ms = ms(started);
        return LocalizationResult::failed(query.id, Stage::GeometryFilter, counts, timings);
    }

    // final pose at the principal focal length
    let stage = Instant::now();
    let focal = params.known_focal.unwrap_or(aux.pose.focal);
    let best = estimate_final_pose(
        &recovered,
        focal,
        principal_point,
        params,
        mix(query_seed ^ 0xf1),
    );
    timings.final_ms = ms(stage);
    timings.total_ms = ms(started);
    let Some(best) = best else {
        return LocalizationResult::failed(query.id, Stage::FinalPose, counts, timings);
    };

    if best.inlier_count >= params.min_inliers {
        LocalizationResult {
            query_id: query.id,
            status: Status::Localized,
            failed_stage: None,
            pose: Some(best.pose),
            inlier_count: best.inlier_count,
            counts,
            timings,
        }
    } else {
        let mut r =
            LocalizationResult::failed(query.id, Stage::FinalPose, counts, timings);
        // keep the sub-threshold evidence for diagnostics
        r.inlier_count = best.inlier_count;
        r
    }
}

/// Localizes queries across the rayon worker pool; results come back in
/// input order, so the output is independent of scheduling.
pub fn localize_all(
    queries: &[QueryImage],
    model: &CompressedModel,
    params: &PipelineParams,
    options: &RunOptions,
    seed: u64,
) -> Vec<LocalizationResult> {
    queries
        .par_iter()
        .map(|q| localize(q, model, params, options, seed))
        .collect()
}
