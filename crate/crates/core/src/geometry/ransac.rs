//! The two RANSAC stages: the auxiliary pose with median-focal hypothesis
//! selection, reprojection filtering of the relaxed pool, and the final
//! fixed-focal pose.

use nalgebra::Vector2;
use rand::Rng;

use super::{
    are_collinear, p3p_solve, p4p_solve, reprojection_error, CameraPose, Correspondence,
    PoseHypothesis,
};
use crate::params::PipelineParams;
use crate::rng::derive_rng;

/// Hypothesis-store capacity for the auxiliary stage.
const STORE_CAP: usize = 10;
/// Stored hypotheses must exceed this fraction of the best inlier count.
const STORE_FRACTION: f64 = 0.7;
/// Fewest auxiliary inliers that still count as a usable pose.
const MIN_AUX_INLIERS: usize = 4;

#[derive(Debug, Clone)]
struct StoredHypothesis {
    pose: CameraPose,
    inliers: usize,
    seq: u32,
}

/// The auxiliary camera pose and the statistics behind its selection.
#[derive(Debug, Clone)]
pub struct AuxiliaryEstimate {
    pub pose: CameraPose,
    /// Largest inlier count seen over all hypotheses.
    pub max_inliers: usize,
    /// Inlier count of the selected hypothesis.
    pub selected_inliers: usize,
    /// Hypotheses retained in the store at the end.
    pub stored: usize,
}

fn count_inliers(corrs: &[Correspondence], pose: &CameraPose, threshold: f64) -> usize {
    corrs.iter().filter(|c| reprojection_error(pose, c.world, c.pixel) <= threshold).count()
}

fn admit(store: &mut Vec<StoredHypothesis>, max_inliers: &mut usize, hyp: StoredHypothesis) {
    if hyp.inliers > *max_inliers {
        *max_inliers = hyp.inliers;
        store.retain(|h| h.inliers as f64 > STORE_FRACTION * *max_inliers as f64);
    }
    if hyp.inliers as f64 > STORE_FRACTION * *max_inliers as f64 {
        store.push(hyp);
        if store.len() > STORE_CAP {
            let worst = store
                .iter()
                .enumerate()
                .min_by_key(|(_, h)| (h.inliers, h.seq))
                .map(|(i, _)| i)
                .expect("nonempty store");
            store.remove(worst);
        }
    }
}

/// Picks the stored hypothesis whose focal length is the median of stored
/// focals (lower middle on even counts). Several hypotheses sharing the
/// median focal resolve by inlier count, then by earliest generation.
fn select_median_focal(store: &[StoredHypothesis]) -> &StoredHypothesis {
    let mut order: Vec<&StoredHypothesis> = store.iter().collect();
    order.sort_by(|a, b| {
        a.pose
            .focal
            .partial_cmp(&b.pose.focal)
            .expect("finite focal")
            .then(a.seq.cmp(&b.seq))
    });
    let median_focal = order[(order.len() - 1) / 2].pose.focal;
    store
        .iter()
        .filter(|h| h.pose.focal == median_focal)
        .max_by(|a, b| a.inliers.cmp(&b.inliers).then(b.seq.cmp(&a.seq)))
        .expect("median hypothesis exists")
}

/// RANSAC over the spatially selected matches.
///
/// Unknown focal samples four correspondences through the focal-estimating
/// solver; a known focal samples three through the fixed-focal solver.
/// Inliers are counted at the final pixel threshold. The top hypotheses
/// (more inliers than 0.7 of the best, at most ten) are stored, and the
/// returned pose is the median-focal one — or the plain best-inlier
/// hypothesis when `median_focal` is off. `None` means not localizable.
pub fn estimate_auxiliary_pose(
    corrs: &[Correspondence],
    params: &PipelineParams,
    principal_point: Vector2<f64>,
    median_focal: bool,
    seed: u64,
) -> Option<AuxiliaryEstimate> {
    let minimal = if params.known_focal.is_some() { 3 } else { 4 };
    if corrs.len() < minimal {
        return None;
    }
    let mut rng = derive_rng(seed, 0x6175_78, 0); // auxiliary stream

    let mut store: Vec<StoredHypothesis> = Vec::new();
    let mut max_inliers = 0usize;
    let mut seq = 0u32;

    for _ in 0..params.aux_iterations {
        let sample = rand::seq::index::sample(&mut rng, corrs.len(), minimal);
        let picked: Vec<&Correspondence> = sample.iter().map(|i| &corrs[i]).collect();

        let candidates: Vec<CameraPose> = if let Some(focal) = params.known_focal {
            if are_collinear(picked[0].world, picked[1].world, picked[2].world) {
                continue;
            }
            p3p_solve(
                &[picked[0].world, picked[1].world, picked[2].world],
                &[picked[0].pixel, picked[1].pixel, picked[2].pixel],
                focal,
                principal_point,
            )
        } else {
            let world = [picked[0].world, picked[1].world, picked[2].world, picked[3].world];
            let pixels = [picked[0].pixel, picked[1].pixel, picked[2].pixel, picked[3].pixel];
            p4p_solve(&world, &pixels, principal_point)
        };

        for pose in candidates {
            let inliers = count_inliers(corrs, &pose, params.final_threshold_px);
            admit(&mut store, &mut max_inliers, StoredHypothesis { pose, inliers, seq });
            seq += 1;
        }
    }

    if max_inliers < MIN_AUX_INLIERS || store.is_empty() {
        return None;
    }

    let chosen = if median_focal {
        select_median_focal(&store)
    } else {
        store
            .iter()
            .max_by(|a, b| a.inliers.cmp(&b.inliers).then(b.seq.cmp(&a.seq)))
            .expect("nonempty store")
    };

    Some(AuxiliaryEstimate {
        pose: chosen.pose,
        max_inliers,
        selected_inliers: chosen.inliers,
        stored: store.len(),
    })
}

/// Keeps exactly the pool matches that reproject within `theta` pixels
/// under the auxiliary pose.
pub fn geometry_filter(
    pool: &[Correspondence],
    pose: &CameraPose,
    theta: f64,
) -> Vec<Correspondence> {
    pool.iter()
        .filter(|c| reprojection_error(pose, c.world, c.pixel) <= theta)
        .copied()
        .collect()
}

/// Final fixed-focal RANSAC over the recovered matches.
///
/// Samples are three matches with pairwise distinct query features (the
/// recovered pool may pair one feature with several points). Returns the
/// best hypothesis by inlier count, first found on ties; the caller
/// decides whether it clears the localization floor.
pub fn estimate_final_pose(
    corrs: &[Correspondence],
    focal: f64,
    principal_point: Vector2<f64>,
    params: &PipelineParams,
    seed: u64,
) -> Option<PoseHypothesis> {
    if corrs.len() < 3 {
        return None;
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    {
        let mut ids: Vec<u32> = corrs.iter().map(|c| c.query_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 3 {
            return None;
        }
        let slot: std::collections::HashMap<u32, usize> =
            ids.iter().enumerate().map(|(s, &q)| (q, s)).collect();
        groups.resize(ids.len(), Vec::new());
        for (i, c) in corrs.iter().enumerate() {
            groups[slot[&c.query_id]].push(i);
        }
    }

    let mut rng = derive_rng(seed, 0x6669_6e, 0); // final stream
    let mut best: Option<PoseHypothesis> = None;

    for _ in 0..params.final_iterations {
        let picked_groups = rand::seq::index::sample(&mut rng, groups.len(), 3);
        let mut idx = [0usize; 3];
        for (slot, g) in picked_groups.iter().enumerate() {
            let members = &groups[g];
            idx[slot] = members[rng.gen_range(0..members.len())];
        }
        let (a, b, c) = (&corrs[idx[0]], &corrs[idx[1]], &corrs[idx[2]]);
        if are_collinear(a.world, b.world, c.world) {
            continue;
        }
        for pose in p3p_solve(
            &[a.world, b.world, c.world],
            &[a.pixel, b.pixel, c.pixel],
            focal,
            principal_point,
        ) {
            let inlier_count = count_inliers(corrs, &pose, params.final_threshold_px);
            if best.as_ref().map_or(true, |h| inlier_count > h.inlier_count) {
                let inlier_ids = corrs
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| {
                        reprojection_error(&pose, m.world, m.pixel) <= params.final_threshold_px
                    })
                    .map(|(i, _)| i as u32)
                    .collect();
                best = Some(PoseHypothesis { pose, inlier_count, inlier_ids });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, standard_normal};
    use nalgebra::{Matrix3, Vector3};
    use rand::Rng;

    fn scene_pose(focal: f64) -> CameraPose {
        CameraPose {
            rotation: nalgebra::Rotation3::from_euler_angles(0.05, -0.3, 0.8).into_inner(),
            center: Vector3::new(1.0, -2.0, 0.5),
            focal,
            principal_point: Vector2::new(512.0, 384.0),
        }
    }

    fn exact_correspondences(pose: &CameraPose, n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = derive_rng(seed, 7, 0);
        let mut out = Vec::new();
        while out.len() < n {
            let cam = Vector3::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(3.0..15.0),
            );
            let w = pose.rotation.transpose() * cam + pose.center;
            if let Some(px) = pose.project(w) {
                out.push(Correspondence {
                    query_id: out.len() as u32,
                    point_id: out.len() as u32,
                    pixel: px,
                    world: w,
                });
            }
        }
        out
    }

    fn params_with_iters(aux: u32, fin: u32) -> PipelineParams {
        PipelineParams { aux_iterations: aux, final_iterations: fin, ..Default::default() }
    }

    #[test]
    fn all_inlier_set_recovers_center_exactly() {
        let pose = scene_pose(1150.0);
        let corrs = exact_correspondences(&pose, 24, 3);
        let est = estimate_auxiliary_pose(
            &corrs,
            &params_with_iters(60, 100),
            pose.principal_point,
            true,
            99,
        )
        .expect("localizable");
        assert!(
            (est.pose.center - pose.center).norm() < 1e-6,
            "center error {}",
            (est.pose.center - pose.center).norm()
        );
        assert_eq!(est.max_inliers, corrs.len());
    }

    #[test]
    fn known_focal_uses_three_point_samples() {
        let pose = scene_pose(1000.0);
        let corrs = exact_correspondences(&pose, 10, 5);
        let params = PipelineParams {
            known_focal: Some(1000.0),
            aux_iterations: 40,
            ..Default::default()
        };
        let est =
            estimate_auxiliary_pose(&corrs, &params, pose.principal_point, true, 1).unwrap();
        assert_eq!(est.pose.focal, 1000.0);
        assert!((est.pose.center - pose.center).norm() < 1e-6);
    }

    #[test]
    fn too_few_matches_is_failure() {
        let pose = scene_pose(1000.0);
        let corrs = exact_correspondences(&pose, 3, 5);
        assert!(estimate_auxiliary_pose(
            &corrs,
            &params_with_iters(10, 10),
            pose.principal_point,
            true,
            1
        )
        .is_none());
    }

    #[test]
    fn median_focal_selection_on_fixed_store() {
        let mk = |focal: f64, inliers: usize, seq: u32| StoredHypothesis {
            pose: CameraPose {
                rotation: Matrix3::identity(),
                center: Vector3::zeros(),
                focal,
                principal_point: Vector2::zeros(),
            },
            inliers,
            seq,
        };
        let store = vec![
            mk(2500.0, 30, 0),
            mk(1000.0, 25, 1),
            mk(980.0, 24, 2),
            mk(1010.0, 23, 3),
            mk(1005.0, 22, 4),
        ];
        let chosen = select_median_focal(&store);
        assert_eq!(chosen.pose.focal, 1005.0);

        // even count: lower middle
        let store4 = vec![mk(980.0, 5, 0), mk(1000.0, 6, 1), mk(1010.0, 7, 2), mk(2500.0, 8, 3)];
        assert_eq!(select_median_focal(&store4).pose.focal, 1000.0);

        // constant focal degenerates to max inliers, first found
        let flat = vec![mk(1000.0, 5, 0), mk(1000.0, 9, 1), mk(1000.0, 9, 2)];
        let c = select_median_focal(&flat);
        assert_eq!((c.inliers, c.seq), (9, 1));
    }

    #[test]
    fn one_wild_focal_does_not_sway_the_median() {
        let mk = |focal: f64, inliers: usize, seq: u32| StoredHypothesis {
            pose: CameraPose {
                rotation: Matrix3::identity(),
                center: Vector3::zeros(),
                focal,
                principal_point: Vector2::zeros(),
            },
            inliers,
            seq,
        };
        let store = vec![mk(995.0, 10, 0), mk(1000.0, 11, 1), mk(1005.0, 12, 2)];
        let baseline = select_median_focal(&store).pose.focal;
        let mut with_outlier = store.clone();
        with_outlier.push(mk(10_000.0, 30, 3));
        // median moves by at most one rank; never to the wild value
        let chosen = select_median_focal(&with_outlier).pose.focal;
        assert_ne!(chosen, 10_000.0);
        assert!((chosen - baseline).abs() <= 5.0);
    }

    #[test]
    fn store_keeps_top_hypotheses_above_fraction() {
        let mk = |inliers: usize, seq: u32| StoredHypothesis {
            pose: CameraPose {
                rotation: Matrix3::identity(),
                center: Vector3::zeros(),
                focal: 1000.0,
                principal_point: Vector2::zeros(),
            },
            inliers,
            seq,
        };
        let mut store = Vec::new();
        let mut max = 0usize;
        admit(&mut store, &mut max, mk(10, 0));
        admit(&mut store, &mut max, mk(6, 1));
        assert_eq!(store.len(), 1, "6 <= 0.7*10 must not be stored");
        admit(&mut store, &mut max, mk(8, 2));
        assert_eq!(store.len(), 2);
        // raising the bar prunes older weak entries
        admit(&mut store, &mut max, mk(20, 3));
        assert_eq!(store.iter().filter(|h| h.inliers as f64 > 14.0).count(), store.len());
        // capacity cap
        for s in 4..40 {
            admit(&mut store, &mut max, mk(19, s));
        }
        assert!(store.len() <= STORE_CAP);
    }

    #[test]
    fn geometry_filter_thresholds_exactly() {
        let pose = scene_pose(1000.0);
        let mut corrs = exact_correspondences(&pose, 12, 8);
        // perturb half the pixels by 12px, keep half within 3px
        for (i, c) in corrs.iter_mut().enumerate() {
            let delta = if i % 2 == 0 { 3.0 } else { 12.0 };
            c.pixel.x += delta;
        }
        let kept = geometry_filter(&corrs, &pose, 10.0);
        assert_eq!(kept.len(), 6);
        for c in &kept {
            assert!(reprojection_error(&pose, c.world, c.pixel) <= 10.0);
        }
    }

    #[test]
    fn final_pose_exact_on_clean_matches() {
        let pose = scene_pose(1400.0);
        let corrs = exact_correspondences(&pose, 20, 13);
        let hyp = estimate_final_pose(
            &corrs,
            pose.focal,
            pose.principal_point,
            &params_with_iters(10, 200),
            5,
        )
        .unwrap();
        assert_eq!(hyp.inlier_count, corrs.len());
        assert!((hyp.pose.center - pose.center).norm() < 1e-6);
        assert_eq!(hyp.inlier_ids.len(), hyp.inlier_count);
    }

    #[test]
    fn final_pose_requires_three_distinct_query_ids() {
        let pose = scene_pose(1000.0);
        let mut corrs = exact_correspondences(&pose, 6, 2);
        for c in corrs.iter_mut() {
            c.query_id = c.query_id % 2; // only two distinct features
        }
        assert!(estimate_final_pose(
            &corrs,
            pose.focal,
            pose.principal_point,
            &params_with_iters(10, 50),
            5
        )
        .is_none());
        assert!(estimate_final_pose(
            &corrs[..2],
            pose.focal,
            pose.principal_point,
            &params_with_iters(10, 50),
            5
        )
        .is_none());
    }

    #[test]
    fn ransac_is_reproducible_under_fixed_seed() {
        let pose = scene_pose(1100.0);
        let mut corrs = exact_correspondences(&pose, 30, 21);
        // contaminate with outliers
        let mut rng = derive_rng(77, 1, 0);
        for c in corrs.iter_mut().take(10) {
            c.pixel.x += 30.0 + 50.0 * standard_normal(&mut rng).abs();
        }
        let run = |seed: u64| {
            estimate_auxiliary_pose(
                &corrs,
                &params_with_iters(80, 10),
                pose.principal_point,
                true,
                seed,
            )
            .map(|e| (e.pose.center, e.pose.focal, e.max_inliers))
        };
        assert_eq!(run(5), run(5));
        let fin = |seed: u64| {
            estimate_final_pose(
                &corrs,
                pose.focal,
                pose.principal_point,
                &params_with_iters(10, 120),
                seed,
            )
            .map(|h| (h.pose.center, h.inlier_count, h.inlier_ids))
        };
        assert_eq!(fin(9), fin(9));
    }
}
