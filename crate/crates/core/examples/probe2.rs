// deep instrumentation of one ablation-scene seed
use cpfl_core::feature_filter::find_candidates;
use cpfl_core::geometry::{estimate_auxiliary_pose, geometry_filter, spatial_reconfigure, Correspondence};
use cpfl_core::params::{PipelineParams, RunOptions};
use cpfl_core::pipeline::{encode_query_image, localize};
use cpfl_core::synth::{build_model, generate_scene, ModelBuildOptions, SyntheticSceneConfig};
use cpfl_core::visibility::run_visibility_filter;
use cpfl_core::feature_filter::score_and_partition;
use nalgebra::{Vector2, Vector3};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1003);
    let config = SyntheticSceneConfig {
        num_points: 1600,
        num_db_images: 24,
        num_queries: 4,
        descriptor_dim: 32,
        cluster_count: 800,
        descriptor_noise_sigma: 3.0,
        pixel_noise_sigma: 1.0,
        outlier_match_rate: 0.2,
        spatial_clustering: 0.8,
        image_size: (1024, 768),
        focal_range: (1000.0, 1400.0),
        seed,
    };
    let scene = generate_scene(&config).unwrap();
    let (model, _) = build_model(&scene, &ModelBuildOptions {
        vocab_words: 48, signature_bits: 32, training_seed: seed ^ 5, max_training_descriptors: 60_000,
    }).unwrap();
    let params = PipelineParams {
        signature_bits: 32, hamming_threshold: 10, gaussian_sigma: 8.0,
        pool_top_k: 16, vote_top_k: 8, aux_iterations: 150, final_iterations: 300,
        ..Default::default()
    };

    for (raw, gt) in scene.queries.iter().zip(&scene.ground_truth) {
        let query = encode_query_image(raw, &model);
        let cands = find_candidates(&query.features, &model, params.hamming_threshold);
        let mut pool = score_and_partition(&cands, &model, &params, &RunOptions::default());
        let outcome = run_visibility_filter(&mut pool, &model.graph, &params, &RunOptions::default());

        let correct = |idx: &[u32]| -> (usize, usize) {
            let mut ok = 0;
            for &i in idx {
                let m = &pool.matches[i as usize];
                if gt.labels[m.query_id as usize] == Some(m.point_id) { ok += 1; }
            }
            (ok, idx.len())
        };
        let (sel_ok, sel_n) = correct(&outcome.selected);
        let (pool_ok, pool_n) = correct(&outcome.pool);

        let shaped = spatial_reconfigure(&pool, &outcome.confident, &outcome.promoted, &query.features,
            (query.width, query.height), params.selection_budget, params.promoted_cap_ratio);
        let (shaped_ok, shaped_n) = correct(&shaped);

        let to_corr = |idx: &[u32]| -> Vec<Correspondence> {
            idx.iter().map(|&i| {
                let m = &pool.matches[i as usize];
                let px = query.features[m.query_id as usize].pixel;
                let w = model.point_position(m.point_id);
                Correspondence { query_id: m.query_id, point_id: m.point_id,
                    pixel: Vector2::new(px[0], px[1]), world: Vector3::new(w[0], w[1], w[2]) }
            }).collect()
        };
        let pp = Vector2::new(512.0, 384.0);
        let sel_corrs = to_corr(&shaped);
        let aux = estimate_auxiliary_pose(&sel_corrs, &params, pp, true, 77 + seed);
        let aux_nopfl = estimate_auxiliary_pose(&sel_corrs, &params, pp, false, 77 + seed);

        let describe = |tag: &str, a: &Option<cpfl_core::geometry::AuxiliaryEstimate>| {
            match a {
                Some(e) => {
                    let pool_corrs = to_corr(&outcome.pool);
                    let rec = geometry_filter(&pool_corrs, &e.pose, params.filter_threshold_px);
                    let rec_ok = rec.iter().filter(|c| gt.labels[c.query_id as usize] == Some(c.point_id)).count();
                    println!("  {tag}: aux_center_err={:.3} focal={:.0}/{:.0} eps={} sel_inl={} stored={} recovered={} ({} true)",
                        (e.pose.center - gt.pose.center).norm(), e.pose.focal, gt.pose.focal,
                        e.max_inliers, e.selected_inliers, e.stored, rec.len(), rec_ok);
                }
                None => println!("  {tag}: aux FAILED"),
            }
        };

        println!("query {}: selected {}/{} true, shaped {}/{} true, pool {}/{} true",
            query.id, sel_ok, sel_n, shaped_ok, shaped_n, pool_ok, pool_n);
        describe("PFL", &aux);
        describe("maxI", &aux_nopfl);
        let r = localize(&query, &model, &params, &RunOptions::default(), 77 + seed);
        if let Some(p) = &r.pose {
            println!("  final: err={:.3} focal={:.0} inliers={}", (p.center - gt.pose.center).norm(), p.focal, r.inlier_count);
        } else {
            println!("  final: FAILED {:?}", r.failed_stage);
        }
    }
}
