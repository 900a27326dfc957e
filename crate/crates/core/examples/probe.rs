// ablation tuning probe: paired comparison over seeds
use cpfl_core::eval::quantile_linear;
use cpfl_core::params::{PipelineParams, RunOptions};
use cpfl_core::pipeline::{encode_query_image, localize};
use cpfl_core::synth::{build_model, generate_scene, ModelBuildOptions, SyntheticSceneConfig};
use rayon::prelude::*;
use std::time::Instant;

fn median_err(errs: &mut Vec<f64>) -> f64 {
    if errs.is_empty() {
        return f64::INFINITY; // nothing localized
    }
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_linear(errs, 0.5)
}

fn main() {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let pixel_noise: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let aux_iters: u32 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(150);
    let cluster_div: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(3);

    let t0 = Instant::now();
    let rows: Vec<(u64, [f64; 3], [usize; 4])> = (0..n_seeds)
        .into_par_iter()
        .map(|seed| {
            let config = SyntheticSceneConfig {
                num_points: 1600,
                num_db_images: 24,
                num_queries: 4,
                descriptor_dim: 32,
                cluster_count: 1600 / cluster_div,
                descriptor_noise_sigma: 3.0,
                pixel_noise_sigma: pixel_noise,
                outlier_match_rate: 0.2,
                spatial_clustering: 0.8,
                image_size: (1024, 768),
                focal_range: (800.0, 2000.0),
                seed: 1000 + seed,
            };
            let scene = generate_scene(&config).unwrap();
            let (model, _) = build_model(&scene, &ModelBuildOptions {
                vocab_words: 48,
                signature_bits: 32,
                training_seed: seed ^ 5,
                max_training_descriptors: 60_000,
            }).unwrap();
            let params = PipelineParams {
                signature_bits: 32,
                hamming_threshold: 10,
                gaussian_sigma: 8.0,
                pool_top_k: 16,
                vote_top_k: 8,
                aux_iterations: aux_iters,
                final_iterations: 300,
                ..Default::default()
            };
            let modes = [
                RunOptions::default(),
                RunOptions::without_spatial_reconfiguration(),
                RunOptions::without_median_focal(),
                RunOptions::baseline_voting(),
            ];
            let mut medians = [0.0f64; 3];
            let mut counts = [0usize; 4];
            for (mi, mode) in modes.iter().enumerate() {
                let mut errs = Vec::new();
                for (raw, gt) in scene.queries.iter().zip(&scene.ground_truth) {
                    let query = encode_query_image(raw, &model);
                    let r = localize(&query, &model, &params, mode, 77 + seed);
                    if r.is_localized() {
                        counts[mi] += 1;
                        errs.push((r.pose.as_ref().unwrap().center - gt.pose.center).norm());
                    }
                }
                if mi < 3 {
                    medians[mi] = median_err(&mut errs);
                }
            }
            (seed, medians, counts)
        })
        .collect();

    let mut qsr_wins = 0; let mut qsr_losses = 0;
    let mut pfl_wins = 0; let mut pfl_losses = 0;
    let mut full_total = 0; let mut base_total = 0;
    let mut full_meds = Vec::new(); let mut noqsr_meds = Vec::new(); let mut nopfl_meds = Vec::new();
    for (_, m, c) in &rows {
        if m[0] < m[1] { qsr_wins += 1 } else if m[0] > m[1] { qsr_losses += 1 }
        if m[0] < m[2] { pfl_wins += 1 } else if m[0] > m[2] { pfl_losses += 1 }
        full_total += c[0]; base_total += c[3];
        full_meds.push(m[0]); noqsr_meds.push(m[1]); nopfl_meds.push(m[2]);
    }
    let agg = |v: &mut Vec<f64>| { v.sort_by(|a,b| a.partial_cmp(b).unwrap()); v[v.len()/2] };
    println!("pixel_noise={pixel_noise} aux={aux_iters} cluster_div={cluster_div} seeds={n_seeds}");
    println!("QSR:  wins {qsr_wins} losses {qsr_losses}  | PFL: wins {pfl_wins} losses {pfl_losses}");
    println!("agg medians: full {:.4}  noQSR {:.4}  noPFL {:.4}", agg(&mut full_meds), agg(&mut noqsr_meds), agg(&mut nopfl_meds));
    println!("localized: full {full_total}  baseline {base_total}");
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
}
