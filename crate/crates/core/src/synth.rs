//! Synthetic scene generation with ground truth.
//!
//! Points fill a ball (optionally with a dense sub-region to exercise the
//! spatial selection), database and query cameras sit on a ring looking
//! inward, visibility comes from in-frustum projection, and descriptors
//! are Gaussian perturbations of shared appearance centers so that
//! `cluster_count / num_points` directly controls match ambiguity.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{train_embedding, train_vocabulary, DescriptorSet};
use crate::error::{Error, Result};
use crate::geometry::CameraPose;
use crate::io::{RawFeature, RawQueryImage};
use crate::model::{compress_model, CompressedModel, PointObservations};
use crate::rng::{derive_rng, standard_normal};
use crate::scene::{build_visibility_graph, DatabaseImage, Point3D};

use nalgebra::{Matrix3, Vector2, Vector3};

/// Knobs of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneConfig {
    pub num_points: usize,
    pub num_db_images: usize,
    pub num_queries: usize,
    pub descriptor_dim: usize,
    /// Distinct visual appearances; fewer than `num_points` makes several
    /// points share descriptors and creates genuine match ambiguity.
    pub cluster_count: usize,
    /// Gaussian noise added to every drawn descriptor (0..255 scale).
    pub descriptor_noise_sigma: f32,
    /// Gaussian noise on query feature pixels; zero keeps projections
    /// exact.
    pub pixel_noise_sigma: f64,
    /// Outlier features injected per query, as a fraction of its true
    /// features.
    pub outlier_match_rate: f64,
    /// Fraction of points concentrated in a small region.
    pub spatial_clustering: f64,
    pub image_size: (u32, u32),
    /// Camera focal lengths are drawn uniformly from this range (pixels).
    pub focal_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            num_points: 2000,
            num_db_images: 24,
            num_queries: 4,
            descriptor_dim: 16,
            cluster_count: 2000,
            descriptor_noise_sigma: 2.0,
            pixel_noise_sigma: 0.0,
            outlier_match_rate: 0.1,
            spatial_clustering: 0.0,
            image_size: (1024, 768),
            focal_range: (1000.0, 1400.0),
            seed: 0,
        }
    }
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_points == 0 || self.num_db_images == 0 || self.num_queries == 0 {
            return bad("all counts must be at least 1".into());
        }
        if self.descriptor_dim == 0 || self.cluster_count == 0 {
            return bad("descriptor_dim and cluster_count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_match_rate) {
            return bad(format!("outlier_match_rate {} not in [0, 1]", self.outlier_match_rate));
        }
        if !(0.0..=1.0).contains(&self.spatial_clustering) {
            return bad(format!("spatial_clustering {} not in [0, 1]", self.spatial_clustering));
        }
        if self.descriptor_noise_sigma < 0.0 || self.pixel_noise_sigma < 0.0 {
            return bad("noise sigmas must be non-negative".into());
        }
        if self.image_size.0 < 16 || self.image_size.1 < 16 {
            return bad("image_size must be at least 16x16".into());
        }
        if !(self.focal_range.0 > 0.0 && self.focal_range.1 >= self.focal_range.0) {
            return bad(format!("invalid focal_range {:?}", self.focal_range));
        }
        Ok(())
    }
}

/// Reference pose and per-feature correspondence labels of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthQuery {
    pub query_id: u32,
    pub pose: CameraPose,
    /// For each feature, the true 3D point id, or `None` for injected
    /// outliers.
    pub labels: Vec<Option<u32>>,
}

/// A generated scene: the raw model plus labeled queries.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub points: Vec<Point3D>,
    pub images: Vec<DatabaseImage>,
    /// Per-point raw descriptors, one row per database observation.
    pub observations: Vec<DescriptorSet>,
    pub queries: Vec<RawQueryImage>,
    pub ground_truth: Vec<GroundTruthQuery>,
    /// Bounding-box diagonal of the point cloud.
    pub diameter: f64,
}

const SCENE_RADIUS: f64 = 10.0;
const RING_RADIUS: f64 = 2.5 * SCENE_RADIUS;
const CLUSTER_REGION_RADIUS: f64 = 0.10 * SCENE_RADIUS;
const CLUSTER_OFFSET: f64 = 0.45 * SCENE_RADIUS;
const HEIGHT_JITTER: f64 = 0.3 * SCENE_RADIUS;
const MIN_DEPTH: f64 = 0.5;
const DB_OBSERVATION_CAP: usize = 4000;
const QUERY_FEATURE_CAP: usize = 1500;
const CAMERA_RETRIES: usize = 20;
const DESCRIPTOR_RANGE: f32 = 255.0;

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            standard_normal(rng),
            standard_normal(rng),
            standard_normal(rng),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn ball_sample(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    unit_vector(rng) * (radius * rng.gen::<f64>().powf(1.0 / 3.0))
}

/// World-to-camera rotation for a camera at `position` looking at
/// `target`, image x to the right and y downward.
fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - position).normalize();
    let mut up = Vector3::new(0.0, 0.0, 1.0);
    if forward.cross(&up).norm() < 1e-6 {
        up = Vector3::new(0.0, 1.0, 0.0);
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

fn place_camera(
    rng: &mut ChaCha8Rng,
    angle: f64,
    focal: f64,
    image_size: (u32, u32),
) -> CameraPose {
    let position = Vector3::new(
        RING_RADIUS * angle.cos(),
        RING_RADIUS * angle.sin(),
        rng.gen_range(-HEIGHT_JITTER..HEIGHT_JITTER),
    );
    let target = Vector3::new(
        rng.gen_range(-0.05..0.05) * SCENE_RADIUS,
        rng.gen_range(-0.05..0.05) * SCENE_RADIUS,
        rng.gen_range(-0.05..0.05) * SCENE_RADIUS,
    );
    CameraPose {
        rotation: look_at(position, target),
        center: position,
        focal,
        principal_point: Vector2::new(image_size.0 as f64 * 0.5, image_size.1 as f64 * 0.5),
    }
}

fn in_bounds(px: Vector2<f64>, image_size: (u32, u32)) -> bool {
    px.x >= 0.0 && px.x < image_size.0 as f64 && px.y >= 0.0 && px.y < image_size.1 as f64
}

fn visible_points(
    pose: &CameraPose,
    points: &[Vector3<f64>],
    image_size: (u32, u32),
) -> Vec<(u32, Vector2<f64>)> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, &w)| {
            let cam = pose.to_camera(w);
            if cam.z <= MIN_DEPTH {
                return None;
            }
            let px = pose.project(w)?;
            in_bounds(px, image_size).then_some((i as u32, px))
        })
        .collect()
}

fn subsample<T: Copy>(rng: &mut ChaCha8Rng, items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let picked = rand::seq::index::sample(rng, items.len(), cap);
    let mut idx: Vec<usize> = picked.iter().collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i]).collect()
}

fn draw_descriptor(rng: &mut ChaCha8Rng, center: &[f32], sigma: f32) -> Vec<f32> {
    center
        .iter()
        .map(|&c| {
            (c + sigma * standard_normal(rng) as f32).clamp(0.0, DESCRIPTOR_RANGE)
        })
        .collect()
}

/// Generates the full scene. Deterministic in `config.seed`: the same
/// configuration reproduces bit-identical output.
pub fn generate_scene(config: &SyntheticSceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = derive_rng(config.seed, 0x7363_656e, 0); // scene stream

    // point cloud, optionally with a dense sub-region
    let n_clustered = (config.spatial_clustering * config.num_points as f64).round() as usize;
    let cluster_center = unit_vector(&mut rng) * CLUSTER_OFFSET;
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(config.num_points);
    for i in 0..config.num_points {
        let p = if i < n_clustered {
            cluster_center + ball_sample(&mut rng, CLUSTER_REGION_RADIUS)
        } else {
            ball_sample(&mut rng, SCENE_RADIUS)
        };
        positions.push(p);
    }

    // shared appearance centers
    let mut appearance = DescriptorSet::with_capacity(config.descriptor_dim, config.cluster_count);
    for _ in 0..config.cluster_count {
        let row: Vec<f32> =
            (0..config.descriptor_dim).map(|_| rng.gen::<f32>() * DESCRIPTOR_RANGE).collect();
        appearance.push(&row);
    }
    // With a dense sub-region, appearance sharing concentrates there: a
    // repetitive textured region produces the clustered ambiguous matches,
    // while sparse-region points stay distinctive.
    let shared_pool = if n_clustered > 0 && n_clustered < config.num_points {
        (config.cluster_count / 2).max(1)
    } else {
        config.cluster_count
    };
    let appearance_of: Vec<u32> = (0..config.num_points)
        .map(|i| {
            if i < n_clustered || shared_pool == config.cluster_count {
                rng.gen_range(0..shared_pool) as u32
            } else {
                (shared_pool + rng.gen_range(0..config.cluster_count - shared_pool)) as u32
            }
        })
        .collect();

    // database cameras and their observations (original point ids)
    let mut db_observed: Vec<Vec<u32>> = Vec::with_capacity(config.num_db_images);
    for j in 0..config.num_db_images {
        let base_angle = std::f64::consts::TAU * j as f64 / config.num_db_images as f64;
        let mut placed = None;
        for _ in 0..CAMERA_RETRIES {
            let angle = base_angle
                + rng.gen_range(-0.3..0.3) * std::f64::consts::TAU / config.num_db_images as f64;
            let focal = rng.gen_range(config.focal_range.0..=config.focal_range.1);
            let pose = place_camera(&mut rng, angle, focal, config.image_size);
            let visible = visible_points(&pose, &positions, config.image_size);
            if !visible.is_empty() {
                let ids: Vec<u32> = visible.iter().map(|&(id, _)| id).collect();
                placed = Some(subsample(&mut rng, &ids, DB_OBSERVATION_CAP));
                break;
            }
        }
        let Some(observed) = placed else {
            return Err(Error::InvalidConfig(format!(
                "database camera {j} sees no points after {CAMERA_RETRIES} attempts"
            )));
        };
        db_observed.push(observed);
    }

    // keep only observed points; SfM never carries unobserved ones
    let mut keep = vec![false; config.num_points];
    for obs in &db_observed {
        for &p in obs {
            keep[p as usize] = true;
        }
    }
    let mut remap = vec![u32::MAX; config.num_points];
    let mut points: Vec<Point3D> = Vec::new();
    let mut kept_positions: Vec<Vector3<f64>> = Vec::new();
    let mut kept_appearance: Vec<u32> = Vec::new();
    for (old, &k) in keep.iter().enumerate() {
        if k {
            remap[old] = points.len() as u32;
            let p = positions[old];
            points.push(Point3D { id: points.len() as u32, position: [p.x, p.y, p.z] });
            kept_positions.push(p);
            kept_appearance.push(appearance_of[old]);
        }
    }
    let images: Vec<DatabaseImage> = db_observed
        .iter()
        .enumerate()
        .map(|(id, obs)| {
            let mut observed_points: Vec<u32> = obs.iter().map(|&p| remap[p as usize]).collect();
            observed_points.sort_unstable();
            DatabaseImage { id: id as u32, observed_points }
        })
        .collect();

    // one descriptor per (image, point) observation
    let mut observations: Vec<DescriptorSet> =
        (0..points.len()).map(|_| DescriptorSet::new(config.descriptor_dim)).collect();
    for img in &images {
        for &p in &img.observed_points {
            let center = appearance.row(kept_appearance[p as usize] as usize);
            let desc = draw_descriptor(&mut rng, center, config.descriptor_noise_sigma);
            observations[p as usize].push(&desc);
        }
    }

    // queries with labels
    let mut queries = Vec::with_capacity(config.num_queries);
    let mut ground_truth = Vec::with_capacity(config.num_queries);
    for q in 0..config.num_queries {
        let mut produced = None;
        for _ in 0..CAMERA_RETRIES {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let focal = rng.gen_range(config.focal_range.0..=config.focal_range.1);
            let pose = place_camera(&mut rng, angle, focal, config.image_size);
            let visible = visible_points(&pose, &kept_positions, config.image_size);
            if !visible.is_empty() {
                produced = Some((pose, visible));
                break;
            }
        }
        let Some((pose, visible)) = produced else {
            return Err(Error::InvalidConfig(format!(
                "query camera {q} sees no points after {CAMERA_RETRIES} attempts"
            )));
        };

        let chosen = subsample(&mut rng, &visible, QUERY_FEATURE_CAP);
        let mut features: Vec<(RawFeature, Option<u32>)> = Vec::new();
        for (p, px) in chosen {
            let noisy = Vector2::new(
                px.x + config.pixel_noise_sigma * standard_normal(&mut rng),
                px.y + config.pixel_noise_sigma * standard_normal(&mut rng),
            );
            if !in_bounds(noisy, config.image_size) {
                continue;
            }
            let center = appearance.row(kept_appearance[p as usize] as usize);
            let descriptor = draw_descriptor(&mut rng, center, config.descriptor_noise_sigma);
            features.push((RawFeature { x: noisy.x, y: noisy.y, descriptor }, Some(p)));
        }
        let n_outliers = (config.outlier_match_rate * features.len() as f64).round() as usize;
        for _ in 0..n_outliers {
            let x = rng.gen_range(0.0..config.image_size.0 as f64);
            let y = rng.gen_range(0.0..config.image_size.1 as f64);
            let center = appearance.row(rng.gen_range(0..config.cluster_count));
            let descriptor = draw_descriptor(&mut rng, center, config.descriptor_noise_sigma);
            features.push((RawFeature { x, y, descriptor }, None));
        }
        features.shuffle(&mut rng);

        let (feats, labels): (Vec<RawFeature>, Vec<Option<u32>>) = features.into_iter().unzip();
        queries.push(RawQueryImage {
            id: q as u32,
            width: config.image_size.0,
            height: config.image_size.1,
            features: feats,
        });
        ground_truth.push(GroundTruthQuery { query_id: q as u32, pose, labels });
    }

    let diameter = bounding_diameter(&points);
    Ok(SyntheticScene { points, images, observations, queries, ground_truth, diameter })
}

fn bounding_diameter(points: &[Point3D]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p.position[a]);
            hi[a] = hi[a].max(p.position[a]);
        }
    }
    (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
}

/// Vocabulary size, signature length and training knobs for building a
/// compressed model out of a raw scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBuildOptions {
    pub vocab_words: usize,
    pub signature_bits: usize,
    pub training_seed: u64,
    /// Vocabulary training subsamples down to this many descriptors.
    pub max_training_descriptors: usize,
}

impl Default for ModelBuildOptions {
    fn default() -> Self {
        Self {
            vocab_words: 64,
            signature_bits: 16,
            training_seed: 7,
            max_training_descriptors: 200_000,
        }
    }
}

/// Trains vocabulary and embedding on the scene's descriptors and
/// compresses everything into a model. Returns the model and the number
/// of visual words that had no training data.
pub fn build_model(
    scene: &SyntheticScene,
    options: &ModelBuildOptions,
) -> Result<(CompressedModel, usize)> {
    let dim = scene
        .observations
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::InvalidModel("scene has no points".into()))?;

    let mut all = DescriptorSet::with_capacity(
        dim,
        scene.observations.iter().map(|s| s.len()).sum(),
    );
    for set in &scene.observations {
        for row in set.rows() {
            all.push(row);
        }
    }

    let mut rng = derive_rng(options.training_seed, 0x7472_6169, 0); // training stream
    let training = if all.len() > options.max_training_descriptors {
        let picked =
            rand::seq::index::sample(&mut rng, all.len(), options.max_training_descriptors);
        let mut idx: Vec<usize> = picked.iter().collect();
        idx.sort_unstable();
        let mut sub = DescriptorSet::with_capacity(dim, idx.len());
        for i in idx {
            sub.push(all.row(i));
        }
        sub
    } else {
        all.clone()
    };

    let vocab = train_vocabulary(&training, options.vocab_words, options.training_seed)?;

    let words_per_point: Vec<Vec<u32>> = scene
        .observations
        .par_iter()
        .map(|set| set.rows().map(|r| vocab.assign(r)).collect())
        .collect();
    let mut all_words = Vec::with_capacity(all.len());
    for w in &words_per_point {
        all_words.extend_from_slice(w);
    }

    let (embedding, untrained) = train_embedding(
        &all,
        &all_words,
        &vocab,
        options.signature_bits,
        options.training_seed,
    )?;

    let graph = build_visibility_graph(&scene.points, &scene.images)?;
    let obs: Vec<PointObservations> = scene
        .observations
        .iter()
        .zip(words_per_point)
        .map(|(descriptors, words)| PointObservations { words, descriptors: descriptors.clone() })
        .collect();
    let model =
        compress_model(scene.points.clone(), &obs, graph, vocab, embedding)?;
    Ok((model, untrained))
}
