//! Text file formats: query images (JSON lines, one document per image),
//! per-query result records (JSON lines), and the ground-truth document.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruthPose;
use crate::geometry::CameraPose;
use crate::pipeline::{LocalizationResult, Stage, StageCounts, StageTimings, Status};

/// One raw query feature: pixel position plus descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFeature {
    pub x: f64,
    pub y: f64,
    pub descriptor: Vec<f32>,
}

/// One query image document as stored in a queries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQueryImage {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub features: Vec<RawFeature>,
}

pub fn write_queries(path: &Path, queries: &[RawQueryImage]) -> Result<()> {
    let mut out = Vec::new();
    for q in queries {
        serde_json::to_writer(&mut out, q).map_err(|e| Error::FileFormat(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_queries(path: &Path) -> Result<Vec<RawQueryImage>> {
    let file = fs::File::open(path)?;
    let mut queries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: RawQueryImage = serde_json::from_str(&line)
            .map_err(|e| Error::FileFormat(format!("queries line {}: {e}", lineno + 1)))?;
        for (i, f) in q.features.iter().enumerate() {
            if !(f.x >= 0.0 && f.x < q.width as f64 && f.y >= 0.0 && f.y < q.height as f64) {
                return Err(Error::FileFormat(format!(
                    "query {} feature {i} at ({}, {}) lies outside {}x{}",
                    q.id, f.x, f.y, q.width, q.height
                )));
            }
        }
        queries.push(q);
    }
    Ok(queries)
}

/// Scalar-first quaternion of a world-to-camera rotation.
fn quaternion_of(rotation: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(rotation);
    [q.w, q.i, q.j, q.k]
}

fn rotation_of(q: [f64; 4]) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

/// One result line. Failed queries have no pose fields; timings are
/// written only on request so results files stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: u32,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    /// Scalar-first (w, x, y, z) world-to-camera rotation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    pub inliers: usize,
    pub counts: StageCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<StageTimings>,
}

impl ResultRecord {
    pub fn from_result(r: &LocalizationResult, include_timings: bool) -> Self {
        let (quaternion, center, focal) = match &r.pose {
            Some(p) => (
                Some(quaternion_of(&p.rotation)),
                Some([p.center.x, p.center.y, p.center.z]),
                Some(p.focal),
            ),
            None => (None, None, None),
        };
        Self {
            id: r.query_id,
            status: r.status,
            failed_stage: r.failed_stage,
            quaternion,
            center,
            focal,
            inliers: r.inlier_count,
            counts: r.counts,
            timings_ms: include_timings.then_some(r.timings),
        }
    }

    /// Rebuilds the in-memory result; the principal point is not part of
    /// the record and is restored by the caller when needed.
    pub fn into_result(self) -> LocalizationResult {
        let pose = match (self.quaternion, self.center, self.focal) {
            (Some(q), Some(c), Some(f)) => Some(CameraPose {
                rotation: rotation_of(q),
                center: Vector3::new(c[0], c[1], c[2]),
                focal: f,
                principal_point: Vector2::zeros(),
            }),
            _ => None,
        };
        LocalizationResult {
            query_id: self.id,
            status: self.status,
            failed_stage: self.failed_stage,
            pose,
            inlier_count: self.inliers,
            counts: self.counts,
            timings: self.timings_ms.unwrap_or_default(),
        }
    }
}

pub fn write_results(
    path: &Path,
    results: &[LocalizationResult],
    include_timings: bool,
) -> Result<()> {
    let mut out = Vec::new();
    for r in results {
        let record = ResultRecord::from_result(r, include_timings);
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::FileFormat(e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<LocalizationResult>> {
    let file = fs::File::open(path)?;
    let mut results = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResultRecord = serde_json::from_str(&line)
            .map_err(|e| Error::FileFormat(format!("results line {}: {e}", lineno + 1)))?;
        results.push(record.into_result());
    }
    Ok(results)
}

/// Ground-truth file: scene metadata plus one reference pose per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub scene_diameter: f64,
    pub queries: Vec<GroundTruthRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub query_id: u32,
    /// Scalar-first (w, x, y, z).
    pub quaternion: [f64; 4],
    pub center: [f64; 3],
    pub focal: f64,
}

impl GroundTruthRecord {
    pub fn from_pose(query_id: u32, pose: &CameraPose) -> Self {
        Self {
            query_id,
            quaternion: quaternion_of(&pose.rotation),
            center: [pose.center.x, pose.center.y, pose.center.z],
            focal: pose.focal,
        }
    }

    pub fn to_pose(&self) -> GroundTruthPose {
        GroundTruthPose {
            query_id: self.query_id,
            rotation: rotation_of(self.quaternion),
            center: Vector3::new(self.center[0], self.center[1], self.center[2]),
            focal: self.focal,
        }
    }
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruthFile) -> Result<()> {
    let text =
        serde_json::to_string_pretty(gt).map_err(|e| Error::FileFormat(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::FileFormat(format!("ground truth: {e}")))
}

pub fn read_params(path: &Path) -> Result<crate::params::PipelineParams> {
    let text = fs::read_to_string(path)?;
    crate::params::PipelineParams::from_toml_str(&text)
}
