//! Evaluation: center/rotation error quartiles, accuracy buckets and the
//! paired sign test used by comparison runs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rotation_angle_deg;
use crate::pipeline::LocalizationResult;

/// Reference pose of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPose {
    pub query_id: u32,
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
    pub focal: f64,
}

/// Accuracy intervals reported alongside the quartiles, as
/// (center error, rotation error in degrees) bounds. Center bounds are in
/// world units; synthetic scenes use abstract units, noted in the header.
pub const ACCURACY_BUCKETS: [(f64, f64); 3] = [(0.25, 2.0), (0.5, 5.0), (5.0, 10.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total_queries: usize,
    pub localized: usize,
    pub localized_fraction: f64,
    /// 25/50/75% center error quantiles over localized queries; NaN when
    /// nothing localized.
    pub center_error_quartiles: [f64; 3],
    /// Same for rotation error in degrees.
    pub rotation_error_quartiles: [f64; 3],
    /// Fraction of all queries within each accuracy bucket (failures count
    /// in the denominator).
    pub bucket_fractions: [f64; 3],
    /// Mean per-query wall time; absent when timings were not recorded.
    pub mean_query_ms: Option<f64>,
    /// Unit note for the center thresholds, e.g. the scene diameter.
    pub unit_note: String,
}

impl EvaluationReport {
    pub fn render_text(&self) -> String {
        let q = |v: [f64; 3]| format!("{:.4} / {:.4} / {:.4}", v[0], v[1], v[2]);
        let mut out = String::new();
        out.push_str(&format!("queries:    {} ({} localized, {:.1}%)\n", self.total_queries, self.localized, self.localized_fraction * 100.0));
        out.push_str(&format!("units:      {}\n", self.unit_note));
        out.push_str(&format!("center err quartiles:   {}\n", q(self.center_error_quartiles)));
        out.push_str(&format!("rotation err quartiles: {} deg\n", q(self.rotation_error_quartiles)));
        for (i, (c, r)) in ACCURACY_BUCKETS.iter().enumerate() {
            out.push_str(&format!(
                "within ({c} units, {r} deg): {:.1}%\n",
                self.bucket_fractions[i] * 100.0
            ));
        }
        if let Some(ms) = self.mean_query_ms {
            out.push_str(&format!("mean query time: {ms:.1} ms\n"));
        }
        out
    }
}

/// Linear-interpolation quantile over a sorted sample.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Angle between estimated and reference rotation, in degrees.
pub fn rotation_error_deg(estimated: &Matrix3<f64>, reference: &Matrix3<f64>) -> f64 {
    rotation_angle_deg(estimated, reference)
}

/// Builds the evaluation report. Ground truth must cover every result;
/// results without timings contribute no mean time.
pub fn evaluate(
    results: &[LocalizationResult],
    ground_truth: &[GroundTruthPose],
    unit_note: &str,
) -> Result<EvaluationReport> {
    let mut center_errors = Vec::new();
    let mut rotation_errors = Vec::new();
    let mut bucket_hits = [0usize; 3];
    let mut time_sum = 0.0;
    let mut timed = 0usize;

    for r in results {
        let gt = ground_truth
            .iter()
            .find(|g| g.query_id == r.query_id)
            .ok_or_else(|| Error::FileFormat(format!("no ground truth for query {}", r.query_id)))?;
        if r.timings.total_ms > 0.0 {
            time_sum += r.timings.total_ms;
            timed += 1;
        }
        let Some(pose) = r.pose.as_ref().filter(|_| r.is_localized()) else {
            continue;
        };
        let ce = (pose.center - gt.center).norm();
        let re = rotation_error_deg(&pose.rotation, &gt.rotation);
        for (i, (cb, rb)) in ACCURACY_BUCKETS.iter().enumerate() {
            if ce <= *cb && re <= *rb {
                bucket_hits[i] += 1;
            }
        }
        center_errors.push(ce);
        rotation_errors.push(re);
    }

    let total = results.len();
    let localized = center_errors.len();
    let quartiles = |mut v: Vec<f64>| -> [f64; 3] {
        if v.is_empty() {
            return [f64::NAN; 3];
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite error"));
        [quantile_linear(&v, 0.25), quantile_linear(&v, 0.5), quantile_linear(&v, 0.75)]
    };

    Ok(EvaluationReport {
        total_queries: total,
        localized,
        localized_fraction: if total == 0 { 0.0 } else { localized as f64 / total as f64 },
        center_error_quartiles: quartiles(center_errors),
        rotation_error_quartiles: quartiles(rotation_errors),
        bucket_fractions: bucket_hits.map(|h| if total == 0 { 0.0 } else { h as f64 / total as f64 }),
        mean_query_ms: (timed > 0).then(|| time_sum / timed as f64),
        unit_note: unit_note.to_string(),
    })
}

/// One-sided binomial tail `P(X >= wins)` for `wins` successes out of
/// `wins + losses` fair coin flips (ties excluded by the caller).
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // log-space cumulative to stay stable for n in the hundreds
    let ln_half = 0.5f64.ln();
    let mut ln_choose = 0.0; // ln C(n, 0)
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += (ln_choose + n as f64 * ln_half).exp();
        }
        ln_choose += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
    }
    tail.min(1.0)
}

/// True when `wins` of `wins + losses` paired comparisons reject the
/// even-odds hypothesis at 95% one-sided confidence.
pub fn sign_test_significant(wins: usize, losses: usize) -> bool {
    sign_test_p_value(wins, losses) < 0.05
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraPose;
    use crate::pipeline::{StageCounts, StageTimings, Status};
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    fn mk_result(query_id: u32, pose: Option<CameraPose>, total_ms: f64) -> LocalizationResult {
        LocalizationResult {
            query_id,
            status: if pose.is_some() { Status::Localized } else { Status::Failed },
            failed_stage: None,
            pose,
            inlier_count: 20,
            counts: StageCounts::default(),
            timings: StageTimings { total_ms, ..Default::default() },
        }
    }

    fn pose_at(center: [f64; 3], yaw: f64) -> CameraPose {
        CameraPose {
            rotation: nalgebra::Rotation3::from_euler_angles(0.0, 0.0, yaw).into_inner(),
            center: Vector3::new(center[0], center[1], center[2]),
            focal: 1000.0,
            principal_point: Vector2::new(500.0, 500.0),
        }
    }

    fn gt(query_id: u32) -> GroundTruthPose {
        GroundTruthPose {
            query_id,
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
            focal: 1000.0,
        }
    }

    #[test]
    fn quartiles_interpolate_linearly() {
        let v = [0.1, 0.2, 0.3, 0.4];
        assert_relative_eq!(quantile_linear(&v, 0.25), 0.175, epsilon = 1e-12);
        assert_relative_eq!(quantile_linear(&v, 0.5), 0.25, epsilon = 1e-12);
        assert_relative_eq!(quantile_linear(&v, 0.75), 0.325, epsilon = 1e-12);
    }

    #[test]
    fn buckets_are_nested() {
        let results = vec![mk_result(0, Some(pose_at([0.2, 0.0, 0.0], 1.5f64.to_radians())), 1.0)];
        let report = evaluate(&results, &[gt(0)], "units").unwrap();
        // 0.2 units, 1.5 degrees lands in all three buckets
        assert_eq!(report.bucket_fractions, [1.0, 1.0, 1.0]);
        for w in report.bucket_fractions.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn failures_skip_quartiles_but_count_in_buckets() {
        let results = vec![
            mk_result(0, Some(pose_at([0.1, 0.0, 0.0], 0.0)), 2.0),
            mk_result(1, None, 2.0),
        ];
        let report = evaluate(&results, &[gt(0), gt(1)], "units").unwrap();
        assert_eq!(report.localized, 1);
        assert_relative_eq!(report.center_error_quartiles[1], 0.1, epsilon = 1e-12);
        assert_relative_eq!(report.bucket_fractions[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(report.localized_fraction, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rotation_error_matches_axis_angle() {
        let a = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, 0.3).into_inner();
        let b = Matrix3::identity();
        assert_relative_eq!(rotation_error_deg(&a, &b), 0.3f64.to_degrees(), epsilon = 1e-9);
    }

    #[test]
    fn sign_test_critical_region() {
        // n = 100: 58 wins is not significant, 59 is (alpha = 0.05)
        assert!(!sign_test_significant(58, 42));
        assert!(sign_test_significant(59, 41));
        // small n sanity: 5/5 wins -> p = 1/32 < 0.05
        assert!(sign_test_significant(5, 0));
        assert!(!sign_test_significant(4, 1));
        assert_relative_eq!(sign_test_p_value(0, 0), 1.0);
    }

    #[test]
    fn sign_test_p_matches_direct_sum() {
        // direct binomial for n = 10, wins >= 8
        let direct: f64 = (8..=10).map(|k| {
            let choose = (1..=10).fold(1.0f64, |acc, i| acc * i as f64)
                / ((1..=k).fold(1.0f64, |acc, i| acc * i as f64)
                    * (1..=(10 - k)).fold(1.0f64, |acc, i| acc * i as f64));
            choose * 0.5f64.powi(10)
        }).sum();
        assert_relative_eq!(sign_test_p_value(8, 2), direct, epsilon = 1e-12);
    }
}
