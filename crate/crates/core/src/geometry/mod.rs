//! Camera geometry: pose representation, pinhole projection, minimal pose
//! solvers, quality-aware spatial match selection and the two RANSAC
//! stages of the pipeline.

mod p3p;
mod p4p;
mod ransac;
mod spatial;

pub use p3p::p3p_solve;
pub use p4p::p4p_solve;
pub use ransac::{
    estimate_auxiliary_pose, estimate_final_pose, geometry_filter, AuxiliaryEstimate,
};
pub use spatial::{select_by_score, spatial_reconfigure, BinGrid};

use nalgebra::{Matrix3, Vector2, Vector3};

/// A pinhole camera with unknown-at-query-time focal length and a fixed
/// principal point. `rotation` maps world to camera coordinates; the
/// camera looks along +z, x right, y down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
    pub focal: f64,
    pub principal_point: Vector2<f64>,
}

impl CameraPose {
    /// World point in camera coordinates.
    pub fn to_camera(&self, world: Vector3<f64>) -> Vector3<f64> {
        self.rotation * (world - self.center)
    }

    /// Pinhole projection; `None` when the point is not strictly in front
    /// of the camera.
    pub fn project(&self, world: Vector3<f64>) -> Option<Vector2<f64>> {
        let c = self.to_camera(world);
        if c.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.focal * c.x / c.z + self.principal_point.x,
            self.focal * c.y / c.z + self.principal_point.y,
        ))
    }

    /// Translation of the world-to-camera transform.
    pub fn translation(&self) -> Vector3<f64> {
        -(self.rotation * self.center)
    }

    /// Deviation of `rotation` from a proper rotation: max of
    /// `|R R^T - I|` entries, plus a determinant sign check.
    pub fn rotation_defect(&self) -> f64 {
        let gram = self.rotation * self.rotation.transpose();
        let mut defect: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                defect = defect.max((gram[(r, c)] - want).abs());
            }
        }
        if self.rotation.determinant() < 0.0 {
            defect = defect.max(2.0);
        }
        defect
    }
}

/// A 2D-3D correspondence in solver-friendly form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub query_id: u32,
    pub point_id: u32,
    pub pixel: Vector2<f64>,
    pub world: Vector3<f64>,
}

/// A pose hypothesis with its supporting matches.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHypothesis {
    pub pose: CameraPose,
    pub inlier_count: usize,
    pub inlier_ids: Vec<u32>,
}

/// Pixel distance between `pixel` and the projection of `point`; infinite
/// when the point is behind the camera (it can never be an inlier).
pub fn reprojection_error(pose: &CameraPose, point: Vector3<f64>, pixel: Vector2<f64>) -> f64 {
    match pose.project(point) {
        Some(p) => (p - pixel).norm(),
        None => f64::INFINITY,
    }
}

/// Unit ray through a pixel for a given focal and principal point.
pub(crate) fn bearing(pixel: Vector2<f64>, focal: f64, pp: Vector2<f64>) -> Vector3<f64> {
    Vector3::new((pixel.x - pp.x) / focal, (pixel.y - pp.y) / focal, 1.0).normalize()
}

/// Relative collinearity test used to guard minimal samples.
pub(crate) fn are_collinear(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> bool {
    let ab = b - a;
    let ac = c - a;
    let scale = ab.norm() * ac.norm();
    if scale == 0.0 {
        return true;
    }
    ab.cross(&ac).norm() <= 1e-9 * scale
}

/// Two Newton steps toward the orthogonal manifold; enough to push a
/// near-orthonormal matrix to machine precision.
pub(crate) fn orthonormalize(r: Matrix3<f64>) -> Matrix3<f64> {
    let mut m = r;
    for _ in 0..2 {
        let correction = Matrix3::identity() * 3.0 - m.transpose() * m;
        m = m * correction * 0.5;
    }
    m
}

/// Angle in degrees between two rotations.
pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a * b.transpose();
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_pose(focal: f64) -> CameraPose {
        CameraPose {
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
            focal,
            principal_point: Vector2::new(500.0, 500.0),
        }
    }

    #[test]
    fn projection_round_trip_is_exact() {
        let pose = identity_pose(1000.0);
        let p = Vector3::new(0.0, 0.0, 5.0);
        let px = pose.project(p).unwrap();
        assert_relative_eq!(px.x, 500.0, epsilon = 1e-12);
        assert_relative_eq!(px.y, 500.0, epsilon = 1e-12);
        assert!(reprojection_error(&pose, p, px) < 1e-9);
    }

    #[test]
    fn behind_camera_is_infinite() {
        let pose = identity_pose(1000.0);
        let behind = Vector3::new(0.0, 0.0, -1.0);
        assert_eq!(reprojection_error(&pose, behind, Vector2::new(500.0, 500.0)), f64::INFINITY);
        let on_plane = Vector3::new(1.0, 1.0, 0.0);
        assert_eq!(reprojection_error(&pose, on_plane, Vector2::new(500.0, 500.0)), f64::INFINITY);
    }

    #[test]
    fn worked_projection_example() {
        let pose = identity_pose(1000.0);
        let err = reprojection_error(&pose, Vector3::new(1.0, 0.0, 10.0), Vector2::new(500.0, 500.0));
        assert_relative_eq!(err, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn collinearity_guard() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 1.0, 1.0);
        let c = Vector3::new(2.0, 2.0, 2.0);
        assert!(are_collinear(a, b, c));
        assert!(!are_collinear(a, b, Vector3::new(2.0, 2.0, 2.1)));
        assert!(are_collinear(a, a, b));
    }

    #[test]
    fn rotation_angle_of_known_rotation() {
        let a = Matrix3::identity();
        let b = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, 0.1).into_inner();
        assert_relative_eq!(rotation_angle_deg(&a, &b), 0.1f64.to_degrees(), epsilon = 1e-9);
        assert_relative_eq!(rotation_angle_deg(&b, &b), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn orthonormalize_fixes_drift() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let drifted = r * 1.000001;
        let fixed = orthonormalize(drifted);
        let pose = CameraPose {
            rotation: fixed,
            center: Vector3::zeros(),
            focal: 1.0,
            principal_point: Vector2::zeros(),
        };
        assert!(pose.rotation_defect() < 1e-9);
    }
}
