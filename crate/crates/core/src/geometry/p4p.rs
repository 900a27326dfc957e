//! Four-point pose solver estimating the focal length alongside the pose.
//!
//! Realized as a focal search: the three-point solver runs on a geometric
//! grid of focal candidates, each scored by the fourth point's
//! reprojection error; the best cell is then refined by golden-section
//! minimization. The contract is recovery of the generating focal within
//! 0.1% on exact data, not a particular algebraic method.

use nalgebra::{Vector2, Vector3};

use super::{are_collinear, p3p_solve, reprojection_error, CameraPose};

const GRID_STEPS: usize = 40;
const GRID_SPAN: (f64, f64) = (0.2, 5.0);
const GOLDEN_ITERS: usize = 56;

/// Smallest fourth-point reprojection error over all P3P poses at a given
/// focal, along with the best pose.
fn score_focal(
    world3: &[Vector3<f64>; 3],
    pixels3: &[Vector2<f64>; 3],
    extra_world: Vector3<f64>,
    extra_pixel: Vector2<f64>,
    focal: f64,
    pp: Vector2<f64>,
) -> (f64, Option<CameraPose>) {
    let mut best = (f64::INFINITY, None);
    for pose in p3p_solve(world3, pixels3, focal, pp) {
        let err = reprojection_error(&pose, extra_world, extra_pixel);
        if err < best.0 {
            best = (err, Some(pose));
        }
    }
    best
}

/// Estimates camera pose and focal length from four correspondences.
///
/// Returns candidate poses (focal included) ordered by fourth-point
/// reprojection error. Configurations with any three world points
/// collinear yield an empty set; planar quadruples may return several
/// candidates and are disambiguated downstream by inlier counting.
pub fn p4p_solve(
    world: &[Vector3<f64>; 4],
    pixels: &[Vector2<f64>; 4],
    principal_point: Vector2<f64>,
) -> Vec<CameraPose> {
    for i in 0..4 {
        let rest: Vec<Vector3<f64>> =
            (0..4).filter(|&j| j != i).map(|j| world[j]).collect();
        if are_collinear(rest[0], rest[1], rest[2]) {
            return Vec::new();
        }
    }

    let world3 = [world[0], world[1], world[2]];
    let pixels3 = [pixels[0], pixels[1], pixels[2]];

    // Focal scale reference: the image diagonal implied by the principal
    // point sitting at the image center.
    let diagonal = 2.0 * principal_point.norm();
    let diagonal = if diagonal > 0.0 { diagonal } else { 1000.0 };
    let lo = GRID_SPAN.0 * diagonal;
    let hi = GRID_SPAN.1 * diagonal;
    let ratio = (hi / lo).powf(1.0 / (GRID_STEPS - 1) as f64);

    let mut best_idx = 0usize;
    let mut best_err = f64::INFINITY;
    let mut grid = [0.0f64; GRID_STEPS];
    for (i, slot) in grid.iter_mut().enumerate() {
        let f = lo * ratio.powi(i as i32);
        *slot = f;
        let (err, _) = score_focal(&world3, &pixels3, world[3], pixels[3], f, principal_point);
        if err < best_err {
            best_err = err;
            best_idx = i;
        }
    }
    if !best_err.is_finite() {
        return Vec::new();
    }

    // Golden-section refine inside the bracket around the best cell.
    let mut a = grid[best_idx.saturating_sub(1)];
    let mut b = grid[(best_idx + 1).min(GRID_STEPS - 1)];
    if a == b {
        // best cell at the boundary; widen by one ratio step
        a /= ratio;
        b *= ratio;
    }
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let eval = |f: f64| score_focal(&world3, &pixels3, world[3], pixels[3], f, principal_point).0;
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    let focal = if f1 < f2 { x1 } else { x2 };

    let mut candidates = p3p_solve(&world3, &pixels3, focal, principal_point);
    candidates.sort_by(|p, q| {
        let ep = reprojection_error(p, world[3], pixels[3]);
        let eq = reprojection_error(q, world[3], pixels[3]);
        ep.partial_cmp(&eq).expect("finite reprojection")
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use nalgebra::Matrix3;
    use rand::Rng;

    #[test]
    fn recovers_focal_within_a_tenth_of_a_percent() {
        let mut rng = derive_rng(2024, 4, 0);
        let pp = Vector2::new(512.0, 384.0);
        for case in 0..60 {
            let true_focal = rng.gen_range(500.0..3000.0);
            let pose = CameraPose {
                rotation: nalgebra::Rotation3::from_euler_angles(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-3.0..3.0),
                )
                .into_inner(),
                center: Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                ),
                focal: true_focal,
                principal_point: pp,
            };
            let mut world = Vec::new();
            let mut pixels = Vec::new();
            while world.len() < 4 {
                let cam = Vector3::new(
                    rng.gen_range(-0.35..0.35),
                    rng.gen_range(-0.35..0.35),
                    rng.gen_range(3.0..15.0),
                );
                let w = pose.rotation.transpose() * cam + pose.center;
                if let Some(px) = pose.project(w) {
                    world.push(w);
                    pixels.push(px);
                }
            }
            let world: [Vector3<f64>; 4] = [world[0], world[1], world[2], world[3]];
            let pixels: [Vector2<f64>; 4] = [pixels[0], pixels[1], pixels[2], pixels[3]];
            if (0..4).any(|i| {
                let rest: Vec<_> = (0..4).filter(|&j| j != i).map(|j| world[j]).collect();
                are_collinear(rest[0], rest[1], rest[2])
            }) {
                continue;
            }
            let candidates = p4p_solve(&world, &pixels, pp);
            let best = candidates
                .iter()
                .map(|c| (c.focal - true_focal).abs() / true_focal)
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-3, "case {case}: relative focal error {best}");
        }
    }

    #[test]
    fn worked_focal_example() {
        let pp = Vector2::new(512.0, 384.0);
        let pose = CameraPose {
            rotation: Matrix3::identity(),
            center: Vector3::new(0.0, 0.0, -1.0),
            focal: 1200.0,
            principal_point: pp,
        };
        let world = [
            Vector3::new(-1.0, -0.6, 7.0),
            Vector3::new(1.2, -0.5, 9.0),
            Vector3::new(0.3, 1.1, 6.0),
            Vector3::new(-0.4, 0.8, 11.0),
        ];
        let pixels = [
            pose.project(world[0]).unwrap(),
            pose.project(world[1]).unwrap(),
            pose.project(world[2]).unwrap(),
            pose.project(world[3]).unwrap(),
        ];
        let candidates = p4p_solve(&world, &pixels, pp);
        let best = candidates
            .iter()
            .map(|c| (c.focal - 1200.0).abs() / 1200.0)
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 1e-3, "relative focal error {best}");
    }

    #[test]
    fn three_collinear_of_four_is_degenerate() {
        let pp = Vector2::new(500.0, 500.0);
        let world = [
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(1.0, 0.0, 5.0),
            Vector3::new(2.0, 0.0, 5.0),
            Vector3::new(0.0, 1.0, 6.0),
        ];
        let pixels = [Vector2::new(500.0, 500.0); 4];
        assert!(p4p_solve(&world, &pixels, pp).is_empty());
    }

    #[test]
    fn coplanar_points_still_return_candidates() {
        let pp = Vector2::new(512.0, 384.0);
        let pose = CameraPose {
            rotation: nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3).into_inner(),
            center: Vector3::new(0.5, -0.2, 0.0),
            focal: 900.0,
            principal_point: pp,
        };
        // all four on the z = 8 plane, no three collinear
        let world = [
            Vector3::new(-1.0, -1.0, 8.0),
            Vector3::new(1.0, -1.0, 8.0),
            Vector3::new(1.0, 1.0, 8.0),
            Vector3::new(-0.8, 1.1, 8.0),
        ];
        let pixels = [
            pose.project(world[0]).unwrap(),
            pose.project(world[1]).unwrap(),
            pose.project(world[2]).unwrap(),
            pose.project(world[3]).unwrap(),
        ];
        let candidates = p4p_solve(&world, &pixels, pp);
        assert!(!candidates.is_empty());
        let best = candidates
            .iter()
            .map(|c| (c.focal - 900.0).abs() / 900.0)
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 1e-3, "relative focal error {best}");
    }
}
