//! Three-point pose solver for a calibrated camera (known focal length).
//!
//! Classical distance-based formulation: the three unknown point depths
//! reduce to a quartic in one depth ratio, solved via the companion
//! matrix and polished by Newton steps; the rigid transform is then
//! recovered by aligning point triads.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use super::{are_collinear, bearing, orthonormalize, CameraPose};

/// Real roots of a polynomial with coefficients `c[0] + c[1] x + ...`,
/// highest degree 4. Uses companion-matrix eigenvalues, then Newton
/// polish; near-duplicate roots are merged.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let max_mag = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max_mag == 0.0 {
        return Vec::new();
    }
    // Trim negligible leading coefficients so the companion matrix stays
    // well conditioned.
    let mut degree = coeffs.len() - 1;
    while degree > 0 && coeffs[degree].abs() <= 1e-14 * max_mag {
        degree -= 1;
    }
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }

    let lead = coeffs[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for r in 1..degree {
        companion[(r, r - 1)] = 1.0;
    }
    for r in 0..degree {
        companion[(r, degree - 1)] = -coeffs[r] / lead;
    }
    let eigen = companion.complex_eigenvalues();

    let eval = |x: f64| -> (f64, f64) {
        let mut value = 0.0;
        let mut derivative = 0.0;
        for &c in coeffs[..=degree].iter().rev() {
            derivative = derivative * x + value;
            value = value * x + c;
        }
        (value, derivative)
    };

    let mut roots: Vec<f64> = Vec::new();
    for lambda in eigen.iter() {
        if lambda.im.abs() > 1e-8 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let mut x = lambda.re;
        for _ in 0..8 {
            let (value, derivative) = eval(x);
            if derivative.abs() < 1e-300 {
                break;
            }
            let step = value / derivative;
            x -= step;
            if step.abs() <= 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        if !x.is_finite() {
            continue;
        }
        if !roots.iter().any(|&r| (r - x).abs() <= 1e-9 * (1.0 + x.abs())) {
            roots.push(x);
        }
    }
    roots
}

fn convolve<const N: usize, const M: usize>(a: &[f64; N], b: &[f64; M]) -> Vec<f64> {
    let mut out = vec![0.0; N + M - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Newton refinement of the three depths on the pairwise-distance system.
fn refine_depths(
    mut s: Vector3<f64>,
    aa: f64,
    bb: f64,
    cc: f64,
    cos_a: f64,
    cos_b: f64,
    cos_g: f64,
) -> Vector3<f64> {
    let residual = |s: &Vector3<f64>| {
        Vector3::new(
            s.y * s.y + s.z * s.z - 2.0 * s.y * s.z * cos_a - aa,
            s.x * s.x + s.z * s.z - 2.0 * s.x * s.z * cos_b - bb,
            s.x * s.x + s.y * s.y - 2.0 * s.x * s.y * cos_g - cc,
        )
    };
    let mut r = residual(&s);
    for _ in 0..5 {
        if r.abs().max() <= 1e-14 * (aa + bb + cc) {
            break;
        }
        let jac = Matrix3::new(
            0.0,
            2.0 * (s.y - s.z * cos_a),
            2.0 * (s.z - s.y * cos_a),
            2.0 * (s.x - s.z * cos_b),
            0.0,
            2.0 * (s.z - s.x * cos_b),
            2.0 * (s.x - s.y * cos_g),
            2.0 * (s.y - s.x * cos_g),
            0.0,
        );
        let Some(delta) = jac.lu().solve(&r) else { break };
        let next = s - delta;
        let next_r = residual(&next);
        if next_r.abs().max() >= r.abs().max() {
            break;
        }
        s = next;
        r = next_r;
    }
    s
}

/// Solves the perspective-three-point problem for pixel observations of
/// three world points under a known focal length and principal point.
///
/// Returns zero to four world-to-camera poses; collinear or numerically
/// degenerate triples yield an empty set. On exact inputs the generating
/// pose reprojects the three points to well under 1e-6 px.
pub fn p3p_solve(
    world: &[Vector3<f64>; 3],
    pixels: &[Vector2<f64>; 3],
    focal: f64,
    principal_point: Vector2<f64>,
) -> Vec<CameraPose> {
    if !(focal > 0.0) || are_collinear(world[0], world[1], world[2]) {
        return Vec::new();
    }

    let f1 = bearing(pixels[0], focal, principal_point);
    let f2 = bearing(pixels[1], focal, principal_point);
    let f3 = bearing(pixels[2], focal, principal_point);

    let aa = (world[1] - world[2]).norm_squared();
    let bb = (world[0] - world[2]).norm_squared();
    let cc = (world[0] - world[1]).norm_squared();
    if aa == 0.0 || bb == 0.0 || cc == 0.0 {
        return Vec::new();
    }
    let cos_a = f2.dot(&f3);
    let cos_b = f1.dot(&f3);
    let cos_g = f1.dot(&f2);

    // Depth ratios u = s2/s1, v = s3/s1. Eliminating u yields a quartic in
    // v; u follows rationally from v.
    let ab = aa / bb;
    let cb = cc / bb;
    let diff = ab - cb;
    let num = [1.0 + diff, -2.0 * cos_b * diff, diff - 1.0];
    let den = [2.0 * cos_g, -2.0 * cos_a];
    let gate = [1.0 - cb, 2.0 * cb * cos_b, -cb];

    let num_sq = convolve(&num, &num);
    let num_den = convolve(&num, &den);
    let den_sq = convolve(&den, &den);
    let den_gate = convolve(&[den_sq[0], den_sq[1], den_sq[2]], &gate);

    let mut quartic = [0.0f64; 5];
    for i in 0..5 {
        quartic[i] += num_sq[i];
        if i < num_den.len() {
            quartic[i] -= 2.0 * cos_g * num_den[i];
        }
        quartic[i] += den_gate[i];
    }

    let mut poses = Vec::new();
    for v in real_roots(&quartic) {
        if v <= 0.0 {
            continue;
        }
        let dv = den[0] + den[1] * v;
        if dv.abs() <= 1e-12 {
            continue;
        }
        let u = (num[0] + num[1] * v + num[2] * v * v) / dv;
        if u <= 0.0 {
            continue;
        }
        let e = 1.0 + v * v - 2.0 * v * cos_b;
        if e <= 0.0 {
            continue;
        }
        let s1 = (bb / e).sqrt();
        let depths = refine_depths(
            Vector3::new(s1, u * s1, v * s1),
            aa,
            bb,
            cc,
            cos_a,
            cos_b,
            cos_g,
        );
        if !(depths.x > 0.0 && depths.y > 0.0 && depths.z > 0.0) {
            continue;
        }

        let y1 = f1 * depths.x;
        let y2 = f2 * depths.y;
        let y3 = f3 * depths.z;

        let xd1 = world[0] - world[2];
        let xd2 = world[1] - world[2];
        let yd1 = y1 - y3;
        let yd2 = y2 - y3;
        let m_world = Matrix3::from_columns(&[xd1, xd2, xd1.cross(&xd2)]);
        let m_cam = Matrix3::from_columns(&[yd1, yd2, yd1.cross(&yd2)]);
        let Some(world_inv) = m_world.try_inverse() else { continue };
        let rotation = orthonormalize(m_cam * world_inv);
        if rotation.determinant() <= 0.0 {
            continue;
        }
        let translation = y3 - rotation * world[2];
        let center = -(rotation.transpose() * translation);
        let pose = CameraPose { rotation, center, focal, principal_point };

        // Junk filter: a true solution reprojects the sample exactly.
        let max_err = world
            .iter()
            .zip(pixels.iter())
            .map(|(&w, &px)| super::reprojection_error(&pose, w, px))
            .fold(0.0f64, f64::max);
        if max_err < 1e-3 {
            poses.push(pose);
        }
    }
    poses
}
