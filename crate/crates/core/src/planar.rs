//! Ground-plane handling for planar calibration.
//!
//! Planes use the Hesse normal form `n·x + d = 0` in the sensor frame. The
//! aligning displacement `G` maps that plane onto `z = 0`; motions are
//! conjugated into the aligned frame, the planar calibration `T_p` is solved
//! there, and `T = G_a* · T_p · G_b` lifts it back. The height, roll and
//! pitch of the lifted calibration come entirely from the two planes.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualquat::{DualQuat, Quat, TOL_UNIT};
use crate::error::{Error, Result};
use crate::linalg::SymEigen;

const AXIS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub normal: Vector3<f64>,
    pub distance: f64,
}

impl GroundPlane {
    pub fn new(normal: Vector3<f64>, distance: f64) -> Result<Self> {
        let n = normal.norm();
        if (n - 1.0).abs() > TOL_UNIT {
            return Err(Error::NonUnitAxis(n));
        }
        Ok(Self { normal, distance })
    }

    /// Signed distance of a point to the plane.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.distance
    }

    /// The same plane expressed after applying displacement `g` to space.
    pub fn transformed(&self, g: DualQuat) -> GroundPlane {
        let normal = g.real.rotate(&self.normal);
        let distance = self.distance - normal.dot(&g.translation());
        GroundPlane { normal, distance }
    }
}

/// Displacement that maps the plane onto the xy-plane with its normal along
/// `+e_z`.
pub fn plane_alignment_dq(plane: &GroundPlane) -> DualQuat {
    let v = plane.normal;
    let ez = Vector3::z();
    let axis = v.cross(&ez);
    let s = axis.norm();
    let c = v.dot(&ez);
    let rot = if s > AXIS_EPS {
        Quat::from_axis_angle(&(axis / s), s.atan2(c))
    } else if c > 0.0 {
        Quat::IDENTITY
    } else {
        Quat::from_axis_angle(&Vector3::x(), std::f64::consts::PI)
    };
    DualQuat::from_rotation_translation(rot, &(ez * plane.distance))
}

/// Motion `q` expressed in the frame aligned by `g`: `g · q · g*`.
pub fn project_motion(q: DualQuat, g: DualQuat) -> Result<DualQuat> {
    q.ensure_unit()?;
    g.ensure_unit()?;
    Ok(project_motion_unchecked(q, g))
}

pub(crate) fn project_motion_unchecked(q: DualQuat, g: DualQuat) -> DualQuat {
    (g * q * g.conjugate()).canonicalize()
}

/// Planar calibration that corresponds to a full calibration `T`.
pub fn project_calibration(t: DualQuat, g_a: DualQuat, g_b: DualQuat) -> DualQuat {
    (g_a * t * g_b.conjugate()).canonicalize()
}

/// Full calibration `G_a* · T_p · G_b` from a planar one.
pub fn lift_calibration(t_p: DualQuat, g_a: DualQuat, g_b: DualQuat) -> Result<DualQuat> {
    t_p.ensure_unit()?;
    g_a.ensure_unit()?;
    g_b.ensure_unit()?;
    Ok((g_a.conjugate() * t_p * g_b).canonicalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacOptions {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 0.05,
            seed: 0,
        }
    }
}

fn plane_through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<GroundPlane> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    let scale = (b - a).norm().max((c - a).norm());
    if len <= 1e-12 * scale * scale {
        return None;
    }
    let normal = n / len;
    Some(oriented(normal, -normal.dot(a)))
}

fn oriented(normal: Vector3<f64>, distance: f64) -> GroundPlane {
    if distance < 0.0 {
        GroundPlane {
            normal: -normal,
            distance: -distance,
        }
    } else {
        GroundPlane { normal, distance }
    }
}

/// Total least-squares plane through the given points.
fn refine(points: &[Vector3<f64>]) -> GroundPlane {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let normal = SymEigen::new(&cov).min_vector().normalize();
    oriented(normal, -normal.dot(&centroid))
}

/// RANSAC plane fit followed by a least-squares refit on the inliers. The
/// normal is oriented so that the distance is nonnegative.
pub fn fit_ground_plane(points: &[Vector3<f64>], opts: &RansacOptions) -> Result<GroundPlane> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(usize, GroundPlane)> = None;
    let iterations = if points.len() == 3 {
        1
    } else {
        opts.iterations.max(1)
    };
    for _ in 0..iterations {
        let idx = sample(&mut rng, points.len(), 3);
        let Some(plane) = plane_through(
            &points[idx.index(0)],
            &points[idx.index(1)],
            &points[idx.index(2)],
        ) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| plane.signed_distance(p).abs() <= opts.inlier_threshold)
            .count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, plane));
        }
    }
    let (_, plane) = best
        .ok_or_else(|| Error::DegenerateInput("all sampled point triples are collinear".into()))?;
    let inliers: Vec<_> = points
        .iter()
        .copied()
        .filter(|p| plane.signed_distance(p).abs() <= opts.inlier_threshold)
        .collect();
    if inliers.len() < 3 {
        return Ok(plane);
    }
    let refined = refine(&inliers);
    Ok(if refined.normal.dot(&plane.normal) < 0.0 {
        // Keep the orientation convention of the sampled plane.
        oriented(-refined.normal, -refined.distance)
    } else {
        refined
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{max_violation, ConstraintMode};
    use crate::sampling::{random_rotation, random_unit_dq, random_unit_vector};
    use rand::Rng;

    fn planar_motion<R: Rng>(rng: &mut R) -> DualQuat {
        let yaw = rng.random_range(-1.0..1.0);
        let t = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            0.0,
        );
        DualQuat::from_rot_trans(&Vector3::z(), yaw, &t).unwrap()
    }

    #[test]
    fn alignment_examples() {
        let id = plane_alignment_dq(&GroundPlane::new(Vector3::z(), 0.0).unwrap());
        assert_eq!(id, DualQuat::IDENTITY);

        let up = plane_alignment_dq(&GroundPlane::new(Vector3::z(), 1.5).unwrap());
        assert_eq!(up.real, Quat::IDENTITY);
        assert!((up.translation() - Vector3::new(0.0, 0.0, 1.5)).norm() < 1e-15);
    }

    #[test]
    fn alignment_maps_plane_points_to_xy() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut normals = vec![Vector3::x(), -Vector3::z(), Vector3::z()];
        normals.extend((0..20).map(|_| random_unit_vector(&mut rng)));
        for n in normals {
            let d = rng.random_range(-3.0..3.0);
            let plane = GroundPlane::new(n, d).unwrap();
            let g = plane_alignment_dq(&plane);
            let u = n.cross(&Vector3::new(0.3, 0.7, 0.2)).normalize();
            let w = n.cross(&u);
            for _ in 0..100 {
                let p =
                    -n * d + u * rng.random_range(-10.0..10.0) + w * rng.random_range(-10.0..10.0);
                assert!(g.transform_point(&p).unwrap().z.abs() < 1e-9);
            }
            let aligned = plane.transformed(g);
            assert!((aligned.normal - Vector3::z()).norm() < 1e-9);
            assert!(aligned.distance.abs() < 1e-9);
        }
    }

    #[test]
    fn x_normal_rotates_about_negative_y() {
        let g = plane_alignment_dq(&GroundPlane::new(Vector3::x(), 0.0).unwrap());
        let (axis, angle, _) = g.to_rot_trans().unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((axis - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_of_tilted_planar_motion_is_planar() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let g = random_unit_dq(&mut rng, 3.0);
            let m = planar_motion(&mut rng);
            // The same motion as seen in a frame where the plane is tilted.
            let tilted = g.conjugate() * m * g;
            let p = project_motion(tilted, g).unwrap();
            let v = p.to_vec();
            assert!(v[1].abs() < 1e-9 && v[2].abs() < 1e-9);
            assert!(p.translation().z.abs() < 1e-9);
            assert!(max_violation(&v, ConstraintMode::Planar) < 1e-9);
        }
    }

    #[test]
    fn projection_is_a_homomorphism_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let (p, q, g) = (
                random_unit_dq(&mut rng, 2.0),
                random_unit_dq(&mut rng, 2.0),
                random_unit_dq(&mut rng, 2.0),
            );
            let lhs = project_motion(p * q, g).unwrap().to_vec();
            let rhs = (project_motion(p, g).unwrap() * project_motion(q, g).unwrap())
                .canonicalize()
                .to_vec();
            assert!((lhs - rhs).amax() < 1e-10);
            let back = project_motion(project_motion(p, g).unwrap(), g.conjugate()).unwrap();
            assert!((back.to_vec() - p.canonicalize().to_vec()).amax() < 1e-12);
        }
        let q = random_unit_dq(&mut rng, 1.0);
        assert_eq!(
            project_motion(q, DualQuat::IDENTITY).unwrap(),
            q.canonicalize()
        );
    }

    #[test]
    fn lift_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let (t, g_a, g_b) = (
                random_unit_dq(&mut rng, 5.0),
                random_unit_dq(&mut rng, 2.0),
                random_unit_dq(&mut rng, 2.0),
            );
            let t_p = project_calibration(t, g_a, g_b);
            let lifted = lift_calibration(t_p, g_a, g_b).unwrap();
            assert!((lifted.to_vec() - t.canonicalize().to_vec()).amax() < 1e-12);
        }
        let g = random_unit_dq(&mut rng, 1.0);
        let lifted = lift_calibration(DualQuat::IDENTITY, g, g).unwrap();
        assert!((lifted.to_vec() - DualQuat::IDENTITY.to_vec()).amax() < 1e-12);
        let t_p = planar_motion(&mut rng);
        assert_eq!(
            lift_calibration(t_p, DualQuat::IDENTITY, DualQuat::IDENTITY).unwrap(),
            t_p.canonicalize()
        );
    }

    #[test]
    fn planar_calibration_closes_loop_in_aligned_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let t = random_unit_dq(&mut rng, 3.0);
        let (g_a, g_b) = (random_unit_dq(&mut rng, 2.0), random_unit_dq(&mut rng, 2.0));
        let q_b = random_unit_dq(&mut rng, 1.0);
        let q_a = t * q_b * t.conjugate();
        let t_p = project_calibration(t, g_a, g_b);
        let lhs = project_motion(q_a, g_a).unwrap() * t_p;
        let rhs = t_p * project_motion(q_b, g_b).unwrap();
        let (l, r) = (lhs.canonicalize().to_vec(), rhs.canonicalize().to_vec());
        assert!((l - r).amax() < 1e-12);
    }

    fn plane_points<R: Rng>(rng: &mut R, plane: &GroundPlane, n: usize) -> Vec<Vector3<f64>> {
        let u = plane.normal.cross(&random_unit_vector(rng)).normalize();
        let w = plane.normal.cross(&u);
        (0..n)
            .map(|_| {
                -plane.normal * plane.distance
                    + u * rng.random_range(-10.0..10.0)
                    + w * rng.random_range(-10.0..10.0)
            })
            .collect()
    }

    #[test]
    fn fit_exact_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let pts = plane_points(
            &mut rng,
            &GroundPlane::new(Vector3::z(), -2.0).unwrap(),
            100,
        );
        let fit = fit_ground_plane(&pts, &RansacOptions::default()).unwrap();
        // Points on z = 2; orientation keeps the distance nonnegative.
        assert!((fit.normal + Vector3::z()).norm() < 1e-9);
        assert!((fit.distance - 2.0).abs() < 1e-9);

        let below = plane_points(&mut rng, &GroundPlane::new(Vector3::z(), 1.7).unwrap(), 100);
        let fit = fit_ground_plane(&below, &RansacOptions::default()).unwrap();
        assert!((fit.normal - Vector3::z()).norm() < 1e-9);
        assert!((fit.distance - 1.7).abs() < 1e-9);
    }

    #[test]
    fn fit_three_points_interpolates() {
        let pts = [
            Vector3::new(1.0, 0.0, 1.0),
            Vector3::new(0.0, 1.0, 1.0),
            Vector3::new(0.0, 0.0, 2.0),
        ];
        let fit = fit_ground_plane(&pts, &RansacOptions::default()).unwrap();
        for p in &pts {
            assert!(fit.signed_distance(p).abs() < 1e-12);
        }
        assert!(fit.distance >= 0.0);
    }

    #[test]
    fn fit_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let truth = GroundPlane::new(random_rotation(&mut rng).rotate(&Vector3::z()), 1.2).unwrap();
        let mut pts = plane_points(&mut rng, &truth, 700);
        for p in pts.iter_mut() {
            *p += truth.normal * rng.random_range(-0.01..0.01);
        }
        pts.extend((0..300).map(|_| Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0))));
        let fit = fit_ground_plane(
            &pts,
            &RansacOptions {
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let angle = fit.normal.dot(&truth.normal).abs().min(1.0).acos();
        assert!(angle.to_degrees() < 0.5, "angle {}", angle.to_degrees());
        assert!((fit.distance - truth.distance).abs() < 0.02);
    }

    #[test]
    fn collinear_points_rejected() {
        let pts: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            fit_ground_plane(&pts, &RansacOptions::default()),
            Err(Error::DegenerateInput(_))
        ));
        assert!(fit_ground_plane(&pts[..2], &RansacOptions::default()).is_err());
    }

    #[test]
    fn non_unit_normal_rejected() {
        assert!(GroundPlane::new(Vector3::new(0.0, 0.0, 2.0), 1.0).is_err());
    }
}
