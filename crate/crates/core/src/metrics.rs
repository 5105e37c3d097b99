//! Calibration error between an estimate and ground truth.

use serde::{Deserialize, Serialize};

use crate::dualquat::DualQuat;
use crate::error::Result;

/// Rotation error in radians and translation error in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibError {
    pub eps_r: f64,
    pub eps_t: f64,
}

impl CalibError {
    pub fn eps_r_deg(&self) -> f64 {
        self.eps_r.to_degrees()
    }
}

/// Errors of the residual displacement `q_ε = q_true* · q_hat`: its
/// rotation angle and the length of its translation.
pub fn calib_error(q_hat: &DualQuat, q_true: &DualQuat) -> Result<CalibError> {
    let e = (q_true.ensure_unit()?.conjugate() * q_hat.ensure_unit()?).canonicalize();
    // Same angle as 2·acos(w), without its loss of precision near zero.
    let eps_r = 2.0 * e.real.vector().norm().atan2(e.real.w.clamp(-1.0, 1.0));
    let eps_t = e.translation().norm();
    Ok(CalibError { eps_r, eps_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_unit_dq;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let q = random_unit_dq(&mut rng, 3.0);
        let e = calib_error(&q, &q).unwrap();
        assert!(e.eps_r < 1e-12 && e.eps_t < 1e-12);
    }

    #[test]
    fn pure_translation_offset() {
        let t = DualQuat::IDENTITY;
        let h = DualQuat::pure_translation(&Vector3::new(0.1, 0.0, 0.0));
        let e = calib_error(&h, &t).unwrap();
        assert_eq!(e.eps_r, 0.0);
        assert!((e.eps_t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn yaw_offset_matches_trace_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..50 {
            let t = random_unit_dq(&mut rng, 3.0);
            let yaw =
                DualQuat::from_rot_trans(&Vector3::z(), 10f64.to_radians(), &Vector3::zeros())
                    .unwrap();
            let h = t * yaw;
            let e = calib_error(&h, &t).unwrap();
            assert!((e.eps_r - 10f64.to_radians()).abs() < 1e-12);
            // Oracle: geodesic angle from the relative rotation matrix.
            let rel = t.real.to_rotation_matrix().transpose() * h.real.to_rotation_matrix();
            let angle = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            assert!((e.eps_r - angle).abs() < 1e-7);
            assert!(e.eps_t < 1e-12);
        }
    }

    #[test]
    fn sign_and_left_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let (h, t, d) = (
                random_unit_dq(&mut rng, 3.0),
                random_unit_dq(&mut rng, 3.0),
                random_unit_dq(&mut rng, 3.0),
            );
            let e1 = calib_error(&h, &t).unwrap();
            let e2 = calib_error(&-h, &t).unwrap();
            assert!((e1.eps_r - e2.eps_r).abs() < 1e-12 && (e1.eps_t - e2.eps_t).abs() < 1e-12);
            let e3 = calib_error(&(d * h), &(d * t)).unwrap();
            assert!((e1.eps_r - e3.eps_r).abs() < 1e-9 && (e1.eps_t - e3.eps_t).abs() < 1e-9);
            assert!((0.0..=std::f64::consts::PI).contains(&e1.eps_r));
            // Physical semantics: translation offset of the residual displacement.
            let m = t.to_homogeneous().try_inverse().unwrap() * h.to_homogeneous();
            let off = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]).norm();
            assert!((e1.eps_t - off).abs() < 1e-9);
        }
    }
}
