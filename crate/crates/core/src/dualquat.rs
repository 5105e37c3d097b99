//! Quaternion and dual-quaternion algebra.
//!
//! Quaternions are stored scalar-first, `(w, x, y, z)`. A dual quaternion
//! `q = q_r + ε q_d` vectorizes to the 8-vector `[q_r; q_d]`.
//!
//! Products follow matrix order: `p * q` represents "apply `q`, then `p`",
//! i.e. it corresponds to the homogeneous product `T_p · T_q`. Composing
//! displacement `a` followed by displacement `b` is therefore `b * a`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat8, Vec8};

/// Tolerance on the unit-dual-quaternion constraints.
pub const TOL_UNIT: f64 = 1e-9;

/// Constructors renormalize inputs that violate the unit constraints by at
/// most this much and reject anything worse.
pub const TOL_RENORMALIZE: f64 = 1e-6;

const TOL_SIGN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quat = Quat::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about unit `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn from_vec(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vec(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Matrix `M` with `vec(self * q) = M vec(q)`.
    pub fn left_mat(self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Matrix `M` with `vec(p * self) = M vec(p)`.
    pub fn right_mat(self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rotation_matrix(self) -> Matrix3<f64> {
        let Quat { w, x, y, z } = self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Unit quaternion of a rotation matrix (Shepperd's method). The input
    /// is assumed orthonormal.
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = 2.0 * (1.0 + trace).sqrt();
            Quat::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Quat::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Quat::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Quat::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.scale(1.0 / q.norm())
    }

    /// Rotates `v` by a unit quaternion.
    pub fn rotate(self, v: &Vector3<f64>) -> Vector3<f64> {
        (self * Quat::pure(v) * self.conjugate()).vector()
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, q: Quat) -> Quat {
        let p = self;
        Quat::new(
            p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
            p.w * q.x + p.x * q.w + p.y * q.z - p.z * q.y,
            p.w * q.y - p.x * q.z + p.y * q.w + p.z * q.x,
            p.w * q.z + p.x * q.y - p.y * q.x + p.z * q.w,
        )
    }
}

impl Add for Quat {
    type Output = Quat;
    fn add(self, q: Quat) -> Quat {
        Quat::new(self.w + q.w, self.x + q.x, self.y + q.y, self.z + q.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    fn sub(self, q: Quat) -> Quat {
        Quat::new(self.w - q.w, self.x - q.x, self.y - q.y, self.z - q.z)
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        self.scale(-1.0)
    }
}

/// Dual quaternion `real + ε dual`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualQuat {
    pub real: Quat,
    pub dual: Quat,
}

impl Default for DualQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl DualQuat {
    pub const IDENTITY: DualQuat = DualQuat {
        real: Quat::IDENTITY,
        dual: Quat::ZERO,
    };

    pub const fn new(real: Quat, dual: Quat) -> Self {
        Self { real, dual }
    }

    /// Builds `r + ε ½ t r` from a rotation quaternion and a translation.
    pub fn from_rotation_translation(rotation: Quat, t: &Vector3<f64>) -> Self {
        Self::new(rotation, (Quat::pure(t) * rotation).scale(0.5)).canonicalize()
    }

    /// Rigid displacement rotating by `angle` about `axis`, then translating
    /// by `t`. The axis is ignored when the angle is zero.
    pub fn from_rot_trans(axis: &Vector3<f64>, angle: f64, t: &Vector3<f64>) -> Result<Self> {
        if angle == 0.0 {
            return Ok(Self::from_rotation_translation(Quat::IDENTITY, t));
        }
        let n = axis.norm();
        if (n - 1.0).abs() > TOL_UNIT {
            return Err(Error::NonUnitAxis(n));
        }
        Ok(Self::from_rotation_translation(
            Quat::from_axis_angle(axis, angle),
            t,
        ))
    }

    pub fn pure_translation(t: &Vector3<f64>) -> Self {
        Self::from_rotation_translation(Quat::IDENTITY, t)
    }

    pub fn from_vec(v: &Vec8) -> Self {
        Self::new(
            Quat::new(v[0], v[1], v[2], v[3]),
            Quat::new(v[4], v[5], v[6], v[7]),
        )
    }

    pub fn to_vec(self) -> Vec8 {
        let (r, d) = (self.real, self.dual);
        Vec8::from([r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z])
    }

    /// Validates an arbitrary 8-vector as a rigid displacement: inputs within
    /// [`TOL_RENORMALIZE`] of the unit constraints are renormalized, anything
    /// else is rejected. The result is canonical.
    pub fn from_vec_checked(v: &Vec8) -> Result<Self> {
        Self::from_vec(v).renormalized()
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.real.conjugate(), self.dual.conjugate())
    }

    /// Inverse of a unit dual quaternion (its conjugate).
    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.real.scale(s), self.dual.scale(s))
    }

    /// Residuals of the two unit conditions: `(‖q_r‖² − 1, 2⟨q_r, q_d⟩)`.
    pub fn unit_residual(self) -> (f64, f64) {
        (
            self.real.norm_squared() - 1.0,
            2.0 * self.real.dot(self.dual),
        )
    }

    fn unit_violation(self) -> f64 {
        let (a, b) = self.unit_residual();
        a.abs().max(b.abs())
    }

    pub fn is_unit(self) -> bool {
        self.unit_violation() <= TOL_UNIT
    }

    pub fn ensure_unit(self) -> Result<Self> {
        let v = self.unit_violation();
        if v <= TOL_UNIT {
            Ok(self)
        } else {
            Err(Error::NotUnit(v))
        }
    }

    /// Projects onto the unit manifold when within [`TOL_RENORMALIZE`]:
    /// normalize the real part and remove the dual component along it.
    pub fn renormalized(self) -> Result<Self> {
        let v = self.unit_violation();
        if !(v <= TOL_RENORMALIZE) {
            return Err(Error::NotUnit(v));
        }
        let n = self.real.norm();
        let real = self.real.scale(1.0 / n);
        let dual = self.dual.scale(1.0 / n);
        let dual = dual - real.scale(real.dot(dual));
        Ok(Self::new(real, dual).canonicalize())
    }

    /// Picks the sign with a positive real scalar. When that scalar is zero
    /// the first remaining nonzero component is made positive.
    pub fn canonicalize(self) -> Self {
        let w = self.real.w;
        if w > TOL_SIGN {
            return self;
        }
        if w < -TOL_SIGN {
            return -self;
        }
        let v = self.to_vec();
        match v.iter().skip(1).find(|c| c.abs() > TOL_SIGN) {
            Some(c) if *c < 0.0 => -self,
            _ => self,
        }
    }

    pub fn rotation(self) -> Quat {
        self.real
    }

    /// Translation `2 q_d q_r*`.
    pub fn translation(self) -> Vector3<f64> {
        (self.dual * self.real.conjugate()).scale(2.0).vector()
    }

    /// Axis, angle in `[0, π]` and translation. The axis of a zero rotation
    /// is reported as `(1, 0, 0)`.
    pub fn to_rot_trans(self) -> Result<(Vector3<f64>, f64, Vector3<f64>)> {
        let q = self.ensure_unit()?.canonicalize();
        let v = q.real.vector();
        let s = v.norm();
        let angle = 2.0 * s.atan2(q.real.w);
        let axis = if s > 1e-15 { v / s } else { Vector3::x() };
        Ok((axis, angle, q.translation()))
    }

    /// Applies the displacement to a point: `q (1 + ε v) q*` with the
    /// dual-conjugate, i.e. `R v + t`.
    pub fn transform_point(self, v: &Vector3<f64>) -> Result<Vector3<f64>> {
        let q = self.ensure_unit()?;
        Ok(q.real.rotate(v) + q.translation())
    }

    /// Matrix `Q^l` with `vec(self * q) = Q^l vec(q)`.
    pub fn left_mat(self) -> Mat8 {
        block_lower(self.real.left_mat(), self.dual.left_mat())
    }

    /// Matrix `Q^r` with `vec(p * self) = Q^r vec(p)`.
    pub fn right_mat(self) -> Mat8 {
        block_lower(self.real.right_mat(), self.dual.right_mat())
    }

    pub fn to_homogeneous(self) -> Matrix4<f64> {
        let r = self.real.to_rotation_matrix();
        let t = self.translation();
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    /// Converts a rigid homogeneous matrix; the rotation block must be
    /// orthonormal.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::from_rotation_translation(Quat::from_rotation_matrix(&r), &t)
    }
}

fn block_lower(diag: Matrix4<f64>, lower: Matrix4<f64>) -> Mat8 {
    let mut m = Mat8::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&diag);
    m.fixed_view_mut::<4, 4>(4, 4).copy_from(&diag);
    m.fixed_view_mut::<4, 4>(4, 0).copy_from(&lower);
    m
}

impl Mul for DualQuat {
    type Output = DualQuat;

    fn mul(self, q: DualQuat) -> DualQuat {
        let p = self;
        DualQuat::new(p.real * q.real, p.real * q.dual + p.dual * q.real)
    }
}

impl Neg for DualQuat {
    type Output = DualQuat;
    fn neg(self) -> DualQuat {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_dq, random_unit_dq};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn assert_dq_close(a: DualQuat, b: DualQuat, tol: f64) {
        let d = (a.to_vec() - b.to_vec()).amax();
        assert!(d < tol, "{a:?} vs {b:?} (diff {d:e})");
    }

    #[test]
    fn quat_basis_laws() {
        let i = Quat::new(0.0, 1.0, 0.0, 0.0);
        let j = Quat::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(i * j, Quat::new(0.0, 0.0, 0.0, 1.0));
        let q = Quat::new(0.3, -0.2, 0.9, 0.1);
        assert_eq!(Quat::IDENTITY * q, q);
        assert_eq!(q * Quat::IDENTITY, q);
    }

    #[test]
    fn quat_product_matches_rotation_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = random_unit_dq(&mut rng, 1.0).real;
            let q = random_unit_dq(&mut rng, 1.0).real;
            let lhs = (p * q).to_rotation_matrix();
            let rhs = p.to_rotation_matrix() * q.to_rotation_matrix();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn rotation_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let q = random_unit_dq(&mut rng, 1.0).real;
            let back = Quat::from_rotation_matrix(&q.to_rotation_matrix());
            let d = (back.to_vec() - q.to_vec())
                .amax()
                .min((back.to_vec() + q.to_vec()).amax());
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn dq_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit_dq(&mut rng, 3.0);
        assert_eq!(DualQuat::IDENTITY * q, q);
        assert_dq_close(q * q.conjugate(), DualQuat::IDENTITY, 1e-14);
        assert_eq!(DualQuat::IDENTITY.conjugate(), DualQuat::IDENTITY);
        assert_eq!(q.conjugate().conjugate(), q);
    }

    #[test]
    fn conjugate_is_inverse_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let q = random_unit_dq(&mut rng, 5.0);
            let v = Vector3::new(rng.random_range(-3.0..3.0), rng.random(), rng.random());
            let back = q
                .conjugate()
                .transform_point(&q.transform_point(&v).unwrap())
                .unwrap();
            assert!((back - v).amax() < 1e-12);
        }
    }

    #[test]
    fn dq_mul_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = random_unit_dq(&mut rng, 4.0);
            let q = random_unit_dq(&mut rng, 4.0);
            let lhs = (p * q).to_homogeneous();
            let rhs = p.to_homogeneous() * q.to_homogeneous();
            assert!((lhs - rhs).amax() < 1e-12);
            assert!((p * q).is_unit());
        }
    }

    #[test]
    fn from_rot_trans_examples() {
        let q =
            DualQuat::from_rot_trans(&Vector3::new(3.0, 1.0, 0.0), 0.0, &Vector3::zeros()).unwrap();
        assert_eq!(q, DualQuat::IDENTITY);

        let q = DualQuat::from_rot_trans(&Vector3::z(), PI, &Vector3::zeros()).unwrap();
        assert_relative_eq!(q.real.w, 0.0, epsilon = 1e-16);
        assert_eq!((q.real.x, q.real.y, q.real.z), (0.0, 0.0, 1.0));
        assert_eq!(q.dual, Quat::ZERO);

        let err = DualQuat::from_rot_trans(&Vector3::new(1.0, 1.0, 0.0), 0.2, &Vector3::zeros());
        assert!(matches!(err, Err(Error::NonUnitAxis(_))));
    }

    #[test]
    fn from_rot_trans_matches_homogeneous_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let axis =
                Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.3).normalize();
            let angle = rng.random_range(-PI..PI);
            let t = Vector3::new(rng.random(), rng.random(), rng.random()) * 4.0;
            let q = DualQuat::from_rot_trans(&axis, angle, &t).unwrap();

            // Rodrigues rotation, independent of the quaternion route.
            let k = axis.cross_matrix();
            let r = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
            let from_m = DualQuat::from_homogeneous(&m);
            assert_dq_close(q.canonicalize(), from_m.canonicalize(), 1e-12);
        }
    }

    #[test]
    fn to_rot_trans_examples() {
        let (axis, angle, t) = DualQuat::IDENTITY.to_rot_trans().unwrap();
        assert_eq!(axis, Vector3::x());
        assert_eq!(angle, 0.0);
        assert_eq!(t, Vector3::zeros());

        let q = DualQuat::new(Quat::IDENTITY, Quat::new(0.0, 1.0, 0.0, 0.0));
        let (_, angle, t) = q.to_rot_trans().unwrap();
        assert_eq!(angle, 0.0);
        assert_eq!(t, Vector3::new(2.0, 0.0, 0.0));

        let bad = DualQuat::new(Quat::new(1.1, 0.0, 0.0, 0.0), Quat::ZERO);
        assert!(matches!(bad.to_rot_trans(), Err(Error::NotUnit(_))));
    }

    #[test]
    fn rot_trans_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let q = random_unit_dq(&mut rng, 5.0).canonicalize();
            let (axis, angle, t) = q.to_rot_trans().unwrap();
            assert!((0.0..=PI).contains(&angle));
            let back = DualQuat::from_rot_trans(&axis, angle, &t).unwrap();
            worst = worst.max((back.to_vec() - q.to_vec()).amax());
        }
        assert!(worst < 1e-9, "worst round trip {worst:e}");
    }

    #[test]
    fn transform_point_examples() {
        let v = Vector3::new(1.0, -2.0, 0.5);
        assert_eq!(DualQuat::IDENTITY.transform_point(&v).unwrap(), v);
        let t = Vector3::new(0.3, 0.2, -4.0);
        let p = DualQuat::pure_translation(&t).transform_point(&v).unwrap();
        assert!((p - (v + t)).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q = random_unit_dq(&mut rng, 6.0);
            let v = Vector3::new(rng.random(), rng.random(), rng.random()) * 10.0;
            let m = q.to_homogeneous();
            let expected = (m * v.push(1.0)).xyz();
            assert!((q.transform_point(&v).unwrap() - expected).amax() < 1e-10);
            // Double cover.
            let neg = (-q).transform_point(&v).unwrap();
            assert!((neg - expected).amax() < 1e-10);
        }
    }

    #[test]
    fn matrixized_products() {
        assert_eq!(DualQuat::IDENTITY.left_mat(), Mat8::identity());
        assert_eq!(DualQuat::IDENTITY.right_mat(), Mat8::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = random_dq(&mut rng);
            let q = random_dq(&mut rng);
            let pq = (p * q).to_vec();
            assert!((pq - p.left_mat() * q.to_vec()).amax() < 1e-12);
            assert!((p.left_mat() * q.to_vec() - q.right_mat() * p.to_vec()).amax() < 1e-12);
            // Block-lower-triangular structure.
            assert!(p
                .left_mat()
                .fixed_view::<4, 4>(0, 4)
                .iter()
                .all(|&x| x == 0.0));
        }
    }

    #[test]
    fn canonicalize_examples() {
        let q = DualQuat::new(Quat::new(0.5, 0.5, 0.5, 0.5), Quat::ZERO);
        assert_eq!(q.canonicalize(), q);
        assert_eq!((-DualQuat::IDENTITY).canonicalize(), DualQuat::IDENTITY);
        let k = DualQuat::new(
            Quat::new(0.0, 0.0, 0.0, 1.0),
            Quat::new(0.0, 0.3, -0.1, 0.0),
        );
        assert_eq!(k.canonicalize(), (-k).canonicalize());
        assert_eq!(k.canonicalize().canonicalize(), k.canonicalize());
    }

    #[test]
    fn renormalize_projects_small_violations() {
        let q = DualQuat::from_rot_trans(&Vector3::y(), 0.4, &Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let mut v = q.to_vec();
        v[0] += 3e-7;
        v[5] += 2e-7;
        let fixed = DualQuat::from_vec_checked(&v).unwrap();
        assert!(fixed.is_unit());
        v[0] += 1e-3;
        assert!(matches!(
            DualQuat::from_vec_checked(&v),
            Err(Error::NotUnit(_))
        ));
    }
}
