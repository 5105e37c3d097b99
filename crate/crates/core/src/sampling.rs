//! Random rigid displacements for simulation and tests.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dualquat::{DualQuat, Quat};

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Rotation drawn uniformly from SO(3).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let q = Quat::new(v[0], v[1], v[2], v[3]);
    q.scale(1.0 / q.norm())
}

/// Unit dual quaternion with uniform rotation and translation components
/// uniform in `[-max_trans, max_trans]`.
pub fn random_unit_dq<R: Rng + ?Sized>(rng: &mut R, max_trans: f64) -> DualQuat {
    let t = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0) * max_trans);
    DualQuat::from_rotation_translation(random_rotation(rng), &t)
}

/// Arbitrary (generally non-unit) dual quaternion with entries in `[-1, 1]`.
pub fn random_dq<R: Rng + ?Sized>(rng: &mut R) -> DualQuat {
    let v = crate::Vec8::from_fn(|_, _| rng.random_range(-1.0..=1.0));
    DualQuat::from_vec(&v)
}
