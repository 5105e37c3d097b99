//! Equality constraints on the calibration variable and the matrices that
//! carry their Lagrange multipliers.
//!
//! Every constraint has the form `g_j(q) = c_j + qᵀ B_j q` with a symmetric
//! basis matrix `B_j`, so the Lagrangian `qᵀQq + Σ λ_j g_j(q)` equals
//! `qᵀ Z(λ) q + λ₁` with `Z(λ) = Q + Σ λ_j B_j`.
//!
//! | j | constraint                  | `B_j` nonzeros                         |
//! |---|-----------------------------|----------------------------------------|
//! | 1 | `1 − ‖q₁..₄‖²`              | `−1` on the first four diagonal slots  |
//! | 2 | `2 (q₁q₅ + … + q₄q₈)`       | `1` on both off-diagonal identity blocks |
//! | 3 | `q₂² + q₃²` (planar)        | `1` at (2,2), (3,3)                    |
//! | 4 | `q₁q₈ − q₄q₅` (planar)      | `½` at (1,8),(8,1); `−½` at (4,5),(5,4) |
//!
//! Indices in the table are 1-based; the code is 0-based.
//!
//! The planar rotation constraint `q₂² + q₃² = 0` has a vanishing gradient
//! on its own feasible set and its multiplier is unbounded in the dual.
//! We handle it by elimination: the coordinates `q₂, q₃` are fixed to zero
//! and all planar PSD checks and certificates act on the remaining six
//! coordinates, which is exactly the `λ₃ → ∞` limit. Such multipliers carry
//! `λ₃ = +∞`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat8, Vec8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Unit dual quaternion constraints `g₁, g₂`.
    #[default]
    #[serde(rename = "3d")]
    Full3D,
    /// Additionally restricts to rotation about z and translation in the
    /// xy-plane (`g₃, g₄`).
    Planar,
}

impl ConstraintMode {
    pub fn num_constraints(self) -> usize {
        match self {
            ConstraintMode::Full3D => 2,
            ConstraintMode::Planar => 4,
        }
    }

    /// Coordinates that stay free after eliminating `q₂, q₃` in planar mode.
    pub fn active_coords(self) -> &'static [usize] {
        match self {
            ConstraintMode::Full3D => &[0, 1, 2, 3, 4, 5, 6, 7],
            ConstraintMode::Planar => &PLANAR_COORDS,
        }
    }
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintMode::Full3D => "3d",
            ConstraintMode::Planar => "planar",
        })
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" | "full3d" => Ok(ConstraintMode::Full3D),
            "planar" => Ok(ConstraintMode::Planar),
            _ => Err(Error::Config(format!("unknown constraint mode `{s}`"))),
        }
    }
}

/// Coordinates kept in planar mode (`q₂, q₃` eliminated).
pub const PLANAR_COORDS: [usize; 6] = [0, 3, 4, 5, 6, 7];

/// Lagrange multipliers ordered `(λ₁, λ₂[, λ₃, λ₄])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers(Vec<f64>);

impl Multipliers {
    pub fn new(mode: ConstraintMode, values: &[f64]) -> Result<Self> {
        if values.len() != mode.num_constraints() {
            return Err(Error::Config(format!(
                "{mode} mode needs {} multipliers, got {}",
                mode.num_constraints(),
                values.len()
            )));
        }
        Ok(Self(values.to_vec()))
    }

    pub fn zeros(mode: ConstraintMode) -> Self {
        Self(vec![0.0; mode.num_constraints()])
    }

    /// Builds planar multipliers from `(λ₁, λ₂, λ₄)` with `q₂, q₃` eliminated.
    pub fn planar_eliminated(l1: f64, l2: f64, l4: f64) -> Self {
        Self(vec![l1, l2, f64::INFINITY, l4])
    }

    pub fn mode(&self) -> ConstraintMode {
        if self.0.len() == 4 {
            ConstraintMode::Planar
        } else {
            ConstraintMode::Full3D
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The multiplier of the norm constraint, which is also the dual value.
    pub fn lambda1(&self) -> f64 {
        self.0[0]
    }
}

/// Symmetric matrix `B_j` of constraint `j` (0-based).
pub fn basis_matrix(j: usize) -> Mat8 {
    let mut b = Mat8::zeros();
    match j {
        0 => {
            for i in 0..4 {
                b[(i, i)] = -1.0;
            }
        }
        1 => {
            for i in 0..4 {
                b[(i, i + 4)] = 1.0;
                b[(i + 4, i)] = 1.0;
            }
        }
        2 => {
            b[(1, 1)] = 1.0;
            b[(2, 2)] = 1.0;
        }
        3 => {
            b[(0, 7)] = 0.5;
            b[(7, 0)] = 0.5;
            b[(3, 4)] = -0.5;
            b[(4, 3)] = -0.5;
        }
        _ => panic!("constraint index {j} out of range"),
    }
    b
}

fn constant(j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        0.0
    }
}

/// Constraint residuals `g(q)`; all zero iff `q` is a feasible displacement.
pub fn eval_g(q: &Vec8, mode: ConstraintMode) -> Vec<f64> {
    let mut g = vec![
        1.0 - (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]),
        2.0 * (q[0] * q[4] + q[1] * q[5] + q[2] * q[6] + q[3] * q[7]),
    ];
    if mode == ConstraintMode::Planar {
        g.push(q[1] * q[1] + q[2] * q[2]);
        g.push(q[0] * q[7] - q[3] * q[4]);
    }
    g
}

/// Largest absolute constraint residual.
pub fn max_violation(q: &Vec8, mode: ConstraintMode) -> f64 {
    eval_g(q, mode).iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Gradients `∇g_j(q) = 2 B_j q`.
pub fn grad_g(q: &Vec8, mode: ConstraintMode) -> Vec<Vec8> {
    (0..mode.num_constraints())
        .map(|j| basis_matrix(j) * q * 2.0)
        .collect()
}

/// `P(λ) = Σ λ_j B_j`. An infinite `λ₃` marks `q₂, q₃` as eliminated and
/// contributes nothing here; see [`min_eig_active`].
pub fn multiplier_matrices(lambda: &Multipliers, mode: ConstraintMode) -> Mat8 {
    let mut p = Mat8::zeros();
    for (j, &l) in lambda
        .as_slice()
        .iter()
        .enumerate()
        .take(mode.num_constraints())
    {
        if l != 0.0 && l.is_finite() {
            p += basis_matrix(j) * l;
        }
    }
    p
}

/// `Z(λ) = Q + P(λ)`.
pub fn assemble_z(q: &Mat8, lambda: &Multipliers, mode: ConstraintMode) -> Mat8 {
    let z = q + multiplier_matrices(lambda, mode);
    (z + z.transpose()) * 0.5
}

/// Restriction of a symmetric 8×8 matrix to the active coordinates.
pub fn restrict(m: &Mat8, mode: ConstraintMode) -> nalgebra::DMatrix<f64> {
    let idx = mode.active_coords();
    nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Smallest eigenvalue of `Z` over the active coordinates.
pub fn min_eig_active(z: &Mat8, mode: ConstraintMode) -> f64 {
    match mode {
        ConstraintMode::Full3D => crate::linalg::min_eigenvalue(z),
        ConstraintMode::Planar => {
            let r = restrict(z, mode);
            let r6 = nalgebra::SMatrix::<f64, 6, 6>::from_fn(|i, j| r[(i, j)]);
            crate::linalg::min_eigenvalue(&r6)
        }
    }
}

/// Constraint set used by the local solver. In planar mode `q₂² + q₃² = 0`
/// is replaced by the regular pair `q₂ = 0, q₃ = 0`, giving the ordering
/// `(g₁, g₂, q₂, q₃, g₄)`.
pub fn local_constraints(q: &Vec8, mode: ConstraintMode) -> (Vec<f64>, Vec<Vec8>) {
    let g = eval_g(q, mode);
    let grads = grad_g(q, mode);
    match mode {
        ConstraintMode::Full3D => (g, grads),
        ConstraintMode::Planar => {
            let mut e2 = Vec8::zeros();
            e2[1] = 1.0;
            let mut e3 = Vec8::zeros();
            e3[2] = 1.0;
            (
                vec![g[0], g[1], q[1], q[2], g[3]],
                vec![grads[0], grads[1], e2, e3, grads[3]],
            )
        }
    }
}

/// Value of constraint `j` through its quadratic form, `c_j + qᵀ B_j q`.
pub fn eval_quadratic(j: usize, q: &Vec8) -> f64 {
    constant(j) + q.dot(&(basis_matrix(j) * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualquat::DualQuat;
    use crate::sampling::{random_dq, random_unit_dq};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_feasible() {
        let id = DualQuat::IDENTITY.to_vec();
        assert_eq!(eval_g(&id, ConstraintMode::Full3D), vec![0.0, 0.0]);
        assert_eq!(eval_g(&id, ConstraintMode::Planar), vec![0.0; 4]);
    }

    #[test]
    fn planar_displacement_is_planar_feasible() {
        let q = DualQuat::from_rot_trans(&Vector3::z(), 0.3, &Vector3::new(1.0, 2.0, 0.0))
            .unwrap()
            .to_vec();
        assert!(max_violation(&q, ConstraintMode::Planar) < 1e-12);
        // Planar displacements live on q₂ = q₃ = q₅ = q₈ = 0.
        assert!(q[1].abs() + q[2].abs() + q[4].abs() + q[7].abs() < 1e-15);

        let tilted = DualQuat::from_rot_trans(&Vector3::x(), 0.3, &Vector3::zeros())
            .unwrap()
            .to_vec();
        assert!(eval_g(&tilted, ConstraintMode::Planar)[2] > 0.01);
        let lifted = DualQuat::pure_translation(&Vector3::new(0.0, 0.0, 1.0)).to_vec();
        assert!(eval_g(&lifted, ConstraintMode::Planar)[3].abs() > 0.1);
    }

    #[test]
    fn quadratic_forms_reproduce_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_dq(&mut rng).to_vec();
            let g = eval_g(&q, ConstraintMode::Planar);
            for (j, gj) in g.iter().enumerate() {
                assert!((eval_quadratic(j, &q) - gj).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multiplier_matrix_examples() {
        assert_eq!(
            multiplier_matrices(
                &Multipliers::zeros(ConstraintMode::Planar),
                ConstraintMode::Planar
            ),
            Mat8::zeros()
        );
        let z = assemble_z(
            &Mat8::zeros(),
            &Multipliers::new(ConstraintMode::Full3D, &[-1.0, 0.0]).unwrap(),
            ConstraintMode::Full3D,
        );
        let mut expected = Mat8::zeros();
        for i in 0..4 {
            expected[(i, i)] = 1.0;
        }
        assert_eq!(z, expected);
    }

    #[test]
    fn lagrangian_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for mode in [ConstraintMode::Full3D, ConstraintMode::Planar] {
            for _ in 0..200 {
                let q = random_dq(&mut rng).to_vec();
                let a = nalgebra::SMatrix::<f64, 8, 8>::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let big_q = a * a.transpose();
                let lam: Vec<f64> = (0..mode.num_constraints())
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect();
                let lambda = Multipliers::new(mode, &lam).unwrap();
                let g = eval_g(&q, mode);
                let lhs = q.dot(&(big_q * q)) + lam.iter().zip(&g).map(|(l, g)| l * g).sum::<f64>();
                let z = assemble_z(&big_q, &lambda, mode);
                let rhs = q.dot(&(z * q)) + lam[0];
                assert!((lhs - rhs).abs() < 1e-10);
                assert!((z - big_q - multiplier_matrices(&lambda, mode)).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn planar_multiplier_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let q = random_dq(&mut rng).to_vec();
            let l3 = rng.random_range(-2.0..2.0);
            let l4 = rng.random_range(-2.0..2.0);
            let pr = basis_matrix(2) * l3;
            let pt = basis_matrix(3) * l4;
            assert!((q.dot(&(pr * q)) - l3 * (q[1] * q[1] + q[2] * q[2])).abs() < 1e-12);
            assert!((q.dot(&(pt * q)) - l4 * (q[0] * q[7] - q[3] * q[4])).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = 1e-6;
        for _ in 0..100 {
            let q = random_unit_dq(&mut rng, 2.0).to_vec();
            let grads = grad_g(&q, ConstraintMode::Planar);
            for (j, grad) in grads.iter().enumerate() {
                for i in 0..8 {
                    let mut qp = q;
                    qp[i] += h;
                    let mut qm = q;
                    qm[i] -= h;
                    let fd = (eval_g(&qp, ConstraintMode::Planar)[j]
                        - eval_g(&qm, ConstraintMode::Planar)[j])
                        / (2.0 * h);
                    assert!(
                        (fd - grad[i]).abs() <= 1e-5 * (1.0 + grad[i].abs()),
                        "j={j} i={i}"
                    );
                }
            }
        }
    }

    #[test]
    fn planar_feasible_set_has_linear_form() {
        // On unit dual quaternions with q₂ = q₃ = 0, g₄ = 0 is the same as
        // q₁q₈ = q₄q₅.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let yaw = rng.random_range(-3.0..3.0);
            let t = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                0.0,
            );
            let q = DualQuat::from_rot_trans(&Vector3::z(), yaw, &t)
                .unwrap()
                .to_vec();
            assert!(max_violation(&q, ConstraintMode::Planar) < 1e-12);
            assert!(q[1] == 0.0 && q[2] == 0.0);
            assert!((q[0] * q[7] - q[3] * q[4]).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_length_is_checked() {
        assert!(Multipliers::new(ConstraintMode::Planar, &[1.0, 2.0]).is_err());
        assert_eq!(
            Multipliers::zeros(ConstraintMode::Full3D).as_slice().len(),
            2
        );
    }
}
