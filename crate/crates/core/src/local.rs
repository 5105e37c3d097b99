//! Fast local solver: a Newton-type SQP on the constraint manifold.
//!
//! Each iteration fits least-squares multipliers, takes a Newton step on the
//! Lagrangian restricted to the tangent space of the constraints (shifted to
//! be positive definite when necessary), maps the step back onto the
//! manifold and backtracks on the cost. On a quadratic cost with these
//! constraints the method converges quadratically near a regular minimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{basis_matrix, local_constraints, ConstraintMode, Multipliers};
use crate::dualquat::DualQuat;
use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::{Mat8, Vec8};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolveOptions {
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub tol_step: f64,
    /// Starting point; the identity when absent.
    pub init: Option<Vec8>,
}

impl Default for LocalSolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_kkt: 1e-10,
            tol_step: 1e-12,
            init: None,
        }
    }
}

impl LocalSolveOptions {
    pub fn warm(init: Vec8) -> Self {
        Self {
            init: Some(init),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub q: Vec8,
    pub lambda: Multipliers,
    pub cost: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl LocalSolution {
    pub fn dual_quat(&self) -> DualQuat {
        DualQuat::from_vec(&self.q)
    }
}

/// Maps an arbitrary point onto the feasible set: zero the planar-excluded
/// coordinates, normalize the real part and remove the dual component along
/// it. Returns `None` when the real part vanishes.
pub fn retract(q: &Vec8, mode: ConstraintMode) -> Option<Vec8> {
    let mut v = *q;
    if mode == ConstraintMode::Planar {
        // With q₂ = q₃ = 0 the remaining constraints force q₅ = q₈ = 0.
        for i in [1, 2, 4, 7] {
            v[i] = 0.0;
        }
    }
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
    if !(n > 1e-12) {
        return None;
    }
    v /= n;
    let along = v[0] * v[4] + v[1] * v[5] + v[2] * v[6] + v[3] * v[7];
    for i in 0..4 {
        v[i + 4] -= along * v[i];
    }
    Some(canonical(&v))
}

fn canonical(v: &Vec8) -> Vec8 {
    DualQuat::from_vec(v).canonicalize().to_vec()
}

fn cost(q: &Mat8, x: &Vec8) -> f64 {
    x.dot(&(q * x))
}

struct Linearization {
    residual: Vec<f64>,
    jac: DMatrix<f64>,
}

fn linearize(x: &Vec8, mode: ConstraintMode) -> Linearization {
    let (residual, grads) = local_constraints(x, mode);
    let jac = DMatrix::from_fn(grads.len(), 8, |r, c| grads[r][c]);
    Linearization { residual, jac }
}

/// Least-squares multipliers `argmin ‖∇f + Jᵀ μ‖`.
fn ls_multipliers(grad: &Vec8, jac: &DMatrix<f64>) -> DVector<f64> {
    let jjt = jac * jac.transpose();
    let rhs = -(jac * DVector::from_column_slice(grad.as_slice()));
    match jjt.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => jjt
            .pseudo_inverse(1e-14)
            .map(|p| p * &rhs)
            .unwrap_or_else(|_| DVector::zeros(rhs.len())),
    }
}

/// Orthonormal basis of the null space of `jac` (columns).
pub(crate) fn tangent_basis(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let m = jac.nrows();
    let jtj = jac.transpose() * jac;
    let jtj = Mat8::from_fn(|r, c| jtj[(r, c)]);
    let e = SymEigen::new(&jtj);
    DMatrix::from_fn(8, 8 - m, |r, c| e.vectors[(r, c)])
}

fn to_multipliers(mu: &DVector<f64>, mode: ConstraintMode) -> Multipliers {
    match mode {
        ConstraintMode::Full3D => Multipliers::new(mode, &[mu[0], mu[1]]).expect("two multipliers"),
        ConstraintMode::Planar => Multipliers::planar_eliminated(mu[0], mu[1], mu[4]),
    }
}

/// Hessian of the Lagrangian, `2 (Q + Σ μ_j B_j)` over the quadratic
/// constraints.
fn lagrangian_hessian(q: &Mat8, mu: &DVector<f64>, mode: ConstraintMode) -> Mat8 {
    let quadratic: &[(usize, usize)] = match mode {
        ConstraintMode::Full3D => &[(0, 0), (1, 1)],
        ConstraintMode::Planar => &[(0, 0), (1, 1), (4, 3)],
    };
    let mut h = *q;
    for &(k, j) in quadratic {
        h += basis_matrix(j) * mu[k];
    }
    h * 2.0
}

/// Minimizes `xᵀ Q x` over unit (and, in planar mode, planar) dual
/// quaternions starting from `opts.init`.
pub fn solve_local(
    q: &Mat8,
    mode: ConstraintMode,
    opts: &LocalSolveOptions,
) -> Result<LocalSolution> {
    if !(opts.tol_kkt > 0.0 && opts.tol_step > 0.0) {
        return Err(Error::Config(
            "local solver tolerances must be positive".into(),
        ));
    }
    let init = opts.init.unwrap_or_else(|| DualQuat::IDENTITY.to_vec());
    let mut x = retract(&init, mode).ok_or(Error::DegenerateInit)?;
    let scale = 1.0 + q.trace().abs();
    // Rounding floor of the gradient 2Qx.
    let tol_kkt = opts.tol_kkt.max(1e-14 * scale);
    let shift_floor = 1e-10 * scale;

    let mut fx = cost(q, &x);
    let mut best = x;
    let mut last_kkt = f64::INFINITY;

    for iter in 0..=opts.max_iter {
        let lin = linearize(&x, mode);
        let grad = q * x * 2.0;
        let mu = ls_multipliers(&grad, &lin.jac);
        let kkt = (DVector::from_column_slice(grad.as_slice()) + lin.jac.transpose() * &mu).amax();
        let feas = lin.residual.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        last_kkt = kkt;
        best = x;
        if kkt < tol_kkt && feas < opts.tol_kkt {
            return Ok(LocalSolution {
                q: x,
                lambda: to_multipliers(&mu, mode),
                cost: fx,
                iterations: iter,
                kkt_residual: kkt,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let n = tangent_basis(&lin.jac);
        let h = lagrangian_hessian(q, &mu, mode);
        let hd = DMatrix::from_fn(8, 8, |r, c| h[(r, c)]);
        let mut hr = n.transpose() * hd * &n;
        hr = (&hr + hr.transpose()) * 0.5;
        let gr = n.transpose() * DVector::from_column_slice(grad.as_slice());
        let min_eig = hr.clone().symmetric_eigenvalues().min();
        if min_eig < shift_floor {
            // Mirror negative curvature so the step length stays comparable.
            let shift = shift_floor.max(-min_eig) - min_eig;
            for i in 0..hr.nrows() {
                hr[(i, i)] += shift;
            }
        }
        let p = match hr.cholesky() {
            Some(ch) => ch.solve(&(-&gr)),
            None => -&gr / shift_floor,
        };
        let d = &n * &p;
        let d = Vec8::from_column_slice(d.as_slice());
        let slope = gr.dot(&p);

        // Cost differences below this are rounding noise.
        let cost_noise = 1e-14 * scale * x.norm_squared();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            if let Some(cand) = retract(&(x + d * alpha), mode) {
                let fc = cost(q, &cand);
                if fc <= fx + 1e-4 * alpha * slope + cost_noise {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let step = (cand - x).amax();
                x = cand;
                fx = fc;
                if step < opts.tol_step {
                    // Stalled at rounding level; re-evaluate once more.
                    let lin = linearize(&x, mode);
                    let grad = q * x * 2.0;
                    let mu = ls_multipliers(&grad, &lin.jac);
                    let kkt = (DVector::from_column_slice(grad.as_slice())
                        + lin.jac.transpose() * &mu)
                        .amax();
                    if kkt < 10.0 * tol_kkt {
                        return Ok(LocalSolution {
                            q: x,
                            lambda: to_multipliers(&mu, mode),
                            cost: fx,
                            iterations: iter + 1,
                            kkt_residual: kkt,
                        });
                    }
                }
            }
            None => {
                // No decrease possible: x is optimal up to rounding.
                if kkt < 1e3 * tol_kkt {
                    return Ok(LocalSolution {
                        q: x,
                        lambda: to_multipliers(&mu, mode),
                        cost: fx,
                        iterations: iter,
                        kkt_residual: kkt,
                    });
                }
                break;
            }
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: opts.max_iter,
        kkt_residual: last_kkt,
        best,
    })
}
