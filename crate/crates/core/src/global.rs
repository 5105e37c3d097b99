//! Certifiably global solver through the Lagrangian dual.
//!
//! The dual problem is `max λ₁ s.t. Z(λ) ⪰ 0`. Writing
//! `Q = [[A, B], [Bᵀ, C]]` in real/dual blocks, the multipliers other than
//! `λ₁` only touch the off-diagonal block, so by a Schur complement
//!
//! ```text
//! h(μ) = max { λ₁ : Z(λ₁, μ) ⪰ 0 } = λ_min(A − B(μ) C⁻¹ B(μ)ᵀ)
//! ```
//!
//! with `B(μ) = B + λ₂ I + λ₄ T`. `h` is concave, so the dual reduces to an
//! unconstrained concave maximization over one (3D) or two (planar)
//! variables, done by golden-section search. `C` is the rotation-only part
//! of the cost and is PSD. When it is nearly singular, as on exact data,
//! `h(μ)` is instead the root of `λ₁ ↦ λ_min(Z(λ₁, μ))`, found by a Newton
//! iteration that approaches it from above.
//!
//! The primal is read off the null space of `Z(λ̂)`. On exact data that
//! null space is larger than one dimension; the minimizer is then found by a
//! local solve inside it and declared unique only if no null direction is
//! tangent to the constraints.

use std::time::Instant;

use nalgebra::{DMatrix, Matrix2x4, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    assemble_z, local_constraints, min_eig_active, ConstraintMode, Multipliers, PLANAR_COORDS,
};
use crate::cost::CostAccumulator;
use crate::dualquat::DualQuat;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue_2, SymEigen};
use crate::local::{retract, solve_local, LocalSolveOptions};
use crate::planar::lift_calibration;
use crate::solution::{CalibSolution, Provenance};
use crate::{Mat8, Vec8, DEFAULT_GAP_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolveOptions {
    /// Slack on the smallest eigenvalue of `Z`, relative to `1 + tr Q`.
    pub tol_psd: f64,
    /// Target accuracy of the dual value.
    pub tol_obj: f64,
    /// Iteration cap of each golden-section search.
    pub max_outer: usize,
    /// Eigenvalues below `null_tol · max(1, λ_max)` count as null.
    pub null_tol: f64,
    pub gap_threshold: f64,
}

impl Default for DualSolveOptions {
    fn default() -> Self {
        Self {
            tol_psd: 1e-9,
            tol_obj: 1e-10,
            max_outer: 200,
            null_tol: 1e-7,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
        }
    }
}

impl DualSolveOptions {
    fn validate(&self) -> Result<()> {
        let ok = [
            self.tol_psd,
            self.tol_obj,
            self.null_tol,
            self.gap_threshold,
        ]
        .iter()
        .all(|v| *v > 0.0)
            && self.max_outer > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("dual solver options must be positive".into()))
        }
    }
}

/// Result of the dual solve and primal recovery on a cost matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: Multipliers,
    pub dual_value: f64,
    pub min_eig: f64,
    pub q_hat: Vec8,
    pub primal_cost: f64,
    pub null_dim: usize,
}

impl DualSolution {
    pub fn gap(&self) -> f64 {
        self.primal_cost - self.dual_value
    }
}

/// The dual function `h(μ)` of a fixed cost matrix.
#[derive(Debug, Clone)]
pub struct DualProblem {
    mode: ConstraintMode,
    q: Mat8,
    a: Matrix4<f64>,
    b: Matrix4<f64>,
    c_inv: Matrix4<f64>,
    scale: f64,
    /// `C` is too close to singular for the Schur complement; `h` is then
    /// found by root finding on the full matrix.
    singular_c: bool,
}

fn translation_coupling() -> Matrix4<f64> {
    let mut t = Matrix4::zeros();
    t[(0, 3)] = 0.5;
    t[(3, 0)] = -0.5;
    t
}

impl DualProblem {
    pub fn new(q: &Mat8, mode: ConstraintMode) -> Self {
        let a = q.fixed_view::<4, 4>(0, 0).into_owned();
        let b = q.fixed_view::<4, 4>(0, 4).into_owned();
        let c = q.fixed_view::<4, 4>(4, 4).into_owned();
        let scale = q.trace().max(0.0);
        let floor = (1e-14 * scale).max(1e-200);
        let e = SymEigen::new(&c);
        let singular_c = e.min() < SCHUR_COND * scale;
        let inv = e.values.map(|v| 1.0 / v.max(floor));
        let c_inv = e.vectors * Matrix4::from_diagonal(&inv) * e.vectors.transpose();
        Self {
            mode,
            q: *q,
            a,
            b,
            c_inv,
            scale,
            singular_c,
        }
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// Number of free multipliers besides `λ₁`.
    pub fn dim(&self) -> usize {
        match self.mode {
            ConstraintMode::Full3D => 1,
            ConstraintMode::Planar => 2,
        }
    }

    fn coupling(&self, mu: &[f64]) -> Matrix4<f64> {
        let mut b = self.b + Matrix4::identity() * mu[0];
        if self.mode == ConstraintMode::Planar {
            b += translation_coupling() * mu[1];
        }
        b
    }

    /// Largest `λ₁` keeping `Z(λ₁, μ)` PSD; `μ = (λ₂)` or `(λ₂, λ₄)`.
    pub fn h(&self, mu: &[f64]) -> f64 {
        if self.singular_c {
            return self.h_root(mu);
        }
        let b = self.coupling(mu);
        match self.mode {
            ConstraintMode::Full3D => {
                let s = self.a - b * self.c_inv * b.transpose();
                SymEigen::new(&((s + s.transpose()) * 0.5)).min()
            }
            ConstraintMode::Planar => {
                let rows = Matrix2x4::from_rows(&[b.row(0), b.row(3)]);
                let s = rows * self.c_inv * rows.transpose();
                min_eigenvalue_2(
                    self.a[(0, 0)] - s[(0, 0)],
                    self.a[(0, 3)] - 0.5 * (s[(0, 1)] + s[(1, 0)]),
                    self.a[(3, 3)] - s[(1, 1)],
                )
            }
        }
    }

    /// Root of the concave, nonincreasing `φ(λ₁) = λ_min(Z(λ₁, μ))` by
    /// Newton steps from the upper bound `λ_min(A)`. Each step uses a
    /// supergradient, so iterates stay above the root.
    fn h_root(&self, mu: &[f64]) -> f64 {
        let lambda = self.multipliers(0.0, mu);
        let z0 = assemble_z(&self.q, &lambda, self.mode);
        let coords = self.mode.active_coords();
        let n_real = match self.mode {
            ConstraintMode::Full3D => 4,
            ConstraintMode::Planar => 2,
        };
        let m = coords.len();
        let zr = DMatrix::from_fn(m, m, |i, j| z0[(coords[i], coords[j])]);
        let real = zr.view((0, 0), (n_real, n_real)).into_owned();
        let mut x = SymmetricEigen::new(real).eigenvalues.min();
        let tol = 4.0 * f64::EPSILON * self.scale.max(1e-300);
        for _ in 0..100 {
            let mut z = zr.clone();
            for i in 0..n_real {
                z[(i, i)] -= x;
            }
            let e = SymmetricEigen::new(z);
            let i = e.eigenvalues.imin();
            let phi = e.eigenvalues[i];
            if phi >= -tol {
                break;
            }
            let d = e.eigenvectors.column(i).rows(0, n_real).norm_squared();
            if d < 1e-30 {
                return -1e30 * self.scale.max(1.0);
            }
            let next = x + phi / d;
            if !(next < x) || !next.is_finite() {
                break;
            }
            x = next;
        }
        x
    }

    /// Maximizes `h`, returning `(μ̂, h(μ̂))`.
    pub fn maximize(&self, max_iter: usize) -> (Vec<f64>, f64) {
        let step = 1e-3 * self.scale.max(1e-9);
        match self.mode {
            ConstraintMode::Full3D => {
                let (x, v) = maximize_concave(|x| self.h(&[x]), 0.0, step, max_iter);
                (vec![x], v)
            }
            ConstraintMode::Planar => {
                let inner = |l2: f64| maximize_concave(|l4| self.h(&[l2, l4]), 0.0, step, max_iter);
                let (l2, _) = maximize_concave(|l2| inner(l2).1, 0.0, step, max_iter);
                let (l4, v) = inner(l2);
                (vec![l2, l4], v)
            }
        }
    }

    /// Full multiplier vector for `(λ₁, μ)`.
    pub fn multipliers(&self, lambda1: f64, mu: &[f64]) -> Multipliers {
        match self.mode {
            ConstraintMode::Full3D => {
                Multipliers::new(self.mode, &[lambda1, mu[0]]).expect("two multipliers")
            }
            ConstraintMode::Planar => Multipliers::planar_eliminated(lambda1, mu[0], mu[1]),
        }
    }
}

/// Relative size of `λ_min(C)` below which the Schur complement is not
/// trusted.
const SCHUR_COND: f64 = 1e-8;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a concave function of one variable: geometric bracket
/// expansion from `x0`, then golden-section search.
pub fn maximize_concave(f: impl Fn(f64) -> f64, x0: f64, step: f64, max_iter: usize) -> (f64, f64) {
    let f0 = f(x0);
    let fp = f(x0 + step);
    let (mut lo, mut hi);
    let mut best = (x0, f0);
    let dir = if fp > f0 {
        1.0
    } else {
        let fm = f(x0 - step);
        if fm > f0 {
            -1.0
        } else {
            0.0
        }
    };
    if dir == 0.0 {
        lo = x0 - step;
        hi = x0 + step;
    } else {
        let mut prev = x0;
        let mut mid = x0 + dir * step;
        let mut fmid = f(mid);
        let mut s = step;
        let mut next;
        let mut n = 0;
        loop {
            s *= 2.0;
            next = mid + dir * s;
            let fnext = f(next);
            n += 1;
            if !(fnext > fmid) || n > 1100 {
                break;
            }
            prev = mid;
            mid = next;
            fmid = fnext;
        }
        best = (mid, fmid);
        lo = prev.min(next);
        hi = prev.max(next);
    }

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let abs_tol = 1e-15 * step;
    for _ in 0..max_iter {
        if hi - lo <= 1e-15 * (lo.abs() + hi.abs()) + abs_tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    for cand in [(x1, f1), (x2, f2)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Maximizes the dual. `Z(λ̂)` is PSD up to the floor placed on `C`.
pub fn solve_dual(
    q: &Mat8,
    mode: ConstraintMode,
    opts: &DualSolveOptions,
) -> Result<(Multipliers, f64)> {
    opts.validate()?;
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::Infeasible(
            "cost matrix has non-finite entries".into(),
        ));
    }
    let problem = DualProblem::new(q, mode);
    let (mu, value) = problem.maximize(opts.max_outer);
    if !value.is_finite() {
        return Err(Error::Infeasible(format!("dual value {value}")));
    }
    let lambda = problem.multipliers(value, &mu);
    let min_eig = min_eig_active(&assemble_z(q, &lambda, mode), mode);
    if min_eig < -opts.tol_psd * (1.0 + q.trace().abs()) {
        return Err(Error::Infeasible(format!(
            "Z(λ̂) has eigenvalue {min_eig:.3e}"
        )));
    }
    Ok((lambda, min_eig))
}

/// Eigen-decomposition of `Z` over the active coordinates; vectors are
/// embedded back into 8 dimensions.
fn active_eigen(z: &Mat8, mode: ConstraintMode) -> (Vec<f64>, Vec<Vec8>) {
    match mode {
        ConstraintMode::Full3D => {
            let e = SymEigen::new(z);
            (
                e.values.iter().copied().collect(),
                (0..8).map(|i| e.vectors.column(i).into_owned()).collect(),
            )
        }
        ConstraintMode::Planar => {
            let r = nalgebra::SMatrix::<f64, 6, 6>::from_fn(|i, j| {
                z[(PLANAR_COORDS[i], PLANAR_COORDS[j])]
            });
            let e = SymEigen::new(&r);
            let vecs = (0..6)
                .map(|c| {
                    let mut v = Vec8::zeros();
                    for (i, &k) in PLANAR_COORDS.iter().enumerate() {
                        v[k] = e.vectors[(i, c)];
                    }
                    v
                })
                .collect();
            (e.values.iter().copied().collect(), vecs)
        }
    }
}

/// Orthonormal basis of the numerical null space of `Z` (active
/// coordinates).
pub fn null_space(z: &Mat8, mode: ConstraintMode, null_tol: f64) -> Vec<Vec8> {
    let (values, vectors) = active_eigen(z, mode);
    let top = values.last().copied().unwrap_or(0.0).max(1.0);
    values
        .iter()
        .zip(vectors)
        .filter(|(v, _)| **v <= null_tol * top)
        .map(|(_, v)| v)
        .collect()
}

/// Null directions that are also tangent to the constraint manifold at
/// `q`. Along them the cost stays at its minimum to second order, so a
/// nonempty result means the minimizer is not isolated.
pub fn unobservable_directions(q: &Vec8, null_basis: &[Vec8], mode: ConstraintMode) -> Vec<Vec8> {
    if null_basis.len() < 2 {
        return Vec::new();
    }
    let (_, grads) = local_constraints(q, mode);
    let k = null_basis.len();
    let jn = DMatrix::from_fn(grads.len(), k, |r, c| grads[r].dot(&null_basis[c]));
    let e = SymmetricEigen::new(jn.transpose() * jn);
    (0..k)
        .filter(|&i| e.eigenvalues[i] <= 1e-12)
        .map(|i| {
            let mut v = Vec8::zeros();
            for (c, n) in null_basis.iter().enumerate() {
                v += n * e.eigenvectors[(c, i)];
            }
            v.normalize()
        })
        .collect()
}

fn best_real_part(basis: &[Vec8]) -> Vec8 {
    let k = basis.len();
    let g = DMatrix::from_fn(k, k, |i, j| {
        basis[i]
            .fixed_rows::<4>(0)
            .dot(&basis[j].fixed_rows::<4>(0))
    });
    let e = SymmetricEigen::new(g);
    let imax = e.eigenvalues.imax();
    let mut v = Vec8::zeros();
    for (c, n) in basis.iter().enumerate() {
        v += n * e.eigenvectors[(c, imax)];
    }
    v
}

/// Reads the primal solution off the null space of `Z(λ)`. Returns the
/// canonical unit solution and the null-space dimension.
pub fn recover_primal(
    q: &Mat8,
    lambda: &Multipliers,
    mode: ConstraintMode,
    opts: &DualSolveOptions,
) -> Result<(Vec8, usize)> {
    let z = assemble_z(q, lambda, mode);
    let basis = null_space(&z, mode, opts.null_tol);
    let k = basis.len();
    match k {
        0 => Err(Error::NoNullSpace {
            min_eig: min_eig_active(&z, mode),
        }),
        1 => {
            let v = basis[0];
            let nr = v.fixed_rows::<4>(0).norm();
            if nr < 1e-6 {
                return Err(Error::Infeasible(
                    "null vector has no rotational part".into(),
                ));
            }
            let x = retract(&(v / nr), mode).ok_or(Error::DegenerateInit)?;
            Ok((x, 1))
        }
        _ => {
            let start = best_real_part(&basis);
            let x = polish(q, mode, &start)?;
            let free = unobservable_directions(&x, &basis, mode);
            if free.is_empty() {
                Ok((x, k))
            } else {
                Err(Error::NonUniqueSolution {
                    null_dim: k,
                    basis: free,
                    candidate: x,
                })
            }
        }
    }
}

/// Local refinement; falls back to the best iterate when the iteration cap
/// is hit, but never returns a point worse than the start.
fn polish(q: &Mat8, mode: ConstraintMode, start: &Vec8) -> Result<Vec8> {
    let x0 = retract(start, mode).ok_or(Error::DegenerateInit)?;
    let f0 = x0.dot(&(q * x0));
    let x = match solve_local(q, mode, &LocalSolveOptions::warm(x0)) {
        Ok(s) => s.q,
        Err(Error::MaxIterExceeded { best, .. }) => best,
        Err(e) => return Err(e),
    };
    Ok(if x.dot(&(q * x)) <= f0 { x } else { x0 })
}

/// Dual solve, primal recovery and local polish on a cost matrix.
pub fn solve_global_q(
    q: &Mat8,
    mode: ConstraintMode,
    opts: &DualSolveOptions,
) -> Result<DualSolution> {
    let (lambda, min_eig) = solve_dual(q, mode, opts)?;
    let (x, null_dim) = recover_primal(q, &lambda, mode, opts)?;
    let x = if null_dim == 1 {
        polish(q, mode, &x)?
    } else {
        x
    };
    Ok(DualSolution {
        dual_value: lambda.lambda1(),
        lambda,
        min_eig,
        primal_cost: x.dot(&(q * x)),
        q_hat: x,
        null_dim,
    })
}

/// Globally optimal calibration of the accumulated pairs.
pub fn solve_global(acc: &CostAccumulator, opts: &DualSolveOptions) -> Result<CalibSolution> {
    if acc.is_empty() {
        return Err(Error::EmptyData);
    }
    let start = Instant::now();
    let mode = acc.mode();
    let ds = solve_global_q(&acc.normalized_q(), mode, opts)?;
    let q_p = DualQuat::from_vec(&ds.q_hat);
    let (q_hat, q_hat_planar) = lift(acc, q_p)?;
    let gap = ds.gap();
    Ok(CalibSolution {
        q_hat,
        q_hat_planar,
        is_global: gap < opts.gap_threshold,
        gap,
        lambda: ds.lambda,
        primal_cost: ds.primal_cost,
        provenance: Provenance::Global,
        solve_time: start.elapsed().as_secs_f64(),
        null_dim: ds.null_dim,
        plane_derived: mode == ConstraintMode::Planar,
    })
}

/// Maps a solution of the accumulator's problem to the full calibration.
pub(crate) fn lift(acc: &CostAccumulator, q: DualQuat) -> Result<(DualQuat, Option<DualQuat>)> {
    match (acc.mode(), acc.alignment()) {
        (ConstraintMode::Full3D, _) => Ok((q.canonicalize(), None)),
        (ConstraintMode::Planar, Some((g_a, g_b))) => Ok((lift_calibration(q, g_a, g_b)?, Some(q))),
        (ConstraintMode::Planar, None) => Ok((q.canonicalize(), Some(q))),
    }
}
