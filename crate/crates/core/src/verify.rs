//! Globality certificate for an arbitrary candidate.
//!
//! The multipliers are fitted by least squares to the stationarity condition
//! `Z(λ) q̂ = 0`, which is linear in `λ`. Keeping the fitted non-norm
//! multipliers `μ̂` fixed, the largest admissible `λ₁` is the dual function
//! `h(μ̂)`, a certified lower bound on the optimal cost. The gap
//! `q̂ᵀQq̂ − h(μ̂)` is therefore an upper bound on the suboptimality of the
//! candidate; it vanishes exactly when the candidate is a global minimizer
//! with a tight relaxation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    assemble_z, basis_matrix, max_violation, min_eig_active, ConstraintMode, Multipliers,
};
use crate::cost::CostAccumulator;
use crate::dualquat::DualQuat;
use crate::error::{Error, Result};
use crate::global::{lift, null_space, unobservable_directions, DualProblem};
use crate::local::{solve_local, LocalSolveOptions};
use crate::planar::project_calibration;
use crate::solution::{CalibSolution, Provenance};
use crate::{Mat8, Vec8, DEFAULT_GAP_THRESHOLD};

/// Maximum constraint violation accepted for a candidate.
pub const TOL_FEASIBLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub gap_threshold: f64,
    /// PSD slack relative to `1 + tr Q`.
    pub tol_psd: f64,
    /// Stationarity tolerance relative to `1 + tr Q`.
    pub tol_res: f64,
    pub null_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            tol_psd: 1e-9,
            tol_res: 1e-8,
            null_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda_fit: Multipliers,
    /// `‖Z(λ̂) q̂‖₂` over the active coordinates.
    pub residual: f64,
    pub min_eig: f64,
    pub primal_cost: f64,
    /// `h(μ̂)`, a lower bound on the optimal cost.
    pub dual_bound: f64,
    pub gap: f64,
    pub is_global: bool,
    pub null_dim: usize,
    /// No null direction of `Z(λ̂)` is tangent to the constraints.
    pub unique: bool,
}

impl Certificate {
    /// Global and isolated.
    pub fn certifies(&self) -> bool {
        self.is_global && self.unique
    }
}

/// Multiplier columns used in the fit: `(j, basis index)`.
fn fitted(mode: ConstraintMode) -> &'static [usize] {
    match mode {
        ConstraintMode::Full3D => &[0, 1],
        ConstraintMode::Planar => &[0, 1, 3],
    }
}

/// Least-squares multipliers for `Z(λ) q = 0`.
pub fn fit_multipliers(q: &Mat8, x: &Vec8, mode: ConstraintMode) -> Multipliers {
    let rows = mode.active_coords();
    let cols = fitted(mode);
    let px: Vec<Vec8> = cols.iter().map(|&j| basis_matrix(j) * x).collect();
    let qx = q * x;
    let a = DMatrix::from_fn(rows.len(), cols.len(), |r, c| px[c][rows[r]]);
    let b = DVector::from_fn(rows.len(), |r, _| -qx[rows[r]]);
    let mut ata = a.transpose() * &a;
    for i in 0..cols.len() {
        ata[(i, i)] += 1e-14;
    }
    let sol = ata
        .cholesky()
        .map(|ch| ch.solve(&(a.transpose() * b)))
        .unwrap_or_else(|| DVector::zeros(cols.len()));
    match mode {
        ConstraintMode::Full3D => {
            Multipliers::new(mode, &[sol[0], sol[1]]).expect("two multipliers")
        }
        ConstraintMode::Planar => Multipliers::planar_eliminated(sol[0], sol[1], sol[2]),
    }
}

/// Certifies a feasible candidate against the normalized cost matrix `q`.
pub fn certify(
    q: &Mat8,
    x: &Vec8,
    mode: ConstraintMode,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let violation = max_violation(x, mode);
    if !(violation <= TOL_FEASIBLE) {
        return Err(Error::InfeasiblePoint(violation));
    }
    let lambda = fit_multipliers(q, x, mode);
    let z = assemble_z(q, &lambda, mode);
    let zx = z * x;
    let residual = mode
        .active_coords()
        .iter()
        .map(|&i| zx[i] * zx[i])
        .sum::<f64>()
        .sqrt();
    let min_eig = min_eig_active(&z, mode);
    let primal_cost = x.dot(&(q * x));

    let mu: Vec<f64> = match mode {
        ConstraintMode::Full3D => vec![lambda.as_slice()[1]],
        ConstraintMode::Planar => vec![lambda.as_slice()[1], lambda.as_slice()[3]],
    };
    let dual_bound = DualProblem::new(q, mode).h(&mu);
    let gap = primal_cost - dual_bound;

    let scale = 1.0 + q.trace().abs();
    let is_global = residual < opts.tol_res * scale
        && min_eig >= -opts.tol_psd * scale
        && gap < opts.gap_threshold;

    let basis = null_space(&z, mode, opts.null_tol);
    let unique = unobservable_directions(x, &basis, mode).is_empty() && !basis.is_empty();

    Ok(Certificate {
        lambda_fit: lambda,
        residual,
        min_eig,
        primal_cost,
        dual_bound,
        gap,
        is_global,
        null_dim: basis.len(),
        unique,
    })
}

/// Fast local solve of the accumulated pairs followed by certification.
///
/// `init` is a full calibration; in planar mode it is projected into the
/// plane-aligned frames before solving.
pub fn solve_fast(
    acc: &CostAccumulator,
    init: Option<DualQuat>,
    local: &LocalSolveOptions,
    opts: &CertifyOptions,
) -> Result<CalibSolution> {
    if acc.is_empty() {
        return Err(Error::EmptyData);
    }
    let start = Instant::now();
    let mode = acc.mode();
    let q = acc.normalized_q();
    let init = init.map(|i| match acc.alignment() {
        Some((g_a, g_b)) => project_calibration(i, g_a, g_b).to_vec(),
        None => i.to_vec(),
    });
    let local = LocalSolveOptions {
        init: init.or(local.init),
        ..local.clone()
    };
    let s = solve_local(&q, mode, &local)?;
    let c = certify(&q, &s.q, mode, opts)?;
    let (q_hat, q_hat_planar) = lift(acc, s.dual_quat())?;
    Ok(CalibSolution {
        q_hat,
        q_hat_planar,
        lambda: c.lambda_fit.clone(),
        primal_cost: s.cost,
        gap: c.gap,
        is_global: c.certifies(),
        provenance: Provenance::Local,
        solve_time: start.elapsed().as_secs_f64(),
        null_dim: c.null_dim,
        plane_derived: mode == ConstraintMode::Planar,
    })
}
