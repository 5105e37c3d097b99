//! Calibration results shared by all solvers.

use serde::{Deserialize, Serialize};

use crate::constraints::Multipliers;
use crate::dualquat::DualQuat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Local,
    Global,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Local => "local",
            Provenance::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibSolution {
    /// Full calibration `T` (sensor B frame to sensor A frame).
    pub q_hat: DualQuat,
    /// Calibration in the plane-aligned frames when solved in planar mode.
    pub q_hat_planar: Option<DualQuat>,
    pub lambda: Multipliers,
    pub primal_cost: f64,
    /// Primal cost minus a certified lower bound.
    pub gap: f64,
    pub is_global: bool,
    pub provenance: Provenance,
    /// Seconds spent in the solver.
    pub solve_time: f64,
    /// Dimension of the certificate's null space (1 for a well-posed problem).
    pub null_dim: usize,
    /// Height, roll and pitch were taken from the ground planes rather than
    /// estimated from motion.
    pub plane_derived: bool,
}
