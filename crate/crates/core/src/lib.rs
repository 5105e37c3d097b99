//! Extrinsic calibration of two rigidly mounted sensors from their
//! per-sensor ego-motion.
//!
//! The calibration is the unit dual quaternion `q_T` satisfying
//! `q_a · q_T = q_T · q_b` for every synchronized motion pair. Stacking the
//! residuals gives a quadratic program over 8-vectors with two (or, for
//! planar motion, four) quadratic equality constraints. It is solved by
//! a fast local SQP ([`local`]) and a certifiably global Lagrangian-dual
//! method ([`global`]); [`verify`] certifies any candidate through the
//! duality gap and [`online`] combines all three into an incremental
//! calibrator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod cost;
pub mod dualquat;
pub mod error;
pub mod global;
pub mod io;
pub mod linalg;
pub mod local;
pub mod metrics;
pub mod online;
pub mod planar;
pub mod sampling;
pub mod sim;
pub mod solution;
pub mod study;
pub mod verify;

pub use constraints::{ConstraintMode, Multipliers};
pub use cost::{CostAccumulator, MotionPair};
pub use dualquat::{DualQuat, Quat};
pub use error::{Error, Result};
pub use global::{solve_global, DualSolveOptions};
pub use local::{solve_local, LocalSolveOptions};
pub use metrics::{calib_error, CalibError};
pub use online::{OnlineCalibrator, OnlineConfig};
pub use planar::GroundPlane;
pub use solution::{CalibSolution, Provenance};
pub use verify::{certify, solve_fast, Certificate, CertifyOptions};

/// Vectorized dual quaternion `[q_r; q_d]`.
pub type Vec8 = nalgebra::SVector<f64, 8>;
/// 8×8 matrix over vectorized dual quaternions.
pub type Mat8 = nalgebra::SMatrix<f64, 8, 8>;

/// Default duality-gap threshold for declaring a solution global. The cost
/// is normalized so the threshold does not depend on the number of pairs.
pub const DEFAULT_GAP_THRESHOLD: f64 = 1e-6;
