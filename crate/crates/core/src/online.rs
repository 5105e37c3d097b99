//! Incremental calibration combining the fast and the global solver.
//!
//! Every new pair is accumulated, the fast solver is warm-started from the
//! previous solution and its result is certified. A failed certificate
//! stamps the time of the failure; while the stream is within `t_no_fail`
//! seconds of the last failure the global solver runs and its result is
//! used instead.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMode;
use crate::cost::{CostAccumulator, MotionPair};
use crate::dualquat::DualQuat;
use crate::error::{Error, Result};
use crate::global::{lift, solve_global_q, DualSolveOptions};
use crate::local::{solve_local, LocalSolveOptions};
use crate::metrics::{calib_error, CalibError};
use crate::planar::{plane_alignment_dq, GroundPlane};
use crate::solution::{CalibSolution, Provenance};
use crate::verify::{certify, CertifyOptions};
use crate::Vec8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub mode: ConstraintMode,
    /// Seconds of consecutive certified fast solutions after which the
    /// global solver is no longer invoked.
    pub t_no_fail: f64,
    /// Ground planes of sensors A and B (planar mode only).
    pub planes: Option<(GroundPlane, GroundPlane)>,
    pub local: LocalSolveOptions,
    pub dual: DualSolveOptions,
    pub certify: CertifyOptions,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            mode: ConstraintMode::Full3D,
            t_no_fail: 5.0,
            planes: None,
            local: LocalSolveOptions::default(),
            dual: DualSolveOptions::default(),
            certify: CertifyOptions::default(),
        }
    }
}

impl OnlineConfig {
    pub fn with_gap_threshold(mut self, threshold: f64) -> Self {
        self.dual.gap_threshold = threshold;
        self.certify.gap_threshold = threshold;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_no_fail >= 0.0) {
            return Err(Error::Config("t_no_fail must be nonnegative".into()));
        }
        if self.planes.is_some() && self.mode != ConstraintMode::Planar {
            return Err(Error::Config("ground planes require planar mode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OnlineCalibrator {
    cfg: OnlineConfig,
    acc: CostAccumulator,
    /// Previous solution in the solver's frame (plane-aligned when planar).
    warm: Option<Vec8>,
    last: Option<CalibSolution>,
    t_last_local_error: Option<f64>,
    t_prev: Option<f64>,
}

impl OnlineCalibrator {
    pub fn new(cfg: OnlineConfig) -> Result<Self> {
        cfg.validate()?;
        let acc = match (cfg.mode, cfg.planes) {
            (ConstraintMode::Planar, Some((a, b))) => CostAccumulator::planar_with_alignment(
                plane_alignment_dq(&a),
                plane_alignment_dq(&b),
            ),
            (mode, _) => CostAccumulator::new(mode),
        };
        Ok(Self {
            cfg,
            acc,
            warm: None,
            last: None,
            t_last_local_error: None,
            t_prev: None,
        })
    }

    pub fn accumulator(&self) -> &CostAccumulator {
        &self.acc
    }

    pub fn last_solution(&self) -> Option<&CalibSolution> {
        self.last.as_ref()
    }

    pub fn t_last_local_error(&self) -> Option<f64> {
        self.t_last_local_error
    }

    /// Processes one pair and returns the current calibration.
    pub fn update(&mut self, pair: &MotionPair) -> Result<CalibSolution> {
        let t = pair.timestamp;
        if let Some(prev) = self.t_prev {
            if !(t > prev) {
                return Err(Error::NonMonotonicTime { prev, next: t });
            }
        }
        let start = Instant::now();
        let mut next = self.acc.clone();
        next.add(pair)?;
        self.acc = next;
        self.t_prev = Some(t);
        let t_last = *self.t_last_local_error.get_or_insert(t);

        let q = self.acc.normalized_q();
        let mode = self.acc.mode();

        let fast = self.warm.and_then(|init| {
            let opts = LocalSolveOptions {
                init: Some(init),
                ..self.cfg.local.clone()
            };
            let s = solve_local(&q, mode, &opts).ok()?;
            let cert = certify(&q, &s.q, mode, &self.cfg.certify).ok()?;
            Some((s, cert))
        });
        let certified = fast.as_ref().is_some_and(|(_, c)| c.certifies());
        let t_last = if certified {
            t_last
        } else {
            self.t_last_local_error = Some(t);
            t
        };

        let (x, mut solution) = match fast {
            Some((s, _)) if t - t_last <= self.cfg.t_no_fail => {
                self.global_step(&q, mode, Some(s.q))?
            }
            None => self.global_step(&q, mode, None)?,
            Some((s, c)) => {
                let solution = CalibSolution {
                    q_hat: DualQuat::from_vec(&s.q),
                    q_hat_planar: None,
                    lambda: c.lambda_fit.clone(),
                    primal_cost: s.cost,
                    gap: c.gap,
                    is_global: c.certifies(),
                    provenance: Provenance::Local,
                    solve_time: 0.0,
                    null_dim: c.null_dim,
                    plane_derived: mode == ConstraintMode::Planar,
                };
                (s.q, solution)
            }
        };
        let (q_hat, q_hat_planar) = lift(&self.acc, DualQuat::from_vec(&x))?;
        solution.q_hat = q_hat;
        solution.q_hat_planar = q_hat_planar;
        solution.solve_time = start.elapsed().as_secs_f64();
        self.warm = Some(x);
        self.last = Some(solution.clone());
        Ok(solution)
    }

    fn global_step(
        &self,
        q: &crate::Mat8,
        mode: ConstraintMode,
        fallback: Option<Vec8>,
    ) -> Result<(Vec8, CalibSolution)> {
        let base = |x: Vec8, lambda, cost: f64, gap: f64, is_global, null_dim| CalibSolution {
            q_hat: DualQuat::from_vec(&x),
            q_hat_planar: None,
            lambda,
            primal_cost: cost,
            gap,
            is_global,
            provenance: Provenance::Global,
            solve_time: 0.0,
            null_dim,
            plane_derived: mode == ConstraintMode::Planar,
        };
        match solve_global_q(q, mode, &self.cfg.dual) {
            Ok(ds) => {
                let gap = ds.gap();
                let is_global = gap < self.cfg.dual.gap_threshold;
                Ok((
                    ds.q_hat,
                    base(
                        ds.q_hat,
                        ds.lambda,
                        ds.primal_cost,
                        gap,
                        is_global,
                        ds.null_dim,
                    ),
                ))
            }
            Err(Error::NonUniqueSolution {
                null_dim,
                candidate,
                ..
            }) => {
                // Unobservable so far: report a minimizer, never as global.
                let cert = certify(q, &candidate, mode, &self.cfg.certify)?;
                Ok((
                    candidate,
                    base(
                        candidate,
                        cert.lambda_fit,
                        cert.primal_cost,
                        cert.gap,
                        false,
                        null_dim,
                    ),
                ))
            }
            Err(e) => match fallback {
                Some(x) => {
                    log::warn!("global solve failed ({e}); keeping the fast solution");
                    let cert = certify(q, &x, mode, &self.cfg.certify)?;
                    Ok((
                        x,
                        base(
                            x,
                            cert.lambda_fit,
                            cert.primal_cost,
                            cert.gap,
                            false,
                            cert.null_dim,
                        ),
                    ))
                }
                None => Err(e),
            },
        }
    }
}

/// One emitted step of a replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub t: f64,
    pub solution: CalibSolution,
    pub error: Option<CalibError>,
}

/// Runs the calibrator over a whole stream, optionally scoring every step
/// against ground truth.
pub fn replay(
    pairs: &[MotionPair],
    cfg: &OnlineConfig,
    truth: Option<&DualQuat>,
) -> Result<Vec<ReplayStep>> {
    let mut cal = OnlineCalibrator::new(cfg.clone())?;
    pairs
        .iter()
        .map(|p| {
            let solution = cal.update(p)?;
            let error = truth.map(|t| calib_error(&solution.q_hat, t)).transpose()?;
            Ok(ReplayStep {
                t: p.timestamp,
                solution,
                error,
            })
        })
        .collect()
}

/// Number of changes of provenance along a replay.
pub fn provenance_switches(steps: &[ReplayStep]) -> usize {
    steps
        .windows(2)
        .filter(|w| w[0].solution.provenance != w[1].solution.provenance)
        .count()
}
