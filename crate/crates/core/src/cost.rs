//! Quadratic loop-closure cost.
//!
//! For a motion pair `(q_a, q_b)` the calibration satisfies
//! `q_a · q_T = q_T · q_b`, which is linear in `vec(q_T)`:
//! `(R(q_b) − L(q_a)) vec(q_T) = 0`. Squaring the (optionally weighted)
//! residual gives a PSD matrix per pair; the accumulator keeps their
//! η-weighted sum and normalizes by `Σ η` so the cost does not grow with
//! the number of pairs.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMode;
use crate::dualquat::DualQuat;
use crate::error::{Error, Result};
use crate::{Mat8, Vec8};

/// Synchronized incremental motions of both sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPair {
    pub q_a: DualQuat,
    pub q_b: DualQuat,
    pub timestamp: f64,
    /// Per-coordinate residual weights `w₁…w₈`; `None` means all ones.
    pub weight_diag: Option<[f64; 8]>,
    /// Relative confidence of this pair; `None` means 1.
    pub eta: Option<f64>,
}

impl MotionPair {
    pub fn new(q_a: DualQuat, q_b: DualQuat, timestamp: f64) -> Self {
        Self {
            q_a,
            q_b,
            timestamp,
            weight_diag: None,
            eta: None,
        }
    }

    pub fn with_weights(mut self, w: [f64; 8]) -> Self {
        self.weight_diag = Some(w);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    fn eta_value(&self) -> Result<f64> {
        match self.eta {
            None => Ok(1.0),
            Some(e) if e.is_finite() && e >= 0.0 => Ok(e),
            Some(e) => Err(Error::InvalidWeight(format!("eta = {e}"))),
        }
    }

    /// Loop-closure residual `q_T q_b − q_a q_T` of a candidate.
    pub fn residual(&self, q_t: &Vec8) -> Vec8 {
        (self.q_b.right_mat() - self.q_a.left_mat()) * q_t
    }
}

/// `(R − L)ᵀ Wᵀ W (R − L)` for one pair.
pub fn pair_cost_matrix(pair: &MotionPair) -> Result<Mat8> {
    let mut m = pair.q_b.right_mat() - pair.q_a.left_mat();
    if let Some(w) = pair.weight_diag {
        for (i, &wi) in w.iter().enumerate() {
            if !(wi.is_finite() && wi >= 0.0) {
                return Err(Error::InvalidWeight(format!("w{} = {wi}", i + 1)));
            }
            let s = wi.sqrt();
            for c in 0..8 {
                m[(i, c)] *= s;
            }
        }
    }
    Ok(symmetrize(&(m.transpose() * m)))
}

fn symmetrize(m: &Mat8) -> Mat8 {
    (m + m.transpose()) * 0.5
}

/// Running sum of pair cost matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAccumulator {
    sum_q: Mat8,
    eta_sum: f64,
    n: usize,
    mode: ConstraintMode,
    /// Plane-aligning displacements `(G_a, G_b)` applied to every incoming
    /// motion in planar mode.
    alignment: Option<(DualQuat, DualQuat)>,
}

impl CostAccumulator {
    pub fn new(mode: ConstraintMode) -> Self {
        Self {
            sum_q: Mat8::zeros(),
            eta_sum: 0.0,
            n: 0,
            mode,
            alignment: None,
        }
    }

    /// Planar accumulator that first maps each sensor's motions into its
    /// ground-plane frame.
    pub fn planar_with_alignment(g_a: DualQuat, g_b: DualQuat) -> Self {
        Self {
            alignment: Some((g_a, g_b)),
            ..Self::new(ConstraintMode::Planar)
        }
    }

    pub fn from_pairs<'a>(
        mode: ConstraintMode,
        pairs: impl IntoIterator<Item = &'a MotionPair>,
    ) -> Result<Self> {
        let mut acc = Self::new(mode);
        for p in pairs {
            acc.add(p)?;
        }
        Ok(acc)
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn alignment(&self) -> Option<(DualQuat, DualQuat)> {
        self.alignment
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn eta_sum(&self) -> f64 {
        self.eta_sum
    }

    pub fn sum_q(&self) -> &Mat8 {
        &self.sum_q
    }

    /// The motion pair as seen by the solver (plane-projected if configured).
    pub fn transform_pair(&self, pair: &MotionPair) -> MotionPair {
        match self.alignment {
            Some((g_a, g_b)) if self.mode == ConstraintMode::Planar => MotionPair {
                q_a: crate::planar::project_motion_unchecked(pair.q_a, g_a),
                q_b: crate::planar::project_motion_unchecked(pair.q_b, g_b),
                ..*pair
            },
            _ => *pair,
        }
    }

    pub fn add(&mut self, pair: &MotionPair) -> Result<()> {
        let eta = pair.eta_value()?;
        let q = pair_cost_matrix(&self.transform_pair(pair))?;
        self.sum_q = symmetrize(&(self.sum_q + q * eta));
        self.eta_sum += eta;
        self.n += 1;
        Ok(())
    }

    /// `Σ η_i Q_i / Σ η_i`; zero when nothing has been accumulated.
    pub fn normalized_q(&self) -> Mat8 {
        if self.eta_sum > 0.0 {
            self.sum_q / self.eta_sum
        } else {
            Mat8::zeros()
        }
    }

    pub fn cost_value(&self, q: &Vec8) -> f64 {
        q.dot(&(self.normalized_q() * q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymEigen;
    use crate::sampling::random_unit_dq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loop_pair(q_t: DualQuat, q_b: DualQuat) -> MotionPair {
        MotionPair::new(q_t * q_b * q_t.inverse(), q_b, 0.0)
    }

    #[test]
    fn identical_identity_motions_cost_nothing() {
        let p = MotionPair::new(DualQuat::IDENTITY, DualQuat::IDENTITY, 0.0);
        assert_eq!(pair_cost_matrix(&p).unwrap(), Mat8::zeros());
    }

    #[test]
    fn true_calibration_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q_t = random_unit_dq(&mut rng, 5.0);
            let p = loop_pair(q_t, random_unit_dq(&mut rng, 2.0));
            let m = pair_cost_matrix(&p).unwrap();
            let v = q_t.to_vec();
            assert!(v.dot(&(m * v)).abs() < 1e-14 * (1.0 + m.trace()) * v.norm_squared());
            assert!(p.residual(&v).norm() < 1e-12);
        }
    }

    #[test]
    fn pair_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let p = MotionPair::new(
                random_unit_dq(&mut rng, 3.0),
                random_unit_dq(&mut rng, 3.0),
                0.0,
            );
            let m = pair_cost_matrix(&p).unwrap();
            assert_eq!(m, m.transpose());
            assert!(SymEigen::new(&m).min() >= -1e-12 * m.trace());
        }
    }

    #[test]
    fn weighted_matrix_matches_direct_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w = [1.0, 2.0, 0.5, 0.0, 3.0, 1.0, 1.0, 4.0];
        let p = MotionPair::new(
            random_unit_dq(&mut rng, 1.0),
            random_unit_dq(&mut rng, 1.0),
            0.0,
        )
        .with_weights(w);
        let m = pair_cost_matrix(&p).unwrap();
        let x = random_unit_dq(&mut rng, 1.0).to_vec();
        let r = p.residual(&x);
        let direct: f64 = (0..8).map(|i| w[i] * r[i] * r[i]).sum();
        assert!((x.dot(&(m * x)) - direct).abs() < 1e-12);

        let unweighted = MotionPair {
            weight_diag: Some([1.0; 8]),
            ..p
        };
        assert_eq!(
            pair_cost_matrix(&unweighted).unwrap(),
            pair_cost_matrix(&MotionPair {
                weight_diag: None,
                ..p
            })
            .unwrap()
        );
    }

    #[test]
    fn negative_weight_rejected() {
        let p = MotionPair::new(DualQuat::IDENTITY, DualQuat::IDENTITY, 0.0)
            .with_weights([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(pair_cost_matrix(&p), Err(Error::InvalidWeight(_))));
        let p = MotionPair::new(DualQuat::IDENTITY, DualQuat::IDENTITY, 0.0).with_eta(-0.5);
        assert!(CostAccumulator::new(ConstraintMode::Full3D)
            .add(&p)
            .is_err());
    }

    #[test]
    fn accumulation_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p1 = MotionPair::new(
            random_unit_dq(&mut rng, 1.0),
            random_unit_dq(&mut rng, 1.0),
            0.0,
        );
        let p2 = MotionPair::new(
            random_unit_dq(&mut rng, 1.0),
            random_unit_dq(&mut rng, 1.0),
            0.1,
        );
        let q1 = pair_cost_matrix(&p1).unwrap();
        let q2 = pair_cost_matrix(&p2).unwrap();

        let single = CostAccumulator::from_pairs(ConstraintMode::Full3D, [&p1]).unwrap();
        assert!((single.normalized_q() - q1).amax() < 1e-15);

        let repeated = CostAccumulator::from_pairs(ConstraintMode::Full3D, [&p1; 7]).unwrap();
        assert!((repeated.normalized_q() - q1).amax() < 1e-13);
        assert_eq!(repeated.len(), 7);

        let both = CostAccumulator::from_pairs(ConstraintMode::Full3D, [&p1, &p2]).unwrap();
        let expected = (q1 + q2) * 0.5;
        assert!((both.normalized_q() - expected).amax() < 1e-14);
        let nq = both.normalized_q();
        assert_eq!(nq, nq.transpose());
        assert!(SymEigen::new(&nq).min() >= -1e-9 * nq.trace());
    }

    #[test]
    fn eta_weights_are_renormalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p1 = MotionPair::new(
            random_unit_dq(&mut rng, 1.0),
            random_unit_dq(&mut rng, 1.0),
            0.0,
        );
        let p2 = MotionPair::new(
            random_unit_dq(&mut rng, 1.0),
            random_unit_dq(&mut rng, 1.0),
            0.1,
        );
        let a = CostAccumulator::from_pairs(
            ConstraintMode::Full3D,
            [&p1.with_eta(3.0), &p2.with_eta(1.0)],
        )
        .unwrap();
        let expected =
            (pair_cost_matrix(&p1).unwrap() * 3.0 + pair_cost_matrix(&p2).unwrap()) / 4.0;
        assert!((a.normalized_q() - expected).amax() < 1e-14);
    }

    #[test]
    fn cost_value_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let empty = CostAccumulator::new(ConstraintMode::Full3D);
        let x = random_unit_dq(&mut rng, 1.0).to_vec();
        assert_eq!(empty.cost_value(&x), 0.0);

        let q_t = random_unit_dq(&mut rng, 4.0);
        let pairs: Vec<_> = (0..10)
            .map(|_| loop_pair(q_t, random_unit_dq(&mut rng, 1.0)))
            .collect();
        let acc = CostAccumulator::from_pairs(ConstraintMode::Full3D, &pairs).unwrap();
        assert!(acc.cost_value(&q_t.to_vec()).abs() < 1e-12);
        assert!(acc.cost_value(&x) >= 0.0);
        assert!((acc.cost_value(&(x * 2.0)) - 4.0 * acc.cost_value(&x)).abs() < 1e-12);

        let doubled: Vec<_> = pairs.iter().chain(&pairs).collect();
        let acc2 = CostAccumulator::from_pairs(ConstraintMode::Full3D, doubled).unwrap();
        assert!((acc2.cost_value(&x) - acc.cost_value(&x)).abs() < 1e-13);
    }
}
