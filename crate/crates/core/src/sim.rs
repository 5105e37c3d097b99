//! Motion simulator: a 2D path draped over a height field, a rigid sensor
//! pair following it, and Gaussian noise on the per-sensor motions.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost::MotionPair;
use crate::dualquat::{DualQuat, Quat};
use crate::error::{Error, Result};
use crate::planar::GroundPlane;
use crate::sampling::{random_rotation, random_unit_vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PathSpec {
    /// Straight segments through the waypoints, traversed once.
    Polyline { waypoints: Vec<[f64; 2]> },
    /// Closed circle, traversed counter-clockwise as often as needed.
    Circle { center: [f64; 2], radius: f64 },
    /// Closed curve `(ax sin(fx u + phase), ay sin(fy u))`, `u ∈ [0, 2π)`.
    Lissajous {
        ax: f64,
        ay: f64,
        fx: f64,
        fy: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::Lissajous {
            ax: 40.0,
            ay: 30.0,
            fx: 1.0,
            fy: 2.0,
            phase: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub wavelength: f64,
    /// Direction of the wave vector in the xy-plane, degrees.
    #[serde(default)]
    pub direction_deg: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SurfaceSpec {
    Flat,
    Sinusoids { components: Vec<Sinusoid> },
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec::Sinusoids {
            components: vec![
                Sinusoid {
                    amplitude: 0.5,
                    wavelength: 20.0,
                    direction_deg: 30.0,
                    phase: 0.0,
                },
                Sinusoid {
                    amplitude: 0.2,
                    wavelength: 7.0,
                    direction_deg: 110.0,
                    phase: 1.0,
                },
            ],
        }
    }
}

impl SurfaceSpec {
    pub fn height(&self, p: &Vector2<f64>) -> f64 {
        match self {
            SurfaceSpec::Flat => 0.0,
            SurfaceSpec::Sinusoids { components } => components
                .iter()
                .map(|c| c.amplitude * (wave_vector(c).dot(p) + c.phase).sin())
                .sum(),
        }
    }

    pub fn gradient(&self, p: &Vector2<f64>) -> Vector2<f64> {
        match self {
            SurfaceSpec::Flat => Vector2::zeros(),
            SurfaceSpec::Sinusoids { components } => components
                .iter()
                .map(|c| {
                    let k = wave_vector(c);
                    k * (c.amplitude * (k.dot(p) + c.phase).cos())
                })
                .sum(),
        }
    }

    /// Upward unit normal.
    pub fn normal(&self, p: &Vector2<f64>) -> Vector3<f64> {
        let g = self.gradient(p);
        Vector3::new(-g.x, -g.y, 1.0).normalize()
    }
}

fn wave_vector(c: &Sinusoid) -> Vector2<f64> {
    let d = c.direction_deg.to_radians();
    Vector2::new(d.cos(), d.sin()) * (TAU / c.wavelength)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NoiseSpec {
    #[default]
    None,
    /// Fraction of the mean per-step translation and rotation angle.
    Relative {
        level: f64,
    },
    Absolute {
        sigma_trans: f64,
        sigma_rot: f64,
    },
}

/// A displacement given either as 8 vector components or as translation
/// plus axis-angle rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseSpec {
    Q8([f64; 8]),
    Pose {
        translation: [f64; 3],
        #[serde(default = "default_axis")]
        axis: [f64; 3],
        #[serde(default)]
        angle: f64,
    },
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl PoseSpec {
    pub fn to_dq(&self) -> Result<DualQuat> {
        match self {
            PoseSpec::Q8(v) => DualQuat::from_vec_checked(&crate::Vec8::from(*v)),
            PoseSpec::Pose {
                translation,
                axis,
                angle,
            } => {
                let axis = Vector3::from(*axis);
                let n = axis.norm();
                if n == 0.0 && *angle != 0.0 {
                    return Err(Error::NonUnitAxis(0.0));
                }
                let axis = if n > 0.0 { axis / n } else { Vector3::z() };
                DualQuat::from_rot_trans(&axis, *angle, &Vector3::from(*translation))
            }
        }
    }

    pub fn from_dq(q: &DualQuat) -> Self {
        PoseSpec::Q8(q.to_vec().into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub path: PathSpec,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default = "default_step")]
    pub step_length: f64,
    /// Calibration `T`, i.e. the pose of sensor B in the frame of sensor A.
    /// Drawn at random from the seed when absent.
    #[serde(default)]
    pub true_calib: Option<PoseSpec>,
    /// Pose of sensor A in the vehicle frame (identity when absent).
    #[serde(default)]
    pub mount_a: Option<PoseSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    /// Number of motion pairs to generate.
    #[serde(default = "default_pairs")]
    pub num_pairs: usize,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_step() -> f64 {
    1.0
}
fn default_pairs() -> usize {
    100
}
fn default_rate() -> f64 {
    10.0
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            path: PathSpec::default(),
            surface: SurfaceSpec::default(),
            step_length: default_step(),
            true_calib: None,
            mount_a: None,
            noise: NoiseSpec::None,
            seed: 0,
            num_pairs: default_pairs(),
            rate_hz: default_rate(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_length > 0.0 && self.step_length.is_finite()) {
            return Err(Error::Config("step_length must be positive".into()));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::Config("rate_hz must be positive".into()));
        }
        let bad_noise = match self.noise {
            NoiseSpec::None => false,
            NoiseSpec::Relative { level } => !(level >= 0.0),
            NoiseSpec::Absolute {
                sigma_trans,
                sigma_rot,
            } => !(sigma_trans >= 0.0 && sigma_rot >= 0.0),
        };
        if bad_noise {
            return Err(Error::Config("noise must be nonnegative".into()));
        }
        if let SurfaceSpec::Sinusoids { components } = &self.surface {
            if components.iter().any(|c| !(c.wavelength > 0.0)) {
                return Err(Error::Config(
                    "sinusoid wavelengths must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Calibration used by the simulation: the configured one, or a random
    /// one drawn from the seed.
    pub fn calibration(&self) -> Result<DualQuat> {
        match &self.true_calib {
            Some(p) => p.to_dq(),
            None => Ok(random_calibration(
                &mut ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ca1b),
                2.0,
                8.0,
            )),
        }
    }
}

/// Random calibration with translation length uniform in `[d_min, d_max]`.
pub fn random_calibration<R: Rng + ?Sized>(rng: &mut R, d_min: f64, d_max: f64) -> DualQuat {
    let rot = random_rotation(rng);
    let t = random_unit_vector(rng) * rng.random_range(d_min..=d_max);
    DualQuat::from_rotation_translation(rot, &t)
}

/// Timestamped absolute poses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseSequence {
    pub poses: Vec<(f64, DualQuat)>,
}

/// Arc-length parametrized planar curve.
struct Curve {
    closed: bool,
    /// Cumulative arc length at each tabulated parameter.
    table: Vec<(f64, f64)>,
    spec: PathSpec,
}

const TABLE_SIZE: usize = 20_000;

impl Curve {
    fn new(spec: &PathSpec) -> Result<Self> {
        match spec {
            PathSpec::Polyline { waypoints } => {
                if waypoints.len() < 2 {
                    return Err(Error::DegeneratePath(
                        "polyline needs at least two waypoints".into(),
                    ));
                }
                let mut table = vec![(0.0, 0.0)];
                let mut s = 0.0;
                for (i, w) in waypoints.windows(2).enumerate() {
                    let d = (Vector2::from(w[1]) - Vector2::from(w[0])).norm();
                    if !(d > 1e-9) {
                        return Err(Error::DegeneratePath(format!(
                            "waypoints {i} and {} coincide",
                            i + 1
                        )));
                    }
                    s += d;
                    table.push(((i + 1) as f64, s));
                }
                Ok(Self {
                    closed: false,
                    table,
                    spec: spec.clone(),
                })
            }
            PathSpec::Circle { radius, .. } if !(*radius > 0.0) => Err(Error::DegeneratePath(
                "circle radius must be positive".into(),
            )),
            PathSpec::Lissajous { ax, ay, fx, fy, .. }
                if !(ax.abs() * fx.abs() + ay.abs() * fy.abs() > 0.0) =>
            {
                Err(Error::DegeneratePath(
                    "lissajous curve has zero length".into(),
                ))
            }
            _ => {
                let mut table = Vec::with_capacity(TABLE_SIZE + 1);
                let mut s = 0.0;
                let mut prev = Self::eval_closed(spec, 0.0).0;
                table.push((0.0, 0.0));
                for i in 1..=TABLE_SIZE {
                    let u = TAU * i as f64 / TABLE_SIZE as f64;
                    let p = Self::eval_closed(spec, u).0;
                    s += (p - prev).norm();
                    prev = p;
                    table.push((u, s));
                }
                Ok(Self {
                    closed: true,
                    table,
                    spec: spec.clone(),
                })
            }
        }
    }

    fn eval_closed(spec: &PathSpec, u: f64) -> (Vector2<f64>, Vector2<f64>) {
        match *spec {
            PathSpec::Circle { center, radius } => (
                Vector2::from(center) + Vector2::new(u.cos(), u.sin()) * radius,
                Vector2::new(-u.sin(), u.cos()) * radius,
            ),
            PathSpec::Lissajous {
                ax,
                ay,
                fx,
                fy,
                phase,
            } => (
                Vector2::new(ax * (fx * u + phase).sin(), ay * (fy * u).sin()),
                Vector2::new(ax * fx * (fx * u + phase).cos(), ay * fy * (fy * u).cos()),
            ),
            PathSpec::Polyline { .. } => unreachable!(),
        }
    }

    fn length(&self) -> f64 {
        self.table.last().map(|e| e.1).unwrap_or(0.0)
    }

    /// Position and (unnormalized) tangent at arc length `s`.
    fn at(&self, s: f64) -> Option<(Vector2<f64>, Vector2<f64>)> {
        let total = self.length();
        let s = if self.closed {
            s.rem_euclid(total)
        } else if s > total * (1.0 + 1e-12) {
            return None;
        } else {
            s.min(total)
        };
        let i = self
            .table
            .partition_point(|e| e.1 < s)
            .clamp(1, self.table.len() - 1);
        let (u0, s0) = self.table[i - 1];
        let (u1, s1) = self.table[i];
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        let u = u0 + f * (u1 - u0);
        match &self.spec {
            PathSpec::Polyline { waypoints } => {
                let k = (i - 1).min(waypoints.len() - 2);
                let (a, b) = (Vector2::from(waypoints[k]), Vector2::from(waypoints[k + 1]));
                Some((a + (b - a) * f, b - a))
            }
            spec => Some(Self::eval_closed(spec, u)),
        }
    }
}

/// Orientation with z along the surface normal and x along the horizontal
/// path tangent made orthogonal to it.
pub fn surface_frame(normal: &Vector3<f64>, tangent: &Vector2<f64>) -> Result<Matrix3<f64>> {
    let t = Vector3::new(tangent.x, tangent.y, 0.0);
    let x = t - normal * normal.dot(&t);
    let n = x.norm();
    if !(n > 1e-12) {
        return Err(Error::DegeneratePath(
            "path tangent parallel to surface normal".into(),
        ));
    }
    let x = x / n;
    let y = normal.cross(&x);
    Ok(Matrix3::from_columns(&[x, y, *normal]))
}

/// Vehicle poses sampled every `step_length` meters of path, `num_pairs + 1`
/// of them (fewer if an open path ends first).
pub fn generate_path(cfg: &SimConfig) -> Result<PoseSequence> {
    cfg.validate()?;
    let curve = Curve::new(&cfg.path)?;
    let mut poses = Vec::with_capacity(cfg.num_pairs + 1);
    for i in 0..=cfg.num_pairs {
        let Some((p, tangent)) = curve.at(i as f64 * cfg.step_length) else {
            break;
        };
        let normal = cfg.surface.normal(&p);
        let r = surface_frame(&normal, &tangent)?;
        let pos = Vector3::new(p.x, p.y, cfg.surface.height(&p));
        let q = DualQuat::from_rotation_translation(Quat::from_rotation_matrix(&r), &pos);
        poses.push((i as f64 / cfg.rate_hz, q));
    }
    Ok(PoseSequence { poses })
}

/// Motion pairs of sensors A (at `mount_a` on the vehicle) and B (at
/// `mount_a · calib`). Every pair satisfies `q_a · T = T · q_b`.
pub fn sensor_pair_motions(
    poses: &PoseSequence,
    calib: DualQuat,
    mount_a: DualQuat,
) -> Vec<MotionPair> {
    let t_inv = calib.conjugate();
    poses
        .poses
        .windows(2)
        .map(|w| {
            let a0 = w[0].1 * mount_a;
            let a1 = w[1].1 * mount_a;
            let q_a = (a0.conjugate() * a1).canonicalize();
            let q_b = (t_inv * q_a * calib).canonicalize();
            MotionPair::new(q_a, q_b, w[1].0)
        })
        .collect()
}

fn mean_motion(qs: impl Iterator<Item = DualQuat>) -> (f64, f64) {
    let (mut t, mut r, mut n) = (0.0, 0.0, 0usize);
    for q in qs {
        t += q.translation().norm();
        r += 2.0 * q.real.vector().norm().atan2(q.real.w.abs());
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (t / n as f64, r / n as f64)
    }
}

/// Noise standard deviations `(σ_trans, σ_rot)` for sensors A and B.
pub fn noise_sigmas(pairs: &[MotionPair], noise: &NoiseSpec) -> [(f64, f64); 2] {
    match *noise {
        NoiseSpec::None => [(0.0, 0.0); 2],
        NoiseSpec::Absolute {
            sigma_trans,
            sigma_rot,
        } => [(sigma_trans, sigma_rot); 2],
        NoiseSpec::Relative { level } => {
            let (ta, ra) = mean_motion(pairs.iter().map(|p| p.q_a));
            let (tb, rb) = mean_motion(pairs.iter().map(|p| p.q_b));
            [(level * ta, level * ra), (level * tb, level * rb)]
        }
    }
}

/// Random displacement with uniform rotation axis, angle `~ N(0, σ_rot)`
/// and translation `~ N(0, σ_trans² I)`.
pub fn perturbation<R: Rng + ?Sized>(rng: &mut R, sigma_trans: f64, sigma_rot: f64) -> DualQuat {
    let axis = random_unit_vector(rng);
    let angle = Normal::new(0.0, sigma_rot)
        .map(|d| d.sample(rng))
        .unwrap_or(0.0);
    let tn = Normal::new(0.0, sigma_trans).expect("nonnegative sigma");
    let t = Vector3::new(tn.sample(rng), tn.sample(rng), tn.sample(rng));
    DualQuat::from_rotation_translation(Quat::from_axis_angle(&axis, angle), &t)
}

/// Left-multiplies every motion by an independent random perturbation.
pub fn add_noise(pairs: &[MotionPair], noise: &NoiseSpec, seed: u64) -> Vec<MotionPair> {
    let sig = noise_sigmas(pairs, noise);
    if sig.iter().all(|&(t, r)| t == 0.0 && r == 0.0) {
        return pairs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .map(|p| {
            let na = perturbation(&mut rng, sig[0].0, sig[0].1);
            let nb = perturbation(&mut rng, sig[1].0, sig[1].1);
            MotionPair {
                q_a: (na * p.q_a).canonicalize(),
                q_b: (nb * p.q_b).canonicalize(),
                ..*p
            }
        })
        .collect()
}

/// Output of a full simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub true_calib: DualQuat,
    pub mount_a: DualQuat,
    pub poses: PoseSequence,
    pub pairs: Vec<MotionPair>,
}

impl Simulation {
    /// Ground plane (the surface's mean plane `z = 0`) in sensor A's frame.
    pub fn ground_plane_a(&self) -> GroundPlane {
        plane_in_sensor(self.mount_a)
    }

    /// Ground plane in sensor B's frame.
    pub fn ground_plane_b(&self) -> GroundPlane {
        plane_in_sensor(self.mount_a * self.true_calib)
    }
}

/// The vehicle-frame plane `z = 0` seen from a sensor mounted at `mount`.
pub fn plane_in_sensor(mount: DualQuat) -> GroundPlane {
    GroundPlane {
        normal: Vector3::z(),
        distance: 0.0,
    }
    .transformed(mount.conjugate())
}

pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    let poses = generate_path(cfg)?;
    if poses.poses.len() < 2 {
        return Err(Error::DegeneratePath(
            "path yields fewer than two poses".into(),
        ));
    }
    let true_calib = cfg.calibration()?;
    let mount_a = cfg
        .mount_a
        .map(|m| m.to_dq())
        .transpose()?
        .unwrap_or(DualQuat::IDENTITY);
    let clean = sensor_pair_motions(&poses, true_calib, mount_a);
    let pairs = add_noise(&clean, &cfg.noise, cfg.seed.wrapping_add(1));
    Ok(Simulation {
        true_calib,
        mount_a,
        poses,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_unit_dq;

    fn flat(path: PathSpec) -> SimConfig {
        SimConfig {
            path,
            surface: SurfaceSpec::Flat,
            num_pairs: 50,
            ..Default::default()
        }
    }

    #[test]
    fn straight_flat_path_is_identity_oriented() {
        let cfg = flat(PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [100.0, 0.0]],
        });
        let seq = generate_path(&cfg).unwrap();
        assert_eq!(seq.poses.len(), 51);
        for (i, (t, q)) in seq.poses.iter().enumerate() {
            assert!((q.real.to_vec() - Quat::IDENTITY.to_vec()).amax() < 1e-15);
            let p = q.translation();
            assert!((p - Vector3::new(i as f64, 0.0, 0.0)).norm() < 1e-9);
            assert!((t - i as f64 * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_sweeps_yaw_only() {
        let mut cfg = flat(PathSpec::Circle {
            center: [0.0, 0.0],
            radius: 10.0,
        });
        cfg.num_pairs = 200;
        let seq = generate_path(&cfg).unwrap();
        let mut total = 0.0;
        for w in seq.poses.windows(2) {
            let m = w[0].1.conjugate() * w[1].1;
            let (axis, angle, _) = m.to_rot_trans().unwrap();
            assert!(angle < 1e-12 || (axis - Vector3::z()).norm() < 1e-9);
            let r = w[1].1.real.to_rotation_matrix();
            assert!((r.column(2) - Vector3::z()).norm() < 1e-12);
            total += angle;
        }
        let circumference = TAU * 10.0;
        assert!(
            (total - 200.0 / circumference * TAU).abs() < 1e-3,
            "{total}"
        );
    }

    #[test]
    fn orientation_follows_surface_normal() {
        let cfg = SimConfig {
            num_pairs: 300,
            ..Default::default()
        };
        let seq = generate_path(&cfg).unwrap();
        let surface = SurfaceSpec::default();
        let h = 1e-6;
        for (_, q) in &seq.poses {
            let p = q.translation();
            let xy = Vector2::new(p.x, p.y);
            assert!((p.z - surface.height(&xy)).abs() < 1e-12);
            // Finite-difference normal as an independent oracle.
            let hx = (surface.height(&(xy + Vector2::x() * h))
                - surface.height(&(xy - Vector2::x() * h)))
                / (2.0 * h);
            let hy = (surface.height(&(xy + Vector2::y() * h))
                - surface.height(&(xy - Vector2::y() * h)))
                / (2.0 * h);
            let n = Vector3::new(-hx, -hy, 1.0).normalize();
            let r = q.real.to_rotation_matrix();
            assert!((r.column(2) - n).norm() < 1e-6);
            assert!(r.column(0).dot(&n).abs() < 1e-9);
        }
    }

    #[test]
    fn pairs_close_the_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let cfg = SimConfig {
            num_pairs: 30,
            ..Default::default()
        };
        let seq = generate_path(&cfg).unwrap();
        let t = random_unit_dq(&mut rng, 5.0);
        let m = random_unit_dq(&mut rng, 1.0);
        for p in sensor_pair_motions(&seq, t, m) {
            let lhs = (p.q_a * t).canonicalize().to_vec();
            let rhs = (t * p.q_b).canonicalize().to_vec();
            assert!((lhs - rhs).amax() < 1e-12);
        }
        for p in sensor_pair_motions(&seq, DualQuat::IDENTITY, DualQuat::IDENTITY) {
            assert!((p.q_a.to_vec() - p.q_b.to_vec()).amax() < 1e-15);
        }
        let two = PoseSequence {
            poses: seq.poses[..2].to_vec(),
        };
        assert_eq!(sensor_pair_motions(&two, t, m).len(), 1);
    }

    #[test]
    fn relative_noise_scales_with_mean_motion() {
        // 1 m and 0.1 rad per step.
        let step =
            DualQuat::from_rot_trans(&Vector3::z(), 0.1, &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let pairs = vec![MotionPair::new(step, step, 0.0); 4];
        let [(ta, ra), (tb, rb)] = noise_sigmas(&pairs, &NoiseSpec::Relative { level: 0.1 });
        assert!((ta - 0.1).abs() < 1e-12 && (ra - 0.01).abs() < 1e-12);
        assert!((tb - 0.1).abs() < 1e-12 && (rb - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_bit_exact_and_seeded_noise_is_deterministic() {
        let sim = simulate(&SimConfig {
            num_pairs: 20,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            add_noise(&sim.pairs, &NoiseSpec::Relative { level: 0.0 }, 1),
            sim.pairs
        );
        let a = add_noise(&sim.pairs, &NoiseSpec::Relative { level: 0.05 }, 9);
        let b = add_noise(&sim.pairs, &NoiseSpec::Relative { level: 0.05 }, 9);
        assert_eq!(a, b);
        assert_ne!(a, sim.pairs);
        let cfg = SimConfig {
            num_pairs: 20,
            seed: 3,
            noise: NoiseSpec::Relative { level: 0.1 },
            ..Default::default()
        };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn translation_noise_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let n = 100_000;
        let sigma = 0.1;
        let mut sum = Vector3::zeros();
        for _ in 0..n {
            sum += perturbation(&mut rng, sigma, 0.0).translation();
        }
        let mean = sum / n as f64;
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < bound), "{mean:?}");
    }

    #[test]
    fn degenerate_paths_rejected() {
        let cfg = flat(PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
        });
        assert!(matches!(generate_path(&cfg), Err(Error::DegeneratePath(_))));
        let cfg = flat(PathSpec::Circle {
            center: [0.0, 0.0],
            radius: 0.0,
        });
        assert!(generate_path(&cfg).is_err());
        let cfg = SimConfig {
            step_length: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_path(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn random_calibration_distance_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        for _ in 0..100 {
            let d = random_calibration(&mut rng, 2.0, 8.0).translation().norm();
            assert!((2.0 - 1e-12..=8.0 + 1e-12).contains(&d));
        }
    }

    #[test]
    fn ground_planes_match_mounts() {
        let mount =
            DualQuat::from_rot_trans(&Vector3::x(), 0.3, &Vector3::new(0.0, 0.0, 1.5)).unwrap();
        let plane = plane_in_sensor(mount);
        // The vehicle-frame origin lies on the ground.
        let origin_in_sensor = mount
            .conjugate()
            .transform_point(&Vector3::zeros())
            .unwrap();
        assert!(plane.signed_distance(&origin_in_sensor).abs() < 1e-12);
        assert!((plane.distance - 1.5).abs() < 1e-12);
    }
}
