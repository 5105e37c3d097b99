//! File formats and stream handling: TUM and KITTI trajectories, relative
//! motions, temporal pairing of two sensors, motion-pair JSONL and point
//! clouds.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::MotionPair;
use crate::dualquat::{DualQuat, Quat};
use crate::error::{Error, Result};
use crate::planar::{fit_ground_plane, GroundPlane, RansacOptions};
use crate::Vec8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryFormat {
    /// `t tx ty tz qx qy qz qw` per line.
    Tum,
    /// Row-major 3×4 pose matrix per line, no timestamps.
    Kitti,
}

impl std::str::FromStr for TrajectoryFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tum" => Ok(Self::Tum),
            "kitti" | "kitti_pose" => Ok(Self::Kitti),
            _ => Err(Error::Config(format!("unknown trajectory format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub sensor_id: String,
    pub poses: Vec<(f64, DualQuat)>,
}

impl Trajectory {
    pub fn new(sensor_id: impl Into<String>, poses: Vec<(f64, DualQuat)>) -> Result<Self> {
        for w in poses.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::NonMonotonicTime {
                    prev: w[0].0,
                    next: w[1].0,
                });
            }
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            poses,
        })
    }

    fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.poses.first()?.0, self.poses.last()?.0))
    }
}

/// Rotation blocks further than this from SO(3) are rejected.
pub const MAX_ROTATION_DEVIATION: f64 = 1e-3;

/// Default rate used to synthesize KITTI timestamps.
pub const KITTI_RATE_HZ: f64 = 10.0;

fn parse_floats(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("`{tok}`: {e}"),
            })
        })
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Projects a nearly orthonormal matrix onto SO(3).
fn orthonormalize(m: &Matrix3<f64>, line: usize) -> Result<Matrix3<f64>> {
    let deviation = (m.transpose() * m - Matrix3::identity())
        .amax()
        .max((m.determinant() - 1.0).abs());
    if !(deviation <= MAX_ROTATION_DEVIATION) {
        return Err(Error::NonOrthogonalRotation { line, deviation });
    }
    if deviation == 0.0 {
        return Ok(*m);
    }
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    Ok(u * v_t)
}

pub fn parse_trajectory(
    text: &str,
    format: TrajectoryFormat,
    sensor_id: &str,
    rate_hz: f64,
) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (lineno, line) in data_lines(text) {
        let v = parse_floats(line, lineno)?;
        let pose = match format {
            TrajectoryFormat::Tum => {
                if v.len() != 8 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!(
                            "expected 8 values (t tx ty tz qx qy qz qw), got {}",
                            v.len()
                        ),
                    });
                }
                let q = Quat::new(v[7], v[4], v[5], v[6]);
                let n = q.norm();
                if !((n - 1.0).abs() <= MAX_ROTATION_DEVIATION) {
                    return Err(Error::NonOrthogonalRotation {
                        line: lineno,
                        deviation: (n - 1.0).abs(),
                    });
                }
                (
                    v[0],
                    DualQuat::from_rotation_translation(
                        q.scale(1.0 / n),
                        &Vector3::new(v[1], v[2], v[3]),
                    ),
                )
            }
            TrajectoryFormat::Kitti => {
                if v.len() != 12 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected 12 values (3×4 pose), got {}", v.len()),
                    });
                }
                let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
                let r = orthonormalize(&r, lineno)?;
                let t = Vector3::new(v[3], v[7], v[11]);
                let ts = poses.len() as f64 / rate_hz;
                (
                    ts,
                    DualQuat::from_rotation_translation(Quat::from_rotation_matrix(&r), &t),
                )
            }
        };
        if let Some(&(prev, _)) = poses.last() {
            if !(pose.0 > prev) {
                return Err(Error::NonMonotonicTime { prev, next: pose.0 });
            }
        }
        poses.push(pose);
    }
    Ok(Trajectory {
        sensor_id: sensor_id.to_string(),
        poses,
    })
}

fn with_path(e: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

pub fn load_trajectory(path: &Path, format: TrajectoryFormat, rate_hz: f64) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sensor");
    parse_trajectory(&text, format, id, rate_hz)
}

pub fn write_trajectory<W: Write>(
    mut w: W,
    traj: &Trajectory,
    format: TrajectoryFormat,
) -> Result<()> {
    for (t, q) in &traj.poses {
        let p = q.translation();
        match format {
            TrajectoryFormat::Tum => {
                let r = q.real;
                writeln!(
                    w,
                    "{t:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                    p.x, p.y, p.z, r.x, r.y, r.z, r.w
                )?;
            }
            TrajectoryFormat::Kitti => {
                let m = q.real.to_rotation_matrix();
                let vals = [
                    m[(0, 0)],
                    m[(0, 1)],
                    m[(0, 2)],
                    p.x,
                    m[(1, 0)],
                    m[(1, 1)],
                    m[(1, 2)],
                    p.y,
                    m[(2, 0)],
                    m[(2, 1)],
                    m[(2, 2)],
                    p.z,
                ];
                let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
    }
    Ok(())
}

/// Incremental motions `pose_i⁻¹ · pose_{i+1}` stamped with the later time.
pub fn relative_motions(traj: &Trajectory) -> Vec<(f64, DualQuat)> {
    traj.poses
        .windows(2)
        .map(|w| (w[1].0, (w[0].1.conjugate() * w[1].1).canonicalize()))
        .collect()
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    w.cross_matrix()
}

/// Screw logarithm of a unit dual quaternion as `(ω, v)` with rotation
/// vector `ω` and translational twist `v`.
pub fn log(q: &DualQuat) -> (Vector3<f64>, Vector3<f64>) {
    let q = q.canonicalize();
    let s = q.real.vector().norm();
    let theta = 2.0 * s.atan2(q.real.w);
    let omega = if s > 1e-300 {
        q.real.vector() * (theta / s)
    } else {
        Vector3::zeros()
    };
    let t = q.translation();
    let wx = skew(&omega);
    let th2 = theta * theta;
    // Coefficient of [ω]² in V⁻¹.
    let c = if theta < 1e-4 {
        1.0 / 12.0 + th2 / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / th2
    };
    let v_inv = Matrix3::identity() - wx * 0.5 + wx * wx * c;
    (omega, v_inv * t)
}

/// Screw exponential, inverse of [`log`].
pub fn exp(omega: &Vector3<f64>, v: &Vector3<f64>) -> DualQuat {
    let theta = omega.norm();
    let wx = skew(omega);
    let th2 = theta * theta;
    let (a, b) = if theta < 1e-4 {
        (0.5 - th2 / 24.0, 1.0 / 6.0 - th2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / th2,
            (theta - theta.sin()) / (th2 * theta),
        )
    };
    let vm = Matrix3::identity() + wx * a + wx * wx * b;
    let rot = if theta > 0.0 {
        Quat::from_axis_angle(&(omega / theta), theta)
    } else {
        Quat::IDENTITY
    };
    DualQuat::from_rotation_translation(rot, &(vm * v))
}

/// Screw-linear interpolation from `p` (τ = 0) to `q` (τ = 1).
pub fn sclerp(p: &DualQuat, q: &DualQuat, tau: f64) -> DualQuat {
    if tau == 0.0 {
        return *p;
    }
    if tau == 1.0 {
        return *q;
    }
    let (omega, v) = log(&(p.conjugate() * *q));
    *p * exp(&(omega * tau), &(v * tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    /// Largest accepted time offset between matched samples, seconds.
    pub max_skew: f64,
    /// Interpolate stream B by ScLERP instead of taking the nearest pose.
    pub interpolate: bool,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            max_skew: 0.02,
            interpolate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<MotionPair>,
    /// Motions of A without a close enough counterpart in B.
    pub dropped: usize,
}

/// Pose of `traj` at time `t` and the time offset of the sample used.
fn pose_at(traj: &Trajectory, t: f64, interpolate: bool) -> (DualQuat, f64) {
    let poses = &traj.poses;
    let i = poses.partition_point(|(ti, _)| *ti < t);
    if i < poses.len() && poses[i].0 == t {
        return (poses[i].1, 0.0);
    }
    if i == 0 {
        return (poses[0].1, poses[0].0 - t);
    }
    if i == poses.len() {
        let last = poses[i - 1];
        return (last.1, t - last.0);
    }
    let (t0, p0) = poses[i - 1];
    let (t1, p1) = poses[i];
    if interpolate {
        (sclerp(&p0, &p1, (t - t0) / (t1 - t0)), 0.0)
    } else if t - t0 <= t1 - t {
        (p0, t - t0)
    } else {
        (p1, t1 - t)
    }
}

/// Builds motion pairs on the time grid of stream A. Stream B is sampled at
/// both ends of every A-motion; motions whose samples are further than
/// `max_skew` from stream B's data are dropped.
pub fn pair_streams(a: &Trajectory, b: &Trajectory, cfg: &PairingConfig) -> Result<Pairing> {
    if !(cfg.max_skew >= 0.0) {
        return Err(Error::Config("max_skew must be nonnegative".into()));
    }
    let (Some((a0, a1)), Some((b0, b1))) = (a.time_range(), b.time_range()) else {
        return Err(Error::NoOverlap);
    };
    if a1 < b0 || b1 < a0 {
        return Err(Error::NoOverlap);
    }
    let mut out = Pairing::default();
    for w in a.poses.windows(2) {
        let (ta0, pa0) = w[0];
        let (ta1, pa1) = w[1];
        let (pb0, s0) = pose_at(b, ta0, cfg.interpolate);
        let (pb1, s1) = pose_at(b, ta1, cfg.interpolate);
        if s0 > cfg.max_skew || s1 > cfg.max_skew {
            out.dropped += 1;
            continue;
        }
        out.pairs.push(MotionPair::new(
            (pa0.conjugate() * pa1).canonicalize(),
            (pb0.conjugate() * pb1).canonicalize(),
            ta1,
        ));
    }
    Ok(out)
}

fn fmt_q8(v: &Vec8) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    format!("[{}]", parts.join(","))
}

/// Writes one JSON object per pair with 17 significant digits per float.
pub fn write_pairs<W: Write>(w: W, pairs: &[MotionPair]) -> Result<()> {
    let mut w = BufWriter::new(w);
    for p in pairs {
        write!(
            w,
            "{{\"t\":{:.16e},\"qa\":{},\"qb\":{}",
            p.timestamp,
            fmt_q8(&p.q_a.to_vec()),
            fmt_q8(&p.q_b.to_vec())
        )?;
        if let Some(wd) = p.weight_diag {
            write!(w, ",\"w\":{}", fmt_q8(&Vec8::from(wd)))?;
        }
        if let Some(eta) = p.eta {
            write!(w, ",\"eta\":{eta:.16e}")?;
        }
        writeln!(w, "}}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_pairs(path: &Path, pairs: &[MotionPair]) -> Result<()> {
    write_pairs(File::create(path).map_err(|e| with_path(e, path))?, pairs)
}

fn q8_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<Option<[f64; 8]>> {
    let Some(v) = obj.get(key) else {
        return Ok(None);
    };
    let arr = v
        .as_array()
        .filter(|a| a.len() == 8)
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("`{key}` must be an array of 8 numbers"),
        })?;
    let mut out = [0.0; 8];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = x.as_f64().ok_or_else(|| Error::Parse {
            line,
            msg: format!("`{key}` contains a non-number"),
        })?;
    }
    Ok(Some(out))
}

fn unit_dq(v: [f64; 8], line: usize) -> Result<DualQuat> {
    let q = DualQuat::from_vec(&Vec8::from(v));
    if q.is_unit() {
        return Ok(q);
    }
    q.renormalized().map_err(|e| match e {
        Error::NotUnit(residual) => Error::NotUnitAt { line, residual },
        other => other,
    })
}

pub fn read_pairs<R: Read>(r: R) -> Result<Vec<MotionPair>> {
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected a JSON object".into(),
        })?;
        let t = obj
            .get("t")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "missing numeric `t`".into(),
            })?;
        let missing = |k: &str| Error::Parse {
            line: line_no,
            msg: format!("missing `{k}`"),
        };
        let qa = q8_field(obj, "qa", line_no)?.ok_or_else(|| missing("qa"))?;
        let qb = q8_field(obj, "qb", line_no)?.ok_or_else(|| missing("qb"))?;
        let mut pair = MotionPair::new(unit_dq(qa, line_no)?, unit_dq(qb, line_no)?, t);
        pair.weight_diag = q8_field(obj, "w", line_no)?;
        pair.eta = match obj.get("eta") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "`eta` must be a number".into(),
            })?),
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<MotionPair>> {
    read_pairs(File::open(path).map_err(|e| with_path(e, path))?)
}

/// Whitespace-separated `x y z` lines.
pub fn parse_points(text: &str) -> Result<Vec<Vector3<f64>>> {
    data_lines(text)
        .map(|(lineno, line)| {
            let v = parse_floats(line, lineno)?;
            if v.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 coordinates, got {}", v.len()),
                });
            }
            Ok(Vector3::new(v[0], v[1], v[2]))
        })
        .collect()
}

/// A plane file holds a single `nx ny nz d` line; anything else is read as
/// a point cloud and fitted with RANSAC.
pub fn load_plane(path: &Path, ransac: &RansacOptions) -> Result<GroundPlane> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    let lines: Vec<_> = data_lines(&text).collect();
    if let [(lineno, line)] = lines.as_slice() {
        let v = parse_floats(line, *lineno)?;
        if v.len() == 4 {
            let n = Vector3::new(v[0], v[1], v[2]);
            return GroundPlane::new(n, v[3]);
        }
    }
    fit_ground_plane(&parse_points(&text)?, ransac)
}
