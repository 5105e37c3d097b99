//! Command-line front end: batch and online calibration, simulation,
//! studies, certification and plane fitting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use dqcalib::global::solve_global;
use dqcalib::io::{
    load_pairs, load_plane, load_trajectory, pair_streams, parse_points, save_pairs, PairingConfig,
    TrajectoryFormat, KITTI_RATE_HZ,
};
use dqcalib::local::LocalSolveOptions;
use dqcalib::metrics::{calib_error, CalibError};
use dqcalib::online::{provenance_switches, replay, OnlineConfig};
use dqcalib::planar::{fit_ground_plane, plane_alignment_dq, RansacOptions};
use dqcalib::sim::{simulate, PoseSpec, SimConfig};
use dqcalib::study::{run_study, trend, write_csv, StudyConfig};
use dqcalib::verify::{certify, solve_fast, CertifyOptions};
use dqcalib::{
    ConstraintMode, CostAccumulator, DualQuat, DualSolveOptions, Error, GroundPlane, MotionPair,
    Vec8, DEFAULT_GAP_THRESHOLD,
};

#[derive(Parser, Debug)]
#[command(
    name = "dqcalib",
    version,
    about = "Extrinsic calibration of two sensors from their ego-motion"
)]
struct Cli {
    /// Random seed (simulation and RANSAC).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Constraint set: full 3D or planar motion.
    #[arg(long, global = true, default_value = "3d", value_parser = parse_mode)]
    mode: ConstraintMode,
    /// Duality gap below which a solution is declared global.
    #[arg(long, global = true, default_value_t = DEFAULT_GAP_THRESHOLD)]
    gap_threshold: f64,
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,
    /// Timing is the median over this many runs.
    #[arg(long, global = true, default_value_t = 10)]
    repeat: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Global,
    Fast,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tum,
    Kitti,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate from a motion-pair file.
    Calibrate {
        #[arg(long)]
        pairs: PathBuf,
        /// Ground plane of sensor A (`nx ny nz d` line or point cloud).
        #[arg(long, requires = "plane_b")]
        plane_a: Option<PathBuf>,
        #[arg(long, requires = "plane_a")]
        plane_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Solver::Global)]
        solver: Solver,
        /// Start of the fast solver, 8 comma-separated values.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_q8)]
        init: Option<DualQuat>,
        #[command(flatten)]
        gt: GroundTruth,
    },
    /// Replay a motion-pair stream through the online calibrator.
    Online {
        #[arg(long)]
        pairs: PathBuf,
        /// Seconds after a failed fast solve during which the global solver runs.
        #[arg(long, default_value_t = 5.0)]
        t_no_fail: f64,
        #[arg(long, requires = "plane_b")]
        plane_a: Option<PathBuf>,
        #[arg(long, requires = "plane_a")]
        plane_b: Option<PathBuf>,
        /// Write the per-step trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        gt: GroundTruth,
    },
    /// Generate simulated motion pairs and a ground-truth sidecar.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error-versus-size sweep over simulated datasets.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a candidate calibration against a motion-pair file.
    Certify {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_q8_raw)]
        candidate: Vec8,
        #[arg(long, requires = "plane_b")]
        plane_a: Option<PathBuf>,
        #[arg(long, requires = "plane_a")]
        plane_b: Option<PathBuf>,
    },
    /// Fit a ground plane to a point cloud.
    FitPlane {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
    /// Build motion pairs from two trajectory files.
    Pair {
        #[arg(long)]
        traj_a: PathBuf,
        #[arg(long)]
        traj_b: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Tum)]
        format: Format,
        #[arg(long, default_value_t = 0.02)]
        max_skew: f64,
        /// Use the nearest pose of B instead of interpolating.
        #[arg(long)]
        nearest: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct GroundTruth {
    /// True calibration, 8 comma-separated values.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_q8, conflicts_with = "gt_pose")]
    gt: Option<DualQuat>,
    /// True calibration as `tx,ty,tz,ax,ay,az,angle` (angle in radians).
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pose)]
    gt_pose: Option<DualQuat>,
}

impl GroundTruth {
    fn get(&self) -> Option<DualQuat> {
        self.gt.or(self.gt_pose)
    }
}

fn parse_mode(s: &str) -> Result<ConstraintMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated values, got {}",
            v.len()
        ));
    }
    Ok(v)
}

fn parse_q8_raw(s: &str) -> Result<Vec8, String> {
    Ok(Vec8::from_column_slice(&parse_floats(s, 8)?))
}

fn parse_q8(s: &str) -> Result<DualQuat, String> {
    DualQuat::from_vec_checked(&parse_q8_raw(s)?).map_err(|e| e.to_string())
}

fn parse_pose(s: &str) -> Result<DualQuat, String> {
    let v = parse_floats(s, 7)?;
    PoseSpec::Pose {
        translation: [v[0], v[1], v[2]],
        axis: [v[3], v[4], v[5]],
        angle: v[6],
    }
    .to_dq()
    .map_err(|e| e.to_string())
}

/// Error with its process exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. }
            | Error::NotUnitAt { .. }
            | Error::NonOrthogonalRotation { .. }
            | Error::NonMonotonicTime { .. }
            | Error::NoOverlap
            | Error::Config(_)
            | Error::Io(_)
            | Error::InvalidWeight(_)
            | Error::NonUnitAxis(_)
            | Error::NotUnit(_)
            | Error::DegeneratePath(_) => 2,
            Error::NonUniqueSolution { .. }
            | Error::DegenerateInput(_)
            | Error::InfeasiblePoint(_) => 3,
            Error::EmptyData
            | Error::MaxIterExceeded { .. }
            | Error::DegenerateInit
            | Error::Infeasible(_)
            | Error::NoNullSpace { .. } => 1,
        };
        let mut msg = e.to_string();
        if let Error::NonUniqueSolution {
            basis, candidate, ..
        } = &e
        {
            msg.push_str(&format!("\n  candidate: {}", fmt_q8(candidate)));
            for (i, b) in basis.iter().enumerate() {
                msg.push_str(&format!("\n  free direction {}: {}", i + 1, fmt_q8(b)));
            }
        }
        Failure { code, msg }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure {
                code: 0,
                msg: String::new(),
            };
        }
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string()).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn fmt_q8(v: &Vec8) -> String {
    v.iter()
        .map(|x| format!("{x:.12}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn median_time<T>(
    repeat: usize,
    mut f: impl FnMut() -> Result<T, Error>,
) -> Result<(T, f64), Error> {
    let mut times = Vec::with_capacity(repeat.max(1));
    let mut out = None;
    for _ in 0..repeat.max(1) {
        let t = Instant::now();
        out = Some(f()?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok((out.expect("at least one run"), times[times.len() / 2]))
}

fn load_planes(
    a: &Option<PathBuf>,
    b: &Option<PathBuf>,
    seed: u64,
) -> CliResult<Option<(GroundPlane, GroundPlane)>> {
    let ransac = RansacOptions {
        seed,
        ..Default::default()
    };
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some((load_plane(a, &ransac)?, load_plane(b, &ransac)?))),
        _ => Ok(None),
    }
}

fn build_accumulator(
    mode: ConstraintMode,
    pairs: &[MotionPair],
    planes: Option<(GroundPlane, GroundPlane)>,
) -> CliResult<CostAccumulator> {
    let mut acc = match (mode, planes) {
        (ConstraintMode::Planar, Some((a, b))) => {
            CostAccumulator::planar_with_alignment(plane_alignment_dq(&a), plane_alignment_dq(&b))
        }
        (ConstraintMode::Full3D, Some(_)) => {
            return Err(Error::Config("ground planes require --mode planar".into()).into())
        }
        (mode, None) => CostAccumulator::new(mode),
    };
    for p in pairs {
        acc.add(p)?;
    }
    Ok(acc)
}

#[derive(Debug, Serialize)]
struct SolveReport {
    solver: &'static str,
    q8: [f64; 8],
    axis: [f64; 3],
    angle_deg: f64,
    translation: [f64; 3],
    cost: f64,
    gap: f64,
    is_global: bool,
    null_dim: usize,
    plane_derived: bool,
    time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_r_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_t_m: Option<f64>,
}

const REPORT_CSV_HEADER: &str =
    "solver,q1,q2,q3,q4,q5,q6,q7,q8,cost,gap,is_global,time_ms,eps_r_deg,eps_t_m";

impl SolveReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        solver: &'static str,
        q: DualQuat,
        cost: f64,
        gap: f64,
        is_global: bool,
        null_dim: usize,
        plane_derived: bool,
        time_ms: f64,
        gt: Option<DualQuat>,
    ) -> CliResult<Self> {
        let q = q.canonicalize();
        let (axis, angle, t) = q.to_rot_trans()?;
        let err = gt.map(|g| calib_error(&q, &g)).transpose()?;
        Ok(Self {
            solver,
            q8: q.to_vec().into(),
            axis: axis.into(),
            angle_deg: angle.to_degrees(),
            translation: t.into(),
            cost,
            gap,
            is_global,
            null_dim,
            plane_derived,
            time_ms,
            eps_r_deg: err.map(|e| e.eps_r_deg()),
            eps_t_m: err.map(|e| e.eps_t),
        })
    }

    fn text(&self) -> String {
        let mut s = format!(
            "[{}]\n  q: {}\n  rotation: {:.6}° about ({:.6}, {:.6}, {:.6})\n  translation: ({:.6}, {:.6}, {:.6}) m\n  cost: {:.6e}\n  gap: {:.6e}\n  is_global: {}\n  time: {:.3} ms",
            self.solver,
            fmt_q8(&Vec8::from(self.q8)),
            self.angle_deg,
            self.axis[0],
            self.axis[1],
            self.axis[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
            self.cost,
            self.gap,
            self.is_global,
            self.time_ms
        );
        if self.plane_derived {
            s.push_str("\n  height, roll and pitch fixed by the planar constraints");
        }
        if let (Some(r), Some(t)) = (self.eps_r_deg, self.eps_t_m) {
            s.push_str(&format!("\n  eps_r: {r:.6e}°\n  eps_t: {t:.6e} m"));
        }
        s
    }

    fn csv(&self) -> String {
        let q: Vec<String> = self.q8.iter().map(|v| format!("{v:.16e}")).collect();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        format!(
            "{},{},{:.9e},{:.9e},{},{:.4},{},{}",
            self.solver,
            q.join(","),
            self.cost,
            self.gap,
            self.is_global,
            self.time_ms,
            opt(self.eps_r_deg),
            opt(self.eps_t_m)
        )
    }
}

fn emit_reports(output: Output, reports: &[SolveReport]) -> CliResult {
    let mut out = io::stdout().lock();
    match output {
        Output::Text => {
            for r in reports {
                writeln!(out, "{}", r.text())?;
            }
            if let [a, b] = reports {
                let d = calib_error(
                    &DualQuat::from_vec(&Vec8::from(a.q8)),
                    &DualQuat::from_vec(&Vec8::from(b.q8)),
                )?;
                writeln!(out, "agreement: {:.3e}° / {:.3e} m", d.eps_r_deg(), d.eps_t)?;
            }
        }
        Output::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&json!({ "solutions": reports }))?
        )?,
        Output::Csv => {
            writeln!(out, "{REPORT_CSV_HEADER}")?;
            for r in reports {
                writeln!(out, "{}", r.csv())?;
            }
        }
    }
    Ok(())
}

fn cmd_calibrate(
    cli: &Cli,
    pairs: &Path,
    planes: Option<(GroundPlane, GroundPlane)>,
    solver: Solver,
    init: Option<DualQuat>,
    gt: Option<DualQuat>,
) -> CliResult {
    let pairs = load_pairs(pairs)?;
    let acc = build_accumulator(cli.mode, &pairs, planes)?;
    let dual = DualSolveOptions {
        gap_threshold: cli.gap_threshold,
        ..Default::default()
    };
    let cert_opts = CertifyOptions {
        gap_threshold: cli.gap_threshold,
        ..Default::default()
    };
    let mut reports = Vec::new();
    if matches!(solver, Solver::Global | Solver::Both) {
        let (s, ms) = median_time(cli.repeat, || solve_global(&acc, &dual))?;
        reports.push(SolveReport::new(
            "global",
            s.q_hat,
            s.primal_cost,
            s.gap,
            s.is_global,
            s.null_dim,
            s.plane_derived,
            ms,
            gt,
        )?);
    }
    if matches!(solver, Solver::Fast | Solver::Both) {
        let (s, ms) = median_time(cli.repeat, || {
            solve_fast(&acc, init, &LocalSolveOptions::default(), &cert_opts)
        })?;
        reports.push(SolveReport::new(
            "fast",
            s.q_hat,
            s.primal_cost,
            s.gap,
            s.is_global,
            s.null_dim,
            s.plane_derived,
            ms,
            gt,
        )?);
    }
    emit_reports(cli.output, &reports)
}

fn cmd_online(
    cli: &Cli,
    pairs: &Path,
    t_no_fail: f64,
    planes: Option<(GroundPlane, GroundPlane)>,
    trace: Option<&Path>,
    gt: Option<DualQuat>,
) -> CliResult {
    let pairs = load_pairs(pairs)?;
    if planes.is_some() && cli.mode != ConstraintMode::Planar {
        return Err(Error::Config("ground planes require --mode planar".into()).into());
    }
    let cfg = OnlineConfig {
        mode: cli.mode,
        t_no_fail,
        planes,
        ..Default::default()
    }
    .with_gap_threshold(cli.gap_threshold);
    let steps = replay(&pairs, &cfg, gt.as_ref())?;
    let mut out: Box<dyn Write> = match trace {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    let opt = |e: Option<CalibError>, f: fn(&CalibError) -> f64| {
        e.map(|e| format!("{:.9e}", f(&e))).unwrap_or_default()
    };
    if cli.output == Output::Json {
        let rows: Vec<_> = steps
            .iter()
            .map(|s| {
                json!({
                    "t": s.t,
                    "eps_r_deg": s.error.map(|e| e.eps_r_deg()),
                    "eps_t_m": s.error.map(|e| e.eps_t),
                    "gap": s.solution.gap,
                    "is_global": s.solution.is_global,
                    "provenance": s.solution.provenance,
                    "time_ms": s.solution.solve_time * 1e3,
                    "q8": s.solution.q_hat.to_vec().as_slice(),
                })
            })
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        writeln!(out, "t,eps_r_deg,eps_t_m,gap,provenance,time_ms")?;
        for s in &steps {
            writeln!(
                out,
                "{},{},{},{:.9e},{},{:.4}",
                s.t,
                opt(s.error, |e| e.eps_r_deg()),
                opt(s.error, |e| e.eps_t),
                s.solution.gap,
                s.solution.provenance,
                s.solution.solve_time * 1e3
            )?;
        }
    }
    out.flush()?;
    let local = steps
        .iter()
        .filter(|s| s.solution.provenance == dqcalib::Provenance::Local)
        .count();
    let mut summary = format!(
        "steps {} local {} global {} switches {}",
        steps.len(),
        local,
        steps.len() - local,
        provenance_switches(&steps)
    );
    if let Some(last) = steps.last() {
        summary.push_str(&format!(
            " final_gap {:.3e} final_is_global {}",
            last.solution.gap, last.solution.is_global
        ));
        if let Some(e) = last.error {
            summary.push_str(&format!(
                " final_eps_r_deg {:.6e} final_eps_t_m {:.6e}",
                e.eps_r_deg(),
                e.eps_t
            ));
        }
    }
    eprintln!("{summary}");
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".gt.json");
    PathBuf::from(s)
}

fn cmd_simulate(cli: &Cli, config: Option<&Path>, out: &Path) -> CliResult {
    let mut cfg: SimConfig = match config {
        Some(p) => read_json(p)?,
        None => SimConfig {
            seed: cli.seed,
            ..Default::default()
        },
    };
    if config.is_some() && cli.seed != 0 {
        cfg.seed = cli.seed;
    }
    cfg.validate()?;
    let sim = simulate(&cfg)?;
    save_pairs(out, &sim.pairs)?;
    let gt = json!({
        "true_calib": sim.true_calib.to_vec().as_slice(),
        "mount_a": sim.mount_a.to_vec().as_slice(),
        "plane_a": [sim.ground_plane_a().normal.x, sim.ground_plane_a().normal.y, sim.ground_plane_a().normal.z, sim.ground_plane_a().distance],
        "plane_b": [sim.ground_plane_b().normal.x, sim.ground_plane_b().normal.y, sim.ground_plane_b().normal.z, sim.ground_plane_b().distance],
        "num_pairs": sim.pairs.len(),
        "config": cfg,
    });
    std::fs::write(sidecar_path(out), serde_json::to_string_pretty(&gt)? + "\n")?;
    match cli.output {
        Output::Json => println!(
            "{}",
            json!({ "pairs": sim.pairs.len(), "out": out, "ground_truth": sidecar_path(out) })
        ),
        _ => println!(
            "wrote {} pairs to {} (ground truth in {})",
            sim.pairs.len(),
            out.display(),
            sidecar_path(out).display()
        ),
    }
    Ok(())
}

fn cmd_study(cli: &Cli, config: Option<&Path>, out: &Path) -> CliResult {
    let mut cfg: StudyConfig = match config {
        Some(p) => read_json(p)?,
        None => StudyConfig::default(),
    };
    cfg.mode = if config.is_some() { cfg.mode } else { cli.mode };
    cfg.dual.gap_threshold = cli.gap_threshold;
    let rows = run_study(&cfg)?;
    write_csv(BufWriter::new(File::create(out)?), &rows)?;
    let summary = trend(&rows);
    match cli.output {
        Output::Json => println!("{}", serde_json::to_string_pretty(&summary)?),
        _ => {
            println!("wrote {} rows to {}", rows.len(), out.display());
            for t in &summary {
                let m: Vec<String> = t
                    .medians
                    .iter()
                    .map(|(n, e)| format!("{n}:{e:.4}"))
                    .collect();
                println!(
                    "noise {:>5.1}%  median eps_t [{}]  inversions {}",
                    t.noise_level * 100.0,
                    m.join(" "),
                    t.inversions
                );
            }
        }
    }
    Ok(())
}

fn cmd_certify(
    cli: &Cli,
    pairs: &Path,
    candidate: &Vec8,
    planes: Option<(GroundPlane, GroundPlane)>,
) -> CliResult {
    let pairs = load_pairs(pairs)?;
    let acc = build_accumulator(cli.mode, &pairs, planes)?;
    let cand = DualQuat::from_vec(candidate);
    if !cand.is_unit() {
        let (r, d) = cand.unit_residual();
        return Err(Failure {
            code: 3,
            msg: format!("candidate is not a unit dual quaternion (residuals {r:.3e}, {d:.3e})"),
        });
    }
    let x = match acc.alignment() {
        Some((g_a, g_b)) => dqcalib::planar::project_calibration(cand, g_a, g_b).to_vec(),
        None => *candidate,
    };
    let opts = CertifyOptions {
        gap_threshold: cli.gap_threshold,
        ..Default::default()
    };
    let q = acc.normalized_q();
    let (c, ms) = median_time(cli.repeat, || certify(&q, &x, acc.mode(), &opts))?;
    match cli.output {
        Output::Text => println!(
            "gap: {:.6e}\nresidual: {:.6e}\nmin_eig: {:.6e}\ncost: {:.6e}\ndual_bound: {:.6e}\nis_global: {}\nunique: {}\ntime: {:.3} ms",
            c.gap, c.residual, c.min_eig, c.primal_cost, c.dual_bound, c.is_global, c.unique, ms
        ),
        Output::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "gap": c.gap, "residual": c.residual, "min_eig": c.min_eig, "cost": c.primal_cost,
                "dual_bound": c.dual_bound, "is_global": c.is_global, "unique": c.unique,
                "null_dim": c.null_dim, "time_ms": ms,
            }))?
        ),
        Output::Csv => println!(
            "gap,residual,min_eig,cost,dual_bound,is_global,unique,time_ms\n{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{:.4}",
            c.gap, c.residual, c.min_eig, c.primal_cost, c.dual_bound, c.is_global, c.unique, ms
        ),
    }
    Ok(())
}

fn cmd_fit_plane(cli: &Cli, points: &Path, iterations: usize, threshold: f64) -> CliResult {
    let pts = parse_points(&std::fs::read_to_string(points)?)?;
    let opts = RansacOptions {
        iterations,
        inlier_threshold: threshold,
        seed: cli.seed,
    };
    let p = fit_ground_plane(&pts, &opts)?;
    let n = p.normal;
    match cli.output {
        Output::Text => println!("{:.12} {:.12} {:.12} {:.12}", n.x, n.y, n.z, p.distance),
        Output::Json => println!(
            "{}",
            json!({ "normal": [n.x, n.y, n.z], "distance": p.distance })
        ),
        Output::Csv => println!(
            "nx,ny,nz,d\n{:.12},{:.12},{:.12},{:.12}",
            n.x, n.y, n.z, p.distance
        ),
    }
    Ok(())
}

fn cmd_pair(
    cli: &Cli,
    a: &Path,
    b: &Path,
    format: Format,
    max_skew: f64,
    nearest: bool,
    out: &Path,
) -> CliResult {
    let format = match format {
        Format::Tum => TrajectoryFormat::Tum,
        Format::Kitti => TrajectoryFormat::Kitti,
    };
    let ta = load_trajectory(a, format, KITTI_RATE_HZ)?;
    let tb = load_trajectory(b, format, KITTI_RATE_HZ)?;
    let cfg = PairingConfig {
        max_skew,
        interpolate: !nearest,
    };
    let pairing = pair_streams(&ta, &tb, &cfg)?;
    save_pairs(out, &pairing.pairs)?;
    match cli.output {
        Output::Json => println!(
            "{}",
            json!({ "pairs": pairing.pairs.len(), "dropped": pairing.dropped })
        ),
        _ => println!(
            "wrote {} pairs to {} ({} dropped)",
            pairing.pairs.len(),
            out.display(),
            pairing.dropped
        ),
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    if !(cli.gap_threshold > 0.0) {
        return Err(Error::Config("--gap-threshold must be positive".into()).into());
    }
    if cli.repeat == 0 {
        return Err(Error::Config("--repeat must be at least 1".into()).into());
    }
    match &cli.command {
        Command::Calibrate {
            pairs,
            plane_a,
            plane_b,
            solver,
            init,
            gt,
        } => {
            let planes = load_planes(plane_a, plane_b, cli.seed)?;
            cmd_calibrate(cli, pairs, planes, *solver, *init, gt.get())
        }
        Command::Online {
            pairs,
            t_no_fail,
            plane_a,
            plane_b,
            trace,
            gt,
        } => {
            let planes = load_planes(plane_a, plane_b, cli.seed)?;
            cmd_online(cli, pairs, *t_no_fail, planes, trace.as_deref(), gt.get())
        }
        Command::Simulate { config, out } => cmd_simulate(cli, config.as_deref(), out),
        Command::Study { config, out } => cmd_study(cli, config.as_deref(), out),
        Command::Certify {
            pairs,
            candidate,
            plane_a,
            plane_b,
        } => {
            let planes = load_planes(plane_a, plane_b, cli.seed)?;
            cmd_certify(cli, pairs, candidate, planes)
        }
        Command::FitPlane {
            points,
            iterations,
            threshold,
        } => cmd_fit_plane(cli, points, *iterations, *threshold),
        Command::Pair {
            traj_a,
            traj_b,
            format,
            max_skew,
            nearest,
            out,
        } => cmd_pair(cli, traj_a, traj_b, *format, *max_skew, *nearest, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                eprintln!("error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
