//! Error-versus-size sweeps over simulated datasets.
//!
//! For every `(noise, seed)` one dataset with the largest size is generated;
//! smaller sizes use its prefixes so the datasets of one seed are nested.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMode;
use crate::cost::CostAccumulator;
use crate::error::{Error, Result};
use crate::global::{solve_global, DualSolveOptions};
use crate::metrics::calib_error;
use crate::planar::plane_alignment_dq;
use crate::sim::{simulate, NoiseSpec, SimConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DQCALIB_THREADS";

pub const CSV_HEADER: &str = "noise_level,n,seed,eps_r_deg,eps_t_m,gap,time_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Relative noise levels.
    #[serde(default = "default_noise")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: ConstraintMode,
    /// Template for each dataset; its noise, seed and size are overridden.
    #[serde(default)]
    pub base: SimConfig,
    #[serde(default)]
    pub dual: DualSolveOptions,
}

fn default_noise() -> Vec<f64> {
    vec![0.02, 0.05, 0.1]
}
fn default_sizes() -> Vec<usize> {
    vec![25, 50, 100, 200, 400]
}
fn default_seeds() -> Vec<u64> {
    (0..8).collect()
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            noise_levels: default_noise(),
            sizes: default_sizes(),
            seeds: default_seeds(),
            mode: ConstraintMode::Full3D,
            base: SimConfig::default(),
            dual: DualSolveOptions::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_levels.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("study grid must be non-empty".into()));
        }
        if self.noise_levels.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub noise_level: f64,
    pub n: usize,
    pub seed: u64,
    /// NaN when the solver failed on this cell.
    pub eps_r_deg: f64,
    pub eps_t_m: f64,
    pub gap: f64,
    pub time_ms: f64,
}

impl StudyRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.9e},{:.9e},{:.6e},{:.4}",
            self.noise_level,
            self.n,
            self.seed,
            self.eps_r_deg,
            self.eps_t_m,
            self.gap,
            self.time_ms
        )
    }
}

fn build_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run_dataset(cfg: &StudyConfig, noise: f64, seed: u64) -> Result<Vec<StudyRow>> {
    let max_n = *cfg.sizes.iter().max().expect("validated non-empty");
    let sim_cfg = SimConfig {
        noise: NoiseSpec::Relative { level: noise },
        seed,
        num_pairs: max_n,
        ..cfg.base.clone()
    };
    let sim = simulate(&sim_cfg)?;
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let pairs = &sim.pairs[..n.min(sim.pairs.len())];
        let start = Instant::now();
        let acc = match cfg.mode {
            ConstraintMode::Full3D => CostAccumulator::from_pairs(ConstraintMode::Full3D, pairs),
            ConstraintMode::Planar => {
                let g_a = plane_alignment_dq(&sim.ground_plane_a());
                let g_b = plane_alignment_dq(&sim.ground_plane_b());
                let mut acc = CostAccumulator::planar_with_alignment(g_a, g_b);
                pairs.iter().try_for_each(|p| acc.add(p))?;
                Ok(acc)
            }
        };
        let result = acc.and_then(|acc| solve_global(&acc, &cfg.dual));
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        let row = match result {
            Ok(sol) => {
                let err = calib_error(&sol.q_hat, &sim.true_calib)?;
                StudyRow {
                    noise_level: noise,
                    n,
                    seed,
                    eps_r_deg: err.eps_r_deg(),
                    eps_t_m: err.eps_t,
                    gap: sol.gap,
                    time_ms,
                }
            }
            Err(e) => {
                log::warn!("study cell noise={noise} n={n} seed={seed} failed: {e}");
                StudyRow {
                    noise_level: noise,
                    n,
                    seed,
                    eps_r_deg: f64::NAN,
                    eps_t_m: f64::NAN,
                    gap: f64::NAN,
                    time_ms,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Runs the sweep. Rows are ordered by noise level, size and seed.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = cfg
        .noise_levels
        .iter()
        .flat_map(|&l| cfg.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let pool = build_pool()?;
    let per_dataset: Vec<Vec<StudyRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(l, s)| run_dataset(cfg, l, s))
            .collect::<Result<_>>()
    })?;
    let mut rows: Vec<StudyRow> = per_dataset.into_iter().flatten().collect();
    let noise_rank = |l: f64| cfg.noise_levels.iter().position(|&x| x == l);
    let size_rank = |n: usize| cfg.sizes.iter().position(|&x| x == n);
    let seed_rank = |s: u64| cfg.seeds.iter().position(|&x| x == s);
    rows.sort_by_key(|r| (noise_rank(r.noise_level), size_rank(r.n), seed_rank(r.seed)));
    Ok(rows)
}

pub fn write_csv<W: Write>(mut w: W, rows: &[StudyRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Median of the finite values, NaN if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub noise_level: f64,
    /// `(n, median eps_t)` in increasing `n`.
    pub medians: Vec<(usize, f64)>,
    /// Number of consecutive sizes where the median increases.
    pub inversions: usize,
}

/// Per-noise-level medians of `eps_t` over seeds, and their inversions.
pub fn trend(rows: &[StudyRow]) -> Vec<TrendSummary> {
    let mut levels: Vec<f64> = rows.iter().map(|r| r.noise_level).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .into_iter()
        .map(|l| {
            let mut sizes: Vec<usize> = rows
                .iter()
                .filter(|r| r.noise_level == l)
                .map(|r| r.n)
                .collect();
            sizes.sort_unstable();
            sizes.dedup();
            let medians: Vec<(usize, f64)> = sizes
                .iter()
                .map(|&n| {
                    (
                        n,
                        median(
                            rows.iter()
                                .filter(|r| r.noise_level == l && r.n == n)
                                .map(|r| r.eps_t_m),
                        ),
                    )
                })
                .collect();
            let inversions = medians.windows(2).filter(|w| !(w[1].1 <= w[0].1)).count();
            TrendSummary {
                noise_level: l,
                medians,
                inversions,
            }
        })
        .collect()
}
