//! Sweeps behind the `table`, `diagnostics` and `lfms-demo` commands.
//! Cells run in parallel; rows always come back in grid order.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use stiefel_log::frechet::{jacobian_exp, jacobian_singular_values, random_structured, sinc};
use stiefel_log::leapfrog::{Phase, TraceRow};
use stiefel_log::manifold::geodesic_instance;
use stiefel_log::single::jacobian_diagnostics;
use stiefel_log::{lfms, random_tangent, stiefel_log, LfmsConfig, ShootingConfig, StiefelPoint};

use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "STIEFEL_SHOOT_THREADS";

/// Runs `f` on a pool capped by `STIEFEL_SHOOT_THREADS` when it is set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| CliError::input(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Table1,
    Table2,
    Scaling,
}

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub kind: TableKind,
    pub n: usize,
    pub ps: Vec<usize>,
    pub ds: Vec<f64>,
    pub seeds: Vec<u64>,
    pub repeat: usize,
    pub cfg: ShootingConfig,
}

impl TableSpec {
    /// Grid defaults for each table kind.
    pub fn defaults(kind: TableKind, n: Option<usize>, seeds: usize) -> Self {
        let (n, ps, ds) = match kind {
            TableKind::Table1 => {
                let n = n.unwrap_or(15);
                (n, (1..=n).collect(), [0.85, 0.875, 0.9, 0.925, 0.95, 0.975, 1.0].map(|f| f * PI).to_vec())
            }
            TableKind::Table2 => {
                let n = n.unwrap_or(15);
                (n, (1..=n).collect(), vec![0.75 * PI])
            }
            TableKind::Scaling => {
                let n = n.unwrap_or(200);
                (n, [2, 4, 6, 8, 10].into_iter().filter(|&p| p <= n).collect(), vec![0.75 * PI])
            }
        };
        Self {
            kind,
            n,
            ps,
            ds,
            seeds: (0..seeds as u64).collect(),
            repeat: 1,
            cfg: ShootingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub p: usize,
    pub d: f64,
    pub d_over_pi: f64,
    pub seeds: usize,
    pub converged_fraction: f64,
    pub mean_iterations: f64,
    /// Mean over seeds of the median wall-clock time per solve.
    pub mean_time_s: f64,
    pub max_final_residual: f64,
    pub max_final_mismatch: f64,
    /// Largest `|distance - d|` over converged seeds.
    pub max_distance_error: f64,
}

struct SeedResult {
    converged: bool,
    iterations: usize,
    residual: f64,
    mismatch: f64,
    distance_error: Option<f64>,
    time: f64,
}

fn run_seed(n: usize, p: usize, d: f64, seed: u64, spec: &TableSpec) -> CliResult<SeedResult> {
    let (x, y, _) = geodesic_instance(n, p, d, seed)?;
    let mut times = Vec::with_capacity(spec.repeat);
    let mut report = None;
    for _ in 0..spec.repeat.max(1) {
        let t = Instant::now();
        let r = stiefel_log(&x, &y, &spec.cfg)?;
        times.push(t.elapsed().as_secs_f64());
        report = Some(r);
    }
    let r = report.expect("at least one repeat");
    times.sort_by(|a, b| a.total_cmp(b));
    let median = times[times.len() / 2];
    Ok(SeedResult {
        converged: r.converged,
        iterations: r.iterations,
        residual: r.final_residual(),
        mismatch: r.final_mismatch,
        distance_error: r.converged.then(|| (r.length() - d).abs()),
        time: median,
    })
}

pub fn run_table(spec: &TableSpec) -> CliResult<Vec<TableRow>> {
    if spec.n == 0 || spec.ps.iter().any(|&p| p == 0 || p > spec.n) {
        return Err(CliError::input(format!("need 1 <= p <= n = {}", spec.n)));
    }
    if spec.seeds.is_empty() {
        return Err(CliError::input("need at least one seed"));
    }
    let cells: Vec<(usize, f64)> = spec.ps.iter().flat_map(|&p| spec.ds.iter().map(move |&d| (p, d))).collect();
    let work: Vec<(usize, f64, u64)> = cells
        .iter()
        .flat_map(|&(p, d)| spec.seeds.iter().map(move |&s| (p, d, s)))
        .collect();
    let results: Vec<SeedResult> = with_pool(|| {
        work.par_iter()
            .map(|&(p, d, s)| run_seed(spec.n, p, d, s, spec))
            .collect::<CliResult<Vec<_>>>()
    })??;
    let k = spec.seeds.len();
    Ok(cells
        .iter()
        .zip(results.chunks(k))
        .map(|(&(p, d), rs)| {
            let kf = k as f64;
            TableRow {
                n: spec.n,
                p,
                d,
                d_over_pi: d / PI,
                seeds: k,
                converged_fraction: rs.iter().filter(|r| r.converged).count() as f64 / kf,
                mean_iterations: rs.iter().map(|r| r.iterations as f64).sum::<f64>() / kf,
                mean_time_s: rs.iter().map(|r| r.time).sum::<f64>() / kf,
                max_final_residual: rs.iter().map(|r| r.residual).fold(0.0, f64::max),
                max_final_mismatch: rs.iter().map(|r| r.mismatch).fold(0.0, f64::max),
                max_distance_error: rs.iter().filter_map(|r| r.distance_error).fold(0.0, f64::max),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SincRow {
    pub alpha: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub abs_sinc: f64,
    pub abs_diff: f64,
}

/// Extreme singular values of the exponential's Jacobian at random
/// structured generators of prescribed spectral norm.
pub fn sinc_law(n: usize, p: usize, alphas: &[f64], seed: u64) -> CliResult<Vec<SincRow>> {
    if p == 0 || p >= n {
        return Err(CliError::input("sinc-law needs 1 <= p < n"));
    }
    with_pool(|| {
        alphas
            .par_iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let a = random_structured(n, p, alpha, seed + i as u64)?;
                let sv = jacobian_singular_values(&jacobian_exp(&a)?.matrix);
                let (smax, smin) = (sv[0], sv[sv.len() - 1]);
                let s = sinc(alpha).abs();
                Ok(SincRow {
                    alpha,
                    sigma_min: smin,
                    sigma_max: smax,
                    abs_sinc: s,
                    abs_diff: (smin - s).abs(),
                })
            })
            .collect()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub n: usize,
    pub d: f64,
    pub d_over_pi: f64,
    pub rank: usize,
    pub full_rank: usize,
    pub condition: f64,
}

/// Rank and condition of the endpoint Jacobian on the sphere `S^{n-1}`
/// as the distance approaches the cut locus.
pub fn rank_sweep(ns: &[usize], ds: &[f64], seed: u64) -> CliResult<Vec<RankRow>> {
    if ns.iter().any(|&n| n < 2) {
        return Err(CliError::input("rank-sweep needs n >= 2"));
    }
    let cells: Vec<(usize, f64)> = ns.iter().flat_map(|&n| ds.iter().map(move |&d| (n, d))).collect();
    with_pool(|| {
        cells
            .par_iter()
            .map(|&(n, d)| {
                let x = StiefelPoint::identity_frame(n, 1)?;
                let xi = random_tangent(&x, d, seed + n as u64)?;
                let diag = jacobian_diagnostics(&x, &xi)?;
                Ok(RankRow {
                    n,
                    d,
                    d_over_pi: d / PI,
                    rank: diag.rank,
                    full_rank: diag.columns,
                    condition: diag.condition,
                })
            })
            .collect()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCsvRow {
    pub phase: &'static str,
    pub m: usize,
    pub iteration: usize,
    #[serde(rename = "F_norm")]
    pub f_norm: f64,
    pub length: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(t: &TraceRow) -> Self {
        Self {
            phase: t.phase.as_str(),
            m: t.m,
            iteration: t.iteration,
            f_norm: t.f_norm,
            length: t.length,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub x: StiefelPoint,
    pub y: StiefelPoint,
    pub d: f64,
    pub report: stiefel_log::LfmsReport,
}

impl DemoOutcome {
    pub fn sweeps(&self) -> usize {
        self.report.trace.iter().filter(|t| t.phase == Phase::Leapfrog && t.iteration > 0).count()
    }

    pub fn ms_iterations(&self) -> Option<usize> {
        self.report.ms.as_ref().map(|m| m.iterations)
    }
}

pub fn lfms_demo(n: usize, p: usize, d: f64, seed: u64, cfg: &LfmsConfig) -> CliResult<DemoOutcome> {
    let (x, y, _) = geodesic_instance(n, p, d, seed)?;
    let report = lfms(&x, &y, cfg)?;
    Ok(DemoOutcome { x, y, d, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m_start: usize,
    pub m_used: Option<usize>,
    pub converged: bool,
    pub distance: Option<f64>,
    pub sweeps: usize,
    pub ms_iterations: Option<usize>,
}

/// One LFMS run per starting partition; single shooting is skipped so
/// every row exercises leapfrog.
pub fn lfms_m_sweep(n: usize, p: usize, d: f64, seed: u64, ms: &[usize], base: &LfmsConfig) -> CliResult<Vec<SweepRow>> {
    with_pool(|| {
        ms.par_iter()
            .map(|&m| {
                let cfg = LfmsConfig {
                    initial_m: m,
                    max_m: base.max_m.max(m),
                    try_single_first: false,
                    ..*base
                };
                let out = lfms_demo(n, p, d, seed, &cfg)?;
                Ok(SweepRow {
                    m_start: m,
                    m_used: out.report.m(),
                    converged: out.report.converged,
                    distance: out.report.distance(),
                    sweeps: out.sweeps(),
                    ms_iterations: out.ms_iterations(),
                })
            })
            .collect()
    })?
}
