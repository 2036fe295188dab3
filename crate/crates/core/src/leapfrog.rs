//! Leapfrog initialization and the combined solver: try single shooting,
//! and on failure leapfrog a broken geodesic until it is nearly smooth, then
//! finish with multiple shooting.
//!
//! A leapfrog sweep moves each interior junction, in order, to the midpoint
//! of the single-shooting geodesic between its two neighbours. Each sweep
//! cannot lengthen the broken geodesic; the junction mismatch decays
//! linearly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Mat};
use crate::manifold::{gaussian, stiefel_exp, StiefelPoint, TangentVector};
use crate::multiple::{multiple_shoot, residual_f, BrokenGeodesic, MsConfig, MsReport};
use crate::single::{stiefel_log, ShootingConfig, ShootingReport};

/// Junctions of a piecewise geodesic with the single-shooting logs between
/// consecutive junctions.
#[derive(Debug, Clone)]
pub struct LeapfrogState {
    pub junctions: Vec<StiefelPoint>,
    pub segment_logs: Vec<TangentVector>,
    /// Sum of the canonical norms of the segment logs.
    pub length: f64,
    /// `|F(Sigma)|_2` of the broken geodesic built from the state.
    pub residual: f64,
    pub sweeps: usize,
}

impl LeapfrogState {
    pub fn m(&self) -> usize {
        self.junctions.len()
    }

    /// The broken geodesic handed to multiple shooting: the segment logs
    /// become the junction velocities, and the last junction takes the end
    /// velocity of the final segment.
    pub fn broken_geodesic(&self) -> Result<BrokenGeodesic> {
        let m = self.m();
        let last = stiefel_exp(&self.junctions[m - 2], &self.segment_logs[m - 2], 1.0)?;
        let points: Vec<Mat> = self.junctions.iter().map(|j| j.matrix().clone()).collect();
        let mut tangents: Vec<Mat> = self.segment_logs.iter().map(|v| v.matrix().clone()).collect();
        tangents.push(last.velocity.into_matrix());
        BrokenGeodesic::from_raw(points, tangents)
    }
}

fn evaluate(junctions: Vec<StiefelPoint>, cfg: &ShootingConfig, sweeps: usize) -> Result<LeapfrogState> {
    let m = junctions.len();
    let mut logs = Vec::with_capacity(m - 1);
    for k in 0..m - 1 {
        let r = stiefel_log(&junctions[k], &junctions[k + 1], cfg)?;
        if !r.converged {
            return Err(Error::LeapfrogInfeasible {
                m,
                reason: format!("segment {k} -> {}: single shooting {}", k + 1, r.reason.as_str()),
            });
        }
        logs.push(r.xi);
    }
    let length = logs.iter().map(TangentVector::canonical_norm).sum();
    let mut state = LeapfrogState {
        junctions,
        segment_logs: logs,
        length,
        residual: 0.0,
        sweeps,
    };
    let bg = state.broken_geodesic()?;
    let x = &state.junctions[0];
    let y = &state.junctions[m - 1];
    state.residual = residual_f(&bg, x, y)?.norm();
    Ok(state)
}

/// Chord points `(1 - t_k) X + t_k Y`, `t_k = k/(m-1)`, projected onto
/// St(n,p) by the polar factor. Rank-deficient chords are jittered with
/// seeded noise.
pub fn leapfrog_init(
    x: &StiefelPoint,
    y: &StiefelPoint,
    m: usize,
    cfg: &ShootingConfig,
    seed: u64,
) -> Result<LeapfrogState> {
    if m < 3 {
        return Err(invalid("leapfrog needs m >= 3 junctions"));
    }
    if x.matrix().shape() != y.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: x.matrix().shape(),
            got: y.matrix().shape(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut junctions = Vec::with_capacity(m);
    junctions.push(x.clone());
    for k in 1..m - 1 {
        let t = k as f64 / (m - 1) as f64;
        let chord = x.matrix() * (1.0 - t) + y.matrix() * t;
        let mut point = linalg::polar(&chord);
        let mut tries = 0;
        while point.is_err() && tries < 5 {
            let (n, p) = chord.shape();
            let noise = gaussian(n, p, &mut rng) * 1e-6;
            point = linalg::polar(&(&chord + noise));
            tries += 1;
        }
        let point = point.map_err(|e| Error::LeapfrogInfeasible {
            m,
            reason: format!("chord point {k} is rank deficient: {e}"),
        })?;
        junctions.push(StiefelPoint::new(point)?);
    }
    junctions.push(y.clone());
    evaluate(junctions, cfg, 0)
}

/// One Gauss-Seidel pass over the interior junctions.
pub fn leapfrog_sweep(state: &LeapfrogState, cfg: &ShootingConfig) -> Result<LeapfrogState> {
    let m = state.m();
    let mut junctions = state.junctions.clone();
    for j in 1..m - 1 {
        let r = stiefel_log(&junctions[j - 1], &junctions[j + 1], cfg)?;
        if !r.converged {
            return Err(Error::LeapfrogInfeasible {
                m,
                reason: format!(
                    "junctions {} -> {}: single shooting {}",
                    j - 1,
                    j + 1,
                    r.reason.as_str()
                ),
            });
        }
        junctions[j] = stiefel_exp(&junctions[j - 1], &r.xi, 0.5)?.point;
    }
    let next = evaluate(junctions, cfg, state.sweeps + 1)?;
    if next.length > state.length + 1e-12 {
        return Err(Error::LeapfrogInfeasible {
            m,
            reason: format!("sweep increased the length from {} to {}", state.length, next.length),
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfmsConfig {
    /// Single-shooting settings, used for the first attempt and for every
    /// leapfrog segment.
    pub ss: ShootingConfig,
    /// Leapfrog stops once `|F(Sigma)|_2` is at most this.
    pub handover_tol: f64,
    pub initial_m: usize,
    pub max_m: usize,
    pub max_sweeps: usize,
    pub ms: MsConfig,
    /// Seed for chord jitter.
    pub seed: u64,
    /// Attempt plain single shooting before leapfrogging.
    pub try_single_first: bool,
}

impl Default for LfmsConfig {
    fn default() -> Self {
        Self {
            ss: ShootingConfig::default(),
            handover_tol: 1e-3,
            initial_m: 3,
            max_m: 16,
            max_sweeps: 1000,
            ms: MsConfig::default(),
            seed: 0,
            try_single_first: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfmsPath {
    SingleShooting,
    Lfms { m: usize },
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SingleShooting,
    Leapfrog,
    MultipleShooting,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::SingleShooting => "single",
            Phase::Leapfrog => "leapfrog",
            Phase::MultipleShooting => "multiple",
        }
    }
}

/// One monitored iterate: `F_norm` is the single-shooting mismatch or the
/// broken-geodesic residual `|F(Sigma)|_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub phase: Phase,
    pub m: usize,
    pub iteration: usize,
    pub f_norm: f64,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct LfmsReport {
    pub path: LfmsPath,
    pub converged: bool,
    pub xi: TangentVector,
    pub single: Option<ShootingReport>,
    pub ms: Option<MsReport>,
    pub sweeps: usize,
    pub trace: Vec<TraceRow>,
    /// Partitions that were tried and abandoned, with the reason.
    pub abandoned: Vec<(usize, String)>,
}

impl LfmsReport {
    pub fn distance(&self) -> Option<f64> {
        if !self.converged {
            return None;
        }
        match &self.ms {
            Some(ms) => ms.distance(),
            None => Some(self.xi.canonical_norm()),
        }
    }

    pub fn m(&self) -> Option<usize> {
        match self.path {
            LfmsPath::Lfms { m } => Some(m),
            _ => None,
        }
    }
}

fn validate(cfg: &LfmsConfig) -> Result<()> {
    if cfg.initial_m < 3 || cfg.max_m < cfg.initial_m {
        return Err(invalid("LFMS needs 3 <= initial_m <= max_m"));
    }
    if !(cfg.handover_tol > cfg.ms.tol) {
        return Err(invalid("handover tolerance must exceed the multiple-shooting tolerance"));
    }
    Ok(())
}

/// Logarithm by single shooting, falling back to leapfrog plus multiple
/// shooting with a growing partition.
pub fn lfms(x: &StiefelPoint, y: &StiefelPoint, cfg: &LfmsConfig) -> Result<LfmsReport> {
    validate(cfg)?;
    let mut trace = Vec::new();
    let mut single = None;
    if cfg.try_single_first {
        let r = stiefel_log(x, y, &cfg.ss)?;
        for (i, (&f, &l)) in r.mismatch_history.iter().zip(&r.length_history).enumerate() {
            trace.push(TraceRow {
                phase: Phase::SingleShooting,
                m: 1,
                iteration: i,
                f_norm: f,
                length: l,
            });
        }
        if r.converged {
            return Ok(LfmsReport {
                path: LfmsPath::SingleShooting,
                converged: true,
                xi: r.xi.clone(),
                single: Some(r),
                ms: None,
                sweeps: 0,
                trace,
                abandoned: Vec::new(),
            });
        }
        single = Some(r);
    }

    let mut abandoned = Vec::new();
    let mut total_sweeps = 0;
    for m in cfg.initial_m..=cfg.max_m {
        match leapfrog_then_ms(x, y, m, cfg, &mut trace, &mut total_sweeps) {
            Ok(ms) if ms.converged => {
                return Ok(LfmsReport {
                    path: LfmsPath::Lfms { m },
                    converged: true,
                    xi: ms.xi.clone(),
                    single,
                    ms: Some(ms),
                    sweeps: total_sweeps,
                    trace,
                    abandoned,
                });
            }
            Ok(ms) => abandoned.push((
                m,
                format!("multiple shooting stopped at |F| = {:e}", ms.f_history.last().copied().unwrap_or(f64::NAN)),
            )),
            Err(e) => abandoned.push((m, format!("{e}"))),
        }
    }
    let xi = match &single {
        Some(r) => r.xi.clone(),
        None => TangentVector::zero(x),
    };
    Ok(LfmsReport {
        path: LfmsPath::Failed,
        converged: false,
        xi,
        single,
        ms: None,
        sweeps: total_sweeps,
        trace,
        abandoned,
    })
}

fn leapfrog_then_ms(
    x: &StiefelPoint,
    y: &StiefelPoint,
    m: usize,
    cfg: &LfmsConfig,
    trace: &mut Vec<TraceRow>,
    total_sweeps: &mut usize,
) -> Result<MsReport> {
    let mut state = leapfrog_init(x, y, m, &cfg.ss, cfg.seed)?;
    let push = |trace: &mut Vec<TraceRow>, s: &LeapfrogState| {
        trace.push(TraceRow {
            phase: Phase::Leapfrog,
            m,
            iteration: s.sweeps,
            f_norm: s.residual,
            length: s.length,
        })
    };
    push(trace, &state);
    while state.residual > cfg.handover_tol {
        if state.sweeps >= cfg.max_sweeps {
            return Err(Error::LeapfrogInfeasible {
                m,
                reason: format!("no handover after {} sweeps (|F| = {:e})", state.sweeps, state.residual),
            });
        }
        state = leapfrog_sweep(&state, &cfg.ss)?;
        *total_sweeps += 1;
        push(trace, &state);
    }
    let bg = state.broken_geodesic()?;
    let ms = multiple_shoot(&bg, x, y, &cfg.ms)?;
    for (i, (&f, &l)) in ms.f_history.iter().zip(&ms.length_history).enumerate() {
        trace.push(TraceRow {
            phase: Phase::MultipleShooting,
            m,
            iteration: i,
            f_norm: f,
            length: l,
        });
    }
    Ok(ms)
}

/// How applications compute logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogBackend {
    Single(ShootingConfig),
    Lfms(LfmsConfig),
}

impl Default for LogBackend {
    fn default() -> Self {
        LogBackend::Lfms(LfmsConfig::default())
    }
}

impl LogBackend {
    /// `Log_x(y)`, or `NoConvergence` carrying the last criterion value.
    pub fn log(&self, x: &StiefelPoint, y: &StiefelPoint) -> Result<TangentVector> {
        match self {
            LogBackend::Single(cfg) => {
                let r = stiefel_log(x, y, cfg)?;
                if r.converged {
                    Ok(r.xi)
                } else {
                    Err(Error::NoConvergence {
                        iterations: r.iterations,
                        last: r.final_residual(),
                    })
                }
            }
            LogBackend::Lfms(cfg) => {
                let r = lfms(x, y, cfg)?;
                if r.converged {
                    Ok(r.xi)
                } else {
                    Err(Error::NoConvergence {
                        iterations: r.trace.len(),
                        last: r.trace.last().map_or(f64::NAN, |t| t.f_norm),
                    })
                }
            }
        }
    }
}

/// Canonical distance through the backend.
pub fn distance(x: &StiefelPoint, y: &StiefelPoint, backend: &LogBackend) -> Result<f64> {
    Ok(backend.log(x, y)?.canonical_norm())
}

/// Geodesic midpoint between two points.
pub fn midpoint(x: &StiefelPoint, y: &StiefelPoint, backend: &LogBackend) -> Result<StiefelPoint> {
    let xi = backend.log(x, y)?;
    Ok(stiefel_exp(x, &xi, 0.5)?.point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{random_point, random_tangent};
    use core::f64::consts::PI;

    #[test]
    fn init_with_coincident_endpoints() {
        let x = random_point(6, 2, 1).unwrap();
        let s = leapfrog_init(&x, &x, 3, &ShootingConfig::default(), 0).unwrap();
        assert!((s.junctions[1].matrix() - x.matrix()).norm() < 1e-14);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn polar_of_a_feasible_point_is_identity() {
        let x = random_point(7, 3, 2).unwrap();
        assert!((linalg::polar(x.matrix()).unwrap() - x.matrix()).norm() < 1e-14);
    }

    #[test]
    fn sphere_midpoint_update() {
        let x = StiefelPoint::new(Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let y = StiefelPoint::new(Mat::from_column_slice(3, 1, &[0.0, 0.6, 0.8])).unwrap();
        let cfg = ShootingConfig::default();
        let mut s = leapfrog_init(&x, &y, 3, &cfg, 0).unwrap();
        // perturb the middle junction, then sweep
        s.junctions[1] = StiefelPoint::project(&Mat::from_column_slice(3, 1, &[0.5, 0.7, 0.2])).unwrap();
        let s = evaluate(s.junctions, &cfg, 0).unwrap();
        let s = leapfrog_sweep(&s, &cfg).unwrap();
        let sum = x.matrix() + y.matrix();
        let want = &sum / sum.norm();
        assert!((s.junctions[1].matrix() - want).norm() < 1e-12);
    }

    #[test]
    fn sweep_on_a_smooth_geodesic_is_a_fixed_point() {
        let x = random_point(8, 2, 3).unwrap();
        let xi = random_tangent(&x, 1.5, 4).unwrap();
        let y = stiefel_exp(&x, &xi, 1.0).unwrap().point;
        let junctions = (0..4)
            .map(|k| stiefel_exp(&x, &xi, k as f64 / 3.0).unwrap().point)
            .collect();
        let cfg = ShootingConfig::default();
        let s = evaluate(junctions, &cfg, 0).unwrap();
        let t = leapfrog_sweep(&s, &cfg).unwrap();
        for (a, b) in s.junctions.iter().zip(&t.junctions) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-10);
        }
        assert_eq!(t.junctions[3].matrix(), y.matrix());
    }

    #[test]
    fn easy_instances_take_the_single_shooting_branch() {
        let x = random_point(10, 3, 5).unwrap();
        let xi = random_tangent(&x, 0.5 * PI, 6).unwrap();
        let y = stiefel_exp(&x, &xi, 1.0).unwrap().point;
        let r = lfms(&x, &y, &LfmsConfig::default()).unwrap();
        assert_eq!(r.path, LfmsPath::SingleShooting);
        assert!((r.distance().unwrap() - 0.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn forced_lfms_agrees_with_single_shooting() {
        let x = random_point(8, 2, 7).unwrap();
        let xi = random_tangent(&x, 0.6 * PI, 8).unwrap();
        let y = stiefel_exp(&x, &xi, 1.0).unwrap().point;
        let cfg = LfmsConfig {
            try_single_first: false,
            ..Default::default()
        };
        let r = lfms(&x, &y, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.path, LfmsPath::Lfms { m: 3 });
        assert!((r.distance().unwrap() - 0.6 * PI).abs() < 1e-9);
        assert!((r.xi.matrix() - xi.matrix()).norm() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let x = random_point(4, 1, 9).unwrap();
        let bad = LfmsConfig {
            initial_m: 2,
            ..Default::default()
        };
        assert!(lfms(&x, &x, &bad).is_err());
        assert!(leapfrog_init(&x, &x, 2, &ShootingConfig::default(), 0).is_err());
    }
}
