use serde::Serialize;
use stiefel_log::{LfmsReport, ShootingReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfmsSummary {
    pub path: String,
    pub m: Option<usize>,
    pub sweeps: usize,
    pub ms_iterations: Option<usize>,
    pub ms_f_history: Vec<f64>,
    pub abandoned: Vec<(usize, String)>,
}

/// JSON written by `log` and `distance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogReport {
    pub method: &'static str,
    pub converged: bool,
    pub reason: String,
    pub distance: Option<f64>,
    pub length: f64,
    pub iterations: usize,
    pub formulation: Option<String>,
    pub residual_history: Vec<f64>,
    pub mismatch_history: Vec<f64>,
    pub final_residual: f64,
    pub final_mismatch: f64,
    pub rank_deficient_steps: usize,
    pub lfms: Option<LfmsSummary>,
}

impl LogReport {
    pub fn from_single(r: &ShootingReport) -> Self {
        Self {
            method: "single",
            converged: r.converged,
            reason: r.reason.as_str().to_string(),
            distance: r.distance(),
            length: r.length(),
            iterations: r.iterations,
            formulation: Some(format!("{:?}", r.formulation).to_lowercase()),
            residual_history: r.residual_history.clone(),
            mismatch_history: r.mismatch_history.clone(),
            final_residual: r.final_residual(),
            final_mismatch: r.final_mismatch,
            rank_deficient_steps: r.rank_deficient_steps,
            lfms: None,
        }
    }

    pub fn from_lfms(r: &LfmsReport) -> Self {
        let mut out = match &r.single {
            Some(s) => Self::from_single(s),
            None => Self {
                method: "lfms",
                converged: false,
                reason: String::new(),
                distance: None,
                length: 0.0,
                iterations: 0,
                formulation: None,
                residual_history: Vec::new(),
                mismatch_history: Vec::new(),
                final_residual: f64::NAN,
                final_mismatch: f64::NAN,
                rank_deficient_steps: 0,
                lfms: None,
            },
        };
        out.method = "lfms";
        out.converged = r.converged;
        out.distance = r.distance();
        out.length = r.xi.canonical_norm();
        out.reason = match r.path {
            stiefel_log::LfmsPath::SingleShooting => "converged".into(),
            stiefel_log::LfmsPath::Lfms { .. } => "converged".into(),
            stiefel_log::LfmsPath::Failed => "failed".into(),
        };
        out.lfms = Some(LfmsSummary {
            path: match r.path {
                stiefel_log::LfmsPath::SingleShooting => "single".into(),
                stiefel_log::LfmsPath::Lfms { .. } => "lfms".into(),
                stiefel_log::LfmsPath::Failed => "failed".into(),
            },
            m: r.m(),
            sweeps: r.sweeps,
            ms_iterations: r.ms.as_ref().map(|m| m.iterations),
            ms_f_history: r.ms.as_ref().map(|m| m.f_history.clone()).unwrap_or_default(),
            abandoned: r.abandoned.clone(),
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KarcherSummary {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub gradient_history: Vec<f64>,
    pub points: usize,
    /// For density inputs: share of the mean's squared norm clamped away.
    pub clamped_mass: Option<f64>,
}
