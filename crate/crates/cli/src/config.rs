//! JSON configuration: solver settings for single commands, and
//! experiment specs that name a command and its arguments.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use stiefel_log::{Formulation, LfmsConfig, ShootingConfig};

use crate::error::{CliError, CliResult};
use crate::pi::parse_real;

/// A real given as a number or a pi literal such as `"0.95pi"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Literal(String),
}

impl Real {
    pub fn value(&self) -> CliResult<f64> {
        match self {
            Real::Number(v) => Ok(*v),
            Real::Literal(s) => parse_real(s),
        }
    }

    fn arg(&self) -> CliResult<String> {
        Ok(format!("{:?}", self.value()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormulationArg {
    Auto,
    Full,
    Reduced,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::Auto => Formulation::Auto,
            FormulationArg::Full => Formulation::Full,
            FormulationArg::Reduced => Formulation::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Single,
    Lfms,
}

/// Solver settings; every field is optional and overrides the defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub formulation: Option<FormulationArg>,
    pub feasibility_tol: Option<f64>,
    pub handover_tol: Option<f64>,
    pub initial_m: Option<usize>,
    pub max_m: Option<usize>,
    pub max_sweeps: Option<usize>,
    pub ms_tol: Option<f64>,
    pub ms_max_iter: Option<usize>,
    pub seed: Option<u64>,
}

impl SolverConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn shooting(&self) -> CliResult<ShootingConfig> {
        let mut c = ShootingConfig::default();
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(m) = self.max_iter {
            c.max_iter = m;
        }
        if let Some(f) = self.formulation {
            c.formulation = f.into();
        }
        if !(c.tol > 0.0) || c.max_iter == 0 {
            return Err(CliError::input("tol must be positive and max_iter at least 1"));
        }
        Ok(c)
    }

    pub fn lfms(&self) -> CliResult<LfmsConfig> {
        let mut c = LfmsConfig {
            ss: self.shooting()?,
            ..Default::default()
        };
        if let Some(v) = self.handover_tol {
            c.handover_tol = v;
        }
        if let Some(v) = self.initial_m {
            c.initial_m = v;
        }
        if let Some(v) = self.max_m {
            c.max_m = v;
        }
        if let Some(v) = self.max_sweeps {
            c.max_sweeps = v;
        }
        if let Some(v) = self.ms_tol {
            c.ms.tol = v;
        }
        if let Some(v) = self.ms_max_iter {
            c.ms.max_iter = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Log,
    Distance,
    Table1,
    Table2,
    Scaling,
    SincLaw,
    RankSweep,
    LfmsDemo,
    Karcher,
    ShapeGeodesic,
    Interp,
}

/// An experiment described in JSON; translated into the matching
/// command line and validated by the same parser.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub p: Option<Vec<usize>>,
    #[serde(default)]
    pub d: Option<Vec<Real>>,
    #[serde(default)]
    pub alpha: Option<Vec<Real>>,
    #[serde(default)]
    pub seeds: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub at: Option<Vec<Real>>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub config: Option<SolverConfig>,
    #[serde(default)]
    pub no_timing: bool,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn reals(v: &[Real]) -> CliResult<String> {
    Ok(v.iter().map(Real::arg).collect::<CliResult<Vec<_>>>()?.join(","))
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    fn inputs(&self, k: usize) -> CliResult<&[PathBuf]> {
        if self.inputs.len() != k {
            return Err(CliError::input(format!(
                "{:?} experiments need {k} input files, got {}",
                self.kind,
                self.inputs.len()
            )));
        }
        Ok(&self.inputs)
    }

    /// Command-line arguments for this spec, starting with the subcommand.
    /// Solver settings in `config` are applied by the caller.
    pub fn to_args(&self) -> CliResult<Vec<String>> {
        use ExperimentKind::*;
        let mut a: Vec<String> = Vec::new();
        let mut push = |k: &str, v: String| {
            a.push(k.to_string());
            a.push(v);
        };
        let path = |p: &PathBuf| p.display().to_string();
        let cmd = match self.kind {
            Log => "log",
            Distance => "distance",
            Table1 | Table2 | Scaling => "table",
            SincLaw | RankSweep => "diagnostics",
            LfmsDemo => "lfms-demo",
            Karcher => "karcher",
            ShapeGeodesic => "shape-geodesic",
            Interp => "interp",
        };
        match self.kind {
            Log | Distance => {
                let i = self.inputs(2)?;
                push("--x", path(&i[0]));
                push("--y", path(&i[1]));
            }
            Table1 | Table2 | Scaling => {
                push(
                    "--kind",
                    match self.kind {
                        Table1 => "table1",
                        Table2 => "table2",
                        _ => "scaling",
                    }
                    .into(),
                );
                if let Some(n) = &self.n {
                    push("--n", join(n));
                }
                if let Some(p) = &self.p {
                    push("--p", join(p));
                }
                if let Some(d) = &self.d {
                    push("--d", reals(d)?);
                }
                if let Some(s) = self.seeds {
                    push("--seeds", s.to_string());
                }
            }
            SincLaw | RankSweep => {
                push("--kind", if self.kind == SincLaw { "sinc-law" } else { "rank-sweep" }.into());
                if let Some(n) = &self.n {
                    push("--n", join(n));
                }
                if let Some(p) = &self.p {
                    push("--p", join(p));
                }
                if let Some(al) = &self.alpha {
                    push("--alpha", reals(al)?);
                }
                if let Some(d) = &self.d {
                    push("--d", reals(d)?);
                }
                if let Some(s) = self.seed {
                    push("--seed", s.to_string());
                }
            }
            LfmsDemo => {
                if let Some(n) = &self.n {
                    push("--n", join(n));
                }
                if let Some(p) = &self.p {
                    push("--p", join(p));
                }
                if let Some(d) = &self.d {
                    push("--d", reals(d)?);
                }
                if let Some(m) = self.m {
                    push("--m", m.to_string());
                }
                if let Some(s) = self.seed {
                    push("--seed", s.to_string());
                }
            }
            Karcher => {
                if self.inputs.is_empty() {
                    return Err(CliError::input("karcher needs input files"));
                }
                for i in &self.inputs {
                    push("--input", path(i));
                }
            }
            ShapeGeodesic => {
                let i = self.inputs(2)?;
                push("--x0", path(&i[0]));
                push("--x1", path(&i[1]));
                if let Some(k) = self.k {
                    push("--k", k.to_string());
                }
            }
            Interp => {
                let i = self.inputs(1)?;
                push("--manifest", path(&i[0]));
                let at = self.at.as_ref().ok_or_else(|| CliError::input("interp needs 'at'"))?;
                push("--at", reals(at)?);
            }
        }
        if let Some(o) = &self.output {
            push("--out", path(o));
        }
        if self.no_timing && matches!(self.kind, Table1 | Table2 | Scaling) {
            a.push("--no-timing".into());
        }
        a.insert(0, cmd.to_string());
        Ok(a)
    }
}
