use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::config::{ExperimentSpec, FormulationArg, Method, SolverConfig};
use crate::error::{CliError, CliResult, Outcome};

/// Riemannian logarithms, distances and shooting experiments on the
/// Stiefel manifold.
#[derive(Debug, Parser)]
#[command(name = "stiefel-shoot", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Solver flags shared by commands that compute logarithms.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// JSON solver settings; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Stopping tolerance on the Newton step.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub formulation: Option<FormulationArg>,
    /// Feasibility tolerance for input points (default 1e-12 sqrt(p)).
    #[arg(long)]
    pub feasibility_tol: Option<f64>,
}

impl SolverArgs {
    pub fn resolve(&self, base: Option<&SolverConfig>) -> CliResult<SolverConfig> {
        let mut c = match (&self.config, base) {
            (Some(p), _) => SolverConfig::load(p)?,
            (None, Some(b)) => b.clone(),
            (None, None) => SolverConfig::default(),
        };
        if self.method.is_some() {
            c.method = self.method;
        }
        if self.tol.is_some() {
            c.tol = self.tol;
        }
        if self.max_iter.is_some() {
            c.max_iter = self.max_iter;
        }
        if self.formulation.is_some() {
            c.formulation = self.formulation;
        }
        if self.feasibility_tol.is_some() {
            c.feasibility_tol = self.feasibility_tol;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKindArg {
    Table1,
    Table2,
    Scaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagnosticsKind {
    SincLaw,
    RankSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KarcherInput {
    Points,
    Pdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpMethodArg {
    Linear,
    Spline,
    Pchip,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Logarithm Log_X(Y): JSON report, optional tangent CSV.
    Log {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Report path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the tangent vector.
        #[arg(long)]
        tangent: Option<PathBuf>,
    },
    /// Exponential Exp_X(t xi).
    Exp {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        xi: PathBuf,
        /// Geodesic time; accepts pi literals.
        #[arg(long, default_value = "1")]
        t: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonical distance d(X, Y); LFMS unless --method single.
    Distance {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-shooting convergence tables over (p, d, seed).
    Table {
        #[arg(long, value_enum)]
        kind: TableKindArg,
        #[arg(long)]
        n: Option<usize>,
        /// Column counts, e.g. `1..15` or `2,4,8`.
        #[arg(long)]
        p: Option<String>,
        /// Distances, e.g. `0.9pi,pi`.
        #[arg(long)]
        d: Option<String>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Timing repeats per solve; the median is reported.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Drop the timing column for byte-identical output.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jacobian singular-value law and cut-locus rank sweep.
    Diagnostics {
        #[arg(long, value_enum)]
        kind: DiagnosticsKind,
        /// Ambient dimension; a range such as `2..8` for rank-sweep.
        #[arg(long)]
        n: Option<String>,
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// Spectral norms for sinc-law (default 0 to 5 step 0.1).
        #[arg(long)]
        alpha: Option<String>,
        /// Distances for rank-sweep.
        #[arg(long)]
        d: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leapfrog plus multiple shooting on a generated hard instance; writes
    /// the convergence trace.
    LfmsDemo {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        p: usize,
        #[arg(long, default_value = "0.95pi")]
        d: String,
        /// Initial partition size.
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated starting partitions; writes one summary row each.
        #[arg(long)]
        m_sweep: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Riemannian center of mass of point or density files.
    Karcher {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "points")]
        kind: KarcherInput,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
        #[arg(long, default_value_t = 100)]
        karcher_iter: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Mean as CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Equidistant shapes on the geodesic between two landmark sets.
    ShapeGeodesic {
        #[arg(long)]
        x0: PathBuf,
        #[arg(long)]
        x1: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Inputs are already standardized.
        #[arg(long)]
        no_standardize: bool,
        /// Also emit the two endpoint shapes.
        #[arg(long)]
        with_endpoints: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tangent-space interpolation of a basis family.
    Interp {
        #[arg(long)]
        manifest: PathBuf,
        /// Parameter values.
        #[arg(long)]
        at: String,
        /// Interpolation scheme in the tangent space.
        #[arg(long, value_enum, default_value = "linear")]
        scheme: InterpMethodArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Single output file, or a directory when several values are given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a JSON experiment spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    dispatch(cli.command, None)
}

fn dispatch(command: Command, base: Option<&SolverConfig>) -> CliResult<Outcome> {
    match command {
        Command::Log {
            x,
            y,
            solver,
            out,
            tangent,
        } => commands::log(&x, &y, &solver.resolve(base)?, out.as_deref(), tangent.as_deref()),
        Command::Exp { x, xi, t, out } => commands::exp(&x, &xi, &t, out.as_deref()),
        Command::Distance { x, y, solver, out } => commands::distance(&x, &y, &solver.resolve(base)?, out.as_deref()),
        Command::Table {
            kind,
            n,
            p,
            d,
            seeds,
            repeat,
            no_timing,
            tol,
            max_iter,
            out,
        } => commands::table(commands::TableArgs {
            kind,
            n,
            p,
            d,
            seeds,
            repeat,
            no_timing,
            tol,
            max_iter,
            out,
        }),
        Command::Diagnostics {
            kind,
            n,
            p,
            alpha,
            d,
            seed,
            out,
        } => commands::diagnostics(kind, n.as_deref(), p, alpha.as_deref(), d.as_deref(), seed, out.as_deref()),
        Command::LfmsDemo {
            n,
            p,
            d,
            m,
            seed,
            m_sweep,
            solver,
            out,
        } => commands::lfms_demo(n, p, &d, m, seed, m_sweep.as_deref(), &solver.resolve(base)?, out.as_deref()),
        Command::Karcher {
            inputs,
            kind,
            grad_tol,
            karcher_iter,
            solver,
            out,
            report,
        } => commands::karcher(
            &inputs,
            kind,
            grad_tol,
            karcher_iter,
            &solver.resolve(base)?,
            out.as_deref(),
            report.as_deref(),
        ),
        Command::ShapeGeodesic {
            x0,
            x1,
            k,
            no_standardize,
            with_endpoints,
            solver,
            out,
        } => commands::shape_geodesic(
            &x0,
            &x1,
            k,
            !no_standardize,
            with_endpoints,
            &solver.resolve(base)?,
            out.as_deref(),
        ),
        Command::Interp {
            manifest,
            at,
            scheme,
            solver,
            out,
        } => commands::interp(&manifest, &at, scheme, &solver.resolve(base)?, out.as_deref()),
        Command::Run { spec } => {
            let es = ExperimentSpec::load(&spec)?;
            let mut args = vec!["stiefel-shoot".to_string()];
            args.extend(es.to_args()?);
            let parsed = Cli::try_parse_from(&args).map_err(|e| CliError::input(format!("{}: {e}", spec.display())))?;
            if matches!(parsed.command, Command::Run { .. }) {
                return Err(CliError::input("experiment specs cannot nest"));
            }
            dispatch(parsed.command, es.config.as_ref())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn command_definitions_are_consistent() {
        super::Cli::command().debug_assert();
    }
}
