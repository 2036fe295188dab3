use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use stiefel_log::apps::{
    affine_standardize, halfdensity_to_pdf, karcher_mean, pdf_to_halfdensity, shape_geodesic as shape_path,
    BasisFamily, InterpMethod, KarcherConfig, PointSet2D, TangentInterpolator,
};
use stiefel_log::{lfms, stiefel_exp, stiefel_log, Error, LogBackend, StiefelPoint, TangentVector};

use crate::cli::{DiagnosticsKind, InterpMethodArg, KarcherInput, TableKindArg};
use crate::config::{Method, SolverConfig};
use crate::error::{CliError, CliResult, Outcome};
use crate::experiments::{self, TableKind, TableSpec};
use crate::io::{self, emit, format_matrix_csv};
use crate::pi::{parse_list, parse_real, parse_usize_list};
use crate::report::{KarcherSummary, LogReport};

fn point(path: &Path, cfg: &SolverConfig) -> CliResult<StiefelPoint> {
    io::read_point(path, cfg.feasibility_tol)
}

fn same_shape(a: &StiefelPoint, b: &StiefelPoint, pa: &Path, pb: &Path) -> CliResult<()> {
    if a.matrix().shape() != b.matrix().shape() {
        return Err(CliError::input(format!(
            "{} is {:?} but {} is {:?}",
            pa.display(),
            a.matrix().shape(),
            pb.display(),
            b.matrix().shape()
        )));
    }
    Ok(())
}

pub fn backend(cfg: &SolverConfig, default: Method) -> CliResult<LogBackend> {
    Ok(match cfg.method.unwrap_or(default) {
        Method::Single => LogBackend::Single(cfg.shooting()?),
        Method::Lfms => LogBackend::Lfms(cfg.lfms()?),
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn solve(x: &StiefelPoint, y: &StiefelPoint, cfg: &SolverConfig, default: Method) -> CliResult<(LogReport, TangentVector)> {
    Ok(match cfg.method.unwrap_or(default) {
        Method::Single => {
            let r = stiefel_log(x, y, &cfg.shooting()?)?;
            (LogReport::from_single(&r), r.xi)
        }
        Method::Lfms => {
            let r = lfms(x, y, &cfg.lfms()?)?;
            (LogReport::from_lfms(&r), r.xi)
        }
    })
}

pub fn log(x: &Path, y: &Path, cfg: &SolverConfig, out: Option<&Path>, tangent: Option<&Path>) -> CliResult<Outcome> {
    let (px, py) = (point(x, cfg)?, point(y, cfg)?);
    same_shape(&px, &py, x, y)?;
    let (report, xi) = solve(&px, &py, cfg, Method::Single)?;
    emit(out, &to_json(&report)?)?;
    if let Some(t) = tangent {
        io::write_matrix(t, xi.matrix())?;
    }
    if !report.converged {
        eprintln!("logarithm did not converge ({})", report.reason);
    }
    Ok(Outcome::from_converged(report.converged))
}

pub fn exp(x: &Path, xi: &Path, t: &str, out: Option<&Path>) -> CliResult<Outcome> {
    let px = io::read_point(x, None)?;
    let v = io::read_matrix(xi)?;
    let xi_t = TangentVector::new(&px, v).map_err(|e| CliError::input(format!("{}: {e}", xi.display())))?;
    let g = stiefel_exp(&px, &xi_t, parse_real(t)?)?;
    emit(out, &format_matrix_csv(g.point.matrix()))?;
    Ok(Outcome::Converged)
}

pub fn distance(x: &Path, y: &Path, cfg: &SolverConfig, out: Option<&Path>) -> CliResult<Outcome> {
    let (px, py) = (point(x, cfg)?, point(y, cfg)?);
    same_shape(&px, &py, x, y)?;
    let (report, _) = solve(&px, &py, cfg, Method::Lfms)?;
    emit(out, &to_json(&report)?)?;
    Ok(Outcome::from_converged(report.converged))
}

pub struct TableArgs {
    pub kind: TableKindArg,
    pub n: Option<usize>,
    pub p: Option<String>,
    pub d: Option<String>,
    pub seeds: usize,
    pub repeat: usize,
    pub no_timing: bool,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Floats print in shortest round-trip form so equal runs give equal bytes.
fn f(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::input(format!("csv: {e}")))
}

pub fn table_csv(rows: &[experiments::TableRow], timing: bool) -> CliResult<String> {
    let mut header = vec!["n", "p", "d", "d_over_pi", "seeds", "converged_fraction", "mean_iterations"];
    if timing {
        header.push("mean_time_s");
    }
    header.extend(["max_final_residual", "max_final_mismatch", "max_distance_error"]);
    csv_text(
        &header,
        rows.iter().map(|r| {
            let mut v = vec![
                r.n.to_string(),
                r.p.to_string(),
                f(r.d),
                f(r.d_over_pi),
                r.seeds.to_string(),
                f(r.converged_fraction),
                f(r.mean_iterations),
            ];
            if timing {
                v.push(f(r.mean_time_s));
            }
            v.extend([f(r.max_final_residual), f(r.max_final_mismatch), f(r.max_distance_error)]);
            v
        }),
    )
}

pub fn table(a: TableArgs) -> CliResult<Outcome> {
    let kind = match a.kind {
        TableKindArg::Table1 => TableKind::Table1,
        TableKindArg::Table2 => TableKind::Table2,
        TableKindArg::Scaling => TableKind::Scaling,
    };
    let mut spec = TableSpec::defaults(kind, a.n, a.seeds);
    if let Some(p) = &a.p {
        spec.ps = parse_usize_list(p)?;
    }
    if let Some(d) = &a.d {
        spec.ds = parse_list(d)?;
    }
    spec.repeat = a.repeat.max(1);
    if let Some(t) = a.tol {
        spec.cfg.tol = t;
    }
    if let Some(m) = a.max_iter {
        spec.cfg.max_iter = m;
    }
    let rows = experiments::run_table(&spec)?;
    emit(a.out.as_deref(), &table_csv(&rows, !a.no_timing)?)?;
    Ok(Outcome::Converged)
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 10.0).collect()
}

pub fn default_rank_grid() -> Vec<f64> {
    [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0].iter().map(|f| f * PI).collect()
}

pub fn diagnostics(
    kind: DiagnosticsKind,
    n: Option<&str>,
    p: usize,
    alpha: Option<&str>,
    d: Option<&str>,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<Outcome> {
    let text = match kind {
        DiagnosticsKind::SincLaw => {
            let n = match n {
                Some(s) => *parse_usize_list(s)?.first().ok_or_else(|| CliError::input("empty --n"))?,
                None => 6,
            };
            let alphas = alpha.map(parse_list).transpose()?.unwrap_or_else(default_alpha_grid);
            let rows = experiments::sinc_law(n, p, &alphas, seed)?;
            csv_text(
                &["alpha", "sigma_min", "sigma_max", "abs_sinc", "abs_diff"],
                rows.iter()
                    .map(|r| vec![f(r.alpha), f(r.sigma_min), f(r.sigma_max), f(r.abs_sinc), f(r.abs_diff)]),
            )?
        }
        DiagnosticsKind::RankSweep => {
            let ns = parse_usize_list(n.unwrap_or("2..8"))?;
            let ds = d.map(parse_list).transpose()?.unwrap_or_else(default_rank_grid);
            let rows = experiments::rank_sweep(&ns, &ds, seed)?;
            csv_text(
                &["n", "d", "d_over_pi", "rank", "full_rank", "condition"],
                rows.iter().map(|r| {
                    vec![
                        r.n.to_string(),
                        f(r.d),
                        f(r.d_over_pi),
                        r.rank.to_string(),
                        r.full_rank.to_string(),
                        f(r.condition),
                    ]
                }),
            )?
        }
    };
    emit(out, &text)?;
    Ok(Outcome::Converged)
}

pub fn trace_csv(trace: &[stiefel_log::leapfrog::TraceRow]) -> CliResult<String> {
    csv_text(
        &["phase", "m", "iteration", "F_norm", "length"],
        trace.iter().map(|t| {
            let r = experiments::TraceCsvRow::from(t);
            vec![r.phase.to_string(), r.m.to_string(), r.iteration.to_string(), f(r.f_norm), f(r.length)]
        }),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn lfms_demo(
    n: usize,
    p: usize,
    d: &str,
    m: usize,
    seed: u64,
    m_sweep: Option<&str>,
    cfg: &SolverConfig,
    out: Option<&Path>,
) -> CliResult<Outcome> {
    if p == 0 || p > n {
        return Err(CliError::input("lfms-demo needs 1 <= p <= n"));
    }
    let d = parse_real(d)?;
    let mut lc = cfg.lfms()?;
    lc.initial_m = m;
    lc.max_m = lc.max_m.max(m);
    if let Some(list) = m_sweep {
        let ms = parse_usize_list(list)?;
        let rows = experiments::lfms_m_sweep(n, p, d, seed, &ms, &lc)?;
        let all = rows.iter().all(|r| r.converged);
        let text = csv_text(
            &["m_start", "m_used", "converged", "distance", "sweeps", "ms_iterations"],
            rows.iter().map(|r| {
                vec![
                    r.m_start.to_string(),
                    opt(r.m_used),
                    r.converged.to_string(),
                    r.distance.map_or_else(String::new, f),
                    r.sweeps.to_string(),
                    opt(r.ms_iterations),
                ]
            }),
        )?;
        emit(out, &text)?;
        return Ok(Outcome::from_converged(all));
    }
    let demo = experiments::lfms_demo(n, p, d, seed, &lc)?;
    emit(out, &trace_csv(&demo.report.trace)?)?;
    let r = &demo.report;
    eprintln!(
        "path {:?}, sweeps {}, distance {}, target {}",
        r.path,
        demo.sweeps(),
        r.distance().map_or_else(|| "n/a".to_string(), |v| format!("{v:.15}")),
        d
    );
    for (m, why) in &r.abandoned {
        eprintln!("  m = {m} abandoned: {why}");
    }
    Ok(Outcome::from_converged(r.converged))
}

fn karcher_outcome(res: stiefel_log::Result<stiefel_log::apps::KarcherReport>) -> CliResult<Option<stiefel_log::apps::KarcherReport>> {
    match res {
        Ok(r) => Ok(Some(r)),
        Err(Error::NoConvergence { iterations, last }) => {
            eprintln!("Karcher iteration stopped after {iterations} steps with gradient norm {last:e}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn karcher(
    inputs: &[PathBuf],
    kind: KarcherInput,
    grad_tol: f64,
    max_iter: usize,
    cfg: &SolverConfig,
    out: Option<&Path>,
    report: Option<&Path>,
) -> CliResult<Outcome> {
    let kc = KarcherConfig {
        tol: grad_tol,
        max_iter,
        backend: backend(cfg, Method::Lfms)?,
    };
    let (summary, text) = match kind {
        KarcherInput::Points => {
            let pts = inputs.iter().map(|p| point(p, cfg)).collect::<CliResult<Vec<_>>>()?;
            for (p, path) in pts.iter().zip(inputs).skip(1) {
                same_shape(&pts[0], p, &inputs[0], path)?;
            }
            let Some(r) = karcher_outcome(karcher_mean(&pts, &kc))? else {
                return Ok(Outcome::NotConverged);
            };
            let s = KarcherSummary {
                iterations: r.iterations,
                gradient_norm: r.gradient_norm,
                gradient_history: r.gradient_history.clone(),
                points: pts.len(),
                clamped_mass: None,
            };
            (s, format_matrix_csv(r.mean.matrix()))
        }
        KarcherInput::Pdf => {
            let pdfs = inputs.iter().map(|p| io::read_pdf(p)).collect::<CliResult<Vec<_>>>()?;
            for (p, path) in pdfs.iter().zip(inputs).skip(1) {
                let same = p.grid.len() == pdfs[0].grid.len()
                    && p.grid.iter().zip(&pdfs[0].grid).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                if !same {
                    return Err(CliError::input(format!("{} uses a different grid", path.display())));
                }
            }
            let h = pdfs[0].spacing();
            let mut pts = Vec::new();
            for (pdf, path) in pdfs.iter().zip(inputs) {
                let q = pdf_to_halfdensity(&pdf.values, h).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
                if q.rescaled {
                    eprintln!("{}: integral {} rescaled to 1", path.display(), q.integral);
                }
                pts.push(q.point);
            }
            let Some(r) = karcher_outcome(karcher_mean(&pts, &kc))? else {
                return Ok(Outcome::NotConverged);
            };
            let dens = halfdensity_to_pdf(&r.mean, h)?;
            let s = KarcherSummary {
                iterations: r.iterations,
                gradient_norm: r.gradient_norm,
                gradient_history: r.gradient_history.clone(),
                points: pts.len(),
                clamped_mass: Some(dens.clamped_mass),
            };
            (s, io::format_pdf(&pdfs[0].grid, &dens.values))
        }
    };
    emit(out, &text)?;
    match report {
        Some(p) => io::write_text(p, &to_json(&summary)?)?,
        None => eprintln!(
            "Karcher mean of {} inputs: {} iterations, gradient norm {:e}",
            summary.points, summary.iterations, summary.gradient_norm
        ),
    }
    Ok(Outcome::Converged)
}

fn landmarks(path: &Path, standardize: bool) -> CliResult<PointSet2D> {
    let m = io::read_matrix(path)?;
    let ps = PointSet2D::new(m).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if standardize {
        affine_standardize(&ps).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    } else if ps.is_standardized() {
        Ok(ps)
    } else {
        Err(CliError::input(format!(
            "{}: landmarks are not centered with orthonormal columns",
            path.display()
        )))
    }
}

pub fn shape_geodesic(
    x0: &Path,
    x1: &Path,
    k: usize,
    standardize: bool,
    with_endpoints: bool,
    cfg: &SolverConfig,
    out: Option<&Path>,
) -> CliResult<Outcome> {
    let s0 = landmarks(x0, standardize)?;
    let s1 = landmarks(x1, standardize)?;
    if s0.len() != s1.len() {
        return Err(CliError::input(format!(
            "{} has {} landmarks but {} has {}",
            x0.display(),
            s0.len(),
            x1.display(),
            s1.len()
        )));
    }
    let shapes = match shape_path(&s0, &s1, k, &backend(cfg, Method::Lfms)?) {
        Ok(s) => s,
        Err(Error::NoConvergence { iterations, last }) => {
            eprintln!("logarithm between the shapes did not converge ({iterations} iterations, last {last:e})");
            return Ok(Outcome::NotConverged);
        }
        Err(e) => return Err(e.into()),
    };
    let mut samples: Vec<(usize, f64, &PointSet2D)> = Vec::new();
    if with_endpoints {
        samples.push((0, 0.0, &s0));
    }
    for (j, s) in shapes.iter().enumerate() {
        samples.push((j + 1, (j + 1) as f64 / (k + 1) as f64, s));
    }
    if with_endpoints {
        samples.push((k + 1, 1.0, &s1));
    }
    let text = csv_text(
        &["sample", "t", "landmark", "x", "y"],
        samples.iter().flat_map(|&(j, t, s)| {
            (0..s.len()).map(move |i| {
                vec![
                    j.to_string(),
                    f(t),
                    i.to_string(),
                    f(s.points()[(i, 0)]),
                    f(s.points()[(i, 1)]),
                ]
            })
        }),
    )?;
    emit(out, &text)?;
    Ok(Outcome::Converged)
}

pub fn interp(manifest: &Path, at: &str, method: InterpMethodArg, cfg: &SolverConfig, out: Option<&Path>) -> CliResult<Outcome> {
    let (man, bases) = io::read_manifest(manifest)?;
    let params = man.bases.iter().map(|b| b.param).collect();
    let fam = BasisFamily::new(bases, params, man.reference)
        .map_err(|e| CliError::input(format!("{}: {e}", manifest.display())))?;
    let method = match method {
        InterpMethodArg::Linear => InterpMethod::Linear,
        InterpMethodArg::Spline => InterpMethod::CubicSpline,
        InterpMethodArg::Pchip => InterpMethod::Pchip,
    };
    let it = TangentInterpolator::new(&fam, &backend(cfg, Method::Lfms)?)?;
    let ts = parse_list(at)?;
    match ts.as_slice() {
        [] => Err(CliError::input("--at needs at least one value")),
        [t] => {
            emit(out, &format_matrix_csv(it.eval(*t, method)?.matrix()))?;
            Ok(Outcome::Converged)
        }
        _ => {
            let dir = out.ok_or_else(|| CliError::input("several --at values need an output directory in --out"))?;
            let mut rows = Vec::new();
            for (i, &t) in ts.iter().enumerate() {
                let v = it.eval(t, method)?;
                let name = format!("interp_{i:03}.csv");
                io::write_matrix(&dir.join(&name), v.matrix())?;
                rows.push(vec![f(t), name]);
            }
            emit(None, &csv_text(&["param", "file"], rows)?)?;
            Ok(Outcome::Converged)
        }
    }
}
