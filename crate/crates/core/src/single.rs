//! Single shooting: Newton's method on `x -> Z1(1; x) - Y1` over the packed
//! tangent coordinates `x = (s, vec K)` at `Y0`.
//!
//! The Newton matrix is `np x (np - p(p+1)/2)` and is solved in the least
//! squares sense with column-pivoted QR. When `p < n/2` the problem is first
//! reduced to `St(2p, p)`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::frechet::{self, ExpDerivative};
use crate::linalg::{self, sym, vec_of, Mat, Vector};
use crate::manifold::{
    self, concat_columns, manifold_dim, structured_matrix, unpack, StiefelPoint,
    TangentCoordinates, TangentVector,
};
use crate::perm::block_vec_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// Reduced when `p < n/2`, full otherwise.
    #[default]
    Auto,
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    /// Stop when the Frobenius norm of the tangent update falls to this.
    pub tol: f64,
    pub max_iter: usize,
    pub formulation: Formulation,
    /// Consecutive increases of the update norm that count as divergence.
    pub divergence_window: usize,
    /// Relative singular-value threshold at which the Newton matrix is
    /// treated as rank deficient.
    pub rank_tol: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 10,
            formulation: Formulation::Auto,
            divergence_window: 3,
            rank_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Diverging,
    NonFinite,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Diverging => "diverging",
            StopReason::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingReport {
    /// Last tangent iterate at `Y0`; the logarithm when `converged`.
    pub xi: TangentVector,
    pub converged: bool,
    pub iterations: usize,
    /// `|delta xi|_F` per Newton step.
    pub residual_history: Vec<f64>,
    /// `|Z1(1) - Y1|_F` before each Newton step.
    pub mismatch_history: Vec<f64>,
    /// Canonical norm of the iterate before each Newton step.
    pub length_history: Vec<f64>,
    /// `|Exp(xi) - Y1|_F` for the returned iterate.
    pub final_mismatch: f64,
    pub reason: StopReason,
    /// Steps whose Newton matrix was rank deficient and were solved with a
    /// truncated basic solution.
    pub rank_deficient_steps: usize,
    /// Formulation actually used (never `Auto`).
    pub formulation: Formulation,
    /// The reduced endpoint had a near-singular lower block.
    pub reduced_degenerate: bool,
}

impl ShootingReport {
    /// Canonical length of the returned tangent vector.
    pub fn length(&self) -> f64 {
        self.xi.canonical_norm()
    }

    /// The Riemannian distance, available when the iteration converged.
    pub fn distance(&self) -> Option<f64> {
        self.converged.then(|| self.length())
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Projected secant `(|Y1 - Y0| / |P(Y1 - Y0)|) P(Y1 - Y0)`, with
/// `P(Y1 - Y0) = Y1 - Y0 sym(Y0^T Y1)`.
pub fn initial_guess(y0: &StiefelPoint, y1: &StiefelPoint) -> Result<TangentVector> {
    check_pair(y0, y1)?;
    let (a, b) = (y0.matrix(), y1.matrix());
    let pxi = b - a * sym(&(a.transpose() * b));
    let pn = pxi.norm();
    if pn == 0.0 {
        return Ok(TangentVector::zero(y0));
    }
    let scale = (b - a).norm() / pn;
    TangentVector::new(y0, pxi * scale)
}

fn check_pair(y0: &StiefelPoint, y1: &StiefelPoint) -> Result<()> {
    if y0.matrix().shape() != y1.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: y0.matrix().shape(),
            got: y1.matrix().shape(),
        });
    }
    Ok(())
}

/// The generators `e_r e_c^T - e_c e_r^T` of the structured `A`, in the
/// order of the packed coordinates.
pub(crate) fn packed_directions(n: usize, p: usize) -> Vec<(usize, usize)> {
    let mut dirs = Vec::with_capacity(manifold_dim(n, p));
    for j in 0..p {
        for i in 0..j {
            dirs.push((i, j));
        }
    }
    for b in 0..p {
        for a in 0..n - p {
            dirs.push((p + a, b));
        }
    }
    dirs
}

fn endpoint_jacobian(op: &ExpDerivative, q: &Mat, p: usize) -> Mat {
    let n = q.nrows();
    let w = op.half_weights(p);
    let dirs = packed_directions(n, p);
    let mut j = Mat::zeros(n * p, dirs.len());
    for (col, &(r, c)) in dirs.iter().enumerate() {
        let l = op.apply_elementary(r, c, &w);
        j.column_mut(col).copy_from(&vec_of(&(q * l)));
    }
    j
}

/// `d vec(Z1(1)) / dx = ([I 0] kron Q) J_exp T J_A^x`, formed from the dense
/// Kronecker Jacobian of the exponential.
pub fn jacobian_z1_x(coords: &TangentCoordinates) -> Result<Mat> {
    let y0 = &coords.base;
    let (n, p) = (y0.n(), y0.p());
    let a = frechet::assemble_a(coords)?;
    let jexp = frechet::jacobian_exp(&a)?.matrix;
    let tja = block_vec_map(n, p)?.apply_rows(&frechet::jacobian_a_x(n, p)?);
    let inner = jexp * tja;
    let q = concat_columns(y0.matrix(), &coords.complement);
    // ([I 0] kron Q) keeps the first p column blocks of vec(.) and maps
    // each through Q.
    let mut out = Mat::zeros(n * p, inner.ncols());
    for col in 0..inner.ncols() {
        let m = linalg::mat_of(inner.column(col).as_slice(), n, n);
        out.column_mut(col).copy_from(&vec_of(&(&q * m.columns(0, p))));
    }
    Ok(out)
}

/// Screen for rank loss `sigma_min / sigma_max < rank_tol`.
fn check_rank(j: &Mat, rank_tol: f64) -> Result<()> {
    if j.ncols() == 0 {
        return Ok(());
    }
    let sv = linalg::singular_values(j);
    let smax = sv[0];
    let smin = if j.nrows() >= j.ncols() {
        sv[sv.len() - 1]
    } else {
        0.0
    };
    if !(smax > 0.0) || smin / smax < rank_tol {
        return Err(Error::SingularJacobian {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    Ok(())
}

/// Least-squares Newton update solving `min |J dx + F|`.
pub fn newton_step(f: &Vector, j: &Mat) -> Result<Vector> {
    newton_step_tol(f, j, ShootingConfig::default().rank_tol)
}

fn newton_step_tol(f: &Vector, j: &Mat, rank_tol: f64) -> Result<Vector> {
    if f.len() != j.nrows() {
        return Err(Error::DimensionMismatch {
            expected: (j.nrows(), 1),
            got: (f.len(), 1),
        });
    }
    check_rank(j, rank_tol)?;
    Ok(linalg::lstsq_pivoted(j, &(-f), 0.0).solution)
}

/// Basic solution that drops pivots below machine-precision relative size,
/// used when the Newton matrix is rank deficient.
fn truncated_step(f: &Vector, j: &Mat) -> Vector {
    let tol = (j.nrows().max(j.ncols()) as f64) * f64::EPSILON;
    linalg::lstsq_pivoted(j, &(-f), tol).solution
}

fn endpoint(q: &Mat, x: &Vector, n: usize, p: usize) -> Mat {
    let (omega, k) = unpack(x, n, p);
    let e = linalg::expm(&structured_matrix(&omega, &k));
    q * e.columns(0, p)
}

struct RawShot {
    x: Vector,
    converged: bool,
    iterations: usize,
    residual_history: Vec<f64>,
    mismatch_history: Vec<f64>,
    length_history: Vec<f64>,
    reason: StopReason,
    rank_deficient_steps: usize,
}

/// Newton iteration for a base with an explicit complement.
fn shoot(y0: &StiefelPoint, comp: &Mat, y1: &Mat, x0: Vector, cfg: &ShootingConfig) -> Result<RawShot> {
    let (n, p) = (y0.n(), y0.p());
    let q = concat_columns(y0.matrix(), comp);
    let mut x = x0;
    let mut residual_history = Vec::new();
    let mut mismatch_history = Vec::new();
    let mut length_history = Vec::new();
    let mut rank_deficient_steps = 0;
    let mut increases = 0;
    let mut reason = StopReason::MaxIterations;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let (omega, k) = unpack(&x, n, p);
        let op = match ExpDerivative::new(&structured_matrix(&omega, &k)) {
            Ok(op) => op,
            Err(Error::Numeric(_)) => {
                reason = StopReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        let z1 = &q * op.exp().columns(0, p);
        let f = vec_of(&(z1 - y1));
        let fnorm = f.norm();
        mismatch_history.push(fnorm);
        // |x|_2 equals the canonical norm: |s|^2 = |Omega|^2 / 2
        length_history.push(x.norm());
        if !fnorm.is_finite() {
            reason = StopReason::NonFinite;
            break;
        }
        let j = endpoint_jacobian(&op, &q, p);
        let dx = match newton_step_tol(&f, &j, cfg.rank_tol) {
            Ok(dx) => dx,
            Err(Error::SingularJacobian { .. }) => {
                rank_deficient_steps += 1;
                truncated_step(&f, &j)
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let ns = p * (p - 1) / 2;
        let ds = dx.rows(0, ns).norm_squared();
        let dk = dx.rows(ns, dx.len() - ns).norm_squared();
        let step = libm::sqrt(2.0 * ds + dk);
        if !step.is_finite() {
            reason = StopReason::NonFinite;
            break;
        }
        x += dx;
        if let Some(&prev) = residual_history.last() {
            if step > prev {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        residual_history.push(step);
        if step <= cfg.tol {
            converged = true;
            reason = StopReason::Converged;
            break;
        }
        if increases >= cfg.divergence_window {
            reason = StopReason::Diverging;
            break;
        }
    }
    Ok(RawShot {
        x,
        converged,
        iterations,
        residual_history,
        mismatch_history,
        length_history,
        reason,
        rank_deficient_steps,
    })
}

fn initial_coords(y0: &StiefelPoint, comp: &Mat, y1: &StiefelPoint) -> Result<Vector> {
    let xi0 = initial_guess(y0, y1)?;
    Ok(manifold::decompose_tangent(&xi0, comp)?.packed)
}

/// Single shooting on the full problem with a QR complement of `Y0`.
pub fn single_shoot(y0: &StiefelPoint, y1: &StiefelPoint, cfg: &ShootingConfig) -> Result<ShootingReport> {
    check_pair(y0, y1)?;
    validate_config(cfg)?;
    let comp = manifold::orthonormal_complement(y0);
    let x0 = initial_coords(y0, &comp, y1)?;
    let raw = shoot(y0, &comp, y1.matrix(), x0, cfg)?;
    let (n, p) = (y0.n(), y0.p());
    let (omega, k) = unpack(&raw.x, n, p);
    let xi = TangentVector::new(y0, y0.matrix() * omega + &comp * k)?;
    let q = concat_columns(y0.matrix(), &comp);
    let final_mismatch = (endpoint(&q, &raw.x, n, p) - y1.matrix()).norm();
    Ok(finish(raw, xi, final_mismatch, Formulation::Full, false))
}

fn finish(raw: RawShot, xi: TangentVector, final_mismatch: f64, formulation: Formulation, degenerate: bool) -> ShootingReport {
    ShootingReport {
        xi,
        converged: raw.converged,
        iterations: raw.iterations,
        residual_history: raw.residual_history,
        mismatch_history: raw.mismatch_history,
        length_history: raw.length_history,
        final_mismatch,
        reason: raw.reason,
        rank_deficient_steps: raw.rank_deficient_steps,
        formulation,
        reduced_degenerate: degenerate,
    }
}

fn validate_config(cfg: &ShootingConfig) -> Result<()> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(invalid("shooting needs tol > 0 and max_iter >= 1"));
    }
    Ok(())
}

/// `St(n,p)` endpoints mapped to `St(2p,p)`: `Y0_hat = [I; 0]`,
/// `Y1_hat = [M; N]` with `M = Y0^T Y1` and `Y0_perp^T Y1 = Q N`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub y0: StiefelPoint,
    pub complement: Mat,
    pub q: Mat,
    pub y0_hat: StiefelPoint,
    pub y1_hat: StiefelPoint,
    /// `N` is numerically singular; the reduced log is still valid but the
    /// endpoint is degenerate.
    pub degenerate: bool,
}

pub fn reduce_problem(y0: &StiefelPoint, y1: &StiefelPoint) -> Result<ReducedProblem> {
    check_pair(y0, y1)?;
    let (n, p) = (y0.n(), y0.p());
    if 2 * p > n {
        return Err(invalid(alloc::format!(
            "reduction to St(2p,p) needs p <= n/2, got n = {n}, p = {p}"
        )));
    }
    let complement = manifold::orthonormal_complement(y0);
    let m = y0.matrix().transpose() * y1.matrix();
    let c = complement.transpose() * y1.matrix();
    let (q, nb) = linalg::thin_qr_nonneg(&c);
    let smin = linalg::singular_values(&nb).last().copied().unwrap_or(0.0);
    let degenerate = smin < 1e-10;
    if degenerate {
        log::warn!("reduced endpoint has near-singular lower block (sigma_min = {smin:e})");
    }
    let mut hat = Mat::zeros(2 * p, p);
    hat.rows_mut(0, p).copy_from(&m);
    hat.rows_mut(p, p).copy_from(&nb);
    let y1_hat = StiefelPoint::with_tolerance(hat, 1e-10 * libm::sqrt(p as f64))?;
    Ok(ReducedProblem {
        y0: y0.clone(),
        complement,
        q,
        y0_hat: StiefelPoint::identity_frame(2 * p, p)?,
        y1_hat,
        degenerate,
    })
}

impl ReducedProblem {
    /// Complement `[0; I]` of the reduced base point.
    pub fn hat_complement(&self) -> Mat {
        let p = self.y0_hat.p();
        let mut c = Mat::zeros(2 * p, p);
        c.rows_mut(p, p).fill_with_identity();
        c
    }
}

/// `xi = Y0 Omega + Y0_perp Q R` from `xi_hat = [Omega; R]`.
pub fn recover_tangent(rp: &ReducedProblem, xi_hat: &Mat) -> Result<TangentVector> {
    let p = rp.y0.p();
    if xi_hat.shape() != (2 * p, p) {
        return Err(Error::DimensionMismatch {
            expected: (2 * p, p),
            got: xi_hat.shape(),
        });
    }
    let omega = linalg::skew(&xi_hat.rows(0, p).into_owned());
    let r = xi_hat.rows(p, p).into_owned();
    let xi = rp.y0.matrix() * omega + &rp.complement * (&rp.q * r);
    TangentVector::new(&rp.y0, xi)
}

fn reduced_shoot(y0: &StiefelPoint, y1: &StiefelPoint, cfg: &ShootingConfig) -> Result<ShootingReport> {
    let rp = reduce_problem(y0, y1)?;
    let hc = rp.hat_complement();
    let x0 = initial_coords(&rp.y0_hat, &hc, &rp.y1_hat)?;
    let raw = shoot(&rp.y0_hat, &hc, rp.y1_hat.matrix(), x0, cfg)?;
    let p = y0.p();
    let (omega, k) = unpack(&raw.x, 2 * p, p);
    let mut xi_hat = Mat::zeros(2 * p, p);
    xi_hat.rows_mut(0, p).copy_from(&omega);
    xi_hat.rows_mut(p, p).copy_from(&k);
    let xi = recover_tangent(&rp, &xi_hat)?;
    let comp = &rp.complement;
    let q = concat_columns(y0.matrix(), comp);
    let coords = manifold::decompose_tangent(&xi, comp)?;
    let final_mismatch = (endpoint(&q, &coords.packed, y0.n(), p) - y1.matrix()).norm();
    Ok(finish(raw, xi, final_mismatch, Formulation::Reduced, rp.degenerate))
}

/// Riemannian logarithm `Log_{Y0}(Y1)` by single shooting. Non-convergence
/// is reported in the returned report rather than as an error.
pub fn stiefel_log(y0: &StiefelPoint, y1: &StiefelPoint, cfg: &ShootingConfig) -> Result<ShootingReport> {
    check_pair(y0, y1)?;
    validate_config(cfg)?;
    let (n, p) = (y0.n(), y0.p());
    match cfg.formulation {
        Formulation::Full => single_shoot(y0, y1, cfg),
        Formulation::Reduced => reduced_shoot(y0, y1, cfg),
        Formulation::Auto if 2 * p < n => reduced_shoot(y0, y1, cfg),
        Formulation::Auto => {
            if 2 * p == n {
                log::warn!("p = n/2: the reduced problem is no smaller, using the full formulation");
            }
            single_shoot(y0, y1, cfg)
        }
    }
}

/// Rank and conditioning of the shooting Jacobian at `(Y0, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianDiagnostics {
    pub rank: usize,
    pub condition: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Spectral norm of the generator `A`.
    pub alpha: f64,
    pub columns: usize,
}

pub fn jacobian_diagnostics(y0: &StiefelPoint, xi: &TangentVector) -> Result<JacobianDiagnostics> {
    let comp = manifold::orthonormal_complement(y0);
    if xi.base().matrix() != y0.matrix() {
        return Err(invalid("tangent vector is attached to a different base point"));
    }
    let coords = manifold::decompose_tangent(xi, &comp)?;
    let (n, p) = (y0.n(), y0.p());
    let a = structured_matrix(&coords.omega, &coords.k);
    let op = ExpDerivative::new(&a)?;
    let j = endpoint_jacobian(&op, &concat_columns(y0.matrix(), &comp), p);
    let sv = linalg::singular_values(&j);
    let columns = manifold_dim(n, p);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if sv.len() == columns { sv[sv.len() - 1] } else { 0.0 };
    let tol = (j.nrows().max(j.ncols()) as f64) * f64::EPSILON * smax;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    Ok(JacobianDiagnostics {
        rank,
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        sigma_max: smax,
        sigma_min: smin,
        alpha: op.alpha(),
        columns,
    })
}
