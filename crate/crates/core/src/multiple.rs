//! Multiple shooting over a broken geodesic.
//!
//! The unknowns are `Sigma^(k) = [vec Sigma1^(k); vec Sigma2^(k)]` for the
//! `m` junctions; segment `k` is the geodesic from `Sigma1^(k)` with initial
//! velocity `Sigma2^(k)` on `t in [0, 1]`. The residual has the segment
//! mismatches `Z^(k)(1) - Sigma^(k+1)` for `k < m` followed by the boundary
//! rows `[Sigma1^(1) - X; Sigma1^(m) - Y]`, so the Newton system is square of
//! size `2mnp`. It is solved by condensing to one `2np x 2np` system.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::frechet::{exp_and_frechet, jacobian_exp_general};
use crate::linalg::{self, kron, mat_of, vec_of, Mat, Vector};
use crate::manifold::{
    self, canonical_norm_raw, concat_columns, feasibility_residual, StiefelPoint, TangentVector,
};
use crate::perm::{block_vec_map, perfect_shuffle};

/// Junction points and velocities of a piecewise geodesic. Newton iterates
/// are kept as plain matrices since junctions drift slightly off the
/// manifold during the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenGeodesic {
    points: Vec<Mat>,
    tangents: Vec<Mat>,
}

impl BrokenGeodesic {
    pub fn new(points: Vec<StiefelPoint>, tangents: Vec<TangentVector>) -> Result<Self> {
        if points.len() < 2 || points.len() != tangents.len() {
            return Err(invalid("a broken geodesic needs m >= 2 points and m tangents"));
        }
        for (x, v) in points.iter().zip(&tangents) {
            if v.base().matrix() != x.matrix() {
                return Err(invalid("junction tangent is not attached to its junction"));
            }
        }
        let shape = points[0].matrix().shape();
        if points.iter().any(|x| x.matrix().shape() != shape) {
            return Err(invalid("junction points have different shapes"));
        }
        Ok(Self {
            points: points.into_iter().map(StiefelPoint::into_matrix).collect(),
            tangents: tangents.into_iter().map(TangentVector::into_matrix).collect(),
        })
    }

    /// Builds a broken geodesic from raw matrices without feasibility checks.
    pub fn from_raw(points: Vec<Mat>, tangents: Vec<Mat>) -> Result<Self> {
        if points.len() < 2 || points.len() != tangents.len() {
            return Err(invalid("a broken geodesic needs m >= 2 points and m tangents"));
        }
        let shape = points[0].shape();
        if points.iter().chain(&tangents).any(|x| x.shape() != shape) {
            return Err(invalid("junction data have different shapes"));
        }
        Ok(Self { points, tangents })
    }

    /// Samples `m` junctions of `t -> Exp_X(t xi)` at `t_k = k/(m-1)`; each
    /// segment tangent carries `1/(m-1)` of the velocity.
    pub fn sample(x: &StiefelPoint, xi: &TangentVector, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid("a broken geodesic needs m >= 2"));
        }
        let s = 1.0 / (m - 1) as f64;
        let mut points = Vec::with_capacity(m);
        let mut tangents = Vec::with_capacity(m);
        for k in 0..m {
            let g = manifold::stiefel_exp(x, xi, k as f64 * s)?;
            points.push(g.point.into_matrix());
            tangents.push(g.velocity.into_matrix() * s);
        }
        Ok(Self { points, tangents })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.points[0].shape()
    }

    pub fn points(&self) -> &[Mat] {
        &self.points
    }

    pub fn tangents(&self) -> &[Mat] {
        &self.tangents
    }

    /// Piecewise canonical length over the `m - 1` segments.
    pub fn length(&self) -> f64 {
        (0..self.m() - 1)
            .map(|k| canonical_norm_raw(&self.points[k], &self.tangents[k]))
            .sum()
    }

    /// Largest `|Sigma1^T Sigma1 - I|_F` over the junctions.
    pub fn feasibility_drift(&self) -> f64 {
        self.points.iter().map(feasibility_residual).fold(0.0, f64::max)
    }

    /// Largest tangency residual of the junction velocities.
    pub fn tangency_drift(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.tangents)
            .map(|(x, v)| manifold::tangency_residual(x, v))
            .fold(0.0, f64::max)
    }

    fn update(&mut self, delta: &Vector) {
        let (n, p) = self.shape();
        let np = n * p;
        for k in 0..self.m() {
            self.points[k] += mat_of(&delta.as_slice()[2 * np * k..2 * np * k + np], n, p);
            self.tangents[k] += mat_of(&delta.as_slice()[2 * np * k + np..2 * np * (k + 1)], n, p);
        }
    }
}

/// Per-segment frame `Q~ = [Sigma1, U_perp]` from the SVD of `Sigma1`.
#[derive(Debug, Clone)]
struct SegmentFrame {
    q: Mat,
    u_perp: Mat,
    /// `U_p S_p^{-1} V_p^T`.
    pinv_t: Mat,
}

fn segment_frame(s1: &Mat) -> Result<SegmentFrame> {
    let (n, p) = s1.shape();
    let svd = s1.clone().svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numeric("SVD without U".into()))?;
    let mut vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD without V".into()))?;
    let s = svd.singular_values;
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin >= 1e-8) {
        return Err(Error::DegenerateSvd { sigma_min: smin });
    }
    // sign convention: the largest-magnitude entry of each left singular
    // vector is positive
    for j in 0..p {
        let col = u.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            u.column_mut(j).neg_mut();
            vt.row_mut(j).neg_mut();
        }
    }
    let sinv = Mat::from_diagonal(&s.map(|v| 1.0 / v));
    let pinv_t = &u * sinv * &vt;
    let u_perp = linalg::complement(&u);
    debug_assert_eq!(u_perp.shape(), (n, n - p));
    Ok(SegmentFrame {
        q: concat_columns(s1, &u_perp),
        u_perp,
        pinv_t,
    })
}

fn segment_generator(s1: &Mat, s2: &Mat, u_perp: &Mat) -> Mat {
    let omega = s1.transpose() * s2;
    let k = u_perp.transpose() * s2;
    let p = s1.ncols();
    let n = s1.nrows();
    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (p, p)).copy_from(&omega);
    a.view_mut((p, 0), (n - p, p)).copy_from(&k);
    a.view_mut((0, p), (p, n - p)).copy_from(&(-k.transpose()));
    a
}

/// Endpoint `(Z1(1), Z2(1))` of one segment.
pub fn propagate_segment(s1: &Mat, s2: &Mat) -> Result<(Mat, Mat)> {
    if s1.shape() != s2.shape() {
        return Err(Error::DimensionMismatch {
            expected: s1.shape(),
            got: s2.shape(),
        });
    }
    let frame = segment_frame(s1)?;
    let p = s1.ncols();
    let a = segment_generator(s1, s2, &frame.u_perp);
    let qe = &frame.q * linalg::expm(&a);
    let z1 = qe.columns(0, p).into_owned();
    let z2 = &qe * a.columns(0, p);
    Ok((z1, z2))
}

/// The four `np x np` blocks of the segment Jacobian `G^(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentJacobian {
    pub z1_s1: Mat,
    pub z1_s2: Mat,
    pub z2_s1: Mat,
    pub z2_s2: Mat,
}

impl SegmentJacobian {
    /// `G = [[Z1_S1, Z1_S2], [Z2_S1, Z2_S2]]`.
    pub fn assemble(&self) -> Mat {
        let np = self.z1_s1.nrows();
        let mut g = Mat::zeros(2 * np, 2 * np);
        g.view_mut((0, 0), (np, np)).copy_from(&self.z1_s1);
        g.view_mut((0, np), (np, np)).copy_from(&self.z1_s2);
        g.view_mut((np, 0), (np, np)).copy_from(&self.z2_s1);
        g.view_mut((np, np), (np, np)).copy_from(&self.z2_s2);
        g
    }
}

/// Segment Jacobian evaluated one direction at a time: for each coordinate
/// direction of `Sigma1` and `Sigma2`, the perturbations of `Q~` and `A`
/// are formed and pushed through `Z1 = Q~ e^A [I; 0]` and
/// `Z2 = Q~ e^A A [I; 0]`, with the Fréchet derivative of `e^A` taken from
/// a block exponential.
pub fn segment_jacobian(s1: &Mat, s2: &Mat) -> Result<SegmentJacobian> {
    let (n, p) = s1.shape();
    if s2.shape() != (n, p) {
        return Err(Error::DimensionMismatch {
            expected: (n, p),
            got: s2.shape(),
        });
    }
    let frame = segment_frame(s1)?;
    let a = segment_generator(s1, s2, &frame.u_perp);
    let ea = linalg::expm(&a);
    let ea_p = ea.columns(0, p).into_owned();
    let a_p = a.columns(0, p).into_owned();
    let ea_a_p = &ea * &a_p;
    let q = &frame.q;
    let np = n * p;
    let mut out = SegmentJacobian {
        z1_s1: Mat::zeros(np, np),
        z1_s2: Mat::zeros(np, np),
        z2_s1: Mat::zeros(np, np),
        z2_s2: Mat::zeros(np, np),
    };
    for c in 0..np {
        let mut e = Mat::zeros(n, p);
        e[(c % n, c / n)] = 1.0;

        // d Sigma1 = e: dU_perp = -(U_p S^-1 V^T) e^T U_perp
        let du = -(&frame.pinv_t * e.transpose() * &frame.u_perp);
        let dq = concat_columns(&e, &du);
        let da = segment_delta_a(&e, &du, s2);
        let (_, l) = exp_and_frechet(&a, &da);
        let l_p = l.columns(0, p).into_owned();
        let dz1 = &dq * &ea_p + q * &l_p;
        let dz2 = &dq * &ea_a_p + q * (&l * &a_p) + q * (&ea * da.columns(0, p));
        out.z1_s1.column_mut(c).copy_from(&vec_of(&dz1));
        out.z2_s1.column_mut(c).copy_from(&vec_of(&dz2));

        // d Sigma2 = e
        let da = segment_generator(s1, &e, &frame.u_perp);
        let (_, l) = exp_and_frechet(&a, &da);
        let dz1 = q * l.columns(0, p);
        let dz2 = q * (&l * &a_p + &ea * da.columns(0, p));
        out.z1_s2.column_mut(c).copy_from(&vec_of(&dz1));
        out.z2_s2.column_mut(c).copy_from(&vec_of(&dz2));
    }
    Ok(out)
}

/// `dA` for a perturbation `(dSigma1, dU_perp)` at fixed `Sigma2`.
fn segment_delta_a(ds1: &Mat, du: &Mat, s2: &Mat) -> Mat {
    let (n, p) = s2.shape();
    let d_omega = ds1.transpose() * s2;
    let dk = du.transpose() * s2;
    let mut da = Mat::zeros(n, n);
    da.view_mut((0, 0), (p, p)).copy_from(&d_omega);
    da.view_mut((p, 0), (n - p, p)).copy_from(&dk);
    da.view_mut((0, p), (p, n - p)).copy_from(&(-dk.transpose()));
    da
}

/// The segment Jacobian assembled from the Kronecker-product block formulas
/// (`J_U_perp`, `J_q~`, `J_h`, `T`, `J_exp`). Slower than
/// [`segment_jacobian`]; kept for audits.
pub fn segment_jacobian_kron(s1: &Mat, s2: &Mat) -> Result<SegmentJacobian> {
    let (n, p) = s1.shape();
    let q_dim = n - p;
    let np = n * p;
    let frame = segment_frame(s1)?;
    let q = &frame.q;
    let a = segment_generator(s1, s2, &frame.u_perp);
    let ea = linalg::expm(&a);
    let jexp = jacobian_exp_general(&a)?;
    let t = block_vec_map(n, p)?;

    let i_top = Mat::identity(p, n); // [I 0]
    let mut i_bot = Mat::zeros(q_dim, n); // [0 I]
    i_bot.view_mut((0, p), (q_dim, q_dim)).fill_with_identity();
    let id_n = Mat::identity(n, n);
    let id_p = Mat::identity(p, p);
    let pi_qp = perfect_shuffle(q_dim, p).to_dense();

    // J_U_perp and J_q~ = [I_np; J_U_perp]
    let j_u = -(kron(&frame.u_perp.transpose(), &frame.pinv_t) * perfect_shuffle(n, p).to_dense());
    let mut j_q = Mat::zeros(n * n, np);
    j_q.view_mut((0, 0), (np, np)).fill_with_identity();
    j_q.view_mut((np, 0), (n * q_dim, np)).copy_from(&j_u);

    let stack = |top: Mat, mid: Mat| -> Mat {
        let cols = top.ncols();
        let mut h = Mat::zeros(n * n, cols);
        h.view_mut((0, 0), (p * p, cols)).copy_from(&top);
        h.view_mut((p * p, 0), (q_dim * p, cols)).copy_from(&mid);
        h.view_mut((p * p + q_dim * p, 0), (p * q_dim, cols)).copy_from(&(-(&pi_qp * &mid)));
        h
    };

    let s2t = s2.transpose();
    let j_h1 = stack(kron(&s2t, &i_top), kron(&s2t, &i_bot));
    let j_a1 = t.apply_rows(&(j_h1 * perfect_shuffle(n, n).to_dense() * &j_q));
    let j_exp1 = &jexp * &j_a1;
    let ea_t = ea.transpose();
    let at = a.transpose();
    let z1_s1 = kron(&(&i_top * &ea_t), &id_n) * &j_q + kron(&i_top, q) * &j_exp1;
    let z2_s1 = kron(&(&i_top * &at * &ea_t), &id_n) * &j_q
        + kron(&(&i_top * &at), q) * &j_exp1
        + kron(&i_top, &(q * &ea)) * &j_a1;

    let qt = q.transpose();
    let j_h2 = stack(kron(&id_p, &(&i_top * &qt)), kron(&id_p, &(&i_bot * &qt)));
    let j_a2 = t.apply_rows(&j_h2);
    let j_exp2 = &jexp * &j_a2;
    let z1_s2 = kron(&i_top, q) * &j_exp2;
    let z2_s2 = kron(&i_top, q) * (kron(&at, &id_n) * &j_exp2 + kron(&id_n, &ea) * &j_a2);

    Ok(SegmentJacobian {
        z1_s1,
        z1_s2,
        z2_s1,
        z2_s2,
    })
}

fn check_endpoints(sigma: &BrokenGeodesic, x: &StiefelPoint, y: &StiefelPoint) -> Result<()> {
    let shape = sigma.shape();
    for z in [x, y] {
        if z.matrix().shape() != shape {
            return Err(Error::DimensionMismatch {
                expected: shape,
                got: z.matrix().shape(),
            });
        }
    }
    Ok(())
}

/// Junction drift beyond which `F` is refused. Newton iterates leave the
/// manifold at second order in the step and the residual pulls them back,
/// so only gross violations are rejected.
pub const MAX_JUNCTION_DRIFT: f64 = 1e-1;

/// `F(Sigma)` of length `2mnp`.
pub fn residual_f(sigma: &BrokenGeodesic, x: &StiefelPoint, y: &StiefelPoint) -> Result<Vector> {
    check_endpoints(sigma, x, y)?;
    let drift = sigma.feasibility_drift();
    if !(drift < MAX_JUNCTION_DRIFT) {
        return Err(invalid(alloc::format!(
            "junction points are far from St(n,p) (drift {drift:e})"
        )));
    }
    let (n, p) = sigma.shape();
    let np = n * p;
    let m = sigma.m();
    let mut f = Vector::zeros(2 * np * m);
    for k in 0..m - 1 {
        let (z1, z2) = propagate_segment(&sigma.points[k], &sigma.tangents[k])?;
        let d1 = z1 - &sigma.points[k + 1];
        let d2 = z2 - &sigma.tangents[k + 1];
        f.rows_mut(2 * np * k, np).copy_from_slice(d1.as_slice());
        f.rows_mut(2 * np * k + np, np).copy_from_slice(d2.as_slice());
    }
    let r1 = &sigma.points[0] - x.matrix();
    let r2 = &sigma.points[m - 1] - y.matrix();
    f.rows_mut(2 * np * (m - 1), np).copy_from_slice(r1.as_slice());
    f.rows_mut(2 * np * (m - 1) + np, np).copy_from_slice(r2.as_slice());
    Ok(f)
}

/// Solves `F + J dSigma = 0` by condensing. `g` holds the assembled segment
/// Jacobians `G^(1..m-1)`; the boundary selectors
/// `C = [[I, 0], [0, 0]]` and `D = [[0, 0], [I, 0]]` are applied implicitly.
pub fn condensed_solve(g: &[Mat], f: &Vector) -> Result<Vector> {
    let m = g.len() + 1;
    if g.is_empty() {
        return Err(invalid("condensing needs at least one segment"));
    }
    let dim = g[0].nrows();
    if !dim.is_multiple_of(2) || f.len() != dim * m || g.iter().any(|gk| gk.shape() != (dim, dim)) {
        return Err(invalid("segment Jacobians and residual have inconsistent sizes"));
    }
    let np = dim / 2;
    let block = |k: usize| f.rows(dim * k, dim).into_owned();

    // dSigma^(m) = P dSigma^(1) + s
    let mut prod = Mat::identity(dim, dim);
    let mut s = Vector::zeros(dim);
    for (k, gk) in g.iter().enumerate() {
        prod = gk * prod;
        s = gk * s + block(k);
    }
    // M = C + D P, w = F^(m) + D s
    let mut mm = Mat::zeros(dim, dim);
    mm.view_mut((0, 0), (np, np)).fill_with_identity();
    mm.view_mut((np, 0), (np, dim)).copy_from(&prod.rows(0, np));
    let mut w = block(m - 1);
    {
        let add = s.rows(0, np).into_owned();
        let mut lower = w.rows_mut(np, np);
        lower += add;
    }
    let sv = linalg::singular_values(&mm);
    let ratio = sv[sv.len() - 1] / sv[0];
    if !(ratio > 1e-14) {
        return Err(Error::SingularCondensed(alloc::format!(
            "sigma_min / sigma_max = {ratio:e}"
        )));
    }
    let d1 = mm
        .lu()
        .solve(&(-w))
        .ok_or_else(|| Error::SingularCondensed("LU breakdown".into()))?;
    let mut out = Vector::zeros(dim * m);
    out.rows_mut(0, dim).copy_from(&d1);
    let mut prev = d1;
    for (k, gk) in g.iter().enumerate() {
        let next = block(k) + gk * &prev;
        out.rows_mut(dim * (k + 1), dim).copy_from(&next);
        prev = next;
    }
    Ok(out)
}

/// The full `2mnp x 2mnp` Jacobian: `G^(k)` on the block diagonal, `-I` on
/// the block superdiagonal and `[C ... D]` in the last block row.
pub fn dense_jacobian(g: &[Mat]) -> Mat {
    let m = g.len() + 1;
    let dim = g[0].nrows();
    let np = dim / 2;
    let mut j = Mat::zeros(dim * m, dim * m);
    for (k, gk) in g.iter().enumerate() {
        j.view_mut((dim * k, dim * k), (dim, dim)).copy_from(gk);
        j.view_mut((dim * k, dim * (k + 1)), (dim, dim)).copy_from(&(-Mat::identity(dim, dim)));
    }
    let r = dim * (m - 1);
    j.view_mut((r, 0), (np, np)).fill_with_identity();
    j.view_mut((r + np, dim * (m - 1)), (np, np)).fill_with_identity();
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsConfig {
    /// Stop when `|F(Sigma)|_2` falls to this.
    pub tol: f64,
    pub max_iter: usize,
    /// Project junction velocities onto the tangent spaces of their
    /// junctions after every Newton update. Off by default.
    pub project_iterates: bool,
}

impl Default for MsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20,
            project_iterates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MsReport {
    pub converged: bool,
    pub iterations: usize,
    /// `|F(Sigma_k)|_2`, starting with the initial broken geodesic.
    pub f_history: Vec<f64>,
    pub length_history: Vec<f64>,
    pub geodesic: BrokenGeodesic,
    /// `(m - 1) Sigma2^(1)` projected onto the tangent space at `X`.
    pub xi: TangentVector,
    /// Sum of segment speeds of the final broken geodesic.
    pub length: f64,
    pub m: usize,
    /// `|Z^(k)(1) - Sigma^(k+1)|` per segment at the final iterate.
    pub segment_mismatch: Vec<f64>,
    pub feasibility_drift: f64,
}

impl MsReport {
    pub fn distance(&self) -> Option<f64> {
        self.converged.then_some(self.length)
    }
}

/// Newton's method on `F(Sigma) = 0` from `sigma0`.
pub fn multiple_shoot(
    sigma0: &BrokenGeodesic,
    x: &StiefelPoint,
    y: &StiefelPoint,
    cfg: &MsConfig,
) -> Result<MsReport> {
    check_endpoints(sigma0, x, y)?;
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(invalid("multiple shooting needs tol > 0 and max_iter >= 1"));
    }
    let mut sigma = sigma0.clone();
    let m = sigma.m();
    let mut f_history = Vec::new();
    let mut length_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let f = residual_f(&sigma, x, y)?;
        let fnorm = f.norm();
        f_history.push(fnorm);
        length_history.push(sigma.length());
        if !fnorm.is_finite() {
            break;
        }
        if fnorm <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let g = (0..m - 1)
            .map(|k| segment_jacobian(&sigma.points[k], &sigma.tangents[k]).map(|j| j.assemble()))
            .collect::<Result<Vec<_>>>()?;
        let delta = condensed_solve(&g, &f)?;
        sigma.update(&delta);
        if cfg.project_iterates {
            for k in 0..m {
                let xk = &sigma.points[k];
                let v = &sigma.tangents[k];
                let xtv = xk.transpose() * v;
                sigma.tangents[k] = xk * linalg::skew(&xtv) + v - xk * &xtv;
            }
        }
        iterations += 1;
    }
    let (n, p) = sigma.shape();
    let np = n * p;
    let f = residual_f(&sigma, x, y)?;
    let segment_mismatch = (0..m - 1).map(|k| f.rows(2 * np * k, 2 * np).norm()).collect();
    let raw = &sigma.tangents[0] * ((m - 1) as f64);
    let xi = manifold::project_tangent(x, &raw)?;
    let drift = sigma.feasibility_drift();
    if converged && drift > 1e-10 {
        log::warn!("multiple shooting junctions drifted {drift:e} off the manifold");
    }
    Ok(MsReport {
        converged,
        iterations,
        length: sigma.length(),
        f_history,
        length_history,
        geodesic: sigma,
        xi,
        m,
        segment_mismatch,
        feasibility_drift: drift,
    })
}
