//! Points, tangent vectors and the canonical-metric geometry of St(n,p).
//!
//! Tangent vectors are stored in ambient form `xi = X Omega + X_perp K`. The
//! canonical coordinates `(Omega, K)` and their packed vector of length
//! `np - p(p+1)/2` are available through [`decompose_tangent`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, skew, sym, Mat, Vector};

/// Default feasibility tolerance `1e-12 * sqrt(p)` on `|X^T X - I|_F`.
pub fn default_feasibility_tol(p: usize) -> f64 {
    1e-12 * libm::sqrt(p.max(1) as f64)
}

/// Relative tolerance on the tangency residual `|X^T V + V^T X|_F`.
pub const TANGENCY_TOL: f64 = 1e-10;

pub fn feasibility_residual(m: &Mat) -> f64 {
    let p = m.ncols();
    (m.transpose() * m - Mat::identity(p, p)).norm()
}

pub fn tangency_residual(x: &Mat, v: &Mat) -> f64 {
    let xtv = x.transpose() * v;
    (&xtv + xtv.transpose()).norm()
}

/// An `n x p` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    data: Mat,
}

impl StiefelPoint {
    pub fn new(data: Mat) -> Result<Self> {
        let tol = default_feasibility_tol(data.ncols());
        Self::with_tolerance(data, tol)
    }

    pub fn with_tolerance(data: Mat, tol: f64) -> Result<Self> {
        let (n, p) = data.shape();
        if p == 0 || p > n {
            return Err(invalid(alloc::format!("St(n,p) needs n >= p >= 1, got {n}x{p}")));
        }
        let residual = feasibility_residual(&data);
        if !(residual <= tol) {
            return Err(Error::Infeasible { residual, tol });
        }
        Ok(Self { data })
    }

    /// Builds the orthonormal factor of `m` (polar projection) without a
    /// feasibility check on the input.
    pub fn project(m: &Mat) -> Result<Self> {
        Self::new(linalg::polar(m)?)
    }

    /// The point `[I_p; 0]`.
    pub fn identity_frame(n: usize, p: usize) -> Result<Self> {
        if p == 0 || p > n {
            return Err(invalid(alloc::format!("St(n,p) needs n >= p >= 1, got {n}x{p}")));
        }
        Ok(Self {
            data: Mat::identity(n, p),
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.data
    }

    pub fn into_matrix(self) -> Mat {
        self.data
    }

    pub fn residual(&self) -> f64 {
        feasibility_residual(&self.data)
    }

    /// Dimension of the manifold, `np - p(p+1)/2`.
    pub fn manifold_dim(&self) -> usize {
        manifold_dim(self.n(), self.p())
    }
}

pub fn manifold_dim(n: usize, p: usize) -> usize {
    n * p - p * (p + 1) / 2
}

/// Ambient tangent vector attached to a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: StiefelPoint,
    ambient: Mat,
}

impl TangentVector {
    pub fn new(base: &StiefelPoint, ambient: Mat) -> Result<Self> {
        check_shape(base, &ambient)?;
        let residual = tangency_residual(base.matrix(), &ambient);
        let tol = TANGENCY_TOL * (1.0 + ambient.norm());
        if !(residual <= tol) {
            return Err(Error::NotTangent { residual, tol });
        }
        Ok(Self {
            base: base.clone(),
            ambient,
        })
    }

    pub fn zero(base: &StiefelPoint) -> Self {
        Self {
            base: base.clone(),
            ambient: Mat::zeros(base.n(), base.p()),
        }
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn matrix(&self) -> &Mat {
        &self.ambient
    }

    pub fn into_matrix(self) -> Mat {
        self.ambient
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            ambient: &self.ambient * s,
        }
    }

    pub fn canonical_norm(&self) -> f64 {
        canonical_norm_raw(self.base.matrix(), &self.ambient)
    }

    pub fn embedded_norm(&self) -> f64 {
        self.ambient.norm()
    }
}

fn check_shape(x: &StiefelPoint, v: &Mat) -> Result<()> {
    if v.shape() != x.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: x.matrix().shape(),
            got: v.shape(),
        });
    }
    Ok(())
}

fn check_base(x: &StiefelPoint, v: &TangentVector) -> Result<()> {
    if v.base.matrix() != x.matrix() {
        return Err(invalid("tangent vector is attached to a different base point"));
    }
    Ok(())
}

/// Canonical coordinates of a tangent vector in the basis `[X, X_perp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentCoordinates {
    pub base: StiefelPoint,
    pub omega: Mat,
    pub k: Mat,
    pub complement: Mat,
    pub packed: Vector,
}

impl TangentCoordinates {
    /// Rebuilds coordinates from a packed vector `x = (s, vec K)`.
    pub fn from_packed(base: &StiefelPoint, complement: Mat, packed: Vector) -> Result<Self> {
        let (n, p) = (base.n(), base.p());
        if packed.len() != manifold_dim(n, p) {
            return Err(invalid(alloc::format!(
                "packed vector has length {}, expected {}",
                packed.len(),
                manifold_dim(n, p)
            )));
        }
        let (omega, k) = unpack(&packed, n, p);
        Ok(Self {
            base: base.clone(),
            omega,
            k,
            complement,
            packed,
        })
    }
}

/// Packs `(Omega, K)` into `x = (s, vec K)`; `s` runs over the strict upper
/// triangle of `Omega` column by column.
pub fn pack(omega: &Mat, k: &Mat) -> Vector {
    let p = omega.nrows();
    let ns = p * (p.saturating_sub(1)) / 2;
    let mut x = Vector::zeros(ns + k.len());
    let mut c = 0;
    for j in 0..p {
        for i in 0..j {
            x[c] = omega[(i, j)];
            c += 1;
        }
    }
    x.rows_mut(ns, k.len()).copy_from_slice(k.as_slice());
    x
}

pub fn unpack(x: &Vector, n: usize, p: usize) -> (Mat, Mat) {
    let ns = p * (p.saturating_sub(1)) / 2;
    let mut omega = Mat::zeros(p, p);
    let mut c = 0;
    for j in 0..p {
        for i in 0..j {
            omega[(i, j)] = x[c];
            omega[(j, i)] = -x[c];
            c += 1;
        }
    }
    let k = linalg::mat_of(&x.as_slice()[ns..], n - p, p);
    (omega, k)
}

pub fn project_tangent(x: &StiefelPoint, v: &Mat) -> Result<TangentVector> {
    check_shape(x, v)?;
    let xm = x.matrix();
    let xtv = xm.transpose() * v;
    let ambient = xm * skew(&xtv) + v - xm * &xtv;
    TangentVector::new(x, ambient)
}

pub fn project_normal(x: &StiefelPoint, v: &Mat) -> Result<Mat> {
    check_shape(x, v)?;
    let xm = x.matrix();
    Ok(xm * sym(&(xm.transpose() * v)))
}

/// `tr(xi^T (I - X X^T / 2) zeta)`.
pub fn canonical_inner(x: &StiefelPoint, xi: &TangentVector, zeta: &TangentVector) -> Result<f64> {
    check_base(x, xi)?;
    check_base(x, zeta)?;
    let xm = x.matrix();
    let a = xm.transpose() * xi.matrix();
    let b = xm.transpose() * zeta.matrix();
    Ok(xi.matrix().dot(zeta.matrix()) - 0.5 * a.dot(&b))
}

pub fn canonical_norm(x: &StiefelPoint, xi: &TangentVector) -> Result<f64> {
    check_base(x, xi)?;
    Ok(xi.canonical_norm())
}

pub fn embedded_norm(xi: &TangentVector) -> f64 {
    xi.embedded_norm()
}

/// Canonical norm evaluated for any base/velocity pair of matching shape;
/// used on multiple-shooting iterates that are only approximately feasible.
pub fn canonical_norm_raw(x: &Mat, v: &Mat) -> f64 {
    let xtv = x.transpose() * v;
    libm::sqrt((v.norm_squared() - 0.5 * xtv.norm_squared()).max(0.0))
}

pub fn orthonormal_complement(x: &StiefelPoint) -> Mat {
    linalg::complement(x.matrix())
}

pub fn decompose_tangent(xi: &TangentVector, complement: &Mat) -> Result<TangentCoordinates> {
    let x = xi.base();
    let (n, p) = (x.n(), x.p());
    if complement.shape() != (n, n - p) {
        return Err(Error::DimensionMismatch {
            expected: (n, n - p),
            got: complement.shape(),
        });
    }
    let omega = skew(&(x.matrix().transpose() * xi.matrix()));
    let k = complement.transpose() * xi.matrix();
    let packed = pack(&omega, &k);
    Ok(TangentCoordinates {
        base: x.clone(),
        omega,
        k,
        complement: complement.clone(),
        packed,
    })
}

pub fn assemble_tangent(coords: &TangentCoordinates) -> Result<TangentVector> {
    let ambient = coords.base.matrix() * &coords.omega + &coords.complement * &coords.k;
    TangentVector::new(&coords.base, ambient)
}

/// Structured matrix `[[Omega, -K^T], [K, 0]]`.
pub(crate) fn structured_matrix(omega: &Mat, k: &Mat) -> Mat {
    let p = omega.nrows();
    let n = p + k.nrows();
    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (p, p)).copy_from(omega);
    a.view_mut((p, 0), (n - p, p)).copy_from(k);
    a.view_mut((0, p), (p, n - p)).copy_from(&(-k.transpose()));
    a
}

/// Point and velocity of a geodesic at parameter `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub point: StiefelPoint,
    pub velocity: TangentVector,
    pub t: f64,
}

/// Geodesic `Y(t) = Q exp(tA) [I; 0]` with `Q = [Y0, Y0_perp]` and its
/// derivative `Q exp(tA) [Omega; K]`.
pub fn stiefel_exp(y0: &StiefelPoint, xi: &TangentVector, t: f64) -> Result<GeodesicSample> {
    check_base(y0, xi)?;
    let comp = orthonormal_complement(y0);
    exp_with_complement(y0, &comp, xi.matrix(), t)
}

pub(crate) fn exp_with_complement(
    y0: &StiefelPoint,
    comp: &Mat,
    xi: &Mat,
    t: f64,
) -> Result<GeodesicSample> {
    let p = y0.p();
    let omega = skew(&(y0.matrix().transpose() * xi));
    let k = comp.transpose() * xi;
    let a = structured_matrix(&omega, &k);
    let e = linalg::expm(&(&a * t));
    let q = concat_columns(y0.matrix(), comp);
    let qe = q * e;
    let point_m = qe.columns(0, p).into_owned();
    let vel = &qe * a.columns(0, p);
    let point = StiefelPoint::with_tolerance(point_m, 1e-10 * libm::sqrt(p as f64))?;
    let velocity = TangentVector::new(&point, vel)?;
    Ok(GeodesicSample { point, velocity, t })
}

pub(crate) fn concat_columns(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Frobenius norm of `Y'' + Y' Y'^T Y + Y((Y^T Y')^2 + Y'^T Y')` at the
/// middle sample, with `Y''` from a central second difference.
pub fn geodesic_ode_residual(samples: [&GeodesicSample; 3]) -> Result<f64> {
    let [a, b, c] = samples;
    let h1 = b.t - a.t;
    let h2 = c.t - b.t;
    if !(h1 > 0.0) || (h1 - h2).abs() > 1e-12 * h1.abs().max(1.0) {
        return Err(invalid("samples must be equally spaced with increasing t"));
    }
    let y = b.point.matrix();
    let yd = b.velocity.matrix();
    let ydd = (c.point.matrix() - y * 2.0 + a.point.matrix()) / (h1 * h1);
    let yty = y.transpose() * yd;
    let lhs = ydd + yd * (yd.transpose() * y) + y * (&yty * &yty + yd.transpose() * yd);
    Ok(lhs.norm())
}

pub fn random_point(n: usize, p: usize, seed: u64) -> Result<StiefelPoint> {
    random_point_with(n, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Orthonormal factor of a Gaussian `n x p` matrix.
pub fn random_point_with<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<StiefelPoint> {
    if p == 0 || p > n {
        return Err(invalid(alloc::format!("St(n,p) needs n >= p >= 1, got {n}x{p}")));
    }
    let g = gaussian(n, p, rng);
    let (q, _) = linalg::thin_qr_nonneg(&g);
    StiefelPoint::new(q)
}

pub fn random_tangent(x: &StiefelPoint, target_norm: f64, seed: u64) -> Result<TangentVector> {
    random_tangent_with(x, target_norm, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Gaussian `(Omega, K)` (skew part of a Gaussian for `Omega`) rescaled to
/// the requested canonical norm.
pub fn random_tangent_with<R: Rng + ?Sized>(
    x: &StiefelPoint,
    target_norm: f64,
    rng: &mut R,
) -> Result<TangentVector> {
    if !(target_norm >= 0.0) || !target_norm.is_finite() {
        return Err(invalid("target norm must be finite and nonnegative"));
    }
    let (n, p) = (x.n(), x.p());
    let omega = skew(&gaussian(p, p, rng));
    let k = gaussian(n - p, p, rng);
    if target_norm == 0.0 {
        return Ok(TangentVector::zero(x));
    }
    let comp = orthonormal_complement(x);
    let v = x.matrix() * &omega + &comp * &k;
    let nrm = canonical_norm_raw(x.matrix(), &v);
    if nrm == 0.0 {
        return Err(Error::Numeric("degenerate random tangent".into()));
    }
    TangentVector::new(x, v * (target_norm / nrm))
}

pub(crate) fn gaussian<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Test instance `(X, Y, xi)` with `X` random, `xi` a random tangent of
/// canonical norm `d` and `Y = Exp_X(xi)`. One seed drives both draws.
pub fn geodesic_instance(
    n: usize,
    p: usize,
    d: f64,
    seed: u64,
) -> Result<(StiefelPoint, StiefelPoint, TangentVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_point_with(n, p, &mut rng)?;
    let xi = random_tangent_with(&x, d, &mut rng)?;
    let y = stiefel_exp(&x, &xi, 1.0)?.point;
    Ok((x, y, xi))
}

/// Random orthogonal `k x k` matrix.
pub fn random_orthogonal(k: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    linalg::thin_qr_nonneg(&gaussian(k, k, &mut rng)).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Mat {
        gaussian(r, c, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn rand_sym(p: usize, seed: u64) -> Mat {
        sym(&rand_mat(p, p, seed))
    }

    #[test]
    fn projector_fixes_tangent_vectors() {
        let x = random_point(6, 2, 1).unwrap();
        let xi = random_tangent(&x, 1.3, 2).unwrap();
        let p = project_tangent(&x, xi.matrix()).unwrap();
        assert!((p.matrix() - xi.matrix()).norm() / xi.matrix().norm() < 1e-13);
    }

    #[test]
    fn projector_kills_normal_space() {
        let x = random_point(6, 2, 3).unwrap();
        let n = x.matrix() * rand_sym(2, 4);
        let p = project_tangent(&x, &n).unwrap();
        assert!(p.matrix().norm() < 1e-14);
        let pn = project_normal(&x, &n).unwrap();
        assert!((pn - &n).norm() < 1e-14);
    }

    #[test]
    fn projection_matches_entrywise_formula() {
        let x = random_point(6, 2, 42).unwrap();
        let v = rand_mat(6, 2, 42);
        let p = project_tangent(&x, &v).unwrap();
        // V - X sym(X^T V), written out entrywise.
        let xm = x.matrix();
        let mut want = v.clone();
        for i in 0..6 {
            for j in 0..2 {
                let mut acc = 0.0;
                for a in 0..2 {
                    let mut xtv_aj = 0.0;
                    let mut xtv_ja = 0.0;
                    for r in 0..6 {
                        xtv_aj += xm[(r, a)] * v[(r, j)];
                        xtv_ja += xm[(r, j)] * v[(r, a)];
                    }
                    acc += xm[(i, a)] * 0.5 * (xtv_aj + xtv_ja);
                }
                want[(i, j)] -= acc;
            }
        }
        assert!((p.matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn normal_projection_is_complementary() {
        let x = random_point(6, 2, 7).unwrap();
        let v = rand_mat(6, 2, 7);
        let t = project_tangent(&x, &v).unwrap();
        let n = project_normal(&x, &v).unwrap();
        assert!((t.matrix() + n - &v).norm() < 1e-13);
        assert!(project_normal(&x, t.matrix()).unwrap().norm() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = random_point(5, 2, 1).unwrap();
        assert!(matches!(
            project_tangent(&x, &Mat::zeros(5, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(project_normal(&x, &Mat::zeros(4, 2)).is_err());
    }

    #[test]
    fn canonical_norm_splits_omega_and_k() {
        let x = random_point(7, 3, 5).unwrap();
        let comp = orthonormal_complement(&x);
        let omega = skew(&rand_mat(3, 3, 6));
        let k = rand_mat(4, 3, 7);
        let xi = TangentVector::new(&x, x.matrix() * &omega + &comp * &k).unwrap();
        let want = 0.5 * omega.norm_squared() + k.norm_squared();
        let got = canonical_inner(&x, &xi, &xi).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        let zero = TangentVector::zero(&x);
        assert_eq!(canonical_inner(&x, &xi, &zero).unwrap(), 0.0);
    }

    #[test]
    fn canonical_inner_matches_dense_trace() {
        let x = random_point(5, 2, 3).unwrap();
        let xi = random_tangent(&x, 1.0, 30).unwrap();
        let zeta = random_tangent(&x, 2.0, 31).unwrap();
        let g = Mat::identity(5, 5) - x.matrix() * x.matrix().transpose() * 0.5;
        let want = (xi.matrix().transpose() * g * zeta.matrix()).trace();
        let got = canonical_inner(&x, &xi, &zeta).unwrap();
        assert!((got - want).abs() < 1e-13);
        let sym_got = canonical_inner(&x, &zeta, &xi).unwrap();
        assert!((got - sym_got).abs() < 1e-14);
    }

    #[test]
    fn norms_agree_without_omega_and_differ_by_half_omega() {
        let x = random_point(6, 3, 8).unwrap();
        let comp = orthonormal_complement(&x);
        let k = rand_mat(3, 3, 9);
        let xi = TangentVector::new(&x, &comp * &k).unwrap();
        assert!((xi.canonical_norm() - k.norm()).abs() < 1e-13);
        assert!((embedded_norm(&xi) - k.norm()).abs() < 1e-13);

        let xi = random_tangent(&x, 1.7, 10).unwrap();
        let c = decompose_tangent(&xi, &comp).unwrap();
        let diff = embedded_norm(&xi).powi(2) - xi.canonical_norm().powi(2);
        assert!((diff - 0.5 * c.omega.norm_squared()).abs() < 1e-12);
        assert_eq!(TangentVector::zero(&x).canonical_norm(), 0.0);
    }

    #[test]
    fn base_mismatch_is_rejected() {
        let x = random_point(5, 2, 1).unwrap();
        let y = random_point(5, 2, 2).unwrap();
        let xi = random_tangent(&x, 1.0, 3).unwrap();
        assert!(canonical_inner(&y, &xi, &xi).is_err());
    }

    #[test]
    fn complement_of_identity_frame_spans_trailing_axes() {
        let x = StiefelPoint::identity_frame(6, 2).unwrap();
        let c = orthonormal_complement(&x);
        assert_eq!(c.shape(), (6, 4));
        // span check: the top rows vanish and the bottom block is orthogonal
        assert!(c.rows(0, 2).norm() < 1e-14);
        let bottom = c.rows(2, 4).into_owned();
        assert!((bottom.transpose() * &bottom - Mat::identity(4, 4)).norm() < 1e-13);
    }

    #[test]
    fn complement_residuals() {
        let x = random_point(8, 3, 4).unwrap();
        let c = orthonormal_complement(&x);
        assert!((x.matrix().transpose() * &c).norm() <= 1e-13);
        let q = concat_columns(x.matrix(), &c);
        assert!((q.transpose() * &q - Mat::identity(8, 8)).norm() <= 1e-12);
        let o = random_point(4, 4, 5).unwrap();
        assert_eq!(orthonormal_complement(&o).ncols(), 0);
    }

    #[test]
    fn decomposition_of_pure_components() {
        let x = random_point(7, 2, 11).unwrap();
        let comp = orthonormal_complement(&x);
        let omega0 = skew(&rand_mat(2, 2, 12));
        let xi = TangentVector::new(&x, x.matrix() * &omega0).unwrap();
        let c = decompose_tangent(&xi, &comp).unwrap();
        assert!(c.k.norm() < 1e-14);
        assert!((&c.omega - &omega0).norm() < 1e-14);

        let k0 = rand_mat(5, 2, 13);
        let xi = TangentVector::new(&x, &comp * &k0).unwrap();
        let c = decompose_tangent(&xi, &comp).unwrap();
        assert!(c.omega.norm() < 1e-14);
        assert!((&c.k - &k0).norm() < 1e-14);
    }

    #[test]
    fn decomposition_round_trip_and_packing() {
        let x = random_point(7, 2, 14).unwrap();
        let comp = orthonormal_complement(&x);
        let xi = random_tangent(&x, 2.0, 15).unwrap();
        let c = decompose_tangent(&xi, &comp).unwrap();
        assert_eq!(c.packed.len(), manifold_dim(7, 2));
        assert_eq!(c.omega, -c.omega.transpose());
        let back = assemble_tangent(&c).unwrap();
        assert!((back.matrix() - xi.matrix()).norm() / xi.matrix().norm() < 1e-12);
        let again = TangentCoordinates::from_packed(&x, comp, c.packed.clone()).unwrap();
        assert_eq!(again.omega, c.omega);
        assert_eq!(again.k, c.k);
    }

    #[test]
    fn non_tangent_input_is_rejected() {
        let x = random_point(5, 2, 1).unwrap();
        let v = x.matrix() * rand_sym(2, 2);
        assert!(matches!(TangentVector::new(&x, v), Err(Error::NotTangent { .. })));
    }

    #[test]
    fn exp_of_zero_and_at_zero() {
        let y0 = random_point(6, 2, 20).unwrap();
        let g = stiefel_exp(&y0, &TangentVector::zero(&y0), 0.7).unwrap();
        assert!((g.point.matrix() - y0.matrix()).norm() < 1e-15);
        assert!(g.velocity.matrix().norm() < 1e-15);

        let xi = random_tangent(&y0, 1.1, 21).unwrap();
        let g = stiefel_exp(&y0, &xi, 0.0).unwrap();
        assert!((g.point.matrix() - y0.matrix()).norm() < 1e-15);
        assert!((g.velocity.matrix() - xi.matrix()).norm() < 1e-14);
    }

    #[test]
    fn exp_on_the_sphere_is_a_great_circle() {
        let y0 = StiefelPoint::identity_frame(3, 1).unwrap();
        let alpha = 1.2;
        let xi = TangentVector::new(&y0, Mat::from_column_slice(3, 1, &[0.0, alpha, 0.0])).unwrap();
        let g = stiefel_exp(&y0, &xi, 1.0).unwrap();
        let want = Mat::from_column_slice(3, 1, &[alpha.cos(), alpha.sin(), 0.0]);
        assert!((g.point.matrix() - want).norm() < 1e-15);
    }

    #[test]
    fn geodesics_have_constant_speed_and_stay_tangent() {
        let y0 = random_point(8, 3, 22).unwrap();
        let xi = random_tangent(&y0, 2.0, 23).unwrap();
        for t in [0.0, 0.25, 0.5, 1.0] {
            let g = stiefel_exp(&y0, &xi, t).unwrap();
            assert!((g.velocity.canonical_norm() - 2.0).abs() < 1e-10);
            assert!(tangency_residual(g.point.matrix(), g.velocity.matrix()) < 1e-10);
        }
    }

    #[test]
    fn exp_ignores_rotation_of_the_complement() {
        let y0 = random_point(7, 2, 24).unwrap();
        let xi = random_tangent(&y0, 1.5, 25).unwrap();
        let comp = orthonormal_complement(&y0);
        let rot = &comp * random_orthogonal(5, 26);
        let a = exp_with_complement(&y0, &comp, xi.matrix(), 1.0).unwrap();
        let b = exp_with_complement(&y0, &rot, xi.matrix(), 1.0).unwrap();
        assert!((a.point.matrix() - b.point.matrix()).norm() < 1e-10);
        assert!((a.velocity.matrix() - b.velocity.matrix()).norm() < 1e-10);
    }

    fn samples(y0: &StiefelPoint, xi: &TangentVector, t: f64, h: f64) -> [GeodesicSample; 3] {
        [
            stiefel_exp(y0, xi, t - h).unwrap(),
            stiefel_exp(y0, xi, t).unwrap(),
            stiefel_exp(y0, xi, t + h).unwrap(),
        ]
    }

    #[test]
    fn ode_residual_vanishes_on_geodesics() {
        let y0 = random_point(6, 2, 27).unwrap();
        let zero = TangentVector::zero(&y0);
        let s = samples(&y0, &zero, 0.5, 1e-3);
        assert!(geodesic_ode_residual([&s[0], &s[1], &s[2]]).unwrap() < 1e-12);

        let xi = random_tangent(&y0, 1.0, 28).unwrap();
        let s = samples(&y0, &xi, 0.5, 1e-3);
        let r = geodesic_ode_residual([&s[0], &s[1], &s[2]]).unwrap();
        assert!(r <= 1e-4, "{r:e}");
    }

    #[test]
    fn ode_residual_detects_non_geodesic_paths() {
        // Y(t) = polar(Y0 + t V): a retraction curve, not a geodesic
        let y0 = random_point(6, 2, 29).unwrap();
        let xi = random_tangent(&y0, 1.0, 30).unwrap();
        let curve = |t: f64| StiefelPoint::project(&(y0.matrix() + xi.matrix() * t)).unwrap();
        let h = 1e-3;
        let t = 0.6;
        let mk = |t: f64| {
            let point = curve(t);
            let d = (curve(t + 1e-6).matrix() - curve(t - 1e-6).matrix()) / 2e-6;
            let velocity = project_tangent(&point, &d).unwrap();
            GeodesicSample { point, velocity, t }
        };
        let s = [mk(t - h), mk(t), mk(t + h)];
        let r = geodesic_ode_residual([&s[0], &s[1], &s[2]]).unwrap();
        assert!(r > 1e-2, "{r:e}");
    }

    #[test]
    fn ode_residual_is_second_order() {
        let y0 = random_point(6, 2, 31).unwrap();
        let xi = random_tangent(&y0, 2.0, 32).unwrap();
        let r = |h: f64| {
            let s = samples(&y0, &xi, 0.5, h);
            geodesic_ode_residual([&s[0], &s[1], &s[2]]).unwrap()
        };
        let ratio = r(0.04) / r(0.02);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn random_generation_is_deterministic_and_feasible() {
        let a = random_point(15, 4, 1).unwrap();
        let b = random_point(15, 4, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.residual() <= 1e-13);
        let t1 = random_tangent(&a, 0.8, 9).unwrap();
        let t2 = random_tangent(&a, 0.8, 9).unwrap();
        assert_eq!(t1, t2);
        assert!((t1.canonical_norm() - 0.8).abs() < 1e-12);
        assert_eq!(random_tangent(&a, 0.0, 3).unwrap().matrix().norm(), 0.0);
        assert!(random_point(2, 3, 0).is_err());
    }

    #[test]
    fn infeasible_points_are_rejected() {
        let m = Mat::from_element(4, 2, 0.5);
        assert!(matches!(StiefelPoint::new(m), Err(Error::Infeasible { .. })));
    }
}
