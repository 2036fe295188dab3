//! Dense kernels shared by the manifold and shooting code: the Padé matrix
//! exponential, the spectral path for skew-symmetric matrices, QR-based
//! complements, polar factors and rank-revealing least squares.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn skew(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Column-stacking vectorization.
pub fn vec_of(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn mat_of(v: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

fn norm1(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error bounds on the 1-norm for each Padé degree.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn pade_low(a: &Mat, coeffs: &[f64]) -> Mat {
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let mut u_inner = &ident * coeffs[1];
    let mut v = &ident * coeffs[0];
    let mut power = ident.clone();
    let m = coeffs.len() - 1;
    for k in 1..=m / 2 {
        power = &power * &a2;
        u_inner += &power * coeffs[2 * k + 1];
        v += &power * coeffs[2 * k];
    }
    let u = a * u_inner;
    pade_solve(u, v)
}

fn pade13(a: &Mat) -> Mat {
    let b = &PADE13;
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    pade_solve(u, v)
}

fn pade_solve(u: Mat, v: Mat) -> Mat {
    let p = &v + &u;
    let q = v - u;
    // q is well conditioned inside the theta bounds.
    q.lu().solve(&p).expect("Padé denominator is nonsingular within the theta bounds")
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant (degrees 3 through 13, picked from the 1-norm).
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let nrm = norm1(a);
    if nrm == 0.0 {
        return Mat::identity(n, n);
    }
    for (deg, theta) in THETA {
        if nrm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs);
        }
    }
    let s = libm::ceil(libm::log2(nrm / THETA13)).max(0.0) as i32;
    let scaled = a * libm::pow(2.0, -s as f64);
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Spectral data of a real skew-symmetric matrix `A = U diag(-i mu) U^*`,
/// obtained from the Hermitian matrix `iA`.
#[derive(Debug, Clone)]
pub struct SkewSpectrum {
    pub mu: Vec<f64>,
    pub u_re: Mat,
    pub u_im: Mat,
}

impl SkewSpectrum {
    pub fn new(a: &Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: (n, n),
                got: a.shape(),
            });
        }
        let residual = (a + a.transpose()).norm();
        if residual > 1e-10 * (1.0 + a.norm()) {
            return Err(Error::NotSkew { residual });
        }
        let h = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
            Complex::new(0.0, 0.5 * (a[(i, j)] - a[(j, i)]))
        });
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
        let u = &eig.eigenvectors;
        let unitarity = (u.adjoint() * u - DMatrix::<Complex<f64>>::identity(n, n)).norm();
        if unitarity > 1e-10 {
            return Err(Error::Numeric(alloc::format!(
                "eigenvectors lost unitarity ({unitarity:e})"
            )));
        }
        Ok(Self {
            mu: eig.eigenvalues.iter().copied().collect(),
            u_re: u.map(|z| z.re),
            u_im: u.map(|z| z.im),
        })
    }

    /// Evaluates `U diag(f(mu)) U^*` for a real-valued weight (real part).
    pub fn apply_real(&self, f: impl Fn(f64) -> f64) -> Mat {
        let d = Vector::from_iterator(self.mu.len(), self.mu.iter().map(|&m| f(m)));
        let ur_d = scale_columns(&self.u_re, &d);
        let ui_d = scale_columns(&self.u_im, &d);
        ur_d * self.u_re.transpose() + ui_d * self.u_im.transpose()
    }

    /// `exp(tA)` through the spectrum: `U diag(exp(-i mu t)) U^*`.
    pub fn exp(&self, t: f64) -> Mat {
        let c = Vector::from_iterator(self.mu.len(), self.mu.iter().map(|&m| libm::cos(m * t)));
        let s = Vector::from_iterator(self.mu.len(), self.mu.iter().map(|&m| libm::sin(m * t)));
        // (Ur + iUi)(c - i s)(Ur^T - iUi^T), real part.
        let ur_c = scale_columns(&self.u_re, &c);
        let ui_c = scale_columns(&self.u_im, &c);
        let ur_s = scale_columns(&self.u_re, &s);
        let ui_s = scale_columns(&self.u_im, &s);
        ur_c * self.u_re.transpose() + ui_c * self.u_im.transpose() + ui_s * self.u_re.transpose()
            - ur_s * self.u_im.transpose()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.mu.iter().fold(0.0, |acc, m| acc.max(m.abs()))
    }
}

pub(crate) fn scale_columns(m: &Mat, d: &Vector) -> Mat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

/// Skew-symmetric exponential computed from the eigendecomposition.
pub fn expm_skew_eig(a: &Mat) -> Result<Mat> {
    Ok(SkewSpectrum::new(a)?.exp(1.0))
}

/// Full orthogonal factor of a QR factorization of `x` (n×n).
pub fn full_q(x: &Mat) -> Mat {
    let n = x.nrows();
    let qr = x.clone().qr();
    let mut qt = Mat::identity(n, n);
    qr.q_tr_mul(&mut qt);
    qt.transpose()
}

/// Orthonormal basis for the orthogonal complement of `span(x)`: the
/// trailing `n - p` columns of the full QR orthogonal factor.
pub fn complement(x: &Mat) -> Mat {
    let (n, p) = x.shape();
    if p >= n {
        return Mat::zeros(n, 0);
    }
    full_q(x).columns(p, n - p).into_owned()
}

/// Thin QR with the diagonal of `R` made nonnegative.
pub fn thin_qr_nonneg(x: &Mat) -> (Mat, Mat) {
    let qr = x.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Closest matrix with orthonormal columns in the Frobenius norm.
pub fn polar(x: &Mat) -> Result<Mat> {
    let p = x.ncols();
    let svd = x.clone().svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if p > 0 && !(smin > 1e-12 * smax.max(1e-300)) {
        return Err(Error::Numeric(alloc::format!(
            "rank-deficient matrix in polar factorization (sigma_min = {smin:e})"
        )));
    }
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD without U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD without V".into()))?;
    Ok(u * vt)
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    s
}

/// Outcome of a rank-revealing least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: Vector,
    pub rank: usize,
}

/// Minimizes `|J x - b|` with column-pivoted QR. Columns whose pivot falls
/// below `rel_tol * |R_00|` are dropped (basic solution).
pub fn lstsq_pivoted(j: &Mat, b: &Vector, rel_tol: f64) -> LeastSquares {
    let (rows, cols) = j.shape();
    assert_eq!(rows, b.len());
    if cols == 0 {
        return LeastSquares {
            solution: Vector::zeros(0),
            rank: 0,
        };
    }
    let qr = j.clone().col_piv_qr();
    let r = qr.r();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let r00 = r[(0, 0)].abs();
    let kmax = cols.min(rows);
    let mut rank = 0;
    while rank < kmax && r[(rank, rank)].abs() > rel_tol * r00 {
        rank += 1;
    }
    let mut y = Vector::zeros(cols);
    for i in (0..rank).rev() {
        let mut acc = qtb[i];
        for k in i + 1..rank {
            acc -= r[(i, k)] * y[k];
        }
        y[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut y);
    LeastSquares { solution: y, rank }
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(r: usize, c: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
    }

    // Truncated Taylor series with many terms, accumulated after scaling; an
    // independent route for moderate norms.
    fn expm_taylor(a: &Mat) -> Mat {
        let n = a.nrows();
        let s = 8;
        let b = a / libm::pow(2.0, s as f64);
        let mut term = Mat::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_matches_taylor_on_all_degrees() {
        for (scale, seed) in [(1e-3, 1u64), (0.05, 2), (0.2, 3), (0.5, 4), (3.0, 5), (20.0, 6)] {
            let a = gauss(6, 6, seed) * scale;
            let e = expm(&a);
            let t = expm_taylor(&a);
            let rel = (&e - &t).norm() / t.norm();
            assert!(rel < 1e-12, "scale {scale}: {rel:e}");
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        let th = 1.3;
        let a = Mat::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = expm(&a);
        let want = Mat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!((e - want).norm() < 1e-15);
    }

    #[test]
    fn spectral_and_pade_agree_on_skew() {
        for seed in 0..5 {
            let g = gauss(7, 7, seed);
            let a = skew(&g) * 2.0;
            let e1 = expm(&a);
            let e2 = expm_skew_eig(&a).unwrap();
            assert!((&e1 - &e2).norm() < 1e-13, "{:e}", (&e1 - &e2).norm());
            let orth = (e1.transpose() * &e1 - Mat::identity(7, 7)).norm();
            assert!(orth < 1e-13);
        }
    }

    #[test]
    fn spectrum_rejects_non_skew() {
        let a = gauss(3, 3, 9);
        assert!(matches!(SkewSpectrum::new(&a), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let x = full_q(&gauss(8, 3, 11)).columns(0, 3).into_owned();
        let c = complement(&x);
        assert_eq!(c.shape(), (8, 5));
        assert!((x.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - Mat::identity(5, 5)).norm() < 1e-14);
        assert_eq!(complement(&full_q(&gauss(4, 4, 1))).ncols(), 0);
    }

    #[test]
    fn thin_qr_has_nonnegative_diagonal() {
        let x = gauss(9, 3, 2);
        let (q, r) = thin_qr_nonneg(&x);
        assert!((&q * &r - &x).norm() < 1e-13);
        for k in 0..3 {
            assert!(r[(k, k)] >= 0.0);
        }
    }

    #[test]
    fn pivoted_least_squares_matches_svd_solution() {
        let j = gauss(12, 5, 3);
        let b = Vector::from_column_slice(gauss(12, 1, 4).as_slice());
        let ls = lstsq_pivoted(&j, &b, 1e-12);
        assert_eq!(ls.rank, 5);
        let svd_sol = j.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        assert!((ls.solution - svd_sol).norm() < 1e-12);
    }

    #[test]
    fn pivoted_least_squares_drops_dependent_columns() {
        let mut j = gauss(8, 4, 5);
        let c0 = j.column(0).into_owned();
        j.set_column(3, &(c0 * 2.0));
        let xs = Vector::from_vec(alloc::vec![1.0, -2.0, 0.5, 0.0]);
        let b = &j * &xs;
        let ls = lstsq_pivoted(&j, &b, 1e-12);
        assert_eq!(ls.rank, 3);
        assert!((&j * &ls.solution - b).norm() < 1e-12);
    }
}
