//! Derivatives of the matrix exponential.
//!
//! For skew `A` the Jacobian of `vec(exp(A))` is
//! `(exp(A^T/2) kron exp(A/2)) sinch(1/2 (A^T kron I - I kron A))`, whose
//! singular values are `|sinc((mu_i + mu_j)/2)|` over the eigenvalue phases
//! of `A`. General (non-skew) `A` is handled through `phi_1` of the
//! Kronecker sum.

use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, kron, mat_of, vec_of, Mat, SkewSpectrum, Vector};
use crate::manifold::{self, structured_matrix, TangentCoordinates};
use crate::perm::{blkvec, block_vec_map, perfect_shuffle, SkewBasis};

type CMat = DMatrix<Complex<f64>>;

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        libm::sin(x) / x
    }
}

/// `A = [[Omega, -K^T], [K, 0]]` built from tangent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredA {
    omega: Mat,
    k: Mat,
    full: Mat,
}

impl StructuredA {
    pub fn new(omega: Mat, k: Mat) -> Result<Self> {
        let p = omega.nrows();
        if !omega.is_square() || k.ncols() != p {
            return Err(invalid("Omega must be p x p and K must be (n-p) x p"));
        }
        let residual = (&omega + omega.transpose()).norm();
        if residual > 1e-12 * (1.0 + omega.norm()) {
            return Err(Error::NotSkew { residual });
        }
        let full = structured_matrix(&omega, &k);
        Ok(Self { omega, k, full })
    }

    pub fn from_packed(n: usize, p: usize, x: &Vector) -> Result<Self> {
        if p > n || x.len() != manifold::manifold_dim(n, p) {
            return Err(invalid("packed vector does not match St(n,p)"));
        }
        let (omega, k) = manifold::unpack(x, n, p);
        Self::new(omega, k)
    }

    pub fn n(&self) -> usize {
        self.full.nrows()
    }

    pub fn p(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &Mat {
        &self.omega
    }

    pub fn k(&self) -> &Mat {
        &self.k
    }

    pub fn matrix(&self) -> &Mat {
        &self.full
    }

    pub fn blkvec(&self) -> Vector {
        blkvec(&self.full, self.p())
    }
}

pub fn assemble_a(coords: &TangentCoordinates) -> Result<StructuredA> {
    StructuredA::new(coords.omega.clone(), coords.k.clone())
}

/// `d blkvec(A) / dx` with `x = (s, vec K)`: `[[B, 0], [0, I], [0, -Pi], [0, 0]]`.
pub fn jacobian_a_x(n: usize, p: usize) -> Result<Mat> {
    if p == 0 || p > n {
        return Err(invalid("jacobian_a_x needs 1 <= p <= n"));
    }
    let q = n - p;
    let b = SkewBasis::new(p);
    let ns = b.dim();
    let mut j = Mat::zeros(n * n, ns + q * p);
    j.view_mut((0, 0), (p * p, ns)).copy_from(b.matrix());
    j.view_mut((p * p, ns), (q * p, q * p)).fill_with_identity();
    let pi = perfect_shuffle(q, p).to_dense();
    j.view_mut((p * p + q * p, ns), (p * q, q * p)).copy_from(&(-pi));
    Ok(j)
}

/// `vec(A)` Jacobian `T J_A^x` in natural column-stacked order.
pub fn jacobian_vec_a_x(n: usize, p: usize) -> Result<Mat> {
    Ok(block_vec_map(n, p)?.apply_rows(&jacobian_a_x(n, p)?))
}

/// Fréchet derivative `L(A, E)` as the top-right block of
/// `exp([[A, E], [0, A]])`.
pub fn frechet_exp_oracle(a: &Mat, e: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || e.shape() != a.shape() {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            got: e.shape(),
        });
    }
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, n), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(e);
    let ex = linalg::expm(&big);
    Ok(ex.view((0, n), (n, n)).into_owned())
}

/// `exp(A)` together with `L(A, E)` from one block exponential.
pub(crate) fn exp_and_frechet(a: &Mat, e: &Mat) -> (Mat, Mat) {
    let n = a.nrows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, n), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(e);
    let ex = linalg::expm(&big);
    (
        ex.view((0, 0), (n, n)).into_owned(),
        ex.view((0, n), (n, n)).into_owned(),
    )
}

/// Imaginary residue above which the real part of the sinch matrix is
/// reported as suspicious.
pub const IMAG_RESIDUE_WARN: f64 = 1e-10;

/// `sinch(1/2 (A^T kron I - I kron A))` for skew `A`, together with the
/// Frobenius norm of the discarded imaginary part.
pub fn sinch_of_kronecker_sum(a: &Mat) -> Result<(Mat, f64)> {
    let spec = SkewSpectrum::new(a)?;
    Ok(sinch_from_spectrum(&spec))
}

fn sinch_from_spectrum(spec: &SkewSpectrum) -> (Mat, f64) {
    let n = spec.mu.len();
    let wr = kron(&spec.u_re, &spec.u_re) - kron(&spec.u_im, &spec.u_im);
    let wi = kron(&spec.u_re, &spec.u_im) + kron(&spec.u_im, &spec.u_re);
    let d = Vector::from_fn(n * n, |idx, _| {
        let (i, j) = (idx / n, idx % n);
        sinc(0.5 * (spec.mu[i] + spec.mu[j]))
    });
    let wr_d = linalg::scale_columns(&wr, &d);
    let wi_d = linalg::scale_columns(&wi, &d);
    let s = &wr_d * wr.transpose() + &wi_d * wi.transpose();
    // Im(W D W^*) = X - X^T with X = Wi D Wr^T
    let x = wi_d * wr.transpose();
    let residue = (&x - x.transpose()).norm();
    if residue > IMAG_RESIDUE_WARN {
        log::warn!("sinch matrix has imaginary residue {residue:e}");
    }
    (s, residue)
}

/// Structured `A` of a random tangent direction, rescaled to `|A|_2 = alpha`.
pub fn random_structured(n: usize, p: usize, alpha: f64, seed: u64) -> Result<StructuredA> {
    let x = manifold::random_point(n, p, seed)?;
    let xi = manifold::random_tangent(&x, 1.0, seed + 1)?;
    let c = manifold::decompose_tangent(&xi, &manifold::orthonormal_complement(&x))?;
    let a = assemble_a(&c)?;
    let s = alpha / SkewSpectrum::new(a.matrix())?.spectral_norm();
    StructuredA::new(a.omega() * s, a.k() * s)
}

/// Jacobian of `vec(exp(A))` with the spectral norm of `A`.
#[derive(Debug, Clone)]
pub struct FrechetJacobian {
    pub matrix: Mat,
    pub alpha: f64,
    pub imag_residue: f64,
}

pub fn jacobian_exp(a: &StructuredA) -> Result<FrechetJacobian> {
    jacobian_exp_skew(a.matrix())
}

/// Dense `n^2 x n^2` Jacobian of the exponential at a skew matrix.
pub fn jacobian_exp_skew(a: &Mat) -> Result<FrechetJacobian> {
    let spec = SkewSpectrum::new(a)?;
    let (s, imag_residue) = sinch_from_spectrum(&spec);
    let half = spec.exp(0.5);
    let k = kron(&half.transpose(), &half);
    Ok(FrechetJacobian {
        matrix: k * s,
        alpha: spec.spectral_norm(),
        imag_residue,
    })
}

/// `(exp(A^T) kron I) phi_1(I kron A - A^T kron I)`, valid for any square `A`.
pub fn jacobian_exp_general(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            got: a.shape(),
        });
    }
    let id = Mat::identity(n, n);
    let x = kron(&id, a) - kron(&a.transpose(), &id);
    let m = n * n;
    let mut big = Mat::zeros(2 * m, 2 * m);
    big.view_mut((0, 0), (m, m)).copy_from(&x);
    big.view_mut((0, m), (m, m)).fill_with_identity();
    let phi1 = linalg::expm(&big).view((0, m), (m, m)).into_owned();
    let ea = linalg::expm(a);
    Ok(kron(&ea.transpose(), &id) * phi1)
}

/// Predicted extreme singular values `(1, |sinc alpha|)` of the Jacobian,
/// exact for `alpha <= pi`.
pub fn singular_bounds(a: &StructuredA) -> Result<(f64, f64)> {
    let alpha = SkewSpectrum::new(a.matrix())?.spectral_norm();
    Ok((1.0, sinc(alpha).abs()))
}

/// The Jacobian of the exponential at a fixed skew `A` as an operator,
/// applied to one direction in `O(n^3)`:
/// `L(A, E) = e^{A/2} Re(U [(U^* E conj(U)) o Phi] U^T) e^{A/2}` with
/// `Phi_rc = sinc((mu_r + mu_c)/2)`.
#[derive(Debug, Clone)]
pub struct ExpDerivative {
    u: CMat,
    phi: Mat,
    half: Mat,
    exp: Mat,
    alpha: f64,
}

impl ExpDerivative {
    pub fn new(a: &Mat) -> Result<Self> {
        let spec = SkewSpectrum::new(a)?;
        let n = spec.mu.len();
        let u = CMat::from_fn(n, n, |i, j| Complex::new(spec.u_re[(i, j)], spec.u_im[(i, j)]));
        let phi = Mat::from_fn(n, n, |r, c| sinc(0.5 * (spec.mu[r] + spec.mu[c])));
        let half = spec.exp(0.5);
        let exp = &half * &half;
        Ok(Self {
            u,
            phi,
            half,
            exp,
            alpha: spec.spectral_norm(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `exp(A)`.
    pub fn exp(&self) -> &Mat {
        &self.exp
    }

    pub fn apply(&self, e: &Mat) -> Mat {
        let ec = e.map(|v| Complex::new(v, 0.0));
        let mut y = self.u.adjoint() * ec * self.u.map(|z| z.conj());
        for (v, w) in y.iter_mut().zip(self.phi.iter()) {
            *v *= *w;
        }
        let s = (&self.u * y * self.u.transpose()).map(|z| z.re);
        &self.half * s * &self.half
    }

    /// `U^T e^{A/2}[:, :ncols]`, the right factor reused by
    /// [`apply_elementary`](Self::apply_elementary).
    pub fn half_weights(&self, ncols: usize) -> CMat {
        let h = self.half.columns(0, ncols).map(|v| Complex::new(v, 0.0));
        self.u.transpose() * h
    }

    /// First columns of `L(A, e_r e_c^T - e_c e_r^T)` in `O(n^2 ncols)`,
    /// with `w` from [`half_weights`](Self::half_weights).
    pub fn apply_elementary(&self, r: usize, c: usize, w: &CMat) -> Mat {
        let n = self.exp.nrows();
        let ur = self.u.row(r).map(|z| z.conj());
        let uc = self.u.row(c).map(|z| z.conj());
        let y = CMat::from_fn(n, n, |a, b| {
            (ur[a] * uc[b] - uc[a] * ur[b]) * Complex::new(self.phi[(a, b)], 0.0)
        });
        let s = (&self.u * (y * w)).map(|z| z.re);
        &self.half * s
    }

    /// Columns `vec(L(A, E_c))` for the directions `vec(E_c)` in `dirs`.
    pub fn apply_columns(&self, dirs: &Mat) -> Mat {
        let n = self.exp.nrows();
        let mut out = Mat::zeros(n * n, dirs.ncols());
        for c in 0..dirs.ncols() {
            let e = mat_of(dirs.column(c).as_slice(), n, n);
            out.column_mut(c).copy_from(&vec_of(&self.apply(&e)));
        }
        out
    }
}

/// Sorted singular values of a dense Jacobian, largest first.
pub fn jacobian_singular_values(j: &Mat) -> Vec<f64> {
    linalg::singular_values(j)
}
