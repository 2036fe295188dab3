//! Planar point sets in the affine pre-shape space: centered, with
//! `X^T X = I`, so standardized shapes are points of St(n,2).

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::error::{invalid, Error, Result};
use crate::leapfrog::LogBackend;
use crate::linalg::{self, Mat};
use crate::manifold::{feasibility_residual, stiefel_exp, StiefelPoint};

pub const CENTROID_TOL: f64 = 1e-12;
pub const COVARIANCE_TOL: f64 = 1e-10;

/// `n` landmarks in the plane, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet2D {
    points: Mat,
    standardized: bool,
}

impl PointSet2D {
    pub fn new(points: Mat) -> Result<Self> {
        if points.ncols() != 2 {
            return Err(Error::DimensionMismatch {
                expected: (points.nrows(), 2),
                got: points.shape(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let standardized = in_preshape(&points);
        Ok(Self { points, standardized })
    }

    pub fn points(&self) -> &Mat {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// The standardized shape as a Stiefel point.
    pub fn to_stiefel(&self) -> Result<StiefelPoint> {
        if !self.standardized {
            return Err(invalid("point set is not standardized"));
        }
        StiefelPoint::with_tolerance(self.points.clone(), COVARIANCE_TOL)
    }
}

fn centroid(x: &Mat) -> [f64; 2] {
    let n = x.nrows().max(1) as f64;
    [x.column(0).sum() / n, x.column(1).sum() / n]
}

fn in_preshape(x: &Mat) -> bool {
    let c = centroid(x);
    x.nrows() >= 3 && c[0].abs().max(c[1].abs()) <= CENTROID_TOL && feasibility_residual(x) <= COVARIANCE_TOL
}

/// Centers the landmarks and whitens them by `(X_0^T X_0)^{-1/2}`.
pub fn affine_standardize(ps: &PointSet2D) -> Result<PointSet2D> {
    let x = ps.points();
    if x.nrows() < 3 {
        return Err(invalid("standardization needs at least three points"));
    }
    let c = centroid(x);
    let x0 = Mat::from_fn(x.nrows(), 2, |i, j| x[(i, j)] - c[j]);
    let eig = SymmetricEigen::new(x0.transpose() * &x0);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmin > 1e-12 * lmax) {
        return Err(invalid("collinear or coincident points cannot be standardized"));
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / libm::sqrt(l)));
    let inv_sqrt = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let mut out = x0 * inv_sqrt;
    // one Newton-Schulz pass removes the eigensolver's rounding from X^T X
    let gram = out.transpose() * &out;
    out = &out * (Mat::identity(2, 2) * 1.5 - gram * 0.5);
    PointSet2D::new(out)
}

/// `min_R |a - b R|_F` over orthogonal `2 x 2` (or any `p x p`) `R`.
pub fn procrustes_residual(a: &Mat, b: &Mat) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.shape(),
            got: b.shape(),
        });
    }
    let svd = (b.transpose() * a).svd(true, true);
    let r = svd.u.ok_or_else(|| Error::Numeric("SVD without U".into()))?
        * svd.v_t.ok_or_else(|| Error::Numeric("SVD without V".into()))?;
    Ok((a - b * r).norm())
}

/// `k` shapes at `t = j/(k+1)`, `j = 1..k`, on the geodesic from `x0` to `x1`.
pub fn shape_geodesic(x0: &PointSet2D, x1: &PointSet2D, k: usize, backend: &LogBackend) -> Result<Vec<PointSet2D>> {
    let y0 = x0.to_stiefel()?;
    let y1 = x1.to_stiefel()?;
    if y0.matrix().shape() != y1.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: y0.matrix().shape(),
            got: y1.matrix().shape(),
        });
    }
    let xi = backend.log(&y0, &y1)?;
    (1..=k)
        .map(|j| {
            let t = j as f64 / (k + 1) as f64;
            let pt = stiefel_exp(&y0, &xi, t)?.point;
            // geodesics between centered shapes stay centered; clear rounding
            let c = centroid(pt.matrix());
            let m = Mat::from_fn(pt.n(), 2, |i, jj| pt.matrix()[(i, jj)] - c[jj]);
            PointSet2D::new(linalg::polar(&m)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leapfrog::distance;

    fn polygon(n: usize, stretch: f64, phase: f64) -> PointSet2D {
        let m = Mat::from_fn(n, 2, |i, j| {
            let a = phase + 2.0 * core::f64::consts::PI * i as f64 / n as f64;
            let r = 1.0 + 0.3 * libm::cos(3.0 * a);
            if j == 0 {
                stretch * r * libm::cos(a)
            } else {
                r * libm::sin(a)
            }
        });
        PointSet2D::new(m).unwrap()
    }

    #[test]
    fn standardize_square() {
        let sq = PointSet2D::new(Mat::from_row_slice(4, 2, &[0., 0., 1., 0., 1., 1., 0., 1.])).unwrap();
        let s = affine_standardize(&sq).unwrap();
        assert!(s.is_standardized());
        assert!(feasibility_residual(s.points()) < 1e-14);
        // idempotent
        let s2 = affine_standardize(&s).unwrap();
        assert!((s2.points() - s.points()).norm() < 1e-12);
    }

    #[test]
    fn affine_orbit_invariance() {
        let base = polygon(12, 1.0, 0.1);
        let a = Mat::from_row_slice(2, 2, &[1.7, 0.4, -0.9, 0.6]);
        let moved = Mat::from_fn(12, 2, |i, j| (base.points().row(i) * &a)[j] + [3.0, -1.5][j]);
        let s0 = affine_standardize(&base).unwrap();
        let s1 = affine_standardize(&PointSet2D::new(moved).unwrap()).unwrap();
        assert!(procrustes_residual(s0.points(), s1.points()).unwrap() < 1e-9);
    }

    #[test]
    fn collinear_is_rejected() {
        let line = PointSet2D::new(Mat::from_row_slice(3, 2, &[0., 0., 1., 1., 2., 2.])).unwrap();
        assert!(affine_standardize(&line).is_err());
    }

    #[test]
    fn midpoint_is_equidistant() {
        let b = LogBackend::default();
        let s0 = affine_standardize(&polygon(10, 1.0, 0.0)).unwrap();
        let s1 = affine_standardize(&polygon(10, 1.0, 0.35)).unwrap();
        let mid = shape_geodesic(&s0, &s1, 1, &b).unwrap().remove(0);
        assert!(mid.is_standardized());
        let (y0, ym, y1) = (s0.to_stiefel().unwrap(), mid.to_stiefel().unwrap(), s1.to_stiefel().unwrap());
        let d0 = distance(&y0, &ym, &b).unwrap();
        let d1 = distance(&ym, &y1, &b).unwrap();
        assert!((d0 - d1).abs() < 1e-8);
        let same = shape_geodesic(&s0, &s0, 3, &b).unwrap();
        assert!(same.iter().all(|s| (s.points() - s0.points()).norm() < 1e-12));
    }
}
