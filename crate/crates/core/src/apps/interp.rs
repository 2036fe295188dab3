//! Interpolation of a parametrized family of orthonormal bases in the
//! tangent space at a reference basis: log every node, interpolate the
//! packed coordinates entrywise, map back with the exponential.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::leapfrog::LogBackend;
use crate::linalg::{Mat, Vector};
use crate::manifold::{
    assemble_tangent, decompose_tangent, orthonormal_complement, stiefel_exp, StiefelPoint, TangentCoordinates,
    TangentVector,
};

#[derive(Debug, Clone)]
pub struct BasisFamily {
    bases: Vec<StiefelPoint>,
    params: Vec<f64>,
    reference: usize,
}

impl BasisFamily {
    pub fn new(bases: Vec<StiefelPoint>, params: Vec<f64>, reference: usize) -> Result<Self> {
        if bases.len() < 2 || bases.len() != params.len() {
            return Err(invalid("a basis family needs at least two bases, one parameter each"));
        }
        if reference >= bases.len() {
            return Err(invalid("reference index out of range"));
        }
        if params.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("parameters must be strictly increasing"));
        }
        let shape = bases[0].matrix().shape();
        if let Some(b) = bases.iter().find(|b| b.matrix().shape() != shape) {
            return Err(Error::DimensionMismatch {
                expected: shape,
                got: b.matrix().shape(),
            });
        }
        Ok(Self {
            bases,
            params,
            reference,
        })
    }

    pub fn bases(&self) -> &[StiefelPoint] {
        &self.bases
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpMethod {
    #[default]
    Linear,
    /// Natural cubic spline.
    CubicSpline,
    /// Monotone piecewise cubic Hermite (Fritsch-Carlson).
    Pchip,
}

/// Per-coordinate interpolation data, columns indexed by node.
#[derive(Debug, Clone)]
pub struct TangentInterpolator {
    base: StiefelPoint,
    complement: Mat,
    params: Vec<f64>,
    /// `coords[(r, i)]` is coordinate `r` of `Log_ref(V_i)`.
    coords: Mat,
    /// Natural-spline second derivatives.
    second: Mat,
    /// PCHIP node slopes.
    slopes: Mat,
}

impl TangentInterpolator {
    pub fn new(fam: &BasisFamily, backend: &LogBackend) -> Result<Self> {
        let base = fam.bases[fam.reference].clone();
        let complement = orthonormal_complement(&base);
        let k = fam.len();
        let mut cols = Vec::with_capacity(k);
        for (i, v) in fam.bases.iter().enumerate() {
            let xi = if i == fam.reference {
                TangentVector::zero(&base)
            } else {
                backend.log(&base, v).map_err(|e| Error::LogFailed {
                    from: fam.reference,
                    to: i,
                    reason: format!("{e}"),
                })?
            };
            cols.push(decompose_tangent(&xi, &complement)?.packed);
        }
        let coords = Mat::from_columns(&cols);
        let p = &fam.params;
        let second = Mat::from_fn(coords.nrows(), k, |_, _| 0.0);
        let slopes = second.clone();
        let mut out = Self {
            base,
            complement,
            params: p.clone(),
            coords,
            second,
            slopes,
        };
        for r in 0..out.coords.nrows() {
            let y: Vec<f64> = out.coords.row(r).iter().copied().collect();
            let m2 = natural_second_derivatives(p, &y);
            let d = pchip_slopes(p, &y);
            for i in 0..k {
                out.second[(r, i)] = m2[i];
                out.slopes[(r, i)] = d[i];
            }
        }
        Ok(out)
    }

    pub fn reference(&self) -> &StiefelPoint {
        &self.base
    }

    /// Interpolated packed tangent coordinates at `t`.
    pub fn coordinates(&self, t: f64, method: InterpMethod) -> Result<Vector> {
        let p = &self.params;
        let (lo, hi) = (p[0], p[p.len() - 1]);
        if !(t >= lo && t <= hi) {
            return Err(invalid(format!("parameter {t} is outside [{lo}, {hi}]; extrapolation is not supported")));
        }
        // interval [p_i, p_{i+1}] containing t
        let i = p.partition_point(|&q| q <= t).saturating_sub(1).min(p.len() - 2);
        let h = p[i + 1] - p[i];
        let s = (t - p[i]) / h;
        let y = |r: usize, j: usize| self.coords[(r, j)];
        Ok(Vector::from_fn(self.coords.nrows(), |r, _| {
            if s == 0.0 {
                return y(r, i);
            }
            if s == 1.0 {
                return y(r, i + 1);
            }
            match method {
                InterpMethod::Linear => (1.0 - s) * y(r, i) + s * y(r, i + 1),
                InterpMethod::CubicSpline => {
                    let (m0, m1) = (self.second[(r, i)], self.second[(r, i + 1)]);
                    (1.0 - s) * y(r, i)
                        + s * y(r, i + 1)
                        + h * h / 6.0 * ((cube(1.0 - s) - (1.0 - s)) * m0 + (cube(s) - s) * m1)
                }
                InterpMethod::Pchip => {
                    let (d0, d1) = (self.slopes[(r, i)], self.slopes[(r, i + 1)]);
                    let (s2, s3) = (s * s, s * s * s);
                    (2.0 * s3 - 3.0 * s2 + 1.0) * y(r, i)
                        + (s3 - 2.0 * s2 + s) * h * d0
                        + (-2.0 * s3 + 3.0 * s2) * y(r, i + 1)
                        + (s3 - s2) * h * d1
                }
            }
        }))
    }

    pub fn eval(&self, t: f64, method: InterpMethod) -> Result<StiefelPoint> {
        let x = self.coordinates(t, method)?;
        let coords = TangentCoordinates::from_packed(&self.base, self.complement.clone(), x)?;
        let xi = assemble_tangent(&coords)?;
        Ok(stiefel_exp(&self.base, &xi, 1.0)?.point)
    }
}

pub fn tangent_interpolate(
    fam: &BasisFamily,
    t: f64,
    method: InterpMethod,
    backend: &LogBackend,
) -> Result<StiefelPoint> {
    TangentInterpolator::new(fam, backend)?.eval(t, method)
}

fn cube(v: f64) -> f64 {
    v * v * v
}

/// Second derivatives of the natural cubic spline through `(x_i, y_i)`.
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = alloc::vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut diag = alloc::vec![0.0; n];
    let mut rhs = alloc::vec![0.0; n];
    let mut upper = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let lower = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        if i > 1 {
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
        m[i] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

/// Fritsch-Carlson slopes: weighted harmonic means of neighbouring secants,
/// zero at local extrema, one-sided three-point formula at the ends.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return alloc::vec![del[0], del[0]];
    }
    let mut d = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{random_point, random_tangent};

    fn family(k: usize, curved: bool) -> (BasisFamily, impl Fn(f64) -> StiefelPoint) {
        let v0 = random_point(9, 3, 5).unwrap();
        let e1 = random_tangent(&v0, 0.8, 6).unwrap();
        let e2 = random_tangent(&v0, if curved { 0.5 } else { 0.0 }, 7).unwrap();
        let truth = move |t: f64| {
            let xi = TangentVector::new(&v0, e1.matrix() * t + e2.matrix() * (t * t)).unwrap();
            stiefel_exp(&v0, &xi, 1.0).unwrap().point
        };
        let params: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        let bases = params.iter().map(|&t| truth(t)).collect();
        (BasisFamily::new(bases, params, 0).unwrap(), truth)
    }

    #[test]
    fn spline_helpers_reproduce_polynomials() {
        let x = [0.0, 0.3, 0.5, 1.1, 1.4];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t - 1.0).collect();
        assert!(natural_second_derivatives(&x, &y).iter().all(|m| m.abs() < 1e-13));
        assert!(pchip_slopes(&x, &y).iter().all(|d| (d - 2.0).abs() < 1e-13));
    }

    #[test]
    fn nodes_are_reproduced() {
        let (fam, _) = family(5, true);
        let it = TangentInterpolator::new(&fam, &LogBackend::default()).unwrap();
        for m in [InterpMethod::Linear, InterpMethod::CubicSpline, InterpMethod::Pchip] {
            for (t, v) in fam.params().iter().zip(fam.bases()) {
                assert!((it.eval(*t, m).unwrap().matrix() - v.matrix()).norm() < 1e-10);
            }
        }
        assert!(it.eval(1.01, InterpMethod::Linear).is_err());
        assert!(it.eval(-0.01, InterpMethod::Pchip).is_err());
    }

    #[test]
    fn straight_family_is_exact_for_linear() {
        let (fam, truth) = family(3, false);
        let v = tangent_interpolate(&fam, 0.37, InterpMethod::Linear, &LogBackend::default()).unwrap();
        assert!((v.matrix() - truth(0.37).matrix()).norm() < 1e-9);
    }

    #[test]
    fn linear_error_is_second_order() {
        let err = |k: usize| {
            let (fam, truth) = family(k, true);
            let it = TangentInterpolator::new(&fam, &LogBackend::default()).unwrap();
            (0..40)
                .map(|j| {
                    let t = (j as f64 + 0.5) / 40.0;
                    (it.eval(t, InterpMethod::Linear).unwrap().matrix() - truth(t).matrix()).norm()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(5) / err(9);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
}
