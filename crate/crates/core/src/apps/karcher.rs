//! Riemannian center of mass by the unit-step Karcher flow
//! `mu <- Exp_mu(mean_i Log_mu(q_i))`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::leapfrog::LogBackend;
use crate::linalg::{self, Mat};
use crate::manifold::{stiefel_exp, StiefelPoint, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarcherConfig {
    /// Stop once the canonical norm of the mean log is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub backend: LogBackend,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            backend: LogBackend::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KarcherReport {
    pub mean: StiefelPoint,
    /// Number of gradient evaluations, so identical inputs report 1.
    pub iterations: usize,
    /// Canonical norm of `(1/N) sum Log_mu(q_i)` at `mean`.
    pub gradient_norm: f64,
    pub gradient_history: Vec<f64>,
}

/// Starting point: polar factor of the arithmetic mean, which does not
/// depend on the order of the inputs. Falls back to the first point when
/// the mean is rank deficient (e.g. antipodal data).
fn initial_mean(points: &[StiefelPoint]) -> Result<StiefelPoint> {
    let (n, p) = points[0].matrix().shape();
    let mut sum = Mat::zeros(n, p);
    for q in points {
        sum += q.matrix();
    }
    match linalg::polar(&sum) {
        Ok(m) => StiefelPoint::new(m),
        Err(_) => {
            log::warn!("arithmetic mean is rank deficient; starting from the first point");
            Ok(points[0].clone())
        }
    }
}

fn mean_log(mu: &StiefelPoint, points: &[StiefelPoint], backend: &LogBackend, iteration: usize) -> Result<TangentVector> {
    let mut acc = Mat::zeros(mu.n(), mu.p());
    for (i, q) in points.iter().enumerate() {
        let xi = backend.log(mu, q).map_err(|e| Error::MeanLogFailed {
            iteration,
            point: i,
            reason: format!("{e}"),
        })?;
        acc += xi.matrix();
    }
    acc /= points.len() as f64;
    TangentVector::new(mu, acc)
}

pub fn karcher_mean(points: &[StiefelPoint], cfg: &KarcherConfig) -> Result<KarcherReport> {
    if points.is_empty() {
        return Err(invalid("Karcher mean of an empty set"));
    }
    if !(cfg.tol > 0.0) {
        return Err(invalid("Karcher tolerance must be positive"));
    }
    let shape = points[0].matrix().shape();
    if let Some(q) = points.iter().find(|q| q.matrix().shape() != shape) {
        return Err(Error::DimensionMismatch {
            expected: shape,
            got: q.matrix().shape(),
        });
    }
    let mut mu = initial_mean(points)?;
    let mut history = Vec::new();
    for it in 0..cfg.max_iter {
        let g = mean_log(&mu, points, &cfg.backend, it)?;
        let gn = g.canonical_norm();
        history.push(gn);
        if gn <= cfg.tol {
            return Ok(KarcherReport {
                mean: mu,
                iterations: it + 1,
                gradient_norm: gn,
                gradient_history: history,
            });
        }
        mu = stiefel_exp(&mu, &g, 1.0)?.point;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leapfrog::midpoint;
    use crate::manifold::{geodesic_instance, random_point, random_tangent};

    #[test]
    fn identical_points_in_one_iteration() {
        let q = random_point(6, 2, 3).unwrap();
        let r = karcher_mean(&[q.clone(), q.clone(), q.clone()], &KarcherConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.mean.matrix() - q.matrix()).norm() < 1e-12);
    }

    #[test]
    fn two_points_give_the_midpoint() {
        let (x, y, _) = geodesic_instance(7, 2, 1.2, 11).unwrap();
        let cfg = KarcherConfig::default();
        let r = karcher_mean(&[x.clone(), y.clone()], &cfg).unwrap();
        let mid = midpoint(&x, &y, &cfg.backend).unwrap();
        assert!((r.mean.matrix() - mid.matrix()).norm() < 1e-8);
    }

    #[test]
    fn order_does_not_matter() {
        let c = random_point(8, 3, 1).unwrap();
        let pts: Vec<_> = (0..4)
            .map(|s| stiefel_exp(&c, &random_tangent(&c, 0.6, 20 + s).unwrap(), 1.0).unwrap().point)
            .collect();
        let cfg = KarcherConfig::default();
        let a = karcher_mean(&pts, &cfg).unwrap();
        let rev: Vec<_> = pts.iter().rev().cloned().collect();
        let b = karcher_mean(&rev, &cfg).unwrap();
        assert!(a.gradient_norm <= 1e-8);
        assert!((a.mean.matrix() - b.mean.matrix()).norm() < 1e-10);
    }

    #[test]
    fn rejects_empty_and_mixed_shapes() {
        let cfg = KarcherConfig::default();
        assert!(karcher_mean(&[], &cfg).is_err());
        let a = random_point(5, 2, 0).unwrap();
        let b = random_point(5, 1, 0).unwrap();
        assert!(matches!(karcher_mean(&[a, b], &cfg), Err(Error::DimensionMismatch { .. })));
    }
}
