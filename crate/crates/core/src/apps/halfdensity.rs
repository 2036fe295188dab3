//! Densities on a uniform grid as points of the unit sphere St(m,1) via
//! the half-density `q = sqrt(g)`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::Mat;
use crate::manifold::StiefelPoint;

/// Tolerance on the trapezoid integral before an input is rescaled.
pub const INTEGRAL_TOL: f64 = 1e-3;

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        m => h * (values[1..m - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[m - 1])),
    }
}

#[derive(Debug, Clone)]
pub struct HalfDensity {
    pub point: StiefelPoint,
    /// Trapezoid integral of the input samples.
    pub integral: f64,
    /// Set when the input integral was off by more than `INTEGRAL_TOL`.
    pub rescaled: bool,
}

fn check_grid(m: usize, h: f64) -> Result<()> {
    if m < 2 {
        return Err(invalid("a density needs at least two samples"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("grid spacing must be positive"));
    }
    Ok(())
}

/// Unit vector proportional to `sqrt(g)`.
pub fn pdf_to_halfdensity(samples: &[f64], h: f64) -> Result<HalfDensity> {
    check_grid(samples.len(), h)?;
    if let Some(i) = samples.iter().position(|&g| !(g >= 0.0) || !g.is_finite()) {
        return Err(invalid(alloc::format!("density sample {i} is negative or not finite")));
    }
    let integral = trapezoid(samples, h);
    if !(integral > 0.0) {
        return Err(invalid("density integrates to zero"));
    }
    let rescaled = (integral - 1.0).abs() > INTEGRAL_TOL;
    if rescaled {
        log::warn!("density integrates to {integral}; rescaling to 1");
    }
    let mut q = Mat::from_iterator(samples.len(), 1, samples.iter().map(|&g| libm::sqrt(g)));
    let norm = q.norm();
    q /= norm;
    Ok(HalfDensity {
        point: StiefelPoint::new(q)?,
        integral,
        rescaled,
    })
}

#[derive(Debug, Clone)]
pub struct Density {
    pub values: Vec<f64>,
    /// Share of the squared norm carried by negative entries, which are
    /// clamped to zero before squaring.
    pub clamped_mass: f64,
}

/// Density with unit trapezoid integral whose half-density is `q`.
pub fn halfdensity_to_pdf(q: &StiefelPoint, h: f64) -> Result<Density> {
    if q.p() != 1 {
        return Err(invalid("half-densities live on St(m,1)"));
    }
    check_grid(q.n(), h)?;
    let col = q.matrix().column(0);
    let total = col.norm_squared();
    let clamped: f64 = col.iter().filter(|&&v| v < 0.0).map(|v| v * v).sum();
    let mut values: Vec<f64> = col.iter().map(|&v| v.max(0.0) * v.max(0.0)).collect();
    let integral = trapezoid(&values, h);
    if !(integral > 0.0) {
        return Err(invalid("half-density has no nonnegative mass"));
    }
    for v in &mut values {
        *v /= integral;
    }
    Ok(Density {
        values,
        clamped_mass: clamped / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bumps(m: usize) -> (Vec<f64>, f64) {
        let h = 1.0 / (m - 1) as f64;
        let raw: Vec<f64> = (0..m)
            .map(|i| {
                let t = i as f64 * h;
                libm::exp(-((t - 0.3) / 0.07).powi(2)) + 0.5 * libm::exp(-((t - 0.7) / 0.1).powi(2))
            })
            .collect();
        let z = trapezoid(&raw, h);
        (raw.iter().map(|g| g / z).collect(), h)
    }

    #[test]
    fn uniform_density_is_constant() {
        let m = 100;
        let q = pdf_to_halfdensity(&vec![1.0; m], 1.0 / 99.0).unwrap();
        assert!(!q.rescaled);
        let c = 1.0 / libm::sqrt(m as f64);
        assert!(q.point.matrix().iter().all(|v| (v - c).abs() < 1e-14));
    }

    #[test]
    fn spike_concentrates() {
        let mut g = vec![0.0; 50];
        g[17] = 49.0;
        let q = pdf_to_halfdensity(&g, 1.0 / 49.0).unwrap();
        assert!((q.point.matrix()[(17, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let (g, h) = bumps(120);
        let q = pdf_to_halfdensity(&g, h).unwrap();
        assert!((q.point.matrix().norm() - 1.0).abs() < 1e-12);
        let back = halfdensity_to_pdf(&q.point, h).unwrap();
        assert_eq!(back.clamped_mass, 0.0);
        let err = g.iter().zip(&back.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn rescales_and_rejects() {
        let (g, h) = bumps(60);
        let doubled: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        assert!(pdf_to_halfdensity(&doubled, h).unwrap().rescaled);
        let mut bad = g.clone();
        bad[3] = -1e-9;
        assert!(pdf_to_halfdensity(&bad, h).is_err());
    }

    #[test]
    fn clamps_negative_entries() {
        let q = StiefelPoint::new(Mat::from_column_slice(4, 1, &[0.6, -0.6, 0.52915026221291817, 0.0])).unwrap();
        let d = halfdensity_to_pdf(&q, 1.0).unwrap();
        assert!((d.clamped_mass - 0.36).abs() < 1e-12);
        assert_eq!(d.values[1], 0.0);
    }
}
