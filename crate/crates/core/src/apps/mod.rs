//! Applications built on the logarithm: Karcher means, half-density
//! statistics, planar shape geodesics and tangent-space interpolation of
//! orthonormal bases.

pub mod halfdensity;
pub mod interp;
pub mod karcher;
pub mod shape;

pub use halfdensity::{halfdensity_to_pdf, pdf_to_halfdensity, trapezoid, Density, HalfDensity};
pub use interp::{tangent_interpolate, BasisFamily, InterpMethod, TangentInterpolator};
pub use karcher::{karcher_mean, KarcherConfig, KarcherReport};
pub use shape::{affine_standardize, procrustes_residual, shape_geodesic, PointSet2D};
