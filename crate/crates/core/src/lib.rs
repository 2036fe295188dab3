//! Riemannian logarithm and distance on the compact Stiefel manifold
//! `St(n,p) = { X in R^{n x p} : X^T X = I }` under the canonical metric.
//!
//! The logarithm is computed by Newton shooting on the geodesic endpoint
//! map, either in one shot ([`single`]) or over a broken geodesic
//! ([`multiple`]) initialized by leapfrogging ([`leapfrog`]).

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod apps;
pub mod error;
pub mod frechet;
pub mod leapfrog;
pub mod linalg;
pub mod manifold;
pub mod multiple;
pub mod perm;
pub mod single;

pub use error::{Error, Result};
pub use leapfrog::{lfms, LfmsConfig, LfmsPath, LfmsReport, LogBackend};
pub use linalg::{Mat, Vector};
pub use manifold::{
    canonical_inner, canonical_norm, decompose_tangent, assemble_tangent, embedded_norm,
    geodesic_ode_residual, orthonormal_complement, project_normal, project_tangent, random_point,
    random_tangent, stiefel_exp, GeodesicSample, StiefelPoint, TangentCoordinates, TangentVector,
};
pub use multiple::{multiple_shoot, BrokenGeodesic, MsConfig, MsReport};
pub use single::{stiefel_log, Formulation, ShootingConfig, ShootingReport, StopReason};
