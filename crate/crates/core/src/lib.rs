//! Numerical engine for studying curvature structure on complete Riemannian
//! 3-manifolds represented as multi-chart atlases.
//!
//! The crate provides, at desk scale:
//!
//! * pointwise metric/connection/curvature evaluation on charts
//!   ([`metric`], [`charts`]),
//! * pointwise spectral analysis of the curvature operator: flat-plane
//!   kernels, signedness, isotropic/nonisotropic classification
//!   ([`pointwise`]),
//! * geodesic flow with chart handoff, parallel transport, Jacobi evolution
//!   and geodesic-rank estimation ([`flows`]),
//! * transported adapted frames and their structure identities ([`frames`]),
//! * atlas construction by gluing product pieces along flat tori/planes
//!   ([`atlas`], [`profile`]),
//! * line fields, shape operators, holonomy and splitting detection
//!   ([`global`]),
//! * a small zoo of reference manifolds with known closed-form behaviour
//!   ([`zoo`]) and a check-suite runner with deterministic reports
//!   ([`report`]).
//!
//! Scans over sample sets run data-parallel via rayon when the `parallel`
//! feature (default) is enabled and fall back to sequential iteration
//! otherwise; results are merged in index order either way, so reports are
//! byte-identical across thread counts.

pub mod atlas;
pub mod chart;
pub mod charts;
pub mod flows;
pub mod frames;
pub mod config;
pub mod global;
pub mod par;
pub mod report;
pub mod zoo;
pub mod linalg;
pub mod metric;
pub mod pointwise;
pub mod profile;
pub mod sample;
pub mod tol;

pub use chart::{ChartMetric, DomainBox};
pub use metric::{Christoffel, CurvatureData};
