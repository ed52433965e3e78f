//! Central tolerance ladder and finite-difference step policy.
//!
//! All thresholds used by checks live here so that tests and the CLI agree
//! on one set of numbers. Kernel/spectral thresholds are *scale-aware*: they
//! are always applied relative to `1 + operator_norm`, never as bare
//! absolutes, so charts with large curvature magnitudes are not punished.

/// Metric eigenvalues at or below this are treated as "not positive
/// definite" (a broken chart definition, not a numerical accident).
pub const SPD_TOL: f64 = 1e-10;

/// Allowed deviation of unit vectors / orthonormal frames from exact
/// normalisation after transport or Gram–Schmidt.
pub const UNIT_TOL: f64 = 1e-8;

/// Default relative threshold for curvature-level residuals
/// (flat-plane kernels, signedness margins, scan verdicts).
pub const CURV_TOL: f64 = 1e-6;

/// Gram-determinant threshold below which a 2-plane is treated as
/// degenerate and sectional curvature is refused.
pub const PLANE_TOL: f64 = 1e-10;

/// Frobenius tolerance for projector sanity (symmetry, idempotency, trace).
pub const PROJ_TOL: f64 = 1e-8;

/// Roundtrip / isometry tolerance for chart transition maps.
pub const TRANS_TOL: f64 = 1e-9;

/// Angle tolerance (radians) for line comparisons that should agree
/// "on the nose" (rank witness vs. flat-plane kernel, factor directions).
pub const ANGLE_TOL: f64 = 1e-4;

/// Residual threshold for frame-level identity checks (Christoffel table,
/// adapted-frame parallelism).
pub const FRAME_TOL: f64 = 1e-4;

/// Relative spread below which an eigenvalue gap is called ambiguous:
/// values in `(tol/AMBIG_BAND, tol*AMBIG_BAND)` straddle the decision
/// threshold and the point is excluded from scan statistics (but counted).
pub const AMBIG_BAND: f64 = 4.0;

/// Integrator tolerance used by verification runs.
pub const ODE_TOL: f64 = 1e-10;

/// Singular-value threshold (relative to `1 + max |M|`) under which a
/// stacked along-geodesic curvature constraint is called rank-deficient.
/// Sits well above transport drift (~1e-9) and well below genuine
/// curvature magnitudes at desk scale (~1e-1).
pub const RANK_TOL: f64 = 1e-5;

/// Bisection tolerance (in flow time) for localising interface crossings.
pub const EVENT_TOL: f64 = 1e-10;

/// Finite-difference step for first derivatives of the metric
/// (Christoffel assembly), relative to the chart domain diagonal.
pub const FD_METRIC_STEP_REL: f64 = 1e-4;

/// Finite-difference step for differentiating Christoffel symbols
/// (curvature assembly), relative to the chart domain diagonal.
///
/// Kept deliberately smaller than a naive truncation-only optimum: the
/// Richardson-extrapolated stencil is fourth order, and at 1e-3 the
/// truncation term of smooth but strongly varying charts (stereographic
/// spheres) was measured at ~5e-9, too coarse for the closed-form path
/// budget of 1e-9. At 3e-4 truncation and roundoff balance near 1e-12.
pub const FD_CURV_STEP_REL: f64 = 3e-4;

/// Cap applied to domain diagonals when scaling FD steps, so unbounded
/// charts (periodic angles, infinite product directions) get sane steps.
pub const FD_DIAG_CAP: f64 = 10.0;

/// Scale-aware threshold: `tol * (1 + scale)`.
#[inline]
pub fn scaled(tol: f64, scale: f64) -> f64 {
    tol * (1.0 + scale)
}
