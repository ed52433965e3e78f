//! Registry of reference models.
//!
//! Each entry pins a construction, an independent closed-form curvature
//! formula, the structural flags the verification suite must reproduce, and
//! the probe geometry used to measure those flags: a base point for
//! transported line fields, a base for geodesic-rank estimation, a geodesic
//! that crosses between curved zones, and a library of holonomy loops whose
//! common-fixed-line search decides whether the metric splits off a line.
//!
//! Entries are addressable by name from configuration files and from the
//! command line; every `expected` flag carries its own tolerance so the
//! verification suite is a single data-driven loop.

use std::f64::consts::PI;

use thiserror::Error;

use crate::atlas::{
    build_disk_cylinder_disk_graph, build_r3_blocks, build_round3, build_two_disk_graph, Atlas,
    AtlasError, AtlasPoint, COLLAR_WIDTH,
};
use crate::charts::{
    flat_chart, product_hyperbolic_chart, product_sphere_chart, twisted_chart,
    BulgedCylinderField, TwistedField,
};
use crate::flows::{geodesic, rank_estimate, transport, FlowError, TraceOptions};
use crate::global::{build_xp, rect_loop, GlobalError, Loop};
use crate::linalg::{line_angle, M3, V3};
use crate::metric::{metric_at, MetricError};
use crate::pointwise::{classify_point, ClassifyError, Sign, Tag};
use crate::profile::{build_cone_profile, build_disk_profile, ConeProfile, RampProfile};
use crate::sample::jittered_sphere;
use crate::tol::{CURV_TOL, RANK_TOL};

// Construction parameters of the graph-built models, pinned so the oracle
// formulas and the probe geometry stay in exact agreement with the builders.
const DISK_R0: f64 = 0.1;
const DISK_R1: f64 = 0.22;
const CYL_LENGTH: f64 = 1.5;
const CYL_BULGE: f64 = 0.35;
const BLOCK_RHO1: f64 = 0.5;
const BLOCK_D: f64 = 1.5;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("no model named `{0}` in the registry")]
    UnknownEntry(String),
    #[error("model `{0}` ships no closed-form curvature formula")]
    NoOracle(&'static str),
    #[error("chart `{chart}` point {point:?} is outside the model domain")]
    OutOfDomain { chart: String, point: [f64; 3] },
    #[error("probe at chart {chart} point {point:?} is unusable: {detail}")]
    BadProbe {
        chart: usize,
        point: [f64; 3],
        detail: String,
    },
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Global(#[from] GlobalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One boolean expectation: whether a measured residual should fall below
/// `tol` (`expected = true`) or stay above it with clear separation
/// (`expected = false`).
#[derive(Clone, Copy, Debug)]
pub struct FlagCheck {
    pub expected: bool,
    pub tol: f64,
}

impl FlagCheck {
    pub const fn yes(tol: f64) -> Self {
        FlagCheck {
            expected: true,
            tol,
        }
    }
    pub const fn no(tol: f64) -> Self {
        FlagCheck {
            expected: false,
            tol,
        }
    }
    /// Whether a measured residual agrees with the expectation.
    pub fn passes(&self, residual: f64) -> bool {
        (residual < self.tol) == self.expected
    }
}

/// Structure flags the verification suite must reproduce for an entry.
#[derive(Clone, Copy, Debug)]
pub struct Expected {
    /// Flat planes through every vector at every point (curvature operator
    /// rank <= 1). Residual: second-largest |eigenvalue| relative to scale.
    pub cvc0: FlagCheck,
    /// Spectral sign of the curvature operator over the whole sample set.
    pub sign: Sign,
    /// Eigenvalue slack (relative to scale) allowed by the sign scan.
    pub sign_tol: f64,
    /// Minimum estimated geodesic rank over directions at the rank probe.
    pub rank_at_probe: usize,
    /// The holonomy loop family fixes a common line. Residual: min over
    /// directions of the worst per-loop line displacement.
    pub has_parallel_line: FlagCheck,
    /// Parallel transport of the line from the probe base reproduces the
    /// pointwise line on reached nonisotropic samples (angle residual).
    /// `None` for models without a distinguished line anywhere.
    pub l_parallel: Option<FlagCheck>,
}

impl Expected {
    /// Whether some geodesic family at the probe certifies rank >= 2.
    pub fn higher_rank(&self) -> bool {
        self.rank_at_probe >= 2
    }
}

/// Base point and horizon for a transported-line-field measurement.
#[derive(Clone, Copy, Debug)]
pub struct Probe {
    pub base: AtlasPoint,
    pub horizon: f64,
}

/// Base point for geodesic-rank estimation. `preferred` is a direction that
/// must be included in the sampled set (graph models certify their minimum
/// rank along the radial direction that crosses into the neighbouring zone).
#[derive(Clone, Copy, Debug)]
pub struct RankProbe {
    pub base: AtlasPoint,
    pub horizon: f64,
    pub preferred: Option<V3>,
}

/// A geodesic from one curved zone into another, along which the transported
/// line must disagree with the far zone's own line by at least `min_angle`.
#[derive(Clone, Copy, Debug)]
pub struct CrossProbe {
    pub start: AtlasPoint,
    pub v: V3,
    pub horizon: f64,
    pub min_angle: f64,
    /// Chart id the geodesic must end in.
    pub end_chart: &'static str,
}

type BuildFn = fn() -> Result<Atlas, AtlasError>;
type OracleFn = fn(&Atlas, usize, &V3) -> M3;
type ProbeFn = fn(&Atlas) -> Probe;
type RankFn = fn(&Atlas) -> RankProbe;
type LoopsFn = fn(&Atlas) -> Vec<Loop>;
type CrossFn = fn(&Atlas) -> CrossProbe;

/// One registry entry. Probe constructors take the built atlas so they can
/// resolve chart indices and profile-dependent radii at run time.
#[derive(Clone, Copy)]
pub struct ZooEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Geodesics launched by the standard checks stay inside the atlas.
    pub complete: bool,
    /// Tolerance for the numeric pipeline against `oracle_curvature`.
    /// Analytic fields compare at 1e-9; graph models use piecewise-C^2
    /// profiles whose higher derivatives are unbounded near the ramp
    /// junctions, where the finite-difference stencil spanning a junction
    /// loses accuracy, so they compare at 5e-3.
    pub oracle_tol: f64,
    pub expected: Expected,
    build_fn: BuildFn,
    oracle_fn: Option<OracleFn>,
    xp_fn: Option<ProbeFn>,
    rank_fn: Option<RankFn>,
    loops_fn: Option<LoopsFn>,
    cross_fn: Option<CrossFn>,
}

impl std::fmt::Debug for ZooEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZooEntry")
            .field("name", &self.name)
            .field("complete", &self.complete)
            .field("expected", &self.expected)
            .finish()
    }
}

impl ZooEntry {
    pub fn build(&self) -> Result<Atlas, ZooError> {
        Ok((self.build_fn)()?)
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle_fn.is_some()
    }

    /// Closed-form curvature operator at an atlas point, in the wedge basis
    /// of the chart's canonical frame.
    pub fn oracle_curvature(&self, atlas: &Atlas, p: &AtlasPoint) -> Result<M3, ZooError> {
        let f = self.oracle_fn.ok_or(ZooError::NoOracle(self.name))?;
        if !atlas.contains(p) {
            return Err(ZooError::OutOfDomain {
                chart: atlas.chart(p.chart).id.clone(),
                point: [p.x[0], p.x[1], p.x[2]],
            });
        }
        Ok(f(atlas, p.chart, &p.x))
    }

    pub fn xp_probe(&self, atlas: &Atlas) -> Option<Probe> {
        self.xp_fn.map(|f| f(atlas))
    }

    pub fn rank_probe(&self, atlas: &Atlas) -> Option<RankProbe> {
        self.rank_fn.map(|f| f(atlas))
    }

    pub fn loops(&self, atlas: &Atlas) -> Vec<Loop> {
        self.loops_fn.map(|f| f(atlas)).unwrap_or_default()
    }

    pub fn cross_probe(&self, atlas: &Atlas) -> Option<CrossProbe> {
        self.cross_fn.map(|f| f(atlas))
    }
}

/// All shipped models, in registry order.
pub fn zoo_list() -> Vec<ZooEntry> {
    vec![
        ZooEntry {
            name: "flat3",
            summary: "Euclidean 3-space: every plane is flat, every direction splits off",
            complete: true,
            oracle_tol: 1e-9,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::Zero,
                sign_tol: 1e-6,
                rank_at_probe: 3,
                has_parallel_line: FlagCheck::yes(1e-6),
                l_parallel: None,
            },
            build_fn: build_flat3,
            oracle_fn: Some(oracle_zero),
            xp_fn: None,
            rank_fn: Some(rank_flat3),
            loops_fn: Some(loops_flat3),
            cross_fn: None,
        },
        ZooEntry {
            name: "round3",
            summary: "round 3-sphere of curvature 1 in two stereographic charts: no flat plane anywhere",
            complete: true,
            oracle_tol: 1e-9,
            expected: Expected {
                cvc0: FlagCheck::no(1e-6),
                sign: Sign::NonNeg,
                sign_tol: 1e-6,
                rank_at_probe: 1,
                has_parallel_line: FlagCheck::no(1e-6),
                l_parallel: None,
            },
            build_fn: build_round3_unit,
            oracle_fn: Some(oracle_round3),
            xp_fn: None,
            rank_fn: Some(rank_round3),
            loops_fn: Some(loops_round3),
            cross_fn: None,
        },
        ZooEntry {
            name: "prodS2R",
            summary: "unit 2-sphere times a line (equatorial belt chart): the axis direction is globally parallel",
            complete: false,
            oracle_tol: 1e-9,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::NonNeg,
                sign_tol: 1e-6,
                rank_at_probe: 2,
                has_parallel_line: FlagCheck::yes(1e-6),
                l_parallel: Some(FlagCheck::yes(1e-4)),
            },
            build_fn: build_prod_s2r,
            oracle_fn: Some(oracle_prod_s2r),
            xp_fn: Some(xp_prod_s2r),
            rank_fn: Some(rank_prod_s2r),
            loops_fn: Some(loops_prod_s2r),
            cross_fn: None,
        },
        ZooEntry {
            name: "prodH2R",
            summary: "hyperbolic plane times a line in horocyclic coordinates: the axis direction is globally parallel",
            complete: false,
            oracle_tol: 1e-9,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::NonPos,
                sign_tol: 1e-6,
                rank_at_probe: 2,
                has_parallel_line: FlagCheck::yes(1e-6),
                l_parallel: Some(FlagCheck::yes(1e-4)),
            },
            build_fn: build_prod_h2r,
            oracle_fn: Some(oracle_prod_h2r),
            xp_fn: Some(xp_prod_h2r),
            rank_fn: Some(rank_prod_h2r),
            loops_fn: Some(loops_prod_h2r),
            cross_fn: None,
        },
        ZooEntry {
            name: "twisted",
            summary: "warped slab dt^2 + dx^2 + (t + x^2)^2 dy^2: a flat-plane line everywhere, parallel nowhere; incomplete domain",
            complete: false,
            oracle_tol: 1e-9,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::NonPos,
                sign_tol: 1e-6,
                rank_at_probe: 1,
                has_parallel_line: FlagCheck::no(1e-4),
                l_parallel: Some(FlagCheck::no(1e-4)),
            },
            build_fn: build_twisted,
            oracle_fn: Some(oracle_twisted),
            xp_fn: Some(xp_twisted),
            rank_fn: Some(rank_twisted),
            loops_fn: Some(loops_twisted),
            cross_fn: None,
        },
        ZooEntry {
            name: "s3_graph",
            summary: "two disk-times-circle pieces joined by a circle swap: a 3-sphere metric, sec >= 0, zone lines crossed by the joint",
            complete: true,
            oracle_tol: 5e-3,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::NonNeg,
                sign_tol: 1e-6,
                rank_at_probe: 1,
                has_parallel_line: FlagCheck::no(1e-4),
                l_parallel: Some(FlagCheck::yes(1e-4)),
            },
            build_fn: build_s3_graph,
            oracle_fn: Some(oracle_disk_graph),
            xp_fn: Some(xp_disk_graph),
            rank_fn: Some(rank_s3_graph),
            loops_fn: Some(loops_s3_graph),
            cross_fn: Some(cross_s3_graph),
        },
        ZooEntry {
            name: "s2s1_graph",
            summary: "disk-cylinder-disk chain with a barrel bulge: S^2 x S^1 whose zone lines cannot align across the joints",
            complete: true,
            oracle_tol: 5e-3,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::Mixed,
                sign_tol: 1e-6,
                rank_at_probe: 1,
                has_parallel_line: FlagCheck::no(1e-4),
                l_parallel: Some(FlagCheck::yes(1e-4)),
            },
            build_fn: build_s2s1_graph,
            oracle_fn: Some(oracle_disk_graph),
            xp_fn: Some(xp_disk_graph),
            rank_fn: Some(rank_s2s1_graph),
            loops_fn: Some(loops_s2s1_graph),
            cross_fn: Some(cross_s2s1_graph),
        },
        ZooEntry {
            name: "r3_blocks",
            summary: "two smoothed half-plane blocks crossed with lines, glued by a tangent/fiber swap: complete R^3, sec >= 0, no global splitting",
            complete: true,
            oracle_tol: 5e-3,
            expected: Expected {
                cvc0: FlagCheck::yes(1e-6),
                sign: Sign::NonNeg,
                sign_tol: 1e-6,
                rank_at_probe: 1,
                has_parallel_line: FlagCheck::no(1e-4),
                l_parallel: Some(FlagCheck::yes(1e-4)),
            },
            build_fn: build_blocks,
            oracle_fn: Some(oracle_blocks),
            xp_fn: Some(xp_blocks),
            rank_fn: Some(rank_blocks),
            loops_fn: Some(loops_blocks),
            cross_fn: Some(cross_blocks),
        },
    ]
}

/// Look an entry up by name.
pub fn find(name: &str) -> Result<ZooEntry, ZooError> {
    zoo_list()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ZooError::UnknownEntry(name.to_string()))
}

// ---------------------------------------------------------------------------
// Builders

fn build_flat3() -> Result<Atlas, AtlasError> {
    Ok(Atlas::single("flat3", flat_chart()))
}

fn build_round3_unit() -> Result<Atlas, AtlasError> {
    Ok(build_round3(1.0))
}

fn build_prod_s2r() -> Result<Atlas, AtlasError> {
    Ok(Atlas::single("prodS2R", product_sphere_chart(1.0)))
}

fn build_prod_h2r() -> Result<Atlas, AtlasError> {
    Ok(Atlas::single("prodH2R", product_hyperbolic_chart()))
}

fn build_twisted() -> Result<Atlas, AtlasError> {
    Ok(Atlas::single("twisted", twisted_chart()))
}

fn build_s3_graph() -> Result<Atlas, AtlasError> {
    build_two_disk_graph(DISK_R0, DISK_R1)
}

fn build_s2s1_graph() -> Result<Atlas, AtlasError> {
    build_disk_cylinder_disk_graph(DISK_R0, DISK_R1, CYL_LENGTH, CYL_BULGE)
}

fn build_blocks() -> Result<Atlas, AtlasError> {
    build_r3_blocks(BLOCK_RHO1, BLOCK_D)
}

// ---------------------------------------------------------------------------
// Shared profile geometry

fn disk_ramp() -> RampProfile {
    build_disk_profile(DISK_R0, DISK_R1)
        .expect("pinned disk profile parameters are feasible")
        .ramp
}

fn cone_profile() -> ConeProfile {
    build_cone_profile(0.4 * BLOCK_RHO1, BLOCK_RHO1)
        .expect("pinned cone profile parameters are feasible")
}

fn cone_ramp() -> RampProfile {
    cone_profile().ramp
}

fn cyl_field() -> BulgedCylinderField {
    BulgedCylinderField {
        length: CYL_LENGTH,
        bulge: CYL_BULGE,
        m0: 0.30 * CYL_LENGTH,
        m1: 0.45 * CYL_LENGTH,
    }
}

/// Base point in the curved annulus of the first disk piece of a disk graph.
fn disk_zone_base(atlas: &Atlas) -> AtlasPoint {
    let chart = atlas
        .find_chart("v0-polar")
        .expect("disk graphs carry a v0-polar chart");
    AtlasPoint::new(
        chart,
        V3::new(disk_ramp().peak_curvature_radius(), 1.0, 0.3),
    )
}

/// Base point in the curved annulus of the first half-plane block.
fn blocks_zone_base(atlas: &Atlas) -> AtlasPoint {
    let chart = atlas
        .find_chart("b0-polar")
        .expect("block models carry a b0-polar chart");
    AtlasPoint::new(chart, V3::new(cone_ramp().peak_curvature_radius(), PI, 0.0))
}

// ---------------------------------------------------------------------------
// Closed-form curvature formulas (wedge basis of the canonical frame)

fn warped_operator(ramp: &RampProfile, r: f64) -> M3 {
    M3::from_diagonal(&V3::new(0.0, 0.0, -ramp.d2phi(r) / ramp.phi(r)))
}

fn oracle_zero(_: &Atlas, _: usize, _: &V3) -> M3 {
    M3::zeros()
}

fn oracle_round3(_: &Atlas, _: usize, _: &V3) -> M3 {
    M3::identity()
}

fn oracle_prod_s2r(_: &Atlas, _: usize, _: &V3) -> M3 {
    M3::from_diagonal(&V3::new(0.0, 0.0, 1.0))
}

fn oracle_prod_h2r(_: &Atlas, _: usize, _: &V3) -> M3 {
    M3::from_diagonal(&V3::new(0.0, 0.0, -1.0))
}

fn oracle_twisted(_: &Atlas, _: usize, x: &V3) -> M3 {
    M3::from_diagonal(&V3::new(-2.0 / TwistedField::w(x), 0.0, 0.0))
}

fn oracle_disk_graph(atlas: &Atlas, chart: usize, x: &V3) -> M3 {
    let id = atlas.chart(chart).id.as_str();
    if id.ends_with("-polar") {
        warped_operator(&disk_ramp(), x[0])
    } else if id.ends_with("-cyl") {
        let (c, _, ddc) = cyl_field().jet(x[0]);
        M3::from_diagonal(&V3::new(0.0, 0.0, -ddc / c))
    } else {
        M3::zeros()
    }
}

fn oracle_blocks(atlas: &Atlas, chart: usize, x: &V3) -> M3 {
    if atlas.chart(chart).id.as_str().ends_with("-polar") {
        warped_operator(&cone_ramp(), x[0])
    } else {
        M3::zeros()
    }
}

// ---------------------------------------------------------------------------
// Transported-line-field probes

fn xp_prod_s2r(_: &Atlas) -> Probe {
    Probe {
        base: AtlasPoint::new(0, V3::new(1.3, 0.8, 0.2)),
        horizon: 0.7,
    }
}

fn xp_prod_h2r(_: &Atlas) -> Probe {
    Probe {
        base: AtlasPoint::new(0, V3::zeros()),
        horizon: 0.7,
    }
}

fn xp_twisted(_: &Atlas) -> Probe {
    Probe {
        base: AtlasPoint::new(0, V3::new(1.5, 0.0, 0.0)),
        horizon: 0.8,
    }
}

/// Small enough that every reached sample stays inside the curved annulus.
fn xp_disk_graph(atlas: &Atlas) -> Probe {
    Probe {
        base: disk_zone_base(atlas),
        horizon: 0.05,
    }
}

fn xp_blocks(atlas: &Atlas) -> Probe {
    Probe {
        base: blocks_zone_base(atlas),
        horizon: 0.05,
    }
}

// ---------------------------------------------------------------------------
// Rank probes

const RADIAL: V3 = V3::new(1.0, 0.0, 0.0);

fn rank_flat3(_: &Atlas) -> RankProbe {
    RankProbe {
        base: AtlasPoint::new(0, V3::new(0.2, -0.3, 0.4)),
        horizon: 2.0,
        preferred: None,
    }
}

fn rank_round3(_: &Atlas) -> RankProbe {
    RankProbe {
        base: AtlasPoint::new(0, V3::new(0.1, -0.15, 0.2)),
        horizon: 2.0,
        preferred: None,
    }
}

fn rank_prod_s2r(_: &Atlas) -> RankProbe {
    RankProbe {
        base: AtlasPoint::new(0, V3::new(1.3, 0.8, 0.2)),
        horizon: 10.0,
        preferred: None,
    }
}

fn rank_prod_h2r(_: &Atlas) -> RankProbe {
    RankProbe {
        base: AtlasPoint::new(0, V3::zeros()),
        horizon: 10.0,
        preferred: None,
    }
}

fn rank_twisted(_: &Atlas) -> RankProbe {
    RankProbe {
        base: AtlasPoint::new(0, V3::new(2.5, 0.0, 0.0)),
        horizon: 1.5,
        preferred: None,
    }
}

// Graph rank probes certify their minimum along the radial direction, whose
// geodesic crosses the joint: the far zone's curvature removes the last
// candidate parallel field, so the horizon must reach that zone.

fn rank_s3_graph(atlas: &Atlas) -> RankProbe {
    RankProbe {
        base: disk_zone_base(atlas),
        horizon: 0.6,
        preferred: Some(RADIAL),
    }
}

fn rank_s2s1_graph(atlas: &Atlas) -> RankProbe {
    RankProbe {
        base: disk_zone_base(atlas),
        horizon: 0.9,
        preferred: Some(RADIAL),
    }
}

fn rank_blocks(atlas: &Atlas) -> RankProbe {
    RankProbe {
        base: blocks_zone_base(atlas),
        horizon: 1.7,
        preferred: Some(RADIAL),
    }
}

// ---------------------------------------------------------------------------
// Zone-crossing geodesics

fn cross_s3_graph(atlas: &Atlas) -> CrossProbe {
    let base = disk_zone_base(atlas);
    // Radial run to the joint circle at r = DISK_R1 + COLLAR_WIDTH and back
    // down to the mirrored radius in the far piece.
    let seam_mid = DISK_R1 + COLLAR_WIDTH;
    CrossProbe {
        start: base,
        v: RADIAL,
        horizon: 2.0 * (seam_mid - base.x[0]),
        min_angle: 0.5,
        end_chart: "v1-polar",
    }
}

fn cross_s2s1_graph(atlas: &Atlas) -> CrossProbe {
    let base = disk_zone_base(atlas);
    let delta = COLLAR_WIDTH;
    let seam_mid = DISK_R1 + delta;
    // The hand-off fires a quarter collar past the joint (cylinder
    // coordinate x = delta / 4); continue to the quarter point of the rising
    // bulge shoulder, where the curvature is strong.
    let f = cyl_field();
    let x_target = f.m0 + 0.25 * (f.m1 - f.m0);
    CrossProbe {
        start: base,
        v: RADIAL,
        horizon: (seam_mid + 0.25 * delta - base.x[0]) + (x_target - 0.25 * delta),
        min_angle: 0.5,
        end_chart: "v1-cyl",
    }
}

fn cross_blocks(atlas: &Atlas) -> CrossProbe {
    let base = blocks_zone_base(atlas);
    let delta = COLLAR_WIDTH;
    let c0 = cone_profile().c0();
    // Segment lengths of the radial run at theta = pi: polar out to the
    // strip hand-off, strip descent to the seam, mirrored ascent, polar
    // descent into the far annulus. All segments are unit-speed straight
    // lines in their charts.
    let r_exit = BLOCK_D - 0.15 - 2.0 * c0;
    let strip_down = (0.5 * delta + 0.15) - 0.25 * delta;
    let strip_up = (0.5 * delta + 0.3) - (delta - 0.25 * delta);
    let r_enter = BLOCK_D - 0.3 - 2.0 * c0;
    CrossProbe {
        start: base,
        v: RADIAL,
        horizon: (r_exit - base.x[0]) + strip_down + strip_up + (r_enter - base.x[0]),
        min_angle: 0.5,
        end_chart: "b1-polar",
    }
}

// ---------------------------------------------------------------------------
// Holonomy loop libraries (all loops of a family share their base point)

fn loops_flat3(_: &Atlas) -> Vec<Loop> {
    let base = AtlasPoint::new(0, V3::new(0.2, -0.3, 0.4));
    vec![
        rect_loop("xy", base, 0, 1, 0.8, 0.8),
        rect_loop("xz", base, 0, 2, 0.8, 0.8),
        rect_loop("yz", base, 1, 2, 0.8, 0.8),
    ]
}

fn loops_round3(_: &Atlas) -> Vec<Loop> {
    let base = AtlasPoint::new(0, V3::zeros());
    vec![
        rect_loop("xy", base, 0, 1, 0.8, 0.8),
        rect_loop("xz", base, 0, 2, 0.8, 0.8),
        rect_loop("yz", base, 1, 2, 0.8, 0.8),
    ]
}

fn loops_prod_s2r(_: &Atlas) -> Vec<Loop> {
    let base = AtlasPoint::new(0, V3::new(1.3, 0.8, 0.2));
    vec![
        rect_loop("sphere", base, 0, 1, 0.6, 0.9),
        rect_loop("mixed", base, 1, 2, 0.9, 1.2),
    ]
}

fn loops_prod_h2r(_: &Atlas) -> Vec<Loop> {
    let base = AtlasPoint::new(0, V3::zeros());
    vec![
        rect_loop("plane", base, 0, 1, 0.8, 0.8),
        rect_loop("mixed", base, 1, 2, 0.8, 0.8),
    ]
}

fn loops_twisted(_: &Atlas) -> Vec<Loop> {
    let b = V3::new(1.5, 0.0, 0.0);
    let base = AtlasPoint::new(0, b);
    let at = |x: f64, y: f64| AtlasPoint::new(0, V3::new(1.5, x, y));
    // An (x, y) rectangle conjugated by a y-offset: the offset tilts the
    // rotation axis, so together with the rectangle at the base no single
    // line survives both.
    let conj = Loop {
        name: "xy-offset".into(),
        points: vec![
            at(0.0, 0.0),
            at(0.0, 1.0),
            at(0.8, 1.0),
            at(0.8, 1.6),
            at(0.0, 1.6),
            at(0.0, 1.0),
            at(0.0, 0.0),
        ],
    };
    vec![
        rect_loop("xy", base, 1, 2, 0.8, 0.8),
        conj,
        rect_loop("tx", base, 0, 1, 0.8, 0.8),
    ]
}

fn loops_s3_graph(atlas: &Atlas) -> Vec<Loop> {
    let polar0 = atlas.find_chart("v0-polar").expect("v0-polar exists");
    let polar1 = atlas.find_chart("v1-polar").expect("v1-polar exists");
    let q = V3::new(0.10, 0.5, 0.3);
    let base = AtlasPoint::new(polar0, q);
    let dth = PI / 2.0;
    let zone0 = rect_loop("zone0", base, 0, 1, 0.215 - q[0], dth);

    // Across the joint: the circle swap carries the fiber into the far
    // piece's boundary circle, and a rectangle in the far annulus rotates
    // about the far fiber — an axis orthogonal to the first.
    let seam_mid = DISK_R1 + COLLAR_WIDTH;
    let hop_r = seam_mid + 0.04;
    let th1 = 2.0 * PI * q[2];
    let b1 = q[1] / (2.0 * PI);
    let p0 = |r: f64, th: f64| AtlasPoint::new(polar0, V3::new(r, th, q[2]));
    let p1 = |r: f64, th: f64| AtlasPoint::new(polar1, V3::new(r, th, b1));
    let cross = Loop {
        name: "zone1-via-seam".into(),
        points: vec![
            p0(q[0], q[1]),
            p0(hop_r, q[1]),
            p1(2.0 * seam_mid - hop_r, th1),
            p1(0.10, th1),
            p1(0.10, th1 + dth),
            p1(0.38, th1 + dth),
            p1(0.38, th1),
            p0(hop_r, q[1]),
            p0(q[0], q[1]),
        ],
    };
    vec![zone0, cross]
}

fn loops_s2s1_graph(atlas: &Atlas) -> Vec<Loop> {
    let polar0 = atlas.find_chart("v0-polar").expect("v0-polar exists");
    let cyl = atlas.find_chart("v1-cyl").expect("v1-cyl exists");
    let q = V3::new(0.10, 0.5, 0.3);
    let base = AtlasPoint::new(polar0, q);
    let zone0 = rect_loop("zone0", base, 0, 1, 0.215 - q[0], PI / 2.0);

    // Across the joint into the cylinder: a rectangle climbing the rising
    // bulge shoulder rotates about the cylinder fiber, which pulls back to
    // the disk's boundary-circle direction — orthogonal to the disk fiber.
    // The far leg stops at the shoulder midpoint, where the slope of the
    // bulge profile (hence the enclosed curvature) is largest.
    let seam_mid = DISK_R1 + COLLAR_WIDTH;
    let hop_r = seam_mid + 0.04;
    let f = cyl_field();
    let x_lo = hop_r - seam_mid;
    let x_hi = f.m0 + 0.5 * (f.m1 - f.m0);
    let a = q[2];
    let da = 0.4;
    let fb = q[1] / (2.0 * PI);
    let pd = |r: f64| AtlasPoint::new(polar0, V3::new(r, q[1], q[2]));
    let pc = |x: f64, a: f64| AtlasPoint::new(cyl, V3::new(x, a, fb));
    let cross = Loop {
        name: "bulge-via-seam".into(),
        points: vec![
            pd(q[0]),
            pd(hop_r),
            pc(x_lo, a),
            pc(x_hi, a),
            pc(x_hi, a + da),
            pc(x_lo, a + da),
            pc(x_lo, a),
            pd(hop_r),
            pd(q[0]),
        ],
    };
    vec![zone0, cross]
}

fn loops_blocks(atlas: &Atlas) -> Vec<Loop> {
    let p0 = atlas.find_chart("b0-polar").expect("b0-polar exists");
    let f0 = atlas.find_chart("b0-fermi").expect("b0-fermi exists");
    let p1 = atlas.find_chart("b1-polar").expect("b1-polar exists");
    let f1 = atlas.find_chart("b1-fermi").expect("b1-fermi exists");
    let delta = COLLAR_WIDTH;
    let cone = cone_profile();
    let c0 = cone.c0();
    let r_star = cone.ramp.peak_curvature_radius();
    let base = AtlasPoint::new(p0, V3::new(r_star, PI, 0.0));
    let dth = 2.6;
    let zone0 = rect_loop("zone0", base, 0, 1, 0.8 - r_star, dth);

    // Into the mirror block along theta = pi: polar -> strip at the
    // developed-height hand-off, strip descent across the seam swap, ascent
    // into the mirror strip, mirror polar. The rectangle there encloses the
    // mirror ramp, rotating about the mirror axis — which pulls back to the
    // boundary-circle direction of the first block.
    let r_hop = BLOCK_D - 0.15 - 2.0 * c0;
    let n_hop = 0.5 * delta + 0.15;
    let n_low = 0.02;
    let pp0 = |r: f64, th: f64| AtlasPoint::new(p0, V3::new(r, th, 0.0));
    let pp1 = |r: f64, th: f64| AtlasPoint::new(p1, V3::new(r, th, 0.0));
    let ff0 = |n: f64| AtlasPoint::new(f0, V3::new(0.0, n, 0.0));
    let ff1 = |n: f64| AtlasPoint::new(f1, V3::new(0.0, n, 0.0));
    let cross = Loop {
        name: "mirror-via-seam".into(),
        points: vec![
            pp0(r_star, PI),
            pp0(r_hop, PI),
            ff0(n_hop),
            ff0(n_low),
            ff1(delta - n_low),
            ff1(n_hop),
            pp1(r_hop, PI),
            pp1(0.15, PI),
            pp1(0.8, PI),
            pp1(0.8, PI - dth),
            pp1(0.15, PI - dth),
            pp1(0.15, PI),
            pp1(r_hop, PI),
            ff1(n_hop),
            ff1(n_low),
            ff0(delta - n_low),
            ff0(n_hop),
            pp0(r_hop, PI),
            pp0(r_star, PI),
        ],
    };
    vec![zone0, cross]
}

// ---------------------------------------------------------------------------
// Measurements driven by the probes

/// Minimum estimated geodesic rank over a deterministic direction sample at
/// the probe base; the probe's preferred direction is always included.
pub fn measured_rank(
    atlas: &Atlas,
    probe: &RankProbe,
    n_dirs: usize,
    k_times: usize,
    seed: u64,
) -> Result<usize, ZooError> {
    let g = atlas.metric(&probe.base)?;
    let mut dirs = Vec::new();
    if let Some(v) = probe.preferred {
        dirs.push(v);
    }
    dirs.extend(jittered_sphere(&g, n_dirs, seed));
    let mut min_rank = 3;
    for v in dirs {
        let w = rank_estimate(atlas, probe.base, v, probe.horizon, k_times, RANK_TOL)?;
        min_rank = min_rank.min(w.estimated_rank);
    }
    Ok(min_rank)
}

/// Agreement between the transported line field from a probe base and the
/// pointwise line, over every reached nonisotropic sample.
#[derive(Clone, Copy, Debug)]
pub struct XpAgreement {
    /// Nonisotropic samples actually compared.
    pub samples: usize,
    /// Samples outside the nonisotropic region (or too close to a
    /// classification interface), skipped.
    pub skipped: usize,
    /// Radial directions dropped because their geodesic left the atlas.
    pub excluded: usize,
    pub max_angle: f64,
}

pub fn xp_line_agreement(
    atlas: &Atlas,
    probe: &Probe,
    n_dirs: usize,
    times_per_dir: usize,
    seed: u64,
) -> Result<XpAgreement, ZooError> {
    let field = build_xp(atlas, probe.base, probe.horizon, n_dirs, times_per_dir, seed)?;
    let mut out = XpAgreement {
        samples: 0,
        skipped: 0,
        excluded: field.excluded,
        max_angle: 0.0,
    };
    for s in &field.samples {
        let chart = atlas.chart(s.point.chart);
        match classify_point(chart, &s.point.x, CURV_TOL) {
            Ok(pc) if pc.tag == Tag::Nonisotropic => {
                let d = pc.line_dir.expect("nonisotropic points carry a line");
                let g = metric_at(chart, &s.point.x)?;
                out.max_angle = out.max_angle.max(line_angle(&g, &s.direction, &d));
                out.samples += 1;
            }
            Ok(_) | Err(ClassifyError::AmbiguousSpectrum { .. }) => out.skipped += 1,
            Err(ClassifyError::WrongClass { .. }) => out.skipped += 1,
            Err(ClassifyError::Metric(e)) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Result of carrying a zone's line along the crossing geodesic.
#[derive(Clone, Debug)]
pub struct CrossReport {
    pub end: AtlasPoint,
    pub end_chart_id: String,
    /// Angle between the transported line and the far zone's own line.
    pub angle: f64,
}

pub fn cross_transport_angle(atlas: &Atlas, probe: &CrossProbe) -> Result<CrossReport, ZooError> {
    let line_at = |p: &AtlasPoint| -> Result<V3, ZooError> {
        let pc = classify_point(atlas.chart(p.chart), &p.x, CURV_TOL).map_err(|e| {
            ZooError::BadProbe {
                chart: p.chart,
                point: [p.x[0], p.x[1], p.x[2]],
                detail: e.to_string(),
            }
        })?;
        pc.line_dir.ok_or(ZooError::BadProbe {
            chart: p.chart,
            point: [p.x[0], p.x[1], p.x[2]],
            detail: format!("classified {:?}, a single line is required", pc.tag),
        })
    };
    let d0 = line_at(&probe.start)?;
    let trace = geodesic(
        atlas,
        probe.start,
        probe.v,
        probe.horizon,
        &TraceOptions::default(),
    )?;
    let end = trace.end().point();
    let d1 = line_at(&end)?;
    let w = transport(&trace, &d0);
    let g = metric_at(atlas.chart(end.chart), &end.x)?;
    Ok(CrossReport {
        end,
        end_chart_id: atlas.chart(end.chart).id.clone(),
        angle: line_angle(&g, &w, &d1),
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::global::{loop_holonomy, splitting_detect};
    use approx::assert_relative_eq;

    #[test]
    fn registry_lists_eight_unique_buildable_entries() {
        let entries = zoo_list();
        assert_eq!(entries.len(), 8);
        let mut names: Vec<&str> = entries.iter().map(|e| e.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 8, "entry names must be unique");
        assert!(find("round3").is_ok());
        assert!(matches!(find("nope"), Err(ZooError::UnknownEntry(_))));
        for e in &entries {
            let atlas = e.build().unwrap_or_else(|err| {
                panic!("{} failed to build: {err}", e.name);
            });
            assert!(!atlas.charts().is_empty(), "{} has charts", e.name);
        }
    }

    #[test]
    fn oracles_match_the_numeric_pipeline() {
        for e in zoo_list() {
            assert!(e.has_oracle(), "{} ships an oracle", e.name);
            let atlas = e.build().unwrap();
            // Strip the curvature closed form so the pipeline actually
            // assembles the operator from Christoffel data.
            let stripped: Vec<_> = atlas
                .charts()
                .iter()
                .map(|c| c.without_curvature_oracle())
                .collect();
            let samples = atlas.sample_points(0xC0FFEE, 12 * atlas.charts().len());
            let total = samples.len();
            let mut compared = 0usize;
            for p in samples {
                let oracle = e.oracle_curvature(&atlas, &p).unwrap();
                // Points inside the sampling region but within the finite
                // difference stencil margin of a domain face are refused by
                // the stripped pipeline; skip those.
                let data = match crate::metric::curvature_operator_at(&stripped[p.chart], &p.x)
                {
                    Ok(d) => d,
                    Err(crate::metric::MetricError::OutOfDomain { .. }) => continue,
                    Err(other) => panic!("{}: {other}", e.name),
                };
                compared += 1;
                let err = (data.operator - oracle).norm() / (1.0 + oracle.norm());
                assert!(
                    err < e.oracle_tol,
                    "{} chart {} at {:?}: oracle mismatch {err:.3e}",
                    e.name,
                    atlas.chart(p.chart).id,
                    p.x
                );
            }
            assert!(
                compared * 10 >= total * 9,
                "{}: only {compared}/{total} samples compared",
                e.name
            );
            // Out-of-domain points are rejected.
            let bad = AtlasPoint::new(0, V3::new(1e9, 1e9, 1e9));
            assert!(matches!(
                e.oracle_curvature(&atlas, &bad),
                Err(ZooError::OutOfDomain { .. })
            ));
        }
    }

    #[test]
    fn rank_probes_report_the_declared_rank() {
        for e in zoo_list() {
            let atlas = e.build().unwrap();
            let Some(probe) = e.rank_probe(&atlas) else {
                panic!("{} must declare a rank probe", e.name);
            };
            let rank = measured_rank(&atlas, &probe, 4, 7, 0xA11CE).unwrap();
            assert_eq!(
                rank, e.expected.rank_at_probe,
                "{}: measured rank {rank}, declared {}",
                e.name, e.expected.rank_at_probe
            );
            assert_eq!(e.expected.higher_rank(), rank >= 2);
        }
    }

    #[test]
    fn loop_libraries_reproduce_the_splitting_flags() {
        for e in zoo_list() {
            let atlas = e.build().unwrap();
            let loops = e.loops(&atlas);
            assert!(!loops.is_empty(), "{} must ship loops", e.name);
            for lp in &loops {
                let h = loop_holonomy(&atlas, lp, 0.004).unwrap();
                assert!(
                    h.defect < 1e-6,
                    "{} loop {}: isometry defect {:.3e}",
                    e.name,
                    lp.name,
                    h.defect
                );
            }
            let flag = e.expected.has_parallel_line;
            let report = splitting_detect(&atlas, &loops, 0.004, flag.tol).unwrap();
            assert!(
                flag.passes(report.best_residual),
                "{}: splitting residual {:.3e} against expectation {:?}",
                e.name,
                report.best_residual,
                flag
            );
            assert_eq!(report.projector.is_some(), flag.expected, "{}", e.name);
            if !flag.expected {
                assert!(
                    report.best_residual > 0.1,
                    "{}: negative verdicts need clear separation, got {:.3e}",
                    e.name,
                    report.best_residual
                );
                assert_eq!(report.fixed_dim, 0, "{}", e.name);
            }
        }
    }

    #[test]
    fn product_splitting_recovers_the_axis_direction() {
        for name in ["prodS2R", "prodH2R"] {
            let e = find(name).unwrap();
            let atlas = e.build().unwrap();
            let loops = e.loops(&atlas);
            let report = splitting_detect(&atlas, &loops, 0.004, 1e-6).unwrap();
            let base = loops[0].points[0];
            let g = metric_at(atlas.chart(base.chart), &base.x).unwrap();
            let axis = V3::new(0.0, 0.0, 1.0);
            assert!(
                line_angle(&g, &report.best_direction, &axis) < 1e-3,
                "{name}: fixed direction misses the product axis"
            );
        }
        let e = find("flat3").unwrap();
        let atlas = e.build().unwrap();
        let report = splitting_detect(&atlas, &e.loops(&atlas), 0.004, 1e-6).unwrap();
        assert_eq!(report.fixed_dim, 3, "flat space fixes every line");
    }

    #[test]
    fn graph_zone_rectangles_enclose_the_declared_curvature() {
        // Rotation angle of the zone-0 rectangle = angular width times the
        // profile slope drop across the radial leg.
        let e = find("s2s1_graph").unwrap();
        let atlas = e.build().unwrap();
        let loops = e.loops(&atlas);
        let ramp = disk_ramp();
        let h = loop_holonomy(&atlas, &loops[0], 0.004).unwrap();
        let angle = ((h.on_frame.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        let expected = (PI / 2.0) * (ramp.dphi(0.10) - ramp.dphi(0.215));
        assert_relative_eq!(angle, expected, epsilon = 1e-6);

        // The bulge rectangle encloses the rising half-shoulder.
        let f = cyl_field();
        let x_hi = f.m0 + 0.5 * (f.m1 - f.m0);
        let h = loop_holonomy(&atlas, &loops[1], 0.004).unwrap();
        let angle = ((h.on_frame.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        let expected = 0.4 * f.jet(x_hi).1;
        assert_relative_eq!(angle, expected, epsilon = 1e-6);

        // Block model: both rectangles again match the slope-drop formula,
        // and the mirror loop moves the first block's axis far.
        let e = find("r3_blocks").unwrap();
        let atlas = e.build().unwrap();
        let loops = e.loops(&atlas);
        let ramp = cone_ramp();
        let r_star = ramp.peak_curvature_radius();
        let h = loop_holonomy(&atlas, &loops[0], 0.004).unwrap();
        let angle = ((h.on_frame.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        let expected = 2.6 * (ramp.dphi(r_star) - ramp.dphi(0.8));
        assert_relative_eq!(angle, expected, epsilon = 1e-6);

        let h = loop_holonomy(&atlas, &loops[1], 0.004).unwrap();
        let angle = ((h.on_frame.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        let expected = 2.6 * (ramp.dphi(0.15) - ramp.dphi(0.8));
        assert_relative_eq!(angle, expected, epsilon = 1e-5);
        let zhat = V3::new(0.0, 0.0, 1.0);
        let moved = (h.on_frame * zhat - zhat).norm();
        assert!(
            moved > 0.5,
            "mirror loop must move the block axis, moved {moved:.3e}"
        );
    }

    #[test]
    fn cross_probes_swap_the_zone_lines() {
        for name in ["s3_graph", "s2s1_graph", "r3_blocks"] {
            let e = find(name).unwrap();
            let atlas = e.build().unwrap();
            let probe = e.cross_probe(&atlas).expect("graph models cross zones");
            let report = cross_transport_angle(&atlas, &probe).unwrap();
            assert_eq!(
                report.end_chart_id, probe.end_chart,
                "{name}: geodesic must end in {}, ended in {} at {:?}",
                probe.end_chart, report.end_chart_id, report.end.x
            );
            assert!(
                report.angle > probe.min_angle,
                "{name}: transported line only {:.3} rad from the far line",
                report.angle
            );
            // The joints swap fiber and boundary circle, so the mismatch is
            // a right angle.
            assert_relative_eq!(report.angle, PI / 2.0, epsilon = 0.05);
        }
    }

    #[test]
    fn xp_probes_match_the_declared_parallelism() {
        for e in zoo_list() {
            let Some(flag) = e.expected.l_parallel else {
                assert!(
                    e.xp_fn.is_none(),
                    "{}: probe without expectation",
                    e.name
                );
                continue;
            };
            let atlas = e.build().unwrap();
            let probe = e.xp_probe(&atlas).expect("flagged entries carry a probe");
            let report = xp_line_agreement(&atlas, &probe, 12, 4, 0x5EED11).unwrap();
            assert!(
                report.samples >= 20,
                "{}: only {} nonisotropic samples",
                e.name,
                report.samples
            );
            assert!(
                flag.passes(report.max_angle),
                "{}: max transported-line angle {:.3e} against {:?}",
                e.name,
                report.max_angle,
                flag
            );
            assert_eq!(report.excluded, 0, "{}: probes stay inside", e.name);
        }
    }
}
