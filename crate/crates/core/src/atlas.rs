//! Multi-chart atlases: transition maps, gluing validation, and the shipped
//! model constructions (graph products of surface pieces, doubled half-plane
//! blocks, the two-chart round sphere).
//!
//! An [`Atlas`] is an immutable set of charts plus directed
//! [`TransitionMap`]s. Each transition carries a trigger surface in the
//! source chart: trajectories that cross the trigger outward are handed to
//! the target chart by the transition's closed-form coordinate map. Trigger
//! surfaces sit strictly inside both charts' domains, so every hand-off lands
//! with margin and consecutive triggers are separated (hysteresis): a freshly
//! mapped point is never already past the reverse trigger.
//!
//! All shipped transition maps are exact isometries of the closed-form
//! metrics on their overlap bands; [`transition_consistency`] verifies this
//! numerically (round trip, metric pullback, Jacobian coherence).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::chart::{ChartMetric, DomainBox, SampleRegion};
use crate::charts::{
    cylinder_chart, disk_cap_chart, disk_polar_chart, euclidean_chart, stereographic_chart,
    FlatField, WarpedPolarField,
};
use crate::linalg::{M3, V3};
use crate::metric::{metric_at, MetricError};
use crate::profile::{build_cone_profile, build_disk_profile, ProfileError};
use crate::sample::{chart_point, index_rng};

/// Schema version written at the head of every atlas export.
pub const ATLAS_SCHEMA_VERSION: u32 = 1;

/// Width of the gluing collars: charts on the two sides of a seam overlap on
/// a band of this coordinate thickness, with the seam in the middle.
pub const COLLAR_WIDTH: f64 = 0.2;

/// Extra coordinate padding between a trigger surface and the domain edge
/// behind it, so integrator stages never evaluate outside a domain box.
const DOMAIN_PAD: f64 = 0.15;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("duplicate chart id {0:?}")]
    DuplicateChartId(String),
    #[error("transition references chart index {index} out of range")]
    BadChartIndex { index: usize },
    #[error("boundary {boundary} of vertex {vertex} is not glued to anything")]
    DanglingBoundary { vertex: usize, boundary: usize },
    #[error("boundary {boundary} of vertex {vertex} appears in more than one edge")]
    BoundaryReused { vertex: usize, boundary: usize },
    #[error("edge references vertex {vertex} boundary {boundary}, which does not exist")]
    UnknownBoundary { vertex: usize, boundary: usize },
    #[error("gluing {edge} is not an isometry: {detail}")]
    GluingNotIsometric { edge: String, detail: String },
    #[error("no overlap points found for transition {from} -> {to}")]
    OverlapUnsampled { from: String, to: String },
    #[error("invalid block geometry: {detail}")]
    BadBlockGeometry { detail: String },
    #[error("cylinder of length {length} is too short; need at least {min}")]
    CylinderTooShort { length: f64, min: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A manifold point: chart index plus coordinates in that chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtlasPoint {
    pub chart: usize,
    pub x: V3,
}

impl AtlasPoint {
    pub fn new(chart: usize, x: V3) -> Self {
        AtlasPoint { chart, x }
    }
}

// ---------------------------------------------------------------------------
// Coordinate maps

/// Closed-form chart-to-chart coordinate maps. Every shipped transition is
/// one of these; all have exact Jacobians and exact inverses.
#[derive(Clone, Debug)]
pub enum CoordMap {
    /// `y[i] = scale[i] * x[perm[i]] + offset[i]` — all collar gluings.
    AffineSwap {
        perm: [usize; 3],
        scale: [f64; 3],
        offset: [f64; 3],
    },
    /// Sphere inversion `x -> rho2 * x / |x|^2` between stereographic charts.
    Inversion { rho2: f64 },
    /// `(r, theta, z) -> (r cos theta, r sin theta, z)` onto a flat cap.
    PolarToCart,
    /// Inverse of [`CoordMap::PolarToCart`].
    CartToPolar,
    /// Development of a smoothed-cone flat zone onto the Fermi strip of its
    /// boundary geodesic: `u = rho + 2 c0`, `Theta = theta / 2`,
    /// `(rho, theta, z) -> (u cos Theta, d + delta/2 - u sin Theta, z)`.
    Developed { c0: f64, d: f64, delta: f64 },
    /// Inverse of [`CoordMap::Developed`].
    DevelopedInv { c0: f64, d: f64, delta: f64 },
}

impl CoordMap {
    pub fn apply(&self, p: &V3) -> V3 {
        match *self {
            CoordMap::AffineSwap {
                perm,
                scale,
                offset,
            } => V3::new(
                scale[0] * p[perm[0]] + offset[0],
                scale[1] * p[perm[1]] + offset[1],
                scale[2] * p[perm[2]] + offset[2],
            ),
            CoordMap::Inversion { rho2 } => {
                let n2 = p.norm_squared();
                p * (rho2 / n2)
            }
            CoordMap::PolarToCart => V3::new(p[0] * p[1].cos(), p[0] * p[1].sin(), p[2]),
            CoordMap::CartToPolar => {
                let r = p[0].hypot(p[1]);
                let theta = p[1].atan2(p[0]);
                V3::new(r, theta, p[2])
            }
            CoordMap::Developed { c0, d, delta } => {
                let u = p[0] + 2.0 * c0;
                let th = 0.5 * p[1];
                V3::new(u * th.cos(), d + 0.5 * delta - u * th.sin(), p[2])
            }
            CoordMap::DevelopedInv { c0, d, delta } => {
                let y = d + 0.5 * delta - p[1];
                let u = p[0].hypot(y);
                let theta = 2.0 * y.atan2(p[0]);
                V3::new(u - 2.0 * c0, theta, p[2])
            }
        }
    }

    pub fn jacobian(&self, p: &V3) -> M3 {
        match *self {
            CoordMap::AffineSwap { perm, scale, .. } => {
                let mut j = M3::zeros();
                for i in 0..3 {
                    j[(i, perm[i])] = scale[i];
                }
                j
            }
            CoordMap::Inversion { rho2 } => {
                let n2 = p.norm_squared();
                let s = rho2 / n2;
                s * (M3::identity() - (2.0 / n2) * p * p.transpose())
            }
            CoordMap::PolarToCart => {
                let (s, c) = p[1].sin_cos();
                let mut j = M3::zeros();
                j[(0, 0)] = c;
                j[(0, 1)] = -p[0] * s;
                j[(1, 0)] = s;
                j[(1, 1)] = p[0] * c;
                j[(2, 2)] = 1.0;
                j
            }
            CoordMap::CartToPolar => {
                let r2 = p[0] * p[0] + p[1] * p[1];
                let r = r2.sqrt();
                let mut j = M3::zeros();
                j[(0, 0)] = p[0] / r;
                j[(0, 1)] = p[1] / r;
                j[(1, 0)] = -p[1] / r2;
                j[(1, 1)] = p[0] / r2;
                j[(2, 2)] = 1.0;
                j
            }
            CoordMap::Developed { c0, .. } => {
                let u = p[0] + 2.0 * c0;
                let (s, c) = (0.5 * p[1]).sin_cos();
                let mut j = M3::zeros();
                j[(0, 0)] = c;
                j[(0, 1)] = -0.5 * u * s;
                j[(1, 0)] = -s;
                j[(1, 1)] = -0.5 * u * c;
                j[(2, 2)] = 1.0;
                j
            }
            CoordMap::DevelopedInv { c0: _, d, delta } => {
                let y = d + 0.5 * delta - p[1];
                let u2 = p[0] * p[0] + y * y;
                let u = u2.sqrt();
                let mut j = M3::zeros();
                j[(0, 0)] = p[0] / u;
                j[(0, 1)] = -y / u;
                j[(1, 0)] = -2.0 * y / u2;
                j[(1, 1)] = -2.0 * p[0] / u2;
                j[(2, 2)] = 1.0;
                j
            }
        }
    }

    pub fn inverse(&self) -> CoordMap {
        match *self {
            CoordMap::AffineSwap {
                perm,
                scale,
                offset,
            } => {
                let mut inv_perm = [0usize; 3];
                let mut inv_scale = [0.0; 3];
                let mut inv_offset = [0.0; 3];
                for i in 0..3 {
                    inv_perm[perm[i]] = i;
                }
                for (j, (s, o)) in inv_scale.iter_mut().zip(inv_offset.iter_mut()).enumerate() {
                    let k = inv_perm[j];
                    *s = 1.0 / scale[k];
                    *o = -offset[k] / scale[k];
                }
                CoordMap::AffineSwap {
                    perm: inv_perm,
                    scale: inv_scale,
                    offset: inv_offset,
                }
            }
            CoordMap::Inversion { rho2 } => CoordMap::Inversion { rho2 },
            CoordMap::PolarToCart => CoordMap::CartToPolar,
            CoordMap::CartToPolar => CoordMap::PolarToCart,
            CoordMap::Developed { c0, d, delta } => CoordMap::DevelopedInv { c0, d, delta },
            CoordMap::DevelopedInv { c0, d, delta } => CoordMap::Developed { c0, d, delta },
        }
    }
}

/// `b(a(x))` for two monomial affine maps (the composition is again one).
fn compose_affine(a: &CoordMap, b: &CoordMap) -> CoordMap {
    let (CoordMap::AffineSwap {
        perm: pa,
        scale: sa,
        offset: oa,
    }, CoordMap::AffineSwap {
        perm: pb,
        scale: sb,
        offset: ob,
    }) = (a, b)
    else {
        panic!("compose_affine needs AffineSwap arguments");
    };
    let mut perm = [0usize; 3];
    let mut scale = [0.0; 3];
    let mut offset = [0.0; 3];
    for j in 0..3 {
        perm[j] = pa[pb[j]];
        scale[j] = sb[j] * sa[pb[j]];
        offset[j] = sb[j] * oa[pb[j]] + ob[j];
    }
    CoordMap::AffineSwap {
        perm,
        scale,
        offset,
    }
}

// ---------------------------------------------------------------------------
// Trigger surfaces

/// Implicit surface in a source chart. A transition fires when its trigger
/// value crosses from negative to positive along a trajectory. Every variant
/// is invariant under the source chart's coordinate wraps, so values may be
/// evaluated on raw (uncanonicalised) trajectory coordinates.
#[derive(Clone, Debug)]
pub enum InterfaceSurface {
    /// `outward * (x[axis] - value)`.
    CoordPlane {
        axis: usize,
        value: f64,
        outward: f64,
    },
    /// `|x| - r` (all three coordinates).
    Sphere { r: f64 },
    /// `hypot(x0, x1) - r` (cylinder around the third axis).
    Tube { r: f64 },
    /// Developed height of a cone point above the cone apex line minus a
    /// threshold: `(x0 + 2 c0) * |sin(x1 / 2)| - threshold`. The absolute
    /// value keeps the expression 2 pi-periodic in the raw angle; its kink
    /// sits at developed height 0, far from any positive threshold.
    DevelopedY { c0: f64, threshold: f64 },
}

impl InterfaceSurface {
    pub fn value(&self, p: &V3) -> f64 {
        match *self {
            InterfaceSurface::CoordPlane {
                axis,
                value,
                outward,
            } => outward * (p[axis] - value),
            InterfaceSurface::Sphere { r } => p.norm() - r,
            InterfaceSurface::Tube { r } => p[0].hypot(p[1]) - r,
            InterfaceSurface::DevelopedY { c0, threshold } => {
                (p[0] + 2.0 * c0) * (0.5 * p[1]).sin().abs() - threshold
            }
        }
    }
}

/// A directed chart-to-chart gluing.
#[derive(Clone, Debug)]
pub struct TransitionMap {
    pub from: usize,
    pub to: usize,
    /// Fires when its value crosses 0 upward along a trajectory.
    pub trigger: InterfaceSurface,
    pub map: CoordMap,
    /// Half-thickness of the overlap band `|trigger value| <= margin` on
    /// which both charts are valid; consistency checks sample this band.
    pub overlap_margin: f64,
}

impl TransitionMap {
    pub fn apply(&self, p: &V3) -> V3 {
        self.map.apply(p)
    }
    pub fn jacobian(&self, p: &V3) -> M3 {
        self.map.jacobian(p)
    }
}

// ---------------------------------------------------------------------------
// Atlas

/// An immutable multi-chart manifold description.
#[derive(Debug)]
pub struct Atlas {
    pub name: String,
    charts: Vec<ChartMetric>,
    transitions: Vec<TransitionMap>,
    outgoing: Vec<Vec<usize>>,
}

impl Atlas {
    pub fn new(
        name: impl Into<String>,
        charts: Vec<ChartMetric>,
        transitions: Vec<TransitionMap>,
    ) -> Result<Atlas, AtlasError> {
        let mut seen = BTreeMap::new();
        for (i, c) in charts.iter().enumerate() {
            if seen.insert(c.id.clone(), i).is_some() {
                return Err(AtlasError::DuplicateChartId(c.id.clone()));
            }
        }
        let mut outgoing = vec![Vec::new(); charts.len()];
        for (k, t) in transitions.iter().enumerate() {
            if t.from >= charts.len() {
                return Err(AtlasError::BadChartIndex { index: t.from });
            }
            if t.to >= charts.len() {
                return Err(AtlasError::BadChartIndex { index: t.to });
            }
            outgoing[t.from].push(k);
        }
        Ok(Atlas {
            name: name.into(),
            charts,
            transitions,
            outgoing,
        })
    }

    /// Single-chart atlas (no transitions).
    pub fn single(name: impl Into<String>, chart: ChartMetric) -> Atlas {
        Atlas::new(name, vec![chart], Vec::new()).expect("single chart cannot collide")
    }

    pub fn charts(&self) -> &[ChartMetric] {
        &self.charts
    }
    pub fn chart(&self, i: usize) -> &ChartMetric {
        &self.charts[i]
    }
    pub fn transitions(&self) -> &[TransitionMap] {
        &self.transitions
    }
    pub fn transition(&self, i: usize) -> &TransitionMap {
        &self.transitions[i]
    }
    /// Indices of transitions leaving the given chart.
    pub fn outgoing(&self, chart: usize) -> &[usize] {
        &self.outgoing[chart]
    }
    pub fn find_chart(&self, id: &str) -> Option<usize> {
        self.charts.iter().position(|c| c.id == id)
    }
    pub fn transition_between(&self, from: usize, to: usize) -> Option<&TransitionMap> {
        self.transitions.iter().find(|t| t.from == from && t.to == to)
    }

    pub fn canonicalize(&self, p: &AtlasPoint) -> AtlasPoint {
        AtlasPoint::new(p.chart, self.charts[p.chart].canonicalize(&p.x))
    }

    pub fn contains(&self, p: &AtlasPoint) -> bool {
        p.chart < self.charts.len() && self.charts[p.chart].domain.contains(&p.x)
    }

    pub fn metric(&self, p: &AtlasPoint) -> Result<M3, MetricError> {
        metric_at(&self.charts[p.chart], &p.x)
    }

    /// Apply a transition to a position: canonicalise in the source chart,
    /// map, canonicalise in the target chart. Returns the target chart
    /// index, target coordinates, and the (exact) Jacobian for carrying
    /// tangent vectors across.
    pub fn cross(&self, t_idx: usize, p: &V3) -> (usize, V3, M3) {
        let t = &self.transitions[t_idx];
        let pc = self.charts[t.from].canonicalize(p);
        let q = t.map.apply(&pc);
        let j = t.map.jacobian(&pc);
        (t.to, self.charts[t.to].canonicalize(&q), j)
    }

    /// Deterministic manifold-wide sample: round-robin over charts, each
    /// chart sampled by its own region with a per-index seeded stream.
    pub fn sample_points(&self, seed: u64, n: usize) -> Vec<AtlasPoint> {
        (0..n)
            .map(|k| {
                let c = k % self.charts.len();
                AtlasPoint::new(c, chart_point(&self.charts[c], seed, k as u64))
            })
            .collect()
    }

    /// Versioned structured-text dump of charts and transitions with stable
    /// field order. Purely diagnostic output; nothing parses it back.
    pub fn export(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "atlas-schema {}", ATLAS_SCHEMA_VERSION);
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "charts {}", self.charts.len());
        for c in &self.charts {
            let _ = writeln!(s, "chart {}", c.id);
            let d = c.field().descriptor();
            let _ = write!(s, "  field {}", d.kind);
            for (k, v) in &d.params {
                let _ = write!(s, " {k}={v}");
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "  domain {}", fmt_box(&c.domain));
            let _ = writeln!(s, "  samplebox {}", fmt_box(&c.sample_box));
            let _ = writeln!(
                s,
                "  region {}",
                match c.sample_region {
                    SampleRegion::Box => "box".to_string(),
                    SampleRegion::Ball3 { r } => format!("ball3 r={r}"),
                    SampleRegion::Disk2 { r } => format!("disk2 r={r}"),
                }
            );
            let wrap: Vec<String> = c
                .wrap
                .iter()
                .map(|w| w.map(|p| p.to_string()).unwrap_or_else(|| "-".into()))
                .collect();
            let _ = writeln!(s, "  wrap {}", wrap.join(" "));
        }
        let _ = writeln!(s, "transitions {}", self.transitions.len());
        for t in &self.transitions {
            let _ = writeln!(
                s,
                "transition {} -> {}",
                self.charts[t.from].id, self.charts[t.to].id
            );
            let _ = writeln!(
                s,
                "  trigger {}",
                match t.trigger {
                    InterfaceSurface::CoordPlane {
                        axis,
                        value,
                        outward,
                    } => format!("plane axis={axis} value={value} outward={outward}"),
                    InterfaceSurface::Sphere { r } => format!("sphere r={r}"),
                    InterfaceSurface::Tube { r } => format!("tube r={r}"),
                    InterfaceSurface::DevelopedY { c0, threshold } =>
                        format!("developed-y c0={c0} threshold={threshold}"),
                }
            );
            let _ = writeln!(s, "  margin {}", t.overlap_margin);
            let _ = writeln!(
                s,
                "  map {}",
                match &t.map {
                    CoordMap::AffineSwap {
                        perm,
                        scale,
                        offset,
                    } => format!(
                        "affine perm={},{},{} scale={},{},{} offset={},{},{}",
                        perm[0],
                        perm[1],
                        perm[2],
                        scale[0],
                        scale[1],
                        scale[2],
                        offset[0],
                        offset[1],
                        offset[2]
                    ),
                    CoordMap::Inversion { rho2 } => format!("inversion rho2={rho2}"),
                    CoordMap::PolarToCart => "polar-to-cart".into(),
                    CoordMap::CartToPolar => "cart-to-polar".into(),
                    CoordMap::Developed { c0, d, delta } =>
                        format!("developed c0={c0} d={d} delta={delta}"),
                    CoordMap::DevelopedInv { c0, d, delta } =>
                        format!("developed-inv c0={c0} d={d} delta={delta}"),
                }
            );
        }
        s
    }
}

fn fmt_box(b: &DomainBox) -> String {
    format!(
        "{} {} {} | {} {} {}",
        b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
    )
}

/// Coordinate difference `a - b` reduced modulo the chart's wraps, so points
/// identified by periodicity compare as equal.
pub fn wrap_diff(chart: &ChartMetric, a: &V3, b: &V3) -> V3 {
    let mut d = a - b;
    for i in 0..3 {
        if let Some(period) = chart.wrap[i] {
            d[i] -= period * (d[i] / period).round();
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Consistency checking

/// Residual maxima from sampling every transition's overlap band.
#[derive(Clone, Debug)]
pub struct TransitionReport {
    pub checked: usize,
    /// `|inverse(map(p)) - p|` modulo wraps.
    pub round_trip_max: f64,
    /// Relative Frobenius defect of `J^T G' J = G` (metric pullback).
    pub isometry_max: f64,
    /// `|J_inv(map p) . J(p) - I|` — tangent hand-off coherence.
    pub handoff_max: f64,
    /// Closed-form Jacobian versus central finite differences of the map.
    pub fd_jacobian_max: f64,
    /// Per-transition worst combined (round-trip/isometry/hand-off) residual.
    pub per_transition: Vec<(String, String, f64)>,
}

impl TransitionReport {
    /// Exact-algebra checks only; the FD cross-check has its own looser
    /// budget because it is truncation-limited, not correctness-limited.
    pub fn passes(&self, tol: f64) -> bool {
        self.round_trip_max <= tol && self.isometry_max <= tol && self.handoff_max <= tol
    }
}

/// Finite per-axis sampling ranges for overlap rejection sampling: prefer
/// the domain box, fall back to one wrap period, then to the sample box.
fn overlap_ranges(chart: &ChartMetric) -> [(f64, f64); 3] {
    let mut out = [(0.0, 0.0); 3];
    for i in 0..3 {
        let (lo, hi) = (chart.domain.min[i], chart.domain.max[i]);
        out[i] = if lo.is_finite() && hi.is_finite() {
            (lo, hi)
        } else if let Some(p) = chart.wrap[i] {
            (0.0, p)
        } else {
            (chart.sample_box.min[i], chart.sample_box.max[i])
        };
    }
    out
}

/// Sample overlap points of every transition and report the worst round-trip,
/// isometry, and tangent hand-off residuals. `n` is the target number of
/// points per transition.
pub fn transition_consistency(
    atlas: &Atlas,
    n: usize,
    seed: u64,
) -> Result<TransitionReport, AtlasError> {
    let mut report = TransitionReport {
        checked: 0,
        round_trip_max: 0.0,
        isometry_max: 0.0,
        handoff_max: 0.0,
        fd_jacobian_max: 0.0,
        per_transition: Vec::new(),
    };
    for (k, t) in atlas.transitions().iter().enumerate() {
        let from = atlas.chart(t.from);
        let to = atlas.chart(t.to);
        let ranges = overlap_ranges(from);
        let mut rng = index_rng(seed ^ 0xA71A5, k as u64);
        let inv = t.map.inverse();
        let mut found = 0usize;
        let mut worst = 0.0f64;
        for _ in 0..(2000 * n) {
            if found >= n {
                break;
            }
            let p = V3::new(
                rng.gen_range(ranges[0].0..ranges[0].1),
                rng.gen_range(ranges[1].0..ranges[1].1),
                rng.gen_range(ranges[2].0..ranges[2].1),
            );
            if t.trigger.value(&p).abs() > t.overlap_margin || !from.domain.contains(&p) {
                continue;
            }
            let q_raw = t.map.apply(&p);
            let q = to.canonicalize(&q_raw);
            if !to.domain.contains(&q) {
                continue;
            }
            found += 1;

            let back = inv.apply(&q_raw);
            let rt = wrap_diff(from, &p, &back).norm() / (1.0 + p.norm());
            report.round_trip_max = report.round_trip_max.max(rt);

            let j = t.map.jacobian(&p);
            let g_from = metric_at(from, &p)?;
            let g_to = metric_at(to, &q)?;
            let pullback = j.transpose() * g_to * j;
            let iso = (pullback - g_from).norm() / g_from.norm();
            report.isometry_max = report.isometry_max.max(iso);

            let j_inv = inv.jacobian(&q_raw);
            let hand = (j_inv * j - M3::identity()).norm();
            report.handoff_max = report.handoff_max.max(hand);

            let mut j_fd = M3::zeros();
            let h = 1e-6 * (1.0 + p.norm());
            for c in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[c] += h;
                pm[c] -= h;
                let col = (t.map.apply(&pp) - t.map.apply(&pm)) / (2.0 * h);
                j_fd.set_column(c, &col);
            }
            let fd = (j_fd - j).norm() / (1.0 + j.norm());
            report.fd_jacobian_max = report.fd_jacobian_max.max(fd);

            worst = worst.max(rt).max(iso).max(hand);
        }
        if found == 0 {
            return Err(AtlasError::OverlapUnsampled {
                from: from.id.clone(),
                to: to.id.clone(),
            });
        }
        report.checked += found;
        report
            .per_transition
            .push((from.id.clone(), to.id.clone(), worst));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Graph-manifold construction

/// Gluing word for a collar joint between two boundary tori. Both are
/// involutive isometries of the unit-square torus cross the collar interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Word {
    /// `(s, alpha, beta) -> (delta - s, alpha, beta)`: identifies boundary
    /// circles with boundary circles and fibers with fibers.
    A,
    /// `(s, alpha, beta) -> (delta - s, beta, alpha)`: swaps the boundary
    /// circle and fiber factors across the joint.
    B,
}

/// Base-surface type of a vertex piece.
#[derive(Clone, Debug)]
pub enum SurfaceKind {
    /// Capped disk: flat unit-slope center, concave circumference ramp,
    /// cylindrical end of boundary length exactly 1. One boundary circle.
    Disk(crate::profile::DiskProfile),
    /// Cylinder of the given length with an optional barrel bulge in the
    /// middle (exact unit product near both ends). Two boundary circles.
    Cylinder { length: f64, bulge: f64 },
    /// Square torus of side 1. No boundary.
    Torus,
}

impl SurfaceKind {
    pub fn boundary_count(&self) -> usize {
        match self {
            SurfaceKind::Disk(_) => 1,
            SurfaceKind::Cylinder { .. } => 2,
            SurfaceKind::Torus => 0,
        }
    }
}

/// A vertex piece: base surface crossed with a circle fiber of the given
/// length.
#[derive(Clone, Debug)]
pub struct GraphVertex {
    pub kind: SurfaceKind,
    pub fiber: f64,
}

/// An edge glues boundary `a.1` of vertex `a.0` to boundary `b.1` of vertex
/// `b.0` by the given word.
#[derive(Clone, Copy, Debug)]
pub struct GraphEdge {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub word: Word,
}

#[derive(Clone, Debug)]
pub struct GraphDescription {
    pub vertices: Vec<GraphVertex>,
    pub edges: Vec<GraphEdge>,
}

impl GraphDescription {
    fn validate(&self) -> Result<(), AtlasError> {
        let mut used: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for e in &self.edges {
            for &(v, b) in [&e.a, &e.b] {
                if v >= self.vertices.len() || b >= self.vertices[v].kind.boundary_count() {
                    return Err(AtlasError::UnknownBoundary {
                        vertex: v,
                        boundary: b,
                    });
                }
                if used.insert((v, b), ()).is_some() {
                    return Err(AtlasError::BoundaryReused {
                        vertex: v,
                        boundary: b,
                    });
                }
            }
            let fa = self.vertices[e.a.0].fiber;
            let fb = self.vertices[e.b.0].fiber;
            match e.word {
                Word::B => {
                    // B swaps the unit boundary circle and the fiber, so both
                    // fibers must have length exactly 1.
                    if (fa - 1.0).abs() > 1e-12 || (fb - 1.0).abs() > 1e-12 {
                        return Err(AtlasError::GluingNotIsometric {
                            edge: format!("({}.{}) -B- ({}.{})", e.a.0, e.a.1, e.b.0, e.b.1),
                            detail: format!(
                                "word B needs unit fibers on both sides, got {fa} and {fb}"
                            ),
                        });
                    }
                }
                Word::A => {
                    if (fa - fb).abs() > 1e-12 {
                        return Err(AtlasError::GluingNotIsometric {
                            edge: format!("({}.{}) -A- ({}.{})", e.a.0, e.a.1, e.b.0, e.b.1),
                            detail: format!("word A needs equal fiber lengths, got {fa} and {fb}"),
                        });
                    }
                }
            }
        }
        for (v, vert) in self.vertices.iter().enumerate() {
            for b in 0..vert.kind.boundary_count() {
                if !used.contains_key(&(v, b)) {
                    return Err(AtlasError::DanglingBoundary {
                        vertex: v,
                        boundary: b,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Affine map from a boundary's collar frame `(s, alpha, beta)` to the raw
/// chart coordinates of the piece owning that boundary, together with the
/// chart index and the leave-trigger. `s` is the coordinate distance into
/// the overlap band measured from the chart's outer edge (so the seam sits
/// at `s = delta / 2`), and `alpha, beta` are the unit-length circle
/// coordinates of the boundary torus.
struct CollarFrame {
    chart: usize,
    from_collar: CoordMap,
    trigger: InterfaceSurface,
}

fn word_map(word: Word) -> CoordMap {
    let delta = COLLAR_WIDTH;
    match word {
        Word::A => CoordMap::AffineSwap {
            perm: [0, 1, 2],
            scale: [-1.0, 1.0, 1.0],
            offset: [delta, 0.0, 0.0],
        },
        Word::B => CoordMap::AffineSwap {
            perm: [0, 2, 1],
            scale: [-1.0, 1.0, 1.0],
            offset: [delta, 0.0, 0.0],
        },
    }
}

/// Build the product atlas of a plumbing graph of surface pieces cross
/// circles. Validates the description, assembles per-vertex charts and
/// collar transitions, and numerically verifies that every gluing is an
/// isometry before returning.
pub fn build_graph_manifold(desc: &GraphDescription) -> Result<Atlas, AtlasError> {
    desc.validate()?;
    let delta = COLLAR_WIDTH;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut charts: Vec<ChartMetric> = Vec::new();
    let mut transitions: Vec<TransitionMap> = Vec::new();
    // (vertex, boundary) -> collar frame data, filled while building charts.
    let mut collars: BTreeMap<(usize, usize), CollarFrame> = BTreeMap::new();

    for (vi, vert) in desc.vertices.iter().enumerate() {
        match &vert.kind {
            SurfaceKind::Disk(profile) => {
                let r0 = profile.ramp.r0;
                let r1 = profile.ramp.r1;
                let seam = r1 + delta;
                let polar_idx = charts.len();
                let polar = disk_polar_chart(
                    format!("v{vi}-polar"),
                    *profile,
                    seam + delta / 2.0 + DOMAIN_PAD,
                    vert.fiber,
                )
                .with_sample_box(DomainBox::new(
                    [0.3 * r0, 0.0, 0.0],
                    [seam + delta / 4.0, two_pi, vert.fiber],
                ));
                charts.push(polar);
                let cap_idx = charts.len();
                charts.push(disk_cap_chart(format!("v{vi}-cap"), *profile, vert.fiber));
                transitions.push(TransitionMap {
                    from: polar_idx,
                    to: cap_idx,
                    trigger: InterfaceSurface::CoordPlane {
                        axis: 0,
                        value: 0.45 * r0,
                        outward: -1.0,
                    },
                    map: CoordMap::PolarToCart,
                    overlap_margin: 0.05 * r0,
                });
                transitions.push(TransitionMap {
                    from: cap_idx,
                    to: polar_idx,
                    trigger: InterfaceSurface::Tube { r: 0.6 * r0 },
                    map: CoordMap::CartToPolar,
                    overlap_margin: 0.05 * r0,
                });
                // Collar frame: r = (seam + delta/2) - s, theta = 2 pi alpha.
                collars.insert(
                    (vi, 0),
                    CollarFrame {
                        chart: polar_idx,
                        from_collar: CoordMap::AffineSwap {
                            perm: [0, 1, 2],
                            scale: [-1.0, two_pi, 1.0],
                            offset: [seam + delta / 2.0, 0.0, 0.0],
                        },
                        trigger: InterfaceSurface::CoordPlane {
                            axis: 0,
                            value: seam + delta / 4.0,
                            outward: 1.0,
                        },
                    },
                );
            }
            SurfaceKind::Cylinder { length, bulge } => {
                let min_len = (delta / 2.0 + 0.06) / 0.30;
                if *length < min_len {
                    return Err(AtlasError::CylinderTooShort {
                        length: *length,
                        min: min_len,
                    });
                }
                let idx = charts.len();
                charts.push(cylinder_chart(
                    format!("v{vi}-cyl"),
                    *length,
                    *bulge,
                    vert.fiber,
                    delta / 2.0 + DOMAIN_PAD,
                ));
                // Boundary 0 at x = 0: s = x + delta/2.
                collars.insert(
                    (vi, 0),
                    CollarFrame {
                        chart: idx,
                        from_collar: CoordMap::AffineSwap {
                            perm: [0, 1, 2],
                            scale: [1.0, 1.0, 1.0],
                            offset: [-delta / 2.0, 0.0, 0.0],
                        },
                        trigger: InterfaceSurface::CoordPlane {
                            axis: 0,
                            value: -delta / 4.0,
                            outward: -1.0,
                        },
                    },
                );
                // Boundary 1 at x = length: s = (length + delta/2) - x.
                collars.insert(
                    (vi, 1),
                    CollarFrame {
                        chart: idx,
                        from_collar: CoordMap::AffineSwap {
                            perm: [0, 1, 2],
                            scale: [-1.0, 1.0, 1.0],
                            offset: [length + delta / 2.0, 0.0, 0.0],
                        },
                        trigger: InterfaceSurface::CoordPlane {
                            axis: 0,
                            value: length + delta / 4.0,
                            outward: 1.0,
                        },
                    },
                );
            }
            SurfaceKind::Torus => {
                let chart = euclidean_chart(
                    format!("v{vi}-torus"),
                    [-INF, -INF, -INF],
                    [INF, INF, INF],
                    [Some(1.0), Some(1.0), Some(vert.fiber)],
                )
                .with_sample_box(DomainBox::new([0.0, 0.0, 0.0], [1.0, 1.0, vert.fiber]));
                charts.push(chart);
            }
        }
    }

    for e in &desc.edges {
        let ca = &collars[&e.a];
        let cb = &collars[&e.b];
        let w = word_map(e.word);
        // chart_a -> collar_a -> word -> chart_b, and the reverse.
        let to_collar_a = ca.from_collar.inverse();
        let fwd = compose_affine(&compose_affine(&to_collar_a, &w), &cb.from_collar);
        let bwd = fwd.inverse();
        transitions.push(TransitionMap {
            from: ca.chart,
            to: cb.chart,
            trigger: ca.trigger.clone(),
            map: fwd,
            overlap_margin: delta / 8.0,
        });
        transitions.push(TransitionMap {
            from: cb.chart,
            to: ca.chart,
            trigger: cb.trigger.clone(),
            map: bwd,
            overlap_margin: delta / 8.0,
        });
    }

    let atlas = Atlas::new(graph_name(desc), charts, transitions)?;
    if !atlas.transitions().is_empty() {
        let report = transition_consistency(&atlas, 24, 7)?;
        if !report.passes(1e-9) {
            let worst = report
                .per_transition
                .iter()
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .unwrap();
            return Err(AtlasError::GluingNotIsometric {
                edge: format!("{} -> {}", worst.0, worst.1),
                detail: format!("worst residual {:.3e}", worst.2),
            });
        }
    }
    Ok(atlas)
}

fn graph_name(desc: &GraphDescription) -> String {
    let kinds: Vec<&str> = desc
        .vertices
        .iter()
        .map(|v| match v.kind {
            SurfaceKind::Disk(_) => "disk",
            SurfaceKind::Cylinder { .. } => "cyl",
            SurfaceKind::Torus => "torus",
        })
        .collect();
    format!("graph[{}]", kinds.join("+"))
}

// ---------------------------------------------------------------------------
// Named constructions

/// Two-disk graph glued by a single B joint: total space is the 3-sphere
/// with a nonnegatively curved product-piece metric.
pub fn build_two_disk_graph(r0: f64, r1: f64) -> Result<Atlas, AtlasError> {
    let profile = build_disk_profile(r0, r1)?;
    let mut atlas = build_graph_manifold(&GraphDescription {
        vertices: vec![
            GraphVertex {
                kind: SurfaceKind::Disk(profile),
                fiber: 1.0,
            },
            GraphVertex {
                kind: SurfaceKind::Disk(profile),
                fiber: 1.0,
            },
        ],
        edges: vec![GraphEdge {
            a: (0, 0),
            b: (1, 0),
            word: Word::B,
        }],
    })?;
    atlas.name = "s3_graph".into();
    Ok(atlas)
}

/// Disk–cylinder–disk graph with two B joints: total space is S^2 x S^1.
/// The cylinder carries a barrel bulge so no direction survives as globally
/// parallel (each piece's curved zone selects a different local line).
pub fn build_disk_cylinder_disk_graph(
    r0: f64,
    r1: f64,
    length: f64,
    bulge: f64,
) -> Result<Atlas, AtlasError> {
    let profile = build_disk_profile(r0, r1)?;
    let mut atlas = build_graph_manifold(&GraphDescription {
        vertices: vec![
            GraphVertex {
                kind: SurfaceKind::Disk(profile),
                fiber: 1.0,
            },
            GraphVertex {
                kind: SurfaceKind::Cylinder { length, bulge },
                fiber: 1.0,
            },
            GraphVertex {
                kind: SurfaceKind::Disk(profile),
                fiber: 1.0,
            },
        ],
        edges: vec![
            GraphEdge {
                a: (0, 0),
                b: (1, 0),
                word: Word::B,
            },
            GraphEdge {
                a: (1, 1),
                b: (2, 0),
                word: Word::B,
            },
        ],
    })?;
    atlas.name = "s2s1_graph".into();
    Ok(atlas)
}

/// Flat 3-torus: one isolated square-torus vertex.
pub fn build_flat_torus() -> Result<Atlas, AtlasError> {
    let mut atlas = build_graph_manifold(&GraphDescription {
        vertices: vec![GraphVertex {
            kind: SurfaceKind::Torus,
            fiber: 1.0,
        }],
        edges: vec![],
    })?;
    atlas.name = "t3_graph".into();
    Ok(atlas)
}

/// Round 3-sphere of constant curvature `k` as two stereographic charts
/// glued by inversion across the equator sphere.
pub fn build_round3(curvature: f64) -> Atlas {
    let rho2 = 1.0 / curvature;
    let rho = rho2.sqrt();
    let charts = vec![
        stereographic_chart("st-north", curvature),
        stereographic_chart("st-south", curvature),
    ];
    let t = |from, to| TransitionMap {
        from,
        to,
        trigger: InterfaceSurface::Sphere { r: 1.2 * rho },
        map: CoordMap::Inversion { rho2 },
        overlap_margin: 0.1 * rho,
    };
    let mut atlas =
        Atlas::new("round3", charts, vec![t(0, 1), t(1, 0)]).expect("distinct chart ids");
    atlas.name = format!("round3(k={curvature})");
    atlas
}

/// Charts and internal transitions of one half-plane block with chart ids
/// prefixed by `tag`. Returns the local transition list plus the index of
/// the Fermi chart (whose `n < delta/4` side is the seam to a mirror block).
fn halfplane_block_parts(
    tag: &str,
    rho1: f64,
    d: f64,
) -> Result<(Vec<ChartMetric>, Vec<TransitionMap>, usize), AtlasError> {
    let delta = COLLAR_WIDTH;
    let rho0 = 0.4 * rho1;
    let profile = build_cone_profile(rho0, rho1)?;
    let c0 = profile.c0();
    if d <= rho1 + 2.0 * c0 + delta {
        return Err(AtlasError::BadBlockGeometry {
            detail: format!(
                "boundary distance d = {d} must exceed rho1 + 2 c0 + delta = {}",
                rho1 + 2.0 * c0 + delta
            ),
        });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let extent = 60.0;

    let polar = ChartMetric::new(
        format!("{tag}-polar"),
        DomainBox::new([0.25 * rho0, -INF, -INF], [extent, INF, INF]),
        Arc::new(WarpedPolarField { ramp: profile.ramp }),
    )
    .with_sample_box(DomainBox::new(
        [0.3 * rho0, 0.0, -1.2],
        [0.6 * (d - 2.0 * c0), two_pi, 1.2],
    ))
    .with_wrap([None, Some(two_pi), None]);

    let cap = ChartMetric::new(
        format!("{tag}-cap"),
        DomainBox::new([-rho0, -rho0, -INF], [rho0, rho0, INF]),
        Arc::new(FlatField),
    )
    .with_sample_box(DomainBox::new([-rho0, -rho0, -1.2], [rho0, rho0, 1.2]))
    .with_sample_region(SampleRegion::Disk2 { r: 0.9 * rho0 });

    // Fermi strip along the boundary geodesic: flat coordinates
    // (X, n, z) with the seam at n = delta/2 and the block interior toward
    // larger n. Valid wherever the developed height stays above the curved
    // core, which d > rho1 + 2 c0 + delta guarantees for n <= 0.72.
    let fermi = ChartMetric::new(
        format!("{tag}-fermi"),
        DomainBox::new([-extent, -0.12, -extent], [extent, 0.72, extent]),
        Arc::new(FlatField),
    )
    .with_sample_box(DomainBox::new([-1.2, 0.02, -1.2], [1.2, 0.38, 1.2]));

    let charts = vec![polar, cap, fermi];
    let (polar_idx, cap_idx, fermi_idx) = (0usize, 1usize, 2usize);
    let transitions = vec![
        TransitionMap {
            from: polar_idx,
            to: cap_idx,
            trigger: InterfaceSurface::CoordPlane {
                axis: 0,
                value: 0.45 * rho0,
                outward: -1.0,
            },
            map: CoordMap::PolarToCart,
            overlap_margin: 0.05 * rho0,
        },
        TransitionMap {
            from: cap_idx,
            to: polar_idx,
            trigger: InterfaceSurface::Tube { r: 0.6 * rho0 },
            map: CoordMap::CartToPolar,
            overlap_margin: 0.05 * rho0,
        },
        TransitionMap {
            from: polar_idx,
            to: fermi_idx,
            trigger: InterfaceSurface::DevelopedY {
                c0,
                threshold: d - 0.15,
            },
            map: CoordMap::Developed { c0, d, delta },
            overlap_margin: 0.05,
        },
        TransitionMap {
            from: fermi_idx,
            to: polar_idx,
            trigger: InterfaceSurface::CoordPlane {
                axis: 1,
                value: delta / 2.0 + 0.3,
                outward: 1.0,
            },
            map: CoordMap::DevelopedInv { c0, d, delta },
            overlap_margin: 0.05,
        },
    ];
    Ok((charts, transitions, fermi_idx))
}

/// One half-plane block: a smoothed double-of-quadrant (cone of total angle
/// pi, sec >= 0, positive only on the ramp annulus) crossed with a line,
/// carved along the boundary geodesic at developed distance `d`. Standalone
/// the block is a manifold with boundary; its Fermi strip overhangs the
/// seam so a mirror block can be glued on.
pub fn build_halfplane_block(rho1: f64, d: f64) -> Result<Atlas, AtlasError> {
    let (charts, transitions, _) = halfplane_block_parts("b0", rho1, d)?;
    let mut atlas = Atlas::new("halfplane_block", charts, transitions)?;
    atlas.name = format!("halfplane_block(rho1={rho1},d={d})");
    Ok(atlas)
}

/// Two half-plane blocks glued across their boundary geodesics by the
/// tangent/fiber swap `(X, n, z) -> (z, delta - n, X)`: a complete metric on
/// R^3 with sec >= 0 away from the seam region and quasi-positive curvature
/// on each block core.
pub fn build_r3_blocks(rho1: f64, d: f64) -> Result<Atlas, AtlasError> {
    let delta = COLLAR_WIDTH;
    let (charts0, trans0, fermi0) = halfplane_block_parts("b0", rho1, d)?;
    let (charts1, trans1, fermi1) = halfplane_block_parts("b1", rho1, d)?;
    let shift = charts0.len();
    let mut charts = charts0;
    charts.extend(charts1);
    let mut transitions = trans0;
    transitions.extend(trans1.into_iter().map(|mut t| {
        t.from += shift;
        t.to += shift;
        t
    }));
    let seam_map = CoordMap::AffineSwap {
        perm: [2, 1, 0],
        scale: [1.0, -1.0, 1.0],
        offset: [0.0, delta, 0.0],
    };
    let seam_trigger = |_: ()| InterfaceSurface::CoordPlane {
        axis: 1,
        value: delta / 4.0,
        outward: -1.0,
    };
    transitions.push(TransitionMap {
        from: fermi0,
        to: fermi1 + shift,
        trigger: seam_trigger(()),
        map: seam_map.clone(),
        overlap_margin: delta / 8.0,
    });
    transitions.push(TransitionMap {
        from: fermi1 + shift,
        to: fermi0,
        trigger: seam_trigger(()),
        map: seam_map.inverse(),
        overlap_margin: delta / 8.0,
    });
    let mut atlas = Atlas::new("r3_blocks", charts, transitions)?;
    atlas.name = format!("r3_blocks(rho1={rho1},d={d})");
    let report = transition_consistency(&atlas, 24, 11)?;
    if !report.passes(1e-9) {
        return Err(AtlasError::GluingNotIsometric {
            edge: "block seam".into(),
            detail: format!("worst residual {:.3e}", report.isometry_max.max(report.round_trip_max)),
        });
    }
    Ok(atlas)
}

const INF: f64 = f64::INFINITY;

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::curvature_operator_at;
    use approx::assert_relative_eq;

    fn sample_affine(seed: u64) -> CoordMap {
        let mut rng = index_rng(seed, 0);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]];
        let perm = perms[rng.gen_range(0..perms.len())];
        let mut scale = [0.0; 3];
        let mut offset = [0.0; 3];
        for i in 0..3 {
            scale[i] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..2.0);
            offset[i] = rng.gen_range(-1.0..1.0);
        }
        CoordMap::AffineSwap {
            perm,
            scale,
            offset,
        }
    }

    #[test]
    fn affine_swap_composes_and_inverts() {
        for seed in 0..20 {
            let a = sample_affine(seed);
            let b = sample_affine(seed + 1000);
            let ab = compose_affine(&a, &b);
            let p = V3::new(0.3, -1.2, 2.2);
            assert_relative_eq!(ab.apply(&p), b.apply(&a.apply(&p)), epsilon = 1e-12);
            let inv = a.inverse();
            assert_relative_eq!(inv.apply(&a.apply(&p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn coord_maps_invert_and_differentiate() {
        let cases: Vec<(CoordMap, V3)> = vec![
            (sample_affine(7), V3::new(0.4, 1.1, -0.6)),
            (CoordMap::Inversion { rho2: 1.7 }, V3::new(0.9, -0.4, 0.35)),
            (CoordMap::PolarToCart, V3::new(0.8, 1.1, -0.2)),
            (CoordMap::CartToPolar, V3::new(0.5, 0.45, 0.3)),
            (
                CoordMap::Developed {
                    c0: 0.175,
                    d: 1.5,
                    delta: 0.2,
                },
                V3::new(1.25, 2.0, 0.4),
            ),
            (
                CoordMap::DevelopedInv {
                    c0: 0.175,
                    d: 1.5,
                    delta: 0.2,
                },
                V3::new(0.3, 0.2, -0.5),
            ),
        ];
        for (map, p) in cases {
            let q = map.apply(&p);
            let back = map.inverse().apply(&q);
            assert_relative_eq!(back, p, epsilon = 1e-12);

            let j = map.jacobian(&p);
            let h = 1e-6;
            for c in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[c] += h;
                pm[c] -= h;
                let col = (map.apply(&pp) - map.apply(&pm)) / (2.0 * h);
                assert_relative_eq!(V3::from(j.column(c)), col, epsilon = 1e-7);
            }
            let j_inv = map.inverse().jacobian(&q);
            assert_relative_eq!(j_inv * j, M3::identity(), epsilon = 1e-10);
        }
    }

    #[test]
    fn two_disk_graph_builds_and_is_consistent() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        assert_eq!(atlas.charts().len(), 4);
        assert_eq!(atlas.transitions().len(), 6);
        let report = transition_consistency(&atlas, 60, 3).unwrap();
        assert!(report.passes(1e-9), "report: {report:?}");
        assert!(report.fd_jacobian_max < 1e-5, "fd: {}", report.fd_jacobian_max);
    }

    #[test]
    fn disk_seam_map_matches_hand_formula() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let p0 = atlas.find_chart("v0-polar").unwrap();
        let p1 = atlas.find_chart("v1-polar").unwrap();
        let t = atlas.transition_between(p0, p1).unwrap();
        let seam = 0.22 + COLLAR_WIDTH;
        let p = V3::new(seam + 0.03, 1.3, 0.42);
        let q = t.apply(&p);
        // (r, theta, beta) -> (2 R - r, 2 pi beta, theta / (2 pi)).
        assert_relative_eq!(q[0], 2.0 * seam - p[0], epsilon = 1e-14);
        assert_relative_eq!(q[1], 2.0 * std::f64::consts::PI * p[2], epsilon = 1e-14);
        assert_relative_eq!(q[2], p[1] / (2.0 * std::f64::consts::PI), epsilon = 1e-14);
    }

    #[test]
    fn graph_validation_rejects_bad_descriptions() {
        let profile = build_disk_profile(0.1, 0.22).unwrap();
        let disk = || GraphVertex {
            kind: SurfaceKind::Disk(profile),
            fiber: 1.0,
        };
        // Unglued disk boundary.
        let err = build_graph_manifold(&GraphDescription {
            vertices: vec![disk()],
            edges: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, AtlasError::DanglingBoundary { .. }), "{err}");
        // Same boundary in two edges.
        let err = build_graph_manifold(&GraphDescription {
            vertices: vec![disk(), disk(), disk()],
            edges: vec![
                GraphEdge {
                    a: (0, 0),
                    b: (1, 0),
                    word: Word::B,
                },
                GraphEdge {
                    a: (0, 0),
                    b: (2, 0),
                    word: Word::B,
                },
            ],
        })
        .unwrap_err();
        assert!(matches!(err, AtlasError::BoundaryReused { .. }), "{err}");
        // Nonexistent boundary index.
        let err = build_graph_manifold(&GraphDescription {
            vertices: vec![disk(), disk()],
            edges: vec![GraphEdge {
                a: (0, 1),
                b: (1, 0),
                word: Word::B,
            }],
        })
        .unwrap_err();
        assert!(matches!(err, AtlasError::UnknownBoundary { .. }), "{err}");
        // B gluing with a non-unit fiber.
        let err = build_graph_manifold(&GraphDescription {
            vertices: vec![
                disk(),
                GraphVertex {
                    kind: SurfaceKind::Disk(profile),
                    fiber: 2.0,
                },
            ],
            edges: vec![GraphEdge {
                a: (0, 0),
                b: (1, 0),
                word: Word::B,
            }],
        })
        .unwrap_err();
        assert!(matches!(err, AtlasError::GluingNotIsometric { .. }), "{err}");
    }

    #[test]
    fn corrupted_gluing_is_detected() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let p0 = atlas.find_chart("v0-polar").unwrap();
        let p1 = atlas.find_chart("v1-polar").unwrap();
        let mut transitions: Vec<TransitionMap> = atlas.transitions().to_vec();
        for t in &mut transitions {
            if t.from == p0 && t.to == p1 {
                if let CoordMap::AffineSwap { scale, .. } = &mut t.map {
                    scale[1] *= 2.0; // stretch the glued circle: not an isometry
                }
            }
        }
        let broken = Atlas::new("broken", atlas.charts().to_vec(), transitions).unwrap();
        let report = transition_consistency(&broken, 40, 3).unwrap();
        assert!(
            report.isometry_max > 1e-3,
            "corruption must show up in the isometry residual, got {:.3e}",
            report.isometry_max
        );
        assert!(!report.passes(1e-9));
    }

    #[test]
    fn flat_torus_atlas_is_a_single_flat_chart() {
        let atlas = build_flat_torus().unwrap();
        assert_eq!(atlas.charts().len(), 1);
        assert!(atlas.transitions().is_empty());
        let g = atlas
            .metric(&AtlasPoint::new(0, V3::new(0.3, 0.7, 0.2)))
            .unwrap();
        assert_relative_eq!(g, M3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn disk_cylinder_disk_graph_is_consistent_and_bulged() {
        let atlas = build_disk_cylinder_disk_graph(0.1, 0.22, 1.5, 0.35).unwrap();
        assert_eq!(atlas.charts().len(), 5);
        assert_eq!(atlas.transitions().len(), 8);
        let report = transition_consistency(&atlas, 60, 5).unwrap();
        assert!(report.passes(1e-9), "report: {report:?}");

        let cyl = atlas.find_chart("v1-cyl").unwrap();
        let chart = atlas.chart(cyl);
        // Exactly flat product on the collars, curved at the bulge shoulder.
        let flat = curvature_operator_at(chart, &V3::new(0.0, 0.3, 0.3)).unwrap();
        assert!(flat.operator.norm() < 1e-12);
        let shoulder = curvature_operator_at(chart, &V3::new(0.5, 0.3, 0.3)).unwrap();
        assert!(shoulder.operator.norm() > 1e-2, "{}", shoulder.operator.norm());
    }

    #[test]
    fn round3_atlas_is_consistent() {
        let atlas = build_round3(1.3);
        let report = transition_consistency(&atlas, 60, 9).unwrap();
        assert!(report.passes(1e-9), "report: {report:?}");
        assert!(report.fd_jacobian_max < 1e-5);
    }

    #[test]
    fn r3_blocks_atlas_is_consistent() {
        let atlas = build_r3_blocks(0.5, 1.5).unwrap();
        assert_eq!(atlas.charts().len(), 6);
        assert_eq!(atlas.transitions().len(), 10);
        let report = transition_consistency(&atlas, 60, 13).unwrap();
        assert!(report.passes(1e-9), "report: {report:?}");
    }

    #[test]
    fn r3_blocks_requires_room_for_the_core() {
        let err = build_r3_blocks(0.5, 0.9).unwrap_err();
        assert!(matches!(err, AtlasError::BadBlockGeometry { .. }), "{err}");
    }

    #[test]
    fn block_seam_swaps_tangent_and_fiber() {
        let atlas = build_r3_blocks(0.5, 1.5).unwrap();
        let f0 = atlas.find_chart("b0-fermi").unwrap();
        let f1 = atlas.find_chart("b1-fermi").unwrap();
        let t = atlas.transition_between(f0, f1).unwrap();
        let p = V3::new(0.7, 0.04, -1.1);
        let q = t.apply(&p);
        assert_relative_eq!(q, V3::new(-1.1, COLLAR_WIDTH - 0.04, 0.7), epsilon = 1e-14);
        // Straight seam-level geodesics map to straight ones: constant J.
        let j = t.jacobian(&p);
        assert_relative_eq!(j * V3::new(1.0, 0.0, 0.0), V3::new(0.0, 0.0, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn export_is_versioned_and_deterministic() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let dump = atlas.export();
        assert!(dump.starts_with("atlas-schema 1\n"));
        for id in ["v0-polar", "v0-cap", "v1-polar", "v1-cap"] {
            assert!(dump.contains(&format!("chart {id}")), "missing {id}");
        }
        assert_eq!(dump, atlas.export());
    }

    #[test]
    fn sampled_points_remain_in_domain() {
        for atlas in [
            build_two_disk_graph(0.1, 0.22).unwrap(),
            build_r3_blocks(0.5, 1.5).unwrap(),
            build_round3(1.0),
        ] {
            for p in atlas.sample_points(42, 64) {
                assert!(atlas.contains(&p), "{} left {:?}", atlas.name, p);
                assert!(atlas.metric(&p).is_ok());
            }
        }
    }
}
