//! Global structure of the distinguished line field.
//!
//! At nonisotropic points the curvature operator singles out a line `L`.
//! This module studies how those lines organize in the large: whether the
//! field flows along geodesics, the shape operator of the orthogonal plane
//! distribution and its evolution equation, whether orthogonal leaves are
//! totally geodesic, candidate fields built by parallel transport from a
//! base point, and loop holonomy — including a search for a holonomy-fixed
//! line, the numerical signature of a metric product splitting.

use nalgebra::{SMatrix, SVector};
use rand::Rng;

use crate::atlas::{wrap_diff, Atlas, AtlasPoint};
use crate::flows::{
    geodesic, transport_polyline_full, transport_to, FlowError, TraceOptions,
};
use crate::linalg::{
    canonical_sign, complete_frame, gdot, gnormalize, gram_schmidt_frame,
    line_projector_distance, sym_eigen_sorted, M2, M3, V3,
};
use crate::metric::{christoffel_at, metric_at, MetricError};
use crate::pointwise::{classify_point, ClassifyError, PointClass, Tag};
use crate::sample::{fibonacci_sphere, index_rng, jittered_sphere};
use crate::tol::CURV_TOL;
use thiserror::Error;

type M6 = SMatrix<f64, 6, 6>;
type V6 = SVector<f64, 6>;

#[derive(Debug, Error)]
pub enum GlobalError {
    #[error(
        "chart {chart} point ({x:.4}, {y:.4}, {z:.4}) classifies as {tag}; \
         a single nonisotropic line is required here"
    )]
    MixedRegion {
        chart: usize,
        x: f64,
        y: f64,
        z: f64,
        tag: String,
    },
    #[error("field carries no stored sample near chart {chart} point {x:?}")]
    NotSampled { chart: usize, x: V3 },
    #[error("seed vector in chart {chart} is unusable: {detail}")]
    BadSeed { chart: usize, detail: String },
    #[error("loop `{name}` cannot be measured: {detail}")]
    DegenerateLoop { name: String, detail: String },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Classify and insist on a nonisotropic verdict.
fn nonisotropic_class(atlas: &Atlas, p: &AtlasPoint) -> Result<PointClass, GlobalError> {
    let chart = atlas.chart(p.chart);
    match classify_point(chart, &p.x, CURV_TOL) {
        Ok(pc) if pc.tag == Tag::Nonisotropic => Ok(pc),
        Ok(pc) => Err(mixed(p, format!("{:?}", pc.tag))),
        Err(ClassifyError::Metric(e)) => Err(GlobalError::Metric(e)),
        Err(e) => Err(mixed(p, e.to_string())),
    }
}

fn mixed(p: &AtlasPoint, tag: String) -> GlobalError {
    GlobalError::MixedRegion {
        chart: p.chart,
        x: p.x[0],
        y: p.x[1],
        z: p.x[2],
        tag,
    }
}

/// g-unit spanning direction of the line at `x`, sign-aligned to `along`.
fn kernel_dir(
    atlas: &Atlas,
    chart_idx: usize,
    x: &V3,
    along: Option<&V3>,
) -> Result<V3, GlobalError> {
    let p = AtlasPoint::new(chart_idx, *x);
    let pc = nonisotropic_class(atlas, &p)?;
    let mut d = pc.line_dir.expect("nonisotropic points carry a line");
    if let Some(a) = along {
        if d.dot(a) < 0.0 {
            d = -d;
        }
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Line fields

/// How a line field's samples were produced.
#[derive(Clone, Debug)]
pub enum Provenance {
    /// Read off the curvature operator kernel at each point.
    Kernel,
    /// Parallel transport of `xi` from `base` along radial geodesics.
    Transport { base: AtlasPoint, xi: V3 },
}

/// One sampled line.
#[derive(Clone, Debug)]
pub struct LineSample {
    pub point: AtlasPoint,
    /// g-unit spanning vector, sign-canonicalized.
    pub direction: V3,
    /// Rank-1 coordinate projector (Euclidean-unit spanning vector).
    pub projector: M3,
}

/// A line field known through samples (and, for kernel fields, evaluable
/// anywhere in the nonisotropic region).
#[derive(Clone, Debug)]
pub struct LineField {
    pub provenance: Provenance,
    pub samples: Vec<LineSample>,
    /// Radial directions dropped because the geodesic left the atlas.
    pub excluded: usize,
}

impl LineField {
    /// The field's line at `p`. Kernel fields re-read the curvature
    /// operator; transported fields only answer at stored sample points
    /// (matched up to coordinate wrap within `1e-7`).
    pub fn at(&self, atlas: &Atlas, p: &AtlasPoint) -> Result<LineSample, GlobalError> {
        match self.provenance {
            Provenance::Kernel => {
                let pc = nonisotropic_class(atlas, p)?;
                Ok(sample_from_class(p, &pc))
            }
            Provenance::Transport { .. } => {
                let chart = atlas.chart(p.chart);
                self.samples
                    .iter()
                    .find(|s| {
                        s.point.chart == p.chart
                            && wrap_diff(chart, &s.point.x, &p.x).norm() < 1e-7
                    })
                    .cloned()
                    .ok_or(GlobalError::NotSampled {
                        chart: p.chart,
                        x: p.x,
                    })
            }
        }
    }
}

fn sample_from_class(p: &AtlasPoint, pc: &PointClass) -> LineSample {
    LineSample {
        point: *p,
        direction: pc.line_dir.expect("nonisotropic points carry a line"),
        projector: pc.line.expect("nonisotropic points carry a projector"),
    }
}

/// Kernel line field over a sample set, plus a check that its integral
/// curves are geodesics (`∇_V V = 0` for a unit section `V` of the field).
#[derive(Clone, Debug)]
pub struct LineFieldReport {
    pub field: LineField,
    /// Max g-norm of `∇_V V` along integral curves of the field.
    pub geodesic_residual: f64,
    /// Number of integral curves the residual was measured on.
    pub curves: usize,
}

/// Evaluate the curvature-kernel line at every point (all must be
/// nonisotropic) and flow a few integral curves of the field to measure how
/// far `∇_V V` is from zero.
pub fn line_field_l(atlas: &Atlas, points: &[AtlasPoint]) -> Result<LineFieldReport, GlobalError> {
    let mut samples = Vec::with_capacity(points.len());
    for p in points {
        let pc = nonisotropic_class(atlas, p)?;
        samples.push(sample_from_class(p, &pc));
    }

    // Integral curves from up to four of the samples: midpoint (RK2) flow of
    // the oriented direction field, then a centered covariant derivative of
    // the section along each curve.
    let mut residual: f64 = 0.0;
    let mut curves = 0;
    let h = 0.02;
    let steps = 30;
    let stride = (samples.len() / 4).max(1);
    for s in samples.iter().step_by(stride) {
        let chart_idx = s.point.chart;
        let chart = atlas.chart(chart_idx);
        let mut x = s.point.x;
        let mut along = s.direction;
        let mut path: Vec<(V3, V3)> = vec![(x, along)];
        for _ in 0..steps {
            let k1 = kernel_dir(atlas, chart_idx, &x, Some(&along))?;
            let xm = x + 0.5 * h * k1;
            if !chart.domain.contains(&xm) {
                break;
            }
            let k2 = kernel_dir(atlas, chart_idx, &xm, Some(&k1))?;
            let xn = x + h * k2;
            if !chart.domain.contains(&xn) {
                break;
            }
            x = xn;
            along = kernel_dir(atlas, chart_idx, &x, Some(&along))?;
            path.push((x, along));
        }
        if path.len() < 3 {
            continue;
        }
        curves += 1;
        for k in 1..path.len() - 1 {
            let (xk, vk) = path[k];
            let dv = (path[k + 1].1 - path[k - 1].1) / (2.0 * h);
            let gamma = christoffel_at(chart, &xk)?;
            let cov = dv + gamma.apply(&vk, &vk);
            let g = metric_at(chart, &xk)?;
            residual = residual.max(gdot(&g, &cov, &cov).sqrt());
        }
    }

    Ok(LineFieldReport {
        field: LineField {
            provenance: Provenance::Kernel,
            samples,
            excluded: 0,
        },
        geodesic_residual: residual,
        curves,
    })
}

// ---------------------------------------------------------------------------
// Shape operator of the orthogonal plane field

/// The operator `w ↦ -∇_w V` of the plane field orthogonal to the line,
/// expressed in a g-orthonormal basis of that plane.
#[derive(Clone, Debug)]
pub struct ShapeSample {
    pub point: AtlasPoint,
    /// Oriented g-unit section of the line used as `V`.
    pub v: V3,
    /// g-orthonormal basis of the orthogonal plane.
    pub basis: (V3, V3),
    pub s: M2,
    pub tr: f64,
    pub det: f64,
}

/// Measure the shape operator at `p` by finite differences of the oriented
/// unit section of the line field. `hint` fixes the orientation of `V`
/// (callers chaining along a curve pass the previous direction).
pub fn shape_operator(
    atlas: &Atlas,
    p: &AtlasPoint,
    hint: Option<&V3>,
) -> Result<ShapeSample, GlobalError> {
    let chart = atlas.chart(p.chart);
    let mut v = kernel_dir(atlas, p.chart, &p.x, hint)?;
    if hint.is_none() {
        v = canonical_sign(&v);
    }
    let g = metric_at(chart, &p.x)?;
    let (b1, b2) = complete_frame(&g, &v);
    let gamma = christoffel_at(chart, &p.x)?;
    let h = 5e-4;

    let mut cov = [V3::zeros(), V3::zeros()];
    for (slot, b) in [b1, b2].iter().enumerate() {
        let vp = kernel_dir(atlas, p.chart, &(p.x + h * b), Some(&v))?;
        let vm = kernel_dir(atlas, p.chart, &(p.x - h * b), Some(&v))?;
        cov[slot] = (vp - vm) / (2.0 * h) + gamma.apply(b, &v);
    }
    // S_ij = -<∇_{b_j} V, b_i>_g on the orthogonal plane.
    let s = M2::new(
        -gdot(&g, &cov[0], &b1),
        -gdot(&g, &cov[1], &b1),
        -gdot(&g, &cov[0], &b2),
        -gdot(&g, &cov[1], &b2),
    );
    Ok(ShapeSample {
        point: *p,
        v,
        basis: (b1, b2),
        s,
        tr: s.trace(),
        det: s.determinant(),
    })
}

/// Riccati-type evolution of the shape operator along the line flow.
#[derive(Clone, Debug)]
pub struct EvolutionReport {
    /// Number of interior points the defect was evaluated at.
    pub checked: usize,
    /// Max |d/dt tr S − tr S²| along the flow (tr S² = (tr S)² − 2 det S).
    pub max_defect: f64,
    /// tr S at the first and last flow point.
    pub tr_ends: (f64, f64),
}

/// Flow the oriented line field from `p` for time `t_max` in `n` steps and
/// test the scalar evolution identity `d/dt tr S = tr S²` along the flow.
pub fn evolution_residual(
    atlas: &Atlas,
    p: &AtlasPoint,
    t_max: f64,
    n: usize,
    hint: Option<&V3>,
) -> Result<EvolutionReport, GlobalError> {
    let chart = atlas.chart(p.chart);
    let h = t_max / n as f64;
    let mut x = p.x;
    let mut along = kernel_dir(atlas, p.chart, &x, hint)?;
    let mut trs = Vec::with_capacity(n + 1);
    let mut dets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let sh = shape_operator(atlas, &AtlasPoint::new(p.chart, x), Some(&along))?;
        trs.push(sh.tr);
        dets.push(sh.det);
        along = sh.v;
        let k1 = kernel_dir(atlas, p.chart, &x, Some(&along))?;
        let xm = x + 0.5 * h * k1;
        if !chart.domain.contains(&xm) {
            break;
        }
        let k2 = kernel_dir(atlas, p.chart, &xm, Some(&k1))?;
        let xn = x + h * k2;
        if !chart.domain.contains(&xn) {
            break;
        }
        x = xn;
    }
    if trs.len() < 5 {
        return Err(GlobalError::BadSeed {
            chart: p.chart,
            detail: format!("flow leaves the chart after {} of {} steps", trs.len(), n),
        });
    }
    let mut max_defect: f64 = 0.0;
    let mut checked = 0;
    for k in 2..trs.len() - 2 {
        let d = (trs[k - 2] - 8.0 * trs[k - 1] + 8.0 * trs[k + 1] - trs[k + 2]) / (12.0 * h);
        let target = trs[k] * trs[k] - 2.0 * dets[k];
        max_defect = max_defect.max((d - target).abs());
        checked += 1;
    }
    Ok(EvolutionReport {
        checked,
        max_defect,
        tr_ends: (trs[0], *trs.last().unwrap()),
    })
}

// ---------------------------------------------------------------------------
// Totally geodesic orthogonal leaves

#[derive(Clone, Debug)]
pub struct GeodesyReport {
    /// Samples where the tilt was measured.
    pub checked: usize,
    /// Test geodesics that left the atlas early (their partial trace still
    /// contributes samples).
    pub escaped: usize,
    /// Samples skipped because the point was not nonisotropic.
    pub off_region: usize,
    /// Max |<γ', V>_g| over all measured samples.
    pub max_tilt: f64,
}

/// Shoot a geodesic from each seed after projecting the seed vector onto the
/// plane orthogonal to the line, and measure how much the velocity tilts out
/// of that plane (`<γ', V>_g`, zero iff the orthogonal leaves are totally
/// geodesic along the tested directions).
pub fn totally_geodesic_residual(
    atlas: &Atlas,
    seeds: &[(AtlasPoint, V3)],
    t_max: f64,
) -> Result<GeodesyReport, GlobalError> {
    let mut report = GeodesyReport {
        checked: 0,
        escaped: 0,
        off_region: 0,
        max_tilt: 0.0,
    };
    for (p, z) in seeds {
        let pc = nonisotropic_class(atlas, p)?;
        let v = pc.line_dir.expect("nonisotropic points carry a line");
        let g = metric_at(atlas.chart(p.chart), &p.x)?;
        let zperp = z - gdot(&g, z, &v) * v;
        let z0 = gnormalize(&g, &zperp).ok_or_else(|| GlobalError::BadSeed {
            chart: p.chart,
            detail: "seed vector is parallel to the line".into(),
        })?;
        let trace = match geodesic(atlas, *p, z0, t_max, &TraceOptions::default()) {
            Ok(tr) => tr,
            Err(FlowError::LeftAtlas { trace, .. }) => {
                report.escaped += 1;
                *trace
            }
            Err(e) => return Err(e.into()),
        };
        for s in &trace.samples {
            let sp = AtlasPoint::new(s.chart, s.x);
            match nonisotropic_class(atlas, &sp) {
                Ok(spc) => {
                    let w = spc.line_dir.expect("nonisotropic points carry a line");
                    let gs = metric_at(atlas.chart(s.chart), &s.x)?;
                    report.max_tilt = report.max_tilt.max(gdot(&gs, &s.v, &w).abs());
                    report.checked += 1;
                }
                Err(GlobalError::MixedRegion { .. }) => report.off_region += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Transported candidate fields

/// Build the candidate field obtained by parallel transport of the line at
/// `base` along radial geodesics: `n_dirs` jittered directions, each sampled
/// at `times_per_dir` uniform times up to `horizon`.
pub fn build_xp(
    atlas: &Atlas,
    base: AtlasPoint,
    horizon: f64,
    n_dirs: usize,
    times_per_dir: usize,
    seed: u64,
) -> Result<LineField, GlobalError> {
    let pc = nonisotropic_class(atlas, &base)?;
    let xi = pc.line_dir.expect("nonisotropic points carry a line");
    let g0 = metric_at(atlas.chart(base.chart), &base.x)?;
    let dirs = jittered_sphere(&g0, n_dirs, seed);

    let mut samples = vec![LineSample {
        point: base,
        direction: canonical_sign(&xi),
        projector: pc.line.expect("nonisotropic points carry a projector"),
    }];
    let mut excluded = 0;
    let times: Vec<f64> = (1..=times_per_dir)
        .map(|k| horizon * k as f64 / times_per_dir as f64)
        .collect();
    for dir in dirs {
        let opts = TraceOptions {
            sample_times: times.clone(),
            ..TraceOptions::default()
        };
        let trace = match geodesic(atlas, base, dir, horizon, &opts) {
            Ok(tr) => tr,
            Err(FlowError::LeftAtlas { trace, .. }) => {
                excluded += 1;
                *trace
            }
            Err(e) => return Err(e.into()),
        };
        for (idx, s) in trace.samples.iter().enumerate() {
            if s.t < 1e-12 {
                continue;
            }
            let w = transport_to(&trace, &xi, idx);
            let gs = metric_at(atlas.chart(s.chart), &s.x)?;
            let direction = canonical_sign(&gnormalize(&gs, &w).ok_or_else(|| {
                GlobalError::BadSeed {
                    chart: s.chart,
                    detail: "transported line vector collapsed".into(),
                }
            })?);
            let u = direction.normalize();
            samples.push(LineSample {
                point: AtlasPoint::new(s.chart, s.x),
                direction,
                projector: u * u.transpose(),
            });
        }
    }
    Ok(LineField {
        provenance: Provenance::Transport { base, xi },
        samples,
        excluded,
    })
}

/// How parallel a line field is along prescribed polyline curves.
#[derive(Clone, Debug)]
pub struct ParallelReport {
    pub curves: usize,
    /// Max projector distance between the transported start line and the
    /// field's own line at each curve end.
    pub max_distance: f64,
}

/// Transport the field's line along each polyline and compare with the
/// field's line at the far end (projector distance, `√2·sin(angle)`).
pub fn parallel_residual(
    atlas: &Atlas,
    field: &LineField,
    curves: &[Vec<AtlasPoint>],
    max_sub: f64,
) -> Result<ParallelReport, GlobalError> {
    let mut max_distance: f64 = 0.0;
    for pts in curves {
        let start = field.at(atlas, &pts[0])?;
        let (w, end) = transport_polyline_full(atlas, pts, &start.direction, max_sub)?;
        let target = field.at(atlas, &end)?;
        let g = metric_at(atlas.chart(end.chart), &end.x)?;
        max_distance = max_distance.max(line_projector_distance(&g, &w, &target.direction));
    }
    Ok(ParallelReport {
        curves: curves.len(),
        max_distance,
    })
}

// ---------------------------------------------------------------------------
// Loop holonomy and splitting detection

/// A closed loop of waypoints (first and last coincide). Consecutive points
/// in the same chart are joined by straight coordinate segments; a chart
/// change between consecutive points applies the registered transition map.
/// Keep consecutive wrapped coordinates closer than half a period, otherwise
/// the walk takes the short way around.
#[derive(Clone, Debug)]
pub struct Loop {
    pub name: String,
    pub points: Vec<AtlasPoint>,
}

/// Axis-aligned coordinate rectangle through `base` in the plane of
/// coordinates `axis_a` and `axis_b`, traversed a → b → −a → −b.
pub fn rect_loop(
    name: impl Into<String>,
    base: AtlasPoint,
    axis_a: usize,
    axis_b: usize,
    len_a: f64,
    len_b: f64,
) -> Loop {
    let mut a = V3::zeros();
    a[axis_a] = len_a;
    let mut b = V3::zeros();
    b[axis_b] = len_b;
    let at = |x: V3| AtlasPoint::new(base.chart, x);
    Loop {
        name: name.into(),
        points: vec![
            at(base.x),
            at(base.x + a),
            at(base.x + a + b),
            at(base.x + b),
            at(base.x),
        ],
    }
}

/// Measured holonomy of one loop.
#[derive(Clone, Debug)]
pub struct LoopHolonomy {
    pub name: String,
    /// Transport around the loop in base-chart coordinates.
    pub matrix: M3,
    /// The same conjugated into a g-orthonormal frame at the base point.
    pub on_frame: M3,
    /// ‖ĤᵀĤ − I‖_F: isometry defect of the measured transport.
    pub defect: f64,
}

/// Parallel-transport the coordinate basis around the loop and express the
/// resulting linear map in a g-orthonormal frame at the base point.
pub fn loop_holonomy(atlas: &Atlas, lp: &Loop, max_sub: f64) -> Result<LoopHolonomy, GlobalError> {
    if lp.points.len() < 2 {
        return Err(GlobalError::DegenerateLoop {
            name: lp.name.clone(),
            detail: "fewer than two waypoints".into(),
        });
    }
    let base = lp.points[0];
    let chart = atlas.chart(base.chart);
    let mut h = M3::zeros();
    let mut end_pt = base;
    for k in 0..3 {
        let mut e = V3::zeros();
        e[k] = 1.0;
        let (w, end) = transport_polyline_full(atlas, &lp.points, &e, max_sub)?;
        h.set_column(k, &w);
        end_pt = end;
    }
    if end_pt.chart != base.chart {
        return Err(GlobalError::DegenerateLoop {
            name: lp.name.clone(),
            detail: format!(
                "walk ends in chart {} instead of {}",
                end_pt.chart, base.chart
            ),
        });
    }
    let gap = wrap_diff(chart, &end_pt.x, &base.x).norm();
    if gap > 1e-6 {
        return Err(GlobalError::DegenerateLoop {
            name: lp.name.clone(),
            detail: format!("walk misses the base point by {gap:.3e}"),
        });
    }
    let g = metric_at(chart, &base.x)?;
    let f = gram_schmidt_frame(&g);
    let finv = f.try_inverse().expect("orthonormal frames are invertible");
    let on_frame = finv * h * f;
    let defect = (on_frame.transpose() * on_frame - M3::identity()).norm();
    Ok(LoopHolonomy {
        name: lp.name.clone(),
        matrix: h,
        on_frame,
        defect,
    })
}

/// Outcome of the holonomy-fixed-line search over a loop family.
#[derive(Clone, Debug)]
pub struct SplittingReport {
    pub loops: Vec<LoopHolonomy>,
    /// g-unit direction (base-chart coordinates) minimizing the worst-case
    /// line residual over all loops.
    pub best_direction: V3,
    /// min over directions of max over loops of ‖H P Hᵀ − P‖²_F for the
    /// rank-1 projector P onto the direction.
    pub best_residual: f64,
    /// Dimension of the subspace fixed vector-wise by every loop. 3 means
    /// the holonomy family is trivial and fixes every line.
    pub fixed_dim: usize,
    /// Rank-1 coordinate projector onto the fixed line, present when the
    /// best residual passes `tol`.
    pub projector: Option<M3>,
}

/// Exact Frobenius residual ‖H P Hᵀ − P‖²_F for P = v vᵀ, |v| = 1.
fn line_residual(hs: &[M3], v: &V3) -> f64 {
    hs.iter()
        .map(|h| {
            let hv = h * v;
            let n2 = hv.norm_squared();
            let c = hv.dot(v);
            n2 * n2 + 1.0 - 2.0 * c * c
        })
        .fold(0.0, f64::max)
}

/// Orthonormal basis of symmetric 3×3 matrices (Frobenius inner product).
fn sym_basis() -> [M3; 6] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = [M3::zeros(); 6];
    for (i, slot) in out.iter_mut().enumerate().take(3) {
        *slot = M3::zeros();
        slot[(i, i)] = 1.0;
    }
    for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let mut m = M3::zeros();
        m[(i, j)] = s;
        m[(j, i)] = s;
        out[3 + k] = m;
    }
    out
}

fn sym_to_vec(m: &M3, basis: &[M3; 6]) -> V6 {
    V6::from_iterator(basis.iter().map(|e| (m.component_mul(e)).sum()))
}

/// Search for a line fixed (as a line) by the holonomy of every loop.
/// Candidates come from the rotation axes of the measured holonomies, from
/// the least-moved symmetric matrix of the family, and from a deterministic
/// sphere scan; a shrinking jitter polish sharpens the winner.
pub fn splitting_detect(
    atlas: &Atlas,
    loops: &[Loop],
    max_sub: f64,
    tol: f64,
) -> Result<SplittingReport, GlobalError> {
    if loops.is_empty() {
        return Err(GlobalError::DegenerateLoop {
            name: "(family)".into(),
            detail: "no loops supplied".into(),
        });
    }
    let base = loops[0].points[0];
    let mut measured = Vec::with_capacity(loops.len());
    for lp in loops {
        if lp.points[0].chart != base.chart
            || wrap_diff(atlas.chart(base.chart), &lp.points[0].x, &base.x).norm() > 1e-9
        {
            return Err(GlobalError::DegenerateLoop {
                name: lp.name.clone(),
                detail: "loops must share a common base point".into(),
            });
        }
        let h = loop_holonomy(atlas, lp, max_sub)?;
        if h.defect > 1e-5 {
            return Err(GlobalError::DegenerateLoop {
                name: lp.name.clone(),
                detail: format!("transport is not an isometry (defect {:.3e})", h.defect),
            });
        }
        measured.push(h);
    }
    let hs: Vec<M3> = measured.iter().map(|m| m.on_frame).collect();

    // Candidate directions: rotation axes of each holonomy ...
    let mut candidates: Vec<V3> = Vec::new();
    for h in &hs {
        let axis = V3::new(
            h[(2, 1)] - h[(1, 2)],
            h[(0, 2)] - h[(2, 0)],
            h[(1, 0)] - h[(0, 1)],
        );
        if axis.norm() > 1e-9 {
            candidates.push(axis.normalize());
        }
    }
    // ... the top eigen-direction of the symmetric matrix least moved by
    // conjugation under the whole family ...
    let basis = sym_basis();
    let mut quad = M6::zeros();
    for h in &hs {
        let mut op = M6::zeros();
        for (j, e) in basis.iter().enumerate() {
            let img = h * e * h.transpose() - e;
            op.set_column(j, &sym_to_vec(&img, &basis));
        }
        quad += op.transpose() * op;
    }
    let se = nalgebra::SymmetricEigen::new(quad);
    let mut kmin = 0;
    for i in 1..6 {
        if se.eigenvalues[i] < se.eigenvalues[kmin] {
            kmin = i;
        }
    }
    let c = se.eigenvectors.column(kmin);
    let mut p_best = M3::zeros();
    for (j, e) in basis.iter().enumerate() {
        p_best += c[j] * e;
    }
    candidates.push(sym_eigen_sorted(&p_best)[0].1);
    // ... and a deterministic low-discrepancy scan.
    candidates.extend(fibonacci_sphere(1500));

    let mut best = candidates[0];
    let mut best_r = line_residual(&hs, &best);
    for c in &candidates[1..] {
        let r = line_residual(&hs, c);
        if r < best_r {
            best_r = r;
            best = *c;
        }
    }
    // Shrinking-jitter polish (deterministic).
    for (round, eps) in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5]
        .into_iter()
        .enumerate()
    {
        let mut rng = index_rng(0x5EED, round as u64);
        for _ in 0..48 {
            let jitter = V3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng));
            let cand = (best + eps * jitter).normalize();
            let r = line_residual(&hs, &cand);
            if r < best_r {
                best_r = r;
                best = cand;
            }
        }
    }

    // Vector-wise fixed subspace of the whole family.
    let mut a = M3::zeros();
    for h in &hs {
        let d = M3::identity() - h;
        a += d.transpose() * d;
    }
    let scale = 1.0 + a.norm();
    let fixed_dim = sym_eigen_sorted(&a)
        .iter()
        .filter(|(l, _)| l.abs() < 1e-10 * scale)
        .count();

    let g = metric_at(atlas.chart(base.chart), &base.x)?;
    let f = gram_schmidt_frame(&g);
    let dir_chart = f * best;
    let best_direction = canonical_sign(
        &gnormalize(&g, &dir_chart).expect("frame image of a unit vector cannot vanish"),
    );
    let projector = if best_r < tol {
        let u = best_direction.normalize();
        Some(u * u.transpose())
    } else {
        None
    };
    Ok(SplittingReport {
        loops: measured,
        best_direction,
        best_residual: best_r,
        fixed_dim,
        projector,
    })
}

fn gauss(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
