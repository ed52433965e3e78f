//! Adapted orthonormal frames `{E0, E1, E2}` along geodesics and the
//! identities they satisfy on rank-2 directions.
//!
//! The frame is built from a geodesic trace: `E0` is the velocity, `E1` is
//! the parallel transport of a chosen normal witness direction, and `E2`
//! completes the frame by the metric cross product at the start (then rides
//! the same transported basis, so it stays orthonormal and continuous
//! across chart transitions). The scalar comparison function `f` solves
//! `f'' + sec(E0 ^ E2) f = 0`, `f(0) = 0`, `f'(0) = 1` along the trace.
//!
//! Three verification layers:
//!
//! - `f_ode_check`: the Jacobi fields with seeds `(0, E1(0))` and
//!   `(0, E2(0))` must reproduce `t E1(t)` and `f(t) E2(t)` when the
//!   witness plane is flat along the trace.
//! - `christoffel_table_residual`: finite differences of the frame fields
//!   over an exponential-coordinate grid (radial time x angular rotation)
//!   recover the connection table of the radially adapted frame:
//!   covariant derivative of `E0` along the `E1`-family equals `(1/t)` times
//!   the family tangent, along the `E2`-family `(f'/f)` times it, and the
//!   mixed coefficient `<nabla_{E1} E1, E2>` vanishes.
//! - `flat_sheet_check`: the surface swept by geodesics tangent to a flat
//!   plane through a point keeps its transported normal (vanishing second
//!   fundamental form), closes geodesic quadrilaterals (induced flatness),
//!   and carries a path-independent line foliation.

use thiserror::Error;

use crate::atlas::{wrap_diff, Atlas, AtlasPoint};
use crate::flows::{
    geodesic, jacobi_evolve, sample_sectional, transport, transport_to, FlowError, GeodesicTrace,
    TraceOptions,
};
use crate::linalg::{gcross, gdot, gnorm, gnormalize, line_angle, V3};
use crate::metric::{christoffel_at, metric_at};
use crate::tol;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("witness plane is not flat along the trace: sec = {sec:.3e} at t = {t:.4}")]
    WitnessNotFlat { t: f64, sec: f64 },
    #[error("exponential map is singular at t = {t:.4} (t*f = {det:.3e})")]
    SingularExpMap { t: f64, det: f64 },
    #[error("direction is not unit ({0})")]
    NotUnit(f64),
    #[error("directions are not orthogonal (<a,b> = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("every grid point was excluded (stencils crossed chart boundaries)")]
    EmptyGrid,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Metric(#[from] crate::metric::MetricError),
}

/// Parallel orthonormal frame along a geodesic with the comparison scalar.
#[derive(Clone, Debug)]
pub struct AdaptedFrame {
    pub trace: GeodesicTrace,
    /// Witness direction at the start (`E1(0)`).
    pub e1_seed: V3,
    /// Completion at the start (`E2(0)`).
    pub e2_seed: V3,
    /// Largest `|sec(E0 ^ E1)|` observed across samples.
    pub max_sec01: f64,
    /// Scale `1 + max |M|` used for the flatness gate.
    pub sec_scale: f64,
}

impl AdaptedFrame {
    pub fn len(&self) -> usize {
        self.trace.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.trace.samples.is_empty()
    }
    pub fn t(&self, i: usize) -> f64 {
        self.trace.samples[i].t
    }
    pub fn e0(&self, i: usize) -> V3 {
        self.trace.samples[i].v
    }
    pub fn e1(&self, i: usize) -> V3 {
        self.trace.samples[i].w1
    }
    pub fn e2(&self, i: usize) -> V3 {
        self.trace.samples[i].w2
    }
    /// `(f, f')` at sample `i`.
    pub fn f(&self, i: usize) -> (f64, f64) {
        self.trace.samples[i].f.expect("frames integrate f")
    }
    pub fn f_samples(&self) -> Vec<(f64, f64, f64)> {
        self.trace
            .samples
            .iter()
            .map(|s| {
                let (f, fp) = s.f.expect("frames integrate f");
                (s.t, f, fp)
            })
            .collect()
    }
}

fn build_frame(
    atlas: &Atlas,
    p: AtlasPoint,
    v: &V3,
    w: &V3,
    horizon: f64,
    sample_times: &[f64],
    gate: bool,
) -> Result<AdaptedFrame, FrameError> {
    let g0 = atlas.metric(&p)?;
    let nv = gnorm(&g0, v);
    if (nv - 1.0).abs() > 1e-6 {
        return Err(FrameError::NotUnit(nv));
    }
    let nw = gnorm(&g0, w);
    if (nw - 1.0).abs() > 1e-6 {
        return Err(FrameError::NotUnit(nw));
    }
    let vw = gdot(&g0, v, w);
    if vw.abs() > 1e-6 {
        return Err(FrameError::NotOrthogonal(vw));
    }
    let e2 = gcross(&g0, v, w);
    let opts = TraceOptions {
        sample_times: sample_times.to_vec(),
        frame_seed: Some((*w, e2)),
        jacobi: true,
        f_ode: true,
        ..TraceOptions::default()
    };
    let trace = geodesic(atlas, p, *v, horizon, &opts)?;
    let mut max_sec01 = 0.0f64;
    let mut scale = 1.0f64;
    let mut worst_t = 0.0;
    for s in &trace.samples {
        let m = sample_sectional(atlas, s)?;
        scale = scale.max(1.0 + m.norm());
        if m[(0, 0)].abs() > max_sec01 {
            max_sec01 = m[(0, 0)].abs();
            worst_t = s.t;
        }
    }
    if gate && max_sec01 > tol::scaled(1e-5, scale - 1.0) {
        return Err(FrameError::WitnessNotFlat {
            t: worst_t,
            sec: max_sec01,
        });
    }
    Ok(AdaptedFrame {
        trace,
        e1_seed: *w,
        e2_seed: e2,
        max_sec01,
        sec_scale: scale,
    })
}

/// Build the adapted frame along the geodesic from `p` with velocity `v`,
/// transporting the witness `w` as `E1`. Fails with `WitnessNotFlat` if the
/// plane `E0 ^ E1` picks up sectional curvature anywhere along the trace.
pub fn adapted_frame(
    atlas: &Atlas,
    p: AtlasPoint,
    v: &V3,
    w: &V3,
    horizon: f64,
    sample_times: &[f64],
) -> Result<AdaptedFrame, FrameError> {
    build_frame(atlas, p, v, w, horizon, sample_times, true)
}

/// Same construction without the flatness gate, for frames along geodesics
/// of uniformly curved models where no flat witness exists.
pub fn transported_frame(
    atlas: &Atlas,
    p: AtlasPoint,
    v: &V3,
    w: &V3,
    horizon: f64,
    sample_times: &[f64],
) -> Result<AdaptedFrame, FrameError> {
    build_frame(atlas, p, v, w, horizon, sample_times, false)
}

/// Deviations of the two closed-form Jacobi predictions along a frame.
#[derive(Clone, Copy, Debug)]
pub struct FOdeReport {
    /// max over samples of `| J_{(0, E2)}(t) - f(t) E2(t) |_g`.
    pub max_jacobi_dev: f64,
    /// max over samples of `| J_{(0, E1)}(t) - t E1(t) |_g` (meaningful when
    /// the witness plane is flat; reported regardless).
    pub max_radial_dev: f64,
}

/// Compare the integrated scalar `f` against the full Jacobi system: the
/// normal Jacobi field seeded `(0, E2(0))` must equal `f(t) E2(t)`, and the
/// one seeded `(0, E1(0))` must equal `t E1(t)` when `E0 ^ E1` is flat.
pub fn f_ode_check(atlas: &Atlas, frame: &AdaptedFrame) -> Result<FOdeReport, FrameError> {
    let j2 = jacobi_evolve(&frame.trace, &V3::zeros(), &frame.e2_seed)?;
    let j1 = jacobi_evolve(&frame.trace, &V3::zeros(), &frame.e1_seed)?;
    let mut dev2 = 0.0f64;
    let mut dev1 = 0.0f64;
    for (i, s) in frame.trace.samples.iter().enumerate() {
        let g = metric_at(atlas.chart(s.chart), &s.x)?;
        let (f, _) = frame.f(i);
        dev2 = dev2.max(gnorm(&g, &(j2[i].j - f * s.w2)));
        dev1 = dev1.max(gnorm(&g, &(j1[i].j - s.t * s.w1)));
    }
    Ok(FOdeReport {
        max_jacobi_dev: dev2,
        max_radial_dev: dev1,
    })
}

// ---------------------------------------------------------------------------
// Connection table on exponential-coordinate grids

/// Residuals of the radially adapted connection table, measured by finite
/// differences of frame fields over exponential-coordinate grids.
#[derive(Clone, Copy, Debug)]
pub struct TableResidual {
    /// `| D_s E0 - (1/t) dX/ds |_g` over the witness-rotation family.
    pub radial_flat: f64,
    /// `| D_s E0 - (f'/f) dX/ds |_g` over the completion-rotation family.
    pub radial_second: f64,
    /// `| <D_s E1, E2>_g | / |dX/ds|_g` — the mixed coefficient that
    /// vanishes exactly when the radial flat distribution is totally
    /// geodesic.
    pub a112: f64,
    /// Independent transport check: `|covariant d/dt of E1, E2|_g` by
    /// clustered finite differences along the center trace.
    pub parallel_e0: f64,
    /// Largest `|sec(E0 ^ E1)|` seen on the center trace.
    pub max_sec01: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Five-point first-derivative stencil over `[-2h, -h, 0, +h, +2h]`
/// samples (center value unused).
fn stencil5(fm2: &V3, fm1: &V3, fp1: &V3, fp2: &V3, h: f64) -> V3 {
    (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
}

struct FamilyTraces {
    /// Traces at parameter offsets `[-2h, -h, +h, +2h]`.
    side: [GeodesicTrace; 4],
}

/// Verify the connection table of the adapted frame at base point `p`:
/// rotate the initial velocity `v0` inside the plane spanned with the
/// witness field (and separately with the completion), build the frame
/// fields on the exponential grid, and difference them.
///
/// `e1_of` supplies the witness direction for each rotated initial velocity
/// (the line field of flat planes on the direction sphere); its sign is
/// aligned by continuity with the center witness.
pub fn christoffel_table_residual(
    atlas: &Atlas,
    p: AtlasPoint,
    v0: &V3,
    e1_of: &dyn Fn(&V3) -> V3,
    t_samples: &[f64],
    h_s: f64,
) -> Result<TableResidual, FrameError> {
    let g0 = atlas.metric(&p)?;
    let nv = gnorm(&g0, v0);
    if (nv - 1.0).abs() > 1e-6 {
        return Err(FrameError::NotUnit(nv));
    }
    let w0 = witness_at(&g0, v0, e1_of, None).ok_or(FrameError::NotOrthogonal(1.0))?;
    let horizon = t_samples.iter().copied().fold(0.0f64, f64::max);

    // Center frame carries f and the flatness diagnostic.
    let center = transported_frame(atlas, p, v0, &w0, horizon, t_samples)?;
    for (i, &t) in t_samples.iter().enumerate() {
        let (f, _) = center.f(center_index(&center, t).ok_or(FrameError::EmptyGrid)?);
        let det = t * f;
        if det.abs() < 1e-8 {
            return Err(FrameError::SingularExpMap { t, det });
        }
        let _ = i;
    }

    let e2_0 = center.e2_seed;

    // Family A: rotate v toward the witness field.
    let fam_a = rotate_family(atlas, p, v0, &w0, Some(e1_of), horizon, t_samples, h_s)?;
    // Family B: rotate v toward the completion; only positions and E0 are
    // differenced, so the side witnesses just need to be smooth (use the
    // transported center pair projected).
    let fam_b = rotate_family(atlas, p, v0, &e2_0, None, horizon, t_samples, h_s)?;

    let mut radial_flat = 0.0f64;
    let mut radial_second = 0.0f64;
    let mut a112 = 0.0f64;
    let mut checked = 0usize;
    let mut excluded = 0usize;

    for &t in t_samples {
        let ci = match center_index(&center, t) {
            Some(i) => i,
            None => {
                excluded += 1;
                continue;
            }
        };
        let sc = &center.trace.samples[ci];
        let chart = atlas.chart(sc.chart);
        let g = metric_at(chart, &sc.x)?;
        let gamma = christoffel_at(chart, &sc.x)?;
        let (f, fp) = center.f(ci);

        // Family A: flat-direction radial Hessian and the mixed term.
        if let Some([m2, m1, p1, p2]) = family_samples(&fam_a, t, sc.chart) {
            let dx = stencil5(&m2.x, &m1.x, &p1.x, &p2.x, h_s);
            let de0 = stencil5(&m2.v, &m1.v, &p1.v, &p2.v, h_s);
            let de1 = stencil5(&m2.w1, &m1.w1, &p1.w1, &p2.w1, h_s);
            let ds_e0 = de0 + gamma.apply(&dx, &sc.v);
            let ds_e1 = de1 + gamma.apply(&dx, &sc.w1);
            radial_flat = radial_flat.max(gnorm(&g, &(ds_e0 - dx / t)));
            let tnorm = gnorm(&g, &dx);
            if tnorm > 1e-12 {
                a112 = a112.max(gdot(&g, &ds_e1, &sc.w2).abs() / tnorm);
            }
            checked += 1;
        } else {
            excluded += 1;
        }

        // Family B: second-direction radial Hessian against f'/f.
        if let Some([m2, m1, p1, p2]) = family_samples(&fam_b, t, sc.chart) {
            let dx = stencil5(&m2.x, &m1.x, &p1.x, &p2.x, h_s);
            let de0 = stencil5(&m2.v, &m1.v, &p1.v, &p2.v, h_s);
            let ds_e0 = de0 + gamma.apply(&dx, &sc.v);
            radial_second = radial_second.max(gnorm(&g, &(ds_e0 - (fp / f) * dx)));
            checked += 1;
        } else {
            excluded += 1;
        }
    }
    if checked == 0 {
        return Err(FrameError::EmptyGrid);
    }

    // Independent parallelism check with clustered samples on a fresh
    // center trace.
    let delta = 5e-4;
    let mut cluster: Vec<f64> = Vec::new();
    for &t in t_samples {
        cluster.extend_from_slice(&[t - delta, t, t + delta]);
    }
    let ctrace = transported_frame(atlas, p, v0, &w0, horizon + delta, &cluster)?;
    let mut parallel_e0 = 0.0f64;
    for &t in t_samples {
        let (im, i0, ip) = match (
            center_index(&ctrace, t - delta),
            center_index(&ctrace, t),
            center_index(&ctrace, t + delta),
        ) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => continue,
        };
        let (sm, s0, sp) = (
            &ctrace.trace.samples[im],
            &ctrace.trace.samples[i0],
            &ctrace.trace.samples[ip],
        );
        if sm.chart != s0.chart || sp.chart != s0.chart {
            continue;
        }
        let chart = atlas.chart(s0.chart);
        let g = metric_at(chart, &s0.x)?;
        let gamma = christoffel_at(chart, &s0.x)?;
        for pick in [|s: &crate::flows::TraceSample| s.w1, |s: &crate::flows::TraceSample| s.w2] {
            let dt = (pick(sp) - pick(sm)) / (2.0 * delta);
            let cov = dt + gamma.apply(&s0.v, &pick(s0));
            parallel_e0 = parallel_e0.max(gnorm(&g, &cov));
        }
    }

    Ok(TableResidual {
        radial_flat,
        radial_second,
        a112,
        parallel_e0,
        max_sec01: center.max_sec01,
        checked,
        excluded,
    })
}

/// Witness direction at `v`: evaluate the field, project normal to `v`,
/// normalize, and align the sign with `align` (if given).
fn witness_at(g: &crate::linalg::M3, v: &V3, e1_of: &dyn Fn(&V3) -> V3, align: Option<&V3>) -> Option<V3> {
    let raw = e1_of(v);
    let proj = raw - gdot(g, &raw, v) * v;
    let mut w = gnormalize(g, &proj)?;
    if let Some(a) = align {
        if gdot(g, &w, a) < 0.0 {
            w = -w;
        }
    }
    Some(w)
}

fn center_index(frame: &AdaptedFrame, t: f64) -> Option<usize> {
    frame
        .trace
        .samples
        .iter()
        .position(|s| (s.t - t).abs() < 1e-9)
}

#[allow(clippy::too_many_arguments)]
fn rotate_family(
    atlas: &Atlas,
    p: AtlasPoint,
    v0: &V3,
    toward: &V3,
    e1_of: Option<&dyn Fn(&V3) -> V3>,
    horizon: f64,
    t_samples: &[f64],
    h_s: f64,
) -> Result<FamilyTraces, FrameError> {
    let g0 = atlas.metric(&p)?;
    let mut side: Vec<GeodesicTrace> = Vec::with_capacity(4);
    for k in [-2.0, -1.0, 1.0, 2.0] {
        let s = k * h_s;
        let v = s.cos() * v0 + s.sin() * toward;
        let w = match e1_of {
            Some(field) => witness_at(&g0, &v, field, Some(toward))
                .ok_or(FrameError::NotOrthogonal(1.0))?,
            None => {
                // Any smooth normal seed works: project the center witness
                // pair; fall back to the rotation complement.
                let cand = *toward - gdot(&g0, toward, &v) * v;
                match gnormalize(&g0, &cand) {
                    Some(w) => w,
                    None => s.cos() * toward - s.sin() * v0,
                }
            }
        };
        let e2 = gcross(&g0, &v, &w);
        let opts = TraceOptions {
            sample_times: t_samples.to_vec(),
            frame_seed: Some((w, e2)),
            ..TraceOptions::default()
        };
        side.push(geodesic(atlas, p, v, horizon, &opts)?);
    }
    let [a, b, c, d] = <[GeodesicTrace; 4]>::try_from(side).map_err(|_| FrameError::EmptyGrid)?;
    Ok(FamilyTraces { side: [a, b, c, d] })
}

/// Samples of the four side traces at time `t`, provided they all landed in
/// `chart` (stencils across different charts are meaningless).
fn family_samples<'a>(
    fam: &'a FamilyTraces,
    t: f64,
    chart: usize,
) -> Option<[&'a crate::flows::TraceSample; 4]> {
    let mut out: Vec<&crate::flows::TraceSample> = Vec::with_capacity(4);
    for tr in &fam.side {
        let s = tr.samples.iter().find(|s| (s.t - t).abs() < 1e-9)?;
        if s.chart != chart {
            return None;
        }
        out.push(s);
    }
    out.try_into().ok()
}

// ---------------------------------------------------------------------------
// Totally geodesic flat sheets

/// Residuals of the flat-sheet verification at one base point and plane.
#[derive(Clone, Copy, Debug)]
pub struct SheetResidual {
    /// Second-fundamental-form proxy: worst non-orthogonality of the
    /// transported normal against the sheet tangents.
    pub normal_dev: f64,
    /// Worst gap (chart coordinates) of geodesic quadrilaterals with sides
    /// in the sheet.
    pub closure_dev: f64,
    /// Worst angle between the line direction transported along two
    /// different in-sheet paths to (almost) the same point.
    pub foliation_dev: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Verify that the surface swept by geodesics tangent to `span{xi, v}` at
/// `p` is a totally geodesic flat sheet: the transported normal stays
/// normal, geodesic quadrilaterals close, and transporting `xi` is
/// path-independent inside the sheet. `nr` radial rings up to `r_max`,
/// `na` spokes (must be a multiple of 4, so that quadrilateral legs reuse
/// the orthogonal spokes).
pub fn flat_sheet_check(
    atlas: &Atlas,
    p: AtlasPoint,
    xi: &V3,
    v: &V3,
    r_max: f64,
    nr: usize,
    na: usize,
) -> Result<SheetResidual, FrameError> {
    assert!(na >= 8 && na % 4 == 0, "need a multiple of 4 spokes");
    let g0 = atlas.metric(&p)?;
    for d in [xi, v] {
        let n = gnorm(&g0, d);
        if (n - 1.0).abs() > 1e-6 {
            return Err(FrameError::NotUnit(n));
        }
    }
    let ip = gdot(&g0, xi, v);
    if ip.abs() > 1e-6 {
        return Err(FrameError::NotOrthogonal(ip));
    }
    let n0 = gcross(&g0, xi, v);
    let rings: Vec<f64> = (1..=nr).map(|i| r_max * i as f64 / nr as f64).collect();

    // One trace per spoke; the frame seed starts with the sheet normal so
    // w1 samples are the transported normal field.
    let mut spokes: Vec<GeodesicTrace> = Vec::with_capacity(na);
    for j in 0..na {
        let alpha = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
        let dir = alpha.cos() * xi + alpha.sin() * v;
        let aux = gcross(&g0, &dir, &n0);
        let opts = TraceOptions {
            sample_times: rings.clone(),
            frame_seed: Some((n0, aux)),
            ..TraceOptions::default()
        };
        spokes.push(geodesic(atlas, p, dir, r_max, &opts)?);
    }
    let ring_sample = |j: usize, i: usize| -> &crate::flows::TraceSample {
        // samples[0] is t = 0; rings are 1-based beyond it.
        &spokes[j].samples[i + 1]
    };

    let mut normal_dev = 0.0f64;
    let mut closure_dev = 0.0f64;
    let mut foliation_dev = 0.0f64;
    let mut checked = 0usize;
    let mut excluded = 0usize;

    let dalpha = 2.0 * std::f64::consts::PI / na as f64;
    for i in 0..nr {
        for j in 0..na {
            let s = ring_sample(j, i);
            let sl = ring_sample((j + na - 1) % na, i);
            let sr = ring_sample((j + 1) % na, i);
            if s.chart != sl.chart || s.chart != sr.chart {
                excluded += 1;
                continue;
            }
            let chart = atlas.chart(s.chart);
            let g = metric_at(chart, &s.x)?;
            // Angular tangent of the sheet by central difference (periodic
            // coordinates unwrapped around the center sample).
            let dxl = wrap_diff(chart, &sl.x, &s.x);
            let dxr = wrap_diff(chart, &sr.x, &s.x);
            let tang = (dxr - dxl) / (2.0 * dalpha);
            let tn = gnorm(&g, &tang);
            if tn > 1e-9 {
                normal_dev = normal_dev.max(gdot(&g, &s.w1, &tang).abs() / tn);
            }
            normal_dev = normal_dev.max(gdot(&g, &s.w1, &s.v).abs());
            checked += 1;
        }
    }

    // Geodesic quadrilaterals: side a along spoke j to ring i, then side b
    // along the transported orthogonal direction; versus side b along the
    // orthogonal spoke first, then side a along the transported radial
    // direction. For a totally geodesic flat sheet both orders land on the
    // same point and transport xi identically.
    let b_len = rings[0];
    for i in 0..nr {
        for j in 0..na {
            let jq = (j + na / 4) % na; // spoke rotated by +90 degrees
            let a_len = rings[i];
            let sa = ring_sample(j, i);
            let perp_a = transport_to(&spokes[j], &spoke_perp(xi, v, j, na), i + 1);
            let t1 = geodesic(
                atlas,
                sa.point(),
                perp_a,
                b_len,
                &TraceOptions {
                    sample_times: vec![b_len],
                    ..TraceOptions::default()
                },
            );
            let sc = ring_sample(jq, 0);
            let dir_a = transport_to(&spokes[jq], &spoke_dir(xi, v, j, na), 1);
            let t2 = geodesic(
                atlas,
                sc.point(),
                dir_a,
                a_len,
                &TraceOptions {
                    sample_times: vec![a_len],
                    ..TraceOptions::default()
                },
            );
            let (t1, t2) = match (t1, t2) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    excluded += 1;
                    continue;
                }
            };
            let b1 = t1.end();
            let b2 = t2.end();
            if b1.chart != b2.chart {
                excluded += 1;
                continue;
            }
            let chart = atlas.chart(b1.chart);
            closure_dev = closure_dev.max(wrap_diff(chart, &b1.x, &b2.x).norm());

            // Foliation: transport xi along both paths.
            let xi_a = transport(&t1, &transport_to(&spokes[j], xi, i + 1));
            let xi_b = transport(&t2, &transport_to(&spokes[jq], xi, 1));
            let g = metric_at(chart, &b1.x)?;
            foliation_dev = foliation_dev.max(line_angle(&g, &xi_a, &xi_b));
            checked += 1;
        }
    }
    if checked == 0 {
        return Err(FrameError::EmptyGrid);
    }

    Ok(SheetResidual {
        normal_dev,
        closure_dev,
        foliation_dev,
        checked,
        excluded,
    })
}

fn spoke_dir(xi: &V3, v: &V3, j: usize, na: usize) -> V3 {
    let alpha = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
    alpha.cos() * xi + alpha.sin() * v
}

fn spoke_perp(xi: &V3, v: &V3, j: usize, na: usize) -> V3 {
    let alpha = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
    -alpha.sin() * xi + alpha.cos() * v
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_round3, build_two_disk_graph, Atlas};
    use crate::charts::{flat_chart, product_hyperbolic_chart, product_sphere_chart, twisted_chart};
    use approx::assert_relative_eq;

    fn times(n: usize, t_max: f64) -> Vec<f64> {
        (1..=n).map(|i| t_max * i as f64 / n as f64).collect()
    }

    #[test]
    fn flat_frame_is_constant_and_f_is_t() {
        let atlas = Atlas::single("flat3", flat_chart());
        let frame = adapted_frame(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            &V3::x(),
            &V3::y(),
            2.0,
            &times(8, 2.0),
        )
        .unwrap();
        for i in 0..frame.len() {
            assert_relative_eq!(frame.e1(i), V3::y(), epsilon = 1e-10);
            assert_relative_eq!(frame.e2(i), V3::z(), epsilon = 1e-10);
            let (f, fp) = frame.f(i);
            assert_relative_eq!(f, frame.t(i), epsilon = 1e-9);
            assert_relative_eq!(fp, 1.0, epsilon = 1e-9);
        }
        let report = f_ode_check(&atlas, &frame).unwrap();
        assert!(report.max_jacobi_dev < 1e-9);
        assert!(report.max_radial_dev < 1e-9);
    }

    #[test]
    fn product_frame_keeps_factor_directions() {
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let p = AtlasPoint::new(0, V3::new(1.2, 0.3, 0.0));
        let frame = adapted_frame(
            &atlas,
            p,
            &V3::x(),                  // sphere-tangent velocity
            &V3::z(),                  // line-direction witness
            1.5,
            &times(8, 1.5),
        )
        .unwrap();
        assert!(frame.max_sec01 < 1e-10);
        for i in 0..frame.len() {
            assert_relative_eq!(frame.e1(i), V3::z(), epsilon = 1e-8);
            // E2 stays tangent to the sphere factor.
            assert!(frame.e2(i)[2].abs() < 1e-8);
            let (f, _) = frame.f(i);
            assert_relative_eq!(f, frame.t(i).sin(), epsilon = 1e-7);
        }
        let report = f_ode_check(&atlas, &frame).unwrap();
        assert!(report.max_jacobi_dev < 1e-7, "dev {}", report.max_jacobi_dev);
        assert!(report.max_radial_dev < 1e-7, "dev {}", report.max_radial_dev);
    }

    #[test]
    fn twisted_frame_matches_hand_transport() {
        // Geodesic along the x-line from (1, 0, 0): the frame is
        // {d/dx, d/dt, d/dy / w} up to sign, with w = t + x^2 = 1 + s^2.
        let atlas = Atlas::single("twisted", twisted_chart());
        let frame = adapted_frame(
            &atlas,
            AtlasPoint::new(0, V3::new(1.0, 0.0, 0.0)),
            &V3::y(),
            &V3::x(), // d/dt is the witness: sec(dx ^ dt) = 0
            1.0,
            &times(5, 1.0),
        )
        .unwrap();
        for i in 0..frame.len() {
            let s = frame.t(i);
            let w = 1.0 + s * s;
            assert_relative_eq!(frame.e1(i), V3::x(), epsilon = 1e-9);
            assert_relative_eq!(frame.e2(i), V3::new(0.0, 0.0, -1.0 / w), epsilon = 1e-8);
        }
        let report = f_ode_check(&atlas, &frame).unwrap();
        assert!(report.max_jacobi_dev < 1e-7);
        assert!(report.max_radial_dev < 1e-7);
    }

    #[test]
    fn round_sphere_rejects_witness_but_transports_fine() {
        let atlas = build_round3(1.0);
        let p = AtlasPoint::new(0, V3::zeros());
        let v = V3::new(0.5, 0.0, 0.0);
        let w = V3::new(0.0, 0.5, 0.0);
        let err = adapted_frame(&atlas, p, &v, &w, 2.0, &times(6, 2.0)).unwrap_err();
        assert!(matches!(err, FrameError::WitnessNotFlat { .. }), "{err}");

        let frame = transported_frame(&atlas, p, &v, &w, 2.0, &times(6, 2.0)).unwrap();
        for i in 0..frame.len() {
            let (f, _) = frame.f(i);
            assert_relative_eq!(f, frame.t(i).sin(), epsilon = 1e-7);
        }
        // f E2 is still the exact Jacobi field in constant curvature.
        let report = f_ode_check(&atlas, &frame).unwrap();
        assert!(report.max_jacobi_dev < 1e-7);
        // ... but the radial identity J1 = t E1 must fail (J1 = sin t E1).
        assert!(report.max_radial_dev > 0.5);
    }

    #[test]
    fn collar_crossing_keeps_f_affine() {
        // Radial geodesic through the gluing seam of the two-disk graph
        // stays in flat collar metric: f'' = 0, so f(t) = t across the
        // transition event.
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let polar0 = atlas.find_chart("v0-polar").unwrap();
        let p = AtlasPoint::new(polar0, V3::new(0.30, 1.0, 0.4));
        let frame = adapted_frame(
            &atlas,
            p,
            &V3::x(),
            &V3::z(), // fiber direction
            0.3,
            &times(6, 0.3),
        )
        .unwrap();
        assert!(
            !frame.trace.events.is_empty(),
            "trace should cross the seam"
        );
        for i in 0..frame.len() {
            let (f, fp) = frame.f(i);
            assert_relative_eq!(f, frame.t(i), epsilon = 1e-9);
            assert_relative_eq!(fp, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn table_residuals_vanish_on_flat_space() {
        let atlas = Atlas::single("flat3", flat_chart());
        let field = |_: &V3| V3::y();
        let res = christoffel_table_residual(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            &V3::x(),
            &field,
            &[0.5, 1.0, 1.5],
            0.02,
        )
        .unwrap();
        assert!(res.radial_flat < 1e-5, "radial_flat {}", res.radial_flat);
        assert!(res.radial_second < 1e-5, "radial_second {}", res.radial_second);
        assert!(res.a112 < 1e-5, "a112 {}", res.a112);
        assert!(res.parallel_e0 < 1e-6, "parallel {}", res.parallel_e0);
        assert_eq!(res.excluded, 0);
    }

    #[test]
    fn table_residuals_hold_on_hyperbolic_product() {
        let atlas = Atlas::single("prod-h2r", product_hyperbolic_chart());
        let field = |_: &V3| V3::z(); // line direction spans the flat planes
        let res = christoffel_table_residual(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            &V3::x(),
            &field,
            &[0.4, 0.8, 1.2],
            0.02,
        )
        .unwrap();
        assert!(res.max_sec01 < 1e-10);
        assert!(res.radial_flat < 1e-4, "radial_flat {}", res.radial_flat);
        assert!(res.radial_second < 1e-4, "radial_second {}", res.radial_second);
        assert!(res.a112 < 1e-4, "a112 {}", res.a112);
        assert!(res.parallel_e0 < 1e-6, "parallel {}", res.parallel_e0);
    }

    #[test]
    fn table_residual_refines_at_second_order_or_better() {
        let atlas = Atlas::single("prod-h2r", product_hyperbolic_chart());
        let field = |_: &V3| V3::z();
        let run = |h: f64| {
            christoffel_table_residual(
                &atlas,
                AtlasPoint::new(0, V3::zeros()),
                &V3::x(),
                &field,
                &[0.4, 0.8],
                h,
            )
            .unwrap()
        };
        let coarse = run(0.16);
        let fine = run(0.08);
        assert!(
            fine.radial_flat < coarse.radial_flat / 3.0 + 1e-9,
            "coarse {} fine {}",
            coarse.radial_flat,
            fine.radial_flat
        );
    }

    #[test]
    fn graph_interface_zone_has_rotation_invariant_mixed_term() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let polar0 = atlas.find_chart("v0-polar").unwrap();
        // Base point in the curved ramp zone of the disk profile.
        let p = AtlasPoint::new(polar0, V3::new(0.16, 1.0, 0.3));
        let field = |_: &V3| V3::z(); // fiber line field
        let res = christoffel_table_residual(
            &atlas,
            p,
            &V3::x(),
            &field,
            &[0.06, 0.12, 0.18],
            0.02,
        )
        .unwrap();
        assert!(res.max_sec01 < 1e-8, "sec01 {}", res.max_sec01);
        assert!(res.a112 < 1e-4, "a112 {}", res.a112);
        assert!(res.radial_flat < 1e-4, "radial_flat {}", res.radial_flat);
    }

    #[test]
    fn singular_exponential_map_is_detected() {
        let atlas = build_round3(1.0);
        let field = |_: &V3| V3::new(0.0, 0.5, 0.0);
        let err = christoffel_table_residual(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            &V3::new(0.5, 0.0, 0.0),
            &field,
            &[std::f64::consts::PI],
            0.02,
        )
        .unwrap_err();
        assert!(matches!(err, FrameError::SingularExpMap { .. }), "{err}");
    }

    #[test]
    fn flat_sheets_close_on_models() {
        // Flat space: any plane, residuals at integrator noise.
        let atlas = Atlas::single("flat3", flat_chart());
        let res = flat_sheet_check(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            &V3::x(),
            &V3::y(),
            1.0,
            3,
            8,
        )
        .unwrap();
        assert!(res.normal_dev < 1e-7, "normal {}", res.normal_dev);
        assert!(res.closure_dev < 1e-7, "closure {}", res.closure_dev);
        assert!(res.foliation_dev < 1e-7, "foliation {}", res.foliation_dev);

        // Product: plane spanned by the line and a sphere direction.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let res = flat_sheet_check(
            &atlas,
            AtlasPoint::new(0, V3::new(1.2, 0.3, 0.0)),
            &V3::z(),
            &V3::x(),
            0.8,
            3,
            8,
        )
        .unwrap();
        assert!(res.normal_dev < 1e-6, "normal {}", res.normal_dev);
        assert!(res.closure_dev < 1e-6, "closure {}", res.closure_dev);
        assert!(res.foliation_dev < 1e-6, "foliation {}", res.foliation_dev);

        // Twisted slab: span{dt, dx} is a totally geodesic flat sheet even
        // though the metric is not a product.
        let atlas = Atlas::single("twisted", twisted_chart());
        let res = flat_sheet_check(
            &atlas,
            AtlasPoint::new(0, V3::new(1.0, 0.0, 0.0)),
            &V3::x(),
            &V3::y(),
            0.7,
            3,
            8,
        )
        .unwrap();
        assert!(res.normal_dev < 1e-5, "normal {}", res.normal_dev);
        assert!(res.closure_dev < 1e-5, "closure {}", res.closure_dev);
        assert!(res.foliation_dev < 1e-5, "foliation {}", res.foliation_dev);
    }

    #[test]
    fn sheet_check_flags_curved_planes() {
        // Control: a sphere-tangent plane in the product is NOT flat; the
        // quadrilateral gap must be visibly nonzero.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let res = flat_sheet_check(
            &atlas,
            AtlasPoint::new(0, V3::new(1.4, 0.3, 0.0)),
            &V3::x(),
            &gnormalize(
                &atlas
                    .metric(&AtlasPoint::new(0, V3::new(1.4, 0.3, 0.0)))
                    .unwrap(),
                &V3::y(),
            )
            .unwrap(),
            0.8,
            3,
            8,
        )
        .unwrap();
        assert!(
            res.closure_dev > 1e-3,
            "curved sheet should fail to close, got {}",
            res.closure_dev
        );
    }
}
