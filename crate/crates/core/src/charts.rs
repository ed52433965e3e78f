//! Closed-form chart library.
//!
//! Every field here implements [`MetricField`] with exact metric,
//! Christoffel symbols, and curvature operator (in the wedge basis of the
//! chart's canonical Gram–Schmidt frame — for the diagonal metrics below
//! that frame is just the normalized coordinate frame). The
//! finite-difference pipeline in [`crate::metric`] is validated against
//! these closed forms and takes over only for fields that lack them.
//!
//! Coordinate conventions per family:
//! - Euclidean charts: Cartesian `(x, y, z)`, identity metric.
//! - Polar-style charts: `(r, theta, axis)` with metric
//!   `dr^2 + f(r)^2 dtheta^2 + daxis^2`; only `f` varies by family.
//! - Stereographic sphere charts: conformal factor `(2/k) / (1/k + |x|^2)`
//!   squared, i.e. the round metric of constant sectional curvature `k`.
//! - Product hyperbolic: half-plane-like slab `dt^2 + e^{2t} dx^2 + dy^2`.
//! - Twisted slab: `dt^2 + dx^2 + w(t,x)^2 dy^2` with `w = t + x^2`.

use std::sync::Arc;

use crate::chart::{ChartMetric, DomainBox, FieldDescriptor, MetricField, SampleRegion};
use crate::linalg::{M3, V3};
use crate::metric::Christoffel;
use crate::profile::{smoothstep_jet, ConeProfile, DiskProfile, RampProfile};

const INF: f64 = f64::INFINITY;

// ---------------------------------------------------------------------------
// Euclidean

/// Identity metric in Cartesian coordinates.
#[derive(Clone, Copy, Debug)]
pub struct FlatField;

impl MetricField for FlatField {
    fn metric(&self, _p: &V3) -> M3 {
        M3::identity()
    }
    fn christoffel(&self, _p: &V3) -> Option<Christoffel> {
        Some(Christoffel::zero())
    }
    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        Some(M3::zeros())
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("euclidean")
    }
}

/// Large flat chart used by the `flat3` model and as a numeric control.
pub fn flat_chart() -> ChartMetric {
    ChartMetric::new(
        "flat",
        DomainBox::new([-50.0, -50.0, -50.0], [50.0, 50.0, 50.0]),
        Arc::new(FlatField),
    )
    .with_sample_box(DomainBox::new([-2.0, -2.0, -2.0], [2.0, 2.0, 2.0]))
}

/// Flat chart over an arbitrary box, optionally with periodic coordinates.
/// Used for collar joints, cylinder bodies, tori, and disk caps.
pub fn euclidean_chart(
    id: impl Into<String>,
    min: [f64; 3],
    max: [f64; 3],
    wrap: [Option<f64>; 3],
) -> ChartMetric {
    ChartMetric::new(id, DomainBox::new(min, max), Arc::new(FlatField)).with_wrap(wrap)
}

// ---------------------------------------------------------------------------
// Polar-style fields: dr^2 + f(r)^2 dtheta^2 + dz^2

/// Shared Christoffel/curvature assembly for metrics
/// `diag(1, f(r)^2, 1)` in coordinates `(r, theta, z)`.
///
/// Nonzero symbols: `G^r_tt = -f f'`, `G^t_rt = f'/f`. The curvature
/// operator in the wedge basis of the normalized coordinate frame is
/// `diag(0, 0, -f''/f)`: only the `(r, theta)` surface carries curvature.
fn polar_christoffel(f: f64, df: f64) -> Christoffel {
    let mut g = Christoffel::zero();
    g.0[0][(1, 1)] = -f * df;
    let q = df / f;
    g.0[1][(0, 1)] = q;
    g.0[1][(1, 0)] = q;
    g
}

fn polar_curvature(f: f64, d2f: f64) -> M3 {
    M3::from_diagonal(&V3::new(0.0, 0.0, -d2f / f))
}

/// Flat metric in cylindrical coordinates (`f(r) = r`). A numeric control:
/// curvature must vanish despite nonconstant metric entries.
#[derive(Clone, Copy, Debug)]
pub struct FlatPolarField;

impl MetricField for FlatPolarField {
    fn metric(&self, p: &V3) -> M3 {
        M3::from_diagonal(&V3::new(1.0, p[0] * p[0], 1.0))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        Some(polar_christoffel(p[0], 1.0))
    }
    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        Some(M3::zeros())
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("euclidean_polar")
    }
}

pub fn flat_polar_chart() -> ChartMetric {
    ChartMetric::new(
        "flat_polar",
        DomainBox::new([0.02, -INF, -10.0], [5.0, INF, 10.0]),
        Arc::new(FlatPolarField),
    )
    .with_sample_box(DomainBox::new(
        [0.1, 0.0, -2.0],
        [2.5, 2.0 * std::f64::consts::PI, 2.0],
    ))
    .with_wrap([None, Some(2.0 * std::f64::consts::PI), None])
}

/// Rotationally symmetric surface profile times a line:
/// `dr^2 + phi(r)^2 dtheta^2 + dz^2`.
#[derive(Clone, Copy, Debug)]
pub struct WarpedPolarField {
    pub ramp: RampProfile,
}

impl MetricField for WarpedPolarField {
    fn metric(&self, p: &V3) -> M3 {
        let f = self.ramp.phi(p[0]);
        M3::from_diagonal(&V3::new(1.0, f * f, 1.0))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        Some(polar_christoffel(self.ramp.phi(p[0]), self.ramp.dphi(p[0])))
    }
    fn curvature_operator(&self, p: &V3) -> Option<M3> {
        Some(polar_curvature(self.ramp.phi(p[0]), self.ramp.d2phi(p[0])))
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("warped_polar")
            .with("r0", self.ramp.r0)
            .with("r1", self.ramp.r1)
            .with("slope1", self.ramp.slope1)
            .with("warp", self.ramp.warp)
    }
}

/// Polar chart of a capped-circumference disk piece crossed with a circle
/// fiber. Valid away from the axis; a Cartesian cap chart covers the center.
/// `r_max` should extend past the gluing interface of the enclosing atlas.
pub fn disk_polar_chart(
    id: impl Into<String>,
    profile: DiskProfile,
    r_max: f64,
    fiber_period: f64,
) -> ChartMetric {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r_min = 0.25 * profile.ramp.r0;
    ChartMetric::new(
        id,
        DomainBox::new([r_min, -INF, -INF], [r_max, INF, INF]),
        Arc::new(WarpedPolarField { ramp: profile.ramp }),
    )
    .with_sample_box(DomainBox::new(
        [1.2 * r_min, 0.0, 0.0],
        [r_max, two_pi, fiber_period],
    ))
    .with_wrap([None, Some(two_pi), Some(fiber_period)])
}

/// Cartesian cap over the flat center of a disk piece (`phi(r) = r` below
/// `r0`, so the cap metric is exactly Euclidean).
pub fn disk_cap_chart(id: impl Into<String>, profile: DiskProfile, fiber_period: f64) -> ChartMetric {
    let r0 = profile.ramp.r0;
    ChartMetric::new(
        id,
        DomainBox::new([-r0, -r0, -INF], [r0, r0, INF]),
        Arc::new(FlatField),
    )
    .with_sample_box(DomainBox::new([-r0, -r0, 0.0], [r0, r0, fiber_period]))
    .with_sample_region(SampleRegion::Disk2 { r: 0.9 * r0 })
    .with_wrap([None, None, Some(fiber_period)])
}

/// Polar chart of a smoothed cone (slope ramps 1 -> 1/2) crossed with a
/// line. Core of a half-plane block.
pub fn cone_polar_chart(id: impl Into<String>, profile: ConeProfile, r_max: f64) -> ChartMetric {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r_min = 0.25 * profile.ramp.r0;
    ChartMetric::new(
        id,
        DomainBox::new([r_min, -INF, -INF], [r_max, INF, INF]),
        Arc::new(WarpedPolarField { ramp: profile.ramp }),
    )
    .with_sample_box(DomainBox::new([1.2 * r_min, 0.0, -1.5], [r_max, two_pi, 1.5]))
    .with_wrap([None, Some(two_pi), None])
}

/// Cartesian cap over the flat core center of a half-plane block.
pub fn cone_cap_chart(id: impl Into<String>, profile: ConeProfile) -> ChartMetric {
    let r0 = profile.ramp.r0;
    ChartMetric::new(
        id,
        DomainBox::new([-r0, -r0, -INF], [r0, r0, INF]),
        Arc::new(FlatField),
    )
    .with_sample_box(DomainBox::new([-r0, -r0, -1.5], [r0, r0, 1.5]))
    .with_sample_region(SampleRegion::Disk2 { r: 0.9 * r0 })
}

/// Cylinder body `[0, length] x S^1 x S^1` with an optional barrel bulge:
/// metric `dx^2 + c(x)^2 da^2 + dbeta^2` in coordinates `(x, a, beta)`,
/// where `a` has period 1 (the cylinder circle) and `beta` is the fiber.
///
/// `c(x) = 1 + bulge * plateau(x)` with a smoothstep plateau rising on
/// `[m0, m1]`, holding, and falling symmetrically before `length - m0`. Near
/// both ends `c` is exactly 1, so the metric is an exact unit-circumference
/// product on the gluing collars. A positive bulge makes the mid-body curved
/// (mixed-sign Gauss curvature at the plateau shoulders), which breaks any
/// would-be global parallel direction along the cylinder circle while
/// keeping the curvature operator rank <= 1 at every point.
#[derive(Clone, Copy, Debug)]
pub struct BulgedCylinderField {
    pub length: f64,
    pub bulge: f64,
    /// Plateau foot: `c = 1` exactly for `x <= m0` and `x >= length - m0`.
    pub m0: f64,
    /// Plateau shoulder: `c = 1 + bulge` on `[m1, length - m1]`.
    pub m1: f64,
}

impl BulgedCylinderField {
    /// `(c, c', c'')` at `x`, all in closed form.
    pub fn jet(&self, x: f64) -> (f64, f64, f64) {
        let w = self.m1 - self.m0;
        let (s1, d1, dd1) = smoothstep_jet((x - self.m0) / w);
        let (s2, d2, dd2) = smoothstep_jet((self.length - self.m0 - x) / w);
        let c = 1.0 + self.bulge * s1 * s2;
        let dc = self.bulge * (d1 * s2 - s1 * d2) / w;
        let ddc = self.bulge * (dd1 * s2 - 2.0 * d1 * d2 + s1 * dd2) / (w * w);
        (c, dc, ddc)
    }
}

impl MetricField for BulgedCylinderField {
    fn metric(&self, p: &V3) -> M3 {
        let (c, _, _) = self.jet(p[0]);
        M3::from_diagonal(&V3::new(1.0, c * c, 1.0))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        let (c, dc, _) = self.jet(p[0]);
        Some(polar_christoffel(c, dc))
    }
    fn curvature_operator(&self, p: &V3) -> Option<M3> {
        let (c, _, ddc) = self.jet(p[0]);
        Some(polar_curvature(c, ddc))
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("bulged_cylinder")
            .with("length", self.length)
            .with("bulge", self.bulge)
            .with("m0", self.m0)
            .with("m1", self.m1)
    }
}

/// Chart for a cylinder vertex piece. `overhang` is how far the chart
/// extends past each end circle (into the neighbouring pieces' collars,
/// where the metric continues as the exact product).
pub fn cylinder_chart(
    id: impl Into<String>,
    length: f64,
    bulge: f64,
    fiber_period: f64,
    overhang: f64,
) -> ChartMetric {
    let field = BulgedCylinderField {
        length,
        bulge,
        m0: 0.30 * length,
        m1: 0.45 * length,
    };
    ChartMetric::new(
        id,
        DomainBox::new([-overhang, -INF, -INF], [length + overhang, INF, INF]),
        Arc::new(field),
    )
    .with_sample_box(DomainBox::new([0.0, 0.0, 0.0], [length, 1.0, fiber_period]))
    .with_wrap([None, Some(1.0), Some(fiber_period)])
}

// ---------------------------------------------------------------------------
// Round sphere, stereographic coordinates

/// Constant curvature `k > 0` metric `lambda(x)^2 delta` with
/// `lambda = (2/k) / (1/k + |x|^2)`; two copies glued by inversion cover the
/// round 3-sphere.
#[derive(Clone, Copy, Debug)]
pub struct StereographicField {
    pub curvature: f64,
}

impl StereographicField {
    /// Squared stereographic radius: the transition sphere sits at
    /// `|x| = 1/sqrt(k)`.
    fn rho2(&self) -> f64 {
        1.0 / self.curvature
    }
}

impl MetricField for StereographicField {
    fn metric(&self, p: &V3) -> M3 {
        let r2 = self.rho2();
        let lambda = 2.0 * r2 / (r2 + p.norm_squared());
        M3::identity() * (lambda * lambda)
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        // Conformal metric e^{2 psi} delta: G^k_ij = d_i psi delta^k_j
        //   + d_j psi delta^k_i - d_k psi delta_ij, psi = log lambda.
        let u = -2.0 / (self.rho2() + p.norm_squared()) * p;
        let mut g = Christoffel::zero();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = 0.0;
                    if k == j {
                        v += u[i];
                    }
                    if k == i {
                        v += u[j];
                    }
                    if i == j {
                        v -= u[k];
                    }
                    g.0[k][(i, j)] = v;
                }
            }
        }
        Some(g)
    }
    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        Some(M3::identity() * self.curvature)
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("stereographic").with("curvature", self.curvature)
    }
}

/// One stereographic chart of the curvature-`k` round sphere. The domain box
/// reaches some way past the equator `|x| = 1/sqrt(k)`; samples stay inside
/// the ball where this chart is the preferred one.
pub fn stereographic_chart(id: impl Into<String>, curvature: f64) -> ChartMetric {
    let rho = 1.0 / curvature.sqrt();
    let ext = 1.45 * rho;
    ChartMetric::new(
        id,
        DomainBox::new([-ext, -ext, -ext], [ext, ext, ext]),
        Arc::new(StereographicField { curvature }),
    )
    .with_sample_region(SampleRegion::Ball3 { r: 1.15 * rho })
    .with_sample_box(DomainBox::new(
        [-1.15 * rho, -1.15 * rho, -1.15 * rho],
        [1.15 * rho, 1.15 * rho, 1.15 * rho],
    ))
}

// ---------------------------------------------------------------------------
// Product fields

/// `S^2(k) x R` in polar-arclength coordinates `(theta, phi, z)`:
/// `dtheta^2 + (sin(c theta)^2 / c^2) dphi^2 + dz^2`, `c = sqrt(k)`.
#[derive(Clone, Copy, Debug)]
pub struct ProductSphereField {
    pub curvature: f64,
}

impl MetricField for ProductSphereField {
    fn metric(&self, p: &V3) -> M3 {
        let c = self.curvature.sqrt();
        let f = (c * p[0]).sin() / c;
        M3::from_diagonal(&V3::new(1.0, f * f, 1.0))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        let c = self.curvature.sqrt();
        let f = (c * p[0]).sin() / c;
        let df = (c * p[0]).cos();
        Some(polar_christoffel(f, df))
    }
    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        Some(M3::from_diagonal(&V3::new(0.0, 0.0, self.curvature)))
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("product_sphere").with("curvature", self.curvature)
    }
}

/// Equatorial-belt chart of `S^2(k) x R` (polar caps excluded; the metric
/// degenerates at the poles and the product structure needs no second chart
/// for the verifications run on this model).
pub fn product_sphere_chart(curvature: f64) -> ChartMetric {
    let c = curvature.sqrt();
    let pi = std::f64::consts::PI;
    let two_pi = 2.0 * pi;
    ChartMetric::new(
        "s2xr",
        DomainBox::new([0.3 / c, -INF, -30.0], [(pi - 0.3) / c, INF, 30.0]),
        Arc::new(ProductSphereField { curvature }),
    )
    .with_sample_box(DomainBox::new(
        [0.45 / c, 0.0, -2.0],
        [(pi - 0.45) / c, two_pi, 2.0],
    ))
    .with_wrap([None, Some(two_pi), None])
}

/// `H^2 x R` in horocyclic coordinates `(t, x, y)`:
/// `dt^2 + e^{2t} dx^2 + dy^2` (curvature -1 base).
#[derive(Clone, Copy, Debug)]
pub struct ProductHyperbolicField;

impl MetricField for ProductHyperbolicField {
    fn metric(&self, p: &V3) -> M3 {
        let f = p[0].exp();
        M3::from_diagonal(&V3::new(1.0, f * f, 1.0))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        let f = p[0].exp();
        Some(polar_christoffel(f, f))
    }
    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        Some(M3::from_diagonal(&V3::new(0.0, 0.0, -1.0)))
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("product_hyperbolic")
    }
}

pub fn product_hyperbolic_chart() -> ChartMetric {
    ChartMetric::new(
        "h2xr",
        DomainBox::new([-2.5, -6.0, -30.0], [2.5, 6.0, 30.0]),
        Arc::new(ProductHyperbolicField),
    )
    .with_sample_box(DomainBox::new([-1.5, -2.0, -2.0], [1.5, 2.0, 2.0]))
}

// ---------------------------------------------------------------------------
// Twisted slab

/// `dt^2 + dx^2 + w(t,x)^2 dy^2` with `w = t + x^2` on the slab `w > 0`.
///
/// Curvature operator in the normalized coordinate frame wedge basis:
/// `diag(-w_xx / w, 0, 0)` — a single nonzero eigenvalue `-2/w` whose
/// magnitude decays along the `t` direction while the flat-plane line
/// field `span{d/dt}` is *not* parallel transverse to itself. This is the
/// canonical witness that pointwise rank-1 curvature does not force a
/// local product.
#[derive(Clone, Copy, Debug)]
pub struct TwistedField;

impl TwistedField {
    #[inline]
    pub fn w(p: &V3) -> f64 {
        p[0] + p[1] * p[1]
    }
}

impl MetricField for TwistedField {
    fn metric(&self, p: &V3) -> M3 {
        let w = Self::w(p);
        M3::from_diagonal(&V3::new(1.0, 1.0, w * w))
    }
    fn christoffel(&self, p: &V3) -> Option<Christoffel> {
        let w = Self::w(p);
        let (wt, wx) = (1.0, 2.0 * p[1]);
        let mut g = Christoffel::zero();
        g.0[0][(2, 2)] = -w * wt;
        g.0[1][(2, 2)] = -w * wx;
        g.0[2][(0, 2)] = wt / w;
        g.0[2][(2, 0)] = wt / w;
        g.0[2][(1, 2)] = wx / w;
        g.0[2][(2, 1)] = wx / w;
        Some(g)
    }
    fn curvature_operator(&self, p: &V3) -> Option<M3> {
        // w_tt = w_tx = 0, w_xx = 2: only sec(x, y) = -w_xx/w survives.
        Some(M3::from_diagonal(&V3::new(-2.0 / Self::w(p), 0.0, 0.0)))
    }
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor::new("twisted_slab")
    }
}

pub fn twisted_chart() -> ChartMetric {
    ChartMetric::new(
        "twisted",
        DomainBox::new([0.25, -1.2, -3.0], [6.0, 1.2, 3.0]),
        Arc::new(TwistedField),
    )
    .with_sample_box(DomainBox::new([0.4, -1.0, -2.0], [4.0, 1.0, 2.0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::profile::{build_cone_profile, build_disk_profile};

    #[test]
    fn stereographic_metric_and_transition_sphere() {
        let f = StereographicField { curvature: 1.0 };
        let g0 = f.metric(&V3::zeros());
        assert_relative_eq!(g0[(0, 0)], 4.0, epsilon = 1e-14);
        // At the equator |x| = 1 the factor is 1: metric = delta.
        let ge = f.metric(&V3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(ge[(1, 1)], 1.0, epsilon = 1e-14);
        // General curvature scales the transition sphere radius.
        let f4 = StereographicField { curvature: 4.0 };
        let ge4 = f4.metric(&V3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(ge4[(2, 2)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn twisted_slab_metric_depends_on_w() {
        let p = V3::new(2.0, 0.5, -1.0);
        let g = TwistedField.metric(&p);
        assert_relative_eq!(g[(2, 2)], 2.25 * 2.25, epsilon = 1e-14);
        assert_relative_eq!(
            TwistedField.curvature_operator(&p).unwrap()[(0, 0)],
            -2.0 / 2.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn disk_charts_agree_on_overlap() {
        // Same point through the polar chart and through the Cartesian cap:
        // arc lengths of a small circle must agree (phi(r) = r below r0).
        let prof = build_disk_profile(0.1, 0.22).unwrap();
        let polar = disk_polar_chart("p", prof, 0.35, 1.0);
        let r = 0.06;
        let g = polar.field().metric(&V3::new(r, 0.3, 0.2));
        assert_relative_eq!(g[(1, 1)], r * r, epsilon = 1e-14);
        let cap = disk_cap_chart("c", prof, 1.0);
        let gc = cap.field().metric(&V3::new(0.03, 0.02, 0.2));
        assert_relative_eq!(gc[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cone_chart_flat_zone_has_half_slope() {
        let prof = build_cone_profile(0.2, 0.5).unwrap();
        let chart = cone_polar_chart("cone", prof, 2.0);
        let g = chart.field().metric(&V3::new(1.0, 0.0, 0.0));
        let phi = 0.5 + prof.c0();
        assert_relative_eq!(g[(1, 1)], phi * phi, epsilon = 1e-13);
        let op = chart.field().curvature_operator(&V3::new(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(op.norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn product_sphere_curvature_parameter() {
        let f = ProductSphereField { curvature: 2.0 };
        let op = f.curvature_operator(&V3::new(0.7, 0.0, 0.0)).unwrap();
        assert_relative_eq!(op[(2, 2)], 2.0, epsilon = 1e-14);
        // Metric coefficient sin(c t)^2 / c^2 at theta = pi/(2c) is 1/c^2.
        let c = 2.0_f64.sqrt();
        let g = f.metric(&V3::new(std::f64::consts::FRAC_PI_2 / c, 0.0, 0.0));
        assert_relative_eq!(g[(1, 1)], 0.5, epsilon = 1e-14);
    }
}
