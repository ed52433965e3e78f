//! Chart containers: a coordinate box, a metric field on it, and optional
//! closed-form accelerators (Christoffel symbols, curvature oracle).

use std::sync::Arc;

use serde::Serialize;

use crate::linalg::{M3, V3};
use crate::metric::Christoffel;

/// Axis-aligned coordinate box; infinite extents are allowed on periodic or
/// unbounded axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBox {
    pub min: V3,
    pub max: V3,
}

impl DomainBox {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        DomainBox {
            min: V3::from(min),
            max: V3::from(max),
        }
    }

    pub fn contains(&self, p: &V3) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// Containment with all finite faces pulled inward by `margin`.
    pub fn contains_with_margin(&self, p: &V3, margin: f64) -> bool {
        (0..3).all(|i| {
            let lo = if self.min[i].is_finite() {
                self.min[i] + margin
            } else {
                self.min[i]
            };
            let hi = if self.max[i].is_finite() {
                self.max[i] - margin
            } else {
                self.max[i]
            };
            p[i] >= lo && p[i] <= hi
        })
    }

    /// Euclidean diagonal of the finite part, capped for FD-step scaling.
    pub fn capped_diagonal(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            let d = if self.min[i].is_finite() && self.max[i].is_finite() {
                self.max[i] - self.min[i]
            } else {
                crate::tol::FD_DIAG_CAP
            };
            s += d * d;
        }
        s.sqrt().min(crate::tol::FD_DIAG_CAP)
    }

    /// Signed distance-style exit indicator: max over axes of how far `p`
    /// sits outside the box (0 when inside).
    pub fn violation(&self, p: &V3) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..3 {
            if self.min[i].is_finite() {
                worst = worst.max(self.min[i] - p[i]);
            }
            if self.max[i].is_finite() {
                worst = worst.max(p[i] - self.max[i]);
            }
        }
        worst
    }
}

/// Restriction of the sampling box for charts whose natural domain is not a
/// box (balls in stereographic charts, disks in cap charts).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SampleRegion {
    /// The whole sampling box.
    Box,
    /// Euclidean ball |x| <= r.
    Ball3 { r: f64 },
    /// Disk in the first two coordinates: hypot(x0, x1) <= r.
    Disk2 { r: f64 },
}

impl SampleRegion {
    pub fn accepts(&self, p: &V3) -> bool {
        match self {
            SampleRegion::Box => true,
            SampleRegion::Ball3 { r } => p.norm() <= *r,
            SampleRegion::Disk2 { r } => p.fixed_rows::<2>(0).norm() <= *r,
        }
    }
}

/// Serializable description of a metric field, used by the atlas export and
/// by reports. Values are the construction parameters, not samples.
#[derive(Clone, Debug, Serialize)]
pub struct FieldDescriptor {
    pub kind: &'static str,
    pub params: Vec<(&'static str, f64)>,
}

impl FieldDescriptor {
    pub fn new(kind: &'static str) -> Self {
        FieldDescriptor {
            kind,
            params: Vec::new(),
        }
    }
    pub fn with(mut self, key: &'static str, value: f64) -> Self {
        self.params.push((key, value));
        self
    }
}

/// A smooth Riemannian metric on a coordinate chart.
///
/// `metric` is the only mandatory method. `christoffel` and
/// `curvature_operator` expose closed forms when the chart has them; the
/// numerical pipeline falls back to finite differences otherwise. The
/// curvature operator is always expressed in the wedge basis
/// `{e2^e3, e3^e1, e1^e2}` of the chart's canonical Gram–Schmidt frame at
/// the evaluation point.
pub trait MetricField: Send + Sync {
    fn metric(&self, p: &V3) -> M3;

    fn christoffel(&self, _p: &V3) -> Option<Christoffel> {
        None
    }

    fn curvature_operator(&self, _p: &V3) -> Option<M3> {
        None
    }

    fn descriptor(&self) -> FieldDescriptor;
}

/// A chart: an identifier, a domain box, sampling information, coordinate
/// periods, and the metric field itself.
#[derive(Clone)]
pub struct ChartMetric {
    pub id: String,
    pub domain: DomainBox,
    /// Box used by point samplers; must sit inside `domain` with margin.
    pub sample_box: DomainBox,
    pub sample_region: SampleRegion,
    /// Period per coordinate for angle-like axes (used when canonicalising
    /// points for comparison/export, never during integration).
    pub wrap: [Option<f64>; 3],
    field: Arc<dyn MetricField>,
}

impl ChartMetric {
    pub fn new(id: impl Into<String>, domain: DomainBox, field: Arc<dyn MetricField>) -> Self {
        ChartMetric {
            id: id.into(),
            domain,
            sample_box: domain,
            sample_region: SampleRegion::Box,
            wrap: [None; 3],
            field,
        }
    }

    pub fn with_sample_box(mut self, b: DomainBox) -> Self {
        self.sample_box = b;
        self
    }

    pub fn with_sample_region(mut self, r: SampleRegion) -> Self {
        self.sample_region = r;
        self
    }

    pub fn with_wrap(mut self, wrap: [Option<f64>; 3]) -> Self {
        self.wrap = wrap;
        self
    }

    pub fn field(&self) -> &Arc<dyn MetricField> {
        &self.field
    }

    /// Copy of this chart with closed-form Christoffel symbols and curvature
    /// oracle hidden, forcing the finite-difference pipeline. Used by
    /// oracle-agreement tests.
    pub fn without_closed_forms(&self) -> ChartMetric {
        struct Stripped(Arc<dyn MetricField>);
        impl MetricField for Stripped {
            fn metric(&self, p: &V3) -> M3 {
                self.0.metric(p)
            }
            fn descriptor(&self) -> FieldDescriptor {
                FieldDescriptor::new("stripped")
            }
        }
        let mut c = self.clone();
        c.field = Arc::new(Stripped(self.field.clone()));
        c
    }

    /// Copy with the curvature oracle hidden but closed-form Christoffel
    /// symbols kept (the higher-accuracy numeric path).
    pub fn without_curvature_oracle(&self) -> ChartMetric {
        struct NoOracle(Arc<dyn MetricField>);
        impl MetricField for NoOracle {
            fn metric(&self, p: &V3) -> M3 {
                self.0.metric(p)
            }
            fn christoffel(&self, p: &V3) -> Option<Christoffel> {
                self.0.christoffel(p)
            }
            fn descriptor(&self) -> FieldDescriptor {
                FieldDescriptor::new("no-oracle")
            }
        }
        let mut c = self.clone();
        c.field = Arc::new(NoOracle(self.field.clone()));
        c
    }

    /// Wrap angle-like coordinates of `p` into their canonical range
    /// `[0, period)`. Axes without a period pass through.
    pub fn canonicalize(&self, p: &V3) -> V3 {
        let mut q = *p;
        for i in 0..3 {
            if let Some(period) = self.wrap[i] {
                q[i] = q[i].rem_euclid(period);
            }
        }
        q
    }
}

impl std::fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartMetric")
            .field("id", &self.id)
            .field("domain", &self.domain)
            .field("field", &self.field.descriptor().kind)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_box_margin_and_infinite_axes() {
        let b = DomainBox::new([0.0, f64::NEG_INFINITY, -1.0], [1.0, f64::INFINITY, 1.0]);
        assert!(b.contains(&V3::new(0.5, 1e9, 0.0)));
        assert!(!b.contains(&V3::new(1.5, 0.0, 0.0)));
        assert!(!b.contains_with_margin(&V3::new(0.05, 0.0, 0.0), 0.1));
        assert!(b.contains_with_margin(&V3::new(0.5, 1e12, 0.0), 0.1));
    }

    #[test]
    fn violation_measures_worst_axis() {
        let b = DomainBox::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert_eq!(b.violation(&V3::new(0.5, 0.5, 0.5)), 0.0);
        assert!((b.violation(&V3::new(1.25, 0.5, -0.5)) - 0.5).abs() < 1e-15);
    }
}
