//! Pointwise metric, connection and curvature evaluation on a chart.
//!
//! Conventions (fixed across the whole crate):
//!
//! * Koszul formula `G^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)`;
//! * curvature sign `R(X,Y)Z = \nabla_X \nabla_Y Z - \nabla_Y \nabla_X Z
//!   - \nabla_{[X,Y]} Z`, `R(X,Y,Z,W) = <R(X,Y)Z, W>`,
//!   `sec(v^w) = R(v,w,w,v) / |v^w|^2`;
//! * the curvature operator acts on 2-forms in the wedge basis
//!   `{e2^e3, e3^e1, e1^e2}` of the canonical Gram–Schmidt frame, with
//!   `<R(X^Y), Z^W> = R(X,Y,W,Z)`, so diagonal entries are the sectional
//!   curvatures of the frame planes.
//!
//! Finite differences are always central, with one Richardson extrapolation
//! step (`h` and `h/2`), giving fourth-order truncation.

use thiserror::Error;

use crate::chart::ChartMetric;
use crate::linalg::{self, M2, M3, V3};
use crate::tol;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("point {point:?} lies outside the domain of chart '{chart}'")]
    OutOfDomain { chart: String, point: [f64; 3] },
    #[error("metric on chart '{chart}' is not positive definite at {point:?} (min eigenvalue {min_eig:.3e})")]
    NotSpd {
        chart: String,
        point: [f64; 3],
        min_eig: f64,
    },
    #[error("metric on chart '{chart}' is numerically singular at {point:?}")]
    SingularMetric { chart: String, point: [f64; 3] },
    #[error("plane is degenerate (gram determinant {gram:.3e})")]
    DegeneratePlane { gram: f64 },
    #[error("curvature operator asymmetry {asym:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { asym: f64, tol: f64 },
    #[error("direction vector has near-zero length")]
    ZeroVector,
}

/// Christoffel symbols at a point: `gamma(k, i, j)` is `G^k_ij`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Christoffel(pub [M3; 3]);

impl Christoffel {
    pub fn zero() -> Self {
        Christoffel([M3::zeros(); 3])
    }

    #[inline]
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][(i, j)]
    }

    /// Bilinear application: `out^k = G^k_ij v^i w^j`.
    #[inline]
    pub fn apply(&self, v: &V3, w: &V3) -> V3 {
        V3::new(
            (self.0[0] * w).dot(v),
            (self.0[1] * w).dot(v),
            (self.0[2] * w).dot(v),
        )
    }

    /// Max |G^k_ij - G^k_ji| over all entries (torsion-freeness check).
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in &self.0 {
            worst = worst.max((m - m.transpose()).abs().max());
        }
        worst
    }
}

/// Curvature data at a point: the operator matrix, the frame it is written
/// in, and its eigen-decomposition.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// Operator on 2-forms in the wedge basis of `frame`.
    pub operator: M3,
    /// Columns: the canonical g-orthonormal frame at the point.
    pub frame: M3,
    /// Eigenpairs sorted by descending |eigenvalue|; eigenvectors are wedge
    /// coordinates in `frame`'s wedge basis.
    pub eigen: [(f64, V3); 3],
}

impl CurvatureData {
    pub fn new(operator: M3, frame: M3) -> Self {
        let operator = 0.5 * (operator + operator.transpose());
        CurvatureData {
            operator,
            frame,
            eigen: linalg::sym_eigen_sorted(&operator),
        }
    }

    /// `1 + operator norm`, the scale used by all spectral thresholds.
    pub fn scale(&self) -> f64 {
        1.0 + self.eigen[0].0.abs()
    }

    /// Sectional curvature of the plane spanned by `v`, `w` (chart coords).
    pub fn sectional(&self, g: &M3, v: &V3, w: &V3) -> Result<f64, MetricError> {
        let vc = linalg::frame_coords(g, &self.frame, v);
        let wc = linalg::frame_coords(g, &self.frame, w);
        let x = vc.cross(&wc);
        let n2 = x.norm_squared();
        if n2 < tol::PLANE_TOL {
            return Err(MetricError::DegeneratePlane { gram: n2 });
        }
        Ok((self.operator * x).dot(&x) / n2)
    }

    /// Jacobi operator `J_v(w) = R(w, v) v` as a vector in chart coords.
    /// `v`, `w` in chart coordinates; `v` need not be unit.
    pub fn jacobi_apply(&self, g: &M3, v: &V3, w: &V3) -> V3 {
        let vc = linalg::frame_coords(g, &self.frame, v);
        let wc = linalg::frame_coords(g, &self.frame, w);
        // <R(w,v)v, u> = [w^v]^T R [u^v]  =>  R(w,v)v = v x (R_op (w x v)).
        let out = vc.cross(&(self.operator * wc.cross(&vc)));
        self.frame * out
    }
}

/// Metric tensor at `p`, with domain and positivity checks.
pub fn metric_at(chart: &ChartMetric, p: &V3) -> Result<M3, MetricError> {
    if !chart.domain.contains(p) {
        return Err(MetricError::OutOfDomain {
            chart: chart.id.clone(),
            point: [p[0], p[1], p[2]],
        });
    }
    let g = chart.field().metric(p);
    let g = 0.5 * (g + g.transpose());
    let min_eig = linalg::min_eig_sym(&g);
    if min_eig <= tol::SPD_TOL {
        return Err(MetricError::NotSpd {
            chart: chart.id.clone(),
            point: [p[0], p[1], p[2]],
            min_eig,
        });
    }
    Ok(g)
}

fn fd_step(chart: &ChartMetric, rel: f64) -> f64 {
    rel * chart.domain.capped_diagonal()
}

/// Central difference with one Richardson step: `(4 D_{h/2} - D_h) / 3`.
fn richardson_partial<F: Fn(&V3) -> M3>(f: &F, p: &V3, axis: usize, h: f64) -> M3 {
    let central = |hh: f64| {
        let mut pp = *p;
        let mut pm = *p;
        pp[axis] += hh;
        pm[axis] -= hh;
        (f(&pp) - f(&pm)) / (2.0 * hh)
    };
    let d1 = central(h);
    let d2 = central(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Christoffel symbols at `p`: closed form when the chart has one, otherwise
/// Richardson-extrapolated central differences of the metric.
pub fn christoffel_at(chart: &ChartMetric, p: &V3) -> Result<Christoffel, MetricError> {
    if let Some(g) = chart.field().christoffel(p) {
        if !chart.domain.contains(p) {
            return Err(MetricError::OutOfDomain {
                chart: chart.id.clone(),
                point: [p[0], p[1], p[2]],
            });
        }
        return Ok(g);
    }
    let h = fd_step(chart, tol::FD_METRIC_STEP_REL);
    if !chart.domain.contains_with_margin(p, h) {
        return Err(MetricError::OutOfDomain {
            chart: chart.id.clone(),
            point: [p[0], p[1], p[2]],
        });
    }
    let g = metric_at(chart, p)?;
    let ginv = g.try_inverse().ok_or_else(|| MetricError::SingularMetric {
        chart: chart.id.clone(),
        point: [p[0], p[1], p[2]],
    })?;
    let f = |q: &V3| chart.field().metric(q);
    let dg: [M3; 3] = [
        richardson_partial(&f, p, 0, h),
        richardson_partial(&f, p, 1, h),
        richardson_partial(&f, p, 2, h),
    ];
    let mut out = [M3::zeros(); 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                out[k][(i, j)] = 0.5 * s;
            }
        }
    }
    Ok(Christoffel(out))
}

// Finite-difference Christoffel assembly without domain checks (callers
// guarantee stencil margins).
fn christoffel_fd_unchecked(chart: &ChartMetric, p: &V3) -> Christoffel {
    let h = fd_step(chart, tol::FD_METRIC_STEP_REL);
    let g = chart.field().metric(p);
    let g = 0.5 * (g + g.transpose());
    let ginv = g.try_inverse().unwrap_or_else(M3::identity);
    let f = |q: &V3| chart.field().metric(q);
    let dg: [M3; 3] = [
        richardson_partial(&f, p, 0, h),
        richardson_partial(&f, p, 1, h),
        richardson_partial(&f, p, 2, h),
    ];
    let mut out = [M3::zeros(); 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                out[k][(i, j)] = 0.5 * s;
            }
        }
    }
    Christoffel(out)
}

/// Curvature operator at `p` (see module docs for basis conventions).
///
/// Uses the chart's curvature oracle when present; otherwise assembles the
/// coordinate curvature tensor from Christoffel symbols, lowers an index,
/// contracts against the canonical frame and symmetrises. Errors with
/// `ResidualTooLarge` if the pre-symmetrisation asymmetry exceeds
/// `CURV_TOL * (1 + |R|)`.
pub fn curvature_operator_at(chart: &ChartMetric, p: &V3) -> Result<CurvatureData, MetricError> {
    let g = metric_at(chart, p)?;
    let frame = linalg::gram_schmidt_frame(&g);
    if let Some(op) = chart.field().curvature_operator(p) {
        let op = 0.5 * (op + op.transpose());
        return Ok(CurvatureData {
            operator: op,
            frame,
            eigen: linalg::sym_eigen_sorted(&op),
        });
    }
    let h = fd_step(chart, tol::FD_CURV_STEP_REL);
    let margin = 2.0 * h + 2.0 * fd_step(chart, tol::FD_METRIC_STEP_REL);
    if !chart.domain.contains_with_margin(p, margin) {
        return Err(MetricError::OutOfDomain {
            chart: chart.id.clone(),
            point: [p[0], p[1], p[2]],
        });
    }

    let gamma_fn = |q: &V3| -> Christoffel {
        chart
            .field()
            .christoffel(q)
            .unwrap_or_else(|| christoffel_fd_unchecked(chart, q))
    };
    let g0 = gamma_fn(p);
    let mut dgamma = [[M3::zeros(); 3]; 3];
    for axis in 0..3 {
        for k in 0..3 {
            let fk = |q: &V3| gamma_fn(q).0[k];
            dgamma[axis][k] = richardson_partial(&fk, p, axis, h);
        }
    }
    // R^l_{ijk}
    let mut rup = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut v = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                    for m in 0..3 {
                        v += g0.gamma(l, i, m) * g0.gamma(m, j, k)
                            - g0.gamma(l, j, m) * g0.gamma(m, i, k);
                    }
                    rup[l][i][j][k] = v;
                }
            }
        }
    }
    // R_{ijkl} = g_{lm} R^m_{ijk}
    let mut rdown = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut v = 0.0;
                    for m in 0..3 {
                        v += g[(l, m)] * rup[m][i][j][k];
                    }
                    rdown[i][j][k][l] = v;
                }
            }
        }
    }
    // Multilinear evaluation on frame vectors.
    let rf = |a: &V3, b: &V3, c: &V3, d: &V3| -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..3 {
                if b[j] == 0.0 {
                    continue;
                }
                for k in 0..3 {
                    if c[k] == 0.0 {
                        continue;
                    }
                    for l in 0..3 {
                        v += a[i] * b[j] * c[k] * d[l] * rdown[i][j][k][l];
                    }
                }
            }
        }
        v
    };
    let e: [V3; 3] = [
        frame.column(0).into_owned(),
        frame.column(1).into_owned(),
        frame.column(2).into_owned(),
    ];
    // Wedge basis index a <-> plane (a+1, a+2) mod 3.
    let mut op = M3::zeros();
    for a in 0..3 {
        let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
        for b in 0..3 {
            let (b1, b2) = ((b + 1) % 3, (b + 2) % 3);
            // <R(x^y), z^w> = R(x, y, w, z)
            op[(a, b)] = rf(&e[a1], &e[a2], &e[b2], &e[b1]);
        }
    }
    let asym = (op - op.transpose()).abs().max();
    let sym = 0.5 * (op + op.transpose());
    let eigen = linalg::sym_eigen_sorted(&sym);
    let allowed = tol::scaled(tol::CURV_TOL, eigen[0].0.abs());
    if asym > allowed {
        return Err(MetricError::ResidualTooLarge {
            asym,
            tol: allowed,
        });
    }
    Ok(CurvatureData {
        operator: sym,
        frame,
        eigen,
    })
}

/// Sectional curvature of the plane spanned by `v`, `w` at `p`.
pub fn sectional(chart: &ChartMetric, p: &V3, v: &V3, w: &V3) -> Result<f64, MetricError> {
    let g = metric_at(chart, p)?;
    let data = curvature_operator_at(chart, p)?;
    // Degeneracy check against the *normalised* inputs so scaling both
    // vectors cannot mask a degenerate plane.
    let nv = linalg::gnormalize(&g, v).ok_or(MetricError::ZeroVector)?;
    let nw = linalg::gnormalize(&g, w).ok_or(MetricError::ZeroVector)?;
    let gram = 1.0 - linalg::gdot(&g, &nv, &nw).powi(2);
    if gram < tol::PLANE_TOL {
        return Err(MetricError::DegeneratePlane { gram });
    }
    data.sectional(&g, v, w)
}

/// Jacobi operator of a unit direction `v` restricted to `v`-perp.
///
/// Returns a deterministic g-orthonormal basis `(w1, w2)` of the orthogonal
/// complement and the symmetric 2x2 matrix `M_ab = <R(w_b, v) v, w_a>`.
pub struct JacobiOperator {
    pub basis: (V3, V3),
    pub matrix: M2,
}

pub fn jacobi_operator(chart: &ChartMetric, p: &V3, v: &V3) -> Result<JacobiOperator, MetricError> {
    let g = metric_at(chart, p)?;
    let data = curvature_operator_at(chart, p)?;
    jacobi_operator_from(&g, &data, v)
}

/// Jacobi operator from precomputed curvature data.
pub fn jacobi_operator_from(
    g: &M3,
    data: &CurvatureData,
    v: &V3,
) -> Result<JacobiOperator, MetricError> {
    let g = *g;
    let vu = linalg::gnormalize(&g, v).ok_or(MetricError::ZeroVector)?;
    let (w1, w2) = linalg::complete_frame(&g, &vu);
    let j1 = data.jacobi_apply(&g, &vu, &w1);
    let j2 = data.jacobi_apply(&g, &vu, &w2);
    let m = M2::new(
        linalg::gdot(&g, &j1, &w1),
        linalg::gdot(&g, &j2, &w1),
        linalg::gdot(&g, &j1, &w2),
        linalg::gdot(&g, &j2, &w2),
    );
    Ok(JacobiOperator {
        basis: (w1, w2),
        matrix: 0.5 * (m + m.transpose()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts;
    use approx::assert_relative_eq;

    // --- frozen closed-form expectations -------------------------------
    //
    // Polar chart dr^2 + r^2 dth^2 + dz^2:
    //   G^r_thth = -r, G^th_rth = 1/r, everything else zero.
    // Twisted chart dt^2 + dx^2 + w^2 dy^2 with w = t + x^2:
    //   G^y_ty = w_t/w, G^y_xy = w_x/w, G^t_yy = -w w_t, G^x_yy = -w w_x;
    //   curvature operator eigenvalues {0, 0, -B''(x)/w}.
    // Both derived by hand from the Koszul formula; the FD pipeline is
    // checked against these, not the other way round.

    #[test]
    fn flat_chart_metric_is_identity() {
        let c = charts::flat_chart();
        let g = metric_at(&c, &V3::new(0.3, -0.4, 1.0)).unwrap();
        assert_relative_eq!(g, M3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn polar_christoffels_match_hand_values() {
        let c = charts::flat_polar_chart();
        let p = V3::new(0.7, 1.1, 0.0);
        for chart in [c.clone(), c.without_closed_forms()] {
            let gamma = christoffel_at(&chart, &p).unwrap();
            assert_relative_eq!(gamma.gamma(0, 1, 1), -0.7, epsilon = 1e-9);
            assert_relative_eq!(gamma.gamma(1, 0, 1), 1.0 / 0.7, epsilon = 1e-9);
            assert!(gamma.gamma(2, 0, 0).abs() < 1e-10);
            assert!(gamma.asymmetry() < 1e-10);
        }
    }

    #[test]
    fn twisted_christoffels_match_hand_values() {
        let c = charts::twisted_chart();
        let p = V3::new(1.0, 0.0, 0.0); // w = 1, w_t = 1, w_x = 0
        for chart in [c.clone(), c.without_closed_forms()] {
            let gamma = christoffel_at(&chart, &p).unwrap();
            assert_relative_eq!(gamma.gamma(2, 0, 2), 1.0, epsilon = 1e-8);
            assert!(gamma.gamma(2, 1, 2).abs() < 1e-8);
            assert_relative_eq!(gamma.gamma(0, 2, 2), -1.0, epsilon = 1e-8);
            assert!(gamma.gamma(1, 2, 2).abs() < 1e-8);
        }
        // Off-axis point: w = 1.25, w_x = 1.
        let q = V3::new(1.0, 0.5, 0.0);
        let gamma = christoffel_at(&c, &q).unwrap();
        assert_relative_eq!(gamma.gamma(2, 1, 2), 1.0 / 1.25, epsilon = 1e-12);
        assert_relative_eq!(gamma.gamma(1, 2, 2), -1.25, epsilon = 1e-12);
    }

    #[test]
    fn flat_curvature_vanishes() {
        let c = charts::flat_chart().without_closed_forms();
        let data = curvature_operator_at(&c, &V3::new(0.2, 0.1, -0.3)).unwrap();
        assert!(data.operator.abs().max() < 1e-9);
    }

    #[test]
    fn round_sphere_operator_is_identity() {
        let c = charts::stereographic_chart("s", 1.0);
        let p = V3::new(0.4, -0.2, 0.3);
        // Oracle path.
        let data = curvature_operator_at(&c, &p).unwrap();
        assert_relative_eq!(data.operator, M3::identity(), epsilon = 1e-12);
        // Numeric path from closed-form Christoffels.
        let data = curvature_operator_at(&c.without_curvature_oracle(), &p).unwrap();
        assert_relative_eq!(data.operator, M3::identity(), epsilon = 1e-9);
        // Full finite-difference path.
        let data = curvature_operator_at(&c.without_closed_forms(), &p).unwrap();
        assert_relative_eq!(data.operator, M3::identity(), epsilon = 1e-5);
    }

    #[test]
    fn twisted_operator_has_expected_spectrum() {
        let c = charts::twisted_chart();
        let p = V3::new(1.0, 0.0, 0.0);
        for chart in [c.without_curvature_oracle(), c.clone()] {
            let data = curvature_operator_at(&chart, &p).unwrap();
            let mut eigs: Vec<f64> = data.eigen.iter().map(|e| e.0).collect();
            eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_relative_eq!(eigs[0], -2.0, epsilon = 1e-8);
            assert!(eigs[1].abs() < 1e-8);
            assert!(eigs[2].abs() < 1e-8);
        }
    }

    #[test]
    fn product_sphere_sectionals() {
        let c = charts::product_sphere_chart(1.0);
        let p = V3::new(1.2, 0.4, 0.0);
        // Base plane curves like the sphere, mixed planes are flat.
        let s_base = sectional(&c, &p, &V3::x(), &V3::y()).unwrap();
        assert_relative_eq!(s_base, 1.0, epsilon = 1e-10);
        let s_mixed = sectional(&c, &p, &V3::x(), &V3::z()).unwrap();
        assert!(s_mixed.abs() < 1e-10);
        // Scaling the inputs must not change the value.
        let s_scaled = sectional(&c, &p, &(2.5 * V3::x()), &(0.3 * V3::y())).unwrap();
        assert_relative_eq!(s_scaled, s_base, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_plane_is_refused() {
        let c = charts::flat_chart();
        let p = V3::zeros();
        let e = sectional(&c, &p, &V3::x(), &(2.0 * V3::x()));
        assert!(matches!(e, Err(MetricError::DegeneratePlane { .. })));
    }

    #[test]
    fn jacobi_operator_on_twisted_chart() {
        let c = charts::twisted_chart();
        let p = V3::new(1.0, 0.0, 0.0);
        let j = jacobi_operator(&c, &p, &V3::z()).unwrap();
        // v = d_y direction: perp basis is deterministic {d_t, d_x}-spanned;
        // matrix should be diag(0, -2) up to basis ordering.
        let mut eigs = [j.matrix[(0, 0)], j.matrix[(1, 1)]];
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(j.matrix[(0, 1)].abs() < 1e-10);
        assert_relative_eq!(eigs[0], -2.0, epsilon = 1e-10);
        assert!(eigs[1].abs() < 1e-10);
        // J_v(v) = 0 and self-adjointness come with the construction; check
        // the full vector version too.
        let g = metric_at(&c, &p).unwrap();
        let data = curvature_operator_at(&c, &p).unwrap();
        let jv = data.jacobi_apply(&g, &V3::z(), &V3::z());
        assert!(jv.norm() < 1e-12);
    }

    #[test]
    fn out_of_domain_and_not_spd_are_reported() {
        let c = charts::flat_chart();
        let far = V3::new(1e6, 0.0, 0.0);
        assert!(matches!(
            metric_at(&c, &far),
            Err(MetricError::OutOfDomain { .. })
        ));

        struct Bad;
        impl crate::chart::MetricField for Bad {
            fn metric(&self, _p: &V3) -> M3 {
                M3::from_diagonal(&V3::new(1.0, -0.5, 1.0))
            }
            fn descriptor(&self) -> crate::chart::FieldDescriptor {
                crate::chart::FieldDescriptor::new("bad")
            }
        }
        let bad = ChartMetric::new(
            "bad",
            crate::chart::DomainBox::new([-1.0; 3], [1.0; 3]),
            std::sync::Arc::new(Bad),
        );
        assert!(matches!(
            metric_at(&bad, &V3::zeros()),
            Err(MetricError::NotSpd { .. })
        ));
    }
}
