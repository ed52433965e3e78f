//! Small deterministic linear-algebra helpers shared across modules.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;
pub type V2 = Vector2<f64>;
pub type M2 = Matrix2<f64>;

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenpairs sorted by
/// descending |eigenvalue| and each eigenvector sign-canonicalised (first
/// component of largest magnitude made positive). Sorting and signs are
/// deterministic so downstream reports do not depend on LAPACK-style
/// ordering quirks.
pub fn sym_eigen_sorted(m: &M3) -> [(f64, V3); 3] {
    let sym = 0.5 * (m + m.transpose());
    let se = nalgebra::SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, V3)> = (0..3)
        .map(|i| (se.eigenvalues[i], se.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| {
        b.0.abs()
            .partial_cmp(&a.0.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = [(0.0, V3::zeros()); 3];
    for (slot, (l, v)) in out.iter_mut().zip(pairs) {
        *slot = (l, canonical_sign(&v));
    }
    out
}

/// Eigenvalues of a symmetric 2x2 matrix, descending by |value|, with
/// sign-canonical eigenvectors.
pub fn sym_eigen2_sorted(m: &M2) -> [(f64, V2); 2] {
    let sym = 0.5 * (m + m.transpose());
    let se = nalgebra::SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, V2)> = (0..2)
        .map(|i| (se.eigenvalues[i], se.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| {
        b.0.abs()
            .partial_cmp(&a.0.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let c = |v: &V2| -> V2 {
        let k = if v[0].abs() >= v[1].abs() { 0 } else { 1 };
        if v[k] < 0.0 {
            -v
        } else {
            *v
        }
    };
    [(pairs[0].0, c(&pairs[0].1)), (pairs[1].0, c(&pairs[1].1))]
}

/// Smallest eigenvalue of a symmetric 3x3 matrix.
pub fn min_eig_sym(m: &M3) -> f64 {
    let se = nalgebra::SymmetricEigen::new(0.5 * (m + m.transpose()));
    se.eigenvalues.min()
}

/// Flip sign so the component of largest magnitude is positive.
pub fn canonical_sign(v: &V3) -> V3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        *v
    }
}

/// Metric inner product `<a, b>_g`.
#[inline]
pub fn gdot(g: &M3, a: &V3, b: &V3) -> f64 {
    (g * b).dot(a)
}

/// Metric norm.
#[inline]
pub fn gnorm(g: &M3, a: &V3) -> f64 {
    gdot(g, a, a).max(0.0).sqrt()
}

/// Metric cross product: the unique vector `g`-orthogonal to `a` and `b`
/// with `|a x_g b|_g = area_g(a, b)`, oriented by the coordinate volume
/// form. For a `g`-orthonormal pair the result completes an orthonormal
/// frame.
pub fn gcross(g: &M3, a: &V3, b: &V3) -> V3 {
    let ginv = g.try_inverse().expect("metric tensors are invertible");
    g.determinant().max(0.0).sqrt() * (ginv * a.cross(b))
}

/// Normalise `a` to unit metric length. Returns `None` for (near-)zero input.
pub fn gnormalize(g: &M3, a: &V3) -> Option<V3> {
    let n = gnorm(g, a);
    if n < 1e-14 {
        None
    } else {
        Some(a / n)
    }
}

/// Gram–Schmidt orthonormalisation of the coordinate basis in fixed order
/// (e1 from the first coordinate direction, then e2, e3). Columns of the
/// result are the frame vectors expressed in chart coordinates.
pub fn gram_schmidt_frame(g: &M3) -> M3 {
    let mut cols = [V3::x(), V3::y(), V3::z()];
    for i in 0..3 {
        let mut v = cols[i];
        for j in 0..i {
            let prev = cols[j];
            v -= gdot(g, &v, &prev) * prev;
        }
        let n = gnorm(g, &v);
        cols[i] = v / n;
    }
    M3::from_columns(&cols)
}

/// Coordinates of `v` in the g-orthonormal frame `f` (columns): solves
/// `f * c = v` via the metric: `c_i = <v, f_i>_g`.
#[inline]
pub fn frame_coords(g: &M3, f: &M3, v: &V3) -> V3 {
    V3::new(
        gdot(g, v, &f.column(0).into_owned()),
        gdot(g, v, &f.column(1).into_owned()),
        gdot(g, v, &f.column(2).into_owned()),
    )
}

/// Unoriented angle between two lines spanned by `a`, `b` (radians, in
/// `[0, pi/2]`), measured with the metric `g`.
pub fn line_angle(g: &M3, a: &V3, b: &V3) -> f64 {
    let na = gnorm(g, a);
    let nb = gnorm(g, b);
    let c = (gdot(g, a, b) / (na * nb)).abs().min(1.0);
    c.acos()
}

/// Frobenius distance between the orthogonal projectors onto the lines
/// spanned by `a` and `b`, computed metric-invariantly: in any g-orthonormal
/// frame this equals `sqrt(2) * sin(angle)`.
pub fn line_projector_distance(g: &M3, a: &V3, b: &V3) -> f64 {
    let theta = line_angle(g, a, b);
    std::f64::consts::SQRT_2 * theta.sin()
}

/// Complete a unit vector `v` (g-unit) to a deterministic g-orthonormal
/// basis `(v, w1, w2)`; returns `(w1, w2)`. The seed axis is the coordinate
/// frame vector least aligned with `v`.
pub fn complete_frame(g: &M3, v: &V3) -> (V3, V3) {
    let f = gram_schmidt_frame(g);
    let vc = frame_coords(g, &f, v);
    let mut k = 0;
    for i in 1..3 {
        if vc[i].abs() < vc[k].abs() {
            k = i;
        }
    }
    let seed = f.column(k).into_owned();
    let w1 = {
        let u = seed - gdot(g, &seed, v) * v;
        u / gnorm(g, &u)
    };
    // w2 dual to v ^ w1 in frame coordinates: orthonormal completion.
    let w1c = frame_coords(g, &f, &w1);
    let w2c = vc.cross(&w1c);
    let w2 = f * w2c;
    (w1, w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gram_schmidt_is_orthonormal_for_curved_metric() {
        let g = M3::new(2.0, 0.3, 0.1, 0.3, 1.5, 0.0, 0.1, 0.0, 0.8);
        let f = gram_schmidt_frame(&g);
        let gram = f.transpose() * g * f;
        assert_relative_eq!(gram, M3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn gcross_completes_orthonormal_pairs() {
        // Euclidean check: reduces to the ordinary cross product.
        let id = M3::identity();
        assert_relative_eq!(
            gcross(&id, &V3::x(), &V3::y()),
            V3::z(),
            epsilon = 1e-15
        );
        // Curved metric: the result is unit and orthogonal to both inputs.
        let g = M3::new(2.0, 0.3, 0.1, 0.3, 1.5, 0.0, 0.1, 0.0, 0.8);
        let a = gnormalize(&g, &V3::new(1.0, 0.2, -0.4)).unwrap();
        let b0 = V3::new(-0.3, 1.0, 0.5);
        let b = gnormalize(&g, &(b0 - gdot(&g, &b0, &a) * a)).unwrap();
        let c = gcross(&g, &a, &b);
        assert_relative_eq!(gnorm(&g, &c), 1.0, epsilon = 1e-12);
        assert!(gdot(&g, &c, &a).abs() < 1e-12);
        assert!(gdot(&g, &c, &b).abs() < 1e-12);
    }

    #[test]
    fn complete_frame_gives_orthonormal_triple() {
        let g = M3::new(1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.25);
        let v = gnormalize(&g, &V3::new(0.3, -0.2, 0.9)).unwrap();
        let (w1, w2) = complete_frame(&g, &v);
        for (a, b) in [(&v, &w1), (&v, &w2), (&w1, &w2)] {
            assert!(gdot(&g, a, b).abs() < 1e-12);
        }
        assert_relative_eq!(gnorm(&g, &w1), 1.0, epsilon = 1e-12);
        assert_relative_eq!(gnorm(&g, &w2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_sorting_is_by_magnitude() {
        let m = M3::from_diagonal(&V3::new(-2.0, 0.5, 0.0));
        let e = sym_eigen_sorted(&m);
        assert_relative_eq!(e[0].0, -2.0, epsilon = 1e-12);
        assert_relative_eq!(e[1].0, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e[2].0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projector_distance_matches_explicit_projectors() {
        let g = M3::identity();
        let a = V3::new(1.0, 0.0, 0.0);
        let b = V3::new(1.0, 1.0, 0.0) / 2.0_f64.sqrt();
        let pa = a * a.transpose();
        let pb = b * b.transpose();
        let explicit = (pa - pb).norm();
        assert_relative_eq!(
            line_projector_distance(&g, &a, &b),
            explicit,
            epsilon = 1e-12
        );
    }
}
