//! Deterministic sampling of points, tangent vectors, and sphere directions.
//!
//! Every sample is produced by a ChaCha8 generator seeded with the run seed
//! and *streamed* by sample index, so sample `k` is the same no matter how
//! the index range is partitioned across workers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::ChartMetric;
use crate::linalg::{gnormalize, M3, V3};

/// Generator for the `index`-th sample of a run.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform point in the chart's sample box, rejected against its sample
/// region. Deterministic per (seed, index); panics only if the region
/// rejects 10⁴ consecutive draws (a misconfigured chart).
pub fn chart_point(chart: &ChartMetric, seed: u64, index: u64) -> V3 {
    let mut rng = index_rng(seed, index);
    let b = &chart.sample_box;
    for _ in 0..10_000 {
        let mut p = V3::zeros();
        for i in 0..3 {
            p[i] = rng.gen_range(b.min[i]..=b.max[i]);
        }
        if chart.sample_region.accepts(&p) {
            return p;
        }
    }
    panic!("sample region of chart {} rejected 10^4 draws", chart.id);
}

/// Standard Gaussian direction (Euclidean-unit).
pub fn gaussian_dir(rng: &mut ChaCha8Rng) -> V3 {
    loop {
        let v = V3::new(gauss(rng), gauss(rng), gauss(rng));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// g-unit tangent vector with rotation-invariant distribution.
pub fn unit_tangent(g: &M3, rng: &mut ChaCha8Rng) -> V3 {
    let v = V3::new(gauss(rng), gauss(rng), gauss(rng));
    gnormalize(g, &v).expect("Gaussian draw cannot be the zero vector")
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic low-discrepancy directions: Fibonacci lattice on the
/// Euclidean unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<V3> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            V3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Fibonacci directions with per-index seeded jitter, mapped to g-unit
/// vectors. Deterministic; jitter breaks lattice alignment with special
/// directions of the metric.
pub fn jittered_sphere(g: &M3, n: usize, seed: u64) -> Vec<V3> {
    fibonacci_sphere(n)
        .into_iter()
        .enumerate()
        .map(|(k, base)| {
            let mut rng = index_rng(seed, k as u64);
            let eps = 0.02;
            let v = base + eps * gaussian_dir(&mut rng);
            gnormalize(g, &v).expect("jittered direction cannot vanish")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::flat_chart;

    #[test]
    fn samples_are_partition_independent() {
        let chart = flat_chart();
        let a: Vec<V3> = (0..20).map(|k| chart_point(&chart, 9, k)).collect();
        // Same indices drawn in reverse order give the same points.
        let b: Vec<V3> = (0..20).rev().map(|k| chart_point(&chart, 9, k)).collect();
        for k in 0..20 {
            assert_eq!(a[k], b[19 - k]);
        }
    }

    #[test]
    fn fibonacci_sphere_is_unit_and_spread() {
        let dirs = fibonacci_sphere(128);
        for d in &dirs {
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
        let mean: V3 = dirs.iter().sum::<V3>() / 128.0;
        assert!(mean.norm() < 0.02, "lattice should be nearly balanced");
    }

    #[test]
    fn unit_tangents_are_g_unit() {
        let g = M3::from_diagonal(&V3::new(1.0, 4.0, 9.0));
        let mut rng = index_rng(3, 7);
        for _ in 0..50 {
            let v = unit_tangent(&g, &mut rng);
            assert!(((v.dot(&(g * v))) - 1.0).abs() < 1e-12);
        }
    }
}
