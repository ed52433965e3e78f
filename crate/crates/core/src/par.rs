//! Data-parallel slice maps with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`map_collect`] fans work out
//! over rayon's global thread pool; without the feature it degrades to a
//! plain sequential loop with identical results and ordering.
//! [`map_collect_seq`] is the always-available sequential twin, kept public
//! so benchmarks can measure the speedup inside a single build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cap the worker pool at `n` threads (`0` keeps the default of one thread
/// per core). Must be called before the first parallel map; returns whether
/// the setting took effect. A pool that already exists is reused unchanged,
/// and without the `parallel` feature this is a no-op returning `false`.
pub fn set_jobs(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if n == 0 {
            return false;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

/// Map `f` over `items`, preserving order.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`map_collect`].
pub fn map_collect_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_maps_agree() {
        let items: Vec<u64> = (0..997).collect();
        let f = |x: &u64| x.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        assert_eq!(map_collect(&items, f), map_collect_seq(&items, f));
    }

    #[test]
    fn job_cap_is_accepted_at_most_once() {
        // Zero always reports "kept the default"; a concrete cap may or may
        // not take effect depending on whether a pool exists, but must not
        // panic either way.
        assert!(!set_jobs(0));
        let _ = set_jobs(2);
    }
}
