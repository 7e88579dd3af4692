//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction is split into fixed-size chunks whose partial results are
//! combined in index order, so sums are bit-identical whether the work runs on
//! the rayon pool or on the calling thread. The `parallel` cargo feature links
//! rayon; [`set_parallel`] switches between the two paths at runtime (used by
//! the benches to compare them on one build).

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Elements per reduction chunk. Fixed so results never depend on thread count.
pub const CHUNK: usize = 2048;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Enables or disables the rayon path. Without the `parallel` feature this is a no-op.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on && cfg!(feature = "parallel"), Ordering::Relaxed);
}

pub fn is_parallel() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Sizes the global pool; `1` selects the sequential path. Only the first
/// call can size the pool.
pub fn configure_threads(jobs: usize) {
    if jobs <= 1 {
        set_parallel(false);
        return;
    }
    #[cfg(feature = "parallel")]
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}

/// Runs `f` on consecutive chunks of `data`, passing the offset of each chunk.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, block)| f(c * chunk, block));
        return;
    }
    for (c, block) in data.chunks_mut(chunk).enumerate() {
        f(c * chunk, block);
    }
}

/// Fills `out[i] = f(i)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    for_each_chunk_mut(out, CHUNK, |offset, block| {
        for (j, v) in block.iter_mut().enumerate() {
            *v = f(offset + j);
        }
    });
}

/// Collects `f(i)` for `i in 0..n`.
pub fn collect<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; n];
    fill(&mut out, f);
    out
}

fn partials<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(n);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..chunks).into_par_iter().map(|c| f(range(c))).collect();
    }
    (0..chunks).map(|c| f(range(c))).collect()
}

/// Deterministic `sum_{i<n} f(i)`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    partials(n, |r| r.map(&f).sum::<f64>()).into_iter().sum()
}

/// `max_{i<n} f(i)`, or `-inf` when `n == 0`.
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    partials(n, |r| r.map(&f).fold(f64::NEG_INFINITY, f64::max))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `min_{i<n} f(i)`, or `+inf` when `n == 0`.
pub fn min<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    partials(n, |r| r.map(&f).fold(f64::INFINITY, f64::min))
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Maps independent jobs (ladder rungs, quadrature probes), preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Like [`map`] but runs inside a pool limited to `jobs` threads.
pub fn map_with_jobs<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && jobs > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(|| items.par_iter().map(f).collect());
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_identical_on_both_paths() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64;
        let n = 3 * CHUNK + 17;
        set_parallel(false);
        let a = sum(n, f);
        set_parallel(true);
        let b = sum(n, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn extrema_and_empty_ranges() {
        assert_eq!(max(0, |_| 1.0), f64::NEG_INFINITY);
        assert_eq!(min(0, |_| 1.0), f64::INFINITY);
        assert_eq!(max(5000, |i| i as f64), 4999.0);
        assert_eq!(min(5000, |i| -(i as f64)), -4999.0);
    }

    #[test]
    fn map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map(&items, |i| i * 2);
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
        let out = map_with_jobs(&items, 3, |i| i + 1);
        assert_eq!(out[99], 100);
    }
}
