//! Path farm: distinct paths are embarrassingly parallel. The parallel and
//! sequential runners return results in path-index order, so downstream
//! reductions are byte-identical regardless of worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Pin the global worker count (no-op without the `parallel` feature, or if
/// a pool was already built). Worker count never affects results, only speed.
#[cfg(feature = "parallel")]
pub fn configure_workers(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_workers(_n: usize) {}

/// Run `job` for path indices 0..n, in order.
pub fn run_batch_sequential<T, F>(n: u64, job: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n).map(job).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch<T, F>(n: u64, job: F) -> Vec<T>
where
    F: Fn(u64) -> T + Sync + Send,
    T: Send,
{
    (0..n).into_par_iter().map(job).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch<T, F>(n: u64, job: F) -> Vec<T>
where
    F: Fn(u64) -> T + Sync + Send,
    T: Send,
{
    run_batch_sequential(n, job)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results() {
        let out = run_batch(100, |i| i * i);
        let seq = run_batch_sequential(100, |i| i * i);
        assert_eq!(out, seq);
    }
}
