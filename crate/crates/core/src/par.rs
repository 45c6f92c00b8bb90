//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves index order in its output, so callers that
//! reduce the results sequentially get bit-identical answers for any
//! worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

/// Fixed chunk length for partial reductions. Chunk boundaries must not
/// depend on the thread count.
pub const REDUCE_CHUNK: usize = 4096;

#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

pub fn try_map_range<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
pub fn try_for_each_mut<T, F>(items: &mut [T], f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
{
    items
        .par_iter_mut()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn try_for_each_mut<T, F>(items: &mut [T], f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
{
    items
        .iter_mut()
        .enumerate()
        .try_for_each(|(i, item)| f(i, item))
}

/// Runs `op` on a pool of `workers` threads (0 means all cores).
/// Without the `parallel` feature this just calls `op`.
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build thread pool");
    pool.install(op)
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

/// Number of worker threads `with_workers(0, ..)` would use.
pub fn available_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
