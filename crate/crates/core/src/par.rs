//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the helpers fan work out over
//! rayon's global pool; without it they compile to plain sequential loops.
//! Results are always written by index, and reductions over the collected
//! buffers stay sequential, so output is bit-identical regardless of thread
//! count or scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build parallelizes the data-parallel inner loops.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Evaluate `f` at every index in `0..n` and collect the results in order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over the items of a slice, collecting results in order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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
