//! Fan-out helper for the data-parallel inner loops (multistart root
//! finding, certificate sampling, simulation replicas).
//!
//! With the `parallel` feature (default) the map runs on the rayon pool;
//! without it the same closure runs sequentially on the calling thread.
//! Callers are responsible for merging results in a thread-count-independent
//! order so both builds produce identical output.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Send + Sync,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
