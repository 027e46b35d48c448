//! Chunked data-parallel helpers with a fixed reduction order.
//!
//! Work is split into chunks of [`CHUNK`] items regardless of the thread
//! count. Each chunk is folded sequentially and the per-chunk results come
//! back in input order, so sums assembled from them are bit-identical between
//! the rayon path and the sequential fallback.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const CHUNK: usize = 256;

/// How to run a data-parallel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise identical
    /// to `Sequential`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Applies `f` to every chunk of `items` and returns the results in chunk
/// order.
pub fn map_chunks<T, A, F>(items: &[T], exec: Execution, f: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_chunks(CHUNK).map(|c| f(c)).collect(),
        _ => items.chunks(CHUNK).map(f).collect(),
    }
}

/// Order-preserving map.
pub fn map<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(|x| f(x)).collect(),
        _ => items.iter().map(f).collect(),
    }
}
