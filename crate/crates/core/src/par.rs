//! Data-parallel building blocks.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures sequentially. Results are always returned in index order
//! so reductions built on top of them are independent of the thread split.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Runs `f(index, chunk, state)` over `data.chunks_mut(width)` zipped with
/// one element of `states` per chunk.
pub fn for_each_chunk_with<T, S, F>(data: &mut [T], width: usize, states: &mut [S], f: F)
where
    T: Send,
    S: Send,
    F: Fn(usize, &mut [T], &mut S) + Sync + Send,
{
    debug_assert_eq!(data.len(), width * states.len());
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .zip(states.par_iter_mut())
            .enumerate()
            .for_each(|(i, (chunk, s))| f(i, chunk, s));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width)
            .zip(states.iter_mut())
            .enumerate()
            .for_each(|(i, (chunk, s))| f(i, chunk, s));
    }
}

/// Whether this build dispatches work to a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
