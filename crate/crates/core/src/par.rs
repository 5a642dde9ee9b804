//! Row-parallel execution helpers.
//!
//! Kernels write disjoint output rows, one task per row, so the parallel and
//! sequential paths produce identical bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smallest number of rows handed to a single rayon task.
#[cfg(feature = "parallel")]
const MIN_ROWS_PER_TASK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Parallelism::Rayon;

        #[cfg(not(feature = "parallel"))]
        return Parallelism::Sequential;
    }
}

/// Number of worker threads kernels may use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Configure the global kernel thread pool. Only the first call has an effect;
/// later calls return `false`.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    return rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok();

    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Calls `f(row, chunk)` for every `width`-sized chunk of `out`.
pub fn for_each_row<F>(out: &mut [f64], width: usize, par: Parallelism, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if width == 0 {
        return;
    }
    match par {
        Parallelism::Sequential => out.chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c)),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => out
            .par_chunks_mut(width)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
    }
}

/// Fills `out[e] = f(e)` for every index.
pub fn fill_indexed<F>(out: &mut [f64], par: Parallelism, f: F)
where
    F: Fn(usize) -> f64 + Send + Sync,
{
    match par {
        Parallelism::Sequential => out.iter_mut().enumerate().for_each(|(e, o)| *o = f(e)),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => out
            .par_iter_mut()
            .with_min_len(1024)
            .enumerate()
            .for_each(|(e, o)| *o = f(e)),
    }
}
