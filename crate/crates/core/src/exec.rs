//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through the helpers here. They split
//! work into contiguous chunks whose results are combined in index order, so a
//! computation returns the same bits whether it ran on one thread or many.
//! Building without the `parallel` feature turns every policy into a plain
//! sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Grids smaller than this many pixels are processed on the calling thread
/// even under [`Execution::Parallel`]; the fork/join cost dominates below it.
pub const PARALLEL_MIN_PIXELS: usize = 128 * 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
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

impl Execution {
    /// Whether this policy actually fans out work in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Policy for a per-pixel loop over a grid with `len` entries.
    pub fn for_pixels(self, len: usize) -> Execution {
        if len >= PARALLEL_MIN_PIXELS {
            self
        } else {
            Execution::Sequential
        }
    }

    /// Maps `f` over `0..n`, results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(row_index, row)` for every `width`-sized chunk of `data`.
    pub fn for_each_row_mut<T, F>(self, data: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
            return;
        }
        data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }

    /// Like [`Execution::for_each_row_mut`], collecting one result per row in
    /// row order.
    pub fn map_rows_mut<T, R, F>(self, data: &mut [T], width: usize, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut [T]) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return data.par_chunks_mut(width).enumerate().map(|(i, row)| f(i, row)).collect();
        }
        data.chunks_mut(width).enumerate().map(|(i, row)| f(i, row)).collect()
    }

    /// Sum of `f(row)` over rows `0..rows`, accumulated row by row in order.
    pub fn sum_rows<F>(self, rows: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map_range(rows, f).into_iter().sum()
    }
}
