//! Rayon-backed [`ParallelMap`].

use randaw_core::scenario::ParallelMap;
use rayon::prelude::*;

/// Maps over the global rayon pool, preserving index order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rayon;

impl ParallelMap for Rayon {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}
