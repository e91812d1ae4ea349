//! Sequential and data-parallel execution of independent work items.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work out
//! over rayon's pool; without it, it falls back to the sequential path. Both
//! produce results in input order, so callers that derive per-item seeds get
//! bit-identical output either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    /// Apply `f` to every item, preserving order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.into_par_iter().map(f).collect(),
            _ => items.into_iter().map(f).collect(),
        }
    }

    /// Apply `f` to every index in `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Send + Sync,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}
