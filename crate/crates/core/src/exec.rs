//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over rayon's pool;
//! without it every helper runs in order on the calling thread. Results are
//! identical either way: collection preserves input order and searches
//! return the lowest matching index.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent tasks should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `jobs = None` uses the ambient pool (one worker per logical CPU).
    Parallel {
        jobs: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs: Some(jobs) }
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel { jobs } => with_pool(jobs, || items.into_par_iter().map(&f).collect()),
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel { .. } => items.into_iter().map(f).collect(),
        }
    }

    /// Lowest `i < n` with `pred(i)`.
    pub fn find_first<F>(self, n: usize, pred: F) -> Option<usize>
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).find(|&i| pred(i)),
            #[cfg(feature = "parallel")]
            Execution::Parallel { jobs } => with_pool(jobs, || (0..n).into_par_iter().find_first(|&i| pred(i))),
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel { .. } => (0..n).find(|&i| pred(i)),
        }
    }
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(jobs: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    match jobs {
        None => op(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(op))
            .unwrap_or_else(|e| panic!("failed to build a {n}-thread pool: {e}")),
    }
}
