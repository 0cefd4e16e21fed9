//! Order-preserving fan-out over a slice.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] runs on
//! a rayon pool; without it every execution mode runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// `jobs == 0` uses rayon's global pool.
    Parallel { jobs: usize },
}

impl Execution {
    /// `Sequential` for one job, `Parallel` otherwise.
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Self::Sequential
        } else {
            Self::Parallel { jobs }
        }
    }

    /// Whether this build can actually run work concurrently.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `items.iter().map(f)` with results in input order regardless of scheduling.
pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { jobs: 0 } => items.par_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { jobs } => {
            match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => items.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => items.iter().map(f).collect(),
    }
}
