//! Data-parallel helpers with a sequential fallback.
//!
//! Every batch operation in the crate (grid scans, frequency sweeps, suite
//! training) funnels through [`map_indexed`], so the choice between rayon and
//! a plain loop lives in one place. With the `parallel` feature disabled,
//! [`Execution::Parallel`] silently degrades to sequential execution.
//!
//! Results are always returned in index order, so parallel and sequential
//! runs produce identical output.

/// How a batch of independent work items is scheduled.
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

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Caps the global worker pool. Only the first call has an effect; returns
/// false when the pool was already initialized or parallelism is compiled out.
pub fn limit_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
