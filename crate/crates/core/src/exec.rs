//! Replication scheduling: data-parallel through rayon when the `parallel`
//! feature is on, a plain loop otherwise.
//!
//! Every helper here produces results indexed by replication number, never by
//! completion order, so outputs are identical for any thread count.

/// How independent replications are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Number of indices in `0..n` for which `hit` is true. Exact integer
    /// reduction.
    pub fn count<F>(self, n: u64, hit: F) -> u64
    where
        F: Fn(u64) -> bool + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).filter(|&i| hit(i)).count() as u64,
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().filter(|&i| hit(i)).count() as u64
            }
        }
    }

    /// `f(0), f(1), …, f(n-1)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }
}

/// Run `f` with the global scheduler limited to `threads` workers. Without the
/// `parallel` feature this simply calls `f`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(f),
                Err(_) => f(),
            },
            _ => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
