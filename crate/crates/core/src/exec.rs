//! Bounded data-parallel execution for per-task pipeline work.
//!
//! With the `parallel` feature (default) an executor with parallelism > 1
//! owns a dedicated rayon pool; otherwise, and always without the feature,
//! work runs sequentially. Output order matches input order in both modes,
//! which keeps replay runs byte-identical regardless of worker count.

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    parallelism: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Executor {
    pub fn new(parallelism: usize) -> Executor {
        let parallelism = parallelism.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = (parallelism > 1).then(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(parallelism)
                    .thread_name(|i| format!("secureloop-worker-{i}"))
                    .build()
                    .expect("failed to build worker pool")
            });
            Executor { pool, parallelism }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor { parallelism }
        }
    }

    pub fn sequential() -> Executor {
        Executor::new(1)
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    /// Map `f` over `items`, preserving input order in the output.
    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().map(&f).collect());
        }
        items.into_iter().map(f).collect()
    }
}
