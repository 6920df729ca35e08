//! Fan-out of independent runs. With the `parallel` feature the work goes to
//! a rayon pool; otherwise (or with `Exec::Sequential`) it runs in order.
//! Results always come back in input order, so output is deterministic.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon pool; `None` uses the global pool, `Some(n)` a dedicated one.
    #[default]
    Parallel,
    ParallelWith(usize),
}

impl Exec {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Exec::Sequential,
            Some(n) => Exec::ParallelWith(n),
            None => Exec::Parallel,
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Exec::Sequential)
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Exec::Sequential => items.iter().map(f).collect(),
                Exec::Parallel => items.par_iter().map(f).collect(),
                Exec::ParallelWith(n) => match rayon::ThreadPoolBuilder::new().num_threads(*n).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => {
                        log::warn!("falling back to sequential execution: {e}");
                        items.iter().map(f).collect()
                    }
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.iter().map(f).collect()
        }
    }
}
