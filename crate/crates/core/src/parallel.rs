//! Worker selection for fragment scoring.
//!
//! Results are always collected in input order, so the sequential path and
//! any pool size produce identical downstream aggregation. Without the
//! `parallel` feature every executor degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;
#[cfg(feature = "parallel")]
use crate::error::Error;

pub enum Executor {
    Sequential,
    #[cfg(feature = "parallel")]
    Pool(rayon::ThreadPool),
}

impl Executor {
    /// `0` asks for one worker per core, `1` forces the sequential path,
    /// and any larger count sizes the pool explicitly.
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 1 {
            return Ok(Executor::Sequential);
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
            Ok(Executor::Pool(pool))
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Executor::Sequential)
        }
    }

    pub fn is_parallel(&self) -> bool {
        match self {
            Executor::Sequential => false,
            #[cfg(feature = "parallel")]
            Executor::Pool(_) => true,
        }
    }

    /// Apply `f` to every item, returning outputs in input order.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Pool(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}
