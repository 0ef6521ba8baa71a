//! Rayon-backed [`Executor`]; results keep index order, so output does not
//! depend on the worker count.

use ope_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{OpeError, Result};

pub const THREADS_ENV: &str = "OPE_THREADS";

pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| OpeError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Worker count from `OPE_THREADS`, defaulting to the available cores.
    pub fn from_env() -> Result<Self> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(OpeError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

impl Executor for Rayon {
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..len).into_par_iter().map(f).collect())
    }
}
