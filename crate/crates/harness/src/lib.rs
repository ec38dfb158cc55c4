//! Run configuration, cutoff sweeps, decay fits, quasi-optimality checks and
//! file formats around [`mks_core`], plus the `mks` command line.

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod quasi;
pub mod sweep;

pub use config::RunConfig;
pub use error::{HarnessError, Result};

/// Maps `f` over `items` on at most `workers` threads (0 = all cores),
/// returning results in input order.
#[cfg(feature = "parallel")]
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn parallel_map<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
