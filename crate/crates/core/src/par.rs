//! Data-parallel helpers with a sequential fallback.
//!
//! `ExecMode::Parallel` uses rayon when the `parallel` feature is enabled and
//! silently degrades to the sequential path otherwise. Both paths return
//! results in input order, so callers stay deterministic either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    /// True when this mode will actually fan out work.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

pub fn map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

pub fn map_mut<T, U, F>(mode: ExecMode, items: &mut [T], f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter_mut().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let _ = mode;
    items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Caps the global worker pool. A no-op without the `parallel` feature.
pub fn init_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string());
    }
    #[allow(unreachable_code)]
    {
        let _ = threads;
        Ok(())
    }
}
