//! Data-parallel helpers. With the `parallel` feature, work is spread over a
//! rayon pool; without it every path runs sequentially. Output order always
//! matches input order.

use serde::{Deserialize, Serialize};

/// How a batch of independent items is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Bounded worker pool. Falls back to sequential when the crate is
    /// built without `parallel` or `width <= 1`.
    Parallel {
        width: usize,
    },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { width: 4 }
    }
}

impl Execution {
    pub fn width(self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel { width } => width.max(1),
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Parallel { width } if width > 1 => parallel_map(items, width, f),
            _ => items.iter().map(f).collect(),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], width: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(width).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(err) => {
            log::warn!("thread pool unavailable ({err}), running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _width: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Inner-loop map on the global pool, for large uniform workloads.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const MIN_PARALLEL: usize = 4096;
        if items.len() >= MIN_PARALLEL {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}
