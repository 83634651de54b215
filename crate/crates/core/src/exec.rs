//! Execution strategy for the data-parallel loops.
//!
//! Every heavy loop in the crate (Gray-code shards, cluster roots, sample
//! indices) goes through [`map_collect`], which keeps the output order equal to
//! the input order whichever strategy runs it. Without the `parallel` feature
//! [`Exec::Parallel`] silently runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, returning results in input order.
pub fn map_collect<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}
