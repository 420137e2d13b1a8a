//! Serial/parallel execution of independent, index-addressed work items.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] fans out over the
//! rayon pool; without it every mode runs serially. Results are always
//! returned in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Serial,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Serial
        }
    }
}

impl Exec {
    /// Map `f` over `0..n`.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Map `f` over `0..n` and fold the results with an associative,
    /// commutative `merge`.
    pub fn map_reduce<T, F, M>(self, n: usize, identity: impl Fn() -> T + Sync + Send, f: F, merge: M) -> T
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
        M: Fn(T, T) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).reduce(identity, merge),
            _ => (0..n).map(f).fold(identity(), merge),
        }
    }
}
