//! Data-parallel map helper with a sequential fallback.
//!
//! Built with the default `parallel` feature this fans out over rayon's
//! global pool; without it it is a plain iterator loop with an identical
//! signature and identical output order, so callers never branch on the
//! feature themselves.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn try_par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> Result<R>,
{
    items.iter().map(f).collect()
}
