//! Thin parallel-map shim.
//!
//! Per-frame work (forward passes, pullbacks) is embarrassingly parallel, so
//! the hot call sites map over frames with [`map_indexed`]. With the `parallel`
//! feature this fans out over rayon's pool; without it, it is a plain
//! sequential map. Rayon's ordered collect returns results in input order and
//! each closure is pure, so the two modes produce bitwise-identical output.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Map over a slice, preserving order.
pub fn map_slice<'a, S, T, F>(items: &'a [S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}
