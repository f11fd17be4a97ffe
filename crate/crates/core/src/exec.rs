//! Data-parallel execution with a sequential fallback.
//!
//! Work is expressed as an indexed batch. With the `parallel` feature (on by
//! default) `Parallelism::Parallel` dispatches to rayon; without it, or with
//! `Parallelism::Sequential`, the same closures run in order on the calling
//! thread. Results are always returned in index order, so both paths produce
//! identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Evaluates `f(i)` for `i in 0..len`, in index order.
pub fn map_indexed<T, F>(par: Parallelism, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..len).map(f).collect()
}

/// Maps over a slice, in order.
pub fn map_slice<S, T, F>(par: Parallelism, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = par;
    items.iter().map(f).collect()
}

/// Splits `0..total` into contiguous chunks of at most `chunk` indices and
/// evaluates `f(start, end)` on each, returning results in chunk order.
pub fn map_chunks<T, F>(par: Parallelism, total: u128, chunk: u128, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u128, u128) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = total.div_ceil(chunk) as usize;
    map_indexed(par, count, |c| {
        let start = c as u128 * chunk;
        f(start, (start + chunk).min(total))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let a = map_indexed(Parallelism::Sequential, 100, |i| i * i);
        let b = map_indexed(Parallelism::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
        let c = map_chunks(Parallelism::Parallel, 10, 3, |s, e| (s, e));
        assert_eq!(c, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
    }
}
