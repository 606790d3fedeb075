//! Execution policy for the data-parallel loops.
//!
//! Every parallel path has a sequential twin that produces bit-identical
//! output; `Exec::Parallel` silently degrades to sequential when the crate is
//! built without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this policy will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fold-then-combine reduction. `combine` must be associative for the
/// parallel and sequential results to agree.
pub fn fold_slice<T, A, ID, F, C>(exec: Exec, items: &[T], identity: ID, fold: F, combine: C) -> A
where
    T: Sync,
    A: Send,
    ID: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    C: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        return items.par_iter().fold(&identity, &fold).reduce(&identity, &combine);
    }
    let _ = (exec, &combine);
    items.iter().fold(identity(), fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let v: Vec<u64> = (0..10_000).collect();
        let a = map_slice(Exec::Sequential, &v, |x| x * 3);
        let b = map_slice(Exec::Parallel, &v, |x| x * 3);
        assert_eq!(a, b);
        let s = fold_slice(Exec::Sequential, &v, || 0u64, |a, x| a + x, |a, b| a + b);
        let p = fold_slice(Exec::Parallel, &v, || 0u64, |a, x| a + x, |a, b| a + b);
        assert_eq!(s, p);
        assert_eq!(map_range(Exec::Parallel, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
