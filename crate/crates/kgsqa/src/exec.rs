//! Order-preserving map helpers that run on rayon when the `parallel`
//! feature is enabled and fall back to plain iteration otherwise.
//!
//! Every call site is a pure map with a deterministic merge order, so the
//! two execution modes produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential reference path, always available. Benchmarks compare this
/// against [`map_ordered`] on the same workloads.
pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_ordered(&xs, |x| x * x + 1);
        let b = map_ordered_seq(&xs, |x| x * x + 1);
        assert_eq!(a, b);
    }
}
