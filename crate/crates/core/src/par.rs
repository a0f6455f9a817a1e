//! Range-partitioned map/reduce, sequential or rayon-backed.

use crate::prelude::*;
use core::ops::Range;

/// How partial results over the grid are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Fixed partition, partials summed in index order: bit-reproducible
    /// for any thread count.
    #[default]
    Ordered,
    /// Work-stealing reduction tree; faster on many cores but the
    /// floating-point summation order varies between runs.
    Unordered,
}

/// Splits `0..n` into `parts` contiguous ranges (some possibly empty).
pub(crate) fn partition(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1);
    (0..parts)
        .map(|i| (i * n / parts)..((i + 1) * n / parts))
        .collect()
}

/// Maps every range and folds the results with `add`.
pub(crate) fn map_reduce<T, F, A>(
    n: usize,
    parts: usize,
    mode: Reduction,
    map: F,
    add: A,
) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
    A: Fn(T, T) -> T + Sync + Send,
{
    let ranges = partition(n, parts);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Reduction::Ordered => {
                let partials: Vec<T> = ranges.into_par_iter().map(&map).collect();
                partials.into_iter().reduce(add)
            }
            Reduction::Unordered => ranges.into_par_iter().map(&map).reduce_with(&add),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        ranges.into_iter().map(map).reduce(add)
    }
}
