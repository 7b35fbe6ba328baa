//! Execution of independent jobs.
//!
//! The Monte-Carlo engines split replicates into fixed blocks and hand them to
//! an [`Executor`]. Block boundaries depend only on the replicate count, and
//! results are merged in block order, so any executor that returns results in
//! job order yields bit-identical estimates.

use crate::prelude::*;

pub trait Executor: Sync {
    /// Runs `job(i)` for `i in 0..jobs`, returning the results in index order.
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..jobs).map(job).collect()
    }
}

/// Fixed block partition of `0..n` used by every engine.
pub(crate) fn blocks(n: u64) -> Vec<(u64, u64)> {
    const MIN_BLOCK: u64 = 256;
    const MAX_BLOCKS: u64 = 64;
    if n == 0 {
        return Vec::new();
    }
    let len = MIN_BLOCK.max(n.div_ceil(MAX_BLOCKS));
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + len).min(n);
        out.push((start, end));
        start = end;
    }
    out
}

/// Merges items pairwise along a balanced tree keyed by position.
pub(crate) fn tree_reduce<T>(mut items: Vec<T>, merge: impl Fn(T, T) -> T + Copy) -> Option<T> {
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range_exactly() {
        for n in [1u64, 255, 256, 257, 10_000, 1_000_003] {
            let b = blocks(n);
            assert_eq!(b.first().unwrap().0, 0);
            assert_eq!(b.last().unwrap().1, n);
            assert!(b.windows(2).all(|w| w[0].1 == w[1].0));
            assert!(b.len() <= 64);
        }
    }

    #[test]
    fn tree_reduce_keeps_order() {
        let s = tree_reduce(vec!["a", "b", "c", "d", "e"].into_iter().map(String::from).collect(), |a, b| a + &b);
        assert_eq!(s.unwrap(), "abcde");
    }
}
