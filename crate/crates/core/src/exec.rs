//! Sequential / data-parallel execution switch.
//!
//! The `parallel` cargo feature pulls in rayon. Without it every
//! `Execution::Parallel` request silently runs on the calling thread, so
//! callers never need their own `cfg` branches. Reductions are always done
//! sequentially in index order to keep results bit-identical between the
//! two modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Pointwise kernels below this length are never split across threads.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 4096;
#[cfg(feature = "parallel")]
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work on a thread pool.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    #[cfg(feature = "parallel")]
    fn use_pool(self, len: usize) -> bool {
        self == Execution::Parallel && len >= 2
    }

    /// Map over independent work items (runs, family members, sweep points).
    /// Output order always matches input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.use_pool(items.len()) {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Apply `f(index, &mut item)` to every element of a grid-sized buffer.
    pub fn for_each_indexed<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.use_pool(items.len()) && items.len() >= MIN_PARALLEL_LEN {
            items
                .par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * CHUNK;
                    for (i, x) in chunk.iter_mut().enumerate() {
                        f(base + i, x);
                    }
                });
            return;
        }
        for (i, x) in items.iter_mut().enumerate() {
            f(i, x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Execution::Sequential.map(&items, |x| x * x);
        let par = Execution::Parallel.map(&items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }

    #[test]
    fn indexed_kernel_matches_sequential() {
        let mut a = vec![0.0f64; 10_000];
        let mut b = a.clone();
        Execution::Sequential.for_each_indexed(&mut a, |i, x| *x = (i as f64).sin());
        Execution::Parallel.for_each_indexed(&mut b, |i, x| *x = (i as f64).sin());
        assert_eq!(a, b);
    }
}
