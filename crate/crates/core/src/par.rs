//! Execution strategy for the data-parallel loops (Bellman sweeps, gradient
//! matrices, Gram products, seed sweeps).
//!
//! Every helper here produces results in input order, so the choice of
//! strategy never changes a numeric result.

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Plain sequential iteration on the calling thread.
    None,
    /// Work-stealing over the global rayon pool. Falls back to sequential
    /// iteration when the crate is built without the `parallel` feature.
    #[default]
    Rayon,
}

impl Parallelism {
    /// True when this build can actually run loops in parallel.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// `(0..n).map(f).collect()` under the chosen strategy.
pub fn map_range<T, F>(par: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

/// Applies `f(i, chunk)` to consecutive `chunk`-sized pieces of `out`.
pub fn for_each_chunk<T, F>(par: Parallelism, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = par;
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Maps over a slice of independent jobs, preserving order.
pub fn map_slice<I, T, F>(par: Parallelism, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = par;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let a = map_range(Parallelism::None, 100, |i| (i * i) as f64);
        let b = map_range(Parallelism::Rayon, 100, |i| (i * i) as f64);
        assert_eq!(a, b);

        let mut x = vec![0usize; 10];
        let mut y = vec![0usize; 10];
        for_each_chunk(Parallelism::None, &mut x, 3, |i, c| c.iter_mut().for_each(|v| *v = i));
        for_each_chunk(Parallelism::Rayon, &mut y, 3, |i, c| c.iter_mut().for_each(|v| *v = i));
        assert_eq!(x, y);
        assert_eq!(x, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }
}
