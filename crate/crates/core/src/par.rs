//! Execution strategy for the verifier's data-parallel loops.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on the rayon
//! pool; without it every strategy runs sequentially.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Maps `f` over `0..n` and folds the results with `combine`, starting from `init()`.
    pub fn map_reduce<T, F, I, C>(self, n: u128, f: F, init: I, combine: C) -> T
    where
        T: Send,
        F: Fn(u128) -> T + Sync + Send,
        I: Fn() -> T + Sync + Send,
        C: Fn(T, T) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel && n > 1 {
            use rayon::prelude::*;
            return par_range(0, n).map(&f).reduce(&init, &combine);
        }
        let mut acc = init();
        let mut i = 0;
        while i < n {
            acc = combine(acc, f(i));
            i += 1;
        }
        acc
    }

    /// Maps `f` over a slice, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Splits a u128 range into at most `u64::MAX`-sized chunks rayon can index.
#[cfg(feature = "parallel")]
fn par_range(start: u128, end: u128) -> impl rayon::iter::ParallelIterator<Item = u128> {
    use rayon::prelude::*;
    let len = (end - start).min(u64::MAX as u128) as u64;
    (0..len).into_par_iter().map(move |i| start + i as u128)
}

/// Installs a rayon pool with `jobs` threads for the duration of `f`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(j) = jobs {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let sum = |e: Exec| e.map_reduce(1000, |i| i as u64, || 0, |a, b| a + b);
        assert_eq!(sum(Exec::Parallel), 499_500);
        assert_eq!(sum(Exec::Sequential), 499_500);
        let v: Vec<u32> = (0..50).collect();
        assert_eq!(Exec::Parallel.map(&v, |x| x * 2), Exec::Sequential.map(&v, |x| x * 2));
    }
}
