//! Run-level parallelism. With the `parallel` feature, independent runs are
//! spread over a rayon pool; without it they execute in order on the
//! calling thread. Results always come back in run-index order.

use crate::error::Result;

/// Evaluates `f(0..n)` with at most `parallelism` runs in flight and
/// returns the results indexed by run. `parallelism == 0` means "use all
/// available cores".
pub fn map_runs<T, F>(n: usize, parallelism: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallelism != 1 && n > 1 {
            return parallel(n, parallelism, f);
        }
    }
    let _ = parallelism;
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(n: usize, parallelism: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| crate::error::Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Whether this build can run experiments concurrently.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
