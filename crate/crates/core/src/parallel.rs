//! Order-preserving map that uses rayon when the `parallel` feature is on.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every `map_ordered` on this thread forced sequential.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

#[cfg(feature = "parallel")]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    if FORCE_SEQUENTIAL.with(Cell::get) {
        return items.iter().map(f).collect();
    }
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Runs `f` on a pool of `jobs` threads (1 means plain sequential).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                return pool.install(f);
            }
        }
    }
    if jobs <= 1 {
        sequential(f)
    } else {
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_order_under_any_job_count() {
        let items: Vec<u64> = (0..1000).collect();
        for jobs in [1, 2, 8] {
            let out = with_jobs(jobs, || map_ordered(&items, |x| x * x));
            assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }
}
