//! Index-parallel map/reduce with a sequential fallback.
//!
//! Work items are identified by their index only, so results never depend
//! on scheduling. Without the `parallel` feature every mode runs on the
//! calling thread.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// `None` uses the ambient rayon pool.
    Parallel { workers: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { workers: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `Sequential` for a single worker, a dedicated pool otherwise.
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers: Some(workers) }
        }
    }
}

/// Folds `map(i)` for `i in 0..n` with an associative, commutative
/// `reduce`. Stops at the first error seen.
pub fn try_map_reduce<T, E, M, R, I>(exec: Execution, n: u64, identity: I, map: M, reduce: R) -> Result<T, E>
where
    T: Send,
    E: Send,
    I: Fn() -> T + Sync + Send,
    M: Fn(u64) -> Result<T, E> + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => sequential(n, &identity, &map, &reduce),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => {
            use rayon::prelude::*;
            let run = || {
                (0..n)
                    .into_par_iter()
                    .map(&map)
                    .try_reduce(&identity, |a, b| Ok(reduce(a, b)))
            };
            in_pool(workers, run)
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => sequential(n, &identity, &map, &reduce),
    }
}

fn sequential<T, E>(
    n: u64,
    identity: &impl Fn() -> T,
    map: &impl Fn(u64) -> Result<T, E>,
    reduce: &impl Fn(T, T) -> T,
) -> Result<T, E> {
    let mut acc = identity();
    for i in 0..n {
        acc = reduce(acc, map(i)?);
    }
    Ok(acc)
}

/// `map(i)` for `i in 0..n`, in index order.
pub fn map_collect<T, M>(exec: Execution, n: u64, map: M) -> Vec<T>
where
    T: Send,
    M: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(map).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => {
            use rayon::prelude::*;
            in_pool(workers, || (0..n).into_par_iter().map(&map).collect())
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => (0..n).map(map).collect(),
    }
}

#[cfg(feature = "parallel")]
fn in_pool<T: Send>(workers: Option<usize>, op: impl FnOnce() -> T + Send) -> T {
    match workers {
        None => op(),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(op),
            // pool creation only fails on resource exhaustion; the ambient
            // pool gives the same answer
            Err(_) => op(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes() -> Vec<Execution> {
        vec![
            Execution::Sequential,
            Execution::Parallel { workers: None },
            Execution::with_workers(1),
            Execution::with_workers(3),
            Execution::with_workers(8),
        ]
    }

    #[test]
    fn reduce_is_mode_independent() {
        for exec in modes() {
            let s: Result<u64, ()> = try_map_reduce(exec, 10_000, || 0, |i| Ok(i * i % 7), |a, b| a + b);
            let want: u64 = (0..10_000u64).map(|i| i * i % 7).sum();
            assert_eq!(s, Ok(want));
        }
    }

    #[test]
    fn errors_propagate() {
        for exec in modes() {
            let r: Result<u64, String> = try_map_reduce(
                exec,
                100,
                || 0,
                |i| if i == 57 { Err(format!("item {i}")) } else { Ok(1) },
                |a, b| a + b,
            );
            assert_eq!(r, Err("item 57".to_string()));
        }
    }

    #[test]
    fn collect_keeps_order() {
        for exec in modes() {
            let v = map_collect(exec, 1000, |i| i * 3);
            assert_eq!(v, (0..1000).map(|i| i * 3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn worker_helper() {
        assert_eq!(Execution::with_workers(0), Execution::Sequential);
        assert_eq!(Execution::with_workers(4), Execution::Parallel { workers: Some(4) });
    }
}
