//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_range`] so results are
//! identical regardless of [`Execution`]: work items are independent and the
//! output is always in index order. Without the `parallel` feature the
//! parallel mode silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        #[cfg(feature = "parallel")]
        return self == Execution::Parallel && rayon::current_num_threads() > 1;
        #[cfg(not(feature = "parallel"))]
        false
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_range<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().with_min_len(16).map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, collecting results in order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = map_range(Execution::Sequential, 1000, |i| (i as f64).sqrt());
        let par = map_range(Execution::Parallel, 1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(
            map_slice(Execution::Sequential, &items, |x| x * 3),
            map_slice(Execution::Parallel, &items, |x| x * 3)
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn pool_results_match_sequential() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        pool.install(|| {
            assert!(Execution::Parallel.is_parallel());
            let seq = map_range(Execution::Sequential, 5000, |i| i * i);
            assert_eq!(seq, map_range(Execution::Parallel, 5000, |i| i * i));
        });
        assert!(!Execution::Sequential.is_parallel());
    }
}
