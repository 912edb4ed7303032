//! Data-parallel helpers with a sequential fallback when the `parallel` feature is off.

/// Below this many items the sequential path is used even with `parallel` enabled.
pub const MIN_PARALLEL_ITEMS: usize = 4;

/// Maps `f` over `items`, in parallel when the feature is on and the input is large enough.
#[allow(unused_variables)]
pub fn maybe_parallel_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= MIN_PARALLEL_ITEMS {
            return items.par_iter().map(f).collect();
        }
    }

    items.iter().map(f).collect()
}

/// Sequential map, always. Used by benchmarks as the baseline.
pub fn sequential_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// True if `pred` holds for every item, short-circuiting.
#[allow(unused_variables)]
pub fn maybe_parallel_all<T, F>(items: &[T], pred: F) -> bool
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if items.len() >= MIN_PARALLEL_ITEMS {
            return items.par_iter().all(pred);
        }
    }

    items.iter().all(pred)
}
