//! Data-parallel execution helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `*_auto` entry points fan work
//! out over rayon; without it they run the same per-item closures in a
//! plain loop. Results are always collected in index order and reduced
//! left-to-right, so the two modes are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return (0..n).into_par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    map_range_seq(n, f)
}

/// Sequential variant of [`map_range`]; always available, used by the
/// benchmark suite as the baseline.
pub fn map_range_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sums `f(i)` over `0..n` by computing per-index partials and folding
/// them in index order. The parallel and sequential paths perform the
/// identical sequence of final additions.
pub fn sum_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials = map_range(n, f);
    partials.iter().sum()
}

/// Sequential variant of [`sum_range`].
pub fn sum_range_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let partials = map_range_seq(n, f);
    partials.iter().sum()
}
