//! Data-parallel helpers.  With the `parallel` feature (default) the mappers
//! fan out over rayon; without it they run sequentially.  Results are always
//! collected in index order, so both routes produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_indexed`], kept unconditionally for benchmarks and
/// as the fallback implementation.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let a = map_indexed(100, |i| (i as f64).sin());
        let b = map_indexed_seq(100, |i| (i as f64).sin());
        assert_eq!(a, b);
    }
}
