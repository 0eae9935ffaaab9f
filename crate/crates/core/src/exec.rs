use std::ops::Range;

/// Applies `f` to consecutive chunks of `0..n` and returns the results in
/// chunk order. Chunk boundaries depend only on `n` and `chunk`, never on the
/// number of worker threads.
pub(crate) fn map_chunks<T, F>(n: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    let range = move |c: u64| c * chunk..((c + 1) * chunk).min(n);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(|c| f(range(c))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(|c| f(range(c))).collect()
    }
}
