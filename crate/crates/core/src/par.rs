//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch onto the rayon global pool,
//! otherwise they are plain loops. Every helper evaluates each output element
//! with a fixed sequential reduction, so results are bitwise identical
//! whichever path (and however many threads) runs them.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many units of work a helper stays on the calling thread.
#[cfg(feature = "parallel")]
const MIN_PAR_WORK: usize = 1 << 14;

/// Number of worker threads the helpers may use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Writes `out[i] = f(i)`; `cost` is the approximate work per element.
pub fn fill<F>(out: &mut [f64], cost: usize, f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len().saturating_mul(cost.max(1)) >= MIN_PAR_WORK {
            let min_len = (MIN_PAR_WORK / cost.max(1)).max(1);
            out.par_iter_mut()
                .with_min_len(min_len)
                .enumerate()
                .for_each(|(i, o)| *o = f(i));
            return;
        }
    }
    let _ = cost;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Calls `f(chunk_index, chunk)` over consecutive `chunk`-sized pieces of `data`.
pub fn for_chunks<T, F>(data: &mut [T], chunk: usize, cost_per_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        let chunks = data.len().div_ceil(chunk);
        if chunks > 1 && chunks.saturating_mul(cost_per_chunk.max(1)) >= MIN_PAR_WORK {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(c, piece)| f(c, piece));
            return;
        }
    }
    let _ = cost_per_chunk;
    for (c, piece) in data.chunks_mut(chunk).enumerate() {
        f(c, piece);
    }
}

/// Maps `0..len` through `f` and collects in index order.
pub fn map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if len > 1 {
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Runs `f` with the helpers limited to `threads` workers.
///
/// Without the `parallel` feature this just calls `f`.
pub fn with_threads<R, F>(threads: usize, f: F) -> crate::Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if threads == 0 {
        return Err(crate::Error::InvalidInput("threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::InvalidInput(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_and_map_keep_index_order() {
        let mut out = vec![0.0; 50_000];
        fill(&mut out, 1, |i| i as f64 * 0.5);
        assert!(out.iter().enumerate().all(|(i, v)| *v == i as f64 * 0.5));
        assert_eq!(map(1000, |i| i * i)[999], 999 * 999);
        assert!(map(0, |i| i).is_empty());
    }

    #[test]
    fn chunks_cover_data_once() {
        let mut data = vec![0usize; 10_001];
        for_chunks(&mut data, 100, 1 << 10, |c, piece| {
            for (k, x) in piece.iter_mut().enumerate() {
                *x += c * 100 + k;
            }
        });
        assert!(data.iter().enumerate().all(|(i, v)| *v == i));
    }

    #[test]
    fn with_threads_limits_pool() {
        assert!(with_threads(0, || ()).is_err());
        let n = with_threads(2, current_threads).unwrap();
        if cfg!(feature = "parallel") {
            assert_eq!(n, 2);
        } else {
            assert_eq!(n, 1);
        }
    }
}
