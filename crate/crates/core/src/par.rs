//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the per-item work runs on the rayon pool;
//! without it everything runs on the calling thread. Reductions always happen
//! over fixed-size chunks in index order, so results are bit-identical across
//! thread counts and across both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Items per partial sum in [`sum_vectors`].
pub const REDUCE_CHUNK: usize = 64;

/// Ordered map over a slice.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Ordered map over `0..n`.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Sums `accumulate(item, out)` contributions of dimension `dim` over `items`.
///
/// Each chunk of [`REDUCE_CHUNK`] items is summed sequentially into its own
/// buffer, then the chunk buffers are added in chunk order.
pub fn sum_vectors<T, F>(items: &[T], dim: usize, accumulate: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) + Sync + Send,
{
    let chunk_sum = |chunk: &[T]| {
        let mut acc = vec![0.0; dim];
        for item in chunk {
            accumulate(item, &mut acc);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = items.par_chunks(REDUCE_CHUNK).map(chunk_sum).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = items.chunks(REDUCE_CHUNK).map(chunk_sum).collect();

    let mut out = vec![0.0; dim];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Runs `f` on a dedicated pool of `threads` workers (or inline without the
/// `parallel` feature). Used by the benches to compare schedules.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_schedule_independent() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e3).collect();
        let add = |x: &f64, out: &mut [f64]| {
            out[0] += x;
            out[1] += x * x;
        };
        let one = with_threads(1, || sum_vectors(&items, 2, add));
        let many = with_threads(4, || sum_vectors(&items, 2, add));
        assert_eq!(one[0].to_bits(), many[0].to_bits());
        assert_eq!(one[1].to_bits(), many[1].to_bits());
    }
}
