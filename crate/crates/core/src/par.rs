//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same work in a plain loop. Reductions always use a fixed
//! chunk size and sum the per-chunk partials in order, so results are
//! bit-identical between the two builds and across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Chunk length used for ordered reductions and chunked kernels.
pub const CHUNK: usize = 1 << 12;

/// Below this many elements the parallel build stays sequential as well.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
const PAR_THRESHOLD: usize = 1 << 14;

/// Whether a kernel over `len` elements should fan out: large enough, and
/// more than one thread to fan out to.
#[cfg(feature = "parallel")]
fn fan_out(len: usize) -> bool {
    len >= PAR_THRESHOLD && rayon::current_num_threads() > 1
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Deterministic `sum_{i < len} f(i)`.
pub fn ordered_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial = |c: usize| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(len);
        (start..end).map(&f).sum::<f64>()
    };
    #[cfg(feature = "parallel")]
    if fan_out(len) {
        let partials: Vec<f64> = (0..chunks).into_par_iter().map(partial).collect();
        return partials.into_iter().sum();
    }
    (0..chunks)
        .map(partial)
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

/// Applies `f(chunk_start, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    if fan_out(data.len()) {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, s)| f(c * chunk, s));
        return;
    }
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, s)| f(c * chunk, s));
}

/// `(0..len).map(f).collect()`, in index order.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if fan_out(len) {
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Maps over a small number of heavy, independent tasks (restarts, grid
/// cells, matrix cells). Parallel whenever the feature is on.
pub fn map_tasks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Visits every index pair `(i, i | 1 << bit)` with bit `bit` of `i` clear,
/// calling `f(i, &mut data[i], &mut data[i | 1 << bit])`. `data.len()` must be
/// a power of two larger than `1 << bit`.
pub fn for_each_pair<T, F>(data: &mut [T], bit: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T, &mut T) + Sync,
{
    let len = data.len();
    let stride = 1usize << bit;
    let block = stride << 1;
    assert!(len.is_power_of_two() && block <= len);
    #[cfg(feature = "parallel")]
    if block > CHUNK && fan_out(len) {
        for (j, b) in data.chunks_mut(block).enumerate() {
            let base = j * block;
            let (lo, hi) = b.split_at_mut(stride);
            lo.par_chunks_mut(CHUNK)
                .zip(hi.par_chunks_mut(CHUNK))
                .enumerate()
                .for_each(|(c, (xs, ys))| pair_loop(base + c * CHUNK, xs, ys, &f));
        }
        return;
    }
    let chunk = block.max(CHUNK).min(len);
    for_each_chunk_mut(data, chunk, |start, c| {
        for (j, b) in c.chunks_mut(block).enumerate() {
            let (lo, hi) = b.split_at_mut(stride);
            pair_loop(start + j * block, lo, hi, &f);
        }
    });
}

#[inline(always)]
fn pair_loop<T, F>(base: usize, lo: &mut [T], hi: &mut [T], f: &F)
where
    F: Fn(usize, &mut T, &mut T),
{
    for (i, (x, y)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
        f(base + i, x, y);
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`. The sequential build ignores the worker count.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match workers {
        Some(0) => Err(Error::invalid("worker count must be positive")),
        #[cfg(feature = "parallel")]
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::ResourceLimit(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_sum_matches_chunked_sequential() {
        let len = 3 * CHUNK + 17;
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let mut expected = 0.0;
        for c in 0..len.div_ceil(CHUNK) {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(len);
            expected += (start..end).map(f).sum::<f64>();
        }
        for workers in [1, 4] {
            let got = with_workers(Some(workers), || ordered_sum(len, f)).unwrap();
            assert_eq!(got.to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn map_indices_keeps_order() {
        let v = with_workers(Some(4), || map_indices(PAR_THRESHOLD + 5, |i| i * 2)).unwrap();
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn pairs_visit_each_partner_once() {
        with_workers(Some(4), pairs_check).unwrap();
        pairs_check();
    }

    fn pairs_check() {
        for len_log in [3usize, 15, 17] {
            let len = 1usize << len_log;
            for bit in [0, len_log / 2, len_log - 1] {
                let mut v: Vec<u32> = vec![0; len];
                let seen = std::sync::atomic::AtomicUsize::new(0);
                for_each_pair(&mut v, bit, |i, a, b| {
                    assert_eq!(i >> bit & 1, 0);
                    *a += 1;
                    *b += 2;
                    seen.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                });
                assert_eq!(seen.into_inner(), len / 2);
                for (i, &x) in v.iter().enumerate() {
                    assert_eq!(x, if i >> bit & 1 == 0 { 1 } else { 2 });
                }
            }
        }
    }

    #[test]
    fn chunk_kernel_covers_everything() {
        let mut v = vec![0usize; PAR_THRESHOLD * 2 + 3];
        with_workers(Some(4), || {
            for_each_chunk_mut(&mut v, CHUNK, |start, s| {
                for (k, x) in s.iter_mut().enumerate() {
                    *x = start + k;
                }
            })
        })
        .unwrap();
        assert!(v.iter().enumerate().all(|(i, &x)| x == i));
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(with_workers(Some(0), || ()).is_err());
    }
}
