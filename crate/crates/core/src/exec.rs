//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate goes through these functions. With the
//! `parallel` feature they dispatch to rayon; without it (or after
//! [`set_parallel(false)`](set_parallel)) they run the same closures in order
//! on the calling thread. Work is always split into fixed-size chunks and
//! partial results are returned in chunk order, so reductions performed by the
//! caller are bit-identical in both modes and for any thread count.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

/// Default number of items per work chunk for per-vertex loops.
pub const CHUNK: usize = 256;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enable or disable parallel dispatch at runtime. Has no effect when the
/// crate is built without the `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::SeqCst);
}

/// Whether calls will currently fan out across the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::SeqCst)
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Split `0..len` into consecutive ranges of `chunk` items and map each one.
/// Results come back in range order.
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = len.div_ceil(chunk);
    map_range(count, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(len))
    })
}

/// Run `f(first_item_index, slice)` over disjoint mutable chunks of `data`,
/// where each chunk holds `chunk_items * stride` elements.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], stride: usize, chunk_items: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let width = (chunk_items.max(1) * stride).max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(c, slice)| f(c * chunk_items.max(1), slice));
        return;
    }
    for (c, slice) in data.chunks_mut(width).enumerate() {
        f(c * chunk_items.max(1), slice);
    }
}

/// Element-wise sum of equally sized partial vectors, folded left to right.
pub fn sum_partials(parts: Vec<Vec<f64>>) -> Vec<f64> {
    let mut iter = parts.into_iter();
    let Some(mut acc) = iter.next() else {
        return Vec::new();
    };
    for part in iter {
        for (a, b) in acc.iter_mut().zip(part) {
            *a += b;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let parts = map_chunks(10, 4, |r| r);
        assert_eq!(parts, vec![0..4, 4..8, 8..10]);
        assert!(map_chunks(0, 4, |r| r).is_empty());
    }

    #[test]
    fn chunked_mutation_sees_item_offsets() {
        let mut data = vec![0usize; 14];
        for_each_chunk_mut(&mut data, 2, 3, |first, slice| {
            for (k, v) in slice.iter_mut().enumerate() {
                *v = first + k / 2;
            }
        });
        assert_eq!(data, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let work = |i: usize| (i as f64).sqrt().sin();
        set_parallel(false);
        let a = sum_partials(map_chunks(1000, 64, |r| vec![r.map(work).sum::<f64>()]));
        set_parallel(true);
        let b = sum_partials(map_chunks(1000, 64, |r| vec![r.map(work).sum::<f64>()]));
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }
}
