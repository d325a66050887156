//! Deterministic data-parallel scheduling.
//!
//! Every parallel loop in this crate follows the same contract: the index
//! space is split into fixed-size chunks, each chunk produces a partial
//! result on its own, and partials are combined sequentially in chunk
//! order. Results are therefore bit-identical whatever the worker count,
//! and identical to the sequential fallback built without the `parallel`
//! feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk length for grid sweeps. Large enough to amortize dispatch,
/// small enough that a chunk's working set stays in cache.
pub const CHUNK: usize = 8192;

/// Number of chunks covering `len` items.
pub fn chunk_count(len: usize, chunk: usize) -> usize {
    len.div_ceil(chunk)
}

/// Map every chunk of `0..len` through `f`, returning partials in chunk
/// order. Sequential version; always available.
pub fn map_chunks_serial<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync,
    T: Send,
{
    (0..chunk_count(len, chunk))
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(len);
            f(c, lo..hi)
        })
        .collect()
}

/// Map every chunk of `0..len` through `f`, in parallel when the feature
/// is enabled. Partials come back in chunk order either way.
#[cfg(feature = "parallel")]
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync,
    T: Send,
{
    (0..chunk_count(len, chunk))
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(len);
            f(c, lo..hi)
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync,
    T: Send,
{
    map_chunks_serial(len, chunk, f)
}

/// Neumaier compensated accumulator: running sum plus a carry of lost
/// low-order bits. Exact enough that 10^7-term grid averages keep full
/// double precision.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_map_is_order_stable() {
        let a = map_chunks(100_000, 777, |c, r| (c, r.len()));
        let b = map_chunks_serial(100_000, 777, |c, r| (c, r.len()));
        assert_eq!(a, b);
        assert_eq!(a.len(), chunk_count(100_000, 777));
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let mut acc = Neumaier::new();
        acc.add(1.0);
        acc.add(1e-16);
        acc.add(-1.0);
        assert_eq!(acc.total(), 1e-16);
        let naive = 1.0 + 1e-16 - 1.0;
        assert_eq!(naive, 0.0);
    }
}
