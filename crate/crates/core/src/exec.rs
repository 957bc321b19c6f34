//! Execution policy for the data-parallel kernels.
//!
//! Every parallel kernel partitions its work into a fixed number of chunks
//! that depends only on the problem shape, and partial results are combined
//! in chunk order. The sequential and parallel paths therefore produce
//! bit-identical output regardless of the thread count.

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Exec {
    /// Plain loops on the calling thread.
    Sequential,
    /// Rayon work stealing on the current pool. Falls back to sequential
    /// execution when the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// True when this policy will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n` and returns results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Splits `0..len` into at most `max_chunks` contiguous ranges of near-equal size.
pub(crate) fn chunk_ranges(len: usize, max_chunks: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = max_chunks.clamp(1, len.max(1));
    let base = len / chunks;
    let extra = len % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let size = base + usize::from(c < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}
