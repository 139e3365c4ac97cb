//! Order-preserving data parallelism over scoped threads.

use std::num::NonZeroUsize;
use std::thread;

/// Worker threads to use: the machine's available parallelism, capped by
/// `NEURODODGE_THREADS` when set.
pub fn thread_count() -> usize {
    let available = thread::available_parallelism().map_or(1, NonZeroUsize::get);
    std::env::var("NEURODODGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .map_or(available, |n| n.min(available))
}

/// Applies `f` to every item and returns the results in input order. Items
/// are split into contiguous chunks, one per thread, so the output never
/// depends on scheduling.
pub(crate) fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = thread_count().min(items.len());
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}
