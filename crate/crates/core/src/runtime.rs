//! Worker pool shared by all parallel phases.
//!
//! With one worker every phase runs inline on the calling thread in a fixed
//! order, which is what the deterministic mode relies on.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Clone)]
pub struct Runtime {
    workers: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime").field("workers", &self.workers).finish()
    }
}

impl Runtime {
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        let pool = (workers > 1).then(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("upart-worker-{i}"))
                    .build()
                    .expect("failed to start worker threads"),
            )
        });
        Runtime { workers, pool }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    #[inline]
    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_sequential(&self) -> bool {
        self.workers == 1
    }

    /// Runs `f(worker_index)` once on every worker and waits for all of them.
    pub fn run_workers<F>(&self, f: F)
    where
        F: Fn(usize) + Sync,
    {
        match &self.pool {
            None => f(0),
            Some(pool) => {
                pool.broadcast(|ctx| f(ctx.index()));
            }
        }
    }

    /// Calls `f` on every item, in order when sequential.
    pub fn for_each<T, F>(&self, items: &[T], f: F)
    where
        T: Sync,
        F: Fn(&T) + Sync + Send,
    {
        match &self.pool {
            None => items.iter().for_each(f),
            Some(pool) => pool.install(|| items.par_iter().for_each(f)),
        }
    }

    /// Splits `0..len` into chunks that the workers claim dynamically. Each
    /// worker creates its scratch state once with `init`. Sequentially the
    /// chunks are processed in order.
    pub fn for_each_chunk<S, I, F>(&self, len: usize, chunk: usize, init: I, f: F)
    where
        I: Fn() -> S + Sync,
        F: Fn(&mut S, std::ops::Range<usize>) + Sync,
    {
        let chunk = chunk.max(1);
        let next = AtomicUsize::new(0);
        self.run_workers(|_| {
            let mut scratch = init();
            loop {
                let start = next.fetch_add(chunk, Ordering::Relaxed);
                if start >= len {
                    break;
                }
                f(&mut scratch, start..(start + chunk).min(len));
            }
        });
    }

    /// Runs `f` inside the pool so that nested rayon iterators use it.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            None => f(),
            Some(pool) => pool.install(f),
        }
    }
}

/// Independent per-worker RNG stream derived from a base seed.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64 + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_worker_runs_once() {
        for workers in [1, 3] {
            let rt = Runtime::new(workers);
            let hits = AtomicUsize::new(0);
            let mask = AtomicUsize::new(0);
            rt.run_workers(|i| {
                hits.fetch_add(1, Ordering::Relaxed);
                mask.fetch_or(1 << i, Ordering::Relaxed);
            });
            assert_eq!(hits.into_inner(), workers);
            assert_eq!(mask.into_inner(), (1 << workers) - 1);
        }
    }

    #[test]
    fn chunks_cover_the_range_once() {
        for workers in [1, 4] {
            let rt = Runtime::new(workers);
            let seen: Vec<AtomicUsize> = (0..1000).map(|_| AtomicUsize::new(0)).collect();
            rt.for_each_chunk(
                1000,
                7,
                || (),
                |_, range| {
                    for i in range {
                        seen[i].fetch_add(1, Ordering::Relaxed);
                    }
                },
            );
            assert!(seen.iter().all(|s| s.load(Ordering::Relaxed) == 1));
        }
    }
}
