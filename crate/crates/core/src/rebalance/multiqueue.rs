//! Relaxed concurrent max-priority queue built from try-locked sequential
//! heaps (a multi-queue).
//!
//! Elements are dense ids below the capacity given at construction. Each
//! element lives in at most one sequential queue; its queue index and heap
//! position are kept in shared arrays that are only written while holding
//! that queue's lock.

use std::cmp::Reverse;
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};

use parking_lot::Mutex;
use rand::Rng;

pub const NOT_QUEUED: u32 = u32::MAX;

/// Key type stored in the queue.
pub trait QueueKey: Ord + Copy + Send + Sync {
    /// Monotone approximation used to compare the tops of two queues
    /// without locking them.
    fn approx(&self) -> f64;
}

impl QueueKey for crate::rebalance::Priority {
    fn approx(&self) -> f64 {
        crate::rebalance::Priority::approx(self)
    }
}

impl QueueKey for i64 {
    fn approx(&self) -> f64 {
        *self as f64
    }
}

/// Outcome of inspecting the current maximum under the queue lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inspect<K> {
    /// Remove and return the element.
    Accept,
    /// Leave it in place and draw again (e.g. its node lock was taken).
    Retry,
    /// Its key got worse: store `K` and draw again.
    Rekey(K),
}

struct Heap<K> {
    entries: Vec<(K, Reverse<u32>)>,
}

impl<K: Ord + Copy> Heap<K> {
    fn new() -> Self {
        Heap { entries: Vec::new() }
    }

    fn top(&self) -> Option<(u32, K)> {
        self.entries.first().map(|&(k, Reverse(e))| (e, k))
    }

    fn set(&mut self, i: usize, item: (K, Reverse<u32>), positions: &[AtomicU32]) {
        positions[item.1 .0 as usize].store(i as u32, Ordering::Relaxed);
        self.entries[i] = item;
    }

    fn sift_up(&mut self, mut i: usize, positions: &[AtomicU32]) {
        let item = self.entries[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.entries[parent] >= item {
                break;
            }
            let p = self.entries[parent];
            self.set(i, p, positions);
            i = parent;
        }
        self.set(i, item, positions);
    }

    fn sift_down(&mut self, mut i: usize, positions: &[AtomicU32]) {
        let item = self.entries[i];
        let len = self.entries.len();
        loop {
            let left = 2 * i + 1;
            if left >= len {
                break;
            }
            let right = left + 1;
            let child = if right < len && self.entries[right] > self.entries[left] {
                right
            } else {
                left
            };
            if self.entries[child] <= item {
                break;
            }
            let c = self.entries[child];
            self.set(i, c, positions);
            i = child;
        }
        self.set(i, item, positions);
    }

    fn push(&mut self, elem: u32, key: K, positions: &[AtomicU32]) {
        self.entries.push((key, Reverse(elem)));
        let last = self.entries.len() - 1;
        self.sift_up(last, positions);
    }

    fn pop(&mut self, positions: &[AtomicU32]) -> Option<(u32, K)> {
        let top = self.top()?;
        let last = self.entries.pop().unwrap();
        if !self.entries.is_empty() {
            self.entries[0] = last;
            self.sift_down(0, positions);
        }
        Some(top)
    }

    fn update(&mut self, elem: u32, key: K, positions: &[AtomicU32]) {
        let i = positions[elem as usize].load(Ordering::Relaxed) as usize;
        debug_assert_eq!(self.entries[i].1 .0, elem);
        let old = self.entries[i].0;
        self.entries[i].0 = key;
        if key > old {
            self.sift_up(i, positions);
        } else {
            self.sift_down(i, positions);
        }
    }
}

struct SeqQueue<K> {
    heap: Mutex<Heap<K>>,
    /// `f64` bits of the approximate top key, `-inf` when empty.
    top_hint: AtomicU64,
}

impl<K: QueueKey> SeqQueue<K> {
    fn refresh_hint(&self, heap: &Heap<K>) {
        let hint = heap.top().map_or(f64::NEG_INFINITY, |(_, k)| k.approx());
        self.top_hint.store(hint.to_bits(), Ordering::Relaxed);
    }

    fn hint(&self) -> f64 {
        f64::from_bits(self.top_hint.load(Ordering::Relaxed))
    }
}

pub struct MultiQueue<K> {
    queues: Vec<SeqQueue<K>>,
    location: Vec<AtomicU32>,
    positions: Vec<AtomicU32>,
    size: AtomicUsize,
}

impl<K: QueueKey> MultiQueue<K> {
    pub fn new(capacity: usize, num_queues: usize) -> Self {
        let num_queues = num_queues.max(1);
        MultiQueue {
            queues: (0..num_queues)
                .map(|_| SeqQueue {
                    heap: Mutex::new(Heap::new()),
                    top_hint: AtomicU64::new(f64::NEG_INFINITY.to_bits()),
                })
                .collect(),
            location: (0..capacity).map(|_| AtomicU32::new(NOT_QUEUED)).collect(),
            positions: (0..capacity).map(|_| AtomicU32::new(0)).collect(),
            size: AtomicUsize::new(0),
        }
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn len(&self) -> usize {
        self.size.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the sequential queue holding `elem`, if any.
    #[inline]
    pub fn queue_of(&self, elem: u32) -> Option<usize> {
        match self.location[elem as usize].load(Ordering::Acquire) {
            NOT_QUEUED => None,
            q => Some(q as usize),
        }
    }

    /// Inserts into a random sequential queue, redrawing whenever the
    /// try-lock fails. `elem` must not already be queued.
    pub fn insert<R: Rng>(&self, elem: u32, key: K, rng: &mut R) {
        debug_assert!(self.queue_of(elem).is_none());
        let mut failures = 0u32;
        loop {
            let q = rng.random_range(0..self.queues.len());
            let queue = &self.queues[q];
            if let Some(mut heap) = queue.heap.try_lock() {
                self.location[elem as usize].store(q as u32, Ordering::Release);
                heap.push(elem, key, &self.positions);
                queue.refresh_hint(&heap);
                self.size.fetch_add(1, Ordering::AcqRel);
                return;
            }
            backoff(&mut failures);
        }
    }

    /// Relaxed delete-max without any checks.
    pub fn try_delete_max<R: Rng>(&self, rng: &mut R) -> Option<(u32, K)> {
        self.try_delete_max_with(rng, |_, _| Inspect::Accept)
    }

    /// Relaxed delete-max fused with a caller check that runs while the
    /// chosen queue is locked. Returns `None` only once every queue is empty;
    /// this is exact as long as no insertions run concurrently.
    pub fn try_delete_max_with<R, F>(&self, rng: &mut R, mut inspect: F) -> Option<(u32, K)>
    where
        R: Rng,
        F: FnMut(u32, K) -> Inspect<K>,
    {
        let q_count = self.queues.len();
        let mut failures = 0u32;
        loop {
            if self.is_empty() {
                return None;
            }
            let q = if q_count == 1 {
                0
            } else {
                let a = rng.random_range(0..q_count);
                let mut b = rng.random_range(0..q_count - 1);
                if b >= a {
                    b += 1;
                }
                let (ha, hb) = (self.queues[a].hint(), self.queues[b].hint());
                if ha == f64::NEG_INFINITY && hb == f64::NEG_INFINITY {
                    let start = rng.random_range(0..q_count);
                    match (0..q_count)
                        .map(|i| (start + i) % q_count)
                        .find(|&i| self.queues[i].hint() != f64::NEG_INFINITY)
                    {
                        Some(i) => i,
                        None => {
                            backoff(&mut failures);
                            continue;
                        }
                    }
                } else if ha >= hb {
                    a
                } else {
                    b
                }
            };
            let queue = &self.queues[q];
            let Some(mut heap) = queue.heap.try_lock() else {
                backoff(&mut failures);
                continue;
            };
            let Some((elem, key)) = heap.top() else {
                queue.refresh_hint(&heap);
                drop(heap);
                backoff(&mut failures);
                continue;
            };
            match inspect(elem, key) {
                Inspect::Accept => {
                    heap.pop(&self.positions);
                    self.location[elem as usize].store(NOT_QUEUED, Ordering::Release);
                    queue.refresh_hint(&heap);
                    self.size.fetch_sub(1, Ordering::AcqRel);
                    return Some((elem, key));
                }
                Inspect::Retry => {
                    drop(heap);
                    backoff(&mut failures);
                }
                Inspect::Rekey(new_key) => {
                    heap.update(elem, new_key, &self.positions);
                    queue.refresh_hint(&heap);
                }
            }
        }
    }

    /// Applies key updates for elements that all live in queue `q`. Returns
    /// `false` without doing anything if the queue lock is busy.
    pub fn try_update_batch(&self, q: usize, updates: &[(u32, K)]) -> bool {
        let queue = &self.queues[q];
        let Some(mut heap) = queue.heap.try_lock() else {
            return false;
        };
        for &(elem, key) in updates {
            if self.queue_of(elem) == Some(q) {
                heap.update(elem, key, &self.positions);
            }
        }
        queue.refresh_hint(&heap);
        true
    }

    /// Current key of a queued element (locks its queue).
    pub fn key_of(&self, elem: u32) -> Option<K> {
        let q = self.queue_of(elem)?;
        let heap = self.queues[q].heap.lock();
        if self.queue_of(elem) != Some(q) {
            return None;
        }
        let i = self.positions[elem as usize].load(Ordering::Relaxed) as usize;
        Some(heap.entries[i].0)
    }
}

/// Spins briefly, then yields so oversubscribed workers make progress.
#[inline]
pub(crate) fn backoff(failures: &mut u32) {
    *failures += 1;
    if failures.is_multiple_of(16) {
        std::thread::yield_now();
    } else {
        std::hint::spin_loop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_queue_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mq = MultiQueue::<i64>::new(3, 1);
        mq.insert(0, 3, &mut rng);
        mq.insert(1, 1, &mut rng);
        mq.insert(2, 2, &mut rng);
        let order: Vec<i64> = std::iter::from_fn(|| mq.try_delete_max(&mut rng).map(|(_, k)| k)).collect();
        assert_eq!(order, vec![3, 2, 1]);
        assert!(mq.try_delete_max(&mut rng).is_none());
    }

    #[test]
    fn ties_prefer_smaller_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mq = MultiQueue::<i64>::new(4, 1);
        for e in [3, 1, 2] {
            mq.insert(e, 5, &mut rng);
        }
        assert_eq!(mq.try_delete_max(&mut rng), Some((1, 5)));
    }

    #[test]
    fn rekey_in_place() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mq = MultiQueue::<i64>::new(2, 1);
        mq.insert(0, 10, &mut rng);
        mq.insert(1, 5, &mut rng);
        let mut first = true;
        let got = mq.try_delete_max_with(&mut rng, |e, _| {
            if first && e == 0 {
                first = false;
                Inspect::Rekey(1)
            } else {
                Inspect::Accept
            }
        });
        assert_eq!(got, Some((1, 5)));
        assert_eq!(mq.key_of(0), Some(1));
    }

    #[test]
    fn many_queues_return_every_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mq = MultiQueue::<i64>::new(500, 8);
        for e in 0..500u32 {
            mq.insert(e, (e as i64 * 7919) % 101, &mut rng);
        }
        let mut seen = vec![false; 500];
        while let Some((e, _)) = mq.try_delete_max(&mut rng) {
            assert!(!seen[e as usize]);
            seen[e as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
