//! Bounded admission in front of a fixed worker pool.
//!
//! `queue_depth` counts requests admitted and not yet finished, including
//! those a worker is executing. Admission fails once it reaches capacity,
//! so the depth can never exceed it.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{unbounded, Sender};
use smcgate_core::wire::Stats;

pub type Job = Box<dyn FnOnce() + Send + 'static>;

#[derive(Default)]
struct Counters {
    depth: AtomicUsize,
    max_depth: AtomicUsize,
    busy: AtomicUsize,
    admitted: AtomicU64,
    dropped: AtomicU64,
    completed: AtomicU64,
}

pub struct WorkQueue {
    capacity: usize,
    tx: Option<Sender<Job>>,
    counters: Arc<Counters>,
    workers: Vec<JoinHandle<()>>,
}

impl WorkQueue {
    pub fn new(capacity: usize, workers: usize) -> Self {
        assert!(capacity > 0 && workers > 0, "queue needs capacity and workers");
        let (tx, rx) = unbounded::<Job>();
        let counters = Arc::new(Counters::default());
        let workers = (0..workers)
            .map(|i| {
                let rx = rx.clone();
                let c = Arc::clone(&counters);
                std::thread::Builder::new()
                    .name(format!("gateway-worker-{i}"))
                    .spawn(move || {
                        for job in rx {
                            c.busy.fetch_add(1, Ordering::SeqCst);
                            // A panicking job must not leak its queue slot.
                            let _ = std::panic::catch_unwind(std::panic::AssertUnwindSafe(job));
                            c.busy.fetch_sub(1, Ordering::SeqCst);
                            c.completed.fetch_add(1, Ordering::SeqCst);
                            c.depth.fetch_sub(1, Ordering::SeqCst);
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        Self {
            capacity,
            tx: Some(tx),
            counters,
            workers,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Admits `job` if there is room; otherwise returns it untouched.
    pub fn try_submit(&self, job: Job) -> Result<(), Job> {
        let c = &self.counters;
        let admitted = c
            .depth
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |d| (d < self.capacity).then_some(d + 1));
        match admitted {
            Ok(prev) => {
                c.max_depth.fetch_max(prev + 1, Ordering::SeqCst);
                c.admitted.fetch_add(1, Ordering::SeqCst);
                self.tx
                    .as_ref()
                    .expect("queue open")
                    .send(job)
                    .expect("workers alive while the queue exists");
                Ok(())
            }
            Err(_) => {
                c.dropped.fetch_add(1, Ordering::SeqCst);
                Err(job)
            }
        }
    }

    pub fn stats(&self) -> Stats {
        let c = &self.counters;
        Stats {
            queue_depth: c.depth.load(Ordering::SeqCst),
            workers_busy: c.busy.load(Ordering::SeqCst),
            capacity: self.capacity,
            max_queue_depth: c.max_depth.load(Ordering::SeqCst),
            admitted: c.admitted.load(Ordering::SeqCst),
            dropped: c.dropped.load(Ordering::SeqCst),
            completed: c.completed.load(Ordering::SeqCst),
        }
    }

    /// Resets the high-water mark and counters between measurement runs.
    pub fn reset_counters(&self) {
        let c = &self.counters;
        c.max_depth.store(c.depth.load(Ordering::SeqCst), Ordering::SeqCst);
        c.admitted.store(0, Ordering::SeqCst);
        c.dropped.store(0, Ordering::SeqCst);
        c.completed.store(0, Ordering::SeqCst);
    }
}

impl Drop for WorkQueue {
    fn drop(&mut self) {
        self.tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
