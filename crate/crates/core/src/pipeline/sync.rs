//! Progress counters and the relaxed-synchronization predicate.

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;

use super::PipelineConfig;
use crate::error::{Error, Result};

/// One monotone block counter per pipeline thread, each on its own cache
/// line. Only the owning thread writes its slot.
#[derive(Debug)]
pub struct SyncCounters {
    slots: Vec<CachePadded<AtomicI64>>,
}

impl SyncCounters {
    pub fn new(threads: usize) -> Self {
        Self {
            slots: (0..threads)
                .map(|_| CachePadded::new(AtomicI64::new(0)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i64 {
        self.slots[i].load(Ordering::Acquire)
    }

    /// Publish a new value for slot `i`. Must only be called by thread `i`;
    /// the release store makes its grid writes visible to readers.
    #[inline]
    pub fn publish(&self, i: usize, value: i64) {
        self.slots[i].store(value, Ordering::Release);
    }

    pub fn reset(&self) {
        for s in &self.slots {
            s.store(0, Ordering::Release);
        }
    }

    pub fn snapshot(&self) -> Vec<i64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Per-thread distance limits after team-delay adjustment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EffectiveDistances {
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl EffectiveDistances {
    /// The team delay is added to the lower limit of each team's front
    /// thread and to the upper limit of each team's rear thread. The overall
    /// front ignores the lower limit, the overall rear the upper one.
    pub fn new(cfg: &PipelineConfig) -> Self {
        let threads = cfg.threads();
        let t = cfg.team_size;
        let mut lower = Vec::with_capacity(threads);
        let mut upper = Vec::with_capacity(threads);
        for i in 0..threads {
            let team_front = i % t == 0 && i > 0;
            let team_rear = i % t == t - 1 && i + 1 < threads;
            lower.push((cfg.min_distance + if team_front { cfg.team_delay } else { 0 }) as i64);
            upper.push((cfg.max_distance + if team_rear { cfg.team_delay } else { 0 }) as i64);
        }
        Self { lower, upper }
    }

    pub fn threads(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self, i: usize) -> i64 {
        self.lower[i]
    }

    pub fn upper(&self, i: usize) -> i64 {
        self.upper[i]
    }

    pub fn is_front(&self, i: usize) -> bool {
        i == 0
    }

    pub fn is_rear(&self, i: usize) -> bool {
        i + 1 == self.threads()
    }

    /// Race-prevention condition: the predecessor is far enough ahead.
    pub fn lower_ok(&self, counters: &[i64], i: usize) -> bool {
        self.is_front(i) || counters[i - 1] - counters[i] >= self.lower[i]
    }

    /// Cache-residency condition: the successor is not too far behind.
    pub fn upper_ok(&self, counters: &[i64], i: usize) -> bool {
        self.is_rear(i) || counters[i] - counters[i + 1] <= self.upper[i]
    }
}

/// Whether thread `i` may start its next block given counter values `c`.
pub fn may_advance(c: &[i64], i: usize, dist: &EffectiveDistances) -> bool {
    dist.lower_ok(c, i) && dist.upper_ok(c, i)
}

/// Synchronization-safety samples collected during instrumented runs.
#[derive(Debug, Default)]
pub struct SafetyMonitor {
    pub block_updates: AtomicU64,
    pub lower_samples: AtomicU64,
    pub lower_violations: AtomicU64,
    pub upper_samples: AtomicU64,
    pub upper_violations: AtomicU64,
}

impl SafetyMonitor {
    pub(crate) fn record_lower(&self, gap: i64, limit: i64) {
        self.lower_samples.fetch_add(1, Ordering::Relaxed);
        if gap < limit {
            self.lower_violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub(crate) fn record_upper(&self, gap: i64, limit: i64) {
        self.upper_samples.fetch_add(1, Ordering::Relaxed);
        if gap > limit + 1 {
            self.upper_violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn summary(&self) -> SafetySummary {
        SafetySummary {
            block_updates: self.block_updates.load(Ordering::Relaxed),
            lower_samples: self.lower_samples.load(Ordering::Relaxed),
            lower_violations: self.lower_violations.load(Ordering::Relaxed),
            upper_samples: self.upper_samples.load(Ordering::Relaxed),
            upper_violations: self.upper_violations.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SafetySummary {
    pub block_updates: u64,
    pub lower_samples: u64,
    pub lower_violations: u64,
    pub upper_samples: u64,
    pub upper_violations: u64,
}

impl SafetySummary {
    pub fn merge(&mut self, o: &SafetySummary) {
        self.block_updates += o.block_updates;
        self.lower_samples += o.lower_samples;
        self.lower_violations += o.lower_violations;
        self.upper_samples += o.upper_samples;
        self.upper_violations += o.upper_violations;
    }
}

/// Bounded spinning shared by all waits: a pause hint, a yield every few
/// iterations so oversubscribed runs still progress, and a stall watchdog.
pub(crate) struct Waiter<'a> {
    pub abort: &'a AtomicBool,
    pub budget: Duration,
    pub counters: &'a SyncCounters,
}

impl Waiter<'_> {
    /// Spin until `ready(value)` holds for the value produced by `probe`.
    /// Returns the number of spin iterations.
    pub fn wait(&self, mut probe: impl FnMut() -> i64, ready: impl Fn(i64) -> bool) -> Result<u64> {
        let mut spins = 0u64;
        let mut last = i64::MIN;
        let mut since = Instant::now();
        loop {
            let v = probe();
            if ready(v) {
                return Ok(spins);
            }
            if self.abort.load(Ordering::Relaxed) {
                return Err(Error::Aborted);
            }
            spins += 1;
            if spins % 32 == 0 {
                std::thread::yield_now();
            } else {
                std::hint::spin_loop();
            }
            if spins % 512 == 0 {
                if v != last {
                    last = v;
                    since = Instant::now();
                } else if since.elapsed() > self.budget {
                    self.abort.store(true, Ordering::Relaxed);
                    return Err(Error::Deadlock {
                        stalled_ms: since.elapsed().as_millis(),
                        counters: self.counters.snapshot(),
                    });
                }
            }
        }
    }
}

/// Sense-counting spin barrier that honours the abort flag and watchdog.
pub(crate) struct SpinBarrier {
    parties: usize,
    arrived: AtomicUsize,
    generation: AtomicUsize,
}

impl SpinBarrier {
    pub fn new(parties: usize) -> Self {
        Self {
            parties,
            arrived: AtomicUsize::new(0),
            generation: AtomicUsize::new(0),
        }
    }

    pub fn wait(&self, waiter: &Waiter<'_>) -> Result<u64> {
        let gen = self.generation.load(Ordering::Acquire);
        if self.arrived.fetch_add(1, Ordering::AcqRel) + 1 == self.parties {
            self.arrived.store(0, Ordering::Relaxed);
            self.generation.fetch_add(1, Ordering::Release);
            return Ok(0);
        }
        waiter.wait(
            || self.generation.load(Ordering::Acquire) as i64,
            |g| g != gen as i64,
        )
    }
}
