//! Streaming microbenchmarks that measure a host's memory and cache
//! bandwidths: a copy `b[i] = a[i]` and an in-place update `a[i] += 1.0`.
//!
//! Byte counts are bus traffic. The copy counts 24 bytes per element since
//! the store to `b` first reads its cacheline (write allocate; no
//! non-temporal stores are used). The update counts 16 bytes per element.

use std::sync::{mpsc, Barrier};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot allocate {0} elements")]
    Alloc(usize),
    #[error("failed to spawn worker thread: {0}")]
    Spawn(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Elements per array in the memory-bound runs.
pub const DEFAULT_MEMORY_ELEMENTS: usize = 20_000_000;
/// Elements per array in the cache-resident runs (128 KiB).
pub const DEFAULT_CACHE_ELEMENTS: usize = 16_384;
pub const DEFAULT_REPS: usize = 10;
/// Every timed region lasts at least this many timer ticks.
pub const TIMER_GUARD_TICKS: u32 = 10_000;

/// Where the update benchmark's working set is meant to live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FootprintTarget {
    Memory,
    Cache,
}

impl FootprintTarget {
    pub fn default_elements(self) -> usize {
        match self {
            FootprintTarget::Memory => DEFAULT_MEMORY_ELEMENTS,
            FootprintTarget::Cache => DEFAULT_CACHE_ELEMENTS,
        }
    }
}

impl std::fmt::Display for FootprintTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FootprintTarget::Memory => "memory",
            FootprintTarget::Cache => "cache",
        })
    }
}

impl std::str::FromStr for FootprintTarget {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(FootprintTarget::Memory),
            "cache" => Ok(FootprintTarget::Cache),
            other => Err(BenchError::InvalidArgument(format!(
                "unknown footprint target '{other}'"
            ))),
        }
    }
}

/// Best-of-reps measurement of one kernel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub kernel: &'static str,
    pub target: FootprintTarget,
    pub threads: usize,
    pub array_elements: usize,
    pub reps: usize,
    pub bytes_per_element: u32,
    pub write_allocate: bool,
    /// Traffic of one repetition.
    pub bytes_moved: u64,
    /// Best time of one repetition.
    pub seconds: f64,
    /// `bytes_moved / seconds`.
    pub bandwidth: f64,
    /// Sum of the output array, so the work cannot be optimized away.
    pub checksum: f64,
}

impl BenchResult {
    pub fn csv_header() -> &'static str {
        "kernel,target,threads,array_elements,reps,bytes_per_element,write_allocate,bytes_moved,seconds,bandwidth_Bps,checksum"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.9},{:.6e},{}",
            self.kernel,
            self.target,
            self.threads,
            self.array_elements,
            self.reps,
            self.bytes_per_element,
            self.write_allocate,
            self.bytes_moved,
            self.seconds,
            self.bandwidth,
            self.checksum
        )
    }
}

/// Smallest observable step of [`Instant`].
pub fn timer_granularity() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..100 {
        let t0 = Instant::now();
        let mut t1 = Instant::now();
        while t1 == t0 {
            t1 = Instant::now();
        }
        best = best.min(t1 - t0);
    }
    best
}

fn alloc(n: usize, v: f64) -> Result<Vec<f64>> {
    let mut a = Vec::new();
    a.try_reserve_exact(n).map_err(|_| BenchError::Alloc(n))?;
    a.resize(n, v);
    Ok(a)
}

fn check_args(elements: usize, threads: usize, reps: usize) -> Result<()> {
    if elements == 0 || threads == 0 || reps == 0 {
        return Err(BenchError::InvalidArgument(
            "elements, threads and reps must be >= 1".into(),
        ));
    }
    if threads > elements {
        return Err(BenchError::InvalidArgument(format!(
            "{threads} threads for {elements} elements"
        )));
    }
    Ok(())
}

/// Contiguous, nearly equal chunk bounds for `threads` workers.
fn chunk_bounds(n: usize, threads: usize) -> Vec<(usize, usize)> {
    (0..threads)
        .map(|i| (i * n / threads, (i + 1) * n / threads))
        .collect()
}

/// Run `reps` repetitions of `work` on every worker and return the best
/// time per repetition. Consecutive repetitions are grouped into one timed
/// region until a region spans the timer guard; each region is bracketed
/// by barriers and timed on its slowest worker.
fn run_timed<W>(workers: Vec<W>, reps: usize) -> Result<f64>
where
    W: FnMut() + Send,
{
    let guard = timer_granularity() * TIMER_GUARD_TICKS;
    let barrier = Barrier::new(workers.len());

    std::thread::scope(|s| -> Result<f64> {
        let (done_tx, done_rx) = mpsc::channel::<Duration>();
        let mut commands = Vec::with_capacity(workers.len());
        for (i, mut work) in workers.into_iter().enumerate() {
            let (tx, rx) = mpsc::channel::<usize>();
            let (barrier, done_tx) = (&barrier, done_tx.clone());
            // a dropped command sender ends the worker, so a failed spawn
            // never leaves the others stuck at the barrier
            std::thread::Builder::new()
                .name(format!("bench-{i}"))
                .spawn_scoped(s, move || {
                    while let Ok(g) = rx.recv() {
                        barrier.wait();
                        let t0 = Instant::now();
                        for _ in 0..g {
                            work();
                        }
                        let t = t0.elapsed();
                        barrier.wait();
                        let _ = done_tx.send(t);
                    }
                })?;
            commands.push(tx);
        }
        let region = |g: usize| {
            for c in &commands {
                c.send(g).expect("bench worker exited");
            }
            (0..commands.len())
                .map(|_| done_rx.recv().expect("bench worker exited"))
                .max()
                .unwrap()
        };
        let mut done = 0;
        let mut best = f64::INFINITY;
        let mut best_short = f64::INFINITY;
        let mut g = 1;
        while done < reps {
            let n = g.min(reps - done);
            let t = region(n);
            done += n;
            let per_rep = t.as_secs_f64() / n as f64;
            if t >= guard {
                best = best.min(per_rep);
            } else {
                best_short = best_short.min(per_rep);
                // grow the group so the next region clears the guard
                let need = guard.as_secs_f64() / t.as_secs_f64().max(1e-9) * n as f64;
                g = (need.ceil() as usize).max(g + 1);
            }
        }
        // only if no region reached the guard, fall back to the short ones
        Ok(if best.is_finite() { best } else { best_short })
    })
}

/// `b[i] = a[i]` on caller-provided arrays.
pub fn stream_copy_on(
    a: &[f64],
    b: &mut [f64],
    threads: usize,
    reps: usize,
) -> Result<BenchResult> {
    if a.len() != b.len() {
        return Err(BenchError::InvalidArgument(
            "copy arrays differ in length".into(),
        ));
    }
    let n = a.len();
    check_args(n, threads, reps)?;
    let mut outs: Vec<&mut [f64]> = Vec::with_capacity(threads);
    let mut rest: &mut [f64] = &mut *b;
    for (lo, hi) in chunk_bounds(n, threads) {
        let (head, tail) = rest.split_at_mut(hi - lo);
        outs.push(head);
        rest = tail;
    }
    let workers: Vec<_> = chunk_bounds(n, threads)
        .into_iter()
        .zip(outs)
        .map(|((lo, hi), out)| {
            let src = &a[lo..hi];
            move || {
                out.copy_from_slice(src);
                std::hint::black_box(&mut *out);
            }
        })
        .collect();
    let seconds = run_timed(workers, reps)?;
    let bytes_moved = 24 * n as u64;
    Ok(BenchResult {
        kernel: "copy",
        target: FootprintTarget::Memory,
        threads,
        array_elements: n,
        reps,
        bytes_per_element: 24,
        write_allocate: true,
        bytes_moved,
        seconds,
        bandwidth: bytes_moved as f64 / seconds,
        checksum: checksum(b),
    })
}

fn checksum(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// `a[i] += 1.0` on a caller-provided array.
pub fn update_on(
    a: &mut [f64],
    threads: usize,
    reps: usize,
    target: FootprintTarget,
) -> Result<BenchResult> {
    let n = a.len();
    check_args(n, threads, reps)?;
    let mut chunks: Vec<&mut [f64]> = Vec::with_capacity(threads);
    let mut rest: &mut [f64] = &mut *a;
    for (lo, hi) in chunk_bounds(n, threads) {
        let (head, tail) = rest.split_at_mut(hi - lo);
        chunks.push(head);
        rest = tail;
    }
    let workers: Vec<_> = chunks
        .into_iter()
        .map(|c| {
            move || {
                for v in c.iter_mut() {
                    *v += 1.0;
                }
                std::hint::black_box(&mut *c);
            }
        })
        .collect();
    let seconds = run_timed(workers, reps)?;
    let bytes_moved = 16 * n as u64;
    Ok(BenchResult {
        kernel: "update",
        target,
        threads,
        array_elements: n,
        reps,
        bytes_per_element: 16,
        write_allocate: false,
        bytes_moved,
        seconds,
        bandwidth: bytes_moved as f64 / seconds,
        checksum: checksum(a),
    })
}

/// Stream copy between two freshly allocated arrays.
pub fn stream_copy_bench(elements: usize, threads: usize, reps: usize) -> Result<BenchResult> {
    check_args(elements, threads, reps)?;
    let a = alloc(elements, 1.0)?;
    let mut b = alloc(elements, 0.0)?;
    stream_copy_on(&a, &mut b, threads, reps)
}

/// Update benchmark on a freshly allocated zero array.
pub fn update_bench(
    elements: usize,
    threads: usize,
    reps: usize,
    target: FootprintTarget,
) -> Result<BenchResult> {
    check_args(elements, threads, reps)?;
    let mut a = alloc(elements, 0.0)?;
    update_on(&mut a, threads, reps, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_the_array() {
        let c = chunk_bounds(10, 3);
        assert_eq!(c, vec![(0, 3), (3, 6), (6, 10)]);
    }

    #[test]
    fn update_adds_exactly_reps() {
        let mut a = vec![0.0; 1000];
        let r = update_on(&mut a, 2, 5, FootprintTarget::Cache).unwrap();
        assert!(a.iter().all(|&v| v == 5.0));
        assert_eq!(r.checksum, 5000.0);
        assert_eq!(r.bytes_moved, 16_000);
        assert!(r.bandwidth.is_finite() && r.bandwidth > 0.0);
    }

    #[test]
    fn copy_is_exact() {
        let a: Vec<f64> = (0..999).map(|i| i as f64 * 0.5).collect();
        let mut b = vec![0.0; 999];
        let r = stream_copy_on(&a, &mut b, 3, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(r.bytes_moved, 24 * 999);
    }

    #[test]
    fn bad_arguments() {
        assert!(update_bench(0, 1, 1, FootprintTarget::Cache).is_err());
        assert!(update_bench(4, 5, 1, FootprintTarget::Cache).is_err());
        assert!(stream_copy_on(&[1.0], &mut [0.0, 0.0], 1, 1).is_err());
        assert!("disk".parse::<FootprintTarget>().is_err());
    }

    #[test]
    fn csv_row_has_every_column() {
        let r = update_bench(64, 1, 1, FootprintTarget::Cache).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            BenchResult::csv_header().split(',').count()
        );
    }
}
