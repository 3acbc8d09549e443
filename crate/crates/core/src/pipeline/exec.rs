//! Team sweeps: every pipeline thread walks the block plan in order and
//! applies its `T` updates to each block, trailing its predecessor.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sync::{EffectiveDistances, SafetyMonitor, SpinBarrier, SyncCounters, Waiter};
use super::{PipelineConfig, SyncMode};
use crate::error::{invalid, Error, Result};
use crate::grid::{BlockPlan, BlockSpec, Direction, Grid3, Region};
use crate::kernel::{update_region_raw, Geom, GridMode};

/// The arrays a pipelined run operates on.
#[derive(Clone, Debug)]
pub enum GridSet {
    /// Two equally shaped grids; `current` holds the latest time level.
    TwoGrid { grids: [Grid3; 2], current: usize },
    /// One grid with `pad >= h` for diagonal shifting.
    Compressed(Grid3),
}

impl GridSet {
    /// Copy `initial` into storage suitable for `mode` and `h` updates per
    /// pass.
    pub fn new(initial: &Grid3, mode: GridMode, h: usize) -> Result<Self> {
        match mode {
            GridMode::TwoGrid => {
                let mut a = Grid3::zeroed(initial.dims(), 0)?;
                a.copy_logical_from(initial)?;
                let b = a.clone();
                Ok(GridSet::TwoGrid {
                    grids: [a, b],
                    current: 0,
                })
            }
            GridMode::Compressed => {
                let mut g = Grid3::zeroed(initial.dims(), h)?;
                g.copy_logical_from(initial)?;
                Ok(GridSet::Compressed(g))
            }
        }
    }

    pub fn mode(&self) -> GridMode {
        match self {
            GridSet::TwoGrid { .. } => GridMode::TwoGrid,
            GridSet::Compressed(_) => GridMode::Compressed,
        }
    }

    pub fn current(&self) -> &Grid3 {
        match self {
            GridSet::TwoGrid { grids, current } => &grids[*current],
            GridSet::Compressed(g) => g,
        }
    }

    pub fn current_mut(&mut self) -> &mut Grid3 {
        match self {
            GridSet::TwoGrid { grids, current } => &mut grids[*current],
            GridSet::Compressed(g) => g,
        }
    }

    pub fn into_current(self) -> Grid3 {
        match self {
            GridSet::TwoGrid {
                grids: [a, b],
                current,
            } => {
                if current == 0 {
                    a
                } else {
                    b
                }
            }
            GridSet::Compressed(g) => g,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.current().dims()
    }
}

#[derive(Clone, Copy)]
enum RawKind {
    TwoGrid {
        ptrs: [*mut f64; 2],
        origin: isize,
        current: usize,
    },
    Compressed {
        ptr: *mut f64,
        origin: isize,
        step: isize,
    },
}

/// Unsynchronized view of the grid storage handed to worker threads.
#[derive(Clone, Copy)]
struct RawFrames {
    kind: RawKind,
    geom: Geom,
}

// SAFETY: workers only touch disjoint cells, ordered by the counters.
unsafe impl Send for RawFrames {}
unsafe impl Sync for RawFrames {}

impl RawFrames {
    fn new(gs: &mut GridSet, direction: Direction) -> Self {
        match gs {
            GridSet::TwoGrid { grids, current } => {
                let geom = Geom::of(&grids[0]);
                let origin = grids[0].origin(0);
                let [a, b] = grids;
                RawFrames {
                    kind: RawKind::TwoGrid {
                        ptrs: [a.as_mut_ptr(), b.as_mut_ptr()],
                        origin,
                        current: *current,
                    },
                    geom,
                }
            }
            GridSet::Compressed(g) => RawFrames {
                geom: Geom::of(g),
                kind: RawKind::Compressed {
                    ptr: g.as_mut_ptr(),
                    origin: g.origin(0),
                    step: -direction.sign(),
                },
            },
        }
    }

    /// Source and destination of update level `u` (1-based within a pass).
    fn level(&self, u: usize) -> (*const f64, isize, *mut f64, isize, bool) {
        match self.kind {
            RawKind::TwoGrid {
                ptrs,
                origin,
                current,
            } => (
                ptrs[(current + u - 1) % 2],
                origin,
                ptrs[(current + u) % 2],
                origin,
                false,
            ),
            RawKind::Compressed { ptr, origin, step } => {
                let u = u as isize;
                (ptr, origin + step * (u - 1), ptr, origin + step * u, true)
            }
        }
    }
}

/// Per-pass knobs beyond the pipeline configuration.
#[derive(Clone, Copy, Default)]
pub struct PassOptions<'a> {
    /// Restrict update level `u` to `windows[u - 1]`.
    pub windows: Option<&'a [Region]>,
    pub monitor: Option<&'a SafetyMonitor>,
}

/// Outcome of one team sweep.
#[derive(Clone, Debug, Default)]
pub struct PassStats {
    pub spins: Vec<u64>,
    pub seconds: f64,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    plan: &'a BlockPlan,
    dist: &'a EffectiveDistances,
    counters: &'a SyncCounters,
    abort: &'a AtomicBool,
    frames: RawFrames,
    opts: PassOptions<'a>,
    barrier: Option<&'a SpinBarrier>,
}

impl Ctx<'_> {
    fn waiter(&self) -> Waiter<'_> {
        Waiter {
            abort: self.abort,
            budget: self.cfg.watchdog,
            counters: self.counters,
        }
    }

    fn update_levels(&self, i: usize, bc: usize) {
        let block = self.plan.blocks()[bc];
        let dims = self.plan.dims();
        let t = self.cfg.updates_per_thread;
        for k in 0..t {
            let level = i * t + k + 1;
            let mut region = block.shifted(dims, level - 1, self.plan.direction());
            if let Some(w) = self.opts.windows {
                region = region.intersect(&w[level - 1]);
            }
            let (src, so, dst, d_o, remat) = self.frames.level(level);
            // SAFETY: frames were checked to fit; the counter protocol keeps
            // this thread's cells disjoint from concurrent readers/writers.
            unsafe {
                update_region_raw(
                    src,
                    so,
                    dst,
                    d_o,
                    &self.frames.geom,
                    &region,
                    self.plan.direction(),
                    remat,
                )
            };
        }
        if let Some(m) = self.opts.monitor {
            m.block_updates.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn relaxed_worker(&self, i: usize) -> Result<u64> {
        let waiter = self.waiter();
        let total = self.plan.len();
        let mut jitter = self.jitter_rng(i);
        let mut mine = 0i64;
        let mut spins = 0;
        for bc in 0..total {
            if !self.dist.is_front(i) {
                let need = self.dist.lower(i);
                spins += waiter.wait(|| self.counters.get(i - 1), |p| p - mine >= need)?;
                if let Some(m) = self.opts.monitor {
                    m.record_lower(self.counters.get(i - 1) - mine, need);
                }
            }
            self.jitter(&mut jitter);
            self.update_levels(i, bc);
            if bc + 1 == total {
                // wind-down: release successors waiting on the distance limit
                mine += self.dist.upper(i) + 1;
                self.counters.publish(i, mine);
            } else {
                mine += 1;
                self.counters.publish(i, mine);
                if !self.dist.is_rear(i) {
                    let limit = self.dist.upper(i);
                    if let Some(m) = self.opts.monitor {
                        m.record_upper(mine - self.counters.get(i + 1), limit);
                    }
                    spins += waiter.wait(|| self.counters.get(i + 1), |s| mine - s <= limit)?;
                }
            }
        }
        Ok(spins)
    }

    fn barrier_worker(&self, i: usize, offsets: &[i64]) -> Result<u64> {
        let waiter = self.waiter();
        let barrier = self.barrier.expect("barrier mode without barrier");
        let total = self.plan.len() as i64;
        let steps = total + offsets[offsets.len() - 1];
        let mut jitter = self.jitter_rng(i);
        let mut mine = 0i64;
        let mut spins = 0;
        for step in 0..steps {
            let bc = step - offsets[i];
            if (0..total).contains(&bc) {
                if let (Some(m), false) = (self.opts.monitor, self.dist.is_front(i)) {
                    m.record_lower(self.counters.get(i - 1) - mine, self.dist.lower(i));
                }
                self.jitter(&mut jitter);
                self.update_levels(i, bc as usize);
                mine = if bc + 1 == total {
                    bc + self.dist.upper(i) + 1
                } else {
                    bc + 1
                };
                self.counters.publish(i, mine);
            }
            spins += barrier.wait(&waiter)?;
        }
        Ok(spins)
    }

    fn jitter_rng(&self, i: usize) -> Option<ChaCha8Rng> {
        self.cfg.jitter.map(|j| {
            ChaCha8Rng::seed_from_u64(j.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        })
    }

    fn jitter(&self, rng: &mut Option<ChaCha8Rng>) {
        if let (Some(rng), Some(j)) = (rng.as_mut(), self.cfg.jitter) {
            let n = rng.random_range(0..=j.max_spins);
            for s in 0..n {
                if s % 256 == 255 {
                    std::thread::yield_now();
                } else {
                    std::hint::spin_loop();
                }
            }
        }
    }
}

/// One pass of the pipelined scheme: every interior cell receives
/// `h = n * t * T` updates.
pub fn team_sweep(
    gs: &mut GridSet,
    cfg: &PipelineConfig,
    direction: Direction,
) -> Result<PassStats> {
    team_sweep_with(gs, cfg, direction, PassOptions::default())
}

/// [`team_sweep`] with update windows and/or instrumentation.
pub fn team_sweep_with(
    gs: &mut GridSet,
    cfg: &PipelineConfig,
    direction: Direction,
    opts: PassOptions<'_>,
) -> Result<PassStats> {
    cfg.validate()?;
    if gs.mode() != cfg.grid_mode {
        return Err(invalid(format!(
            "grid set is {} but config asks for {}",
            gs.mode(),
            cfg.grid_mode
        )));
    }
    let h = cfg.updates_per_pass();
    let dims = gs.dims();
    if let Some(w) = opts.windows {
        if w.len() != h {
            return Err(invalid(format!(
                "expected {h} update windows, got {}",
                w.len()
            )));
        }
    }
    if let GridSet::Compressed(g) = gs {
        let room = match direction {
            Direction::Forward => g.pad() - g.alignment(),
            Direction::Backward => g.alignment(),
        };
        if room < h {
            return Err(invalid(format!(
                "compressed grid has room for {room} shifts in this direction, pass needs {h}"
            )));
        }
    }
    // blocks wider than a (sub)domain just cover that axis
    let plan = BlockPlan::new(dims, cfg.block.clamped_to(dims), direction)?;
    let dist = EffectiveDistances::new(cfg);
    let counters = SyncCounters::new(cfg.threads());
    let abort = AtomicBool::new(false);
    let barrier = SpinBarrier::new(cfg.threads());
    let frames = RawFrames::new(gs, direction);
    let ctx = Ctx {
        cfg,
        plan: &plan,
        dist: &dist,
        counters: &counters,
        abort: &abort,
        frames,
        opts,
        barrier: (cfg.sync == SyncMode::Barrier).then_some(&barrier),
    };
    let offsets: Vec<i64> = (0..cfg.threads())
        .scan(0i64, |acc, i| {
            if i > 0 {
                *acc += dist.lower(i);
            }
            Some(*acc)
        })
        .collect();

    let start = Instant::now();
    let results: Vec<Result<u64>> = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(cfg.threads());
        let mut spawn_err = None;
        for i in 0..cfg.threads() {
            let ctx = &ctx;
            let offsets = &offsets;
            let spawned = std::thread::Builder::new()
                .name(format!("pipe-{i}"))
                .spawn_scoped(s, move || match ctx.cfg.sync {
                    SyncMode::Relaxed => ctx.relaxed_worker(i),
                    SyncMode::Barrier => ctx.barrier_worker(i, offsets),
                });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => {
                    abort.store(true, Ordering::Relaxed);
                    spawn_err = Some(e);
                    break;
                }
            }
        }
        let mut out: Vec<Result<u64>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect();
        if let Some(e) = spawn_err {
            out.push(Err(Error::Spawn(e)));
        }
        out
    });
    let seconds = start.elapsed().as_secs_f64();

    let mut spins = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => spins.push(s),
            Err(Error::Aborted) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if spins.len() != cfg.threads() {
        return Err(Error::Aborted);
    }

    match gs {
        GridSet::TwoGrid { current, .. } => *current = (*current + h) % 2,
        GridSet::Compressed(g) => g.shift_alignment(direction.sign() * h as isize)?,
    }
    Ok(PassStats { spins, seconds })
}

/// Result of [`run_pipelined`]; one CSV row per run.
#[derive(Clone, Debug)]
pub struct RunStats {
    pub config: PipelineConfig,
    pub dims: [usize; 3],
    pub passes: usize,
    pub wall_seconds: f64,
    pub mlups: f64,
    pub spins_per_thread: Vec<u64>,
}

impl RunStats {
    pub fn spin_iterations_total(&self) -> u64 {
        self.spins_per_thread.iter().sum()
    }

    pub fn csv_header() -> &'static str {
        "nx,ny,nz,teams,team_size,updates_per_thread,min_distance,max_distance,team_delay,bx,by,bz,sync_mode,grid_mode,passes,wall_seconds,mlups,spin_iterations_total"
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.3},{}",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            c.teams,
            c.team_size,
            c.updates_per_thread,
            c.min_distance,
            c.max_distance,
            c.team_delay,
            c.block.bx,
            c.block.by,
            c.block.bz,
            c.sync,
            c.grid_mode,
            self.passes,
            self.wall_seconds,
            self.mlups,
            self.spin_iterations_total()
        )
    }
}

/// Run `passes` team sweeps, alternating forward and backward.
pub fn run_pipelined(gs: &mut GridSet, cfg: &PipelineConfig, passes: usize) -> Result<RunStats> {
    run_pipelined_with(gs, cfg, passes, None)
}

pub fn run_pipelined_with(
    gs: &mut GridSet,
    cfg: &PipelineConfig,
    passes: usize,
    monitor: Option<&SafetyMonitor>,
) -> Result<RunStats> {
    if cfg.grid_mode == GridMode::Compressed && passes % 2 != 0 {
        return Err(invalid("compressed mode needs an even number of passes"));
    }
    let mut spins = vec![0u64; cfg.threads()];
    let mut wall = 0.0;
    let mut direction = Direction::Forward;
    for _ in 0..passes {
        let opts = PassOptions {
            windows: None,
            monitor,
        };
        let stats = team_sweep_with(gs, cfg, direction, opts)?;
        wall += stats.seconds;
        spins
            .iter_mut()
            .zip(&stats.spins)
            .for_each(|(a, b)| *a += b);
        direction = direction.reversed();
    }
    let lups =
        gs.dims().iter().product::<usize>() as f64 * cfg.updates_per_pass() as f64 * passes as f64;
    Ok(RunStats {
        config: cfg.clone(),
        dims: gs.dims(),
        passes,
        wall_seconds: wall,
        mlups: if wall > 0.0 { lups / wall / 1e6 } else { 0.0 },
        spins_per_thread: spins,
    })
}

/// Largest useful thread distance: how many blocks per thread fit in a
/// shared cache of `cache_bytes`.
pub fn estimate_max_distance(cache_bytes: usize, threads: usize, spec: BlockSpec) -> Result<usize> {
    let per_block = spec.volume() * std::mem::size_of::<f64>();
    if per_block == 0 || threads == 0 {
        return Err(invalid("block volume and thread count must be positive"));
    }
    Ok(cache_bytes / (threads * per_block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FillRule;
    use crate::kernel::reference_sweeps;
    use std::time::Duration;

    fn cfg(n: usize, t: usize, tt: usize, mode: GridMode, sync: SyncMode) -> PipelineConfig {
        PipelineConfig {
            teams: n,
            team_size: t,
            updates_per_thread: tt,
            block: BlockSpec::new(12, 4, 4),
            sync,
            grid_mode: mode,
            watchdog: Duration::from_secs(20),
            ..Default::default()
        }
    }

    fn check(c: &PipelineConfig, dims: [usize; 3], passes: usize) {
        let init = Grid3::new(dims, 0, FillRule::Random { seed: 5 }).unwrap();
        let mut gs = GridSet::new(&init, c.grid_mode, c.updates_per_pass()).unwrap();
        run_pipelined(&mut gs, c, passes).unwrap();
        let want = reference_sweeps(&init, c.updates_per_pass() * passes).unwrap();
        assert_eq!(gs.current().first_difference(&want), None, "{c:?}");
    }

    #[test]
    fn degenerate_pipeline_is_one_sweep() {
        for mode in [GridMode::TwoGrid, GridMode::Compressed] {
            let c = cfg(1, 1, 1, mode, SyncMode::Relaxed);
            check(&c, [12, 9, 10], 2);
        }
        check(
            &cfg(1, 1, 1, GridMode::TwoGrid, SyncMode::Relaxed),
            [12, 9, 10],
            1,
        );
    }

    #[test]
    fn three_threads_small_grid() {
        for mode in [GridMode::TwoGrid, GridMode::Compressed] {
            for sync in [SyncMode::Relaxed, SyncMode::Barrier] {
                check(&cfg(1, 3, 1, mode, sync), [13, 11, 9], 2);
            }
        }
    }

    #[test]
    fn two_teams_with_delay_and_tiny_blocks() {
        let mut c = cfg(2, 2, 2, GridMode::Compressed, SyncMode::Relaxed);
        c.block = BlockSpec::new(3, 2, 2);
        c.team_delay = 2;
        c.min_distance = 2;
        c.max_distance = 4;
        check(&c, [9, 7, 6], 2);
        c.sync = SyncMode::Barrier;
        check(&c, [9, 7, 6], 2);
    }

    #[test]
    fn shift_larger_than_block() {
        // h = 8 with one-cell blocks on some axes
        let mut c = cfg(1, 4, 2, GridMode::Compressed, SyncMode::Relaxed);
        c.block = BlockSpec::new(2, 1, 3);
        check(&c, [5, 4, 6], 2);
    }

    #[test]
    fn compressed_needs_even_passes_and_room() {
        let c = cfg(1, 2, 1, GridMode::Compressed, SyncMode::Relaxed);
        let init = Grid3::new([12, 8, 8], 0, FillRule::Impulse).unwrap();
        let mut gs = GridSet::new(&init, GridMode::Compressed, 2).unwrap();
        assert!(run_pipelined(&mut gs, &c, 3).is_err());
        assert!(team_sweep(&mut gs, &c, Direction::Backward).is_err());
        let mut small = GridSet::new(&init, GridMode::Compressed, 1).unwrap();
        assert!(team_sweep(&mut small, &c, Direction::Forward).is_err());
    }

    #[test]
    fn instrumented_run_has_no_violations() {
        let mut c = cfg(2, 2, 1, GridMode::TwoGrid, SyncMode::Relaxed);
        c.block = BlockSpec::new(4, 4, 4);
        c.jitter = Some(super::super::Jitter {
            max_spins: 500,
            seed: 1,
        });
        let init = Grid3::new([8, 8, 8], 0, FillRule::Random { seed: 2 }).unwrap();
        let mut gs = GridSet::new(&init, c.grid_mode, 4).unwrap();
        let m = SafetyMonitor::default();
        run_pipelined_with(&mut gs, &c, 2, Some(&m)).unwrap();
        let s = m.summary();
        assert_eq!(s.block_updates, 2 * 4 * 8);
        assert_eq!(s.lower_samples, 2 * 3 * 8);
        assert_eq!(s.lower_violations, 0);
        assert_eq!(s.upper_violations, 0);
    }

    #[test]
    fn max_distance_estimates() {
        let spec = BlockSpec::new(120, 20, 20);
        assert_eq!(estimate_max_distance(8_000_000, 4, spec).unwrap(), 5);
        assert_eq!(estimate_max_distance(24_000_000, 8, spec).unwrap(), 7);
        assert_eq!(estimate_max_distance(1000, 1, spec).unwrap(), 0);
        assert!(estimate_max_distance(1000, 0, spec).is_err());
    }
}
