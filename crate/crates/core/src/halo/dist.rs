use std::time::{Duration, Instant};

use super::exchange::{exchange_multilayer_halos, ExchangeTimings, HaloPlan};
use super::topology::{decompose_domain, RankTopology, Subdomain};
use crate::config::fingerprint;
use crate::error::{invalid, Error, Result};
use crate::grid::{Direction, FillRule, Grid3, Region};
use crate::kernel::GridMode;
use crate::pipeline::{team_sweep_with, GridSet, PassOptions, PipelineConfig};
use crate::transport::{create_topology, Backend, Endpoint};

/// Whether the problem size is fixed globally or per rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScalingMode {
    Strong,
    Weak,
}

impl std::fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalingMode::Strong => "strong",
            ScalingMode::Weak => "weak",
        })
    }
}

impl std::str::FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(ScalingMode::Strong),
            "weak" => Ok(ScalingMode::Weak),
            other => Err(invalid(format!("unknown scaling mode '{other}'"))),
        }
    }
}

/// Configuration shared by all ranks of a distributed run.
#[derive(Clone, Debug, PartialEq)]
pub struct DistConfig {
    /// Global size in strong mode, per-rank size in weak mode.
    pub size: [usize; 3],
    pub scaling: ScalingMode,
    pub procs: [usize; 3],
    pub pipeline: PipelineConfig,
    /// Compute/exchange cycles of `h` updates each.
    pub cycles: usize,
    pub fill: FillRule,
}

impl DistConfig {
    pub fn global_dims(&self) -> [usize; 3] {
        match self.scaling {
            ScalingMode::Strong => self.size,
            ScalingMode::Weak => std::array::from_fn(|a| self.size[a] * self.procs[a]),
        }
    }

    pub fn topology(&self) -> Result<RankTopology> {
        RankTopology::new(self.procs)
    }

    pub fn fingerprint(&self) -> String {
        let mut kv = self.pipeline.key_values();
        kv.extend([
            (
                "size",
                format!("{},{},{}", self.size[0], self.size[1], self.size[2]),
            ),
            ("scaling", self.scaling.to_string()),
            (
                "procs",
                format!("{},{},{}", self.procs[0], self.procs[1], self.procs[2]),
            ),
            ("cycles", self.cycles.to_string()),
            ("fill", self.fill.to_string()),
        ]);
        fingerprint(kv)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.cycles == 0 {
            return Err(invalid("need at least one cycle"));
        }
        if self.pipeline.grid_mode == GridMode::Compressed && self.cycles % 2 != 0 {
            return Err(invalid("compressed mode needs an even number of cycles"));
        }
        Ok(())
    }
}

/// Per-rank measurements of a distributed run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankStats {
    pub rank: usize,
    pub owned_cells: usize,
    /// Lattice-site updates of owned cells.
    pub updates: u64,
    pub compute: Duration,
    pub exchange: ExchangeTimings,
    pub wall: Duration,
    pub messages_sent: u64,
    pub bytes_sent: u64,
}

impl RankStats {
    pub fn csv_header() -> &'static str {
        "rank,owned_cells,updates,compute_s,pack_s,transfer_s,unpack_s,wall_s,messages,bytes"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.rank,
            self.owned_cells,
            self.updates,
            self.compute.as_secs_f64(),
            self.exchange.pack.as_secs_f64(),
            self.exchange.transfer.as_secs_f64(),
            self.exchange.unpack.as_secs_f64(),
            self.wall.as_secs_f64(),
            self.messages_sent,
            self.bytes_sent
        )
    }
}

/// Everything a rank keeps between cycles.
pub struct RankState {
    pub sub: Subdomain,
    pub plan: HaloPlan,
    windows: Vec<Region>,
    pub grids: GridSet,
    direction: Direction,
    pub compute: Duration,
    pub exchange: ExchangeTimings,
}

impl RankState {
    /// Allocate the local grid and fill it, halos included, from the global
    /// fill rule.
    pub fn new(sub: Subdomain, pipeline: &PipelineConfig, fill: FillRule) -> Result<Self> {
        let h = pipeline.updates_per_pass();
        if h != sub.h {
            return Err(invalid(format!(
                "subdomain halo {} differs from h = {h}",
                sub.h
            )));
        }
        let init = Grid3::new_window(sub.local_dims(), 0, fill, sub.global, sub.local_offset())?;
        let grids = GridSet::new(&init, pipeline.grid_mode, h)?;
        Ok(Self {
            plan: HaloPlan::new(&sub),
            windows: sub.update_windows(),
            sub,
            grids,
            direction: Direction::Forward,
            compute: Duration::ZERO,
            exchange: ExchangeTimings::default(),
        })
    }

    pub fn exchange(&mut self, ep: &mut Endpoint, cycle: u64) -> Result<()> {
        exchange_multilayer_halos(
            self.grids.current_mut(),
            &self.plan,
            ep,
            cycle,
            &mut self.exchange,
        )
    }

    /// `h` updates on shrinking windows, then a halo exchange. Sweep
    /// direction alternates between cycles.
    pub fn cycle(
        &mut self,
        pipeline: &PipelineConfig,
        ep: &mut Endpoint,
        cycle: u64,
    ) -> Result<()> {
        let t0 = Instant::now();
        let opts = PassOptions {
            windows: Some(&self.windows),
            monitor: None,
        };
        team_sweep_with(&mut self.grids, pipeline, self.direction, opts)?;
        self.compute += t0.elapsed();
        self.direction = self.direction.reversed();
        self.exchange(ep, cycle)
    }

    pub fn owned_values(&self) -> Vec<f64> {
        self.grids.current().box_values(&self.sub.owned_region())
    }
}

/// Abort unless every rank was started with the same configuration and
/// the same choice of gathering the result.
pub fn check_agreement(ep: &mut Endpoint, cfg: &DistConfig, gather: bool) -> Result<()> {
    let mine = fingerprint([
        ("config", cfg.fingerprint()),
        ("gather", gather.to_string()),
    ])
    .into_bytes();
    let n = mine.len();
    if ep.rank() == 0 {
        let mut bad = Vec::new();
        for p in 1..ep.size() {
            if ep.sendrecv(p, &mine, n)? != mine {
                bad.push(p);
            }
        }
        let verdict = [u8::from(bad.is_empty())];
        for p in 1..ep.size() {
            ep.sendrecv(p, &verdict, 0)?;
        }
        if !bad.is_empty() {
            return Err(Error::Config(format!(
                "ranks {bad:?} disagree with rank 0 on the configuration"
            )));
        }
    } else {
        let theirs = ep.sendrecv(0, &mine, n)?;
        let verdict = ep.sendrecv(0, &[], 1)?;
        if theirs != mine || verdict != [1] {
            return Err(Error::Config("ranks disagree on the configuration".into()));
        }
    }
    Ok(())
}

/// Collect every rank's owned values on rank 0.
pub fn gather_global(
    ep: &mut Endpoint,
    state: &RankState,
    cfg: &DistConfig,
) -> Result<Option<Grid3>> {
    let mine = state.owned_values();
    if ep.rank() != 0 {
        let bytes: Vec<u8> = mine.iter().flat_map(|v| v.to_le_bytes()).collect();
        ep.sendrecv(0, &bytes, 0)?;
        return Ok(None);
    }
    let subs = decompose_domain(cfg.global_dims(), cfg.topology()?, state.sub.h)?;
    let mut global = Grid3::new(cfg.global_dims(), 0, cfg.fill)?;
    for sub in &subs {
        let values = if sub.rank == 0 {
            mine.clone()
        } else {
            let len = sub.owned.iter().product::<usize>() * 8;
            ep.sendrecv(sub.rank, &[], len)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let g = sub.owned_global();
        global.set_box_signed(g.lo.map(|v| v as isize), g.hi.map(|v| v as isize), &values)?;
    }
    Ok(Some(global))
}

/// Run one rank of a distributed computation: agree on the config, do
/// `cycles` compute/exchange cycles and optionally gather the result on
/// rank 0.
pub fn run_rank(
    ep: &mut Endpoint,
    cfg: &DistConfig,
    gather: bool,
) -> Result<(RankStats, Option<Grid3>)> {
    cfg.validate()?;
    let topo = cfg.topology()?;
    if topo.size() != ep.size() {
        return Err(Error::Config(format!(
            "process grid {:?} needs {} ranks, transport has {}",
            cfg.procs,
            topo.size(),
            ep.size()
        )));
    }
    check_agreement(ep, cfg, gather)?;
    let h = cfg.pipeline.updates_per_pass();
    let sub = decompose_domain(cfg.global_dims(), topo, h)?.swap_remove(ep.rank());
    let mut state = RankState::new(sub, &cfg.pipeline, cfg.fill)?;
    ep.barrier()?;
    ep.reset_stats();
    let start = Instant::now();
    for c in 1..=cfg.cycles as u64 {
        state.cycle(&cfg.pipeline, ep, c)?;
    }
    let wall = start.elapsed();
    let t = ep.stats();
    let owned_cells = state.sub.owned.iter().product::<usize>();
    let stats = RankStats {
        rank: ep.rank(),
        owned_cells,
        updates: (owned_cells * h * cfg.cycles) as u64,
        compute: state.compute,
        exchange: state.exchange,
        wall,
        messages_sent: t.messages_sent,
        bytes_sent: t.bytes_sent,
    };
    let global = if gather {
        gather_global(ep, &state, cfg)?
    } else {
        None
    };
    Ok((stats, global))
}

/// Outcome of a distributed run driven from one process.
#[derive(Debug)]
pub struct DistOutcome {
    pub ranks: Vec<RankStats>,
    /// Assembled global grid, when gathering was requested.
    pub global: Option<Grid3>,
}

impl DistOutcome {
    /// Aggregate MLUP/s: all owned updates over the slowest rank's time.
    pub fn mlups(&self) -> f64 {
        let updates: u64 = self.ranks.iter().map(|r| r.updates).sum();
        let wall = self
            .ranks
            .iter()
            .map(|r| r.wall.as_secs_f64())
            .fold(0.0, f64::max);
        if wall > 0.0 {
            updates as f64 / wall / 1e6
        } else {
            0.0
        }
    }
}

/// Run all ranks as threads of this process over `backend`.
pub fn run_distributed(cfg: &DistConfig, backend: Backend, gather: bool) -> Result<DistOutcome> {
    cfg.validate()?;
    let endpoints = create_topology(cfg.topology()?.size(), backend)?;
    let results: Vec<Result<(RankStats, Option<Grid3>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|mut ep| {
                std::thread::Builder::new()
                    .name(format!("rank-{}", ep.rank()))
                    .spawn_scoped(s, move || run_rank(&mut ep, cfg, gather))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h {
                Ok(h) => h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)),
                Err(e) => Err(Error::Spawn(e)),
            })
            .collect()
    });
    let mut ranks = Vec::with_capacity(results.len());
    let mut global = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok((stats, g)) => {
                ranks.push(stats);
                global = global.or(g);
            }
            // a rank that failed first usually makes its peers time out; keep
            // the root cause
            Err(e) => {
                if first_err.is_none() || matches!(first_err, Some(Error::Transport(_))) {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(DistOutcome { ranks, global }),
    }
}
