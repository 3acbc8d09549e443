use std::time::Duration;

use crate::error::{invalid, Error, Result};
use crate::grid::BlockSpec;
use crate::kernel::GridMode;

/// How neighboring pipeline threads are kept apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyncMode {
    /// Per-thread progress counters with lower/upper distance limits.
    Relaxed,
    /// Global barrier after every block update.
    Barrier,
}

impl std::fmt::Display for SyncMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyncMode::Relaxed => "relaxed",
            SyncMode::Barrier => "barrier",
        })
    }
}

impl std::str::FromStr for SyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxed" => Ok(SyncMode::Relaxed),
            "barrier" => Ok(SyncMode::Barrier),
            other => Err(invalid(format!("unknown sync mode '{other}'"))),
        }
    }
}

/// Random busy-wait injected before each block update. Test hook for
/// shaking out synchronization bugs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Jitter {
    pub max_spins: u32,
    pub seed: u64,
}

/// Tunables of the pipelined scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Number of teams (`n`).
    pub teams: usize,
    /// Threads per team (`t`).
    pub team_size: usize,
    /// Updates each thread applies to a block before handing it on (`T`).
    pub updates_per_thread: usize,
    /// Minimum distance to the predecessor thread, in blocks.
    pub min_distance: usize,
    /// Maximum distance to the successor thread, in blocks.
    pub max_distance: usize,
    /// Extra distance enforced between consecutive teams.
    pub team_delay: usize,
    pub block: BlockSpec,
    pub sync: SyncMode,
    pub grid_mode: GridMode,
    /// Abort if an awaited counter does not move for this long.
    pub watchdog: Duration,
    pub jitter: Option<Jitter>,
    /// Record synchronization-safety samples during the run.
    pub instrument: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            teams: 1,
            team_size: 1,
            updates_per_thread: 1,
            min_distance: 1,
            max_distance: 3,
            team_delay: 0,
            block: BlockSpec::new(120, 20, 20),
            sync: SyncMode::Relaxed,
            grid_mode: GridMode::Compressed,
            watchdog: Duration::from_secs(30),
            jitter: None,
            instrument: false,
        }
    }
}

impl PipelineConfig {
    /// Worker threads in the whole pipeline (`n * t`).
    pub fn threads(&self) -> usize {
        self.teams * self.team_size
    }

    /// Updates applied to every cell in one pass (`h = n * t * T`).
    pub fn updates_per_pass(&self) -> usize {
        self.threads() * self.updates_per_thread
    }

    /// Settings that affect results or scheduling, as `key = value` pairs.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("teams", self.teams.to_string()),
            ("team_size", self.team_size.to_string()),
            ("updates_per_thread", self.updates_per_thread.to_string()),
            ("min_distance", self.min_distance.to_string()),
            ("max_distance", self.max_distance.to_string()),
            ("team_delay", self.team_delay.to_string()),
            (
                "block",
                format!("{},{},{}", self.block.bx, self.block.by, self.block.bz),
            ),
            ("sync", self.sync.to_string()),
            ("grid_mode", self.grid_mode.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.teams == 0 || self.team_size == 0 || self.updates_per_thread == 0 {
            return Err(invalid(
                "teams, team size and updates per thread must be >= 1",
            ));
        }
        if self.min_distance == 0 {
            return Err(invalid("minimum thread distance must be >= 1"));
        }
        if self.max_distance < self.min_distance {
            return Err(invalid(format!(
                "maximum distance {} is below minimum distance {}",
                self.max_distance, self.min_distance
            )));
        }
        Ok(())
    }
}
