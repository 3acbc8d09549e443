//! Pipelined temporal blocking: teams of threads that each apply a few
//! updates to a block and pass it on to the next thread.

mod config;
mod exec;
mod sync;

pub use config::{Jitter, PipelineConfig, SyncMode};
pub use exec::{
    estimate_max_distance, run_pipelined, run_pipelined_with, team_sweep, team_sweep_with, GridSet,
    PassOptions, PassStats, RunStats,
};
pub use sync::{may_advance, EffectiveDistances, SafetyMonitor, SafetySummary, SyncCounters};
