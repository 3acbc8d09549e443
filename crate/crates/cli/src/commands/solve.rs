use clap::Args;
use stencilpipe_core::grid::Grid3;
use stencilpipe_core::kernel::reference_sweeps;
use stencilpipe_core::pipeline::{run_pipelined, GridSet, RunStats};

use super::emit;
use crate::error::{CliError, Result};
use crate::run_config::{RunConfig, RunFlags};
use crate::table::Table;

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Compare the result with plain reference sweeps
    #[arg(long)]
    pub verify: bool,
    /// Print JSON instead of CSV
    #[arg(long)]
    pub json: bool,
}

pub fn header() -> String {
    format!("{},checksum,config_hash,status", RunStats::csv_header())
}

/// Run the pipelined solver once; returns the final grid and stats.
pub fn solve(cfg: &RunConfig) -> Result<(Grid3, RunStats)> {
    let initial = Grid3::new(cfg.dims, 0, cfg.fill)?;
    let mut gs = GridSet::new(
        &initial,
        cfg.pipeline.grid_mode,
        cfg.pipeline.updates_per_pass(),
    )?;
    let stats = run_pipelined(&mut gs, &cfg.pipeline, cfg.passes)?;
    Ok((gs.into_current(), stats))
}

/// Whether `result` equals `sweeps` reference sweeps from the initial grid.
pub fn matches_reference(cfg: &RunConfig, result: &Grid3, sweeps: usize) -> Result<bool> {
    let initial = Grid3::new(cfg.dims, 0, cfg.fill)?;
    let want = reference_sweeps(&initial, sweeps)?;
    Ok(result.first_difference(&want).is_none())
}

pub fn run(args: &SolveArgs) -> Result<()> {
    let cfg = RunConfig::from_flags(&args.run)?;
    let (grid, stats) = solve(&cfg)?;
    if let Some(path) = &cfg.output {
        grid.save_snapshot(path)?;
        std::fs::write(RunConfig::sidecar_path(path), cfg.sidecar_text())?;
    }
    let status = if args.verify {
        let sweeps = cfg.pipeline.updates_per_pass() * cfg.passes;
        if matches_reference(&cfg, &grid, sweeps)? {
            eprintln!("verification: bitwise match with {sweeps} reference sweeps");
            "bitwise match"
        } else {
            "mismatch"
        }
    } else {
        "unverified"
    };
    let mut table = Table::new(&header());
    table.push_csv(&format!(
        "{},{},{},{status}",
        stats.csv_row(),
        grid.checksum(),
        cfg.hash()
    ));
    emit(&table, args.json)?;
    if status == "mismatch" {
        return Err(CliError::Verify(
            "result differs from the reference sweeps".into(),
        ));
    }
    Ok(())
}
