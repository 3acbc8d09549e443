use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use stencilpipe_core::grid::Grid3;
use stencilpipe_core::halo::{run_distributed, run_rank, DistConfig, RankStats};
use stencilpipe_core::kernel::reference_sweeps;
use stencilpipe_core::transport::{bind_listener, connect_mesh, read_rankfile, Backend};
use stencilpipe_core::Error as CoreError;

use super::emit;
use crate::error::{CliError, Result};
use crate::run_config::{RunConfig, RunFlags};
use crate::table::Table;

#[derive(Args, Debug)]
pub struct DistArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// This process's rank; omit to run every rank as a thread of this process
    #[arg(long, requires = "rankfile")]
    pub rank: Option<usize>,
    /// Expected number of ranks; must match the rankfile and --procs
    #[arg(long)]
    pub ranks: Option<usize>,
    /// Lines of `rank host port`, one per rank
    #[arg(long, value_name = "FILE")]
    pub rankfile: Option<PathBuf>,
    /// Transport for single-process runs: inprocess | tcp
    #[arg(long, default_value = "inprocess")]
    pub backend: String,
    /// Seconds to wait for peers before giving up
    #[arg(long, default_value_t = 60)]
    pub timeout_s: u64,
    /// Gather the result on rank 0 and compare with reference sweeps
    #[arg(long)]
    pub verify: bool,
    /// Print JSON instead of CSV
    #[arg(long)]
    pub json: bool,
}

/// I/O failures on sockets count as transport failures.
fn transport_err(e: CoreError) -> CliError {
    match e {
        CoreError::Io(io) => CliError::Transport(io.to_string()),
        other => CliError::Core(other),
    }
}

fn verify(dc: &DistConfig, global: &Grid3) -> Result<()> {
    let sweeps = dc.pipeline.updates_per_pass() * dc.cycles;
    let initial = Grid3::new(dc.global_dims(), 0, dc.fill)?;
    match global.first_difference(&reference_sweeps(&initial, sweeps)?) {
        None => {
            eprintln!("verification: bitwise match with {sweeps} reference sweeps");
            Ok(())
        }
        Some(at) => Err(CliError::Verify(format!("first difference at {at:?}"))),
    }
}

pub fn run(args: &DistArgs) -> Result<()> {
    let cfg = RunConfig::from_flags(&args.run)?;
    let dc = cfg.dist_config();
    let mut table = Table::new(&format!("{},config_hash", RankStats::csv_header()));
    let global = match args.rank {
        Some(rank) => {
            let path = args.rankfile.as_ref().expect("clap enforces --rankfile");
            let addrs = read_rankfile(path)?;
            if let Some(n) = args.ranks {
                if n != addrs.len() {
                    return Err(CliError::Config(format!(
                        "--ranks {n} but the rankfile lists {} ranks",
                        addrs.len()
                    )));
                }
            }
            let addr = *addrs
                .get(rank)
                .ok_or_else(|| CliError::Config(format!("rank {rank} not in the rankfile")))?;
            let timeout = Duration::from_secs(args.timeout_s);
            let listener = bind_listener(addr).map_err(transport_err)?;
            let mut ep = connect_mesh(rank, listener, &addrs, timeout).map_err(transport_err)?;
            ep.set_timeout(timeout);
            let (stats, global) = run_rank(&mut ep, &dc, args.verify).map_err(transport_err)?;
            table.push_csv(&format!("{},{}", stats.csv_row(), cfg.hash()));
            global
        }
        None => {
            let backend: Backend = args.backend.parse()?;
            let out = run_distributed(&dc, backend, args.verify).map_err(transport_err)?;
            for r in &out.ranks {
                table.push_csv(&format!("{},{}", r.csv_row(), cfg.hash()));
            }
            eprintln!(
                "aggregate: {:.3} MLUP/s over {} ranks",
                out.mlups(),
                out.ranks.len()
            );
            out.global
        }
    };
    emit(&table, args.json)?;
    if let Some(g) = global {
        verify(&dc, &g)?;
    }
    Ok(())
}
