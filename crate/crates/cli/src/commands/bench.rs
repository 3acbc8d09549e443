use clap::Args;
use stencilpipe_bench::{
    stream_copy_bench, update_bench, BenchResult, FootprintTarget, DEFAULT_REPS,
};

use super::emit;
use crate::error::{CliError, Result};
use crate::ranges::expand_usize;
use crate::table::Table;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// copy | update | all
    #[arg(long, default_value = "all")]
    pub kernel: String,
    /// memory | cache: picks the default array length
    #[arg(long, default_value = "memory")]
    pub target: String,
    /// Array length in elements
    #[arg(long)]
    pub elements: Option<usize>,
    /// Thread counts
    #[arg(long, value_name = "RANGE", default_value = "1")]
    pub threads: String,
    /// Timed repetitions; the best one is reported
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    /// Print JSON instead of CSV
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let target: FootprintTarget = args.target.parse()?;
    let elements = args.elements.unwrap_or(target.default_elements());
    let (copy, update) = match args.kernel.as_str() {
        "copy" => (true, false),
        "update" => (false, true),
        "all" => (true, true),
        other => return Err(CliError::Config(format!("unknown kernel '{other}'"))),
    };
    let mut table = Table::new(BenchResult::csv_header());
    for threads in expand_usize(&args.threads)? {
        if copy {
            table.push_csv(&stream_copy_bench(elements, threads, args.reps)?.csv_row());
        }
        if update {
            table.push_csv(&update_bench(elements, threads, args.reps, target)?.csv_row());
        }
    }
    emit(&table, args.json)
}
