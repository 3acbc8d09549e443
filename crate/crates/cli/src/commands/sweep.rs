use std::collections::hash_map::Entry;
use std::collections::HashMap;

use clap::Args;
use stencilpipe_core::grid::Grid3;
use stencilpipe_core::kernel::{reference_sweeps, GridMode};
use stencilpipe_core::pipeline::RunStats;
use stencilpipe_core::Error as CoreError;

use super::emit;
use super::solve::{header, solve};
use crate::error::{CliError, Result};
use crate::ranges::expand;
use crate::run_config::{RunConfig, RunFlags};
use crate::table::Table;

/// Keys whose values may be ranges or lists.
const SWEEPABLE: [&str; 10] = [
    "teams",
    "team_size",
    "updates_per_thread",
    "min_distance",
    "max_distance",
    "team_delay",
    "bx",
    "by",
    "bz",
    "passes",
];

/// Columns of a run that was never started: configuration only.
const CONFIG_COLUMNS: usize = 15;

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Numeric pipeline flags accept `lo:hi[:step]` ranges and comma lists
    #[command(flatten)]
    pub run: RunFlags,
    /// Compare every result with plain reference sweeps
    #[arg(long)]
    pub verify: bool,
    /// Print JSON instead of CSV
    #[arg(long)]
    pub json: bool,
}

/// Every combination of the swept keys, in row-major order with the first
/// key varying slowest.
fn combinations(axes: &[(&'static str, Vec<String>)]) -> Vec<Vec<(&'static str, String)>> {
    let mut out = vec![Vec::new()];
    for (key, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push((*key, v.clone()));
                    row
                })
            })
            .collect();
    }
    out
}

/// Why `cfg` cannot run, if it cannot.
fn rejection(cfg: &RunConfig) -> Option<String> {
    if let Err(e) = cfg.pipeline.validate() {
        return Some(e.to_string());
    }
    if cfg.pipeline.grid_mode == GridMode::Compressed && cfg.passes % 2 != 0 {
        return Some("compressed mode needs an even number of passes".into());
    }
    None
}

fn invalid_row(cfg: &RunConfig) -> String {
    let stats = RunStats {
        config: cfg.pipeline.clone(),
        dims: cfg.dims,
        passes: cfg.passes,
        wall_seconds: 0.0,
        mlups: 0.0,
        spins_per_thread: Vec::new(),
    };
    let row = stats.csv_row();
    let config: Vec<&str> = row.split(',').take(CONFIG_COLUMNS).collect();
    format!("{},,,,,{},invalid", config.join(","), cfg.hash())
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let base = args.run.merged()?;
    let mut axes = Vec::new();
    for key in SWEEPABLE {
        if let Some(v) = base.get(key) {
            axes.push((key, expand(v)?));
        }
    }
    let mut table = Table::new(&header());
    let mut references: HashMap<usize, Grid3> = HashMap::new();
    let mut mismatches = 0;
    for combo in combinations(&axes) {
        let mut kv = base.clone();
        for (k, v) in &combo {
            kv.set(*k, v.clone());
        }
        let mut cfg = RunConfig::from_key_values(&kv)?;
        // one sweep never overwrites another's snapshot
        cfg.output = None;
        if let Some(why) = rejection(&cfg) {
            eprintln!("skipping {combo:?}: {why}");
            table.push_csv(&invalid_row(&cfg));
            continue;
        }
        let (grid, stats) = match solve(&cfg) {
            Ok(r) => r,
            Err(CliError::Core(CoreError::InvalidArgument(why))) => {
                eprintln!("skipping {combo:?}: {why}");
                table.push_csv(&invalid_row(&cfg));
                continue;
            }
            Err(e) => return Err(e),
        };
        let status = if args.verify {
            let sweeps = cfg.pipeline.updates_per_pass() * cfg.passes;
            let want = match references.entry(sweeps) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(reference_sweeps(
                    &Grid3::new(cfg.dims, 0, cfg.fill)?,
                    sweeps,
                )?),
            };
            if grid.first_difference(want).is_none() {
                "bitwise match"
            } else {
                mismatches += 1;
                "mismatch"
            }
        } else {
            "ok"
        };
        table.push_csv(&format!(
            "{},{},{},{status}",
            stats.csv_row(),
            grid.checksum(),
            cfg.hash()
        ));
    }
    emit(&table, args.json)?;
    if mismatches > 0 {
        return Err(CliError::Verify(format!(
            "{mismatches} configurations differ from the reference"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_order() {
        let axes = vec![
            ("a", vec!["1".into(), "2".into()]),
            ("b", vec!["x".into(), "y".into(), "z".into()]),
        ];
        let c = combinations(&axes);
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![("a", "1".to_string()), ("b", "x".to_string())]);
        assert_eq!(c[5], vec![("a", "2".to_string()), ("b", "z".to_string())]);
        assert_eq!(combinations(&[]), vec![Vec::new()]);
    }
}
