//! Run configuration: built from an optional `key = value` file, then
//! overridden by command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use stencilpipe_core::config::{fingerprint, KeyValues};
use stencilpipe_core::grid::{BlockSpec, FillRule};
use stencilpipe_core::halo::{DistConfig, ScalingMode};
use stencilpipe_core::pipeline::PipelineConfig;

use crate::error::{CliError, Result};

/// Keys that do not influence results and stay out of the config hash.
const UNHASHED: [&str; 2] = ["output", "watchdog_ms"];

/// Flags shared by `solve`, `sweep` and `dist`. Values stay strings so that
/// `sweep` can accept ranges where the others accept single values.
#[derive(Args, Clone, Debug, Default)]
pub struct RunFlags {
    /// `key = value` file; flags override its entries
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Interior extent: N or NX,NY,NZ
    #[arg(long)]
    pub grid: Option<String>,
    /// Number of teams
    #[arg(long = "n", value_name = "TEAMS")]
    pub teams: Option<String>,
    /// Threads per team
    #[arg(long = "t", value_name = "THREADS")]
    pub team_size: Option<String>,
    /// Updates per thread and block
    #[arg(long = "T", value_name = "UPDATES")]
    pub updates_per_thread: Option<String>,
    /// Minimum distance to the predecessor thread, in blocks
    #[arg(long = "dl", value_name = "BLOCKS")]
    pub min_distance: Option<String>,
    /// Maximum distance to the successor thread, in blocks
    #[arg(long = "du", value_name = "BLOCKS")]
    pub max_distance: Option<String>,
    /// Extra distance between teams, in blocks
    #[arg(long = "dt", value_name = "BLOCKS")]
    pub team_delay: Option<String>,
    /// Block extent BX,BY,BZ
    #[arg(long)]
    pub block: Option<String>,
    #[arg(long)]
    pub bx: Option<String>,
    #[arg(long)]
    pub by: Option<String>,
    #[arg(long)]
    pub bz: Option<String>,
    /// relaxed | barrier
    #[arg(long)]
    pub sync: Option<String>,
    /// two_grid | compressed
    #[arg(long)]
    pub mode: Option<String>,
    /// Team sweeps to run (even in compressed mode)
    #[arg(long)]
    pub passes: Option<String>,
    /// constant:V | impulse | random:SEED
    #[arg(long)]
    pub fill: Option<String>,
    /// Shorthand for --fill random:SEED
    #[arg(long)]
    pub seed: Option<String>,
    /// Snapshot file for the final grid
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Abort when a pipeline makes no progress for this long
    #[arg(long, value_name = "MS")]
    pub watchdog_ms: Option<String>,
    /// Rank grid PX,PY,PZ for distributed runs
    #[arg(long)]
    pub procs: Option<String>,
    /// strong | weak
    #[arg(long)]
    pub scaling: Option<String>,
    /// Compute/exchange cycles for distributed runs
    #[arg(long)]
    pub cycles: Option<String>,
}

impl RunFlags {
    /// Flag values as config keys, in override order.
    pub fn overrides(&self) -> Result<Vec<(&'static str, String)>> {
        let mut out = Vec::new();
        if let Some(g) = &self.grid {
            let [x, y, z] = triplet_strings(g)?;
            out.extend([("nx", x), ("ny", y), ("nz", z)]);
        }
        let simple = [
            ("teams", &self.teams),
            ("team_size", &self.team_size),
            ("updates_per_thread", &self.updates_per_thread),
            ("min_distance", &self.min_distance),
            ("max_distance", &self.max_distance),
            ("team_delay", &self.team_delay),
            ("block", &self.block),
            ("bx", &self.bx),
            ("by", &self.by),
            ("bz", &self.bz),
            ("sync", &self.sync),
            ("grid_mode", &self.mode),
            ("passes", &self.passes),
            ("fill", &self.fill),
            ("watchdog_ms", &self.watchdog_ms),
            ("procs", &self.procs),
            ("scaling", &self.scaling),
            ("cycles", &self.cycles),
        ];
        out.extend(
            simple
                .into_iter()
                .filter_map(|(k, v)| v.clone().map(|v| (k, v))),
        );
        if let Some(seed) = &self.seed {
            out.push(("fill", format!("random:{seed}")));
        }
        if let Some(p) = &self.output {
            out.push(("output", p.display().to_string()));
        }
        Ok(out)
    }

    /// The config file's entries with the flags applied on top.
    pub fn merged(&self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(path) => KeyValues::load(path)?,
            None => KeyValues::default(),
        };
        for (k, v) in self.overrides()? {
            kv.set(k, v);
        }
        Ok(kv)
    }
}

fn triplet_strings(s: &str) -> Result<[String; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [v] => Ok([v, v, v].map(str::to_string)),
        [x, y, z] => Ok([x, y, z].map(str::to_string)),
        _ => Err(CliError::Config(format!("expected N or X,Y,Z, got '{s}'"))),
    }
}

fn triplet(key: &str, s: &str) -> Result<[usize; 3]> {
    let [x, y, z] = triplet_strings(s)?;
    Ok([parse(key, &x)?, parse(key, &y)?, parse(key, &z)?])
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("bad value '{v}' for '{key}'")))
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Interior extent; per rank in weak-scaling distributed runs.
    pub dims: [usize; 3],
    pub pipeline: PipelineConfig,
    pub passes: usize,
    pub fill: FillRule,
    pub output: Option<PathBuf>,
    pub procs: [usize; 3],
    pub scaling: ScalingMode,
    pub cycles: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dims: [60; 3],
            pipeline: PipelineConfig::default(),
            passes: 2,
            fill: FillRule::Random { seed: 1 },
            output: None,
            procs: [1; 3],
            scaling: ScalingMode::Strong,
            cycles: 2,
        }
    }
}

impl RunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        let p = &mut c.pipeline;
        for (k, v) in kv.iter() {
            match k {
                "nx" => c.dims[0] = parse(k, v)?,
                "ny" => c.dims[1] = parse(k, v)?,
                "nz" => c.dims[2] = parse(k, v)?,
                "teams" => p.teams = parse(k, v)?,
                "team_size" => p.team_size = parse(k, v)?,
                "updates_per_thread" => p.updates_per_thread = parse(k, v)?,
                "min_distance" => p.min_distance = parse(k, v)?,
                "max_distance" => p.max_distance = parse(k, v)?,
                "team_delay" => p.team_delay = parse(k, v)?,
                "block" => {
                    let [bx, by, bz] = triplet(k, v)?;
                    p.block = BlockSpec::new(bx, by, bz);
                }
                // single components, applied after `block` below
                "bx" | "by" | "bz" => {}
                "sync" => p.sync = parse(k, v)?,
                "grid_mode" => p.grid_mode = parse(k, v)?,
                "watchdog_ms" => p.watchdog = Duration::from_millis(parse(k, v)?),
                "passes" => c.passes = parse(k, v)?,
                "fill" => c.fill = parse(k, v)?,
                "output" => c.output = Some(PathBuf::from(v)),
                "procs" => c.procs = triplet(k, v)?,
                "scaling" => c.scaling = parse(k, v)?,
                "cycles" => c.cycles = parse(k, v)?,
                other => return Err(CliError::Config(format!("unknown key '{other}'"))),
            }
        }
        for (key, slot) in [
            ("bx", &mut p.block.bx),
            ("by", &mut p.block.by),
            ("bz", &mut p.block.bz),
        ] {
            if let Some(v) = kv.get(key) {
                *slot = parse(key, v)?;
            }
        }
        Ok(c)
    }

    pub fn from_flags(flags: &RunFlags) -> Result<Self> {
        Self::from_key_values(&flags.merged()?)
    }

    /// Canonical `key = value` form; parsing it gives back `self`.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let [nx, ny, nz] = self.dims;
        let [px, py, pz] = self.procs;
        let mut kv = vec![
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("nz", nz.to_string()),
        ];
        kv.extend(self.pipeline.key_values());
        kv.extend([
            ("passes", self.passes.to_string()),
            ("fill", self.fill.to_string()),
            ("procs", format!("{px},{py},{pz}")),
            ("scaling", self.scaling.to_string()),
            ("cycles", self.cycles.to_string()),
            (
                "watchdog_ms",
                self.pipeline.watchdog.as_millis().to_string(),
            ),
        ]);
        if let Some(p) = &self.output {
            kv.push(("output", p.display().to_string()));
        }
        kv
    }

    /// SHA-256 over the settings that determine the result grid.
    pub fn hash(&self) -> String {
        fingerprint(
            self.key_values()
                .into_iter()
                .filter(|(k, _)| !UNHASHED.contains(k)),
        )
    }

    /// Text of the sidecar written next to a snapshot. Loadable with
    /// `--config`.
    pub fn sidecar_text(&self) -> String {
        let mut s = format!(
            "# stencilpipe run configuration\n# config_hash: {}\n",
            self.hash()
        );
        for (k, v) in self.key_values() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn sidecar_path(snapshot: &Path) -> PathBuf {
        let mut name = snapshot.as_os_str().to_owned();
        name.push(".cfg");
        PathBuf::from(name)
    }

    pub fn dist_config(&self) -> DistConfig {
        DistConfig {
            size: self.dims,
            scaling: self.scaling,
            procs: self.procs,
            pipeline: self.pipeline.clone(),
            cycles: self.cycles,
            fill: self.fill,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stencilpipe_core::kernel::GridMode;
    use stencilpipe_core::pipeline::SyncMode;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "nx = 40\nteam_size = 3\nsync = barrier # comment\nblock = 20,10,10\n",
        )
        .unwrap();
        let flags = RunFlags {
            config: Some(path),
            team_size: Some("2".into()),
            bz: Some("5".into()),
            seed: Some("9".into()),
            ..Default::default()
        };
        let c = RunConfig::from_flags(&flags).unwrap();
        assert_eq!(c.dims, [40, 60, 60]);
        assert_eq!(c.pipeline.team_size, 2);
        assert_eq!(c.pipeline.sync, SyncMode::Barrier);
        assert_eq!(c.pipeline.block, BlockSpec::new(20, 10, 5));
        assert_eq!(c.fill, FillRule::Random { seed: 9 });
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut c = RunConfig::default();
        c.pipeline.grid_mode = GridMode::TwoGrid;
        c.pipeline.block = BlockSpec::new(30, 10, 7);
        c.fill = FillRule::Constant(0.25);
        c.output = Some(PathBuf::from("/tmp/x.snap"));
        c.procs = [2, 1, 3];
        let kv = KeyValues::parse(&c.sidecar_text()).unwrap();
        assert_eq!(RunConfig::from_key_values(&kv).unwrap(), c);
    }

    #[test]
    fn hash_ignores_output_and_watchdog_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output = Some(PathBuf::from("elsewhere"));
        b.pipeline.watchdog = Duration::from_secs(1);
        assert_eq!(a.hash(), b.hash());
        b.passes = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bad_entries_are_config_errors() {
        for text in ["colour = red", "nx = -3", "block = 1,2", "sync = maybe"] {
            let kv = KeyValues::parse(text).unwrap();
            assert!(
                matches!(RunConfig::from_key_values(&kv), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }
}
