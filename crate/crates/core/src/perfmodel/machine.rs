use std::collections::BTreeMap;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{invalid, Error, Result};

/// Cache design of a machine's hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheDesign {
    Inclusive,
    Exclusive,
}

/// Kernel whose cacheline traffic the cycle model describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Jacobi,
    Update,
}

impl Kernel {
    fn key(self) -> &'static str {
        match self {
            Kernel::Jacobi => "jacobi",
            Kernel::Update => "update",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(Kernel::Jacobi),
            "update" => Ok(Kernel::Update),
            other => Err(invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Cachelines moved between two cache levels per cacheline update.
#[derive(Clone, Debug, PartialEq)]
pub struct Transfer {
    /// Source and destination levels, 1 = L1.
    pub from: u8,
    pub to: u8,
    pub cachelines: f64,
    pub cycles_per_cacheline: f64,
}

impl Transfer {
    pub fn cycles(&self) -> f64 {
        self.cachelines * self.cycles_per_cacheline
    }

    /// Boundary label with the lower level first, e.g. `L2L3`.
    pub fn boundary(&self) -> String {
        let (a, b) = if self.from < self.to {
            (self.from, self.to)
        } else {
            (self.to, self.from)
        };
        format!("L{a}L{b}")
    }

    pub fn touches(&self, level: u8) -> bool {
        self.from == level || self.to == level
    }

    fn parse(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "bad transfer '{s}', expected LaLb:cachelines:cycles"
            ))
        };
        let mut parts = s.trim().split(':');
        let (Some(label), Some(cl), Some(cy), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let levels: Vec<u8> = label
            .split('L')
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [from, to] = levels[..] else {
            return Err(bad());
        };
        Ok(Self {
            from,
            to,
            cachelines: cl.trim().parse().map_err(|_| bad())?,
            cycles_per_cacheline: cy.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Per-kernel cycle model input.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    pub core_cycles: f64,
    /// Transfers per data level (2 = L2, ...). L1 needs none.
    pub transfers: BTreeMap<u8, Vec<Transfer>>,
}

/// Cache-group parameters of one machine. Bandwidths are in bytes/s.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineModel {
    pub name: String,
    pub freq_hz: f64,
    pub cores_per_group: usize,
    pub m_s: f64,
    pub m_um1: f64,
    pub m_uc1: f64,
    pub m_ucmax: f64,
    pub cache_design: CacheDesign,
    pub kernels: BTreeMap<Kernel, KernelModel>,
    /// Boundaries (e.g. `L2L3`) whose transfers overlap with core work.
    pub overlap: BTreeMap<String, bool>,
}

fn req<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<T> {
    kv.parse_key(key)?
        .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

fn positive(v: f64, key: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("'{key}' must be positive, got {v}")))
    }
}

impl MachineModel {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let cache_design = match req::<String>(&kv, "cache_design")?.as_str() {
            "inclusive" => CacheDesign::Inclusive,
            "exclusive" => CacheDesign::Exclusive,
            other => return Err(Error::Config(format!("unknown cache design '{other}'"))),
        };
        let mut kernels = BTreeMap::new();
        for kernel in [Kernel::Jacobi, Kernel::Update] {
            let prefix = kernel.key();
            let Some(core_cycles) = kv.parse_key::<f64>(&format!("{prefix}.core_cycles"))? else {
                continue;
            };
            let mut transfers = BTreeMap::new();
            for key in kv.keys().filter(|k| k.starts_with(&format!("{prefix}.L"))) {
                let level: u8 = key[prefix.len() + 2..]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad level in key '{key}'")))?;
                let list = kv.get(key).unwrap_or_default();
                let parsed = list
                    .split(',')
                    .map(Transfer::parse)
                    .collect::<Result<Vec<_>>>()?;
                transfers.insert(level, parsed);
            }
            kernels.insert(
                kernel,
                KernelModel {
                    core_cycles,
                    transfers,
                },
            );
        }
        let mut overlap = BTreeMap::new();
        for key in kv.keys().filter(|k| k.starts_with("overlap.")) {
            overlap.insert(key["overlap.".len()..].to_string(), req::<bool>(&kv, key)?);
        }
        let m = Self {
            name: req(&kv, "name")?,
            freq_hz: positive(req(&kv, "freq_hz")?, "freq_hz")?,
            cores_per_group: req(&kv, "cores_per_group")?,
            m_s: positive(req(&kv, "M_s")?, "M_s")?,
            m_um1: positive(req(&kv, "M_um1")?, "M_um1")?,
            m_uc1: positive(req(&kv, "M_uc1")?, "M_uc1")?,
            m_ucmax: positive(req(&kv, "M_ucmax")?, "M_ucmax")?,
            cache_design,
            kernels,
            overlap,
        };
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// One of the shipped machines: `nehalem_ep`, `nehalem_ex`, `istanbul`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "nehalem_ep" => include_str!("../../machines/nehalem_ep.conf"),
            "nehalem_ex" => include_str!("../../machines/nehalem_ex.conf"),
            "istanbul" => include_str!("../../machines/istanbul.conf"),
            other => return Err(Error::Config(format!("no built-in machine '{other}'"))),
        };
        Self::parse(text)
    }

    /// A built-in name or a path to a machine file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        Self::builtin(name_or_path).or_else(|_| Self::load(Path::new(name_or_path)))
    }

    pub const BUILTIN: [&'static str; 3] = ["nehalem_ep", "nehalem_ex", "istanbul"];

    pub fn overlaps(&self, boundary: &str) -> bool {
        self.overlap.get(boundary).copied().unwrap_or(false)
    }
}

/// Interconnect and node parameters for the halo model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkModel {
    pub latency_s: f64,
    pub bandwidth_bps: f64,
    pub node_perf_lups: f64,
}

impl NetworkModel {
    pub fn new(latency_s: f64, bandwidth_bps: f64, node_perf_lups: f64) -> Result<Self> {
        if !(latency_s > 0.0 && bandwidth_bps > 0.0 && node_perf_lups > 0.0) {
            return Err(invalid("network parameters must be positive"));
        }
        Ok(Self {
            latency_s,
            bandwidth_bps,
            node_perf_lups,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        Ok(Self {
            latency_s: positive(req(&kv, "latency_s")?, "latency_s")?,
            bandwidth_bps: positive(req(&kv, "bandwidth_Bps")?, "bandwidth_Bps")?,
            node_perf_lups: positive(req(&kv, "node_perf_lups")?, "node_perf_lups")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// QDR InfiniBand: 1.8 µs, 3.2 GB/s, 2000 MLUP/s per node.
    pub fn qdr() -> Self {
        Self::parse(include_str!("../../machines/qdr.conf")).expect("built-in network file")
    }

    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if name_or_path == "qdr" {
            return Ok(Self::qdr());
        }
        Self::load(Path::new(name_or_path))
    }
}
