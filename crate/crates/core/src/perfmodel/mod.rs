//! Analytical performance models: bandwidth-bound baselines, an in-cache
//! cycle model, the shared-cache scalability criterion and a cost model for
//! multi-layer halo exchange.

mod machine;

pub use machine::{CacheDesign, Kernel, KernelModel, MachineModel, NetworkModel, Transfer};

use crate::error::{invalid, Result};

/// Bytes of memory traffic per lattice-site update of the two-grid Jacobi
/// sweep (one load, one store, no write allocate).
pub const BYTES_PER_LUP: f64 = 16.0;

pub const CACHELINE_BYTES: f64 = 64.0;

/// Memory-bound performance of the standard sweep, in LUP/s.
pub fn baseline_perf(m: &MachineModel) -> f64 {
    m.m_s / BYTES_PER_LUP
}

/// Upper bound for `t` pipelined updates per memory round trip, in LUP/s.
/// Optimistic: it ignores in-cache limits entirely.
pub fn pipelined_bound(m: &MachineModel, t: usize) -> f64 {
    t as f64 * m.m_um1 / BYTES_PER_LUP
}

/// Cycle-model estimate for one cacheline update (eight stencils).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleEstimate {
    /// With every overlappable transfer hidden behind core work.
    pub cycles_min: f64,
    /// With no overlap at all.
    pub cycles_max: f64,
    /// Data-level bandwidth at `cycles_max`, in bytes/s.
    pub bandwidth_min: f64,
    /// Data-level bandwidth at `cycles_min`, in bytes/s.
    pub bandwidth_max: f64,
}

/// Cycles per cacheline update when the working set lives in cache level
/// `level` (1 = L1).
pub fn cache_cycle_model(m: &MachineModel, kernel: Kernel, level: u8) -> Result<CycleEstimate> {
    let km = m
        .kernels
        .get(&kernel)
        .ok_or_else(|| invalid(format!("{} has no model for kernel {kernel:?}", m.name)))?;
    let transfers: &[Transfer] = match (level, km.transfers.get(&level)) {
        (_, Some(t)) => t,
        (1, None) => &[],
        (_, None) => {
            return Err(invalid(format!(
                "{} has no {kernel:?} transfers for level L{level}",
                m.name
            )))
        }
    };
    let (hidden, exposed): (Vec<&Transfer>, Vec<&Transfer>) =
        transfers.iter().partition(|t| m.overlaps(&t.boundary()));
    let hidden: f64 = hidden.iter().map(|t| t.cycles()).sum();
    let exposed: f64 = exposed.iter().map(|t| t.cycles()).sum();
    let cycles_max = km.core_cycles + hidden + exposed;
    let cycles_min = km.core_cycles.max(hidden) + exposed;
    let bytes = CACHELINE_BYTES
        * transfers
            .iter()
            .filter(|t| t.touches(level))
            .fold(0.0, |acc, t| acc + t.cachelines);
    Ok(CycleEstimate {
        cycles_min,
        cycles_max,
        bandwidth_min: bytes * m.freq_hz / cycles_max,
        bandwidth_max: bytes * m.freq_hz / cycles_min,
    })
}

/// Bandwidth each pipelined thread draws from the shared cache, taken
/// from the cycle model's lower bound for the Jacobi kernel in L3.
pub fn default_jacobi_bandwidth(m: &MachineModel) -> Result<f64> {
    Ok(cache_cycle_model(m, Kernel::Jacobi, 3)?.bandwidth_min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalabilityCheck {
    /// Shared-cache bandwidth needed by `t` threads plus the memory stream.
    pub required: f64,
    pub scales: bool,
}

/// Whether the shared cache can feed `t` pipelined threads drawing `b_j`
/// bytes/s each, plus one memory stream.
pub fn l3_scalability_check(m: &MachineModel, t: usize, b_j: f64) -> ScalabilityCheck {
    let required = (t as f64 + 1.0) * b_j;
    ScalabilityCheck {
        required,
        scales: required <= m.m_ucmax,
    }
}

/// Compute and communication time of one `h`-update cycle on a cubic
/// subdomain of edge `l`.
fn halo_cycle_times(l: usize, h: usize, net: &NetworkModel) -> Result<(f64, f64)> {
    if l == 0 || h == 0 {
        return Err(invalid("subdomain edge and halo width must be >= 1"));
    }
    let (l, hf) = (l as f64, h as f64);
    // update s covers a region h - s layers larger on every side
    let compute: f64 = (1..=h)
        .map(|s| (l + 2.0 * (h - s) as f64).powi(3))
        .sum::<f64>()
        / net.node_perf_lups;
    // later axes forward the halos received along earlier axes
    let grown = l + 2.0 * hf;
    let volumes = [
        8.0 * hf * l * l,
        8.0 * hf * grown * l,
        8.0 * hf * grown * grown,
    ];
    let comm: f64 = volumes
        .iter()
        .map(|v| 2.0 * (net.latency_s + v / net.bandwidth_bps))
        .sum();
    Ok((compute, comm))
}

/// Whether the halo model's subdomain-thickness condition `l > 2(h-1)`
/// holds. Outside it the halo layers would reach beyond the nearest
/// neighbor; the formula still evaluates.
pub fn halo_model_in_range(l: usize, h: usize) -> bool {
    h >= 1 && l > 2 * (h - 1)
}

/// Time per update with single-layer halos over time per update with
/// `h`-layer halos; above 1 means the wide halo wins.
pub fn multihalo_advantage(l: usize, h: usize, net: &NetworkModel) -> Result<f64> {
    let (c1, m1) = halo_cycle_times(l, 1, net)?;
    let (ch, mh) = halo_cycle_times(l, h, net)?;
    Ok((c1 + m1) / ((ch + mh) / h as f64))
}

/// Fraction of an `h`-update cycle spent computing.
pub fn comm_efficiency(l: usize, h: usize, net: &NetworkModel) -> Result<f64> {
    let (c, m) = halo_cycle_times(l, h, net)?;
    Ok(c / (c + m))
}
