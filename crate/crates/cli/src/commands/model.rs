use clap::{ArgGroup, Args};
use stencilpipe_core::perfmodel::{
    baseline_perf, cache_cycle_model, comm_efficiency, default_jacobi_bandwidth,
    halo_model_in_range, l3_scalability_check, multihalo_advantage, pipelined_bound, Kernel,
    MachineModel, NetworkModel,
};

use super::emit;
use crate::error::Result;
use crate::ranges::expand_usize;
use crate::table::Table;

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("kind").required(true).args(["bounds", "cycles", "scalability", "multihalo"])))]
pub struct ModelArgs {
    /// Memory-bound baseline and pipelined upper bound per thread count
    #[arg(long)]
    pub bounds: bool,
    /// In-cache cycles and bandwidth per cacheline update
    #[arg(long)]
    pub cycles: bool,
    /// Whether the shared cache can feed t pipelined threads
    #[arg(long)]
    pub scalability: bool,
    /// Multi-layer versus single-layer halo exchange
    #[arg(long)]
    pub multihalo: bool,
    /// Built-in machine name or machine file; repeatable, default all built-ins
    #[arg(long)]
    pub machine: Vec<String>,
    /// Thread counts, default 1 up to the cores per cache group
    #[arg(long = "t", value_name = "RANGE")]
    pub threads: Option<String>,
    /// Per-thread shared-cache bandwidth in bytes/s, default the cycle model's lower bound
    #[arg(long = "bj", value_name = "BYTES_PER_S")]
    pub b_j: Option<f64>,
    /// jacobi | update, default both
    #[arg(long)]
    pub kernel: Option<String>,
    /// Cache levels holding the working set
    #[arg(long, value_name = "RANGE", default_value = "1:3")]
    pub level: String,
    /// Subdomain edge lengths
    #[arg(long = "L", value_name = "RANGE", default_value = "10:400:10")]
    pub edge: String,
    /// Halo widths
    #[arg(long = "h", value_name = "RANGE", default_value = "1,2,4,8,16,32")]
    pub halo: String,
    /// `qdr` or a network file
    #[arg(long, default_value = "qdr")]
    pub network: String,
    /// Print JSON instead of CSV
    #[arg(long)]
    pub json: bool,
}

fn machines(args: &ModelArgs) -> Result<Vec<MachineModel>> {
    if args.machine.is_empty() {
        MachineModel::BUILTIN
            .iter()
            .map(|n| Ok(MachineModel::builtin(n)?))
            .collect()
    } else {
        args.machine
            .iter()
            .map(|n| Ok(MachineModel::resolve(n)?))
            .collect()
    }
}

fn thread_counts(args: &ModelArgs, m: &MachineModel) -> Result<Vec<usize>> {
    match &args.threads {
        Some(spec) => expand_usize(spec),
        None => Ok((1..=m.cores_per_group).collect()),
    }
}

pub fn run(args: &ModelArgs) -> Result<()> {
    let table = if args.multihalo {
        multihalo(args)?
    } else if args.cycles {
        cycles(args)?
    } else if args.scalability {
        scalability(args)?
    } else {
        bounds(args)?
    };
    emit(&table, args.json)
}

fn bounds(args: &ModelArgs) -> Result<Table> {
    let mut table = Table::new("machine,t,baseline_lups,pipelined_bound_lups");
    for m in machines(args)? {
        for t in thread_counts(args, &m)? {
            table.push_csv(&format!(
                "{},{t},{},{}",
                m.name,
                baseline_perf(&m),
                pipelined_bound(&m, t)
            ));
        }
    }
    Ok(table)
}

fn cycles(args: &ModelArgs) -> Result<Table> {
    let kernels = match &args.kernel {
        Some(k) => vec![k.parse::<Kernel>()?],
        None => vec![Kernel::Jacobi, Kernel::Update],
    };
    let levels = expand_usize(&args.level)?;
    let mut table = Table::new(
        "machine,kernel,level,cycles_min,cycles_max,bandwidth_min_Bps,bandwidth_max_Bps",
    );
    for m in machines(args)? {
        for &kernel in &kernels {
            for &level in &levels {
                let est = u8::try_from(level)
                    .map_err(|_| {
                        stencilpipe_core::Error::InvalidArgument(format!("no cache level {level}"))
                    })
                    .and_then(|l| cache_cycle_model(&m, kernel, l));
                match est {
                    Ok(e) => table.push_csv(&format!(
                        "{},{},{level},{},{},{},{}",
                        m.name,
                        format!("{kernel:?}").to_lowercase(),
                        e.cycles_min,
                        e.cycles_max,
                        e.bandwidth_min,
                        e.bandwidth_max
                    )),
                    Err(e) => eprintln!("skipping: {e}"),
                }
            }
        }
    }
    Ok(table)
}

fn scalability(args: &ModelArgs) -> Result<Table> {
    let mut table = Table::new("machine,t,b_j_Bps,required_Bps,m_ucmax_Bps,scales");
    for m in machines(args)? {
        let b_j = match args.b_j {
            Some(b) => b,
            None => default_jacobi_bandwidth(&m)?,
        };
        for t in thread_counts(args, &m)? {
            let c = l3_scalability_check(&m, t, b_j);
            table.push_csv(&format!(
                "{},{t},{b_j},{},{},{}",
                m.name, c.required, m.m_ucmax, c.scales
            ));
        }
    }
    Ok(table)
}

fn multihalo(args: &ModelArgs) -> Result<Table> {
    let net = NetworkModel::resolve(&args.network)?;
    let mut table = Table::new("L,h,in_range,advantage,comm_efficiency");
    for l in expand_usize(&args.edge)? {
        for h in expand_usize(&args.halo)? {
            table.push_csv(&format!(
                "{l},{h},{},{},{}",
                halo_model_in_range(l, h),
                multihalo_advantage(l, h, &net)?,
                comm_efficiency(l, h, &net)?
            ));
        }
    }
    Ok(table)
}
