use std::time::Duration;

use stencilpipe_core::grid::{BlockSpec, FillRule, Grid3};
use stencilpipe_core::halo::{
    decompose_domain, exchange_multilayer_halos, run_distributed, run_rank, DistConfig,
    ExchangeTimings, HaloPlan, RankTopology, ScalingMode, Subdomain,
};
use stencilpipe_core::kernel::{reference_sweeps, GridMode};
use stencilpipe_core::pipeline::{PipelineConfig, SyncMode};
use stencilpipe_core::transport::{create_topology, in_process, Backend, Endpoint};
use stencilpipe_core::Error;

/// Run `f` once per endpoint, each on its own thread.
fn on_ranks<T: Send>(eps: Vec<Endpoint>, f: impl Fn(Endpoint) -> T + Sync) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = eps.into_iter().map(|ep| s.spawn(|| f(ep))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

/// Local grid with owned cells set to the rank id and everything else NaN.
fn rank_id_grid(sub: &Subdomain) -> Grid3 {
    let dims = sub.local_dims();
    let mut g = Grid3::zeroed(dims, 0).unwrap();
    let own = sub.owned_region();
    for k in -1..=dims[2] as isize {
        for j in -1..=dims[1] as isize {
            for i in -1..=dims[0] as isize {
                let inside = [i, j, k].iter().all(|&c| c >= 0)
                    && own.contains([i as usize, j as usize, k as usize]);
                g.set(i, j, k, if inside { sub.rank as f64 } else { f64::NAN });
            }
        }
    }
    g
}

/// Exchange once on every rank; returns the grids and message counts.
fn exchange_all(subs: &[Subdomain], rounds: usize) -> Vec<(Grid3, Vec<Grid3>, u64)> {
    on_ranks(in_process(subs.len()), |mut ep| {
        let sub = &subs[ep.rank()];
        let plan = HaloPlan::new(sub);
        let mut g = rank_id_grid(sub);
        let mut t = ExchangeTimings::default();
        let mut history = Vec::new();
        for r in 0..rounds {
            exchange_multilayer_halos(&mut g, &plan, &mut ep, r as u64, &mut t).unwrap();
            history.push(g.clone());
        }
        (g, history, ep.stats().messages_sent)
    })
}

fn owner(subs: &[Subdomain], global: [isize; 3]) -> usize {
    subs.iter()
        .find(|s| s.owned_global().contains(global.map(|v| v as usize)))
        .map(|s| s.rank)
        .unwrap()
}

#[test]
fn ownership_oracle_all_small_topologies() {
    for px in 1..=3 {
        for py in 1..=3 {
            for pz in 1..=3 {
                for h in 1..=4 {
                    let topo = RankTopology::new([px, py, pz]).unwrap();
                    let share = 2 * h;
                    let global = [px * share, py * share, pz * share];
                    let subs = decompose_domain(global, topo, h).unwrap();
                    let grids = exchange_all(&subs, 1);
                    for (sub, (g, _, _)) in subs.iter().zip(&grids) {
                        let dims = sub.local_dims();
                        let off = sub.local_offset();
                        for k in 0..dims[2] {
                            for j in 0..dims[1] {
                                for i in 0..dims[0] {
                                    let gl = [
                                        i as isize + off[0],
                                        j as isize + off[1],
                                        k as isize + off[2],
                                    ];
                                    let want = owner(&subs, gl) as f64;
                                    let got = g.get(i as isize, j as isize, k as isize);
                                    assert_eq!(
                                        got,
                                        want,
                                        "procs {:?} h {h} rank {} local {:?}",
                                        [px, py, pz],
                                        sub.rank,
                                        [i, j, k]
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn corner_halo_arrives_by_forwarding() {
    let subs = decompose_domain([8, 8, 4], RankTopology::new([2, 2, 1]).unwrap(), 2).unwrap();
    let grids = exchange_all(&subs, 1);
    let (g0, _, sent) = &grids[0];
    // rank 0 only ever talks to ranks 1 and 2, yet holds rank 3's cells
    assert_eq!(*sent, 2);
    assert_eq!(g0.get(4, 4, 0), 3.0);
    assert_eq!(g0.get(5, 5, 3), 3.0);
    assert_eq!(g0.get(4, 3, 0), 1.0);
    assert_eq!(g0.get(3, 4, 0), 2.0);
}

#[test]
fn exchange_is_idempotent() {
    let subs = decompose_domain([12, 12, 12], RankTopology::new([2, 3, 2]).unwrap(), 3).unwrap();
    for (_, history, _) in exchange_all(&subs, 2) {
        let (a, b) = (&history[0], &history[1]);
        let same = a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
}

#[test]
fn one_message_per_neighbor_regardless_of_h() {
    for h in [1, 2, 4] {
        let subs = decompose_domain([9 * h; 3], RankTopology::new([3, 3, 3]).unwrap(), h).unwrap();
        for (sub, (_, _, sent)) in subs.iter().zip(exchange_all(&subs, 1)) {
            let neighbors = sub.neighbors.iter().flatten().flatten().count() as u64;
            assert_eq!(sent, neighbors);
        }
        // the center rank has six neighbors
        assert_eq!(subs[13].neighbors.iter().flatten().flatten().count(), 6);
    }
}

fn dist_config(
    procs: [usize; 3],
    t: usize,
    tt: usize,
    mode: GridMode,
    cycles: usize,
) -> DistConfig {
    DistConfig {
        size: [60, 60, 60],
        scaling: ScalingMode::Strong,
        procs,
        pipeline: PipelineConfig {
            team_size: t,
            updates_per_thread: tt,
            block: BlockSpec::new(30, 10, 10),
            grid_mode: mode,
            sync: SyncMode::Relaxed,
            watchdog: Duration::from_secs(60),
            ..Default::default()
        },
        cycles,
        fill: FillRule::Random { seed: 11 },
    }
}

fn assert_matches_reference(cfg: &DistConfig, backend: Backend) {
    let out = run_distributed(cfg, backend, true).unwrap();
    let got = out.global.unwrap();
    let init = Grid3::new(cfg.global_dims(), 0, cfg.fill).unwrap();
    let want = reference_sweeps(&init, cfg.pipeline.updates_per_pass() * cfg.cycles).unwrap();
    assert_eq!(got.first_difference(&want), None, "{cfg:?}");
}

#[test]
fn two_ranks_one_cycle_matches_reference() {
    assert_matches_reference(
        &dist_config([2, 1, 1], 2, 1, GridMode::TwoGrid, 1),
        Backend::InProcess,
    );
}

#[test]
fn eight_ranks_compressed_matches_reference() {
    assert_matches_reference(
        &dist_config([2, 2, 2], 2, 2, GridMode::Compressed, 2),
        Backend::InProcess,
    );
}

#[test]
fn uneven_topology_over_tcp_matches_reference() {
    let mut cfg = dist_config([3, 2, 1], 1, 3, GridMode::TwoGrid, 2);
    cfg.size = [30, 20, 12];
    assert_matches_reference(&cfg, Backend::Tcp);
}

#[test]
fn weak_scaling_grows_the_domain() {
    let mut cfg = dist_config([2, 1, 1], 1, 2, GridMode::Compressed, 2);
    cfg.scaling = ScalingMode::Weak;
    cfg.size = [10, 12, 8];
    assert_eq!(cfg.global_dims(), [20, 12, 8]);
    let out = run_distributed(&cfg, Backend::InProcess, false).unwrap();
    assert_eq!(out.ranks.len(), 2);
    assert!(out
        .ranks
        .iter()
        .all(|r| r.owned_cells == 960 && r.updates == 960 * 2 * 2));
    assert!(out.global.is_none());
}

#[test]
fn thin_subdomains_are_rejected() {
    let mut cfg = dist_config([2, 1, 1], 4, 4, GridMode::TwoGrid, 1);
    cfg.size = [30, 8, 8];
    assert!(matches!(
        run_distributed(&cfg, Backend::InProcess, false),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn config_disagreement_aborts_all_ranks() {
    let a = dist_config([2, 1, 1], 1, 1, GridMode::TwoGrid, 1);
    let mut b = a.clone();
    b.cycles = 3;
    let results = on_ranks(create_topology(2, Backend::InProcess).unwrap(), |mut ep| {
        let cfg = if ep.rank() == 0 { &a } else { &b };
        run_rank(&mut ep, cfg, false).map(|_| ())
    });
    assert!(results.iter().all(|r| matches!(r, Err(Error::Config(_)))));
}

#[test]
fn gather_disagreement_aborts_all_ranks() {
    let cfg = dist_config([2, 1, 1], 1, 1, GridMode::TwoGrid, 1);
    let results = on_ranks(create_topology(2, Backend::InProcess).unwrap(), |mut ep| {
        let gather = ep.rank() == 0;
        run_rank(&mut ep, &cfg, gather).map(|_| ())
    });
    assert!(results.iter().all(|r| matches!(r, Err(Error::Config(_)))));
}
