//! Domain decomposition with `h`-layer halos, exchanged once every `h`
//! updates along the three axes in turn.

mod dist;
mod exchange;
mod topology;

pub use dist::{
    check_agreement, gather_global, run_distributed, run_rank, DistConfig, DistOutcome, RankState,
    RankStats, ScalingMode,
};
pub use exchange::{
    decode_frame, encode_frame, exchange_multilayer_halos, ExchangeTimings, HaloPlan, MessageDesc,
    HEADER_LEN,
};
pub use topology::{decompose_domain, RankTopology, Side, Subdomain};
