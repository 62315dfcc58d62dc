//! The dense encoder–decoder super-network and its building blocks.
//!
//! A stub encoder produces `L` features `E_1..E_L` at dyadic scales plus a
//! pooled ground feature `G`. Decoder stage `D_l` fuses any subset of the
//! candidate inputs `E_*`, `G` and deeper `D_j`, and a regression head maps
//! `D_1` back to a phase image in `[0, 1]`.
//!
//! [`Network`] covers both the relaxed super-net ([`Fusion::Weighted`]) and
//! the pruned, materialized net ([`Fusion::Plain`]).

mod checkpoint;
mod config;
mod graph;
mod network;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{SuperNetConfig, DEFAULT_ENCODER_DEPTHS};
pub use graph::{candidate_edges, count_candidate_connections, Edge, Node};
pub use network::{BnMode, Forward, ForwardPass, Fusion, Network, RunningStats, StageFeatures};

/// Super-net with every candidate edge, weighted fusion and fresh parameters.
pub fn super_net(cfg: SuperNetConfig, seed: u64) -> crate::Result<Network> {
    let edges = candidate_edges(cfg.levels);
    Network::new(cfg, Fusion::Weighted, &edges, seed)
}
