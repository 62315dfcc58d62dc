//! Connectivity search: the synthesized loss, two-phase training, pruning
//! and materialization of the sparse network.

mod arch;
mod loss;
mod search;

pub use arch::{prune, viable_sigma, Architecture};
pub use loss::{binary_loss, mixge, sparsity_loss, synthesized_loss, LossConfig, LossTerms};
pub use search::{search, search_history_csv, weight_history_csv, SearchEpoch, SearchOutcome, SearchSchedule};

use crate::error::Result;
use crate::supernet::{Fusion, Network, SuperNetConfig};

/// Builds the plain-fusion network over a pruned architecture with fresh
/// parameters.
pub fn materialize(arch: &Architecture, cfg: &SuperNetConfig, seed: u64) -> Result<Network> {
    if arch.levels() != cfg.levels {
        return Err(crate::Error::Architecture(format!(
            "architecture has {} stages but the config has {}",
            arch.levels(),
            cfg.levels
        )));
    }
    Network::new(cfg.clone(), Fusion::Plain, arch.edges(), seed)
}
