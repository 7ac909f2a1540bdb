//! Reference inference: HMC, importance samplers and diagnostics.

mod diagnostics;
mod hmc;
mod importance;
mod weighted;

pub use diagnostics::{
    autocovariance, ess_chain, ess_chains, ess_log_weights, ess_raw_weights, ess_weights, r_hat, DiagnosticError,
};
pub use hmc::{hmc, Chain, HmcConfig, HmcError, HmcOutput};
pub use importance::{lais, snis_prior, snis_proposal, ImportanceError, LaisConfig};
pub use weighted::{program_hash, CacheError, ProposalTag, WeightedSampleSet, CACHE_MAGIC, CACHE_VERSION};

#[cfg(test)]
mod tests;
