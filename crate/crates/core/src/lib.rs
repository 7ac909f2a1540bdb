//! Restricted probabilistic IR with a learned, white-box inference
//! interpreter.
//!
//! The crate covers the whole pipeline: [`lang`] (syntax, parsing,
//! dependency graphs), [`typeck`], [`semantics`] (densities, gradients,
//! simulation), [`samplers`] (HMC, importance sampling, diagnostics),
//! [`autodiff`] (a small tape for MLPs), [`whitebox`] (the neural
//! interpreter), [`meta`] (training against cached reference samples) and
//! [`progen`] (random program classes).

pub mod analytic;
pub mod autodiff;
pub mod lang;
pub mod meta;
pub mod progen;
pub mod samplers;
pub mod semantics;
pub mod typeck;
pub mod whitebox;

pub use lang::{canonicalise, parse, Command, Program, Var};
pub use samplers::{ProposalTag, WeightedSampleSet};
pub use semantics::{log_density, Model};
pub use whitebox::{MeanFieldPosterior, NetworkBank};

/// Derive an independent seed for sub-stream `index` of `seed`
/// (SplitMix64 finaliser over the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
