use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::weighted::{log_sum_exp, ProposalTag, WeightedSampleSet};
use crate::semantics::{Model, SimulationError};
use crate::whitebox::MeanFieldPosterior;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ImportanceError {
    #[error("every importance weight is zero or non-finite")]
    DegenerateWeights,
    #[error("proposal has dimension {found}, program has {expected} latents")]
    Dimension { expected: usize, found: usize },
    #[error("empty chain")]
    EmptyChain,
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

fn finish(
    n: usize,
    samples: Vec<f64>,
    log_weights: Vec<f64>,
    tag: ProposalTag,
    seed: u64,
) -> Result<WeightedSampleSet, ImportanceError> {
    let lse = log_sum_exp(&log_weights);
    if !lse.is_finite() {
        return Err(ImportanceError::DegenerateWeights);
    }
    let log_normaliser = lse - (log_weights.len() as f64).ln();
    Ok(WeightedSampleSet {
        n,
        samples,
        log_weights,
        log_normaliser,
        tag,
        seed,
    })
}

fn finite_or_zero(x: Result<f64, impl std::fmt::Debug>) -> f64 {
    match x {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Importance sampling with the prior as proposal: weights are the
/// likelihood factors only.
pub fn snis_prior(model: &Model, m: usize, seed: u64) -> Result<WeightedSampleSet, ImportanceError> {
    let n = model.latent_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; m * n];
    let mut log_weights = Vec::with_capacity(m);
    for j in 0..m {
        let z = &mut samples[j * n..(j + 1) * n];
        model.sample_prior(&mut rng, z)?;
        log_weights.push(finite_or_zero(model.log_likelihood(z)));
    }
    finish(n, samples, log_weights, ProposalTag::Prior, seed)
}

/// Importance sampling with a mean-field proposal:
/// `log w = log p(z) - log q(z)`.
pub fn snis_proposal(
    model: &Model,
    q: &MeanFieldPosterior,
    m: usize,
    seed: u64,
) -> Result<WeightedSampleSet, ImportanceError> {
    let n = model.latent_count();
    if q.dim() != n {
        return Err(ImportanceError::Dimension { expected: n, found: q.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; m * n];
    let mut log_weights = Vec::with_capacity(m);
    for j in 0..m {
        let z = &mut samples[j * n..(j + 1) * n];
        q.sample_into(&mut rng, z);
        log_weights.push(finite_or_zero(model.log_density(z)) - q.log_q(z));
    }
    finish(n, samples, log_weights, ProposalTag::Predicted, seed)
}

/// Options for [`lais`].
#[derive(Clone, Debug, PartialEq)]
pub struct LaisConfig {
    /// Kernel standard deviation, shared by all coordinates. `None` uses
    /// the per-coordinate standard deviation of the chain.
    pub proposal_sd: Option<f64>,
    /// Maximum number of mixture centres; the chain is thinned evenly.
    pub max_centres: usize,
}

impl Default for LaisConfig {
    fn default() -> Self {
        LaisConfig {
            proposal_sd: None,
            max_centres: 500,
        }
    }
}

/// Importance sampling from an equal-weight mixture of Gaussian kernels
/// centred at thinned chain states. `chain` is row-major with `n` columns.
pub fn lais(
    model: &Model,
    chain: &[f64],
    m: usize,
    cfg: &LaisConfig,
    seed: u64,
) -> Result<WeightedSampleSet, ImportanceError> {
    let n = model.latent_count();
    let len = if n == 0 { 0 } else { chain.len() / n };
    if len == 0 {
        return Err(ImportanceError::EmptyChain);
    }
    let k = len.min(cfg.max_centres.max(1));
    let centres: Vec<&[f64]> = (0..k)
        .map(|c| {
            let j = c * len / k;
            &chain[j * n..(j + 1) * n]
        })
        .collect();
    let sd: Vec<f64> = match cfg.proposal_sd {
        Some(s) => vec![s; n],
        None => (0..n)
            .map(|i| {
                let mean = (0..len).map(|j| chain[j * n + i]).sum::<f64>() / len as f64;
                let var = (0..len).map(|j| (chain[j * n + i] - mean).powi(2)).sum::<f64>() / len as f64;
                // a collapsed chain still needs a proper kernel
                var.sqrt().max(1e-3)
            })
            .collect(),
    };
    let log_norm: f64 = sd.iter().map(|s| -0.5 * (2.0 * std::f64::consts::PI * s * s).ln()).sum();
    let log_mix = |z: &[f64]| -> f64 {
        let terms: Vec<f64> = centres
            .iter()
            .map(|c| {
                log_norm
                    - (0..n)
                        .map(|i| (z[i] - c[i]).powi(2) / (2.0 * sd[i] * sd[i]))
                        .sum::<f64>()
            })
            .collect();
        log_sum_exp(&terms) - (k as f64).ln()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; m * n];
    let mut log_weights = Vec::with_capacity(m);
    for j in 0..m {
        let c = centres[rng.random_range(0..k)];
        let z = &mut samples[j * n..(j + 1) * n];
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            z[i] = c[i] + sd[i] * e;
        }
        log_weights.push(finite_or_zero(model.log_density(z)) - log_mix(z));
    }
    finish(n, samples, log_weights, ProposalTag::Lais, seed)
}
