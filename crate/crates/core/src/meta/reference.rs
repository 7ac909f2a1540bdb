//! Reference posterior caches for training and evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{gaussian_posterior, AnalyticError};
use crate::derive_seed;
use crate::lang::Program;
use crate::samplers::{hmc, lais, snis_prior, HmcConfig, HmcError, ImportanceError, LaisConfig, ProposalTag, WeightedSampleSet};
use crate::semantics::{DensityError, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum ReferenceMethod {
    /// Draws from the closed-form posterior of a linear-Gaussian program.
    Exact,
    /// Evenly thinned pooled HMC draws with uniform weights; `N_hat` comes
    /// from LAIS around the same chains with `is_samples` draws.
    Hmc { hmc: HmcConfig, is_samples: usize },
    /// LAIS around HMC chains; the cache holds the weighted LAIS draws.
    Lais { hmc: HmcConfig },
    /// Self-normalised importance sampling from the prior.
    Prior,
}

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Hmc(#[from] HmcError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("program has no latent variables")]
    NoLatents,
}

/// Build an `m`-sample reference cache for `prog`. The HMC seed inside
/// `method` is replaced by one derived from `seed`.
pub fn reference_samples(
    prog: &Program,
    method: &ReferenceMethod,
    m: usize,
    seed: u64,
) -> Result<WeightedSampleSet, ReferenceError> {
    let n = prog.latent_count();
    if n == 0 {
        return Err(ReferenceError::NoLatents);
    }
    let model = Model::new(prog)?;
    let run_hmc = |cfg: &HmcConfig| -> Result<Vec<f64>, ReferenceError> {
        let cfg = HmcConfig {
            seed: derive_seed(seed, 0),
            ..cfg.clone()
        };
        Ok(hmc(&model, &cfg)?.pooled())
    };
    match method {
        ReferenceMethod::Exact => {
            let g = gaussian_posterior(prog)?;
            let l = g.cov.clone().cholesky().ok_or(AnalyticError::Improper)?.l();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples = Vec::with_capacity(m * n);
            for _ in 0..m {
                let e = nalgebra::DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let z = &g.mean + &l * e;
                samples.extend(z.iter());
            }
            Ok(WeightedSampleSet::uniform(n, samples, g.log_evidence, ProposalTag::Exact, seed))
        }
        ReferenceMethod::Hmc { hmc: cfg, is_samples } => {
            let pooled = run_hmc(cfg)?;
            let len = pooled.len() / n;
            let mut samples = Vec::with_capacity(m * n);
            for k in 0..m {
                let j = k * len / m;
                samples.extend_from_slice(&pooled[j * n..(j + 1) * n]);
            }
            let is = lais(&model, &pooled, *is_samples, &LaisConfig::default(), derive_seed(seed, 1))?;
            Ok(WeightedSampleSet::uniform(n, samples, is.log_normaliser, ProposalTag::Hmc, seed))
        }
        ReferenceMethod::Lais { hmc: cfg } => {
            let pooled = run_hmc(cfg)?;
            Ok(lais(&model, &pooled, m, &LaisConfig::default(), derive_seed(seed, 1))?)
        }
        ReferenceMethod::Prior => Ok(snis_prior(&model, m, seed)?),
    }
}
