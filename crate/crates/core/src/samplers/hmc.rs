//! Hamiltonian Monte Carlo with a fixed number of leapfrog steps.
//!
//! Warmup adapts the step size by dual averaging towards a target
//! acceptance rate. With `adapt_mass` set, a diagonal inverse mass matrix
//! is estimated from the middle part of warmup (15% to 75%), after which
//! dual averaging restarts. After warmup the step size is frozen and
//! jittered uniformly by +-10% per iteration, which breaks the periodic
//! orbits a fixed trajectory length can fall into on Gaussian targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::semantics::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub warmup: usize,
    pub samples: usize,
    pub chains: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub adapt_mass: bool,
    /// Run chains one after another on the calling thread.
    pub serial: bool,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            leapfrog_steps: 32,
            warmup: 1000,
            samples: 10_000,
            chains: 4,
            seed: 0,
            target_accept: 0.8,
            adapt_mass: true,
            serial: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum HmcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("chain {chain}: could not find an initial point with finite density")]
    Init { chain: usize },
    #[error("chain {chain}: every warmup transition diverged")]
    AllDivergent { chain: usize },
}

/// One chain's post-warmup draws, row-major with `n` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub n: usize,
    pub draws: Vec<f64>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub accept_rate: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.draws.len() / self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trace of coordinate `i`.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.draws.iter().skip(i).step_by(self.n).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcOutput {
    pub chains: Vec<Chain>,
}

impl HmcOutput {
    /// All draws of all chains, concatenated in chain order.
    pub fn pooled(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.draws.iter().copied()).collect()
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergences).sum()
    }

    /// Per-chain traces of coordinate `i`.
    pub fn traces(&self, i: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.coordinate(i)).collect()
    }
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    count: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            count: 0.0,
            target,
        }
    }

    /// Feed one acceptance statistic; returns the next step size.
    fn update(&mut self, accept: f64) -> f64 {
        self.count += 1.0;
        let t = self.count;
        let w = 1.0 / (t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - t.sqrt() / Self::GAMMA * self.h_bar;
        let eta = t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Energy errors above this count as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

struct Sampler<'a> {
    model: &'a Model,
    n: usize,
    inv_mass: Vec<f64>,
    grad: Vec<f64>,
}

/// Result of one transition.
struct Transition {
    accept_prob: f64,
    divergent: bool,
}

impl<'a> Sampler<'a> {
    fn potential_and_grad(&mut self, q: &[f64], grad: &mut [f64]) -> Option<f64> {
        match self.model.log_density_and_grad(q, grad) {
            Ok(lp) if lp.is_finite() && grad.iter().all(|g| g.is_finite()) => Some(-lp),
            _ => None,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.inv_mass).map(|(p, m)| 0.5 * p * p * m).sum()
    }

    /// One HMC transition from `q` (updated in place), whose potential and
    /// gradient are `u` and `self.grad`.
    fn transition<R: Rng>(&mut self, rng: &mut R, q: &mut Vec<f64>, u: &mut f64, eps: f64, steps: usize) -> Transition {
        let n = self.n;
        let mut p: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                e / self.inv_mass[i].sqrt()
            })
            .collect();
        let h0 = *u + self.kinetic(&p);
        let mut qn = q.clone();
        let mut g = self.grad.clone(); // gradient of log density
        let mut un = *u;
        let mut ok = true;
        for _ in 0..steps {
            for i in 0..n {
                p[i] += 0.5 * eps * g[i];
                qn[i] += eps * self.inv_mass[i] * p[i];
            }
            let mut g2 = vec![0.0; n];
            match self.potential_and_grad(&qn, &mut g2) {
                Some(v) => {
                    un = v;
                    g = g2;
                }
                None => {
                    ok = false;
                    break;
                }
            }
            for i in 0..n {
                p[i] += 0.5 * eps * g[i];
            }
        }
        let h1 = un + self.kinetic(&p);
        if !ok || !h1.is_finite() || h1 - h0 > DIVERGENCE_THRESHOLD {
            return Transition {
                accept_prob: 0.0,
                divergent: true,
            };
        }
        let accept_prob = (h0 - h1).exp().min(1.0);
        if rng.random::<f64>() < accept_prob {
            *q = qn;
            *u = un;
            self.grad = g;
        }
        Transition {
            accept_prob,
            divergent: false,
        }
    }

    /// Doubling/halving search for a step size whose single-leapfrog
    /// acceptance is near 1/2.
    fn initial_step<R: Rng>(&mut self, rng: &mut R, q: &[f64], u: f64) -> f64 {
        let mut eps = 0.1;
        let probe = |s: &mut Self, rng: &mut R, eps: f64| -> f64 {
            let mut qc = q.to_vec();
            let mut uc = u;
            let saved = s.grad.clone();
            let t = s.transition(rng, &mut qc, &mut uc, eps, 1);
            s.grad = saved;
            t.accept_prob
        };
        let a = probe(self, rng, eps);
        let up = a > 0.5;
        for _ in 0..50 {
            eps = if up { eps * 2.0 } else { eps / 2.0 };
            let a = probe(self, rng, eps);
            if (up && a < 0.5) || (!up && a > 0.5) {
                break;
            }
        }
        eps
    }
}

fn run_chain(model: &Model, cfg: &HmcConfig, chain: usize) -> Result<Chain, HmcError> {
    let n = model.latent_count();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, chain as u64));
    let mut s = Sampler {
        model,
        n,
        inv_mass: vec![1.0; n],
        grad: vec![0.0; n],
    };
    let mut q = vec![0.0; n];
    let mut u = None;
    for _ in 0..100 {
        if model.sample_prior(&mut rng, &mut q).is_err() {
            continue;
        }
        let mut g = vec![0.0; n];
        if let Some(v) = s.potential_and_grad(&q, &mut g) {
            s.grad = g;
            u = Some(v);
            break;
        }
    }
    let mut u = u.ok_or(HmcError::Init { chain })?;

    let mut eps = s.initial_step(&mut rng, &q, u);
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    let (slow_start, slow_end) = (cfg.warmup * 15 / 100, cfg.warmup * 75 / 100);
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut warmup_div = 0;
    for it in 0..cfg.warmup {
        let t = s.transition(&mut rng, &mut q, &mut u, eps, cfg.leapfrog_steps);
        warmup_div += t.divergent as usize;
        eps = da.update(t.accept_prob);
        if cfg.adapt_mass && it >= slow_start && it < slow_end {
            window.push(q.clone());
            if it + 1 == slow_end && window.len() >= 10 {
                let w = window.len() as f64;
                for i in 0..n {
                    let mean = window.iter().map(|x| x[i]).sum::<f64>() / w;
                    let var = window.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / (w - 1.0);
                    // shrink towards a small constant, as in Stan
                    s.inv_mass[i] = (w / (w + 5.0)) * var + 1e-3 * (5.0 / (w + 5.0));
                }
                let mut g = vec![0.0; n];
                u = s.potential_and_grad(&q, &mut g).unwrap_or(u);
                s.grad = g;
                eps = s.initial_step(&mut rng, &q, u);
                da = DualAveraging::new(eps, cfg.target_accept);
            }
        }
    }
    if cfg.warmup > 0 && warmup_div == cfg.warmup {
        return Err(HmcError::AllDivergent { chain });
    }
    let eps = if cfg.warmup > 0 { da.final_step() } else { eps };

    let mut draws = Vec::with_capacity(cfg.samples * n);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for _ in 0..cfg.samples {
        let jitter = eps * rng.random_range(0.9..1.1);
        let t = s.transition(&mut rng, &mut q, &mut u, jitter, cfg.leapfrog_steps);
        accept_sum += t.accept_prob;
        divergences += t.divergent as usize;
        draws.extend_from_slice(&q);
    }
    Ok(Chain {
        n,
        draws,
        step_size: eps,
        inv_mass: s.inv_mass,
        accept_rate: accept_sum / cfg.samples.max(1) as f64,
        divergences,
        warmup_divergences: warmup_div,
    })
}

/// Run `cfg.chains` independent chains. Chain `c` uses the stream
/// `derive_seed(cfg.seed, c)`, so results do not depend on scheduling.
pub fn hmc(model: &Model, cfg: &HmcConfig) -> Result<HmcOutput, HmcError> {
    if cfg.leapfrog_steps == 0 {
        return Err(HmcError::Config("leapfrog_steps must be at least 1".into()));
    }
    if cfg.chains == 0 {
        return Err(HmcError::Config("chains must be at least 1".into()));
    }
    let chains: Result<Vec<Chain>, HmcError> = if cfg.serial {
        (0..cfg.chains).map(|c| run_chain(model, cfg, c)).collect()
    } else {
        (0..cfg.chains).into_par_iter().map(|c| run_chain(model, cfg, c)).collect()
    };
    Ok(HmcOutput { chains: chains? })
}
