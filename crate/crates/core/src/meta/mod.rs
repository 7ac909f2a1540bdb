//! Meta-training of the network bank over a corpus of programs.
//!
//! Each program carries a read-only cache of reference posterior samples
//! and a marginal-likelihood estimate `N_hat`. The per-program loss is the
//! weighted cross-entropy of the predicted mean-field posterior on a
//! minibatch of cached samples plus `(lambda / 2) (N_hat - Z)^2`. The
//! cross-entropy only depends on the minibatch through per-coordinate
//! weighted means and spreads, so those are computed first and the tape
//! holds a single fused node for it.

mod eval;
mod reference;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamConfig, AdamShapeError, Tape, TapeError, Tensor};
use crate::derive_seed;
use crate::lang::Program;
use crate::progen::Split;
use crate::samplers::WeightedSampleSet;
use crate::whitebox::{InferError, NetworkBank, TapedInference};

pub use eval::{
    evaluate, evaluate_with, flat_baseline, reference_marginals, EvalReport, LatentReport, ProgramReport, Reference,
    FLAT_BASELINE_VAR,
};
pub use reference::{reference_samples, ReferenceError, ReferenceMethod};

pub use crate::autodiff::AdamState;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("corpus has no training programs")]
    EmptyCorpus,
    #[error("program `{label}` has no cached reference samples")]
    MissingCache { label: String },
    #[error("program `{label}` has {vars} variables and {latents} latents; the bank takes at most {m} and {n}")]
    Shape { label: String, vars: usize, latents: usize, m: usize, n: usize },
    #[error("cache of `{label}` has dimension {found}, program has {expected} latents")]
    CacheDimension { label: String, expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss on `{label}`")]
    NonFinite { label: String },
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Adam(#[from] AdamShapeError),
}

/// One program with its reference cache.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub label: String,
    pub program: Program,
    pub cache: Option<WeightedSampleSet>,
    pub split: Split,
}

impl CorpusEntry {
    pub fn new(label: impl Into<String>, program: Program, cache: WeightedSampleSet, split: Split) -> Self {
        CorpusEntry {
            label: label.into(),
            program,
            cache: Some(cache),
            split,
        }
    }

    fn cache(&self) -> Result<&WeightedSampleSet, MetaError> {
        self.cache.as_ref().ok_or_else(|| MetaError::MissingCache { label: self.label.clone() })
    }
}

/// Programs plus caches, with the largest (m, n) any of them needs.
#[derive(Clone, Debug)]
pub struct TrainingCorpus {
    pub entries: Vec<CorpusEntry>,
}

impl TrainingCorpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        TrainingCorpus { entries }
    }

    /// `(m, n)`: maximum variable and latent counts.
    pub fn shape(&self) -> (usize, usize) {
        self.entries.iter().fold((0, 0), |(m, n), e| {
            (m.max(e.program.var_count()), n.max(e.program.latent_count()))
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Check every entry against the bank shape and its cache.
    pub fn validate(&self, bank: &NetworkBank) -> Result<(), MetaError> {
        if self.split(Split::Train).next().is_none() {
            return Err(MetaError::EmptyCorpus);
        }
        let (m, n) = (bank.config.m, bank.config.n);
        for e in &self.entries {
            let p = &e.program;
            if p.var_count() > m || p.latent_count() > n {
                return Err(MetaError::Shape {
                    label: e.label.clone(),
                    vars: p.var_count(),
                    latents: p.latent_count(),
                    m,
                    n,
                });
            }
            let c = e.cache()?;
            if c.n != p.latent_count() {
                return Err(MetaError::CacheDimension {
                    label: e.label.clone(),
                    expected: p.latent_count(),
                    found: c.n,
                });
            }
        }
        Ok(())
    }
}

/// Weighted per-coordinate summary of a minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub zbar: Vec<f64>,
    pub spread: Vec<f64>,
    pub n_hat: f64,
}

impl BatchStats {
    /// Summary of the rows `rows` of `cache` (all rows when `None`).
    pub fn from_cache(cache: &WeightedSampleSet, rows: Option<&[usize]>) -> Self {
        let (zbar, spread) = cache.weighted_moments(rows);
        BatchStats {
            zbar,
            spread,
            n_hat: cache.normaliser(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cross_entropy: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Record the loss for an already taped inference. Returns the scalar
/// total and its parts.
pub fn loss_from_inference(
    tape: &mut Tape<'_>,
    inf: &TapedInference,
    stats: &BatchStats,
    lambda: f64,
) -> Result<(Tensor, LossParts), TapeError> {
    let ce = tape.gauss_cross_entropy(inf.means, inf.vars, &stats.zbar, &stats.spread)?;
    let z = tape.exp(inf.log_z);
    let diff = tape.add_scalar(z, -stats.n_hat);
    let sq = tape.square(diff);
    let pen = tape.scale(sq, 0.5 * lambda);
    let pen = tape.sum(pen);
    let total = tape.add(ce, pen)?;
    let parts = LossParts {
        cross_entropy: tape.scalar(ce),
        penalty: tape.scalar(pen),
        total: tape.scalar(total),
    };
    Ok((total, parts))
}

/// Loss of one program and its gradient with respect to every parameter
/// array of the bank.
pub fn loss_and_grad(
    bank: &NetworkBank,
    prog: &Program,
    stats: &BatchStats,
    lambda: f64,
) -> Result<(LossParts, Vec<Vec<f64>>), MetaError> {
    let mut tape = Tape::new(&bank.params);
    let inf = bank.infer_taped(&mut tape, prog)?;
    let (total, parts) = loss_from_inference(&mut tape, &inf, stats, lambda)?;
    let grads = tape.backward(total)?;
    Ok((parts, grads.into_params()))
}

/// Loss without a reverse pass.
pub fn loss(bank: &NetworkBank, prog: &Program, stats: &BatchStats, lambda: f64) -> Result<LossParts, MetaError> {
    let mut tape = Tape::new(&bank.params);
    let inf = bank.infer_taped(&mut tape, prog)?;
    Ok(loss_from_inference(&mut tape, &inf, stats, lambda)?.1)
}

/// Backward through the loss and one Adam update.
pub fn grad_step(
    bank: &mut NetworkBank,
    adam: &mut AdamState,
    prog: &Program,
    stats: &BatchStats,
    lambda: f64,
) -> Result<LossParts, MetaError> {
    let (parts, grads) = loss_and_grad(bank, prog, stats, lambda)?;
    if !parts.total.is_finite() {
        return Err(MetaError::NonFinite { label: prog.to_string() });
    }
    adam.step(&mut bank.params, &grads)?;
    Ok(parts)
}

/// Stop when the smoothed training loss has not improved by a relative
/// `min_improvement` for `patience` consecutive epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub patience: usize,
    pub min_improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub adam: AdamConfig,
    /// Minibatch size, drawn without replacement from each cache.
    pub batch: usize,
    pub epochs: usize,
    /// Log (and evaluate the test split) after epoch 1 and every this many
    /// epochs.
    pub log_every: usize,
    /// Programs whose gradients are summed before one update. 1 means one
    /// update per program.
    pub group: usize,
    /// Training loss is averaged over this many epochs.
    pub smoothing: usize,
    pub plateau: Option<Plateau>,
    pub seed: u64,
    /// Serial execution and zeroed wall-clock fields.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 2.0,
            adam: AdamConfig::default(),
            batch: 4096,
            epochs: 1000,
            log_every: 1,
            group: 1,
            smoothing: 8,
            plateau: None,
            seed: 0,
            deterministic: false,
        }
    }
}

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    /// Training loss, averaged over the training set and the last
    /// `smoothing` epochs.
    pub train_loss: f64,
    pub train_cross_entropy: f64,
    pub train_penalty: f64,
    /// Test loss on full caches; NaN without a test split.
    pub test_loss: f64,
    pub test_cross_entropy: f64,
    pub test_penalty: f64,
    pub wall_ms: u64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,train_loss,test_loss,train_cross_entropy,train_penalty,test_cross_entropy,test_penalty,wall_ms";

impl LossRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.test_loss,
            self.train_cross_entropy,
            self.train_penalty,
            self.test_cross_entropy,
            self.test_penalty,
            self.wall_ms
        )
    }
}

fn mean_parts(parts: &[LossParts]) -> LossParts {
    let k = parts.len() as f64;
    if parts.is_empty() {
        return LossParts {
            cross_entropy: f64::NAN,
            penalty: f64::NAN,
            total: f64::NAN,
        };
    }
    LossParts {
        cross_entropy: parts.iter().map(|p| p.cross_entropy).sum::<f64>() / k,
        penalty: parts.iter().map(|p| p.penalty).sum::<f64>() / k,
        total: parts.iter().map(|p| p.total).sum::<f64>() / k,
    }
}

/// Average loss over a split, on full caches.
pub fn split_loss(bank: &NetworkBank, corpus: &TrainingCorpus, split: Split, lambda: f64, serial: bool) -> Result<LossParts, MetaError> {
    let entries: Vec<&CorpusEntry> = corpus.split(split).collect();
    let one = |e: &&CorpusEntry| -> Result<LossParts, MetaError> {
        let stats = BatchStats::from_cache(e.cache()?, None);
        loss(bank, &e.program, &stats, lambda)
    };
    let parts: Result<Vec<LossParts>, MetaError> = if serial {
        entries.iter().map(one).collect()
    } else {
        entries.par_iter().map(one).collect()
    };
    Ok(mean_parts(&parts?))
}

/// Result of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<LossRecord>,
    pub updates: u64,
    pub stopped_early: bool,
}

/// Train `bank` on the training split of `corpus`. Each epoch visits the
/// training programs in a freshly shuffled order and draws a new minibatch
/// per program. `observer` sees every logged record together with the
/// bank at that point.
pub fn train(
    bank: &mut NetworkBank,
    corpus: &TrainingCorpus,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&LossRecord, &NetworkBank),
) -> Result<TrainReport, MetaError> {
    corpus.validate(bank)?;
    if cfg.batch == 0 || cfg.log_every == 0 || cfg.group == 0 || cfg.smoothing == 0 {
        return Err(MetaError::Config("batch, log_every, group and smoothing must be positive".into()));
    }
    let train_set: Vec<&CorpusEntry> = corpus.split(Split::Train).collect();
    if let Some(e) = train_set.iter().find(|e| e.cache.as_ref().is_some_and(|c| c.len() < cfg.batch)) {
        return Err(MetaError::Config(format!(
            "minibatch of {} exceeds the {} cached samples of `{}`",
            cfg.batch,
            e.cache.as_ref().map_or(0, |c| c.len()),
            e.label
        )));
    }
    let has_test = corpus.split(Split::Test).next().is_some();
    let mut adam = AdamState::new(&bank.params, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history: Vec<LossParts> = Vec::new();
    let mut log = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let start = Instant::now();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        // per-program minibatch streams do not depend on visiting order
        let stats: Vec<BatchStats> = order
            .iter()
            .map(|&i| {
                let cache = train_set[i].cache().expect("validated");
                let mut r = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, epoch as u64), i as u64));
                let rows = rand::seq::index::sample(&mut r, cache.len(), cfg.batch).into_vec();
                BatchStats::from_cache(cache, Some(&rows))
            })
            .collect();
        let mut epoch_parts = Vec::with_capacity(order.len());
        for chunk in order.iter().zip(&stats).collect::<Vec<_>>().chunks(cfg.group) {
            let one = |(&i, s): &(&usize, &BatchStats)| loss_and_grad(bank, &train_set[i].program, s, cfg.lambda);
            let results: Result<Vec<_>, MetaError> = if cfg.deterministic || chunk.len() == 1 {
                chunk.iter().map(one).collect()
            } else {
                chunk.par_iter().map(one).collect()
            };
            let results = results?;
            let mut grads = results[0].1.clone();
            for (_, g) in &results[1..] {
                for (a, b) in grads.iter_mut().zip(g) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            for ((&i, _), (parts, _)) in chunk.iter().zip(&results) {
                if !parts.total.is_finite() {
                    return Err(MetaError::NonFinite { label: train_set[i].label.clone() });
                }
                epoch_parts.push(*parts);
            }
            adam.step(&mut bank.params, &grads)?;
        }
        history.push(mean_parts(&epoch_parts));
        let window = &history[history.len().saturating_sub(cfg.smoothing)..];
        let smoothed = mean_parts(window);

        if let Some(p) = cfg.plateau {
            if smoothed.total < best - p.min_improvement * best.abs() {
                best = smoothed.total;
                since_best = 0;
            } else {
                since_best += 1;
                stopped_early = since_best >= p.patience;
            }
        }
        if epoch == 1 || epoch % cfg.log_every == 0 || epoch == cfg.epochs || stopped_early {
            let test = if has_test {
                split_loss(bank, corpus, Split::Test, cfg.lambda, cfg.deterministic)?
            } else {
                mean_parts(&[])
            };
            let rec = LossRecord {
                epoch,
                train_loss: smoothed.total,
                train_cross_entropy: smoothed.cross_entropy,
                train_penalty: smoothed.penalty,
                test_loss: test.total,
                test_cross_entropy: test.cross_entropy,
                test_penalty: test.penalty,
                wall_ms: if cfg.deterministic { 0 } else { start.elapsed().as_millis() as u64 },
            };
            observer(&rec, bank);
            log::info!("epoch {epoch}: train {:.4} test {:.4}", rec.train_loss, rec.test_loss);
            log.push(rec);
        }
        if stopped_early {
            break;
        }
    }
    Ok(TrainReport {
        log,
        updates: adam.step,
        stopped_early,
    })
}

#[cfg(test)]
mod tests;
