//! Weighted sample sets and their on-disk cache format.
//!
//! Cache layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "WPPLSMPL"
//! version      u32      1
//! program hash 32 bytes SHA-256 of the program's printed text
//! n            u32      latent dimension
//! M            u64      number of samples
//! tag          u8       0 prior, 1 predicted, 2 lais, 3 hmc, 4 exact
//! seed         u64
//! samples      M*n f64  row-major
//! log_weights  M   f64
//! N_hat        f64      normaliser estimate
//! log N_hat    f64
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lang::Program;

pub const CACHE_MAGIC: &[u8; 8] = b"WPPLSMPL";
pub const CACHE_VERSION: u32 = 1;

/// Where the samples came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalTag {
    Prior,
    Predicted,
    Lais,
    /// Unweighted MCMC draws; the normaliser comes from elsewhere.
    Hmc,
    /// Draws from a closed-form posterior.
    Exact,
}

impl ProposalTag {
    fn code(self) -> u8 {
        match self {
            ProposalTag::Prior => 0,
            ProposalTag::Predicted => 1,
            ProposalTag::Lais => 2,
            ProposalTag::Hmc => 3,
            ProposalTag::Exact => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ProposalTag::Prior,
            1 => ProposalTag::Predicted,
            2 => ProposalTag::Lais,
            3 => ProposalTag::Hmc,
            4 => ProposalTag::Exact,
            _ => return None,
        })
    }
}

impl std::fmt::Display for ProposalTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProposalTag::Prior => "prior",
            ProposalTag::Predicted => "predicted",
            ProposalTag::Lais => "lais",
            ProposalTag::Hmc => "hmc",
            ProposalTag::Exact => "exact",
        };
        f.write_str(s)
    }
}

/// `M` latent vectors of dimension `n` with log importance weights and a
/// normaliser estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSampleSet {
    pub n: usize,
    /// Row-major `M x n`.
    pub samples: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// `log N_hat`.
    pub log_normaliser: f64,
    pub tag: ProposalTag,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a sample cache (bad magic)")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("unknown proposal tag {0}")]
    Tag(u8),
    #[error("cache was built for a different program")]
    ProgramMismatch,
}

/// SHA-256 of the program's printed form.
pub fn program_hash(prog: &Program) -> [u8; 32] {
    Sha256::digest(prog.to_string().as_bytes()).into()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl WeightedSampleSet {
    /// Equal-weight set (e.g. MCMC draws) with a separately supplied
    /// normaliser estimate.
    pub fn uniform(n: usize, samples: Vec<f64>, log_normaliser: f64, tag: ProposalTag, seed: u64) -> Self {
        let m = samples.len() / n.max(1);
        WeightedSampleSet {
            n,
            samples,
            log_weights: vec![0.0; m],
            log_normaliser,
            tag,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.samples[j * self.n..(j + 1) * self.n]
    }

    /// `N_hat`.
    pub fn normaliser(&self) -> f64 {
        self.log_normaliser.exp()
    }

    /// Self-normalised weights summing to one.
    pub fn normalised_weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.log_weights);
        self.log_weights.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Per-coordinate weighted mean and variance over the given rows
    /// (all rows when `rows` is `None`), using self-normalised weights.
    pub fn weighted_moments(&self, rows: Option<&[usize]>) -> (Vec<f64>, Vec<f64>) {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let lw: Vec<f64> = rows.iter().map(|&j| self.log_weights[j]).collect();
        let lse = log_sum_exp(&lw);
        let w: Vec<f64> = lw.iter().map(|l| (l - lse).exp()).collect();
        let mut mean = vec![0.0; self.n];
        for (k, &j) in rows.iter().enumerate() {
            for (i, m) in mean.iter_mut().enumerate() {
                *m += w[k] * self.samples[j * self.n + i];
            }
        }
        let mut var = vec![0.0; self.n];
        for (k, &j) in rows.iter().enumerate() {
            for (i, v) in var.iter_mut().enumerate() {
                *v += w[k] * (self.samples[j * self.n + i] - mean[i]).powi(2);
            }
        }
        (mean, var)
    }

    pub fn write<W: Write>(&self, mut w: W, prog_hash: &[u8; 32]) -> Result<(), CacheError> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(prog_hash)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&[self.tag.code()])?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in self.samples.iter().chain(&self.log_weights) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.normaliser().to_le_bytes())?;
        w.write_all(&self.log_normaliser.to_le_bytes())?;
        Ok(())
    }

    /// Read a cache; returns the set and the stored program hash.
    pub fn read<R: Read>(mut r: R) -> Result<(WeightedSampleSet, [u8; 32]), CacheError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(CacheError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(CacheError::Version(version));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        let mut t = [0u8; 1];
        r.read_exact(&mut t)?;
        let tag = ProposalTag::from_code(t[0]).ok_or(CacheError::Tag(t[0]))?;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut read_f64s = |k: usize| -> io::Result<Vec<f64>> {
            let mut buf = vec![0u8; 8 * k];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let samples = read_f64s(m * n)?;
        let log_weights = read_f64s(m)?;
        let tail = read_f64s(2)?;
        Ok((
            WeightedSampleSet {
                n,
                samples,
                log_weights,
                log_normaliser: tail[1],
                tag,
                seed,
            },
            hash,
        ))
    }

    /// Read and check that the cache belongs to `prog`.
    pub fn read_for<R: Read>(r: R, prog: &Program) -> Result<WeightedSampleSet, CacheError> {
        let (ws, hash) = Self::read(r)?;
        if hash != program_hash(prog) {
            return Err(CacheError::ProgramMismatch);
        }
        Ok(ws)
    }
}
