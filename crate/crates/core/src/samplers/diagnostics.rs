//! Effective sample sizes and split-R-hat.
//!
//! Chain ESS follows the multi-chain estimator used by Stan: FFT
//! autocovariances, combined across chains through the between/within
//! variance, truncated with Geyer's initial positive sequence and made
//! monotone. R-hat is the classic split-R-hat without rank normalisation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use super::weighted::WeightedSampleSet;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DiagnosticError {
    #[error("need at least 4 draws per chain, got {0}")]
    TooShort(usize),
    #[error("need at least {needed} chains, got {found}")]
    TooFewChains { needed: usize, found: usize },
    #[error("chains have different lengths")]
    RaggedChains,
    #[error("no finite, non-zero weight")]
    ZeroWeights,
}

/// `(sum w)^2 / sum w^2` over the weights of a sample set.
pub fn ess_weights(ws: &WeightedSampleSet) -> Result<f64, DiagnosticError> {
    ess_log_weights(&ws.log_weights)
}

pub fn ess_log_weights(log_weights: &[f64]) -> Result<f64, DiagnosticError> {
    let m = log_weights.iter().cloned().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(DiagnosticError::ZeroWeights);
    }
    let w: Vec<f64> = log_weights
        .iter()
        .map(|l| if l.is_finite() { (l - m).exp() } else { 0.0 })
        .collect();
    ess_raw_weights(&w)
}

pub fn ess_raw_weights(w: &[f64]) -> Result<f64, DiagnosticError> {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    if s <= 0.0 || !s.is_finite() {
        return Err(DiagnosticError::ZeroWeights);
    }
    Ok(s * s / s2)
}

/// Biased autocovariance at every lag, via zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    inv.process(&mut buf);
    // rustfft does not normalise; divide by size for the inverse and by n
    // for the biased estimator
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize, DiagnosticError> {
    let n = chains.first().map(|c| c.len()).unwrap_or(0);
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticError::RaggedChains);
    }
    if n < 4 {
        return Err(DiagnosticError::TooShort(n));
    }
    Ok(n)
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Multi-chain autocorrelation ESS.
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<f64, DiagnosticError> {
    if chains.is_empty() {
        return Err(DiagnosticError::TooFewChains { needed: 1, found: 0 });
    }
    let n = check_chains(chains)?;
    let m = chains.len();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let mean_var = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    if !(var_plus > 0.0) {
        log::warn!("chain has zero variance; ESS reported as the number of draws");
        return Ok((n * m) as f64);
    }
    let rho = |t: usize| -> f64 {
        let a = acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (mean_var - a) / var_plus
    };
    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 2 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    // initial monotone sequence
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (n * m) as f64;
    let tau = (-1.0 + 2.0 * rho_hat[..max_t.min(n)].iter().sum::<f64>() + rho_hat.get(max_t).copied().unwrap_or(0.0))
        .max(1.0 / total.log10());
    Ok(total / tau)
}

/// Single-chain ESS.
pub fn ess_chain(chain: &[f64]) -> Result<f64, DiagnosticError> {
    ess_chains(&[chain.to_vec()])
}

/// Split-R-hat over `chains` (each split in half). A zero within-chain
/// variance is reported as 1 with a warning.
pub fn r_hat(chains: &[Vec<f64>]) -> Result<f64, DiagnosticError> {
    if chains.len() < 2 {
        return Err(DiagnosticError::TooFewChains { needed: 2, found: chains.len() });
    }
    let n = check_chains(chains)?;
    let half = n / 2;
    let splits: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let h = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| s.iter().sum::<f64>() / h).collect();
    let w = splits.iter().map(|s| variance(s)).sum::<f64>() / splits.len() as f64;
    let b_over_n = variance(&means);
    if !(w > 0.0) {
        log::warn!("R-hat undefined for zero within-chain variance; reporting 1");
        return Ok(1.0);
    }
    let var_plus = (h - 1.0) / h * w + b_over_n;
    Ok((var_plus / w).sqrt())
}
