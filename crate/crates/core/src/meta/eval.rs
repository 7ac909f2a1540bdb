//! Per-program comparison of predicted and reference posteriors.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::CorpusEntry;
use crate::analytic::gaussian_posterior;
use crate::progen::Split;
use crate::whitebox::{InferError, MeanFieldPosterior, NetworkBank};

/// Variance of the flat baseline proposal `N(0, 10^4)`.
pub const FLAT_BASELINE_VAR: f64 = 1e4;

/// The flat baseline posterior for `n` latents.
pub fn flat_baseline(n: usize) -> MeanFieldPosterior {
    MeanFieldPosterior::new(vec![0.0; n], vec![FLAT_BASELINE_VAR; n])
}

/// Reference marginals and marginal likelihood of one program.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub marginals: MeanFieldPosterior,
    pub evidence: f64,
    /// Whether these come from the closed form rather than a cache.
    pub analytic: bool,
}

/// Closed-form reference when the program is linear-Gaussian, otherwise
/// the weighted moments and `N_hat` of its cache.
pub fn reference_marginals(entry: &CorpusEntry) -> Option<Reference> {
    if let Ok(g) = gaussian_posterior(&entry.program) {
        return Some(Reference {
            marginals: g.marginals(),
            evidence: g.evidence(),
            analytic: true,
        });
    }
    let c = entry.cache.as_ref()?;
    let (means, vars) = c.weighted_moments(None);
    // a collapsed coordinate would make the KL infinite
    let vars = vars.into_iter().map(|v| v.max(1e-12)).collect();
    Some(Reference {
        marginals: MeanFieldPosterior::new(means, vars),
        evidence: c.normaliser(),
        analytic: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentReport {
    pub pred_mean: f64,
    pub pred_sd: f64,
    pub ref_mean: f64,
    pub ref_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub label: String,
    pub split: Split,
    pub latents: Vec<LatentReport>,
    /// `KL[p' || q]` with `p'` the reference's Gaussian marginals.
    pub kl: f64,
    /// Predicted `Z`, when the method produces one.
    pub z: Option<f64>,
    pub n_hat: f64,
    pub analytic_reference: bool,
}

impl ProgramReport {
    pub fn z_rel_error(&self) -> Option<f64> {
        self.z.map(|z| (z - self.n_hat).abs() / self.n_hat)
    }

    /// Whether every latent's predicted mean is within `k` reference
    /// standard deviations of the reference mean.
    pub fn means_within(&self, k: f64) -> bool {
        self.latents.iter().all(|l| (l.pred_mean - l.ref_mean).abs() <= k * l.ref_sd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub programs: Vec<ProgramReport>,
    pub mean_kl: f64,
    pub median_kl: f64,
    pub mean_z_rel_error: Option<f64>,
    pub median_z_rel_error: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

impl EvalReport {
    fn new(programs: Vec<ProgramReport>) -> Self {
        let kls: Vec<f64> = programs.iter().map(|p| p.kl).collect();
        let zs: Vec<f64> = programs.iter().filter_map(|p| p.z_rel_error()).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        EvalReport {
            mean_kl: mean(&kls),
            median_kl: median(kls),
            mean_z_rel_error: (!zs.is_empty()).then(|| mean(&zs)),
            median_z_rel_error: (!zs.is_empty()).then(|| median(zs.clone())),
            programs,
        }
    }

    /// One row per latent.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "program,split,latent,pred_mean,pred_sd,ref_mean,ref_sd,kl,z,n_hat")?;
        for p in &self.programs {
            let split = match p.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            let z = p.z.map(|z| z.to_string()).unwrap_or_default();
            for (i, l) in p.latents.iter().enumerate() {
                writeln!(
                    w,
                    "{},{split},{i},{},{},{},{},{},{z},{}",
                    p.label, l.pred_mean, l.pred_sd, l.ref_mean, l.ref_sd, p.kl, p.n_hat
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluate any posterior predictor. `predict` returns the mean-field
/// posterior and, optionally, a marginal-likelihood estimate.
pub fn evaluate_with<E>(
    entries: &[CorpusEntry],
    mut predict: impl FnMut(&CorpusEntry) -> Result<(MeanFieldPosterior, Option<f64>), E>,
) -> Result<EvalReport, E> {
    let mut programs = Vec::with_capacity(entries.len());
    for e in entries {
        let Some(r) = reference_marginals(e) else {
            log::warn!("no reference for `{}`; skipped", e.label);
            continue;
        };
        let (q, z) = predict(e)?;
        let latents = (0..q.dim())
            .map(|i| LatentReport {
                pred_mean: q.means[i],
                pred_sd: q.vars[i].sqrt(),
                ref_mean: r.marginals.means[i],
                ref_sd: r.marginals.vars[i].sqrt(),
            })
            .collect();
        programs.push(ProgramReport {
            label: e.label.clone(),
            split: e.split,
            latents,
            kl: q.kl_from(&r.marginals),
            z,
            n_hat: r.evidence,
            analytic_reference: r.analytic,
        });
    }
    Ok(EvalReport::new(programs))
}

/// Evaluate a trained bank.
pub fn evaluate(bank: &NetworkBank, entries: &[CorpusEntry]) -> Result<EvalReport, InferError> {
    evaluate_with(entries, |e| {
        let (q, log_z) = bank.infer(&e.program)?;
        Ok((q, Some(log_z.exp())))
    })
}
