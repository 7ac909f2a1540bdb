use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::semantics::log_gauss_density_term;

/// Product of independent normals, one per latent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPosterior {
    pub means: Vec<f64>,
    /// Variances, all strictly positive.
    pub vars: Vec<f64>,
}

impl MeanFieldPosterior {
    pub fn new(means: Vec<f64>, vars: Vec<f64>) -> Self {
        assert_eq!(means.len(), vars.len());
        MeanFieldPosterior { means, vars }
    }

    pub fn standard(n: usize) -> Self {
        Self::new(vec![0.0; n], vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.sqrt()).collect()
    }

    /// `log q(z)`.
    pub fn log_q(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(&x, (&m, &v))| log_gauss_density_term(x, m, v))
            .sum()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) {
        for (i, zi) in z.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *zi = self.means[i] + self.vars[i].sqrt() * e;
        }
    }

    /// `KL[p || self]` for a mean-field Gaussian `p`.
    pub fn kl_from(&self, p: &MeanFieldPosterior) -> f64 {
        (0..self.dim())
            .map(|i| {
                let (mp, vp, mq, vq) = (p.means[i], p.vars[i], self.means[i], self.vars[i]);
                0.5 * ((vq / vp).ln() + (vp + (mp - mq).powi(2)) / vq - 1.0)
            })
            .sum()
    }
}
