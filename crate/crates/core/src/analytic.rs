//! Exact posteriors for linear-Gaussian programs.
//!
//! A program is linear-Gaussian when every variance is a constant, every
//! call is `add`/`sub` or a `mul` with one constant side, and there is no
//! `if`. Every variable is then an affine function of the latents and the
//! joint density is a Gaussian in `z` times a constant.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lang::{Command, Program};
use crate::whitebox::MeanFieldPosterior;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AnalyticError {
    #[error("command {command} is not linear-Gaussian: {reason}")]
    NotLinear { command: usize, reason: &'static str },
    #[error("posterior precision is not positive definite")]
    Improper,
}

/// `coef . z + offset`
#[derive(Clone, Debug)]
struct Affine {
    coef: Vec<f64>,
    offset: f64,
}

impl Affine {
    fn constant(n: usize, c: f64) -> Self {
        Affine { coef: vec![0.0; n], offset: c }
    }

    fn as_const(&self) -> Option<f64> {
        self.coef.iter().all(|&c| c == 0.0).then_some(self.offset)
    }

    fn combine(&self, other: &Affine, s: f64) -> Affine {
        Affine {
            coef: self.coef.iter().zip(&other.coef).map(|(a, b)| a + s * b).collect(),
            offset: self.offset + s * other.offset,
        }
    }

    fn scale(&self, s: f64) -> Affine {
        Affine {
            coef: self.coef.iter().map(|a| a * s).collect(),
            offset: self.offset * s,
        }
    }
}

/// Full Gaussian posterior over the latents plus the log marginal likelihood.
#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_evidence: f64,
}

impl GaussianPosterior {
    pub fn evidence(&self) -> f64 {
        self.log_evidence.exp()
    }

    /// Per-latent marginals.
    pub fn marginals(&self) -> MeanFieldPosterior {
        MeanFieldPosterior::new(self.mean.iter().copied().collect(), self.cov.diagonal().iter().copied().collect())
    }
}

/// Solve a linear-Gaussian program exactly.
pub fn gaussian_posterior(prog: &Program) -> Result<GaussianPosterior, AnalyticError> {
    let n = prog.latent_count();
    let mut latent_of = vec![None; prog.var_count()];
    for (i, v) in prog.latent_order().iter().enumerate() {
        latent_of[v.index()] = Some(i);
    }
    let mut vals: Vec<Option<Affine>> = vec![None; prog.var_count()];
    let get = |vals: &[Option<Affine>], v: crate::lang::Var| vals[v.index()].clone().expect("type-checked");
    // each factor contributes a residual r(z) = a.z + b with variance c
    let mut factors: Vec<(Affine, f64)> = Vec::new();
    for (i, cmd) in prog.commands().iter().enumerate() {
        let const_var = |vals: &[Option<Affine>], v| {
            get(vals, v).as_const().ok_or(AnalyticError::NotLinear {
                command: i,
                reason: "variance depends on a latent",
            })
        };
        match cmd {
            Command::Sample { target, mean, var } => {
                let c = const_var(&vals, *var)?;
                if c <= 0.0 {
                    return Err(AnalyticError::Improper);
                }
                let mut me = Affine::constant(n, 0.0);
                me.coef[latent_of[target.index()].unwrap()] = 1.0;
                factors.push((get(&vals, *mean).combine(&me, -1.0), c));
                vals[target.index()] = Some(me);
            }
            Command::Observe { mean, var, value } => {
                let c = const_var(&vals, *var)?;
                if c > 0.0 {
                    let mut r = get(&vals, *mean).scale(-1.0);
                    r.offset += value;
                    factors.push((r, c));
                }
            }
            Command::IfGt { .. } => {
                return Err(AnalyticError::NotLinear { command: i, reason: "branch" });
            }
            Command::AssignConst { target, value } => vals[target.index()] = Some(Affine::constant(n, *value)),
            Command::AssignVar { target, source } => vals[target.index()] = Some(get(&vals, *source)),
            Command::Call { target, proc, args } => {
                let a = get(&vals, args[0]);
                let b = args.get(1).map(|v| get(&vals, *v));
                let out = match (proc.as_str(), b) {
                    ("add", Some(b)) => a.combine(&b, 1.0),
                    ("sub", Some(b)) => a.combine(&b, -1.0),
                    ("mul", Some(b)) => match (a.as_const(), b.as_const()) {
                        (Some(k), _) => b.scale(k),
                        (_, Some(k)) => a.scale(k),
                        _ => {
                            return Err(AnalyticError::NotLinear {
                                command: i,
                                reason: "product of two latent-dependent values",
                            })
                        }
                    },
                    _ => {
                        return Err(AnalyticError::NotLinear {
                            command: i,
                            reason: "non-linear procedure",
                        })
                    }
                };
                vals[target.index()] = Some(out);
            }
        }
    }

    let mut prec = DMatrix::<f64>::zeros(n, n);
    let mut eta = DVector::<f64>::zeros(n);
    let mut log_k = 0.0;
    for (r, c) in &factors {
        let a = DVector::from_column_slice(&r.coef);
        prec += &a * a.transpose() / *c;
        eta -= &a * (r.offset / c);
        log_k += -0.5 * (2.0 * std::f64::consts::PI * c).ln() - r.offset * r.offset / (2.0 * c);
    }
    let chol = prec.cholesky().ok_or(AnalyticError::Improper)?;
    let mean = chol.solve(&eta);
    let cov = chol.inverse();
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_evidence =
        log_k + 0.5 * eta.dot(&mean) + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
    Ok(GaussianPosterior { mean, cov, log_evidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn conjugate_gauss_closed_form() {
        let p = parse(
            "m := 1.5; v := 4; c1 := 2; c2 := -1; vx := 0.5
             z1 ~ normal(m, v); z2 := z1 * c1; z3 := z2 + c2
             obs(normal(z3, vx), 4.2)",
        )
        .unwrap();
        let g = gaussian_posterior(&p).unwrap();
        let var = 1.0 / (1.0 / 4.0 + 4.0 / 0.5);
        let mean = var * (1.5 / 4.0 + 2.0 * 5.2 / 0.5);
        let s = 4.0 * 4.0 + 0.5;
        let log_n = -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (4.2f64 - 2.0).powi(2) / (2.0 * s);
        assert!((g.mean[0] - mean).abs() < 1e-12);
        assert!((g.cov[(0, 0)] - var).abs() < 1e-12);
        assert!((g.log_evidence - log_n).abs() < 1e-12);
    }

    #[test]
    fn prior_only_has_unit_evidence() {
        let p = parse("a := 2; b := 3; z ~ normal(a, b); w ~ normal(z, b)").unwrap();
        let g = gaussian_posterior(&p).unwrap();
        assert!(g.log_evidence.abs() < 1e-12);
        assert!((g.mean[1] - 2.0).abs() < 1e-12);
        assert!((g.cov[(1, 1)] - 6.0).abs() < 1e-12);
        assert!((g.cov[(0, 1)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonlinear_programs() {
        let p = parse("a := 0; b := 1; z ~ normal(a, b); y := z * z; obs(normal(y, b), 1)").unwrap();
        assert!(matches!(gaussian_posterior(&p), Err(AnalyticError::NotLinear { command: 3, .. })));
        let p = parse("a := 0; z ~ normal(a, a)").unwrap();
        assert_eq!(gaussian_posterior(&p).unwrap_err(), AnalyticError::Improper);
    }
}
