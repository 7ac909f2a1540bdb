//! Density semantics of the IR.
//!
//! A well-typed program denotes the unnormalised density
//! `p(z) = prod_obs N(r_k; mean_k, var_k) * prod_i N(z_i; mean_i, var_i)`
//! where every mean and variance is a deterministic function of the latents
//! sampled before it. `N(a; b, c)` is the normal density with variance `c`
//! when `c > 0` and the constant 1 otherwise.

mod registry;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lang::{Command, Program, Var};

pub use registry::{mm, nl, rosenbrock, Procedure, ProcedureRegistry, RegistryError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(a; b, c)` with variance `c`, and exactly 1 when `c <= 0`.
pub fn gauss_density_term(a: f64, b: f64, c: f64) -> f64 {
    if c > 0.0 {
        (-(a - b).powi(2) / (2.0 * c)).exp() / (2.0 * PI * c).sqrt()
    } else {
        1.0
    }
}

/// Log of [`gauss_density_term`].
pub fn log_gauss_density_term(a: f64, b: f64, c: f64) -> f64 {
    if c > 0.0 {
        -0.5 * (LN_2PI + c.ln()) - (a - b).powi(2) / (2.0 * c)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DensityError {
    #[error("non-finite value produced by command {command}")]
    NonFinite { command: usize },
    #[error("expected {expected} latent values, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("procedure `{0}` is not registered")]
    UnknownProcedure(String),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SimulationError {
    #[error("command {command}: non-positive variance {variance} at runtime")]
    NonPositiveVariance { command: usize, variance: f64 },
    #[error("non-finite value produced by command {command}")]
    NonFinite { command: usize },
}

#[derive(Clone, Debug)]
enum Op {
    Sample { target: usize, mean: usize, var: usize, latent: usize },
    Observe { mean: usize, var: usize, value: f64 },
    IfGt { target: usize, lhs: usize, rhs: usize, then_: usize, else_: usize },
    Const { target: usize, value: f64 },
    Copy { target: usize, source: usize },
    Call { target: usize, a: usize, b: usize, eval: fn(f64, f64) -> f64, grad: fn(f64, f64) -> (f64, f64) },
}

/// A program compiled for repeated density evaluation: procedure names
/// are resolved and latents numbered in sampling order.
#[derive(Clone, Debug)]
pub struct Model {
    ops: Vec<Op>,
    var_count: usize,
    latent_count: usize,
    observe_count: usize,
}

impl Model {
    pub fn new(prog: &Program) -> Result<Model, DensityError> {
        Self::with_registry(prog, ProcedureRegistry::builtin())
    }

    pub fn with_registry(prog: &Program, registry: &ProcedureRegistry) -> Result<Model, DensityError> {
        let mut latent_of = vec![usize::MAX; prog.var_count()];
        for (i, v) in prog.latent_order().iter().enumerate() {
            latent_of[v.0] = i;
        }
        let ops = prog
            .commands()
            .iter()
            .map(|c| {
                Ok(match c {
                    Command::Sample { target, mean, var } => Op::Sample {
                        target: target.0,
                        mean: mean.0,
                        var: var.0,
                        latent: latent_of[target.0],
                    },
                    Command::Observe { mean, var, value } => Op::Observe {
                        mean: mean.0,
                        var: var.0,
                        value: *value,
                    },
                    Command::IfGt { target, lhs, rhs, then_, else_ } => Op::IfGt {
                        target: target.0,
                        lhs: lhs.0,
                        rhs: rhs.0,
                        then_: then_.0,
                        else_: else_.0,
                    },
                    Command::AssignConst { target, value } => Op::Const {
                        target: target.0,
                        value: *value,
                    },
                    Command::AssignVar { target, source } => Op::Copy {
                        target: target.0,
                        source: source.0,
                    },
                    Command::Call { target, proc, args } => {
                        let p = registry
                            .get(proc.as_str())
                            .ok_or_else(|| DensityError::UnknownProcedure(proc.0.clone()))?;
                        Op::Call {
                            target: target.0,
                            a: args[0].0,
                            b: args.get(1).unwrap_or(&Var(args[0].0)).0,
                            eval: p.eval,
                            grad: p.grad,
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>, DensityError>>()?;
        Ok(Model {
            ops,
            var_count: prog.var_count(),
            latent_count: prog.latent_count(),
            observe_count: prog.observe_count(),
        })
    }

    pub fn latent_count(&self) -> usize {
        self.latent_count
    }

    pub fn observe_count(&self) -> usize {
        self.observe_count
    }

    fn check_dim(&self, z: &[f64]) -> Result<(), DensityError> {
        if z.len() != self.latent_count {
            return Err(DensityError::Dimension {
                expected: self.latent_count,
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Forward pass: fills `vals` and returns (log prior, log likelihood).
    fn forward(&self, z: &[f64], vals: &mut [f64]) -> Result<(f64, f64), DensityError> {
        let (mut lp, mut ll) = (0.0, 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            let written = match *op {
                Op::Sample { target, mean, var, latent } => {
                    vals[target] = z[latent];
                    lp += log_gauss_density_term(z[latent], vals[mean], vals[var]);
                    Some(target)
                }
                Op::Observe { mean, var, value } => {
                    ll += log_gauss_density_term(value, vals[mean], vals[var]);
                    None
                }
                Op::IfGt { target, lhs, rhs, then_, else_ } => {
                    vals[target] = if vals[lhs] > vals[rhs] { vals[then_] } else { vals[else_] };
                    Some(target)
                }
                Op::Const { target, value } => {
                    vals[target] = value;
                    Some(target)
                }
                Op::Copy { target, source } => {
                    vals[target] = vals[source];
                    Some(target)
                }
                Op::Call { target, a, b, eval, .. } => {
                    vals[target] = eval(vals[a], vals[b]);
                    Some(target)
                }
            };
            if written.is_some_and(|t| !vals[t].is_finite()) || !(lp + ll).is_finite() {
                return Err(DensityError::NonFinite { command: i });
            }
        }
        Ok((lp, ll))
    }

    /// `log p(z)`: log prior plus log likelihood.
    pub fn log_density(&self, z: &[f64]) -> Result<f64, DensityError> {
        self.check_dim(z)?;
        let mut vals = vec![0.0; self.var_count];
        let (lp, ll) = self.forward(z, &mut vals)?;
        Ok(lp + ll)
    }

    /// Log of the observe factors only.
    pub fn log_likelihood(&self, z: &[f64]) -> Result<f64, DensityError> {
        self.check_dim(z)?;
        let mut vals = vec![0.0; self.var_count];
        Ok(self.forward(z, &mut vals)?.1)
    }

    /// Log of the sample factors only.
    pub fn log_prior(&self, z: &[f64]) -> Result<f64, DensityError> {
        self.check_dim(z)?;
        let mut vals = vec![0.0; self.var_count];
        Ok(self.forward(z, &mut vals)?.0)
    }

    /// Value of every program variable at `z`, indexed by slot.
    pub fn valuation(&self, z: &[f64]) -> Result<Vec<f64>, DensityError> {
        self.check_dim(z)?;
        let mut vals = vec![0.0; self.var_count];
        self.forward(z, &mut vals)?;
        Ok(vals)
    }

    /// `log p(z)` and its gradient. Branch conditions are treated as
    /// locally constant, so the gradient is the one of the active piece.
    pub fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
        self.check_dim(z)?;
        let mut vals = vec![0.0; self.var_count];
        let (lp, ll) = self.forward(z, &mut vals)?;
        let mut adj = vec![0.0; self.var_count];
        grad.iter_mut().for_each(|g| *g = 0.0);
        // d/dmean and d/dvar of log N(x; mean, var)
        let partials = |x: f64, mean: f64, var: f64| -> (f64, f64) {
            let d = x - mean;
            (d / var, -0.5 / var + d * d / (2.0 * var * var))
        };
        for op in self.ops.iter().rev() {
            match *op {
                Op::Sample { target, mean, var, latent } => {
                    let c = vals[var];
                    if c > 0.0 {
                        let (dm, dv) = partials(vals[target], vals[mean], c);
                        adj[target] -= dm;
                        adj[mean] += dm;
                        adj[var] += dv;
                    }
                    grad[latent] = adj[target];
                }
                Op::Observe { mean, var, value } => {
                    let c = vals[var];
                    if c > 0.0 {
                        let (dm, dv) = partials(value, vals[mean], c);
                        adj[mean] += dm;
                        adj[var] += dv;
                    }
                }
                Op::IfGt { target, lhs, rhs, then_, else_ } => {
                    let chosen = if vals[lhs] > vals[rhs] { then_ } else { else_ };
                    adj[chosen] += adj[target];
                }
                Op::Const { .. } => {}
                Op::Copy { target, source } => adj[source] += adj[target],
                Op::Call { target, a, b, grad: g, .. } => {
                    let (ga, gb) = g(vals[a], vals[b]);
                    let up = adj[target];
                    adj[a] += up * ga;
                    adj[b] += up * gb;
                }
            }
        }
        Ok(lp + ll)
    }

    pub fn grad_log_density(&self, z: &[f64]) -> Result<Vec<f64>, DensityError> {
        let mut g = vec![0.0; self.latent_count];
        self.log_density_and_grad(z, &mut g)?;
        Ok(g)
    }

    /// Ancestral simulation. Each latent is drawn by `draw(latent_index,
    /// mean, var, rng)`; each observe emits a draw from its likelihood.
    /// Returns latents and synthetic observations.
    pub fn simulate_with<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mut draw: impl FnMut(usize, f64, f64, &mut R) -> f64,
    ) -> Result<(Vec<f64>, Vec<f64>), SimulationError> {
        let mut vals = vec![0.0; self.var_count];
        let mut z = vec![0.0; self.latent_count];
        let mut obs = Vec::with_capacity(self.observe_count);
        for (i, op) in self.ops.iter().enumerate() {
            let written = match *op {
                Op::Sample { target, mean, var, latent } => {
                    let c = vals[var];
                    if c <= 0.0 {
                        return Err(SimulationError::NonPositiveVariance { command: i, variance: c });
                    }
                    z[latent] = draw(latent, vals[mean], c, rng);
                    vals[target] = z[latent];
                    Some(target)
                }
                Op::Observe { mean, var, .. } => {
                    let c = vals[var];
                    if c <= 0.0 {
                        return Err(SimulationError::NonPositiveVariance { command: i, variance: c });
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    obs.push(vals[mean] + c.sqrt() * e);
                    None
                }
                Op::IfGt { target, lhs, rhs, then_, else_ } => {
                    vals[target] = if vals[lhs] > vals[rhs] { vals[then_] } else { vals[else_] };
                    Some(target)
                }
                Op::Const { target, value } => {
                    vals[target] = value;
                    Some(target)
                }
                Op::Copy { target, source } => {
                    vals[target] = vals[source];
                    Some(target)
                }
                Op::Call { target, a, b, eval, .. } => {
                    vals[target] = eval(vals[a], vals[b]);
                    Some(target)
                }
            };
            if written.is_some_and(|t| !vals[t].is_finite()) {
                return Err(SimulationError::NonFinite { command: i });
            }
        }
        Ok((z, obs))
    }

    /// Plain ancestral simulation.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>), SimulationError> {
        self.simulate_with(rng, |_, mean, var, rng| {
            let e: f64 = rng.sample(StandardNormal);
            mean + var.sqrt() * e
        })
    }

    /// Draw latents from the prior into `z`, skipping observation draws.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) -> Result<(), SimulationError> {
        let mut vals = vec![0.0; self.var_count];
        for (i, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Sample { target, mean, var, latent } => {
                    let c = vals[var];
                    if c <= 0.0 {
                        return Err(SimulationError::NonPositiveVariance { command: i, variance: c });
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    z[latent] = vals[mean] + c.sqrt() * e;
                    vals[target] = z[latent];
                    if !z[latent].is_finite() {
                        return Err(SimulationError::NonFinite { command: i });
                    }
                }
                Op::Observe { .. } => {}
                Op::IfGt { target, lhs, rhs, then_, else_ } => {
                    vals[target] = if vals[lhs] > vals[rhs] { vals[then_] } else { vals[else_] };
                }
                Op::Const { target, value } => vals[target] = value,
                Op::Copy { target, source } => vals[target] = vals[source],
                Op::Call { target, a, b, eval, .. } => vals[target] = eval(vals[a], vals[b]),
            }
        }
        Ok(())
    }
}

/// `log p_C(z)` for a program.
pub fn log_density(prog: &Program, z: &[f64]) -> Result<f64, DensityError> {
    Model::new(prog)?.log_density(z)
}

pub fn grad_log_density(prog: &Program, z: &[f64]) -> Result<Vec<f64>, DensityError> {
    Model::new(prog)?.grad_log_density(z)
}

/// Forward-simulate latents and synthetic observations.
pub fn simulate<R: Rng + ?Sized>(prog: &Program, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>), SimulationError> {
    Model::new(prog)
        .expect("builtin procedures resolve for parsed programs")
        .simulate(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lint {
    pub command: usize,
    pub message: String,
}

/// Warn about `sample`/`obs` commands whose variance is a statically known
/// constant `<= 0`, which the density semantics turns into a factor of 1.
pub fn lint(prog: &Program) -> Vec<Lint> {
    let mut known: Vec<Option<f64>> = vec![None; prog.var_count()];
    let mut out = Vec::new();
    for (i, c) in prog.commands().iter().enumerate() {
        match c {
            Command::AssignConst { target, value } => known[target.0] = Some(*value),
            Command::AssignVar { target, source } => known[target.0] = known[source.0],
            Command::Sample { var, .. } | Command::Observe { var, .. } => {
                if let Some(x) = known[var.0] {
                    if x <= 0.0 {
                        out.push(Lint {
                            command: i,
                            message: format!(
                                "variance `{}` is the constant {x}; this factor is treated as 1",
                                prog.name(*var)
                            ),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests;
