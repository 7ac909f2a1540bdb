//! The white-box inference interpreter.
//!
//! A program is scanned once. Every atomic command updates an internal
//! state `h` (initially zero) through the network for its command type;
//! observe commands additionally multiply the running marginal-likelihood
//! estimate `Z` (initially 1) by a positive factor. The final state is
//! decoded into a mean-field Gaussian over the latents.
//!
//! Network inputs are one-hot encodings of the command's variables (in
//! argument order, target first), followed by any real literal, followed
//! by `h`. A unary procedure call pads its missing second argument with
//! an all-zero block.

mod posterior;

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{read_checkpoint, write_checkpoint, CheckpointError, Mlp, ParamSet, Tape, TapeError, Tensor};
use crate::lang::{Command, Program, Var};
use crate::samplers::{snis_proposal, ImportanceError, WeightedSampleSet};
use crate::semantics::{DensityError, Model, ProcedureRegistry};

pub use posterior::MeanFieldPosterior;

/// Bound applied to log-variances and to the raw integrator output before
/// exponentiation.
pub const LOG_CLAMP: f64 = 30.0;

/// How real literals (constants and observed values) are presented to the
/// networks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    /// Fed unchanged.
    #[default]
    Raw,
    /// `sign(r) * ln(1 + |r|)`.
    Symlog,
}

impl InputScaling {
    pub fn apply(self, r: f64) -> f64 {
        match self {
            InputScaling::Raw => r,
            InputScaling::Symlog => r.signum() * r.abs().ln_1p(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    /// Maximum number of program variables (one-hot width).
    pub m: usize,
    /// Number of latent variables decoded.
    pub n: usize,
    /// State dimension.
    pub s: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub scaling: InputScaling,
    /// Procedures that get their own network.
    pub procedures: Vec<String>,
}

impl BankConfig {
    /// State size 10, hidden width 10, decoder hidden width 50, one network
    /// per builtin procedure.
    pub fn new(m: usize, n: usize) -> Self {
        BankConfig {
            m,
            n,
            s: 10,
            hidden: 10,
            decoder_hidden: 50,
            scaling: InputScaling::Raw,
            procedures: ProcedureRegistry::builtin().names().map(String::from).collect(),
        }
    }

    pub fn with_scaling(mut self, scaling: InputScaling) -> Self {
        self.scaling = scaling;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum InferError {
    #[error("variable `{name}` has index {index}, outside the bank width m = {m}")]
    VarOutOfRange { name: String, index: usize, m: usize },
    #[error("program has {found} latents but the bank decodes {n}")]
    TooManyLatents { found: usize, n: usize },
    #[error("no network for procedure `{0}`")]
    UnknownProcedure(String),
    #[error("non-finite value in inference")]
    NonFinite,
    #[error(transparent)]
    Tape(#[from] TapeError),
}

#[derive(Debug, Error)]
pub enum BankLoadError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint manifest is missing or has a malformed `bank` entry: {0}")]
    Manifest(String),
    #[error("checkpoint is missing network `{0}`")]
    MissingNetwork(String),
}

/// Which network a command is routed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    Sample,
    Observe,
    If,
    AssignConst,
    AssignVar,
    Proc(usize),
}

#[derive(Clone, Debug, PartialEq)]
struct Nets {
    sa: Mlp,
    ob: Mlp,
    iff: Mlp,
    assign_const: Mlp,
    assign_var: Mlp,
    procs: Vec<Mlp>,
    de: Mlp,
    intg: Mlp,
}

/// All networks of the interpreter plus their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBank {
    pub config: BankConfig,
    pub params: ParamSet,
    nets: Nets,
}

/// Counters filled by one inference run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InferStats {
    pub state_updates: usize,
    pub decoder_calls: usize,
    pub integrator_calls: usize,
}

impl InferStats {
    /// Forward calls of state networks plus the decoder.
    pub fn network_calls(&self) -> usize {
        self.state_updates + self.decoder_calls
    }
}

/// Counts complete passes over a program made by a test-time pipeline.
#[derive(Debug, Default)]
pub struct ScanCounter(AtomicU64);

impl ScanCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Taped result of [`NetworkBank::infer_taped`].
#[derive(Clone, Copy, Debug)]
pub struct TapedInference {
    pub means: Tensor,
    pub vars: Tensor,
    pub log_z: Tensor,
    /// Number of latents of the program (the decoder may emit more).
    pub latents: usize,
}

const NET_SA: &str = "nn_sa";
const NET_OB: &str = "nn_ob";
const NET_IF: &str = "nn_if";
const NET_AC: &str = "nn_assign_const";
const NET_AV: &str = "nn_assign_var";
const NET_DE: &str = "nn_de";
const NET_INTG: &str = "nn_intg";

fn proc_net_name(p: &str) -> String {
    format!("nn_p_{p}")
}

impl NetworkBank {
    pub fn new(config: BankConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let (m, s, h) = (config.m, config.s, config.hidden);
        let sa = Mlp::new(&mut params, NET_SA, 3 * m + s, h, s, &mut rng);
        let ob = Mlp::new(&mut params, NET_OB, 2 * m + 1 + s, h, s, &mut rng);
        let iff = Mlp::new(&mut params, NET_IF, 5 * m + s, h, s, &mut rng);
        let assign_const = Mlp::new(&mut params, NET_AC, m + 1 + s, h, s, &mut rng);
        let assign_var = Mlp::new(&mut params, NET_AV, 2 * m + s, h, s, &mut rng);
        let procs = config
            .procedures
            .iter()
            .map(|p| Mlp::new(&mut params, &proc_net_name(p), 3 * m + s, h, s, &mut rng))
            .collect();
        let de = Mlp::new(&mut params, NET_DE, s, config.decoder_hidden, 2 * config.n, &mut rng);
        let intg = Mlp::new(&mut params, NET_INTG, 2 * m + 1 + s, h, 1, &mut rng);
        NetworkBank {
            config,
            params,
            nets: Nets {
                sa,
                ob,
                iff,
                assign_const,
                assign_var,
                procs,
                de,
                intg,
            },
        }
    }

    fn net(&self, kind: NetKind) -> &Mlp {
        match kind {
            NetKind::Sample => &self.nets.sa,
            NetKind::Observe => &self.nets.ob,
            NetKind::If => &self.nets.iff,
            NetKind::AssignConst => &self.nets.assign_const,
            NetKind::AssignVar => &self.nets.assign_var,
            NetKind::Proc(i) => &self.nets.procs[i],
        }
    }

    pub fn decoder(&self) -> &Mlp {
        &self.nets.de
    }

    pub fn integrator(&self) -> &Mlp {
        &self.nets.intg
    }

    fn check_program(&self, prog: &Program) -> Result<(), InferError> {
        if prog.latent_count() > self.config.n {
            return Err(InferError::TooManyLatents {
                found: prog.latent_count(),
                n: self.config.n,
            });
        }
        if prog.var_count() > self.config.m {
            let v = Var(self.config.m);
            return Err(InferError::VarOutOfRange {
                name: prog.name(v).to_string(),
                index: v.0,
                m: self.config.m,
            });
        }
        Ok(())
    }

    /// Network choice and the constant (non-state) part of its input.
    pub fn encode(&self, cmd: &Command) -> Result<(NetKind, Vec<f64>), InferError> {
        let m = self.config.m;
        let mut x = Vec::with_capacity(5 * m + 1);
        let hot = |x: &mut Vec<f64>, v: Option<Var>| -> Result<(), InferError> {
            let start = x.len();
            x.resize(start + m, 0.0);
            if let Some(v) = v {
                if v.0 >= m {
                    return Err(InferError::VarOutOfRange {
                        name: format!("#{}", v.0),
                        index: v.0,
                        m,
                    });
                }
                x[start + v.0] = 1.0;
            }
            Ok(())
        };
        let scale = |r: f64| self.config.scaling.apply(r);
        let kind = match cmd {
            Command::Sample { target, mean, var } => {
                for v in [target, mean, var] {
                    hot(&mut x, Some(*v))?;
                }
                NetKind::Sample
            }
            Command::Observe { mean, var, value } => {
                hot(&mut x, Some(*mean))?;
                hot(&mut x, Some(*var))?;
                x.push(scale(*value));
                NetKind::Observe
            }
            Command::IfGt { target, lhs, rhs, then_, else_ } => {
                for v in [target, lhs, rhs, then_, else_] {
                    hot(&mut x, Some(*v))?;
                }
                NetKind::If
            }
            Command::AssignConst { target, value } => {
                hot(&mut x, Some(*target))?;
                x.push(scale(*value));
                NetKind::AssignConst
            }
            Command::AssignVar { target, source } => {
                hot(&mut x, Some(*target))?;
                hot(&mut x, Some(*source))?;
                NetKind::AssignVar
            }
            Command::Call { target, proc, args } => {
                let i = self
                    .config
                    .procedures
                    .iter()
                    .position(|p| p == proc.as_str())
                    .ok_or_else(|| InferError::UnknownProcedure(proc.0.clone()))?;
                hot(&mut x, Some(*target))?;
                hot(&mut x, Some(args[0]))?;
                hot(&mut x, args.get(1).copied())?;
                NetKind::Proc(i)
            }
        };
        Ok((kind, x))
    }

    fn join(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + h.len());
        v.extend_from_slice(x);
        v.extend_from_slice(h);
        v
    }

    /// One interpreter step on `(h, log Z)`.
    pub fn step(&self, cmd: &Command, h: &[f64], log_z: f64) -> Result<(Vec<f64>, f64), InferError> {
        let (kind, x) = self.encode(cmd)?;
        let input = Self::join(&x, h);
        let h2 = self.net(kind).eval(&self.params, &input);
        let log_z2 = if kind == NetKind::Observe {
            log_z + self.nets.intg.eval(&self.params, &input)[0].clamp(-LOG_CLAMP, LOG_CLAMP)
        } else {
            log_z
        };
        Ok((h2, log_z2))
    }

    /// Run the interpreter; returns the posterior, `log Z` and call counts.
    pub fn infer_with_stats(&self, prog: &Program) -> Result<(MeanFieldPosterior, f64, InferStats), InferError> {
        self.check_program(prog)?;
        let mut stats = InferStats::default();
        let mut h = vec![0.0; self.config.s];
        let mut log_z = 0.0;
        for cmd in prog.commands() {
            let (h2, lz) = self.step(cmd, &h, log_z)?;
            stats.state_updates += 1;
            if matches!(cmd, Command::Observe { .. }) {
                stats.integrator_calls += 1;
            }
            h = h2;
            log_z = lz;
        }
        let post = self.decode(&h, prog.latent_count());
        stats.decoder_calls += 1;
        if !log_z.is_finite() || post.means.iter().chain(&post.vars).any(|x| !x.is_finite()) {
            return Err(InferError::NonFinite);
        }
        Ok((post, log_z, stats))
    }

    /// Posterior and `log Z`.
    pub fn infer(&self, prog: &Program) -> Result<(MeanFieldPosterior, f64), InferError> {
        self.infer_with_stats(prog).map(|(p, lz, _)| (p, lz))
    }

    /// Decode a state into the first `latents` marginals.
    pub fn decode(&self, h: &[f64], latents: usize) -> MeanFieldPosterior {
        let out = self.nets.de.eval(&self.params, h);
        let n = self.config.n;
        MeanFieldPosterior {
            means: out[..latents].to_vec(),
            vars: out[n..n + latents]
                .iter()
                .map(|l| l.clamp(-LOG_CLAMP, LOG_CLAMP).exp())
                .collect(),
        }
    }

    /// The same computation as [`NetworkBank::infer`], recorded on `tape`
    /// (which must be built over `self.params`).
    pub fn infer_taped(&self, tape: &mut Tape<'_>, prog: &Program) -> Result<TapedInference, InferError> {
        self.check_program(prog)?;
        let mut h = tape.input(vec![0.0; self.config.s]);
        let mut log_z = tape.input(vec![0.0]);
        for cmd in prog.commands() {
            let (kind, x) = self.encode(cmd)?;
            let xt = tape.input(x);
            let input = tape.concat(&[xt, h]);
            if kind == NetKind::Observe {
                let raw = self.nets.intg.forward(tape, input)?;
                let c = tape.clamp(raw, -LOG_CLAMP, LOG_CLAMP);
                log_z = tape.add(log_z, c)?;
            }
            h = self.net(kind).forward(tape, input)?;
        }
        let out = self.nets.de.forward(tape, h)?;
        let k = prog.latent_count();
        let means = tape.slice(out, 0, k);
        let lv = tape.slice(out, self.config.n, k);
        let lv = tape.clamp(lv, -LOG_CLAMP, LOG_CLAMP);
        let vars = tape.exp(lv);
        Ok(TapedInference { means, vars, log_z, latents: k })
    }

    /// Save parameters plus configuration; `extra` is merged into the
    /// manifest's `meta` object.
    pub fn save<W: Write>(&self, w: W, extra: serde_json::Value) -> Result<(), CheckpointError> {
        let mut meta = serde_json::json!({ "bank": self.config });
        if let (Some(obj), serde_json::Value::Object(more)) = (meta.as_object_mut(), extra) {
            for (k, v) in more {
                obj.insert(k, v);
            }
        }
        write_checkpoint(w, &self.params, meta)
    }

    pub fn load<R: Read>(r: R) -> Result<(NetworkBank, serde_json::Value), BankLoadError> {
        let (params, meta) = read_checkpoint(r)?;
        let config: BankConfig = meta
            .get("bank")
            .cloned()
            .ok_or_else(|| BankLoadError::Manifest("missing".into()))
            .and_then(|b| serde_json::from_value(b).map_err(|e| BankLoadError::Manifest(e.to_string())))?;
        let bind = |name: &str| Mlp::bind(&params, name).ok_or_else(|| BankLoadError::MissingNetwork(name.to_string()));
        let nets = Nets {
            sa: bind(NET_SA)?,
            ob: bind(NET_OB)?,
            iff: bind(NET_IF)?,
            assign_const: bind(NET_AC)?,
            assign_var: bind(NET_AV)?,
            procs: config
                .procedures
                .iter()
                .map(|p| bind(&proc_net_name(p)))
                .collect::<Result<_, _>>()?,
            de: bind(NET_DE)?,
            intg: bind(NET_INTG)?,
        };
        Ok((NetworkBank { config, params, nets }, meta))
    }
}

/// `sum_i log N(z_i; mean_i, var_i)` on a tape.
pub fn log_q_taped(tape: &mut Tape<'_>, inf: &TapedInference, z: &[f64]) -> Result<Tensor, TapeError> {
    let zt = tape.input(z.to_vec());
    let l = tape.gauss_log_pdf(zt, inf.means, inf.vars)?;
    Ok(tape.sum(l))
}

#[derive(Debug, Error)]
pub enum IsPredError {
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
}

/// Importance sampling with the bank's prediction as proposal (IS-pred).
///
/// The program is scanned twice: once by the interpreter to predict the
/// proposal and once when it is compiled into the density the sampler
/// evaluates. Each scan is recorded on `scans`.
pub fn is_pred(
    bank: &NetworkBank,
    prog: &Program,
    m: usize,
    seed: u64,
    scans: &ScanCounter,
) -> Result<(MeanFieldPosterior, WeightedSampleSet), IsPredError> {
    let (q, _) = bank.infer(prog)?;
    scans.record();
    let model = Model::new(prog)?;
    scans.record();
    let ws = snis_proposal(&model, &q, m, seed)?;
    Ok((q, ws))
}

#[cfg(test)]
mod tests;
