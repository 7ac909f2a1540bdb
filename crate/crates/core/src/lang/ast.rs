use std::fmt;

use serde::{Deserialize, Serialize};

use crate::typeck::{self, TypeError, TypingState};

/// A program variable, identified by its slot in the owning program's
/// symbol table. After canonicalisation the slot is the variable's
/// canonical index and drives its one-hot encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var(pub usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Name of a registered deterministic procedure.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcName(pub String);

impl ProcName {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProcName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The six atomic commands of the IR.
///
/// Distributions use the (mean, variance) parameterisation throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Command {
    /// `target ~ normal(mean, var)`
    Sample { target: Var, mean: Var, var: Var },
    /// `obs(normal(mean, var), value)`
    Observe { mean: Var, var: Var, value: f64 },
    /// `target := if (lhs > rhs) then_ else else_`
    IfGt {
        target: Var,
        lhs: Var,
        rhs: Var,
        then_: Var,
        else_: Var,
    },
    /// `target := value`
    AssignConst { target: Var, value: f64 },
    /// `target := source`
    AssignVar { target: Var, source: Var },
    /// `target := proc(args..)`, one or two arguments.
    Call {
        target: Var,
        proc: ProcName,
        args: Vec<Var>,
    },
}

impl Command {
    /// Variable written by this command, if any.
    pub fn target(&self) -> Option<Var> {
        match self {
            Command::Sample { target, .. }
            | Command::IfGt { target, .. }
            | Command::AssignConst { target, .. }
            | Command::AssignVar { target, .. }
            | Command::Call { target, .. } => Some(*target),
            Command::Observe { .. } => None,
        }
    }

    /// Variables read by this command, in argument order.
    pub fn operands(&self) -> Vec<Var> {
        match self {
            Command::Sample { mean, var, .. } | Command::Observe { mean, var, .. } => {
                vec![*mean, *var]
            }
            Command::IfGt {
                lhs,
                rhs,
                then_,
                else_,
                ..
            } => vec![*lhs, *rhs, *then_, *else_],
            Command::AssignConst { .. } => vec![],
            Command::AssignVar { source, .. } => vec![*source],
            Command::Call { args, .. } => args.clone(),
        }
    }

    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Sample { .. } => CommandKind::Sample,
            Command::Observe { .. } => CommandKind::Observe,
            Command::IfGt { .. } => CommandKind::IfGt,
            Command::AssignConst { .. } => CommandKind::AssignConst,
            Command::AssignVar { .. } => CommandKind::AssignVar,
            Command::Call { .. } => CommandKind::Call,
        }
    }

    /// Apply `f` to every variable mentioned by the command.
    pub fn map_vars(&self, mut f: impl FnMut(Var) -> Var) -> Command {
        match self {
            Command::Sample { target, mean, var } => Command::Sample {
                target: f(*target),
                mean: f(*mean),
                var: f(*var),
            },
            Command::Observe { mean, var, value } => Command::Observe {
                mean: f(*mean),
                var: f(*var),
                value: *value,
            },
            Command::IfGt {
                target,
                lhs,
                rhs,
                then_,
                else_,
            } => Command::IfGt {
                target: f(*target),
                lhs: f(*lhs),
                rhs: f(*rhs),
                then_: f(*then_),
                else_: f(*else_),
            },
            Command::AssignConst { target, value } => Command::AssignConst {
                target: f(*target),
                value: *value,
            },
            Command::AssignVar { target, source } => Command::AssignVar {
                target: f(*target),
                source: f(*source),
            },
            Command::Call { target, proc, args } => Command::Call {
                target: f(*target),
                proc: proc.clone(),
                args: args.iter().map(|a| f(*a)).collect(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CommandKind {
    Sample,
    Observe,
    IfGt,
    AssignConst,
    AssignVar,
    Call,
}

/// A type-checked program.
///
/// `latent_order` and `obs_values` are always the projections computed by
/// the type checker; the only way to build a `Program` is through
/// [`Program::new`], which runs it.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    commands: Vec<Command>,
    names: Vec<String>,
    latent_order: Vec<Var>,
    obs_values: Vec<f64>,
}

impl Program {
    pub fn new(commands: Vec<Command>, names: Vec<String>) -> Result<Program, TypeError> {
        let state = typeck::check_commands(&commands, &names)?;
        let TypingState {
            latents,
            observations,
            ..
        } = state;
        Ok(Program {
            commands,
            names,
            latent_order: latents,
            obs_values: observations,
        })
    }

    pub fn commands(&self) -> &[Command] {
        &self.commands
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    /// Look a variable up by name.
    pub fn var(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(Var)
    }

    /// Latent variables in sampling order.
    pub fn latent_order(&self) -> &[Var] {
        &self.latent_order
    }

    /// Observed values in command order.
    pub fn obs_values(&self) -> &[f64] {
        &self.obs_values
    }

    /// m: number of distinct variables.
    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    /// n: number of latent variables.
    pub fn latent_count(&self) -> usize {
        self.latent_order.len()
    }

    pub fn observe_count(&self) -> usize {
        self.obs_values.len()
    }

    /// Same program with the observed constants replaced, in command order.
    ///
    /// Panics if `values` does not have one entry per `obs` command.
    pub fn with_obs_values(&self, values: &[f64]) -> Program {
        assert_eq!(values.len(), self.obs_values.len(), "observation count mismatch");
        let mut it = values.iter();
        let commands = self
            .commands
            .iter()
            .map(|c| match c {
                Command::Observe { mean, var, .. } => Command::Observe {
                    mean: *mean,
                    var: *var,
                    value: *it.next().unwrap(),
                },
                other => other.clone(),
            })
            .collect();
        Program {
            commands,
            names: self.names.clone(),
            latent_order: self.latent_order.clone(),
            obs_values: values.to_vec(),
        }
    }

    /// Rename every variable; `perm[old] = new`. Names move with their slots.
    pub fn permute_vars(&self, perm: &[usize]) -> Program {
        assert_eq!(perm.len(), self.names.len());
        let mut names = vec![String::new(); self.names.len()];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = self.names[old].clone();
        }
        let commands = self
            .commands
            .iter()
            .map(|c| c.map_vars(|v| Var(perm[v.0])))
            .collect();
        Program::new(commands, names).expect("renaming preserves well-typedness")
    }

    /// Replace variable names without touching slots.
    pub fn with_names(&self, names: Vec<String>) -> Program {
        assert_eq!(names.len(), self.names.len());
        Program {
            names,
            ..self.clone()
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.commands {
            let n = |v: &Var| self.names[v.0].as_str();
            match c {
                Command::Sample { target, mean, var } => {
                    writeln!(f, "{} ~ normal({}, {})", n(target), n(mean), n(var))?
                }
                Command::Observe { mean, var, value } => {
                    writeln!(f, "obs(normal({}, {}), {})", n(mean), n(var), fmt_real(*value))?
                }
                Command::IfGt {
                    target,
                    lhs,
                    rhs,
                    then_,
                    else_,
                } => writeln!(
                    f,
                    "{} := if ({} > {}) {} else {}",
                    n(target),
                    n(lhs),
                    n(rhs),
                    n(then_),
                    n(else_)
                )?,
                Command::AssignConst { target, value } => {
                    writeln!(f, "{} := {}", n(target), fmt_real(*value))?
                }
                Command::AssignVar { target, source } => {
                    writeln!(f, "{} := {}", n(target), n(source))?
                }
                Command::Call { target, proc, args } => {
                    let infix = match proc.as_str() {
                        "add" => Some('+'),
                        "sub" => Some('-'),
                        "mul" => Some('*'),
                        _ => None,
                    };
                    match (infix, args.as_slice()) {
                        (Some(op), [a, b]) => {
                            writeln!(f, "{} := {} {} {}", n(target), n(a), op, n(b))?
                        }
                        _ => {
                            let list: Vec<&str> = args.iter().map(n).collect();
                            writeln!(f, "{} := {}({})", n(target), proc, list.join(", "))?
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}
