//! Typing judgements for the IR.
//!
//! A type is a triple `(S, V, alpha)`: the latent variables sampled so far
//! (in order), the variables assigned by non-sample commands, and the
//! observed values so far. Each atomic command extends the triple or is
//! rejected; a program is the left-to-right fold starting from `([], {}, [])`.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::lang::{Command, Program, Var};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypingState {
    /// S: latent variables in sampling order.
    pub latents: Vec<Var>,
    /// V: variables assigned by non-sample commands.
    pub assigned: HashSet<Var>,
    /// alpha: observed values in order.
    pub observations: Vec<f64>,
}

impl TypingState {
    pub fn new() -> Self {
        Self::default()
    }

    /// `v ∈ set(S) ∪ V`
    pub fn in_scope(&self, v: Var) -> bool {
        self.assigned.contains(&v) || self.latents.contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TypeError {
    #[error("command {command}: variable `{var}` used before it is defined")]
    UseBeforeDefine { command: usize, var: String },
    #[error("command {command}: variable `{var}` is assigned more than once")]
    Reassignment { command: usize, var: String },
}

impl TypeError {
    pub fn command(&self) -> usize {
        match self {
            TypeError::UseBeforeDefine { command, .. } | TypeError::Reassignment { command, .. } => {
                *command
            }
        }
    }
}

fn name_of(names: &[String], v: Var) -> String {
    names.get(v.0).cloned().unwrap_or_else(|| format!("#{}", v.0))
}

/// Apply the rule for one atomic command. `index` is only used for
/// diagnostics.
pub fn check_command(
    mut state: TypingState,
    index: usize,
    cmd: &Command,
    names: &[String],
) -> Result<TypingState, TypeError> {
    // Operands first, so `x := x` style commands report the use.
    for v in cmd.operands() {
        if !state.in_scope(v) {
            return Err(TypeError::UseBeforeDefine {
                command: index,
                var: name_of(names, v),
            });
        }
    }
    if let Some(t) = cmd.target() {
        if state.in_scope(t) {
            return Err(TypeError::Reassignment {
                command: index,
                var: name_of(names, t),
            });
        }
    }
    match cmd {
        Command::Sample { target, .. } => state.latents.push(*target),
        Command::Observe { value, .. } => state.observations.push(*value),
        Command::IfGt { target, .. }
        | Command::AssignConst { target, .. }
        | Command::AssignVar { target, .. }
        | Command::Call { target, .. } => {
            state.assigned.insert(*target);
        }
    }
    Ok(state)
}

pub fn check_commands(commands: &[Command], names: &[String]) -> Result<TypingState, TypeError> {
    commands
        .iter()
        .enumerate()
        .try_fold(TypingState::new(), |st, (i, c)| check_command(st, i, c, names))
}

/// The full `(S, V, alpha)` triple of an already-built program.
pub fn check_program(prog: &Program) -> Result<TypingState, TypeError> {
    check_commands(prog.commands(), prog.names())
}

/// Human-readable rendering of a triple, with `V` sorted by slot.
pub struct DisplayTriple<'a> {
    pub state: &'a TypingState,
    pub names: &'a [String],
}

impl fmt::Display for DisplayTriple<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.state.latents.iter().map(|v| name_of(self.names, *v)).collect();
        let mut assigned: Vec<Var> = self.state.assigned.iter().copied().collect();
        assigned.sort();
        let v: Vec<String> = assigned.iter().map(|v| name_of(self.names, *v)).collect();
        let a: Vec<String> = self
            .state
            .observations
            .iter()
            .map(|x| crate::lang::fmt_real(*x))
            .collect();
        write!(
            f,
            "S = [{}]\nV = {{{}}}\nalpha = [{}]",
            s.join(", "),
            v.join(", "),
            a.join(", ")
        )
    }
}
