use std::f64::consts::PI;
use std::sync::OnceLock;

/// A registered pure procedure of one or two real arguments. Unary
/// procedures ignore the second argument and report a zero partial for it.
#[derive(Clone, Debug)]
pub struct Procedure {
    pub name: String,
    pub arity: usize,
    pub eval: fn(f64, f64) -> f64,
    /// Partial derivatives with respect to both arguments.
    pub grad: fn(f64, f64) -> (f64, f64),
}

/// Name → procedure table. Names are unique.
#[derive(Clone, Debug)]
pub struct ProcedureRegistry {
    procs: Vec<Procedure>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("procedure `{0}` is already registered")]
    Duplicate(String),
    #[error("procedure arity must be 1 or 2, got {0}")]
    BadArity(usize),
}

pub fn nl(x: f64) -> f64 {
    50.0 / PI * (x / 10.0).atan()
}

pub fn mm(x: f64) -> f64 {
    100.0 * x.powi(3) / (10.0 + x.powi(4))
}

pub fn rosenbrock(a: f64, b: f64) -> f64 {
    0.05 * (a - 1.0).powi(2) + 0.005 * (b - a * a).powi(2)
}

fn nl_grad(x: f64, _: f64) -> (f64, f64) {
    (5.0 / (PI * (1.0 + x * x / 100.0)), 0.0)
}

fn mm_grad(x: f64, _: f64) -> (f64, f64) {
    let d = 10.0 + x.powi(4);
    (100.0 * (30.0 * x * x - x.powi(6)) / (d * d), 0.0)
}

fn rosenbrock_grad(a: f64, b: f64) -> (f64, f64) {
    let r = b - a * a;
    (0.1 * (a - 1.0) - 0.02 * a * r, 0.01 * r)
}

impl ProcedureRegistry {
    pub fn empty() -> Self {
        ProcedureRegistry { procs: Vec::new() }
    }

    /// `add`, `sub`, `mul`, `rosenbrock`, `nl`, `mm`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("add", 2, |a, b| a + b, |_, _| (1.0, 1.0)).unwrap();
        r.register("sub", 2, |a, b| a - b, |_, _| (1.0, -1.0)).unwrap();
        r.register("mul", 2, |a, b| a * b, |a, b| (b, a)).unwrap();
        r.register("rosenbrock", 2, rosenbrock, rosenbrock_grad).unwrap();
        r.register("nl", 1, |x, _| nl(x), nl_grad).unwrap();
        r.register("mm", 1, |x, _| mm(x), mm_grad).unwrap();
        r
    }

    /// Shared instance of [`ProcedureRegistry::with_builtins`].
    pub fn builtin() -> &'static ProcedureRegistry {
        static REG: OnceLock<ProcedureRegistry> = OnceLock::new();
        REG.get_or_init(Self::with_builtins)
    }

    pub fn register(
        &mut self,
        name: &str,
        arity: usize,
        eval: fn(f64, f64) -> f64,
        grad: fn(f64, f64) -> (f64, f64),
    ) -> Result<(), RegistryError> {
        if !(1..=2).contains(&arity) {
            return Err(RegistryError::BadArity(arity));
        }
        if self.get(name).is_some() {
            return Err(RegistryError::Duplicate(name.to_string()));
        }
        self.procs.push(Procedure {
            name: name.to_string(),
            arity,
            eval,
            grad,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Procedure> {
        self.procs.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.procs.iter().map(|p| p.name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Procedure> {
        self.procs.iter()
    }
}
