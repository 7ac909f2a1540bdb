//! Random program classes.
//!
//! A [`ClassSpec`] is data: a parameterised program text, a table of
//! uniform parameter distributions, and an optional clipped-uniform rule
//! used for the latents when simulating the observations. [`generate`]
//! instantiates one program; [`generate_corpus`] builds seeded train and
//! test splits.

mod classes;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::lang::{canonicalise, fmt_real, parse, ParseError, Program};
use crate::semantics::{DensityError, Model, SimulationError};

/// Class names known to [`class_specs`].
pub const CLASS_NAMES: [&str; 10] = [
    "gauss", "hierl", "hierd", "cluster", "milky", "milkyo", "rb", "ext1", "ext2", "mulmod",
];

/// `theta ~ U(lo, hi)`, injected as `theta^2` when `squared` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub lo: f64,
    pub hi: f64,
    pub squared: bool,
}

impl ParamSpec {
    /// Draw from the open interval `(lo, hi)`.
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let x = rng.random_range(self.lo..self.hi);
            if x > self.lo {
                return x;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class: String,
    /// Model type within the class, 1-based. ext1 type (i, j) is `4(i-1)+j`.
    pub kind: Option<usize>,
    /// Dependency-graph index, used for hold-out splits.
    pub graph: Option<usize>,
    pub params: Vec<ParamSpec>,
    pub template: String,
    /// When set, latents are simulated from `U(mean -+ k sqrt(var))`
    /// instead of their normal prior while producing observations.
    pub override_halfwidth: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ProgenError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no type {kind}")]
    UnknownKind { class: String, kind: usize },
    #[error("template does not parse: {0}")]
    Template(#[from] ParseError),
    #[error("bad template placeholder `{0}`")]
    Placeholder(String),
    #[error("template references parameter {0}, which the table lacks")]
    MissingParam(usize),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("train and test splits share type {class}/{kind:?}")]
    OverlappingSplits { class: String, kind: Option<usize> },
    #[error("the training split needs at least one program")]
    EmptySplit,
    #[error("no class specs given")]
    NoSpecs,
}

impl ClassSpec {
    /// Short label, e.g. `gauss` or `ext1.5`.
    pub fn label(&self) -> String {
        match self.kind {
            Some(k) => format!("{}.{k}", self.class),
            None => self.class.clone(),
        }
    }

    /// Template text with the given constants and every observation set to 0.
    pub fn instantiate(&self, values: &[f64]) -> Result<String, ProgenError> {
        let mut out = String::with_capacity(self.template.len() + 16 * values.len());
        let mut rest = self.template.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find('}')
                .map(|c| open + c)
                .ok_or_else(|| ProgenError::Placeholder(rest[open..].to_string()))?;
            let key = &rest[open + 1..close];
            match key.strip_prefix('t').and_then(|k| k.parse::<usize>().ok()) {
                _ if key == "o" => out.push('0'),
                Some(k) => {
                    let v = values.get(k.wrapping_sub(1)).ok_or(ProgenError::MissingParam(k))?;
                    out.push_str(&fmt_real(*v));
                }
                None => return Err(ProgenError::Placeholder(key.to_string())),
            }
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One class/type by name. `kind` is required for ext1, ext2 and mulmod.
pub fn class_spec(class: &str, kind: Option<usize>) -> Result<ClassSpec, ProgenError> {
    let specs = class_specs(class)?;
    match kind {
        None if specs.len() == 1 => Ok(specs.into_iter().next().unwrap()),
        None => Err(ProgenError::UnknownKind { class: class.into(), kind: 0 }),
        Some(k) => specs
            .into_iter()
            .find(|s| s.kind == Some(k))
            .ok_or(ProgenError::UnknownKind { class: class.into(), kind: k }),
    }
}

/// Every type of a class.
pub fn class_specs(class: &str) -> Result<Vec<ClassSpec>, ProgenError> {
    Ok(match class {
        "gauss" => vec![classes::gauss()],
        "hierl" => vec![classes::hierl()],
        "hierd" => vec![classes::hierd()],
        "cluster" => vec![classes::cluster()],
        "milky" => vec![classes::milky()],
        "milkyo" => vec![classes::milkyo()],
        "rb" => vec![classes::rb()],
        "ext1" => (1..=3).flat_map(|i| (1..=4).map(move |j| classes::ext1(i, j))).collect(),
        "ext2" => (1..=5).map(classes::ext2).collect(),
        "mulmod" => (1..=3).map(classes::mulmod).collect(),
        _ => return Err(ProgenError::UnknownClass(class.into())),
    })
}

/// ext1 split with dependency graph `j` held out: training types use the
/// other graphs, test types use graph `j`.
pub fn ext1_holdout(j: usize) -> (Vec<ClassSpec>, Vec<ClassSpec>) {
    let all = class_specs("ext1").expect("built-in class");
    all.into_iter().partition(|s| s.graph != Some(j))
}

/// A generated program with the values used to build it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProgram {
    #[serde(skip)]
    pub program: Option<Program>,
    pub text: String,
    pub class: String,
    pub kind: Option<usize>,
    pub seed: u64,
    /// Raw parameter draws, before squaring.
    pub theta: Vec<f64>,
    /// Latents used to simulate the observations. Debug output only.
    pub latents: Vec<f64>,
    pub observations: Vec<f64>,
}

impl GeneratedProgram {
    /// The canonical program. Re-parsed text is canonicalised again so
    /// that variable slots follow the canonical order.
    pub fn program(&self) -> Program {
        match &self.program {
            Some(p) => p.clone(),
            None => canonicalise(&parse(&self.text).expect("generated text parses")),
        }
    }
}

/// Instantiate one program of `spec`.
pub fn generate(spec: &ClassSpec, seed: u64) -> Result<GeneratedProgram, ProgenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = spec.params.iter().map(|p| p.draw(&mut rng)).collect();
    let values: Vec<f64> = theta
        .iter()
        .zip(&spec.params)
        .map(|(t, p)| if p.squared { t * t } else { *t })
        .collect();
    let skeleton = parse(&spec.instantiate(&values)?)?;
    let model = Model::new(&skeleton)?;
    let (latents, observations) = match spec.override_halfwidth {
        Some(k) => model.simulate_with(&mut rng, |_, mean, var, rng| {
            let w = k * var.sqrt();
            rng.random_range(mean - w..=mean + w)
        })?,
        None => model.simulate(&mut rng)?,
    };
    let program = canonicalise(&skeleton.with_obs_values(&observations));
    Ok(GeneratedProgram {
        text: program.to_string(),
        program: Some(program),
        class: spec.class.clone(),
        kind: spec.kind,
        seed,
        theta,
        latents,
        observations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Train/test programs of a corpus, before any reference samples exist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSkeleton {
    pub train: Vec<GeneratedProgram>,
    pub test: Vec<GeneratedProgram>,
}

/// Generate `train_count` programs from `train_specs` and `test_count` from
/// `test_specs`, choosing a type uniformly per program. With `exclusive`
/// set the two spec lists must not share a type. Program `i` of the
/// training split uses seed `derive_seed(seed, i)`, test programs continue
/// the index after the training ones. The test split may be empty.
pub fn generate_corpus(
    train_specs: &[ClassSpec],
    test_specs: &[ClassSpec],
    counts: (usize, usize),
    exclusive: bool,
    seed: u64,
) -> Result<CorpusSkeleton, ProgenError> {
    if train_specs.is_empty() || test_specs.is_empty() {
        return Err(ProgenError::NoSpecs);
    }
    if counts.0 == 0 {
        return Err(ProgenError::EmptySplit);
    }
    if exclusive {
        if let Some(s) = test_specs.iter().find(|t| train_specs.iter().any(|s| s.label() == t.label())) {
            return Err(ProgenError::OverlappingSplits { class: s.class.clone(), kind: s.kind });
        }
    }
    let mut seen = HashSet::new();
    let mut index = 0u64;
    let mut draw = |specs: &[ClassSpec], count: usize| -> Result<Vec<GeneratedProgram>, ProgenError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let s = derive_seed(seed, index);
            index += 1;
            let pick = ChaCha8Rng::seed_from_u64(s).random_range(0..specs.len());
            let g = generate(&specs[pick], derive_seed(s, 1))?;
            // identical texts would leak test programs into training
            if seen.insert(g.text.clone()) {
                out.push(g);
            }
        }
        Ok(out)
    };
    let train = draw(train_specs, counts.0)?;
    let test = draw(test_specs, counts.1)?;
    Ok(CorpusSkeleton { train, test })
}
