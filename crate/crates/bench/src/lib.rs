//! Fixtures shared by the benchmarks.

use wppl::progen::{class_spec, generate};
use wppl::whitebox::BankConfig;
use wppl::{NetworkBank, Program};

/// A generated program of `class` (first type) with a fixed seed.
pub fn program(class: &str, seed: u64) -> Program {
    let spec = class_spec(class, Some(1)).or_else(|_| class_spec(class, None)).expect("known class");
    generate(&spec, seed).expect("generator succeeds").program()
}

/// An untrained bank wide enough for `prog`.
pub fn bank_for(prog: &Program) -> NetworkBank {
    NetworkBank::new(BankConfig::new(prog.var_count(), prog.latent_count()), 0)
}
