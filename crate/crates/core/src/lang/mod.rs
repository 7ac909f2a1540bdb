//! Abstract syntax, text syntax, and program structure of the IR.

mod ast;
pub mod fixtures;
mod graph;
mod parse;

pub use ast::{fmt_real, Command, CommandKind, ProcName, Program, Var};
pub use graph::{
    canonical_order, canonicalise, dependency_graph, one_hot, DepNode, DependencyGraph,
    OneHotError,
};
pub use parse::{parse, parse_untyped, parse_untyped_with, parse_with, ParseError, ParseErrorKind};
