//! The spatial query language: parsing, printing, validation and compilation.

pub mod ast;
pub mod compile;
pub mod parser;
pub mod print;
pub mod shipped;
pub mod validate;

pub use ast::{Atom, Builtin, FactPredicate, Formula, Program, QueryDef, RuleDef, Span, Term};
pub use compile::{
    compile_query, inline_formula, CompileError, CompiledQuery, Guard, GuardExpr, NegatedPlan, Plan, Slot, Step,
};
pub use parser::{parse_program, ParseError};
pub use print::{print_formula, print_program};
pub use validate::{validate, Violation, ViolationKind};
