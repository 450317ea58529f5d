//! An entailment prover for symbolic-heap separation logic with user-defined
//! inductive predicates and linear arithmetic, together with a bounded-model
//! oracle for cross-checking verdicts.

pub mod ast;
pub mod canon;
pub mod engine;
pub mod kinds;
pub mod parser;
pub mod printer;
pub mod pure;
pub mod report;
pub mod runner;
pub mod semantics;
