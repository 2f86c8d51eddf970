//! Text format for scenarios (`.scn`) and partition priors (`.prior`).
//!
//! ```text
//! scenario   := "scenario" STRING decl*
//! decl       := factor | init | step | halt
//! factor     := "factor" IDENT "{" IDENT ("," IDENT)* "}"
//! init       := "init" "=" ketExpr
//! step       := "step" IDENT "observer" STRING ["mergeable" "=" opExpr] "{" branch+ "}"
//! branch     := "branch" IDENT ":" opExpr
//! halt       := "halt" "{" IDENT "=" IDENT ("," IDENT "=" IDENT)* "}"
//! ketExpr    := term (("+"|"-") term)*
//! term       := [amp "*"] ket
//! ket        := "|" IDENT ("," IDENT)* ">"
//! opExpr     := opTerm (("+"|"-") opTerm)*
//! opTerm     := [amp "*"] "|" IDENT ("," IDENT)* ">" "<" IDENT ("," IDENT)* "|"
//! amp        := number | "sqrt" "(" rational ")" | "1/sqrt" "(" rational ")"
//!             | amp "*" amp | "-" amp | "i" "*" amp
//! ```
//!
//! `#` starts a comment running to the end of the line. A leading `-` on the
//! first term of an expression is accepted as a term sign.
//!
//! Operator terms whose bra names fewer factors than are currently active
//! are factor-local: they are expanded to the joint space with the identity
//! on the factors they do not mention.

mod emit;
mod lexer;
mod parser;
mod prior;

use std::fmt;

use thiserror::Error;

pub use emit::{emit_prior, emit_scenario};
pub use parser::parse_scenario;
pub use prior::{parse_prior, PriorFileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourcePosition {
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
}

impl fmt::Display for SourcePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// First failure encountered while reading a file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{position}: {found}, expected {expected}")]
pub struct ParseError {
    pub position: SourcePosition,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(position: SourcePosition, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError {
            position,
            expected: expected.into(),
            found: found.into(),
        }
    }
}
