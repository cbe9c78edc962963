//! Surface syntax: lexing, parsing, preprocessing into the uniquely named
//! original syntax, and the `ann` / `inv` transformations.

pub mod lexer;
pub mod parser;
mod preprocess;
mod transform;

use crate::lang::{IdStack, Program, Site};
use std::collections::BTreeMap;
use std::fmt;

pub use parser::{parse, parse_with_stacks, RawDecl, RawKind, RawProg, RawStmt};
pub use preprocess::{globals, preprocess, preprocess_with_stacks};
pub use transform::{ann, inv, inv_stmt};

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct FrontendError {
    pub pos: Option<Pos>,
    pub msg: String,
}

impl FrontendError {
    pub fn new(pos: Pos, msg: impl Into<String>) -> Self {
        FrontendError { pos: Some(pos), msg: msg.into() }
    }

    pub fn nowhere(msg: impl Into<String>) -> Self {
        FrontendError { pos: None, msg: msg.into() }
    }
}

impl fmt::Display for FrontendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{p}: {}", self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

/// Parse and preprocess in one go.
pub fn parse_program(source: &str) -> Result<Program, FrontendError> {
    preprocess(&parse(source)?)
}

/// Parse a program written with identifier stacks after its statements,
/// e.g. `X = 1 ⟨4,0⟩`. Returns the program and the stacks by site.
pub fn parse_annotated(source: &str) -> Result<(Program, BTreeMap<Site, IdStack>), FrontendError> {
    preprocess_with_stacks(&parse_with_stacks(source)?)
}
