use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::SourceLoc;

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{file}:{line}:{column}: syntax error: {message}")]
pub struct SyntaxError {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl SyntaxError {
    pub fn new(file: &str, line: u32, column: u32, message: impl Into<String>) -> Self {
        SyntaxError { file: file.to_string(), line, column, message: message.into() }
    }

    pub fn loc(&self) -> SourceLoc {
        SourceLoc::new(&self.file, self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SymbolError {
    #[error("duplicate definition of `{symbol}` at {second} (first defined at {first})")]
    DuplicateDefinition { symbol: String, first: SourceLoc, second: SourceLoc },
}
