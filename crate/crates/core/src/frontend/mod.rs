//! MiniC front end: tokenizer, parser and symbol resolution.

pub mod ast;
pub mod error;
pub mod lexer;
pub mod parser;
pub mod symbols;

use std::path::Path;
use std::{fs, io};

pub use ast::{AstNode, DeclInfo, ForParts, NodeId, NodeKind, SourceLoc, Span, TranslationUnit};
pub use error::{SymbolError, SyntaxError};
pub use symbols::{Symbol, SymbolId, SymbolKind, SymbolScope, SymbolSite, SymbolTable};

/// Parses one MiniC file. Ids of the returned unit start at 0.
pub fn parse_translation_unit(source: &str, filename: &str) -> Result<TranslationUnit, SyntaxError> {
    if filename.is_empty() {
        return Err(SyntaxError::new("<unnamed>", 1, 1, "filename must not be empty"));
    }
    let (unit, mut errors) = parser::parse_lenient(source, filename);
    match errors.is_empty() {
        true => Ok(unit),
        false => Err(errors.swap_remove(0)),
    }
}

/// Like [`parse_translation_unit`] but accepts raw bytes, rejecting invalid UTF-8.
pub fn parse_bytes(bytes: &[u8], filename: &str) -> Result<TranslationUnit, SyntaxError> {
    let source = decode(bytes, filename)?;
    parse_translation_unit(source, filename)
}

fn decode<'b>(bytes: &'b [u8], filename: &str) -> Result<&'b str, SyntaxError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let prefix = &bytes[..e.valid_up_to()];
        let line = prefix.iter().filter(|b| **b == b'\n').count() as u32 + 1;
        let col = prefix.iter().rev().take_while(|b| **b != b'\n').count() as u32 + 1;
        SyntaxError::new(filename, line, col, "invalid UTF-8")
    })
}

/// Build symbol tables for a set of units with disjoint id ranges.
pub fn build_symbol_tables(units: &[TranslationUnit]) -> Result<SymbolTable, SymbolError> {
    SymbolTable::build(units)
}

/// A set of parsed files sharing one node-id space.
#[derive(Clone, Debug, Default)]
pub struct Project {
    pub units: Vec<TranslationUnit>,
    /// Per-file syntax errors; the affected declarations are absent from `units`.
    pub errors: Vec<SyntaxError>,
}

impl Project {
    /// Parses `(path, bytes)` pairs in parallel. Units are ordered by path
    /// and renumbered so ids are unique across the project.
    pub fn parse(mut files: Vec<(String, Vec<u8>)>) -> Project {
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files.dedup_by(|a, b| a.0 == b.0);
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(files.len().max(1));
        let chunk = files.len().div_ceil(workers).max(1);
        let parsed: Vec<(TranslationUnit, Vec<SyntaxError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = files
                .chunks(chunk)
                .map(|batch| {
                    s.spawn(move || {
                        batch
                            .iter()
                            .map(|(path, bytes)| match decode(bytes, path) {
                                Ok(text) => parser::parse_lenient(text, path),
                                Err(e) => (parser::parse_lenient("", path).0, vec![e]),
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("parser thread panicked")).collect()
        });
        let mut project = Project::default();
        let mut next = 0u32;
        for (mut unit, errors) in parsed {
            unit.rebase(next);
            next += unit.node_count() as u32;
            project.units.push(unit);
            project.errors.extend(errors);
        }
        project
    }

    /// Reads every `.c`/`.h` file below `root`, keyed by `/`-separated relative path.
    pub fn load_dir(root: &Path) -> io::Result<Project> {
        Ok(Project::parse(collect_sources(root)?))
    }

    pub fn unit(&self, file: &str) -> Option<&TranslationUnit> {
        self.units.iter().find(|u| u.file == file)
    }

    pub fn unit_of(&self, id: NodeId) -> &TranslationUnit {
        let idx = self.units.partition_point(|u| u.root.0 <= id.0);
        &self.units[idx - 1]
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        self.unit_of(id).node(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &AstNode> {
        self.units.iter().flat_map(|u| u.nodes.iter())
    }

    pub fn node_count(&self) -> usize {
        self.units.iter().map(|u| u.node_count()).sum()
    }
}

pub fn collect_sources(root: &Path) -> io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "h")) {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.push((key, fs::read(&path)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests;
