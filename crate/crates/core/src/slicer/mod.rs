//! Line-level program slicing over the eCPG.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{Cpg, EdgeLabel};
use crate::frontend::{NodeId, NodeKind, Project};

/// A source position a slice is computed from; no column means the whole line.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlicingCriterion {
    pub file: String,
    pub line: u32,
    pub column: Option<u32>,
}

impl SlicingCriterion {
    pub fn new(file: impl Into<String>, line: u32, column: Option<u32>) -> Self {
        SlicingCriterion { file: file.into(), line, column }
    }
}

impl fmt::Display for SlicingCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "{}:{}:{}", self.file, self.line, c),
            None => write!(f, "{}:{}", self.file, self.line),
        }
    }
}

impl FromStr for SlicingCriterion {
    type Err = String;

    /// Parses `file:line` or `file:line:column`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.parse::<u32>().ok().filter(|n| *n >= 1);
        let (rest, last) = s.rsplit_once(':').ok_or_else(|| format!("expected FILE:LINE[:COLUMN], got `{s}`"))?;
        let last = num(last).ok_or_else(|| format!("expected FILE:LINE[:COLUMN], got `{s}`"))?;
        if let Some((file, line)) = rest.rsplit_once(':') {
            if let (false, Some(line)) = (file.is_empty(), num(line)) {
                return Ok(SlicingCriterion::new(file, line, Some(last)));
            }
        }
        if rest.is_empty() {
            return Err(format!("expected FILE:LINE[:COLUMN], got `{s}`"));
        }
        Ok(SlicingCriterion::new(rest, last, None))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Backward,
    Forward,
    Both,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backward" => Ok(Direction::Backward),
            "forward" => Ok(Direction::Forward),
            "both" => Ok(Direction::Both),
            _ => Err(format!("unknown direction `{s}` (backward, forward, both)")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Backward => "backward",
            Direction::Forward => "forward",
            Direction::Both => "both",
        })
    }
}

/// Labels followed by default: the dependence labels, not AST or CFG.
pub const DEFAULT_LABELS: [EdgeLabel; 5] = [EdgeLabel::C, EdgeLabel::D, EdgeLabel::F, EdgeLabel::S, EdgeLabel::V];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("criterion {0} is outside every known file and function")]
    CriterionOutOfRange(SlicingCriterion),
    #[error("source file `{0}` is unavailable")]
    SourceUnavailable(String),
    #[error("line {line} is past the end of `{path}`")]
    LineOutOfRange { path: String, line: u32 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Resolution {
    pub nodes: BTreeSet<NodeId>,
    pub fallback_used: bool,
}

/// Maps criteria to graph nodes. A criterion that matches no node falls
/// back to every node of the function enclosing its line.
pub fn resolve_criteria(graph: &Cpg, criteria: &[SlicingCriterion]) -> Result<Resolution, SliceError> {
    let mut out = Resolution::default();
    for c in criteria {
        let in_file: Vec<_> = graph.nodes().filter(|n| n.file == c.file).collect();
        if in_file.is_empty() {
            return Err(SliceError::CriterionOutOfRange(c.clone()));
        }
        let hits: Vec<NodeId> = in_file
            .iter()
            .filter(|n| n.kind != NodeKind::TranslationUnit && n.line == c.line)
            .filter(|n| c.column.is_none_or(|col| n.column == col))
            .map(|n| n.id)
            .collect();
        if !hits.is_empty() {
            out.nodes.extend(hits);
            continue;
        }
        let enclosing = in_file
            .iter()
            .filter(|n| n.kind == NodeKind::FunctionDef && n.line <= c.line && c.line <= n.end_line())
            .min_by_key(|n| n.end_line() - n.line);
        match enclosing {
            Some(f) => {
                let (lo, hi) = (f.line, f.end_line());
                out.nodes.extend(in_file.iter().filter(|n| n.function == f.function && lo <= n.line && n.line <= hi).map(|n| n.id));
                out.fallback_used = true;
            }
            None => {
                let last_line = in_file.iter().map(|n| n.end_line()).max().unwrap_or(0);
                if c.line == 0 || c.line > last_line {
                    return Err(SliceError::CriterionOutOfRange(c.clone()));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SliceStats {
    /// Worklist pops; never exceeds the node count.
    pub pops: usize,
}

/// Closure of `seeds` under edges whose label is in `labels`: incoming edges
/// for backward, outgoing for forward, both for `Both`.
pub fn slice_nodes(graph: &Cpg, seeds: &BTreeSet<NodeId>, direction: Direction, labels: &[EdgeLabel]) -> BTreeSet<NodeId> {
    slice_nodes_within(graph, seeds, direction, labels, None).0
}

/// Like [`slice_nodes`], but never enters nodes outside `files`.
pub fn slice_nodes_within(
    graph: &Cpg,
    seeds: &BTreeSet<NodeId>,
    direction: Direction,
    labels: &[EdgeLabel],
    files: Option<&BTreeSet<String>>,
) -> (BTreeSet<NodeId>, SliceStats) {
    let allowed = |id: NodeId| match (files, graph.node(id)) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(f), Some(n)) => f.contains(&n.file),
    };
    let mut visited: BTreeSet<NodeId> = seeds.iter().copied().filter(|s| graph.node(*s).is_some()).collect();
    let mut work: VecDeque<NodeId> = visited.iter().copied().collect();
    let mut stats = SliceStats::default();
    while let Some(n) = work.pop_front() {
        stats.pops += 1;
        let backward = matches!(direction, Direction::Backward | Direction::Both).then(|| graph.incoming(n));
        let forward = matches!(direction, Direction::Forward | Direction::Both).then(|| graph.outgoing(n));
        for (next, label) in backward.into_iter().chain(forward).flatten() {
            if labels.contains(label) && allowed(*next) && visited.insert(*next) {
                work.push_back(*next);
            }
        }
    }
    (visited, stats)
}

/// Source text lookup by project-relative path.
pub trait SourceText {
    fn text(&self, path: &str) -> Option<Cow<'_, str>>;
}

/// Reads sources from a project root on disk.
#[derive(Clone, Debug)]
pub struct SourceDir(pub PathBuf);

impl SourceText for SourceDir {
    fn text(&self, path: &str) -> Option<Cow<'_, str>> {
        let full = self.0.join(Path::new(path));
        std::fs::read(full).ok().map(|b| Cow::Owned(String::from_utf8_lossy(&b).into_owned()))
    }
}

impl SourceText for Project {
    fn text(&self, path: &str) -> Option<Cow<'_, str>> {
        self.unit(path).map(|u| Cow::Borrowed(u.source.as_str()))
    }
}

impl SourceText for BTreeMap<String, String> {
    fn text(&self, path: &str) -> Option<Cow<'_, str>> {
        self.get(path).map(|s| Cow::Borrowed(s.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceLine {
    pub n: u32,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSlice {
    pub path: String,
    pub lines: Vec<SliceLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub criteria: Vec<SlicingCriterion>,
    pub direction: Direction,
    pub fallback_used: bool,
    pub files: Vec<FileSlice>,
    #[serde(skip)]
    pub node_ids: BTreeSet<NodeId>,
}

impl Slice {
    pub fn line_numbers(&self, path: &str) -> Vec<u32> {
        self.files.iter().filter(|f| f.path == path).flat_map(|f| f.lines.iter().map(|l| l.n)).collect()
    }

    pub fn line_count(&self) -> usize {
        self.files.iter().map(|f| f.lines.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slices always serialize")
    }
}

/// Maps `nodes` back to verbatim source lines, grouped per file in path
/// order with ascending line numbers.
pub fn reconstruct_source_slice(
    graph: &Cpg,
    nodes: &BTreeSet<NodeId>,
    criteria: &[SlicingCriterion],
    direction: Direction,
    fallback_used: bool,
    sources: &dyn SourceText,
) -> Result<Slice, SliceError> {
    let mut per_file: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for id in nodes {
        let Some(n) = graph.node(*id) else { continue };
        if n.kind == NodeKind::TranslationUnit {
            continue;
        }
        per_file.entry(n.file.as_str()).or_default().insert(n.line);
    }
    let mut files = Vec::with_capacity(per_file.len());
    for (path, lines) in per_file {
        let text = sources.text(path).ok_or_else(|| SliceError::SourceUnavailable(path.to_string()))?;
        let all: Vec<&str> = text.split('\n').collect();
        let mut out = Vec::with_capacity(lines.len());
        for n in lines {
            let line = all.get(n as usize - 1).ok_or_else(|| SliceError::LineOutOfRange { path: path.to_string(), line: n })?;
            out.push(SliceLine { n, text: line.to_string() });
        }
        files.push(FileSlice { path: path.to_string(), lines: out });
    }
    Ok(Slice { criteria: criteria.to_vec(), direction, fallback_used, files, node_ids: nodes.clone() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceOptions {
    pub direction: Direction,
    pub labels: Vec<EdgeLabel>,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions { direction: Direction::Backward, labels: DEFAULT_LABELS.to_vec() }
    }
}

/// Resolve, traverse and reconstruct in one step. When `files` is given the
/// traversal stays inside those files.
pub fn slice(
    graph: &Cpg,
    criteria: &[SlicingCriterion],
    opts: &SliceOptions,
    files: Option<&BTreeSet<String>>,
    sources: &dyn SourceText,
) -> Result<Slice, SliceError> {
    let seeds = resolve_criteria(graph, criteria)?;
    let (nodes, _) = slice_nodes_within(graph, &seeds.nodes, opts.direction, &opts.labels, files);
    reconstruct_source_slice(graph, &nodes, criteria, opts.direction, seeds.fallback_used, sources)
}

#[cfg(test)]
mod tests;
