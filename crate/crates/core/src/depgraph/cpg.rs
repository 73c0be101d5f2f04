//! Labelled property graph over AST nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{NodeId, NodeKind, Project};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeLabel {
    #[serde(rename = "AST")]
    Ast,
    #[serde(rename = "CFG")]
    Cfg,
    C,
    D,
    F,
    S,
    V,
}

impl EdgeLabel {
    pub const ALL: [EdgeLabel; 7] = [EdgeLabel::Ast, EdgeLabel::Cfg, EdgeLabel::C, EdgeLabel::D, EdgeLabel::F, EdgeLabel::S, EdgeLabel::V];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeLabel::Ast => "AST",
            EdgeLabel::Cfg => "CFG",
            EdgeLabel::C => "C",
            EdgeLabel::D => "D",
            EdgeLabel::F => "F",
            EdgeLabel::S => "S",
            EdgeLabel::V => "V",
        }
    }

    /// Labels added on top of a plain code property graph.
    pub fn is_extension(self) -> bool {
        matches!(self, EdgeLabel::F | EdgeLabel::S | EdgeLabel::V)
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeLabel::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| format!("unknown edge label `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: EdgeLabel,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, label: EdgeLabel) -> Self {
        Edge { src, dst, label }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeProps {
    pub id: NodeId,
    pub kind: NodeKind,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub code: String,
    /// Name of the enclosing function; `None` at file scope.
    pub function: Option<String>,
}

impl NodeProps {
    pub fn end_line(&self) -> u32 {
        self.line + self.code.bytes().filter(|b| *b == b'\n').count() as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    LineNumber,
    ColumnNumber,
    Filename,
    Code,
    Function,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropertyValue<'a> {
    Int(u32),
    Str(&'a str),
    Null,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CpgError {
    #[error("{label} edge {src:?} -> {dst:?} has an endpoint that is not a node")]
    DanglingEdge { src: NodeId, dst: NodeId, label: EdgeLabel },
    #[error("duplicate node id {0:?}")]
    DuplicateNode(NodeId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cpg {
    nodes: BTreeMap<NodeId, NodeProps>,
    edges: BTreeSet<Edge>,
    incoming: BTreeMap<NodeId, Vec<(NodeId, EdgeLabel)>>,
    outgoing: BTreeMap<NodeId, Vec<(NodeId, EdgeLabel)>>,
}

impl Cpg {
    pub fn add_node(&mut self, props: NodeProps) -> Result<(), CpgError> {
        if self.nodes.contains_key(&props.id) {
            return Err(CpgError::DuplicateNode(props.id));
        }
        self.nodes.insert(props.id, props);
        Ok(())
    }

    /// Inserts an edge; returns false when it was already present.
    pub fn add_edge(&mut self, edge: Edge) -> Result<bool, CpgError> {
        if !self.nodes.contains_key(&edge.src) || !self.nodes.contains_key(&edge.dst) {
            return Err(CpgError::DanglingEdge { src: edge.src, dst: edge.dst, label: edge.label });
        }
        if !self.edges.insert(edge) {
            return Ok(false);
        }
        self.outgoing.entry(edge.src).or_default().push((edge.dst, edge.label));
        self.incoming.entry(edge.dst).or_default().push((edge.src, edge.label));
        Ok(true)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeProps> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeProps> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn edges_with(&self, label: EdgeLabel) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.label == label)
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, label: EdgeLabel) -> bool {
        self.edges.contains(&Edge { src, dst, label })
    }

    pub fn incoming(&self, id: NodeId) -> &[(NodeId, EdgeLabel)] {
        self.incoming.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outgoing(&self, id: NodeId) -> &[(NodeId, EdgeLabel)] {
        self.outgoing.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn property(&self, id: NodeId, key: Property) -> Option<PropertyValue<'_>> {
        let n = self.nodes.get(&id)?;
        Some(match key {
            Property::LineNumber => PropertyValue::Int(n.line),
            Property::ColumnNumber => PropertyValue::Int(n.column),
            Property::Filename => PropertyValue::Str(&n.file),
            Property::Code => PropertyValue::Str(&n.code),
            Property::Function => n.function.as_deref().map_or(PropertyValue::Null, PropertyValue::Str),
        })
    }

    /// Sorted, de-duplicated file paths.
    pub fn files(&self) -> BTreeSet<&str> {
        self.nodes.values().map(|n| n.file.as_str()).collect()
    }
}

/// Node properties for every AST node of a project.
pub fn project_nodes(project: &Project) -> Vec<NodeProps> {
    let mut out = Vec::with_capacity(project.node_count());
    for unit in &project.units {
        for n in &unit.nodes {
            let function = match n.kind {
                NodeKind::FunctionDef => n.name.clone(),
                _ => n.enclosing_function.and_then(|f| unit.node(f).name.clone()),
            };
            out.push(NodeProps {
                id: n.id,
                kind: n.kind,
                file: n.loc.file.clone(),
                line: n.loc.line,
                column: n.loc.column,
                code: n.code.clone(),
                function,
            });
        }
    }
    out
}
