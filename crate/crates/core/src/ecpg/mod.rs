//! Extended code property graph: the base graph plus call (F),
//! structural (S) and variable (V) dependence edges.

pub mod json;

use std::collections::BTreeSet;
use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::depgraph::{self, Cpg, Edge, EdgeLabel, FunctionGraphs};
use crate::frontend::{AstNode, NodeId, NodeKind, Project, SymbolKind, SymbolTable};

pub use json::{export_ecpg, import_ecpg, SchemaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Syntax,
    DuplicateDefinition,
    UnresolvedCall,
    ArityMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl Diagnostic {
    fn at(kind: DiagnosticKind, node: &AstNode, message: String) -> Self {
        Diagnostic { kind, file: node.loc.file.clone(), line: node.loc.line, column: node.loc.column, message }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Ecpg {
    graph: Cpg,
    diagnostics: Vec<Diagnostic>,
}

impl Ecpg {
    /// Wraps a graph that already carries every label.
    pub fn from_graph(graph: Cpg) -> Self {
        Ecpg { graph, diagnostics: Vec::new() }
    }

    pub fn graph(&self) -> &Cpg {
        &self.graph
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn base_edges(&self) -> impl Iterator<Item = &Edge> {
        self.graph.edges().iter().filter(|e| !e.label.is_extension())
    }

    pub fn extra_edges(&self) -> impl Iterator<Item = &Edge> {
        self.graph.edges().iter().filter(|e| e.label.is_extension())
    }
}

/// Parses every source below `root` and builds its eCPG.
pub fn build_ecpg_from_dir(root: &Path) -> std::io::Result<(Project, SymbolTable, Ecpg)> {
    let project = Project::load_dir(root)?;
    let (symbols, ecpg) = build_ecpg(&project);
    Ok((project, symbols, ecpg))
}

/// Builds the eCPG of a parsed project. Files with syntax errors contribute
/// the declarations that parsed; the errors become diagnostics.
pub fn build_ecpg(project: &Project) -> (SymbolTable, Ecpg) {
    let (symbols, sym_errors) = SymbolTable::build_lenient(&project.units);
    let mut diagnostics: Vec<Diagnostic> = project
        .errors
        .iter()
        .map(|e| Diagnostic {
            kind: DiagnosticKind::Syntax,
            file: e.file.clone(),
            line: e.line,
            column: e.column,
            message: e.message.clone(),
        })
        .collect();
    for e in sym_errors {
        let crate::frontend::SymbolError::DuplicateDefinition { symbol, first, second } = e;
        diagnostics.push(Diagnostic {
            kind: DiagnosticKind::DuplicateDefinition,
            file: second.file.clone(),
            line: second.line,
            column: second.column,
            message: format!("`{symbol}` already defined at {}:{}:{}", first.file, first.line, first.column),
        });
    }

    let graphs = depgraph::analyze_functions(project, &symbols);
    let cfgs: Vec<_> = graphs.iter().map(|g| g.cfg.clone()).collect();
    let control = graphs.iter().flat_map(|g| g.control.iter().copied()).collect();
    let data = graphs.iter().flat_map(|g| g.data.iter().map(|e| (e.from, e.to))).collect();
    let mut graph = depgraph::assemble_cpg(project, &cfgs, &control, &data).expect("analyses only reference project nodes");

    let (f, call_diags) = call_edges(project, &symbols);
    diagnostics.extend(call_diags);
    let s = structural_edges(project);
    let v = variable_edges(project, &symbols, &graphs);
    debug!("eCPG: {} nodes, {} F, {} S, {} V edges", graph.node_count(), f.len(), s.len(), v.len());
    for e in f.into_iter().chain(s).chain(v) {
        graph.add_edge(e).expect("extension edges only reference project nodes");
    }
    (symbols, Ecpg { graph, diagnostics })
}

fn params(project: &Project, function: NodeId) -> Vec<NodeId> {
    let f = project.node(function);
    f.children.iter().copied().filter(|c| project.node(*c).kind == NodeKind::Param).collect()
}

/// Call-site edges: call -> callee definition and i-th argument -> i-th parameter.
pub fn call_edges(project: &Project, symbols: &SymbolTable) -> (BTreeSet<Edge>, Vec<Diagnostic>) {
    let mut edges = BTreeSet::new();
    let mut diags = Vec::new();
    for call in project.nodes().filter(|n| n.kind == NodeKind::Call) {
        let callee = project.node(call.children[0]);
        let name = call.name.clone().unwrap_or_else(|| callee.code.clone());
        let target = match callee.kind {
            NodeKind::Identifier => symbols.resolve(callee.id).map(|s| symbols.symbol(s)),
            _ => None,
        };
        let def = match target {
            Some(sym) if sym.kind == SymbolKind::Function => sym.definition.as_ref().map(|site| site.node),
            _ => None,
        };
        let Some(def) = def else {
            diags.push(Diagnostic::at(DiagnosticKind::UnresolvedCall, call, format!("no definition for callee `{name}`")));
            continue;
        };
        edges.insert(Edge::new(call.id, def, EdgeLabel::F));
        let args = &call.children[1..];
        let formals = params(project, def);
        for (a, p) in args.iter().zip(&formals) {
            edges.insert(Edge::new(*a, *p, EdgeLabel::F));
        }
        let variadic = project.node(def).decl.as_ref().is_some_and(|d| d.is_variadic);
        if args.len() != formals.len() && !(variadic && args.len() > formals.len()) {
            diags.push(Diagnostic::at(
                DiagnosticKind::ArityMismatch,
                call,
                format!("`{name}` called with {} arguments but takes {}", args.len(), formals.len()),
            ));
        }
    }
    (edges, diags)
}

/// Structural edges: `if` to its branches, `switch` to its labels, and each
/// scope (block, else, case, default) to the statements it directly holds.
pub fn structural_edges(project: &Project) -> BTreeSet<Edge> {
    let mut edges = BTreeSet::new();
    for n in project.nodes() {
        let targets: &[NodeId] = match n.kind {
            NodeKind::If => &n.children[1..],
            NodeKind::Switch => &n.children[1..],
            NodeKind::Case => &n.children[1..],
            NodeKind::Block | NodeKind::Else | NodeKind::Default => &n.children,
            _ => &[],
        };
        for t in targets {
            edges.insert(Edge::new(n.id, *t, EdgeLabel::S));
        }
    }
    edges
}

/// Variable edges from a variable's declaration to every statement (and
/// call argument) that mentions it.
pub fn variable_edges(project: &Project, symbols: &SymbolTable, graphs: &[FunctionGraphs]) -> BTreeSet<Edge> {
    let mut statements: Vec<NodeId> = graphs.iter().flat_map(|g| g.cfg.statements().collect::<Vec<_>>()).collect();
    for unit in &project.units {
        statements.extend(unit.root_node().children.iter().copied().filter(|c| unit.node(*c).kind == NodeKind::VarDecl));
    }
    let mut edges = BTreeSet::new();
    for stmt in statements {
        let unit = project.unit_of(stmt);
        for r in depgraph::statement_effects(unit, symbols, stmt).refs {
            let Some(decl) = symbols.declaration_node(r.symbol) else { continue };
            for anchor in r.anchors {
                if anchor != decl {
                    edges.insert(Edge::new(decl, anchor, EdgeLabel::V));
                }
            }
        }
    }
    edges
}

/// Checks every F, S and V edge against the rule patterns; returns one
/// message per violating edge.
pub fn rule_violations(graph: &Cpg) -> Vec<String> {
    let kind = |id: NodeId| graph.node(id).map(|n| n.kind);
    let is_ast_child = |p: NodeId, c: NodeId| graph.has_edge(p, c, EdgeLabel::Ast);
    // First AST child by position: the condition of an `if`, the value of a `case`.
    let first_child = |p: NodeId| {
        graph
            .outgoing(p)
            .iter()
            .filter(|(_, l)| *l == EdgeLabel::Ast)
            .filter_map(|(c, _)| graph.node(*c))
            .min_by_key(|n| (n.line, n.column, n.id))
            .map(|n| n.id)
    };
    let mut out = Vec::new();
    for e in graph.edges().iter().filter(|e| e.label.is_extension()) {
        let (Some(src), Some(dst)) = (kind(e.src), kind(e.dst)) else {
            out.push(format!("{e:?}: dangling"));
            continue;
        };
        let ok = match e.label {
            EdgeLabel::F => matches!((src, dst), (NodeKind::Call, NodeKind::FunctionDef) | (NodeKind::Arg, NodeKind::Param)),
            EdgeLabel::S => {
                is_ast_child(e.src, e.dst)
                    && match src {
                        NodeKind::If => first_child(e.src) != Some(e.dst),
                        NodeKind::Switch => matches!(dst, NodeKind::Case | NodeKind::Default),
                        NodeKind::Case => first_child(e.src) != Some(e.dst),
                        NodeKind::Block | NodeKind::Else | NodeKind::Default => true,
                        _ => false,
                    }
            }
            EdgeLabel::V => matches!(src, NodeKind::VarDecl | NodeKind::Param) && e.src != e.dst,
            _ => true,
        };
        if !ok {
            out.push(format!("{} edge {src} {:?} -> {dst} {:?} matches no rule", e.label, e.src, e.dst));
        }
    }
    out
}
