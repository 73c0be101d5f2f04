//! Control flow, control dependence, data dependence and their assembly
//! into a code property graph.

pub mod cfg;
pub mod control;
pub mod cpg;
pub mod data;

use std::collections::BTreeSet;

use crate::frontend::{NodeId, NodeKind, Project, SymbolTable};

pub use cfg::{build_cfg, BasicBlock, BlockId, Cfg, Point};
pub use control::{block_dependences, control_dependences, post_dominators};
pub use cpg::{Cpg, CpgError, Edge, EdgeLabel, NodeProps, Property, PropertyValue};
pub use data::{data_dependences, statement_effects, DataEdge, Def, Effects, Ref};

/// Per-function analysis results.
#[derive(Clone, Debug)]
pub struct FunctionGraphs {
    pub cfg: Cfg,
    pub control: BTreeSet<(NodeId, NodeId)>,
    pub data: BTreeSet<DataEdge>,
}

/// Analyses every function definition of the project, in parallel.
pub fn analyze_functions(project: &Project, symbols: &SymbolTable) -> Vec<FunctionGraphs> {
    let jobs: Vec<(usize, NodeId)> = project
        .units
        .iter()
        .enumerate()
        .flat_map(|(u, unit)| {
            unit.nodes
                .iter()
                .filter(|n| n.kind == NodeKind::FunctionDef && n.decl.as_ref().is_some_and(|d| d.is_definition))
                .map(move |n| (u, n.id))
        })
        .collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let chunk = jobs.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|batch| {
                s.spawn(move || {
                    batch
                        .iter()
                        .map(|(u, f)| {
                            let unit = &project.units[*u];
                            let cfg = build_cfg(unit, *f);
                            let control = control_dependences(&cfg);
                            let data = data_dependences(unit, symbols, &cfg);
                            FunctionGraphs { cfg, control, data }
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("analysis thread panicked")).collect()
    })
}

/// Combines AST, CFG, C and D edges into one graph.
pub fn assemble_cpg(
    project: &Project,
    cfgs: &[Cfg],
    control: &BTreeSet<(NodeId, NodeId)>,
    data: &BTreeSet<(NodeId, NodeId)>,
) -> Result<Cpg, CpgError> {
    let mut g = Cpg::default();
    for props in cpg::project_nodes(project) {
        g.add_node(props)?;
    }
    for node in project.nodes() {
        for child in &node.children {
            g.add_edge(Edge::new(node.id, *child, EdgeLabel::Ast))?;
        }
    }
    for cfg in cfgs {
        for (a, b) in cfg.statement_edges() {
            g.add_edge(Edge::new(a, b, EdgeLabel::Cfg))?;
        }
    }
    for (a, b) in control {
        g.add_edge(Edge::new(*a, *b, EdgeLabel::C))?;
    }
    for (a, b) in data {
        g.add_edge(Edge::new(*a, *b, EdgeLabel::D))?;
    }
    Ok(g)
}

/// Runs every analysis and assembles the result.
pub fn build_cpg(project: &Project, symbols: &SymbolTable) -> Cpg {
    let graphs = analyze_functions(project, symbols);
    let cfgs: Vec<Cfg> = graphs.iter().map(|g| g.cfg.clone()).collect();
    let control = graphs.iter().flat_map(|g| g.control.iter().copied()).collect();
    let data = graphs.iter().flat_map(|g| g.data.iter().map(|e| (e.from, e.to))).collect();
    assemble_cpg(project, &cfgs, &control, &data).expect("analyses only reference project nodes")
}

#[cfg(test)]
mod tests;
