//! Variable effects of statements and reaching-definitions data dependence.

use std::collections::{BTreeMap, BTreeSet};

use super::cfg::{Cfg, Point};
use crate::frontend::{NodeId, NodeKind, SymbolId, SymbolTable, TranslationUnit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Def {
    pub symbol: SymbolId,
    /// Strong definitions overwrite the whole variable and kill earlier ones.
    pub strong: bool,
}

/// One occurrence of a variable inside a statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ref {
    pub symbol: SymbolId,
    pub ident: NodeId,
    /// Whether the value is read (pure assignment targets are not).
    pub read: bool,
    /// The statement, then every enclosing call argument, outermost first.
    pub anchors: Vec<NodeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Effects {
    pub defs: Vec<Def>,
    pub refs: Vec<Ref>,
}

/// Expressions evaluated by `stmt` itself, excluding nested statements.
pub fn own_expressions(unit: &TranslationUnit, stmt: NodeId) -> Vec<NodeId> {
    let node = unit.node(stmt);
    match node.kind {
        NodeKind::If | NodeKind::While | NodeKind::Switch | NodeKind::Case => node.children.first().copied().into_iter().collect(),
        NodeKind::For => node.for_parts.and_then(|p| p.cond).into_iter().collect(),
        NodeKind::Return | NodeKind::VarDecl => node.children.clone(),
        NodeKind::Default | NodeKind::Break | NodeKind::Continue | NodeKind::Block | NodeKind::Else => Vec::new(),
        NodeKind::FunctionDef | NodeKind::TranslationUnit | NodeKind::Param => Vec::new(),
        _ => vec![stmt],
    }
}

pub fn statement_effects(unit: &TranslationUnit, symbols: &SymbolTable, stmt: NodeId) -> Effects {
    let mut w = EffectWalk { unit, symbols, stmt, args: Vec::new(), fx: Effects::default() };
    for e in own_expressions(unit, stmt) {
        w.expr(e);
    }
    w.fx
}

struct EffectWalk<'a> {
    unit: &'a TranslationUnit,
    symbols: &'a SymbolTable,
    stmt: NodeId,
    args: Vec<NodeId>,
    fx: Effects,
}

impl EffectWalk<'_> {
    fn variable(&self, ident: NodeId) -> Option<SymbolId> {
        let sym = self.symbols.resolve(ident)?;
        self.symbols.symbol(sym).kind.is_variable().then_some(sym)
    }

    fn reference(&mut self, ident: NodeId, read: bool) -> Option<SymbolId> {
        let symbol = self.variable(ident)?;
        let mut anchors = vec![self.stmt];
        anchors.extend(self.args.iter().copied());
        self.fx.refs.push(Ref { symbol, ident, read, anchors });
        Some(symbol)
    }

    fn lvalue(&mut self, id: NodeId, strong: bool, read: bool) {
        let node = self.unit.node(id).clone();
        match node.kind {
            NodeKind::Identifier => {
                if let Some(symbol) = self.reference(id, read) {
                    self.fx.defs.push(Def { symbol, strong });
                }
            }
            NodeKind::Index => {
                self.expr(node.children[1]);
                self.lvalue(node.children[0], false, true);
            }
            NodeKind::MemberAccess => {
                let through_pointer = node.op.as_deref() == Some("->");
                self.lvalue(node.children[0], false, read || through_pointer);
            }
            NodeKind::UnaryOp if node.op.as_deref() == Some("*") => self.lvalue(node.children[0], false, true),
            _ => self.expr(id),
        }
    }

    fn expr(&mut self, id: NodeId) {
        let node = self.unit.node(id).clone();
        match node.kind {
            NodeKind::Identifier => {
                self.reference(id, true);
            }
            NodeKind::Assign => {
                self.expr(node.children[1]);
                let compound = node.op.as_deref() != Some("=");
                self.lvalue(node.children[0], true, compound);
            }
            NodeKind::UnaryOp => match node.op.as_deref() {
                Some("++" | "--" | "post++" | "post--") => self.lvalue(node.children[0], true, true),
                // Passing an address lets the callee write the variable.
                Some("&") if !self.args.is_empty() => self.lvalue(node.children[0], false, true),
                Some("sizeof") => {}
                _ => self.walk_children(&node.children),
            },
            NodeKind::Arg => {
                self.args.push(id);
                self.walk_children(&node.children);
                self.args.pop();
            }
            _ => self.walk_children(&node.children),
        }
    }

    fn walk_children(&mut self, children: &[NodeId]) {
        for c in children {
            self.expr(*c);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DataEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub symbol: SymbolId,
}

#[derive(Clone, Debug, Default)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }
    fn union_with(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

/// Reaching-definitions data dependence for one function.
///
/// An edge runs from a defining statement to every anchor of a read it
/// reaches along a path without an intervening strong definition.
pub fn data_dependences(unit: &TranslationUnit, symbols: &SymbolTable, cfg: &Cfg) -> BTreeSet<DataEdge> {
    let stmts: Vec<NodeId> = cfg.statements().collect();
    let index: BTreeMap<NodeId, usize> = stmts.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let effects: Vec<Effects> = stmts.iter().map(|s| statement_effects(unit, symbols, *s)).collect();

    // Definition table: (statement index, def).
    let mut defs: Vec<(usize, Def)> = Vec::new();
    let mut gen = Vec::with_capacity(stmts.len());
    for (i, fx) in effects.iter().enumerate() {
        let mut g = Vec::new();
        for d in &fx.defs {
            if !defs.iter().any(|(j, e)| *j == i && e.symbol == d.symbol && e.strong == d.strong) {
                g.push(defs.len());
                defs.push((i, *d));
            }
        }
        gen.push(g);
    }
    let mut defs_of: BTreeMap<SymbolId, Vec<usize>> = BTreeMap::new();
    for (k, (_, d)) in defs.iter().enumerate() {
        defs_of.entry(d.symbol).or_default().push(k);
    }
    let killed_syms: Vec<BTreeSet<SymbolId>> =
        effects.iter().map(|fx| fx.defs.iter().filter(|d| d.strong).map(|d| d.symbol).collect()).collect();

    let mut preds = vec![Vec::new(); stmts.len()];
    let mut succs = vec![Vec::new(); stmts.len()];
    for (a, b) in cfg.point_edges() {
        if let (Point::Stmt(a), Point::Stmt(b)) = (a, b) {
            preds[index[b]].push(index[a]);
            succs[index[a]].push(index[b]);
        }
    }

    let transfer = |i: usize, input: &Bits| {
        let mut out = Bits::new(defs.len());
        for (k, (_, d)) in defs.iter().enumerate() {
            if input.get(k) && !killed_syms[i].contains(&d.symbol) {
                out.set(k);
            }
        }
        for k in &gen[i] {
            out.set(*k);
        }
        out
    };
    let mut ins = vec![Bits::new(defs.len()); stmts.len()];
    let mut outs: Vec<Bits> = (0..stmts.len()).map(|i| transfer(i, &Bits::new(defs.len()))).collect();
    let mut work: Vec<usize> = (0..stmts.len()).rev().collect();
    let mut queued = vec![true; stmts.len()];
    while let Some(i) = work.pop() {
        queued[i] = false;
        let mut input = Bits::new(defs.len());
        for p in &preds[i] {
            input.union_with(&outs[*p]);
        }
        let out = transfer(i, &input);
        ins[i] = input;
        if out.0 != outs[i].0 {
            outs[i] = out;
            for s in &succs[i] {
                if !queued[*s] {
                    queued[*s] = true;
                    work.push(*s);
                }
            }
        }
    }

    let mut edges = BTreeSet::new();
    for (i, fx) in effects.iter().enumerate() {
        for r in fx.refs.iter().filter(|r| r.read) {
            for k in defs_of.get(&r.symbol).into_iter().flatten() {
                if !ins[i].get(*k) {
                    continue;
                }
                let from = stmts[defs[*k].0];
                for anchor in &r.anchors {
                    if from != *anchor {
                        edges.insert(DataEdge { from, to: *anchor, symbol: r.symbol });
                    }
                }
            }
        }
    }
    edges
}
