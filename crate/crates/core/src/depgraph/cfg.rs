//! Structured control-flow graphs over MiniC statements.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{AstNode, NodeId, NodeKind, TranslationUnit};

/// Statement-level CFG endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    Entry,
    Stmt(NodeId),
    Exit,
}

pub type BlockId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub stmts: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub function: NodeId,
    pub blocks: Vec<BasicBlock>,
    pub edges: BTreeSet<(BlockId, BlockId)>,
    pub entry: BlockId,
    /// Synthetic, statement-free block; always the last one.
    pub exit: BlockId,
    stmt_edges: BTreeSet<(Point, Point)>,
    block_of: BTreeMap<NodeId, BlockId>,
}

impl Cfg {
    pub fn successors(&self, b: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.edges.range((b, 0)..(b + 1, 0)).map(|(_, t)| *t)
    }

    pub fn predecessors(&self, b: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.edges.iter().filter(move |(_, t)| *t == b).map(|(s, _)| *s)
    }

    pub fn block_of(&self, stmt: NodeId) -> Option<BlockId> {
        self.block_of.get(&stmt).copied()
    }

    /// Statements in block order.
    pub fn statements(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.blocks.iter().flat_map(|b| b.stmts.iter().copied())
    }

    /// Statement-level flow edges, including the synthetic entry and exit.
    pub fn point_edges(&self) -> &BTreeSet<(Point, Point)> {
        &self.stmt_edges
    }

    /// Flow edges between two real statements.
    pub fn statement_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.stmt_edges.iter().filter_map(|e| match e {
            (Point::Stmt(a), Point::Stmt(b)) => Some((*a, *b)),
            _ => None,
        })
    }

    /// The statement whose outcome selects among a block's successors.
    pub fn terminator(&self, b: BlockId) -> Option<NodeId> {
        self.blocks[b].stmts.last().copied()
    }
}

struct LoopCtx {
    breaks: Vec<Point>,
    continue_to: Option<Point>,
}

struct Builder<'u> {
    unit: &'u TranslationUnit,
    edges: BTreeSet<(Point, Point)>,
    order: Vec<NodeId>,
    loops: Vec<LoopCtx>,
}

impl Builder<'_> {
    fn node(&self, id: NodeId) -> &AstNode {
        self.unit.node(id)
    }

    fn enter(&mut self, preds: &[Point], id: NodeId) {
        self.order.push(id);
        for p in preds {
            self.edges.insert((*p, Point::Stmt(id)));
        }
    }

    fn link(&mut self, from: &[Point], to: Point) {
        for p in from {
            self.edges.insert((*p, to));
        }
    }

    fn seq(&mut self, stmts: &[NodeId], mut preds: Vec<Point>) -> Vec<Point> {
        for s in stmts {
            preds = self.stmt(*s, preds);
        }
        preds
    }

    fn stmt(&mut self, id: NodeId, preds: Vec<Point>) -> Vec<Point> {
        let node = self.node(id).clone();
        let here = Point::Stmt(id);
        match node.kind {
            NodeKind::Block => self.seq(&node.children, preds),
            NodeKind::Else => self.seq(&node.children, preds),
            NodeKind::If => {
                self.enter(&preds, id);
                let mut exits = self.stmt(node.children[1], vec![here]);
                match node.children.get(2) {
                    Some(else_node) => exits.extend(self.stmt(*else_node, vec![here])),
                    None => exits.push(here),
                }
                exits
            }
            NodeKind::While => {
                self.enter(&preds, id);
                self.loops.push(LoopCtx { breaks: Vec::new(), continue_to: Some(here) });
                let body_exits = self.stmt(node.children[1], vec![here]);
                self.link(&body_exits, here);
                let ctx = self.loops.pop().expect("loop context");
                let mut exits = vec![here];
                exits.extend(ctx.breaks);
                exits
            }
            NodeKind::For => {
                let parts = node.for_parts.unwrap_or_default();
                let preds = match parts.init {
                    Some(init) => self.stmt(init, preds),
                    None => preds,
                };
                self.enter(&preds, id);
                let continue_to = parts.step.map(Point::Stmt).unwrap_or(here);
                self.loops.push(LoopCtx { breaks: Vec::new(), continue_to: Some(continue_to) });
                let body_exits = match parts.body {
                    Some(body) => self.stmt(body, vec![here]),
                    None => vec![here],
                };
                match parts.step {
                    Some(step) => {
                        self.enter(&body_exits, step);
                        self.link(&[Point::Stmt(step)], here);
                    }
                    None => self.link(&body_exits, here),
                }
                let ctx = self.loops.pop().expect("loop context");
                let mut exits = if parts.cond.is_some() { vec![here] } else { Vec::new() };
                exits.extend(ctx.breaks);
                exits
            }
            NodeKind::Switch => {
                self.enter(&preds, id);
                self.loops.push(LoopCtx { breaks: Vec::new(), continue_to: None });
                let mut fallthrough: Vec<Point> = Vec::new();
                let mut has_default = false;
                for label in &node.children[1..] {
                    let label_node = self.node(*label).clone();
                    has_default |= label_node.kind == NodeKind::Default;
                    let mut label_preds = vec![here];
                    label_preds.append(&mut fallthrough);
                    self.enter(&label_preds, *label);
                    let body = match label_node.kind {
                        NodeKind::Case => &label_node.children[1..],
                        _ => &label_node.children[..],
                    };
                    fallthrough = self.seq(body, vec![Point::Stmt(*label)]);
                }
                let ctx = self.loops.pop().expect("switch context");
                let mut exits = fallthrough;
                exits.extend(ctx.breaks);
                if !has_default {
                    exits.push(here);
                }
                exits
            }
            NodeKind::Return => {
                self.enter(&preds, id);
                self.link(&[here], Point::Exit);
                Vec::new()
            }
            NodeKind::Break => {
                self.enter(&preds, id);
                match self.loops.last_mut() {
                    Some(ctx) => ctx.breaks.push(here),
                    None => self.link(&[here], Point::Exit),
                }
                Vec::new()
            }
            NodeKind::Continue => {
                self.enter(&preds, id);
                let target = self.loops.iter().rev().find_map(|l| l.continue_to).unwrap_or(Point::Exit);
                self.link(&[here], target);
                Vec::new()
            }
            _ => {
                self.enter(&preds, id);
                vec![here]
            }
        }
    }
}

/// Builds the CFG of a function definition. Prototypes yield an entry that
/// is also the exit.
pub fn build_cfg(unit: &TranslationUnit, function: NodeId) -> Cfg {
    let func = unit.node(function);
    assert_eq!(func.kind, NodeKind::FunctionDef, "build_cfg expects a FunctionDef");
    let mut b = Builder { unit, edges: BTreeSet::new(), order: Vec::new(), loops: Vec::new() };
    let body = func.children.iter().copied().find(|c| unit.node(*c).kind == NodeKind::Block);
    let exits = match body {
        Some(body) => b.stmt(body, vec![Point::Entry]),
        None => vec![Point::Entry],
    };
    b.link(&exits, Point::Exit);
    into_blocks(function, b.order, b.edges)
}

fn into_blocks(function: NodeId, order: Vec<NodeId>, stmt_edges: BTreeSet<(Point, Point)>) -> Cfg {
    let mut succs: BTreeMap<Point, Vec<Point>> = BTreeMap::new();
    let mut preds: BTreeMap<Point, Vec<Point>> = BTreeMap::new();
    for (a, b) in &stmt_edges {
        succs.entry(*a).or_default().push(*b);
        preds.entry(*b).or_default().push(*a);
    }
    let single = |map: &BTreeMap<Point, Vec<Point>>, p: Point| match map.get(&p).map(Vec::as_slice) {
        Some([only]) => Some(*only),
        _ => None,
    };
    // A statement continues its predecessor's block when they form a 1:1 link.
    let continues = |n: NodeId| match single(&preds, Point::Stmt(n)) {
        Some(Point::Stmt(p)) if p != n => single(&succs, Point::Stmt(p)) == Some(Point::Stmt(n)),
        _ => false,
    };

    let mut blocks = Vec::new();
    let mut block_of = BTreeMap::new();
    for &n in &order {
        if block_of.contains_key(&n) || continues(n) {
            continue;
        }
        let id = blocks.len();
        let mut stmts = vec![n];
        block_of.insert(n, id);
        let mut cur = n;
        while let Some(Point::Stmt(next)) = single(&succs, Point::Stmt(cur)) {
            if block_of.contains_key(&next) || !continues(next) {
                break;
            }
            block_of.insert(next, id);
            stmts.push(next);
            cur = next;
        }
        blocks.push(BasicBlock { id, stmts });
    }
    let exit = blocks.len();
    blocks.push(BasicBlock { id: exit, stmts: Vec::new() });

    let to_block = |p: Point| match p {
        Point::Stmt(n) => Some(block_of[&n]),
        Point::Exit => Some(exit),
        Point::Entry => None,
    };
    let mut edges = BTreeSet::new();
    let mut entry = exit;
    for (a, b) in &stmt_edges {
        match (to_block(*a), to_block(*b)) {
            (None, Some(t)) => entry = t,
            (Some(s), Some(t)) => {
                // Links inside a block are not block edges; a back edge to the
                // block head is.
                let from_last = blocks[s].stmts.last().map(|l| Point::Stmt(*l)) == Some(*a);
                let to_first = *b == Point::Exit || blocks[t].stmts.first().map(|f| Point::Stmt(*f)) == Some(*b);
                if s != t || (from_last && to_first) {
                    edges.insert((s, t));
                }
            }
            _ => {}
        }
    }
    Cfg { function, blocks, edges, entry, exit, stmt_edges, block_of }
}
