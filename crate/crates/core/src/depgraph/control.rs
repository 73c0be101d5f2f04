//! Control dependence from post-dominator trees.

use std::collections::BTreeSet;

use super::cfg::{BlockId, Cfg};
use crate::frontend::NodeId;

/// Immediate post-dominator of every block; the exit maps to itself.
///
/// Blocks that cannot reach the exit (infinite loops) are treated as if
/// they had an extra edge to it.
pub fn post_dominators(cfg: &Cfg) -> Vec<BlockId> {
    let n = cfg.blocks.len();
    let mut succs = vec![Vec::new(); n];
    let mut preds = vec![Vec::new(); n];
    for &(a, b) in &cfg.edges {
        succs[a].push(b);
        preds[b].push(a);
    }
    for b in without_path_to_exit(cfg, &preds) {
        succs[b].push(cfg.exit);
        preds[cfg.exit].push(b);
    }

    // Postorder of the reverse graph rooted at the exit.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack = vec![(cfg.exit, 0usize)];
    seen[cfg.exit] = true;
    while let Some((b, i)) = stack.pop() {
        if let Some(&p) = preds[b].get(i) {
            stack.push((b, i + 1));
            if !seen[p] {
                seen[p] = true;
                stack.push((p, 0));
            }
        } else {
            order.push(b);
        }
    }
    let mut rank = vec![usize::MAX; n];
    for (i, b) in order.iter().enumerate() {
        rank[*b] = i;
    }

    const UNDEF: usize = usize::MAX;
    let mut ipdom = vec![UNDEF; n];
    ipdom[cfg.exit] = cfg.exit;
    let intersect = |ipdom: &[usize], mut a: usize, mut b: usize| {
        while a != b {
            while rank[a] < rank[b] {
                a = ipdom[a];
            }
            while rank[b] < rank[a] {
                b = ipdom[b];
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().rev() {
            if b == cfg.exit {
                continue;
            }
            let mut new = UNDEF;
            for &s in &succs[b] {
                if ipdom[s] == UNDEF {
                    continue;
                }
                new = if new == UNDEF { s } else { intersect(&ipdom, s, new) };
            }
            if new != UNDEF && ipdom[b] != new {
                ipdom[b] = new;
                changed = true;
            }
        }
    }
    ipdom
}

fn without_path_to_exit(cfg: &Cfg, preds: &[Vec<BlockId>]) -> Vec<BlockId> {
    let mut reaches = vec![false; cfg.blocks.len()];
    let mut stack = vec![cfg.exit];
    reaches[cfg.exit] = true;
    while let Some(b) = stack.pop() {
        for &p in &preds[b] {
            if !reaches[p] {
                reaches[p] = true;
                stack.push(p);
            }
        }
    }
    (0..cfg.blocks.len()).filter(|b| !reaches[*b]).collect()
}

/// Pairs `(controlling block, dependent block)`.
pub fn block_dependences(cfg: &Cfg) -> BTreeSet<(BlockId, BlockId)> {
    let ipdom = post_dominators(cfg);
    let mut out = BTreeSet::new();
    for &(a, b) in &cfg.edges {
        let mut runner = b;
        while runner != ipdom[a] && runner != cfg.exit {
            out.insert((a, runner));
            runner = ipdom[runner];
        }
    }
    out
}

/// Statement-level control-dependence edges `(predicate, dependent)`.
///
/// A predicate controls every statement whose execution it decides,
/// directly or through the predicates it controls, so a statement nested in
/// an `if` inside a loop depends on both.
pub fn control_dependences(cfg: &Cfg) -> BTreeSet<(NodeId, NodeId)> {
    let direct = block_dependences(cfg);
    let mut dependents: Vec<Vec<BlockId>> = vec![Vec::new(); cfg.blocks.len()];
    for &(a, b) in &direct {
        dependents[a].push(b);
    }
    let mut out = BTreeSet::new();
    for a in 0..cfg.blocks.len() {
        if dependents[a].is_empty() {
            continue;
        }
        let Some(pred) = cfg.terminator(a) else { continue };
        let mut seen = vec![false; cfg.blocks.len()];
        let mut stack = dependents[a].clone();
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b], true) {
                continue;
            }
            for &stmt in &cfg.blocks[b].stmts {
                if stmt != pred {
                    out.insert((pred, stmt));
                }
            }
            stack.extend(dependents[b].iter().copied());
        }
    }
    out
}
