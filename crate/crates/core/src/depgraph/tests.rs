use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;

use super::*;
use crate::frontend::{NodeKind, Project, SymbolTable, TranslationUnit};

const FIG1: &str = include_str!("../../fixtures/fig1/status.c");
const FIG4: &str = include_str!("../../fixtures/fig4/fig4.c");

fn project(files: &[(&str, &str)]) -> (Project, SymbolTable) {
    let p = Project::parse(files.iter().map(|(n, s)| (n.to_string(), s.as_bytes().to_vec())).collect());
    assert!(p.errors.is_empty(), "{:?}", p.errors);
    let syms = SymbolTable::build(&p.units).unwrap();
    (p, syms)
}

fn function(u: &TranslationUnit, name: &str) -> NodeId {
    u.nodes
        .iter()
        .find(|n| n.kind == NodeKind::FunctionDef && n.name.as_deref() == Some(name) && n.decl.as_ref().unwrap().is_definition)
        .unwrap()
        .id
}

fn at(u: &TranslationUnit, kind: NodeKind, line: u32) -> NodeId {
    let hits: Vec<_> = u.nodes.iter().filter(|n| n.kind == kind && n.loc.line == line).collect();
    assert_eq!(hits.len(), 1, "{kind} at line {line}");
    hits[0].id
}

fn cfg_of(src: &str, name: &str) -> (Project, Cfg) {
    let (p, _) = project(&[("t.c", src)]);
    let f = function(&p.units[0], name);
    let cfg = build_cfg(&p.units[0], f);
    (p, cfg)
}

#[test]
fn single_return_has_two_blocks() {
    let (_, cfg) = cfg_of("int f(void) { return 0; }", "f");
    assert_eq!(cfg.blocks.len(), 2);
    assert_eq!(cfg.edges, BTreeSet::from([(cfg.entry, cfg.exit)]));
    assert!(cfg.blocks[cfg.exit].stmts.is_empty());
}

#[test]
fn empty_function_entry_is_exit() {
    let (_, cfg) = cfg_of("void f(void) { }", "f");
    assert_eq!(cfg.blocks.len(), 1);
    assert_eq!(cfg.entry, cfg.exit);
    assert!(cfg.edges.is_empty());
}

#[test]
fn if_else_is_a_diamond() {
    let (p, cfg) = cfg_of("void f(int c, int a, int b) { if (c) { a = 1; } else { b = 2; } }", "f");
    assert_eq!(cfg.blocks.len(), 4);
    let u = &p.units[0];
    let cond = cfg.block_of(at(u, NodeKind::If, 1)).unwrap();
    let then = cfg.block_of(u.nodes.iter().find(|n| n.code == "a = 1").unwrap().id).unwrap();
    let other = cfg.block_of(u.nodes.iter().find(|n| n.code == "b = 2").unwrap().id).unwrap();
    assert_eq!(cfg.entry, cond);
    let expected = BTreeSet::from([(cond, then), (cond, other), (then, cfg.exit), (other, cfg.exit)]);
    assert_eq!(cfg.edges, expected);
}

#[test]
fn straight_line_code_shares_a_block() {
    let (_, cfg) = cfg_of("void f(int a) { a = 1; a = 2; a = 3; }", "f");
    assert_eq!(cfg.blocks.len(), 2);
    assert_eq!(cfg.blocks[cfg.entry].stmts.len(), 3);
}

#[test]
fn switch_without_default_has_case_count_plus_one_successors() {
    let (p, _) = project(&[("status.c", FIG1)]);
    let u = &p.units[0];
    let cfg = build_cfg(u, function(u, "bluetooth_status_cb"));
    let switch = u.nodes.iter().find(|n| n.kind == NodeKind::Switch).unwrap().id;
    let b = cfg.block_of(switch).unwrap();
    assert_eq!(cfg.successors(b).count(), 11);
    let branching: Vec<_> = (0..cfg.blocks.len()).filter(|b| cfg.successors(*b).count() > 1).collect();
    assert_eq!(branching, vec![b]);
}

#[test]
fn loops_have_back_edges() {
    let src = "void f(int n) { int i; for (i = 0; i < n; i++) { if (i) continue; n = n - 1; } while (n) { n--; if (n) break; } }";
    let (p, cfg) = cfg_of(src, "f");
    let u = &p.units[0];
    let for_node = u.nodes.iter().find(|n| n.kind == NodeKind::For).unwrap();
    let step = for_node.for_parts.unwrap().step.unwrap();
    let cont = u.nodes.iter().find(|n| n.kind == NodeKind::Continue).unwrap().id;
    let edges: BTreeSet<_> = cfg.statement_edges().collect();
    assert!(edges.contains(&(step, for_node.id)));
    assert!(edges.contains(&(cont, step)));
    let w = u.nodes.iter().find(|n| n.kind == NodeKind::While).unwrap().id;
    let brk = u.nodes.iter().find(|n| n.kind == NodeKind::Break).unwrap().id;
    assert!(cfg.point_edges().contains(&(Point::Stmt(brk), Point::Exit)));
    assert!(edges.iter().any(|(a, b)| *b == w && *a != for_node.id));
}

#[test]
fn fig4_control_and_data_edges() {
    let (p, syms) = project(&[("fig4.c", FIG4)]);
    let g = build_cpg(&p, &syms);
    let u = &p.units[0];
    let if11 = at(u, NodeKind::If, 11);
    let z15 = at(u, NodeKind::Assign, 15);
    let z12 = at(u, NodeKind::Assign, 12);
    let y8 = at(u, NodeKind::Assign, 8);
    assert!(g.has_edge(if11, z15, EdgeLabel::C));
    assert!(g.has_edge(if11, z12, EdgeLabel::C));
    assert!(g.has_edge(y8, z15, EdgeLabel::D));
    assert!(g.has_edge(y8, z12, EdgeLabel::D));
    // The assignment on line 10 is overwritten on every path.
    let z10 = at(u, NodeKind::Assign, 10);
    assert!(g.outgoing(z10).iter().all(|(_, l)| *l != EdgeLabel::D));
    // Declarations are not data-dependence sources.
    for n in &u.nodes {
        if n.kind == NodeKind::VarDecl {
            assert!(g.outgoing(n.id).iter().all(|(_, l)| *l != EdgeLabel::D));
        }
    }
    let stmt_lines: BTreeSet<u32> =
        g.incoming(z15).iter().filter(|(_, l)| matches!(l, EdgeLabel::C | EdgeLabel::D)).map(|(s, _)| g.node(*s).unwrap().line).collect();
    assert_eq!(stmt_lines, BTreeSet::from([8, 11]));
}

#[test]
fn nested_statement_depends_on_both_predicates() {
    let src = "void f(int a, int b) {\n while (a) {\n if (b) {\n a = 0;\n }\n }\n}";
    let (p, syms) = project(&[("t.c", src)]);
    let g = build_cpg(&p, &syms);
    let u = &p.units[0];
    let w = at(u, NodeKind::While, 2);
    let i = at(u, NodeKind::If, 3);
    let s = at(u, NodeKind::Assign, 4);
    assert!(g.has_edge(w, i, EdgeLabel::C));
    assert!(g.has_edge(i, s, EdgeLabel::C));
    assert!(g.has_edge(w, s, EdgeLabel::C));
    // No self loops even though the loop predicate controls its own re-evaluation.
    assert!(!g.has_edge(w, w, EdgeLabel::C));
}

#[test]
fn weak_definitions_do_not_kill() {
    let src = "void g(int *p);\nvoid f(int n) {\n int a[4];\n int x;\n x = n;\n a[0] = x;\n a[1] = x;\n g(&x);\n n = a[2] + x;\n}";
    let (p, syms) = project(&[("t.c", src)]);
    let g = build_cpg(&p, &syms);
    let u = &p.units[0];
    let line = |l: u32| {
        u.nodes
            .iter()
            .filter(|n| n.loc.line == l && n.parent.map(|p| u.node(p).kind) == Some(NodeKind::Block))
            .map(|n| n.id)
            .next()
            .unwrap()
    };
    let (x5, a6, a7, call8, use9) = (line(5), line(6), line(7), line(8), line(9));
    assert!(g.has_edge(a6, use9, EdgeLabel::D));
    assert!(g.has_edge(a7, use9, EdgeLabel::D));
    assert!(g.has_edge(x5, use9, EdgeLabel::D));
    assert!(g.has_edge(call8, use9, EdgeLabel::D));
    // The argument carrying `&x` is an anchor of the read.
    let arg = u.nodes.iter().find(|n| n.kind == NodeKind::Arg && n.loc.line == 8).unwrap().id;
    assert!(g.has_edge(x5, arg, EdgeLabel::D));
}

#[test]
fn cpg_properties_and_edge_conservation() {
    let (p, syms) = project(&[("fig4.c", FIG4)]);
    let graphs = analyze_functions(&p, &syms);
    let g = build_cpg(&p, &syms);
    assert_eq!(g.node_count(), p.node_count());
    assert_eq!(g.edges_with(EdgeLabel::Ast).count(), p.node_count() - p.units.len());
    let cfg_edges: usize = graphs.iter().map(|f| f.cfg.statement_edges().count()).sum();
    assert_eq!(g.edges_with(EdgeLabel::Cfg).count(), cfg_edges);
    let c: usize = graphs.iter().map(|f| f.control.len()).sum();
    assert_eq!(g.edges_with(EdgeLabel::C).count(), c);
    let z15 = at(&p.units[0], NodeKind::Assign, 15);
    assert_eq!(g.property(z15, Property::LineNumber), Some(PropertyValue::Int(15)));
    assert_eq!(g.property(z15, Property::ColumnNumber), Some(PropertyValue::Int(9)));
    assert_eq!(g.property(z15, Property::Filename), Some(PropertyValue::Str("fig4.c")));
    assert_eq!(g.property(z15, Property::Code), Some(PropertyValue::Str("z = y + 2")));
    assert_eq!(g.property(z15, Property::Function), Some(PropertyValue::Str("assign")));
    let global = at(&p.units[0], NodeKind::VarDecl, 1);
    assert_eq!(g.property(global, Property::Function), Some(PropertyValue::Null));
}

#[test]
fn dangling_dependence_edge_is_rejected() {
    let (p, syms) = project(&[("fig4.c", FIG4)]);
    let graphs = analyze_functions(&p, &syms);
    let cfgs: Vec<Cfg> = graphs.iter().map(|g| g.cfg.clone()).collect();
    let bogus = NodeId(p.node_count() as u32 + 7);
    let control = BTreeSet::from([(NodeId(1), bogus)]);
    let err = assemble_cpg(&p, &cfgs, &control, &BTreeSet::new()).unwrap_err();
    assert_eq!(err, CpgError::DanglingEdge { src: NodeId(1), dst: bogus, label: EdgeLabel::C });
}

#[test]
fn straight_line_has_no_control_dependence() {
    let (_, cfg) = cfg_of("void f(int a, int b) { a = 1; b = a; a = b; }", "f");
    assert!(control_dependences(&cfg).is_empty());
}

#[test]
fn single_def_use_pair() {
    let src = "void f(void) {\n int x;\n int y;\n x = 1;\n y = x;\n}";
    let (p, syms) = project(&[("t.c", src)]);
    let g = build_cpg(&p, &syms);
    let d: Vec<(u32, u32)> = g.edges_with(EdgeLabel::D).map(|e| (g.node(e.src).unwrap().line, g.node(e.dst).unwrap().line)).collect();
    assert_eq!(d, vec![(4, 5)]);
}

#[test]
fn empty_project_gives_empty_graph() {
    let g = build_cpg(&Project::default(), &SymbolTable::default());
    assert_eq!(g.node_count(), 0);
    assert!(g.edges().is_empty());
}

#[test]
fn every_node_answers_location_properties() {
    let (p, syms) = project(&[("status.c", FIG1), ("fig4.c", FIG4)]);
    let g = build_cpg(&p, &syms);
    let graphs = analyze_functions(&p, &syms);
    let stmts: BTreeSet<NodeId> = graphs.iter().flat_map(|f| f.cfg.statements().collect::<Vec<_>>()).collect();
    for n in g.nodes() {
        assert!(matches!(g.property(n.id, Property::LineNumber), Some(PropertyValue::Int(l)) if l >= 1));
        assert!(matches!(g.property(n.id, Property::Filename), Some(PropertyValue::Str(f)) if !f.is_empty()));
        if stmts.contains(&n.id) {
            assert!(!n.code.is_empty());
        }
    }
    let total: usize = EdgeLabel::ALL.iter().map(|l| g.edges_with(*l).count()).sum();
    assert_eq!(total, g.edges().len());
}

// ---- independent oracles ------------------------------------------------

/// Block-level successor lists with stuck blocks linked to the exit.
fn augmented(cfg: &Cfg) -> Vec<Vec<usize>> {
    let n = cfg.blocks.len();
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in &cfg.edges {
        succ[a].push(b);
    }
    for b in 0..n {
        if !reaches(&succ, b, cfg.exit, None) {
            succ[b].push(cfg.exit);
        }
    }
    succ
}

fn reaches(succ: &[Vec<usize>], from: usize, to: usize, removed: Option<usize>) -> bool {
    if Some(from) == removed {
        return false;
    }
    let mut seen = vec![false; succ.len()];
    let mut q = VecDeque::from([from]);
    seen[from] = true;
    while let Some(b) = q.pop_front() {
        if b == to {
            return true;
        }
        for &s in &succ[b] {
            if !seen[s] && Some(s) != removed {
                seen[s] = true;
                q.push_back(s);
            }
        }
    }
    false
}

/// `c` post-dominates `b`: every path from `b` to the exit passes `c`.
fn postdominates(succ: &[Vec<usize>], exit: usize, c: usize, b: usize) -> bool {
    c == b || !reaches(succ, b, exit, Some(c))
}

fn oracle_block_dependences(cfg: &Cfg) -> BTreeSet<(usize, usize)> {
    let succ = augmented(cfg);
    let mut out = BTreeSet::new();
    for &(x, z) in &cfg.edges {
        for y in 0..cfg.blocks.len() {
            if y == cfg.exit {
                continue;
            }
            let strict = y != x && postdominates(&succ, cfg.exit, y, x);
            if postdominates(&succ, cfg.exit, y, z) && !strict {
                out.insert((x, y));
            }
        }
    }
    out
}

fn oracle_control_dependences(cfg: &Cfg) -> BTreeSet<(NodeId, NodeId)> {
    let direct = oracle_block_dependences(cfg);
    let mut closure = direct.clone();
    loop {
        let extra: Vec<_> = closure
            .iter()
            .flat_map(|&(a, b)| direct.iter().filter(move |(x, _)| *x == b).map(move |&(_, c)| (a, c)))
            .filter(|e| !closure.contains(e))
            .collect();
        if extra.is_empty() {
            break;
        }
        closure.extend(extra);
    }
    let mut out = BTreeSet::new();
    for (a, b) in closure {
        let pred = *cfg.blocks[a].stmts.last().unwrap();
        for s in &cfg.blocks[b].stmts {
            if *s != pred {
                out.insert((pred, *s));
            }
        }
    }
    out
}

fn check_post_dominators(cfg: &Cfg) {
    let succ = augmented(cfg);
    let ipdom = post_dominators(cfg);
    for (b, &d) in ipdom.iter().enumerate() {
        if b == cfg.exit {
            assert_eq!(d, b);
            continue;
        }
        let strict: Vec<usize> = (0..cfg.blocks.len()).filter(|c| *c != b && postdominates(&succ, cfg.exit, *c, b)).collect();
        assert!(strict.contains(&d), "ipdom({b}) = {} is not a post-dominator", d);
        for c in strict {
            assert!(postdominates(&succ, cfg.exit, c, d));
        }
    }
}

fn oracle_data_dependences(u: &TranslationUnit, syms: &SymbolTable, cfg: &Cfg) -> BTreeSet<DataEdge> {
    let stmts: Vec<NodeId> = cfg.statements().collect();
    let fx: BTreeMap<NodeId, Effects> = stmts.iter().map(|s| (*s, statement_effects(u, syms, *s))).collect();
    let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (a, b) in cfg.statement_edges() {
        succ.entry(a).or_default().push(b);
    }
    let mut out = BTreeSet::new();
    for &d in &stmts {
        let vars: BTreeSet<_> = fx[&d].defs.iter().map(|x| x.symbol).collect();
        for v in vars {
            let kills = |s: NodeId| fx[&s].defs.iter().any(|x| x.symbol == v && x.strong);
            let mut seen = BTreeSet::new();
            let mut q: VecDeque<NodeId> = succ.get(&d).into_iter().flatten().copied().collect();
            while let Some(s) = q.pop_front() {
                if !seen.insert(s) {
                    continue;
                }
                for r in fx[&s].refs.iter().filter(|r| r.read && r.symbol == v) {
                    for a in &r.anchors {
                        if *a != d {
                            out.insert(DataEdge { from: d, to: *a, symbol: v });
                        }
                    }
                }
                if !kills(s) {
                    q.extend(succ.get(&s).into_iter().flatten().copied());
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Stmt {
    Assign(usize, usize, usize),
    Incr(usize),
    Store(usize, usize),
    CallAddr(usize, usize),
    If(usize, Vec<Stmt>, Option<Vec<Stmt>>),
    While(usize, Vec<Stmt>),
    For(Vec<Stmt>),
    Switch(usize, Vec<(Vec<Stmt>, bool)>, bool),
    Return,
    Break,
    Continue,
}

const VARS: [&str; 4] = ["a", "b", "c", "p"];

fn render(stmts: &[Stmt], out: &mut String) {
    for s in stmts {
        match s {
            Stmt::Assign(x, y, z) => out.push_str(&format!("{} = {} + {};\n", VARS[*x], VARS[*y], VARS[*z])),
            Stmt::Incr(x) => out.push_str(&format!("{}++;\n", VARS[*x])),
            Stmt::Store(x, y) => out.push_str(&format!("arr[{}] = {};\n", VARS[*x], VARS[*y])),
            Stmt::CallAddr(x, y) => out.push_str(&format!("g(&{}, {});\n", VARS[*x], VARS[*y])),
            Stmt::If(c, t, e) => {
                out.push_str(&format!("if ({}) {{\n", VARS[*c]));
                render(t, out);
                out.push_str("}\n");
                if let Some(e) = e {
                    out.push_str("else {\n");
                    render(e, out);
                    out.push_str("}\n");
                }
            }
            Stmt::While(c, body) => {
                out.push_str(&format!("while ({} < arr[0]) {{\n", VARS[*c]));
                render(body, out);
                out.push_str("}\n");
            }
            Stmt::For(body) => {
                out.push_str("for (i = 0; i < b; i++) {\n");
                render(body, out);
                out.push_str("}\n");
            }
            Stmt::Switch(c, cases, default) => {
                out.push_str(&format!("switch ({}) {{\n", VARS[*c]));
                for (k, (body, brk)) in cases.iter().enumerate() {
                    out.push_str(&format!("case {k}:\n"));
                    render(body, out);
                    if *brk {
                        out.push_str("break;\n");
                    }
                }
                if *default {
                    out.push_str("default:\nc = a;\n");
                }
                out.push_str("}\n");
            }
            Stmt::Return => out.push_str("return a;\n"),
            Stmt::Break => out.push_str("break;\n"),
            Stmt::Continue => out.push_str("continue;\n"),
        }
    }
}

fn program(stmts: &[Stmt]) -> String {
    let mut s = String::from("void g(int *q, int r);\nint f(int p) {\nint a = p;\nint b = 0;\nint c = 1;\nint i;\nint arr[4];\n");
    render(stmts, &mut s);
    s.push_str("return c;\n}\n");
    s
}

fn stmt_strategy() -> impl Strategy<Value = Vec<Stmt>> {
    let v = || 0usize..4;
    let leaf = prop_oneof![
        4 => (v(), v(), v()).prop_map(|(x, y, z)| Stmt::Assign(x, y, z)),
        1 => v().prop_map(Stmt::Incr),
        1 => (v(), v()).prop_map(|(x, y)| Stmt::Store(x, y)),
        1 => (v(), v()).prop_map(|(x, y)| Stmt::CallAddr(x, y)),
        1 => Just(Stmt::Return),
        1 => Just(Stmt::Break),
        1 => Just(Stmt::Continue),
    ];
    let stmt = leaf.prop_recursive(4, 40, 4, move |inner| {
        let block = prop::collection::vec(inner, 0..4);
        prop_oneof![
            (v(), block.clone(), prop::option::of(block.clone())).prop_map(|(c, t, e)| Stmt::If(c, t, e)),
            (v(), block.clone()).prop_map(|(c, b)| Stmt::While(c, b)),
            block.clone().prop_map(Stmt::For),
            (v(), prop::collection::vec((block, any::<bool>()), 1..4), any::<bool>()).prop_map(|(c, cases, d)| Stmt::Switch(c, cases, d)),
        ]
    });
    prop::collection::vec(stmt, 0..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dependences_match_path_oracles(stmts in stmt_strategy()) {
        let src = program(&stmts);
        let (p, syms) = project(&[("t.c", &src)]);
        let u = &p.units[0];
        let cfg = build_cfg(u, function(u, "f"));
        check_post_dominators(&cfg);
        prop_assert_eq!(block_dependences(&cfg), oracle_block_dependences(&cfg));
        let control = control_dependences(&cfg);
        prop_assert_eq!(&control, &oracle_control_dependences(&cfg));
        for (p, _) in &control {
            prop_assert!(u.node(*p).kind.is_predicate());
        }
        prop_assert_eq!(data_dependences(u, &syms, &cfg), oracle_data_dependences(u, &syms, &cfg));
    }

    #[test]
    fn cfg_structure_invariants(stmts in stmt_strategy()) {
        let src = program(&stmts);
        let (p, _) = project(&[("t.c", &src)]);
        let u = &p.units[0];
        let cfg = build_cfg(u, function(u, "f"));
        // Blocks partition the statements; the exit is empty and last.
        let all: Vec<NodeId> = cfg.statements().collect();
        let unique: BTreeSet<NodeId> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), unique.len());
        prop_assert_eq!(cfg.exit, cfg.blocks.len() - 1);
        prop_assert!(cfg.blocks[cfg.exit].stmts.is_empty());
        prop_assert_eq!(cfg.successors(cfg.exit).count(), 0);
        // Only predicates branch.
        for b in 0..cfg.blocks.len() {
            if cfg.successors(b).count() > 1 {
                let t = cfg.terminator(b).unwrap();
                prop_assert!(u.node(t).kind.is_predicate(), "{:?}", u.node(t).kind);
            }
        }
        // Every block reachable from the entry reaches the exit or a loop.
        let mut seen = BTreeSet::from([cfg.entry]);
        let mut stack = vec![cfg.entry];
        while let Some(b) = stack.pop() {
            for s in cfg.successors(b) {
                if seen.insert(s) {
                    stack.push(s);
                }
            }
        }
        prop_assert!(seen.contains(&cfg.exit) || stmts.iter().any(|s| matches!(s, Stmt::For(_))));
    }
}
