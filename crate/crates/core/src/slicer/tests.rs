use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use proptest::prelude::*;

use super::*;
use crate::depgraph::{Edge, NodeProps};
use crate::ecpg::{build_ecpg, import_ecpg, Ecpg};

const FIG4: &str = include_str!("../../fixtures/fig4/fig4.c");
const FIG2_A: &str = include_str!("../../fixtures/fig2/a.c");
const FIG2_B: &str = include_str!("../../fixtures/fig2/b.c");

fn build(files: &[(&str, &str)]) -> (Project, Ecpg) {
    let p = Project::parse(files.iter().map(|(n, s)| (n.to_string(), s.as_bytes().to_vec())).collect());
    let (_, e) = build_ecpg(&p);
    (p, e)
}

fn lines(graph: &Cpg, nodes: &BTreeSet<NodeId>) -> BTreeSet<u32> {
    nodes.iter().map(|n| graph.node(*n).unwrap().line).collect()
}

fn fig4_z() -> Vec<SlicingCriterion> {
    vec![SlicingCriterion::new("fig4.c", 15, Some(9))]
}

#[test]
fn criterion_with_column_picks_the_nodes_at_that_position() {
    let (_, e) = build(&[("fig4.c", FIG4)]);
    let r = resolve_criteria(e.graph(), &fig4_z()).unwrap();
    assert!(!r.fallback_used);
    let kinds: BTreeSet<_> = r.nodes.iter().map(|n| e.graph().node(*n).unwrap().kind).collect();
    assert_eq!(kinds, BTreeSet::from([NodeKind::Assign, NodeKind::Identifier]));
    assert!(r.nodes.iter().all(|n| e.graph().node(*n).unwrap().column == 9));
    assert!(r.nodes.iter().any(|n| e.graph().node(*n).unwrap().code == "z"));
}

#[test]
fn criterion_without_column_matches_the_whole_line() {
    let (_, e) = build(&[("fig4.c", FIG4)]);
    let r = resolve_criteria(e.graph(), &[SlicingCriterion::new("fig4.c", 15, None)]).unwrap();
    let expected: BTreeSet<NodeId> = e.graph().nodes().filter(|n| n.line == 15).map(|n| n.id).collect();
    assert_eq!(r.nodes, expected);
    assert!(r.nodes.len() > 2);
}

#[test]
fn criterion_on_a_blank_line_falls_back_to_the_function() {
    let (p, e) = build(&[("fig4.c", FIG4)]);
    let r = resolve_criteria(e.graph(), &[SlicingCriterion::new("fig4.c", 9, None)]).unwrap();
    assert!(r.fallback_used);
    let assign = p.units[0].nodes.iter().find(|n| n.kind == NodeKind::FunctionDef && n.name.as_deref() == Some("assign")).unwrap();
    let expected: BTreeSet<NodeId> =
        p.units[0].nodes.iter().filter(|n| n.id == assign.id || n.enclosing_function == Some(assign.id)).map(|n| n.id).collect();
    assert_eq!(r.nodes, expected);
}

#[test]
fn out_of_range_criteria() {
    let (_, e) = build(&[("fig4.c", FIG4)]);
    let g = e.graph();
    let unknown = SlicingCriterion::new("nope.c", 1, None);
    assert_eq!(resolve_criteria(g, std::slice::from_ref(&unknown)), Err(SliceError::CriterionOutOfRange(unknown)));
    let past_end = SlicingCriterion::new("fig4.c", 400, None);
    assert_eq!(resolve_criteria(g, std::slice::from_ref(&past_end)), Err(SliceError::CriterionOutOfRange(past_end)));
    // A blank line at file scope is in range but matches nothing.
    let src = "int a;\n\nint b;\n";
    let (_, e2) = build(&[("g.c", src)]);
    let r = resolve_criteria(e2.graph(), &[SlicingCriterion::new("g.c", 2, None)]).unwrap();
    assert!(r.nodes.is_empty() && !r.fallback_used);
}

#[test]
fn fig4_dependence_only_slice() {
    let (_, e) = build(&[("fig4.c", FIG4)]);
    let g = e.graph();
    let seeds = resolve_criteria(g, &fig4_z()).unwrap().nodes;
    let r = slice_nodes(g, &seeds, Direction::Backward, &[EdgeLabel::C, EdgeLabel::D]);
    assert_eq!(lines(g, &r), BTreeSet::from([8, 11, 15]));
}

#[test]
fn fig4_extended_slice() {
    let (p, e) = build(&[("fig4.c", FIG4)]);
    let s = slice(e.graph(), &fig4_z(), &SliceOptions::default(), None, &p).unwrap();
    let got: BTreeSet<u32> = s.line_numbers("fig4.c").into_iter().collect();
    assert!(got.is_superset(&BTreeSet::from([1, 3, 6, 7, 8, 11, 14, 15])));
    assert!(!got.contains(&10));
    assert_eq!(got, BTreeSet::from([1, 3, 5, 6, 7, 8, 11, 14, 15]));
    let texts: Vec<&str> = s.files[0].lines.iter().map(|l| l.text.as_str()).collect();
    let source_lines: Vec<&str> = FIG4.split('\n').collect();
    for l in &s.files[0].lines {
        assert_eq!(l.text, source_lines[l.n as usize - 1]);
    }
    assert_eq!(texts.last().copied(), Some("        z = y + 2;"));
}

#[test]
fn empty_seed_set_gives_empty_slice() {
    let (p, e) = build(&[("fig4.c", FIG4)]);
    let r = slice_nodes(e.graph(), &BTreeSet::new(), Direction::Both, &DEFAULT_LABELS);
    assert!(r.is_empty());
    let s = reconstruct_source_slice(e.graph(), &r, &[], Direction::Backward, false, &p).unwrap();
    assert!(s.is_empty());
}

#[test]
fn cross_file_slice_groups_by_file() {
    let (p, e) = build(&[("a.c", FIG2_A), ("b.c", FIG2_B)]);
    let crit = [SlicingCriterion::new("b.c", 4, None)];
    let s = slice(e.graph(), &crit, &SliceOptions::default(), None, &p).unwrap();
    let paths: Vec<&str> = s.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(paths, vec!["a.c", "b.c"]);
    // Lines 4 (a.c) and 2 (b.c) are opening braces whose blocks hold the
    // sliced statements.
    assert_eq!(s.line_numbers("a.c"), vec![4, 5, 6, 7]);
    assert_eq!(s.line_numbers("b.c"), vec![1, 2, 3, 4]);
    // Restricting to the warning's own file drops the caller.
    let only_b = BTreeSet::from(["b.c".to_string()]);
    let s = slice(e.graph(), &crit, &SliceOptions::default(), Some(&only_b), &p).unwrap();
    assert_eq!(s.files.len(), 1);
}

#[test]
fn forward_slice_follows_outgoing_edges() {
    let (p, e) = build(&[("fig4.c", FIG4)]);
    let crit = [SlicingCriterion::new("fig4.c", 8, None)];
    let opts = SliceOptions { direction: Direction::Forward, labels: vec![EdgeLabel::D] };
    let s = slice(e.graph(), &crit, &opts, None, &p).unwrap();
    assert_eq!(s.line_numbers("fig4.c"), vec![8, 12, 15]);
}

#[test]
fn missing_source_is_reported() {
    let (_, e) = build(&[("fig4.c", FIG4)]);
    let empty: BTreeMap<String, String> = BTreeMap::new();
    let err = slice(e.graph(), &fig4_z(), &SliceOptions::default(), None, &empty).unwrap_err();
    assert_eq!(err, SliceError::SourceUnavailable("fig4.c".into()));
}

#[test]
fn slice_json_has_the_documented_shape() {
    let (p, e) = build(&[("fig4.c", FIG4)]);
    let s = slice(e.graph(), &fig4_z(), &SliceOptions::default(), None, &p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["criteria", "direction", "fallback_used", "files"]));
    assert_eq!(v["direction"], "backward");
    assert_eq!(v["fallback_used"], false);
    assert_eq!(v["files"][0]["path"], "fig4.c");
    assert_eq!(v["files"][0]["lines"][0]["n"], 1);
    assert_eq!(v["files"][0]["lines"][0]["text"], "int global_true = 1;");
    assert_eq!(v["criteria"][0]["line"], 15);
    assert_eq!(v["criteria"][0]["column"], 9);
}

#[test]
fn externally_produced_graph_slices_unchanged() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/external");
    let e = import_ecpg(&std::fs::read(dir.join("graph.json")).unwrap()).unwrap();
    let crit = [SlicingCriterion::new("ext.c", 4, None)];
    let s = slice(e.graph(), &crit, &SliceOptions::default(), None, &SourceDir(dir)).unwrap();
    assert_eq!(s.line_numbers("ext.c"), vec![2, 3, 4]);
    assert_eq!(s.files[0].lines[0].text, "  int a = 1;");
}

#[test]
fn criterion_parsing() {
    assert_eq!("a.c:3".parse(), Ok(SlicingCriterion::new("a.c", 3, None)));
    assert_eq!("dir/a.c:3:7".parse(), Ok(SlicingCriterion::new("dir/a.c", 3, Some(7))));
    assert_eq!("C:x.c:4".parse(), Ok(SlicingCriterion::new("C:x.c", 4, None)));
    assert!("a.c".parse::<SlicingCriterion>().is_err());
    assert!(":3".parse::<SlicingCriterion>().is_err());
    assert!("a.c:0".parse::<SlicingCriterion>().is_err());
    for c in [SlicingCriterion::new("x.c", 2, Some(5)), SlicingCriterion::new("x.c", 9, None)] {
        assert_eq!(c.to_string().parse(), Ok(c));
    }
}

// ---- random-graph oracle --------------------------------------------------

fn random_graph(n: usize, edges: &[(usize, usize, usize)]) -> Cpg {
    let mut g = Cpg::default();
    for i in 0..n {
        g.add_node(NodeProps {
            id: NodeId(i as u32),
            kind: NodeKind::Assign,
            file: format!("f{}.c", i % 4),
            line: (i / 4 + 1) as u32,
            column: 1,
            code: String::new(),
            function: None,
        })
        .unwrap();
    }
    for &(a, b, l) in edges {
        g.add_edge(Edge::new(NodeId(a as u32), NodeId(b as u32), EdgeLabel::ALL[l])).unwrap();
    }
    g
}

/// Reachability by repeated boolean matrix squaring over the allowed labels.
fn closure_oracle(
    n: usize,
    edges: &[(usize, usize, usize)],
    seeds: &BTreeSet<NodeId>,
    dir: Direction,
    labels: &[EdgeLabel],
) -> BTreeSet<NodeId> {
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b, l) in edges {
        if labels.contains(&EdgeLabel::ALL[l]) {
            // m[x][y]: y is collected once x is.
            if matches!(dir, Direction::Backward | Direction::Both) {
                m[b][a] = true;
            }
            if matches!(dir, Direction::Forward | Direction::Both) {
                m[a][b] = true;
            }
        }
    }
    let mut len = 1;
    while len < n {
        let mut next = m.clone();
        for (row, next_row) in m.iter().zip(next.iter_mut()) {
            for (k, _) in row.iter().enumerate().filter(|(_, hit)| **hit) {
                for (cell, via) in next_row.iter_mut().zip(&m[k]) {
                    *cell |= *via;
                }
            }
        }
        m = next;
        len *= 2;
    }
    let mut out = BTreeSet::new();
    for s in seeds {
        for (j, hit) in m[s.0 as usize].iter().enumerate() {
            if *hit {
                out.insert(NodeId(j as u32));
            }
        }
    }
    out
}

fn graph_case() -> impl Strategy<Value = (usize, Vec<(usize, usize, usize)>, BTreeSet<NodeId>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n, 0usize..7), 0..4 * n),
            prop::collection::btree_set((0..n as u32).prop_map(NodeId), 0..4),
        )
    })
}

fn labels_strategy() -> impl Strategy<Value = Vec<EdgeLabel>> {
    prop::sample::subsequence(EdgeLabel::ALL.to_vec(), 0..=7)
}

fn direction_strategy() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Backward), Just(Direction::Forward), Just(Direction::Both)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn worklist_equals_matrix_closure((n, edges, seeds) in graph_case(), labels in labels_strategy(), dir in direction_strategy()) {
        let g = random_graph(n, &edges);
        let (r, stats) = slice_nodes_within(&g, &seeds, dir, &labels, None);
        prop_assert_eq!(&r, &closure_oracle(n, &edges, &seeds, dir, &labels));
        prop_assert!(stats.pops <= n);
        prop_assert_eq!(stats.pops, r.len());
    }

    #[test]
    fn slices_are_monotone_idempotent_and_contain_seeds(
        (n, edges, seeds) in graph_case(),
        small in labels_strategy(),
        extra in labels_strategy(),
        dir in direction_strategy(),
    ) {
        let g = random_graph(n, &edges);
        let mut big = small.clone();
        big.extend(extra);
        let r1 = slice_nodes(&g, &seeds, dir, &small);
        let r2 = slice_nodes(&g, &seeds, dir, &big);
        prop_assert!(r1.is_subset(&r2));
        prop_assert!(seeds.is_subset(&r1));
        prop_assert_eq!(slice_nodes(&g, &r1, dir, &small), r1);
    }

    #[test]
    fn file_restriction_only_removes_nodes((n, edges, seeds) in graph_case(), dir in direction_strategy()) {
        let g = random_graph(n, &edges);
        let files = BTreeSet::from(["f0.c".to_string(), "f1.c".to_string()]);
        let (r, _) = slice_nodes_within(&g, &seeds, dir, &DEFAULT_LABELS, Some(&files));
        let full = slice_nodes(&g, &seeds, dir, &DEFAULT_LABELS);
        prop_assert!(r.is_subset(&full));
        for id in r.difference(&seeds) {
            prop_assert!(files.contains(&g.node(*id).unwrap().file));
        }
    }

    #[test]
    fn reconstructed_lines_are_ordered_and_backed_by_nodes((n, edges, seeds) in graph_case()) {
        let g = random_graph(n, &edges);
        let sources: BTreeMap<String, String> =
            (0..4).map(|f| (format!("f{f}.c"), (1..=20).map(|l| format!("line {l} of f{f}.c")).collect::<Vec<_>>().join("\n"))).collect();
        let r = slice_nodes(&g, &seeds, Direction::Backward, &DEFAULT_LABELS);
        let s = reconstruct_source_slice(&g, &r, &[], Direction::Backward, false, &sources).unwrap();
        for f in &s.files {
            prop_assert!(f.lines.windows(2).all(|w| w[0].n < w[1].n));
            for l in &f.lines {
                prop_assert_eq!(&l.text, &format!("line {} of {}", l.n, f.path));
                let backed = r.iter().map(|id| g.node(*id).unwrap()).any(|p| p.file == f.path && p.line == l.n);
                prop_assert!(backed);
            }
        }
    }
}
