use super::*;

const FIG4: &str = include_str!("../../fixtures/fig4/fig4.c");

fn unit(src: &str) -> TranslationUnit {
    parse_translation_unit(src, "t.c").unwrap()
}

fn find(u: &TranslationUnit, kind: NodeKind, line: u32) -> Vec<&AstNode> {
    u.nodes.iter().filter(|n| n.kind == kind && n.loc.line == line).collect()
}

#[test]
fn empty_input_has_bare_root() {
    let u = unit("");
    assert_eq!(u.root_node().kind, NodeKind::TranslationUnit);
    assert!(u.root_node().children.is_empty());
    assert_eq!(u.node_count(), 1);
}

#[test]
fn single_declaration() {
    let u = unit("int x = 0;");
    let root = u.root_node();
    assert_eq!(root.children.len(), 1);
    let decl = u.node(root.children[0]);
    assert_eq!(decl.kind, NodeKind::VarDecl);
    assert_eq!(decl.loc.line, 1);
    assert_eq!(decl.name.as_deref(), Some("x"));
    assert_eq!(decl.children.len(), 1);
    let lit = u.node(decl.children[0]);
    assert_eq!((lit.kind, lit.code.as_str()), (NodeKind::Literal, "0"));
    // TranslationUnit, VarDecl, Literal.
    assert_eq!(u.node_count(), 3);
}

#[test]
fn fig4_line_attribution() {
    let u = parse_translation_unit(FIG4, "fig4.c").unwrap();
    assert_eq!(find(&u, NodeKind::VarDecl, 1)[0].name.as_deref(), Some("global_true"));
    assert_eq!(find(&u, NodeKind::Call, 3)[0].name.as_deref(), Some("assign"));
    assert_eq!(find(&u, NodeKind::VarDecl, 6).len(), 2);
    assert_eq!(find(&u, NodeKind::Assign, 8).len(), 1);
    assert_eq!(find(&u, NodeKind::Assign, 10)[0].code, "z = x + 1");
    assert_eq!(find(&u, NodeKind::If, 11).len(), 1);
    assert_eq!(find(&u, NodeKind::Else, 14).len(), 1);
    let z15 = find(&u, NodeKind::Assign, 15)[0];
    assert_eq!((z15.code.as_str(), z15.loc.column), ("z = y + 2", 9));
}

#[test]
fn nodes_point_at_their_text() {
    let u = parse_translation_unit(FIG4, "fig4.c").unwrap();
    let lines: Vec<&str> = FIG4.split('\n').collect();
    for n in &u.nodes {
        assert_eq!(&FIG4[n.span.start..n.span.end], n.code);
        let line = lines[n.loc.line as usize - 1];
        assert!(line.as_bytes()[n.loc.column as usize - 1..].starts_with(n.code.lines().next().unwrap_or("").as_bytes()));
        for c in &n.children {
            let child = u.node(*c);
            assert!(child.span.start >= n.span.start && child.span.end <= n.span.end);
            assert_eq!(child.parent, Some(n.id));
        }
    }
}

#[test]
fn enclosing_function_is_set() {
    let u = parse_translation_unit(FIG4, "fig4.c").unwrap();
    let assign_fn = u.functions().find(|f| f.name.as_deref() == Some("assign")).unwrap();
    let z15 = find(&u, NodeKind::Assign, 15)[0];
    assert_eq!(z15.enclosing_function, Some(assign_fn.id));
    assert_eq!(find(&u, NodeKind::VarDecl, 1)[0].enclosing_function, None);
}

#[test]
fn statements_and_expressions() {
    let src = "int a[10];\nint f(int n, ...) {\n  for (int i = 0; i < n; i++) { a[i] = -i * 2; }\n  while (n > 0) n--;\n  switch (n) { case 1: return a[0]; default: break; }\n  return sizeof(int) + (int)3.5 + (n ? 1 : 2);\n}\n";
    let u = unit(src);
    let f = u.functions().next().unwrap();
    assert!(f.decl.as_ref().unwrap().is_variadic);
    let for_node = u.nodes.iter().find(|n| n.kind == NodeKind::For).unwrap();
    let parts = for_node.for_parts.unwrap();
    assert_eq!(u.node(parts.init.unwrap()).kind, NodeKind::VarDecl);
    assert_eq!(u.node(parts.cond.unwrap()).code, "i < n");
    assert_eq!(u.node(parts.step.unwrap()).op.as_deref(), Some("post++"));
    assert_eq!(u.node(parts.body.unwrap()).kind, NodeKind::Block);
    let sw = u.nodes.iter().find(|n| n.kind == NodeKind::Switch).unwrap();
    let labels: Vec<NodeKind> = sw.children[1..].iter().map(|c| u.node(*c).kind).collect();
    assert_eq!(labels, [NodeKind::Case, NodeKind::Default]);
    assert!(u.nodes.iter().any(|n| n.op.as_deref() == Some("cast")));
    assert!(u.nodes.iter().any(|n| n.op.as_deref() == Some("?:")));
}

#[test]
fn syntax_error_reports_location() {
    let err = parse_translation_unit("int f() {\n  goto out;\n}\n", "bad.c").unwrap_err();
    assert_eq!((err.file.as_str(), err.line, err.column), ("bad.c", 2, 3));
}

#[test]
fn recovery_keeps_other_declarations() {
    let (u, errors) = parser::parse_lenient("int f() { do { } while (1); }\nint g = 2;\n", "r.c");
    assert_eq!(errors.len(), 1);
    let names: Vec<_> = u.root_node().children.iter().map(|c| u.node(*c).name.clone().unwrap()).collect();
    assert_eq!(names, ["g"]);
}

#[test]
fn invalid_utf8_is_a_syntax_error() {
    let err = parse_bytes(b"int x;\nint \xff;", "u.c").unwrap_err();
    assert_eq!((err.line, err.column), (2, 5));
}

#[test]
fn deep_nesting_is_rejected_not_overflowed() {
    let src = format!("int x = {}1{};", "(".repeat(5000), ")".repeat(5000));
    assert!(parse_translation_unit(&src, "deep.c").is_err());
}

fn two_files(a: &str, b: &str) -> Project {
    Project::parse(vec![("a.c".into(), a.as_bytes().to_vec()), ("b.c".into(), b.as_bytes().to_vec())])
}

#[test]
fn cross_file_function_resolution() {
    let p = two_files("void f() { }\n", "void g() { f(); }\n");
    let table = build_symbol_tables(&p.units).unwrap();
    let f = table.lookup_global("f").unwrap();
    assert_eq!(f.definition.as_ref().unwrap().loc.file, "a.c");
    assert!(f.declarations.is_empty());
    let call_ident =
        p.unit("b.c").unwrap().nodes.iter().find(|n| n.name.as_deref() == Some("f") && n.kind == NodeKind::Identifier).unwrap();
    assert_eq!(table.resolve(call_ident.id), Some(f.id));
}

#[test]
fn extern_global_resolves_to_definition() {
    let io = include_str!("../../fixtures/fig3/io.c");
    let good = include_str!("../../fixtures/fig3/good.c");
    let p = Project::parse(vec![("good.c".into(), good.into()), ("io.c".into(), io.into())]);
    let table = build_symbol_tables(&p.units).unwrap();
    let sym = table.lookup_global("GLOBAL_CONST_TRUE").unwrap();
    assert_eq!(sym.definition.as_ref().unwrap().loc.file, "io.c");
    assert_eq!(sym.declarations.len(), 1);
    assert_eq!(sym.declarations[0].loc.file, "good.c");
    let use_site = p
        .unit("good.c")
        .unwrap()
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::Identifier && n.name.as_deref() == Some("GLOBAL_CONST_TRUE"))
        .unwrap();
    assert_eq!(table.resolve(use_site.id), Some(sym.id));
}

#[test]
fn duplicate_definition_is_an_error() {
    let p = two_files("int g() { return 1; }\n", "int g() { return 2; }\n");
    match build_symbol_tables(&p.units) {
        Err(SymbolError::DuplicateDefinition { symbol, first, second }) => {
            assert_eq!(symbol, "g");
            assert_eq!((first.file.as_str(), second.file.as_str()), ("a.c", "b.c"));
        }
        other => panic!("expected duplicate definition, got {other:?}"),
    }
}

#[test]
fn statics_are_file_local() {
    let p = two_files("static int k = 1; int ka() { return k; }\n", "static int k = 2; int kb() { return k; }\n");
    let table = build_symbol_tables(&p.units).unwrap();
    let uses: Vec<_> = p.nodes().filter(|n| n.kind == NodeKind::Identifier).map(|n| table.resolve(n.id).unwrap()).collect();
    assert_eq!(uses.len(), 2);
    assert_ne!(uses[0], uses[1]);
}

#[test]
fn local_shadows_global() {
    let src = "int v = 1;\nint f() {\n  int a = v;\n  {\n    int v = 2;\n    a = v;\n  }\n  return v;\n}\n";
    let p = Project::parse(vec![("s.c".into(), src.into())]);
    let table = build_symbol_tables(&p.units).unwrap();
    let kind_on = |line: u32| {
        let ident = p.nodes().find(|n| n.kind == NodeKind::Identifier && n.name.as_deref() == Some("v") && n.loc.line == line).unwrap();
        table.symbol(table.resolve(ident.id).unwrap()).kind
    };
    assert_eq!(kind_on(3), SymbolKind::GlobalVariable);
    assert_eq!(kind_on(6), SymbolKind::LocalVariable);
    assert_eq!(kind_on(8), SymbolKind::GlobalVariable);
}

#[test]
fn unresolved_identifiers_are_recorded() {
    let p = Project::parse(vec![("u.c".into(), b"void f() { printf(\"x\"); missing = 1; }".to_vec())]);
    let table = build_symbol_tables(&p.units).unwrap();
    let names: Vec<_> = table.unresolved().iter().map(|id| p.node(*id).name.clone().unwrap()).collect();
    assert_eq!(names, ["printf", "missing"]);
}

#[test]
fn project_ids_are_unique_and_contiguous() {
    let p = two_files("int a;\n", "int b; int c;\n");
    let ids: Vec<u32> = p.nodes().map(|n| n.id.0).collect();
    assert_eq!(ids, (0..ids.len() as u32).collect::<Vec<_>>());
    assert_eq!(p.node(NodeId(2)).kind, NodeKind::TranslationUnit);
    assert_eq!(p.unit_of(NodeId(3)).file, "b.c");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn program() -> impl Strategy<Value = String> {
        let stmt = prop_oneof![
            Just("x = x + 1;"),
            Just("if (x > 2) { y = x; } else y = 0;"),
            Just("while (y < 3) { y++; }"),
            Just("f(&x, y);"),
            Just("switch (x) { case 1: y = 2; break; default: y = 3; }"),
            Just("for (x = 0; x < 4; x++) y += x;"),
            Just("a[x] = y * 2;"),
        ];
        prop::collection::vec(stmt, 0..8)
            .prop_map(|body| format!("int a[4];\nint g(int x) {{\n  int y = 0;\n  {}\n  return y;\n}}\n", body.join("\n  ")))
    }

    proptest! {
        #[test]
        fn parsing_is_deterministic(src in program()) {
            let a = parse_translation_unit(&src, "p.c").unwrap();
            let b = parse_translation_unit(&src, "p.c").unwrap();
            prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        }

        #[test]
        fn spans_reproduce_the_token_stream(src in program()) {
            let u = parse_translation_unit(&src, "p.c").unwrap();
            let toks = |s: &str| lexer::tokenize(s, "p.c").unwrap().iter().map(|t| s[t.start..t.end].to_string()).collect::<Vec<_>>();
            for n in &u.nodes {
                prop_assert_eq!(&src[n.span.start..n.span.end], n.code.as_str());
                let expected: Vec<String> = lexer::tokenize(&src, "p.c").unwrap().iter()
                    .filter(|t| t.start >= n.span.start && t.end <= n.span.end && t.kind != lexer::TokenKind::Eof)
                    .map(|t| src[t.start..t.end].to_string())
                    .collect();
                let mut got = toks(&n.code);
                got.pop();
                prop_assert_eq!(got, expected);
                let mut last_end = n.span.start;
                for c in &n.children {
                    let child = u.node(*c);
                    prop_assert!(child.span.start >= last_end);
                    last_end = child.span.end;
                }
                prop_assert!(last_end <= n.span.end);
            }
        }

        #[test]
        fn arbitrary_text_never_panics(src in "\\PC{0,200}") {
            let _ = parse_translation_unit(&src, "fuzz.c");
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_bytes(&bytes, "fuzz.c");
        }
    }
}
