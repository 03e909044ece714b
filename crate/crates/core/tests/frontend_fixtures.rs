//! Parser checks against the transcribed fixture corpus.

use sdklint_core::frontend::{self, ast, parse_module, render_outline, unknown_count, SourceFile};
use std::path::PathBuf;

fn fixture(name: &str) -> SourceFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    let content = std::fs::read_to_string(&path).unwrap();
    SourceFile::new(name, content)
}

const LISTINGS: &[&str] = &[
    "lazy_field_client.py",
    "resource_via_helper.py",
    "client_parameter.py",
    "pagination_noncompliant.py",
    "pagination_compliant.py",
    "batch_noncompliant.py",
    "batch_compliant.py",
    "kwargs_client.py",
    "mathexp.py",
];

#[test]
fn every_listing_parses_without_unknown_nodes() {
    for name in LISTINGS {
        let module = parse_module(&fixture(name)).unwrap();
        assert_eq!(unknown_count(&module), 0, "{name} produced Unknown nodes");
        assert!(!module.body.is_empty(), "{name} parsed to an empty module");
    }
}

#[test]
fn parsing_is_deterministic_on_the_corpus() {
    for name in LISTINGS {
        let file = fixture(name);
        assert_eq!(
            parse_module(&file).unwrap(),
            parse_module(&file).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn top_level_span_round_trip() {
    for name in LISTINGS {
        let file = fixture(name);
        let module = parse_module(&file).unwrap();
        let mut cursor = 0usize;
        let mut rebuilt = String::new();
        for stmt in &module.body {
            let span = stmt.span();
            assert!(span.start >= cursor, "{name}: overlapping top-level spans");
            let gap = &file.content[cursor..span.start];
            for line in gap.lines() {
                let trimmed = line.trim();
                assert!(
                    trimmed.is_empty() || trimmed.starts_with('#'),
                    "{name}: non-whitespace gap between statements: {trimmed:?}"
                );
            }
            rebuilt.push_str(gap);
            rebuilt.push_str(&file.content[span.start..span.end]);
            cursor = span.end;
        }
        rebuilt.push_str(&file.content[cursor..]);
        assert_eq!(rebuilt, file.content, "{name}: span concatenation mismatch");
    }
}

#[test]
fn child_spans_contained_in_parents() {
    fn check_stmt(stmt: &ast::Stmt, name: &str) {
        let span = stmt.span();
        for child in stmt.child_stmts() {
            assert!(
                span.contains(&child.span()),
                "{name}: {} escapes parent",
                child.kind_name()
            );
            check_stmt(child, name);
        }
        for expr in stmt.child_exprs() {
            assert!(span.contains(&expr.span()), "{name}: expr escapes parent");
            check_expr(expr, name);
        }
    }
    fn check_expr(expr: &ast::Expr, name: &str) {
        let span = expr.span();
        for child in expr.children() {
            assert!(
                span.contains(&child.span()),
                "{name}: expr child escapes parent"
            );
            check_expr(child, name);
        }
    }
    for name in LISTINGS {
        let module = parse_module(&fixture(name)).unwrap();
        for stmt in &module.body {
            check_stmt(stmt, name);
        }
    }
}

/// Golden AST snapshot for the pagination listing, reviewed once by hand and
/// frozen. Regenerate with `BLESS=1 cargo test -p sdklint-core golden`.
#[test]
fn fig10_golden_ast() {
    let module = parse_module(&fixture("pagination_noncompliant.py")).unwrap();
    let outline = render_outline(&module);
    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/pagination_noncompliant.ast.golden");
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&golden_path, &outline).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(
        outline, golden,
        "pagination_noncompliant AST drifted from the committed snapshot"
    );
    // One FunctionDef containing Assign, For and Call nodes.
    assert_eq!(module.body.len(), 1);
    match &module.body[0] {
        ast::Stmt::FunctionDef { name, body, .. } => {
            assert_eq!(name, "sync_ddb_table");
            assert!(matches!(&body[0], ast::Stmt::Assign { .. }));
            assert!(matches!(&body[1], ast::Stmt::For { .. }));
        }
        other => panic!("unexpected statement {other:?}"),
    }
    assert_eq!(frontend::ast::node_count(&module), 18);
}

#[test]
fn error_only_when_no_statement_list_recoverable() {
    // A stray backslash breaks tokenization of the whole file.
    let bad = SourceFile::new("bad.py", "x = \\ 1\n");
    let err = parse_module(&bad).unwrap_err();
    match err {
        frontend::FrontendError::Parse { line, col, .. } => {
            assert_eq!(line, 1);
            assert!(col >= 4);
        }
        other => panic!("unexpected error {other}"),
    }
}
