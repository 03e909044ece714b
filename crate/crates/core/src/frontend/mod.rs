//! Parsing front end: a documented subset of Python 3.
//!
//! The subset covers the constructs the downstream graph builder models:
//! functions, classes, assignments, control flow, exception handling,
//! imports, calls, attribute and subscript access, and the usual expression
//! operators. Everything else degrades to opaque `Unknown` nodes rather than
//! failing the file. Parsing is a pure function of the input and ASTs are
//! immutable after construction, so files can be parsed concurrently.

pub mod ast;
pub mod lexer;
pub mod parser;

use std::fmt;
use std::path::Path;

pub use ast::{Expr, Module, Span, Stmt};

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("{path}:{line}:{col}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{path}: invalid UTF-8 at byte {offset}")]
    Encoding { path: String, offset: usize },
}

/// One Python source file plus the offset table needed to map byte offsets
/// back to line/column positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
    line_index: LineIndex,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, content: impl Into<String>) -> Self {
        let content = content.into();
        let line_index = LineIndex::new(&content);
        SourceFile {
            path: path.into(),
            content,
            line_index,
        }
    }

    pub fn from_bytes(path: impl Into<String>, bytes: Vec<u8>) -> Result<Self, FrontendError> {
        let path = path.into();
        match String::from_utf8(bytes) {
            Ok(content) => Ok(SourceFile::new(path, content)),
            Err(e) => {
                let offset = e.utf8_error().valid_up_to();
                Err(FrontendError::Encoding { path, offset })
            }
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Result<Self, FrontendError>> {
        let bytes = std::fs::read(path)?;
        Ok(SourceFile::from_bytes(path.display().to_string(), bytes))
    }

    pub fn line_index(&self) -> &LineIndex {
        &self.line_index
    }

    /// 1-based line and column for a byte offset.
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        self.line_index.line_col(offset)
    }

    pub fn slice(&self, span: Span) -> &str {
        &self.content[span.start..span.end]
    }
}

/// Byte offsets of line starts; reconstructs (line, column) for any offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIndex {
    line_starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(content: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in content.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        LineIndex { line_starts }
    }

    /// 1-based line, 1-based column (columns count bytes within the line).
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (line + 1, offset - self.line_starts[line] + 1)
    }

    pub fn offset_of_line(&self, line: usize) -> Option<usize> {
        self.line_starts.get(line.checked_sub(1)?).copied()
    }
}

/// Parse a source file into a module AST.
///
/// Unsupported constructs are lowered to opaque `Unknown` statements. The
/// only hard failure is a file whose token stream cannot be formed at all.
pub fn parse_module(file: &SourceFile) -> Result<Module, FrontendError> {
    let tokens = lexer::tokenize(&file.content).map_err(|e| {
        let (line, col) = file.line_col(e.offset);
        FrontendError::Parse {
            path: file.path.clone(),
            line,
            col,
            message: e.message,
        }
    })?;
    Ok(parser::Parser::new(&file.content, tokens).parse_module())
}

/// Count `Unknown` statement and expression nodes in a module.
pub fn unknown_count(module: &Module) -> usize {
    let mut count = 0;
    ast::walk_stmts(&module.body, &mut |stmt| {
        if matches!(stmt, Stmt::Unknown { .. }) {
            count += 1;
        }
        for expr in stmt.child_exprs() {
            count += unknown_expr_count(expr);
        }
    });
    count
}

fn unknown_expr_count(expr: &Expr) -> usize {
    let own = usize::from(matches!(expr, Expr::Unknown { .. }));
    own + expr
        .children()
        .iter()
        .map(|c| unknown_expr_count(c))
        .sum::<usize>()
}

/// Render an AST as an indented outline, used for golden snapshots.
pub fn render_outline(module: &Module) -> String {
    let mut out = String::new();
    for stmt in &module.body {
        render_stmt(stmt, 0, &mut out);
    }
    out
}

fn render_stmt(stmt: &Stmt, depth: usize, out: &mut String) {
    use fmt::Write;
    let pad = "  ".repeat(depth);
    let label = match stmt {
        Stmt::FunctionDef { name, params, .. } => format!("FunctionDef {name}({})", params.len()),
        Stmt::ClassDef { name, .. } => format!("ClassDef {name}"),
        Stmt::Assign { targets, .. } => format!("Assign targets={}", targets.len()),
        Stmt::AugAssign { op, .. } => format!("AugAssign {}", op.symbol()),
        Stmt::ImportFrom { module, .. } => {
            format!("ImportFrom {}", module.as_deref().unwrap_or("."))
        }
        other => other.kind_name().to_string(),
    };
    let _ = writeln!(out, "{pad}{label}");
    for expr in stmt.child_exprs() {
        render_expr(expr, depth + 1, out);
    }
    match stmt {
        Stmt::If { body, orelse, .. }
        | Stmt::While { body, orelse, .. }
        | Stmt::For { body, orelse, .. } => {
            for s in body {
                render_stmt(s, depth + 1, out);
            }
            if !orelse.is_empty() {
                let _ = writeln!(out, "{pad}  Else");
                for s in orelse {
                    render_stmt(s, depth + 2, out);
                }
            }
        }
        Stmt::Try {
            body,
            handlers,
            orelse,
            finalbody,
            ..
        } => {
            for s in body {
                render_stmt(s, depth + 1, out);
            }
            for h in handlers {
                let _ = writeln!(out, "{pad}  Except");
                for s in &h.body {
                    render_stmt(s, depth + 2, out);
                }
            }
            for s in orelse {
                render_stmt(s, depth + 1, out);
            }
            for s in finalbody {
                render_stmt(s, depth + 1, out);
            }
        }
        Stmt::FunctionDef { body, .. } | Stmt::ClassDef { body, .. } | Stmt::With { body, .. } => {
            for s in body {
                render_stmt(s, depth + 1, out);
            }
        }
        _ => {}
    }
}

fn render_expr(expr: &Expr, depth: usize, out: &mut String) {
    use fmt::Write;
    let pad = "  ".repeat(depth);
    let label = match expr {
        Expr::Name { id, .. } => format!("Name {id}"),
        Expr::Constant { text, .. } => format!("Constant {text}"),
        Expr::Attribute { attr, .. } => format!("Attribute .{attr}"),
        Expr::BinOp { op, .. } => format!("BinOp {}", op.symbol()),
        Expr::UnaryOp { op, .. } => format!("UnaryOp {}", op.symbol()),
        Expr::Compare { ops, .. } => format!(
            "Compare {}",
            ops.iter().map(|o| o.symbol()).collect::<Vec<_>>().join(",")
        ),
        Expr::BoolOp { op, .. } => format!("BoolOp {}", op.symbol()),
        Expr::Display { kind, .. } => format!("Display {kind:?}"),
        other => other.kind_name().to_string(),
    };
    let _ = writeln!(out, "{pad}{label}");
    for child in expr.children() {
        render_expr(child, depth + 1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ast::*;

    fn parse(src: &str) -> Module {
        parse_module(&SourceFile::new("test.py", src)).unwrap()
    }

    #[test]
    fn single_assignment() {
        let m = parse("x = 1");
        assert_eq!(m.body.len(), 1);
        match &m.body[0] {
            Stmt::Assign { targets, value, .. } => {
                assert!(matches!(&targets[0], Expr::Name { id, .. } if id == "x"));
                assert!(
                    matches!(value, Expr::Constant { kind: ConstKind::Int, text, .. } if text == "1")
                );
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn aug_assign_shape() {
        // x *= x - 1  parses to AugAssign[Name x, Mult, BinOp[Name x, Sub, Constant 1]]
        let m = parse("x *= x - 1");
        match &m.body[0] {
            Stmt::AugAssign {
                target, op, value, ..
            } => {
                assert!(matches!(target, Expr::Name { id, .. } if id == "x"));
                assert_eq!(*op, BinOpKind::Mult);
                match value {
                    Expr::BinOp {
                        left, op, right, ..
                    } => {
                        assert!(matches!(left.as_ref(), Expr::Name { id, .. } if id == "x"));
                        assert_eq!(*op, BinOpKind::Sub);
                        assert!(
                            matches!(right.as_ref(), Expr::Constant { text, .. } if text == "1")
                        );
                    }
                    other => panic!("unexpected value {other:?}"),
                }
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn unsupported_statement_becomes_unknown() {
        let m = parse("x = 1\nmatch x:\n    case 1:\n        pass\ny = 2\n");
        assert_eq!(m.body.len(), 3);
        assert!(matches!(&m.body[1], Stmt::Unknown { .. }));
        assert!(matches!(&m.body[2], Stmt::Assign { .. }));
    }

    #[test]
    fn keyword_call_and_method_chain() {
        let m = parse("response = s3_client.create_bucket(Bucket=bucket_name)\n");
        match &m.body[0] {
            Stmt::Assign {
                value: Expr::Call { func, keywords, .. },
                ..
            } => {
                assert_eq!(
                    func.dotted_path().as_deref(),
                    Some("s3_client.create_bucket")
                );
                assert_eq!(keywords[0].arg.as_deref(), Some("Bucket"));
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn star_and_kwargs_params() {
        let m = parse("def f(a, *args, **kwargs):\n    pass\n");
        match &m.body[0] {
            Stmt::FunctionDef { params, .. } => {
                assert_eq!(params.len(), 3);
                assert_eq!(params[1].kind, ParamKind::VarArgs);
                assert_eq!(params[2].kind, ParamKind::KwArgs);
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn fstring_is_opaque_constant() {
        let m = parse("x = f\"a {b} c\"\n");
        match &m.body[0] {
            Stmt::Assign {
                value: Expr::Constant { kind, .. },
                ..
            } => {
                assert_eq!(*kind, ConstKind::FStr);
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn comprehension_is_opaque() {
        let m = parse("x = [i for i in y]\n");
        match &m.body[0] {
            Stmt::Assign { value, .. } => assert!(matches!(value, Expr::Comprehension { .. })),
            other => panic!("unexpected statement {other:?}"),
        }
        assert_eq!(unknown_count(&m), 0);
    }

    #[test]
    fn membership_test() {
        let m = parse("while \"LastEvaluatedKey\" in response:\n    pass\n");
        match &m.body[0] {
            Stmt::While {
                test: Expr::Compare { ops, .. },
                ..
            } => {
                assert_eq!(ops[0], CmpOpKind::In);
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn decorated_property() {
        let m = parse("class A:\n    @property\n    def x(self):\n        return 1\n");
        match &m.body[0] {
            Stmt::ClassDef { body, .. } => match &body[0] {
                Stmt::FunctionDef { decorators, .. } => assert_eq!(decorators.len(), 1),
                other => panic!("unexpected member {other:?}"),
            },
            other => panic!("unexpected statement {other:?}"),
        }
    }

    #[test]
    fn parse_is_deterministic() {
        let src = "def f(a, b=1):\n    if a:\n        return b\n    return f(a - 1)\n";
        assert_eq!(parse(src), parse(src));
    }

    #[test]
    fn invalid_utf8_is_an_encoding_error() {
        let err = SourceFile::from_bytes("bad.py", vec![b'x', 0xff, 0xfe]).unwrap_err();
        assert!(matches!(err, FrontendError::Encoding { .. }));
    }

    #[test]
    fn span_containment() {
        let src = "def f(a):\n    x = a + 1\n    return x\n";
        let m = parse(src);
        fn check(stmt: &Stmt) {
            let span = stmt.span();
            for child in stmt.child_stmts() {
                assert!(span.contains(&child.span()), "child span escapes parent");
                check(child);
            }
            for expr in stmt.child_exprs() {
                assert!(span.contains(&expr.span()));
            }
        }
        for stmt in &m.body {
            check(stmt);
        }
    }

    #[test]
    fn top_level_spans_tile_the_file() {
        let src = "import os\n\nx = 1\n# comment\ndef f():\n    return x\n";
        let m = parse(src);
        let mut cursor = 0usize;
        for stmt in &m.body {
            let span = stmt.span();
            let gap = &src[cursor..span.start];
            for line in gap.lines() {
                let t = line.trim();
                assert!(
                    t.is_empty() || t.starts_with('#'),
                    "unexpected gap content: {t:?}"
                );
            }
            cursor = span.end;
        }
    }
}
