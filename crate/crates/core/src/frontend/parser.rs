//! Recursive-descent parser over the token stream.
//!
//! Parsing is best-effort: a statement that cannot be parsed is swallowed
//! (including its indented block, if it opens one) and recorded as an opaque
//! `Unknown` statement. The parser only fails outright when no top-level
//! statement list can be recovered at all.

use super::ast::*;
use super::lexer::{Tok, Token};

pub struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

type PResult<T> = Result<T, SyntaxError>;

impl<'a> Parser<'a> {
    pub fn new(src: &'a str, tokens: Vec<Token>) -> Self {
        Parser {
            src,
            tokens,
            pos: 0,
        }
    }

    pub fn parse_module(mut self) -> Module {
        let body = self.parse_stmt_list_until_eof();
        let span = Span::new(0, self.src.len());
        Module { body, span }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos.min(self.tokens.len() - 1)].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)].tok
    }

    fn cur_span(&self) -> Span {
        self.tokens[self.pos.min(self.tokens.len() - 1)].span
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn at_name(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<Span> {
        if self.at_op(op) {
            Ok(self.bump().span)
        } else {
            Err(self.error(format!("expected `{op}`, found {}", self.peek().describe())))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_name(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_name(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Name(n) => {
                let span = self.bump().span;
                Ok((n, span))
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn error(&self, message: String) -> SyntaxError {
        SyntaxError {
            offset: self.cur_span().start,
            message,
        }
    }

    // ------------------------------------------------------------------
    // Statements
    // ------------------------------------------------------------------

    fn parse_stmt_list_until_eof(&mut self) -> Vec<Stmt> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Newline | Tok::Indent | Tok::Dedent => {
                    self.bump();
                }
                _ => out.extend(self.parse_stmt_recovering()),
            }
        }
        out
    }

    /// Parse one statement; on error, swallow the logical line (plus any
    /// block it opens) into an `Unknown` node.
    fn parse_stmt_recovering(&mut self) -> Vec<Stmt> {
        let start_pos = self.pos;
        match self.parse_statement() {
            Ok(stmts) => stmts,
            Err(_) => {
                self.pos = start_pos;
                vec![self.swallow_unknown()]
            }
        }
    }

    fn swallow_unknown(&mut self) -> Stmt {
        let start = self.cur_span().start;
        let mut end = self.cur_span().end;
        // Consume up to and including the newline of this logical line.
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                    break;
                }
                _ => {
                    end = self.cur_span().end;
                    self.bump();
                }
            }
        }
        // If the line opened a block, consume the whole block.
        if matches!(self.peek(), Tok::Indent) {
            let mut depth = 0usize;
            loop {
                match self.peek() {
                    Tok::Indent => {
                        depth += 1;
                        self.bump();
                    }
                    Tok::Dedent => {
                        self.bump();
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    Tok::Eof => break,
                    _ => {
                        end = self.cur_span().end;
                        self.bump();
                    }
                }
            }
        }
        let span = Span::new(start, end.max(start));
        Stmt::Unknown {
            text: self.src[span.start..span.end].to_string(),
            span,
        }
    }

    /// One statement line; returns multiple for `a = 1; b = 2`.
    fn parse_statement(&mut self) -> PResult<Vec<Stmt>> {
        match self.peek().clone() {
            Tok::Name(n) => match n.as_str() {
                "def" => Ok(vec![self.parse_function_def(Vec::new(), false)?]),
                "async" => {
                    if matches!(self.peek_at(1), Tok::Name(n2) if n2 == "def") {
                        self.bump();
                        Ok(vec![self.parse_function_def(Vec::new(), true)?])
                    } else {
                        Err(self.error("unsupported `async` construct".to_string()))
                    }
                }
                "class" => Ok(vec![self.parse_class_def(Vec::new())?]),
                "if" => Ok(vec![self.parse_if()?]),
                "while" => Ok(vec![self.parse_while()?]),
                "for" => Ok(vec![self.parse_for()?]),
                "try" => Ok(vec![self.parse_try()?]),
                "with" => Ok(vec![self.parse_with()?]),
                _ => self.parse_simple_stmt_line(),
            },
            Tok::Op("@") => self.parse_decorated(),
            _ => self.parse_simple_stmt_line(),
        }
    }

    fn parse_decorated(&mut self) -> PResult<Vec<Stmt>> {
        let mut decorators = Vec::new();
        while self.at_op("@") {
            self.bump();
            let deco = self.parse_expr()?;
            decorators.push(deco);
            if !matches!(self.peek(), Tok::Newline) {
                return Err(self.error("expected newline after decorator".to_string()));
            }
            self.bump();
        }
        if self.at_name("def") {
            Ok(vec![self.parse_function_def(decorators, false)?])
        } else if self.at_name("async") && matches!(self.peek_at(1), Tok::Name(n) if n == "def") {
            self.bump();
            Ok(vec![self.parse_function_def(decorators, true)?])
        } else if self.at_name("class") {
            Ok(vec![self.parse_class_def(decorators)?])
        } else {
            Err(self.error("decorator not followed by def or class".to_string()))
        }
    }

    /// A `;`-separated list of small statements terminated by a newline.
    fn parse_simple_stmt_line(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.parse_small_stmt()?];
        while self.eat_op(";") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                break;
            }
            out.push(self.parse_small_stmt()?);
        }
        match self.peek() {
            Tok::Newline => {
                self.bump();
            }
            Tok::Eof | Tok::Dedent => {}
            other => {
                return Err(self.error(format!("unexpected {} after statement", other.describe())))
            }
        }
        Ok(out)
    }

    fn parse_small_stmt(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        match self.peek().clone() {
            Tok::Name(n) => match n.as_str() {
                "return" => {
                    self.bump();
                    let value = if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Op(";")) {
                        None
                    } else {
                        Some(self.parse_expr_or_tuple()?)
                    };
                    let end = value
                        .as_ref()
                        .map(|v| v.span().end)
                        .unwrap_or(self.prev_end());
                    Ok(Stmt::Return {
                        value,
                        span: Span::new(start, end),
                    })
                }
                "pass" => {
                    let span = self.bump().span;
                    Ok(Stmt::Pass { span })
                }
                "break" => {
                    let span = self.bump().span;
                    Ok(Stmt::Break { span })
                }
                "continue" => {
                    let span = self.bump().span;
                    Ok(Stmt::Continue { span })
                }
                "raise" => {
                    self.bump();
                    let mut exc = None;
                    let mut cause = None;
                    if !matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Op(";")) {
                        exc = Some(self.parse_expr()?);
                        if self.eat_keyword("from") {
                            cause = Some(self.parse_expr()?);
                        }
                    }
                    Ok(Stmt::Raise {
                        exc,
                        cause,
                        span: Span::new(start, self.prev_end()),
                    })
                }
                "assert" => {
                    self.bump();
                    let test = self.parse_expr()?;
                    let msg = if self.eat_op(",") {
                        Some(self.parse_expr()?)
                    } else {
                        None
                    };
                    Ok(Stmt::Assert {
                        test,
                        msg,
                        span: Span::new(start, self.prev_end()),
                    })
                }
                "import" => self.parse_import(start),
                "from" => self.parse_import_from(start),
                "global" | "nonlocal" | "del" | "yield" | "await" | "match" => {
                    Err(self.error(format!("unsupported statement `{n}`")))
                }
                _ => self.parse_expr_like_stmt(start),
            },
            _ => self.parse_expr_like_stmt(start),
        }
    }

    fn parse_import(&mut self, start: usize) -> PResult<Stmt> {
        self.bump(); // import
        let mut names = Vec::new();
        loop {
            names.push(self.parse_alias()?);
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(Stmt::Import {
            names,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_import_from(&mut self, start: usize) -> PResult<Stmt> {
        self.bump(); // from
        let mut level = 0usize;
        loop {
            if self.eat_op(".") {
                level += 1;
            } else if self.at_op("...") {
                self.bump();
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.at_name("import") {
            None
        } else {
            Some(self.parse_dotted_name()?)
        };
        if !self.eat_keyword("import") {
            return Err(self.error("expected `import` in from-import".to_string()));
        }
        let mut names = Vec::new();
        if self.eat_op("*") {
            let span = Span::new(self.prev_end() - 1, self.prev_end());
            names.push(Alias {
                name: "*".to_string(),
                asname: None,
                span,
            });
        } else {
            let parenthesized = self.eat_op("(");
            loop {
                names.push(self.parse_alias()?);
                if !self.eat_op(",") {
                    break;
                }
                if parenthesized && self.at_op(")") {
                    break;
                }
            }
            if parenthesized {
                self.expect_op(")")?;
            }
        }
        Ok(Stmt::ImportFrom {
            module,
            names,
            level,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_alias(&mut self) -> PResult<Alias> {
        let start = self.cur_span().start;
        let name = self.parse_dotted_name()?;
        let asname = if self.eat_keyword("as") {
            Some(self.expect_name()?.0)
        } else {
            None
        };
        Ok(Alias {
            name,
            asname,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_dotted_name(&mut self) -> PResult<String> {
        let (mut name, _) = self.expect_name()?;
        while self.at_op(".") && matches!(self.peek_at(1), Tok::Name(_)) {
            self.bump();
            let (part, _) = self.expect_name()?;
            name.push('.');
            name.push_str(&part);
        }
        Ok(name)
    }

    /// Assignment, augmented assignment, annotated assignment, or bare
    /// expression statement.
    fn parse_expr_like_stmt(&mut self, start: usize) -> PResult<Stmt> {
        let first = self.parse_expr_or_tuple()?;

        // Annotated assignment: `x: T = v` or bare `x: T`.
        if self.at_op(":") && matches!(first, Expr::Name { .. }) {
            self.bump();
            let ann_start = self.cur_span().start;
            let _ann_expr = self.parse_expr()?;
            let annotation = Some(self.src[ann_start..self.prev_end()].trim().to_string());
            if self.eat_op("=") {
                let value = self.parse_expr_or_tuple()?;
                return Ok(Stmt::Assign {
                    targets: vec![first],
                    value,
                    annotation,
                    span: Span::new(start, self.prev_end()),
                });
            }
            // A bare annotation declares but does not assign; keep the
            // declaration as an assignment of an unknown placeholder so the
            // annotation text survives.
            let span = Span::new(start, self.prev_end());
            return Ok(Stmt::Assign {
                targets: vec![first],
                value: Expr::Unknown {
                    text: String::new(),
                    span: Span::new(span.end, span.end),
                },
                annotation,
                span,
            });
        }

        // Augmented assignment.
        let aug = match self.peek() {
            Tok::Op("+=") => Some(BinOpKind::Add),
            Tok::Op("-=") => Some(BinOpKind::Sub),
            Tok::Op("*=") => Some(BinOpKind::Mult),
            Tok::Op("/=") => Some(BinOpKind::Div),
            Tok::Op("//=") => Some(BinOpKind::FloorDiv),
            Tok::Op("%=") => Some(BinOpKind::Mod),
            Tok::Op("**=") => Some(BinOpKind::Pow),
            Tok::Op("@=") => Some(BinOpKind::MatMult),
            Tok::Op("&=") => Some(BinOpKind::BitAnd),
            Tok::Op("|=") => Some(BinOpKind::BitOr),
            Tok::Op("^=") => Some(BinOpKind::BitXor),
            Tok::Op("<<=") => Some(BinOpKind::LShift),
            Tok::Op(">>=") => Some(BinOpKind::RShift),
            _ => None,
        };
        if let Some(op) = aug {
            self.bump();
            let value = self.parse_expr_or_tuple()?;
            if !is_assign_target(&first) {
                return Err(self.error("invalid augmented assignment target".to_string()));
            }
            return Ok(Stmt::AugAssign {
                target: first,
                op,
                value,
                span: Span::new(start, self.prev_end()),
            });
        }

        // Chained plain assignment: `a = b = expr`.
        if self.at_op("=") {
            let mut targets = vec![first];
            let mut value = None;
            while self.eat_op("=") {
                let e = self.parse_expr_or_tuple()?;
                if self.at_op("=") {
                    targets.push(e);
                } else {
                    value = Some(e);
                }
            }
            let value = value.ok_or_else(|| self.error("missing assignment value".to_string()))?;
            for t in &targets {
                if !is_assign_target(t) {
                    return Err(self.error("invalid assignment target".to_string()));
                }
            }
            return Ok(Stmt::Assign {
                targets,
                value,
                annotation: None,
                span: Span::new(start, self.prev_end()),
            });
        }

        Ok(Stmt::ExprStmt {
            value: first,
            span: Span::new(start, self.prev_end()),
        })
    }

    // ------------------------------------------------------------------
    // Compound statements
    // ------------------------------------------------------------------

    fn parse_suite(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if matches!(self.peek(), Tok::Newline) {
            self.bump();
            if !matches!(self.peek(), Tok::Indent) {
                return Err(self.error("expected an indented block".to_string()));
            }
            self.bump();
            let mut body = Vec::new();
            loop {
                match self.peek() {
                    Tok::Dedent => {
                        self.bump();
                        break;
                    }
                    Tok::Eof => break,
                    Tok::Newline => {
                        self.bump();
                    }
                    _ => body.extend(self.parse_stmt_recovering()),
                }
            }
            Ok(body)
        } else {
            // Inline suite: `if x: y = 1`
            self.parse_simple_stmt_line()
        }
    }

    fn parse_function_def(&mut self, decorators: Vec<Expr>, is_async: bool) -> PResult<Stmt> {
        let start = decorators
            .first()
            .map(|d| d.span().start)
            .unwrap_or(self.cur_span().start);
        self.bump(); // def
        let (name, _) = self.expect_name()?;
        self.expect_op("(")?;
        let params = self.parse_param_list()?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") {
            let ann_start = self.cur_span().start;
            let _ = self.parse_expr()?;
            Some(self.src[ann_start..self.prev_end()].trim().to_string())
        } else {
            None
        };
        let body = self.parse_suite()?;
        let end = body.last().map(|s| s.span().end).unwrap_or(self.prev_end());
        Ok(Stmt::FunctionDef {
            name,
            params,
            body,
            decorators,
            returns,
            is_async,
            span: Span::new(start, end),
        })
    }

    fn parse_param_list(&mut self) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        while !self.at_op(")") && !matches!(self.peek(), Tok::Eof) {
            let start = self.cur_span().start;
            let kind = if self.eat_op("**") {
                ParamKind::KwArgs
            } else if self.eat_op("*") {
                if self.at_op(",") || self.at_op(")") {
                    // Bare `*` keyword-only marker.
                    self.eat_op(",");
                    continue;
                }
                ParamKind::VarArgs
            } else {
                ParamKind::Plain
            };
            let (name, _) = self.expect_name()?;
            let annotation = if self.eat_op(":") {
                let ann_start = self.cur_span().start;
                let _ = self.parse_expr()?;
                Some(self.src[ann_start..self.prev_end()].trim().to_string())
            } else {
                None
            };
            let default = if self.eat_op("=") {
                let d_start = self.cur_span().start;
                let _ = self.parse_expr()?;
                Some(self.src[d_start..self.prev_end()].trim().to_string())
            } else {
                None
            };
            params.push(Param {
                name,
                annotation,
                default,
                kind,
                span: Span::new(start, self.prev_end()),
            });
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    fn parse_class_def(&mut self, decorators: Vec<Expr>) -> PResult<Stmt> {
        let start = decorators
            .first()
            .map(|d| d.span().start)
            .unwrap_or(self.cur_span().start);
        self.bump(); // class
        let (name, _) = self.expect_name()?;
        let mut bases = Vec::new();
        if self.eat_op("(") {
            while !self.at_op(")") {
                // Skip keyword arguments like `metaclass=...` in bases.
                if matches!(self.peek(), Tok::Name(_)) && matches!(self.peek_at(1), Tok::Op("=")) {
                    self.bump();
                    self.bump();
                    let _ = self.parse_expr()?;
                } else {
                    bases.push(self.parse_expr()?);
                }
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(")")?;
        }
        let body = self.parse_suite()?;
        let end = body.last().map(|s| s.span().end).unwrap_or(self.prev_end());
        Ok(Stmt::ClassDef {
            name,
            bases,
            body,
            decorators,
            span: Span::new(start, end),
        })
    }

    fn parse_if(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        self.bump(); // if / elif
        let test = self.parse_expr_or_tuple()?;
        let body = self.parse_suite()?;
        let mut orelse = Vec::new();
        if self.at_name("elif") {
            let nested = self.parse_if()?;
            orelse.push(nested);
        } else if self.at_name("else") {
            self.bump();
            orelse = self.parse_suite()?;
        }
        let end = orelse
            .last()
            .map(|s| s.span().end)
            .or_else(|| body.last().map(|s| s.span().end))
            .unwrap_or(self.prev_end());
        Ok(Stmt::If {
            test,
            body,
            orelse,
            span: Span::new(start, end),
        })
    }

    fn parse_while(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        self.bump();
        let test = self.parse_expr_or_tuple()?;
        let body = self.parse_suite()?;
        let mut orelse = Vec::new();
        if self.at_name("else") {
            self.bump();
            orelse = self.parse_suite()?;
        }
        Ok(Stmt::While {
            test,
            body,
            orelse,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_for(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        self.bump();
        let target = self.parse_target_tuple()?;
        if !self.eat_keyword("in") {
            return Err(self.error("expected `in` in for statement".to_string()));
        }
        let iter = self.parse_expr_or_tuple()?;
        let body = self.parse_suite()?;
        let mut orelse = Vec::new();
        if self.at_name("else") {
            self.bump();
            orelse = self.parse_suite()?;
        }
        Ok(Stmt::For {
            target,
            iter,
            body,
            orelse,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_try(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        self.bump();
        let body = self.parse_suite()?;
        let mut handlers = Vec::new();
        while self.at_name("except") {
            let h_start = self.cur_span().start;
            self.bump();
            let mut exc = None;
            let mut name = None;
            if !self.at_op(":") {
                exc = Some(self.parse_expr()?);
                if self.eat_keyword("as") {
                    name = Some(self.expect_name()?.0);
                }
            }
            let h_body = self.parse_suite()?;
            handlers.push(ExceptHandler {
                exc,
                name,
                body: h_body,
                span: Span::new(h_start, self.prev_end()),
            });
        }
        let mut orelse = Vec::new();
        if self.at_name("else") {
            self.bump();
            orelse = self.parse_suite()?;
        }
        let mut finalbody = Vec::new();
        if self.at_name("finally") {
            self.bump();
            finalbody = self.parse_suite()?;
        }
        if handlers.is_empty() && finalbody.is_empty() {
            return Err(self.error("try statement needs except or finally".to_string()));
        }
        Ok(Stmt::Try {
            body,
            handlers,
            orelse,
            finalbody,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_with(&mut self) -> PResult<Stmt> {
        let start = self.cur_span().start;
        self.bump();
        let mut items = Vec::new();
        loop {
            let context = self.parse_expr()?;
            let target = if self.eat_keyword("as") {
                Some(self.parse_target_tuple()?)
            } else {
                None
            };
            items.push(WithItem { context, target });
            if !self.eat_op(",") {
                break;
            }
        }
        let body = self.parse_suite()?;
        Ok(Stmt::With {
            items,
            body,
            span: Span::new(start, self.prev_end()),
        })
    }

    // ------------------------------------------------------------------
    // Expressions
    // ------------------------------------------------------------------

    /// Expression possibly followed by `, ...` forming an unparenthesized tuple.
    fn parse_expr_or_tuple(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let first = self.parse_expr()?;
        if self.at_op(",") {
            let mut elts = vec![first];
            while self.eat_op(",") {
                if matches!(
                    self.peek(),
                    Tok::Newline
                        | Tok::Eof
                        | Tok::Op("=")
                        | Tok::Op(")")
                        | Tok::Op("]")
                        | Tok::Op("}")
                        | Tok::Op(":")
                ) {
                    break;
                }
                elts.push(self.parse_expr()?);
            }
            let span = Span::new(start, self.prev_end());
            return Ok(Expr::Display {
                kind: DisplayKind::Tuple,
                elts,
                span,
            });
        }
        Ok(first)
    }

    /// Assignment-target list, e.g. the `item` in `for item in xs`. Parsed at
    /// postfix level so a following `in` keyword is not mistaken for a
    /// membership comparison.
    fn parse_target_tuple(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let first = self.parse_target_atom()?;
        if self.at_op(",") {
            let mut elts = vec![first];
            while self.eat_op(",") {
                if matches!(self.peek(), Tok::Newline | Tok::Eof)
                    || self.at_op(")")
                    || self.at_op("]")
                    || self.at_op(":")
                    || self.at_name("in")
                {
                    break;
                }
                elts.push(self.parse_target_atom()?);
            }
            let span = Span::new(start, self.prev_end());
            return Ok(Expr::Display {
                kind: DisplayKind::Tuple,
                elts,
                span,
            });
        }
        Ok(first)
    }

    fn parse_target_atom(&mut self) -> PResult<Expr> {
        if self.at_op("*") {
            let start = self.cur_span().start;
            self.bump();
            let value = self.parse_postfix()?;
            let span = Span::new(start, value.span().end);
            return Ok(Expr::Starred {
                value: Box::new(value),
                span,
            });
        }
        self.parse_postfix()
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        if self.at_name("lambda") {
            return self.parse_lambda();
        }
        let start = self.cur_span().start;
        let value = self.parse_or()?;
        // Conditional expressions are outside the subset; swallow them.
        if self.at_name("if") {
            self.bump();
            let _cond = self.parse_or()?;
            if !self.eat_keyword("else") {
                return Err(self.error("expected `else` in conditional expression".to_string()));
            }
            let _ = self.parse_expr()?;
            let span = Span::new(start, self.prev_end());
            return Ok(Expr::Unknown {
                text: self.src[span.start..span.end].to_string(),
                span,
            });
        }
        // Walrus assignments likewise.
        if self.at_op(":=") {
            self.bump();
            let _ = self.parse_expr()?;
            let span = Span::new(start, self.prev_end());
            return Ok(Expr::Unknown {
                text: self.src[span.start..span.end].to_string(),
                span,
            });
        }
        Ok(value)
    }

    fn parse_lambda(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        self.bump(); // lambda
        let mut params = Vec::new();
        while !self.at_op(":") {
            let p_start = self.cur_span().start;
            let kind = if self.eat_op("**") {
                ParamKind::KwArgs
            } else if self.eat_op("*") {
                ParamKind::VarArgs
            } else {
                ParamKind::Plain
            };
            let (name, _) = self.expect_name()?;
            let default = if self.eat_op("=") {
                let d_start = self.cur_span().start;
                let _ = self.parse_expr()?;
                Some(self.src[d_start..self.prev_end()].trim().to_string())
            } else {
                None
            };
            params.push(Param {
                name,
                annotation: None,
                default,
                kind,
                span: Span::new(p_start, self.prev_end()),
            });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(":")?;
        let body = self.parse_expr()?;
        let span = Span::new(start, self.prev_end());
        Ok(Expr::Lambda {
            params,
            body: Box::new(body),
            span,
        })
    }

    fn parse_or(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let first = self.parse_and()?;
        if !self.at_name("or") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_keyword("or") {
            values.push(self.parse_and()?);
        }
        Ok(Expr::BoolOp {
            op: BoolOpKind::Or,
            values,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_and(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let first = self.parse_not()?;
        if !self.at_name("and") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_keyword("and") {
            values.push(self.parse_not()?);
        }
        Ok(Expr::BoolOp {
            op: BoolOpKind::And,
            values,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_not(&mut self) -> PResult<Expr> {
        if self.at_name("not") {
            let start = self.cur_span().start;
            self.bump();
            let operand = self.parse_not()?;
            let span = Span::new(start, operand.span().end);
            return Ok(Expr::UnaryOp {
                op: UnaryOpKind::Not,
                operand: Box::new(operand),
                span,
            });
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let left = self.parse_bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Op("==") => Some(CmpOpKind::Eq),
                Tok::Op("!=") => Some(CmpOpKind::NotEq),
                Tok::Op("<") => Some(CmpOpKind::Lt),
                Tok::Op("<=") => Some(CmpOpKind::LtE),
                Tok::Op(">") => Some(CmpOpKind::Gt),
                Tok::Op(">=") => Some(CmpOpKind::GtE),
                Tok::Name(n) if n == "in" => Some(CmpOpKind::In),
                Tok::Name(n) if n == "is" => {
                    if matches!(self.peek_at(1), Tok::Name(n2) if n2 == "not") {
                        self.bump();
                        Some(CmpOpKind::IsNot)
                    } else {
                        Some(CmpOpKind::Is)
                    }
                }
                Tok::Name(n) if n == "not" => {
                    if matches!(self.peek_at(1), Tok::Name(n2) if n2 == "in") {
                        self.bump();
                        Some(CmpOpKind::NotIn)
                    } else {
                        None
                    }
                }
                _ => None,
            };
            match op {
                Some(op) => {
                    self.bump();
                    ops.push(op);
                    comparators.push(self.parse_bitor()?);
                }
                None => break,
            }
        }
        if ops.is_empty() {
            Ok(left)
        } else {
            Ok(Expr::Compare {
                left: Box::new(left),
                ops,
                comparators,
                span: Span::new(start, self.prev_end()),
            })
        }
    }

    fn parse_bitor(&mut self) -> PResult<Expr> {
        self.parse_binop_level(0)
    }

    /// Binary operator precedence levels, loosest first.
    fn parse_binop_level(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(&str, BinOpKind)]] = &[
            &[("|", BinOpKind::BitOr)],
            &[("^", BinOpKind::BitXor)],
            &[("&", BinOpKind::BitAnd)],
            &[("<<", BinOpKind::LShift), (">>", BinOpKind::RShift)],
            &[("+", BinOpKind::Add), ("-", BinOpKind::Sub)],
            &[
                ("*", BinOpKind::Mult),
                ("/", BinOpKind::Div),
                ("//", BinOpKind::FloorDiv),
                ("%", BinOpKind::Mod),
                ("@", BinOpKind::MatMult),
            ],
        ];
        if level >= LEVELS.len() {
            return self.parse_unary();
        }
        let start = self.cur_span().start;
        let mut left = self.parse_binop_level(level + 1)?;
        loop {
            let mut matched = None;
            for (sym, kind) in LEVELS[level] {
                if self.at_op(sym) {
                    matched = Some(*kind);
                    break;
                }
            }
            match matched {
                Some(op) => {
                    self.bump();
                    let right = self.parse_binop_level(level + 1)?;
                    let span = Span::new(start, right.span().end);
                    left = Expr::BinOp {
                        left: Box::new(left),
                        op,
                        right: Box::new(right),
                        span,
                    };
                }
                None => return Ok(left),
            }
        }
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let op = match self.peek() {
            Tok::Op("-") => Some(UnaryOpKind::Neg),
            Tok::Op("+") => Some(UnaryOpKind::Pos),
            Tok::Op("~") => Some(UnaryOpKind::Invert),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.parse_unary()?;
            let span = Span::new(start, operand.span().end);
            return Ok(Expr::UnaryOp {
                op,
                operand: Box::new(operand),
                span,
            });
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let base = self.parse_postfix()?;
        if self.at_op("**") {
            self.bump();
            let exp = self.parse_unary()?;
            let span = Span::new(start, exp.span().end);
            return Ok(Expr::BinOp {
                left: Box::new(base),
                op: BinOpKind::Pow,
                right: Box::new(exp),
                span,
            });
        }
        Ok(base)
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let mut expr = self.parse_atom()?;
        loop {
            if self.at_op(".") {
                self.bump();
                let (attr, _) = self.expect_name()?;
                let span = Span::new(start, self.prev_end());
                expr = Expr::Attribute {
                    value: Box::new(expr),
                    attr,
                    span,
                };
            } else if self.at_op("(") {
                self.bump();
                let (args, keywords) = self.parse_call_args()?;
                self.expect_op(")")?;
                let span = Span::new(start, self.prev_end());
                expr = Expr::Call {
                    func: Box::new(expr),
                    args,
                    keywords,
                    span,
                };
            } else if self.at_op("[") {
                self.bump();
                let index = self.parse_subscript_index()?;
                self.expect_op("]")?;
                let span = Span::new(start, self.prev_end());
                expr = Expr::Subscript {
                    value: Box::new(expr),
                    index: Box::new(index),
                    span,
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn parse_subscript_index(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        // Slices are preserved as opaque expressions.
        if self.at_op(":") {
            return self.swallow_slice(start, None);
        }
        let first = self.parse_expr()?;
        if self.at_op(":") {
            return self.swallow_slice(start, Some(first));
        }
        if self.at_op(",") {
            let mut elts = vec![first];
            while self.eat_op(",") {
                if self.at_op("]") {
                    break;
                }
                elts.push(self.parse_expr()?);
            }
            let span = Span::new(start, self.prev_end());
            return Ok(Expr::Display {
                kind: DisplayKind::Tuple,
                elts,
                span,
            });
        }
        Ok(first)
    }

    fn swallow_slice(&mut self, start: usize, _first: Option<Expr>) -> PResult<Expr> {
        while !self.at_op("]") && !matches!(self.peek(), Tok::Eof | Tok::Newline) {
            if self.at_op(":") || self.at_op(",") {
                self.bump();
            } else {
                let _ = self.parse_expr()?;
            }
        }
        let span = Span::new(start, self.prev_end().max(start));
        Ok(Expr::Unknown {
            text: self.src[span.start..span.end].to_string(),
            span,
        })
    }

    fn parse_call_args(&mut self) -> PResult<(Vec<Expr>, Vec<Keyword>)> {
        let mut args = Vec::new();
        let mut keywords = Vec::new();
        while !self.at_op(")") && !matches!(self.peek(), Tok::Eof) {
            let start = self.cur_span().start;
            if self.eat_op("**") {
                let value = self.parse_expr()?;
                keywords.push(Keyword {
                    arg: None,
                    value,
                    span: Span::new(start, self.prev_end()),
                });
            } else if self.eat_op("*") {
                let value = self.parse_expr()?;
                let span = Span::new(start, self.prev_end());
                args.push(Expr::Starred {
                    value: Box::new(value),
                    span,
                });
            } else if matches!(self.peek(), Tok::Name(_)) && matches!(self.peek_at(1), Tok::Op("="))
            {
                let (name, _) = self.expect_name()?;
                self.bump(); // =
                let value = self.parse_expr()?;
                keywords.push(Keyword {
                    arg: Some(name),
                    value,
                    span: Span::new(start, self.prev_end()),
                });
            } else {
                let value = self.parse_expr()?;
                // Generator argument: f(x for x in y)
                if self.at_name("for") {
                    let open_pos = start;
                    self.swallow_comprehension_tail()?;
                    let span = Span::new(open_pos, self.prev_end());
                    args.push(Expr::Comprehension {
                        text: self.src[span.start..span.end].to_string(),
                        span,
                    });
                } else {
                    args.push(value);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok((args, keywords))
    }

    /// Consume a comprehension tail (`for ... in ... [if ...]`...) without
    /// building structure. Stops before the closing bracket.
    fn swallow_comprehension_tail(&mut self) -> PResult<()> {
        while self.at_name("for") || self.at_name("if") || self.at_name("async") {
            if self.eat_keyword("async") {
                continue;
            }
            if self.eat_keyword("for") {
                let _ = self.parse_target_tuple()?;
                if !self.eat_keyword("in") {
                    return Err(self.error("expected `in` in comprehension".to_string()));
                }
                let _ = self.parse_or()?;
            } else if self.eat_keyword("if") {
                let _ = self.parse_or()?;
            }
        }
        Ok(())
    }

    fn parse_atom(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        match self.peek().clone() {
            Tok::Name(n) => match n.as_str() {
                "True" | "False" => {
                    let span = self.bump().span;
                    Ok(Expr::Constant {
                        kind: ConstKind::Bool,
                        text: n.clone(),
                        value: n,
                        span,
                    })
                }
                "None" => {
                    let span = self.bump().span;
                    Ok(Expr::Constant {
                        kind: ConstKind::NoneLit,
                        text: n.clone(),
                        value: n,
                        span,
                    })
                }
                "lambda" => self.parse_lambda(),
                "not" => self.parse_not(),
                "await" | "yield" => Err(self.error(format!("unsupported expression `{n}`"))),
                _ => {
                    let span = self.bump().span;
                    Ok(Expr::Name { id: n, span })
                }
            },
            Tok::Int(text) => {
                let span = self.bump().span;
                Ok(Expr::Constant {
                    kind: ConstKind::Int,
                    text: text.clone(),
                    value: text,
                    span,
                })
            }
            Tok::Float(text) => {
                let span = self.bump().span;
                Ok(Expr::Constant {
                    kind: ConstKind::Float,
                    text: text.clone(),
                    value: text,
                    span,
                })
            }
            Tok::Str { .. } => self.parse_string_atom(),
            Tok::Op("...") => {
                let span = self.bump().span;
                Ok(Expr::Constant {
                    kind: ConstKind::Ellipsis,
                    text: "...".to_string(),
                    value: "...".to_string(),
                    span,
                })
            }
            Tok::Op("(") => {
                self.bump();
                if self.at_op(")") {
                    self.bump();
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Display {
                        kind: DisplayKind::Tuple,
                        elts: Vec::new(),
                        span,
                    });
                }
                let first = self.parse_expr()?;
                if self.at_name("for") {
                    self.swallow_comprehension_tail()?;
                    self.expect_op(")")?;
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Comprehension {
                        text: self.src[span.start..span.end].to_string(),
                        span,
                    });
                }
                if self.at_op(",") {
                    let mut elts = vec![first];
                    while self.eat_op(",") {
                        if self.at_op(")") {
                            break;
                        }
                        elts.push(self.parse_expr()?);
                    }
                    self.expect_op(")")?;
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Display {
                        kind: DisplayKind::Tuple,
                        elts,
                        span,
                    });
                }
                self.expect_op(")")?;
                Ok(first)
            }
            Tok::Op("[") => {
                self.bump();
                if self.at_op("]") {
                    self.bump();
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Display {
                        kind: DisplayKind::List,
                        elts: Vec::new(),
                        span,
                    });
                }
                let first = self.parse_expr()?;
                if self.at_name("for") {
                    self.swallow_comprehension_tail()?;
                    self.expect_op("]")?;
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Comprehension {
                        text: self.src[span.start..span.end].to_string(),
                        span,
                    });
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.at_op("]") {
                        break;
                    }
                    elts.push(self.parse_expr()?);
                }
                self.expect_op("]")?;
                let span = Span::new(start, self.prev_end());
                Ok(Expr::Display {
                    kind: DisplayKind::List,
                    elts,
                    span,
                })
            }
            Tok::Op("{") => {
                self.bump();
                if self.at_op("}") {
                    self.bump();
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Display {
                        kind: DisplayKind::Dict,
                        elts: Vec::new(),
                        span,
                    });
                }
                let mut elts = Vec::new();
                let mut is_dict = false;
                let first = if self.at_op("**") {
                    self.bump();
                    is_dict = true;
                    self.parse_expr()?
                } else {
                    self.parse_expr()?
                };
                if self.at_op(":") {
                    is_dict = true;
                    self.bump();
                    let value = self.parse_expr()?;
                    elts.push(first);
                    elts.push(value);
                } else {
                    elts.push(first);
                }
                if self.at_name("for") {
                    self.swallow_comprehension_tail()?;
                    self.expect_op("}")?;
                    let span = Span::new(start, self.prev_end());
                    return Ok(Expr::Comprehension {
                        text: self.src[span.start..span.end].to_string(),
                        span,
                    });
                }
                while self.eat_op(",") {
                    if self.at_op("}") {
                        break;
                    }
                    if self.eat_op("**") {
                        is_dict = true;
                        elts.push(self.parse_expr()?);
                        continue;
                    }
                    let k = self.parse_expr()?;
                    if is_dict {
                        self.expect_op(":")?;
                        let v = self.parse_expr()?;
                        elts.push(k);
                        elts.push(v);
                    } else {
                        elts.push(k);
                    }
                }
                self.expect_op("}")?;
                let span = Span::new(start, self.prev_end());
                let kind = if is_dict {
                    DisplayKind::Dict
                } else {
                    DisplayKind::Set
                };
                Ok(Expr::Display { kind, elts, span })
            }
            other => Err(self.error(format!("unexpected {}", other.describe()))),
        }
    }

    fn parse_string_atom(&mut self) -> PResult<Expr> {
        let start = self.cur_span().start;
        let mut any_fstring = false;
        let mut cooked = String::new();
        let mut raw = String::new();
        // Adjacent string literals concatenate.
        while let Tok::Str {
            raw: r,
            value,
            is_fstring,
        } = self.peek().clone()
        {
            any_fstring |= is_fstring;
            cooked.push_str(&value);
            if !raw.is_empty() {
                raw.push(' ');
            }
            raw.push_str(&r);
            self.bump();
        }
        let span = Span::new(start, self.prev_end());
        Ok(Expr::Constant {
            kind: if any_fstring {
                ConstKind::FStr
            } else {
                ConstKind::Str
            },
            text: raw,
            value: cooked,
            span,
        })
    }
}

fn is_assign_target(expr: &Expr) -> bool {
    match expr {
        Expr::Name { .. }
        | Expr::Attribute { .. }
        | Expr::Subscript { .. }
        | Expr::Starred { .. } => true,
        Expr::Display {
            kind: DisplayKind::Tuple | DisplayKind::List,
            elts,
            ..
        } => elts.iter().all(is_assign_target),
        _ => false,
    }
}
