//! Abstract syntax tree for the supported Python subset.
//!
//! Every node carries a byte-offset span into the original source. Constructs
//! outside the subset are preserved as opaque [`Stmt::Unknown`] /
//! [`Expr::Unknown`] nodes so that a file never fails to produce a module.

use std::fmt;

/// Half-open byte range `[start, end)` into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Covering span of two spans.
    pub fn to(&self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    /// Textual type annotation, e.g. `int` for `def f(x: int)`.
    pub annotation: Option<String>,
    /// Source text of the default value, if any. Defaults are retained but
    /// not modeled further downstream.
    pub default: Option<String>,
    pub kind: ParamKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Plain,
    /// `*args`
    VarArgs,
    /// `**kwargs`
    KwArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptHandler {
    /// Exception expression, e.g. `ClientError` in `except ClientError as e:`.
    pub exc: Option<Expr>,
    pub name: Option<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithItem {
    pub context: Expr,
    pub target: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alias {
    /// Dotted module or imported name.
    pub name: String,
    pub asname: Option<String>,
    pub span: Span,
}

impl Alias {
    /// The name the alias binds in the local scope.
    pub fn bound_name(&self) -> &str {
        match &self.asname {
            Some(n) => n,
            // `import a.b` binds `a`.
            None => self.name.split('.').next().unwrap_or(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    FunctionDef {
        name: String,
        params: Vec<Param>,
        body: Vec<Stmt>,
        decorators: Vec<Expr>,
        returns: Option<String>,
        is_async: bool,
        span: Span,
    },
    ClassDef {
        name: String,
        bases: Vec<Expr>,
        body: Vec<Stmt>,
        decorators: Vec<Expr>,
        span: Span,
    },
    Assign {
        targets: Vec<Expr>,
        value: Expr,
        /// Annotation text for `x: T = v` assignments.
        annotation: Option<String>,
        span: Span,
    },
    AugAssign {
        target: Expr,
        op: BinOpKind,
        value: Expr,
        span: Span,
    },
    Return {
        value: Option<Expr>,
        span: Span,
    },
    If {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
        span: Span,
    },
    While {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
        span: Span,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
        span: Span,
    },
    Try {
        body: Vec<Stmt>,
        handlers: Vec<ExceptHandler>,
        orelse: Vec<Stmt>,
        finalbody: Vec<Stmt>,
        span: Span,
    },
    Raise {
        exc: Option<Expr>,
        cause: Option<Expr>,
        span: Span,
    },
    Assert {
        test: Expr,
        msg: Option<Expr>,
        span: Span,
    },
    Import {
        names: Vec<Alias>,
        span: Span,
    },
    ImportFrom {
        module: Option<String>,
        names: Vec<Alias>,
        level: usize,
        span: Span,
    },
    ExprStmt {
        value: Expr,
        span: Span,
    },
    With {
        items: Vec<WithItem>,
        body: Vec<Stmt>,
        span: Span,
    },
    Pass {
        span: Span,
    },
    Break {
        span: Span,
    },
    Continue {
        span: Span,
    },
    /// Anything outside the supported subset, kept as opaque text.
    Unknown {
        text: String,
        span: Span,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOpKind {
    Add,
    Sub,
    Mult,
    Div,
    FloorDiv,
    Mod,
    Pow,
    MatMult,
    LShift,
    RShift,
    BitAnd,
    BitOr,
    BitXor,
}

impl BinOpKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mult => "*",
            BinOpKind::Div => "/",
            BinOpKind::FloorDiv => "//",
            BinOpKind::Mod => "%",
            BinOpKind::Pow => "**",
            BinOpKind::MatMult => "@",
            BinOpKind::LShift => "<<",
            BinOpKind::RShift => ">>",
            BinOpKind::BitAnd => "&",
            BinOpKind::BitOr => "|",
            BinOpKind::BitXor => "^",
        }
    }
}

impl fmt::Display for BinOpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOpKind {
    Not,
    Neg,
    Pos,
    Invert,
}

impl UnaryOpKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            UnaryOpKind::Not => "not",
            UnaryOpKind::Neg => "-",
            UnaryOpKind::Pos => "+",
            UnaryOpKind::Invert => "~",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOpKind {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    In,
    NotIn,
    Is,
    IsNot,
}

impl CmpOpKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOpKind::Eq => "==",
            CmpOpKind::NotEq => "!=",
            CmpOpKind::Lt => "<",
            CmpOpKind::LtE => "<=",
            CmpOpKind::Gt => ">",
            CmpOpKind::GtE => ">=",
            CmpOpKind::In => "in",
            CmpOpKind::NotIn => "not in",
            CmpOpKind::Is => "is",
            CmpOpKind::IsNot => "is not",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOpKind {
    And,
    Or,
}

impl BoolOpKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            BoolOpKind::And => "and",
            BoolOpKind::Or => "or",
        }
    }
}

/// Literal constant kinds. f-strings are opaque string constants by design;
/// their format arguments are not tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstKind {
    Int,
    Float,
    Str,
    FStr,
    Bool,
    NoneLit,
    Ellipsis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyword {
    /// `None` for `**kwargs` expansion.
    pub arg: Option<String>,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisplayKind {
    List,
    Tuple,
    Dict,
    Set,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Name {
        id: String,
        span: Span,
    },
    Constant {
        kind: ConstKind,
        /// Exact source token text (string constants keep their quotes).
        text: String,
        /// Cooked value for string constants; token text otherwise.
        value: String,
        span: Span,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Expr>,
        keywords: Vec<Keyword>,
        span: Span,
    },
    Attribute {
        value: Box<Expr>,
        attr: String,
        span: Span,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
        span: Span,
    },
    BinOp {
        left: Box<Expr>,
        op: BinOpKind,
        right: Box<Expr>,
        span: Span,
    },
    UnaryOp {
        op: UnaryOpKind,
        operand: Box<Expr>,
        span: Span,
    },
    Compare {
        left: Box<Expr>,
        ops: Vec<CmpOpKind>,
        comparators: Vec<Expr>,
        span: Span,
    },
    BoolOp {
        op: BoolOpKind,
        values: Vec<Expr>,
        span: Span,
    },
    Display {
        kind: DisplayKind,
        /// Flattened elements; dict entries contribute key then value.
        elts: Vec<Expr>,
        span: Span,
    },
    Starred {
        value: Box<Expr>,
        span: Span,
    },
    Lambda {
        params: Vec<Param>,
        body: Box<Expr>,
        span: Span,
    },
    /// List/set/dict comprehensions and generator expressions, kept opaque.
    Comprehension {
        text: String,
        span: Span,
    },
    Unknown {
        text: String,
        span: Span,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Name { span, .. }
            | Expr::Constant { span, .. }
            | Expr::Call { span, .. }
            | Expr::Attribute { span, .. }
            | Expr::Subscript { span, .. }
            | Expr::BinOp { span, .. }
            | Expr::UnaryOp { span, .. }
            | Expr::Compare { span, .. }
            | Expr::BoolOp { span, .. }
            | Expr::Display { span, .. }
            | Expr::Starred { span, .. }
            | Expr::Lambda { span, .. }
            | Expr::Comprehension { span, .. }
            | Expr::Unknown { span, .. } => *span,
        }
    }

    /// Leftmost identifier of a name/attribute/call/subscript chain.
    /// `boto3.session.Session().client` has head `boto3`.
    pub fn textual_head(&self) -> Option<&str> {
        match self {
            Expr::Name { id, .. } => Some(id),
            Expr::Attribute { value, attr, .. } => value.textual_head().or(Some(attr)),
            Expr::Call { func, .. } => func.textual_head(),
            Expr::Subscript { value, .. } => value.textual_head(),
            _ => None,
        }
    }

    /// Dotted path for pure `Name(.Attribute)*` chains, e.g. `boto3.client`.
    pub fn dotted_path(&self) -> Option<String> {
        match self {
            Expr::Name { id, .. } => Some(id.clone()),
            Expr::Attribute { value, attr, .. } => {
                value.dotted_path().map(|p| format!("{p}.{attr}"))
            }
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Expr::Name { .. } => "Name",
            Expr::Constant { .. } => "Constant",
            Expr::Call { .. } => "Call",
            Expr::Attribute { .. } => "Attribute",
            Expr::Subscript { .. } => "Subscript",
            Expr::BinOp { .. } => "BinOp",
            Expr::UnaryOp { .. } => "UnaryOp",
            Expr::Compare { .. } => "Compare",
            Expr::BoolOp { .. } => "BoolOp",
            Expr::Display { .. } => "Display",
            Expr::Starred { .. } => "Starred",
            Expr::Lambda { .. } => "Lambda",
            Expr::Comprehension { .. } => "Comprehension",
            Expr::Unknown { .. } => "Unknown",
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Name { .. }
            | Expr::Constant { .. }
            | Expr::Comprehension { .. }
            | Expr::Unknown { .. } => Vec::new(),
            Expr::Call {
                func,
                args,
                keywords,
                ..
            } => {
                let mut out: Vec<&Expr> = vec![func.as_ref()];
                out.extend(args.iter());
                out.extend(keywords.iter().map(|k| &k.value));
                out
            }
            Expr::Attribute { value, .. } => vec![value.as_ref()],
            Expr::Subscript { value, index, .. } => vec![value.as_ref(), index.as_ref()],
            Expr::BinOp { left, right, .. } => vec![left.as_ref(), right.as_ref()],
            Expr::UnaryOp { operand, .. } => vec![operand.as_ref()],
            Expr::Compare {
                left, comparators, ..
            } => {
                let mut out: Vec<&Expr> = vec![left.as_ref()];
                out.extend(comparators.iter());
                out
            }
            Expr::BoolOp { values, .. } => values.iter().collect(),
            Expr::Display { elts, .. } => elts.iter().collect(),
            Expr::Starred { value, .. } => vec![value.as_ref()],
            Expr::Lambda { body, .. } => vec![body.as_ref()],
        }
    }
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::FunctionDef { span, .. }
            | Stmt::ClassDef { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::AugAssign { span, .. }
            | Stmt::Return { span, .. }
            | Stmt::If { span, .. }
            | Stmt::While { span, .. }
            | Stmt::For { span, .. }
            | Stmt::Try { span, .. }
            | Stmt::Raise { span, .. }
            | Stmt::Assert { span, .. }
            | Stmt::Import { span, .. }
            | Stmt::ImportFrom { span, .. }
            | Stmt::ExprStmt { span, .. }
            | Stmt::With { span, .. }
            | Stmt::Pass { span }
            | Stmt::Break { span }
            | Stmt::Continue { span }
            | Stmt::Unknown { span, .. } => *span,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Stmt::FunctionDef { .. } => "FunctionDef",
            Stmt::ClassDef { .. } => "ClassDef",
            Stmt::Assign { .. } => "Assign",
            Stmt::AugAssign { .. } => "AugAssign",
            Stmt::Return { .. } => "Return",
            Stmt::If { .. } => "If",
            Stmt::While { .. } => "While",
            Stmt::For { .. } => "For",
            Stmt::Try { .. } => "Try",
            Stmt::Raise { .. } => "Raise",
            Stmt::Assert { .. } => "Assert",
            Stmt::Import { .. } => "Import",
            Stmt::ImportFrom { .. } => "ImportFrom",
            Stmt::ExprStmt { .. } => "ExprStmt",
            Stmt::With { .. } => "With",
            Stmt::Pass { .. } => "Pass",
            Stmt::Break { .. } => "Break",
            Stmt::Continue { .. } => "Continue",
            Stmt::Unknown { .. } => "Unknown",
        }
    }

    pub fn child_stmts(&self) -> Vec<&Stmt> {
        match self {
            Stmt::FunctionDef { body, .. }
            | Stmt::ClassDef { body, .. }
            | Stmt::With { body, .. } => body.iter().collect(),
            Stmt::If { body, orelse, .. }
            | Stmt::While { body, orelse, .. }
            | Stmt::For { body, orelse, .. } => body.iter().chain(orelse.iter()).collect(),
            Stmt::Try {
                body,
                handlers,
                orelse,
                finalbody,
                ..
            } => body
                .iter()
                .chain(handlers.iter().flat_map(|h| h.body.iter()))
                .chain(orelse.iter())
                .chain(finalbody.iter())
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn child_exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::FunctionDef { decorators, .. } => decorators.iter().collect(),
            Stmt::ClassDef {
                bases, decorators, ..
            } => bases.iter().chain(decorators.iter()).collect(),
            Stmt::Assign { targets, value, .. } => {
                targets.iter().chain(std::iter::once(value)).collect()
            }
            Stmt::AugAssign { target, value, .. } => vec![target, value],
            Stmt::Return { value, .. } => value.iter().collect(),
            Stmt::If { test, .. } | Stmt::While { test, .. } => vec![test],
            Stmt::For { target, iter, .. } => vec![target, iter],
            Stmt::Try { handlers, .. } => handlers.iter().filter_map(|h| h.exc.as_ref()).collect(),
            Stmt::Raise { exc, cause, .. } => exc.iter().chain(cause.iter()).collect(),
            Stmt::Assert { test, msg, .. } => std::iter::once(test).chain(msg.iter()).collect(),
            Stmt::ExprStmt { value, .. } => vec![value],
            Stmt::With { items, .. } => items
                .iter()
                .flat_map(|i| std::iter::once(&i.context).chain(i.target.iter()))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Walk all statements of a module, depth first.
pub fn walk_stmts<'a>(body: &'a [Stmt], visit: &mut dyn FnMut(&'a Stmt)) {
    for stmt in body {
        visit(stmt);
        let children: Vec<&Stmt> = stmt.child_stmts();
        for child in children {
            visit_rec(child, visit);
        }
    }
}

fn visit_rec<'a>(stmt: &'a Stmt, visit: &mut dyn FnMut(&'a Stmt)) {
    visit(stmt);
    for child in stmt.child_stmts() {
        visit_rec(child, visit);
    }
}

/// Count all statement and expression nodes, including nested ones.
pub fn node_count(module: &Module) -> usize {
    let mut count = 0;
    walk_stmts(&module.body, &mut |stmt| {
        count += 1;
        for expr in stmt.child_exprs() {
            count += expr_count(expr);
        }
    });
    count
}

fn expr_count(expr: &Expr) -> usize {
    1 + expr.children().iter().map(|c| expr_count(c)).sum::<usize>()
}
