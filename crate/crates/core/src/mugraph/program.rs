//! Assembly of per-function graphs into a program-wide index.
//!
//! One graph is built for every `def`, every lambda, and one synthetic
//! script function per file. No static call graph is built here; the index
//! keeps enough structure (classes, functions, packages) for on-demand
//! callee resolution later.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::frontend::ast::{Expr, Module, Stmt};
use crate::frontend::{LineIndex, SourceFile};
use crate::mugraph::NodeId;

use super::build::{build_graph, BuildInput, GraphSource};
use super::MuGraph;

pub const SCRIPT_NAME: &str = "<script>";

/// A parsed file ready for graph construction. `package` defaults to the
/// file's parent directory when the caller does not assign one.
pub struct ParsedModule {
    pub source: SourceFile,
    pub ast: Module,
    pub package: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileEntry {
    /// Class name -> method simple names, in source order.
    pub classes: BTreeMap<String, Vec<String>>,
    /// Top-level function names in source order.
    pub functions: Vec<String>,
    /// Qualified name of the synthetic script function.
    pub script_function: String,
    pub package: String,
    pub line_index: LineIndex,
}

/// Caller map: callee graph name -> (caller graph name, call node).
pub type CallerMap = BTreeMap<String, Vec<(String, NodeId)>>;

/// Lazily built caller maps keyed by scope anchor. Derived data only, so
/// clones start empty and equality ignores it.
#[derive(Default)]
pub struct CallerCache {
    inner: Mutex<BTreeMap<String, Arc<CallerMap>>>,
}

impl CallerCache {
    /// Return the cached map for `key`, building it on first use. Safe for
    /// concurrent lazy initialization; the builder may run more than once
    /// under contention but the first inserted map wins.
    pub fn get_or_build(&self, key: &str, build: impl FnOnce() -> CallerMap) -> Arc<CallerMap> {
        if let Some(found) = self.inner.lock().unwrap().get(key) {
            return Arc::clone(found);
        }
        let built = Arc::new(build());
        let mut guard = self.inner.lock().unwrap();
        Arc::clone(guard.entry(key.to_string()).or_insert(built))
    }
}

impl Clone for CallerCache {
    fn clone(&self) -> Self {
        CallerCache::default()
    }
}

impl std::fmt::Debug for CallerCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CallerCache")
    }
}

impl PartialEq for CallerCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// All MU graphs of a program, keyed by qualified function name
/// (`<path>::<scope>`), plus per-file and per-package structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgramIndex {
    pub graphs: BTreeMap<String, MuGraph>,
    pub files: BTreeMap<String, FileEntry>,
    pub packages: BTreeMap<String, std::collections::BTreeSet<String>>,
    pub caller_cache: CallerCache,
}

impl ProgramIndex {
    pub fn graph(&self, qualified: &str) -> Option<&MuGraph> {
        self.graphs.get(qualified)
    }

    /// Graphs belonging to one file, in deterministic name order.
    pub fn graphs_in_file<'a>(&'a self, path: &'a str) -> impl Iterator<Item = &'a MuGraph> + 'a {
        self.graphs.values().filter(move |g| g.file == path)
    }

    /// Graphs in the package containing `path`.
    pub fn graphs_in_package_of<'a>(
        &'a self,
        path: &'a str,
    ) -> Box<dyn Iterator<Item = &'a MuGraph> + 'a> {
        let Some(entry) = self.files.get(path) else {
            return Box::new(std::iter::empty());
        };
        let Some(files) = self.packages.get(&entry.package) else {
            return Box::new(std::iter::empty());
        };
        Box::new(
            self.graphs
                .values()
                .filter(move |g| files.contains(&g.file)),
        )
    }

    pub fn qualified(path: &str, scope: &str) -> String {
        format!("{path}::{scope}")
    }
}

pub fn build_program(modules: &[ParsedModule]) -> ProgramIndex {
    let mut index = ProgramIndex::default();
    for m in modules {
        add_module(&mut index, m);
    }
    index
}

fn add_module(index: &mut ProgramIndex, module: &ParsedModule) {
    let path = module.source.path.clone();
    let package = module.package.clone().unwrap_or_else(|| parent_dir(&path));

    let mut entry = FileEntry {
        classes: BTreeMap::new(),
        functions: Vec::new(),
        script_function: ProgramIndex::qualified(&path, SCRIPT_NAME),
        package: package.clone(),
        line_index: module.source.line_index().clone(),
    };

    // Script graph over the top-level statements.
    let script = build_graph(BuildInput {
        source: GraphSource::Module(&module.ast),
        function_name: entry.script_function.clone(),
        file: path.clone(),
        simple_name: SCRIPT_NAME.to_string(),
        class_name: None,
    });
    index.graphs.insert(script.function_name.clone(), script);

    // Named functions and classes, recursively.
    for stmt in &module.ast.body {
        walk_def(index, &mut entry, &path, "", None, stmt);
    }
    // Lambdas anywhere in the file, including at top level.
    collect_lambdas_in_body(index, &path, SCRIPT_NAME, None, &module.ast.body, true);

    index
        .packages
        .entry(package)
        .or_default()
        .insert(path.clone());
    index.files.insert(path, entry);
}

fn walk_def(
    index: &mut ProgramIndex,
    entry: &mut FileEntry,
    path: &str,
    scope: &str,
    class_name: Option<&str>,
    stmt: &Stmt,
) {
    match stmt {
        Stmt::FunctionDef { name, body, .. } => {
            let scoped = join_scope(scope, name);
            let graph = build_graph(BuildInput {
                source: GraphSource::Function(stmt),
                function_name: ProgramIndex::qualified(path, &scoped),
                file: path.to_string(),
                simple_name: name.clone(),
                class_name: class_name.map(str::to_string),
            });
            index.graphs.insert(graph.function_name.clone(), graph);
            if scope.is_empty() {
                entry.functions.push(name.clone());
            } else if let Some(class) = class_name {
                if scope == class {
                    entry
                        .classes
                        .entry(class.to_string())
                        .or_default()
                        .push(name.clone());
                }
            }
            // Nested definitions.
            for inner in body {
                walk_def(index, entry, path, &scoped, None, inner);
            }
            collect_lambdas_in_body(index, path, &scoped, None, body, false);
        }
        Stmt::ClassDef { name, body, .. } => {
            let scoped = join_scope(scope, name);
            entry.classes.entry(name.clone()).or_default();
            for inner in body {
                walk_def(index, entry, path, &scoped, Some(name), inner);
            }
        }
        _ => {}
    }
}

fn join_scope(scope: &str, name: &str) -> String {
    if scope.is_empty() {
        name.to_string()
    } else {
        format!("{scope}.{name}")
    }
}

/// Build a graph for every lambda in a statement list. When `top_level` is
/// set, nested defs/classes are skipped because `walk_def` descends into
/// them separately.
fn collect_lambdas_in_body(
    index: &mut ProgramIndex,
    path: &str,
    scope: &str,
    class_name: Option<&str>,
    body: &[Stmt],
    top_level: bool,
) {
    for stmt in body {
        if matches!(stmt, Stmt::FunctionDef { .. } | Stmt::ClassDef { .. }) {
            if top_level {
                continue;
            }
            continue;
        }
        for expr in stmt.child_exprs() {
            collect_lambdas_in_expr(index, path, scope, class_name, expr);
        }
        collect_lambdas_in_body(
            index,
            path,
            scope,
            class_name,
            &stmt_children(stmt),
            top_level,
        );
    }
}

fn stmt_children(stmt: &Stmt) -> Vec<Stmt> {
    stmt.child_stmts().into_iter().cloned().collect()
}

fn collect_lambdas_in_expr(
    index: &mut ProgramIndex,
    path: &str,
    scope: &str,
    class_name: Option<&str>,
    expr: &Expr,
) {
    if let Expr::Lambda { span, .. } = expr {
        let scoped = join_scope(scope, &format!("<lambda@{}>", span.start));
        let graph = build_graph(BuildInput {
            source: GraphSource::Lambda(expr),
            function_name: ProgramIndex::qualified(path, &scoped),
            file: path.to_string(),
            simple_name: format!("<lambda@{}>", span.start),
            class_name: class_name.map(str::to_string),
        });
        index.graphs.insert(graph.function_name.clone(), graph);
    }
    for child in expr.children() {
        collect_lambdas_in_expr(index, path, scope, class_name, child);
    }
}

fn parent_dir(path: &str) -> String {
    match path.rfind('/') {
        Some(i) => path[..i].to_string(),
        None => ".".to_string(),
    }
}
