//! The batch scanning pipeline: discover Python files, parse them, build
//! the program index, annotate client types, run the detectors, and
//! assemble a report.
//!
//! Per-file stages (parsing, graph construction) run concurrently; the
//! cross-file stages (index assembly, type annotation, interprocedural
//! queries) run after a barrier, and report assembly is single-threaded.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use sdklint_core::apispec::{load_specs, SpecBundle};
use sdklint_core::frontend::{parse_module, SourceFile};
use sdklint_core::mugraph::{build_program, ParsedModule, ProgramIndex};
use sdklint_core::resolve::{ResolverConfig, ResolverMode};
use sdklint_core::rules::{run_rules, Detection, RuleCtx, RULE_IDS};
use sdklint_core::stubtypes::annotate_program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub roots: Vec<PathBuf>,
    pub mode: ResolverMode,
    /// Rule identifiers to run; empty means all.
    pub rules: BTreeSet<String>,
    pub specs_path: Option<PathBuf>,
    pub format: OutputFormat,
    pub max_findings: Option<usize>,
    /// Extra `event,context`-style parameter-name pairs naming handlers.
    pub handler_names: Vec<String>,
    /// Dump the DOT rendering of one function's graph instead of findings.
    pub dump_mu: Option<String>,
    /// Print per-step evaluation traces for one rule to stderr.
    pub trace_rule: Option<String>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            roots: Vec::new(),
            mode: ResolverMode::Mc,
            rules: BTreeSet::new(),
            specs_path: None,
            format: OutputFormat::Text,
            max_findings: None,
            handler_names: Vec::new(),
            dump_mu: None,
            trace_rule: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("no such path: {0}")]
    MissingRoot(PathBuf),
    #[error("unknown rule identifier `{0}`")]
    UnknownRule(String),
    #[error(transparent)]
    Spec(#[from] sdklint_core::apispec::SpecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScanStats {
    pub files: usize,
    pub functions: usize,
    pub graphs: usize,
    pub resolutions: std::collections::BTreeMap<&'static str, usize>,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Report {
    pub version: String,
    pub config: ResolverMode,
    pub detections: Vec<Detection>,
    pub stats: ScanStats,
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub report: Report,
    pub warnings: Vec<String>,
    /// DOT text when `dump_mu` matched a graph.
    pub dot: Option<String>,
    pub trace: Vec<String>,
}

/// Run the full pipeline. Per-file parse failures become warnings, not
/// errors; only configuration and I/O problems are fatal.
pub fn scan(config: &ScanConfig) -> Result<ScanOutcome, ScanError> {
    let started = Instant::now();

    for rule in &config.rules {
        if !RULE_IDS.contains(&rule.as_str()) {
            return Err(ScanError::UnknownRule(rule.clone()));
        }
    }
    if config.roots.is_empty() {
        return Err(ScanError::MissingRoot(PathBuf::from(".")));
    }

    let mut warnings = Vec::new();
    let sources = discover(&config.roots, &mut warnings)?;
    let file_count = sources.len();

    // Per-file stage, parallel: read and parse.
    let mut parsed: Vec<(ParsedFile, Option<String>)> = sources
        .into_par_iter()
        .map(|src| {
            let warning;
            let module = match SourceFile::from_bytes(src.display_path.clone(), src.bytes) {
                Ok(file) => match parse_module(&file) {
                    Ok(ast) => {
                        warning = None;
                        Some((file, ast))
                    }
                    Err(e) => {
                        warning = Some(format!("skipping {}: {e}", src.display_path));
                        None
                    }
                },
                Err(e) => {
                    warning = Some(format!("skipping {}: {e}", src.display_path));
                    None
                }
            };
            (
                ParsedFile {
                    package: src.package,
                    module,
                },
                warning,
            )
        })
        .collect();
    parsed.sort_by(|a, b| {
        let key = |p: &(ParsedFile, Option<String>)| {
            p.0.module
                .as_ref()
                .map(|(f, _)| f.path.clone())
                .unwrap_or_default()
        };
        key(a).cmp(&key(b))
    });
    warnings.extend(parsed.iter().filter_map(|(_, w)| w.clone()));

    let modules: Vec<ParsedModule> = parsed
        .into_iter()
        .filter_map(|(p, _)| {
            let (source, ast) = p.module?;
            Some(ParsedModule {
                source,
                ast,
                package: Some(p.package),
            })
        })
        .collect();

    // Cross-file stages.
    let mut index = build_program(&modules);
    let specs = match &config.specs_path {
        Some(path) => load_specs(path)?,
        None => SpecBundle::builtin(),
    };
    warnings.extend(specs.warnings().iter().cloned());
    annotate_program(&mut index, &specs.services);

    let function_count = index
        .files
        .values()
        .map(|f| f.functions.len() + f.classes.values().map(Vec::len).sum::<usize>())
        .sum();

    let dot = config
        .dump_mu
        .as_ref()
        .map(|wanted| dump_graph(&index, wanted));

    let resolver = ResolverConfig {
        mode: config.mode,
        ..ResolverConfig::default()
    };
    let mut ctx = RuleCtx::new(&index, Arc::new(specs), resolver, &config.handler_names);
    if let Some(rule) = &config.trace_rule {
        ctx = ctx.with_trace(rule);
    }
    let mut detections = run_rules(&ctx, &config.rules);
    cap_findings(&mut detections, config.max_findings);

    let report = Report {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.mode,
        detections,
        stats: ScanStats {
            files: file_count,
            functions: function_count,
            graphs: index.graphs.len(),
            resolutions: ctx.resolution_counts(),
            wall_time_ms: started.elapsed().as_millis(),
        },
    };
    Ok(ScanOutcome {
        report,
        warnings,
        dot,
        trace: ctx.trace_lines(),
    })
}

/// Cap the report size, dropping low-confidence detections first. Within a
/// confidence band the stable (path, line, rule) order decides.
fn cap_findings(detections: &mut Vec<Detection>, max: Option<usize>) {
    let Some(max) = max else { return };
    if detections.len() <= max {
        return;
    }
    detections.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                (&a.site.path, a.site.line, &a.rule).cmp(&(&b.site.path, b.site.line, &b.rule))
            })
    });
    detections.truncate(max);
    detections.sort_by(|a, b| {
        (&a.site.path, a.site.line, &a.rule, a.site.column).cmp(&(
            &b.site.path,
            b.site.line,
            &b.rule,
            b.site.column,
        ))
    });
}

fn dump_graph(index: &ProgramIndex, wanted: &str) -> String {
    let mut out = String::new();
    for graph in index.graphs.values() {
        let matches = graph.function_name == wanted
            || graph.simple_name == wanted
            || graph.function_name.ends_with(&format!("::{wanted}"))
            || graph
                .function_name
                .rsplit_once("::")
                .is_some_and(|(_, scope)| {
                    scope == wanted || scope.ends_with(&format!(".{wanted}"))
                });
        if matches {
            out.push_str(&sdklint_core::mugraph::to_dot(graph));
        }
    }
    if out.is_empty() {
        out = format!("// no graph named {wanted}\n");
    }
    out
}

struct RawSource {
    display_path: String,
    package: String,
    bytes: Vec<u8>,
}

struct ParsedFile {
    package: String,
    module: Option<(SourceFile, sdklint_core::frontend::Module)>,
}

/// Find `.py` files under the roots. Paths in the report are presented
/// relative to their root; packages are directories carrying `__init__.py`
/// (walking up to the outermost such directory), else the file's top-level
/// directory under the root.
fn discover(roots: &[PathBuf], warnings: &mut Vec<String>) -> Result<Vec<RawSource>, ScanError> {
    let mut out = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(ScanError::MissingRoot(root.clone()));
        }
        if root.is_file() {
            let bytes = std::fs::read(root).map_err(|source| ScanError::Io {
                path: root.clone(),
                source,
            })?;
            let display = root
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_else(|| root.display().to_string());
            out.push(RawSource {
                display_path: display,
                package: ".".to_string(),
                bytes,
            });
            continue;
        }
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    warnings.push(format!("walk error under {}: {e}", root.display()));
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            if entry.path().extension().and_then(|e| e.to_str()) != Some("py") {
                continue;
            }
            let bytes = match std::fs::read(entry.path()) {
                Ok(b) => b,
                Err(e) => {
                    warnings.push(format!("cannot read {}: {e}", entry.path().display()));
                    continue;
                }
            };
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            out.push(RawSource {
                display_path: rel.to_string_lossy().replace('\\', "/"),
                package: package_of(root, entry.path()),
                bytes,
            });
        }
    }
    out.sort_by(|a, b| a.display_path.cmp(&b.display_path));
    Ok(out)
}

/// Package of a file: the outermost ancestor directory (within the root)
/// whose chain down to the file consists of `__init__.py` packages; absent
/// that, the file's top-level directory under the root.
fn package_of(root: &Path, file: &Path) -> String {
    let parent = file.parent().unwrap_or(root);
    let mut package_dir: Option<&Path> = None;
    let mut dir = parent;
    while dir.starts_with(root) && dir.join("__init__.py").exists() {
        package_dir = Some(dir);
        match dir.parent() {
            Some(p) => dir = p,
            None => break,
        }
    }
    if let Some(d) = package_dir {
        return d.to_string_lossy().replace('\\', "/");
    }
    let rel = parent.strip_prefix(root).unwrap_or(Path::new(""));
    match rel.components().next() {
        Some(first) => root.join(first).to_string_lossy().replace('\\', "/"),
        None => root.to_string_lossy().replace('\\', "/"),
    }
}

/// Render the report as line-oriented text: one line per detection.
pub fn render_text(report: &Report, warnings: &[String]) -> String {
    let mut out = String::new();
    for w in warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    for d in &report.detections {
        let head = d.message.split('.').next().unwrap_or(&d.message);
        out.push_str(&format!(
            "{}:{}:{}: [{}] ({:.1}) {}.\n",
            d.site.path, d.site.line, d.site.column, d.rule, d.confidence, head
        ));
    }
    out.push_str(&format!(
        "{} finding(s) in {} file(s), {} function(s), {} graph(s); resolutions {:?}; {} ms\n",
        report.detections.len(),
        report.stats.files,
        report.stats.functions,
        report.stats.graphs,
        report.stats.resolutions,
        report.stats.wall_time_ms
    ));
    out
}

pub fn render_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Exit code for a finished scan: 0 clean, 1 findings.
pub fn exit_code(report: &Report) -> i32 {
    if report.detections.is_empty() {
        0
    } else {
        1
    }
}
