//! The best-practice detectors.
//!
//! Every detector is parameterized by API specifications and gated on
//! client resolution: a finding is emitted only for call sites whose
//! receiver resolves to the specification's service (or, under mixed
//! confidence, whose name alone matches). Detectors are total functions
//! over immutable inputs; detections merge deterministically ordered by
//! (path, line, rule).

mod batch;
mod misc;
mod pagination;
mod waiters;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::apispec::{ApiSpec, SpecBundle};
use crate::interproc::{interprocedural_data_closure, CallSiteRef, Direction, Scope};
use crate::mugraph::{meta, ActionKind, MuGraph, MuNode, NodeId, NodeKind, ProgramIndex};
use crate::query::Pattern;
use crate::resolve::{resolve_client, ClientResolution, ResolverConfig};
use crate::stubtypes::ServiceCatalog;

/// Stable rule identifiers, used for selection on the command line.
pub const RULE_IDS: [&str; 8] = [
    "missing-pagination",
    "batch-unchecked",
    "use-waiters",
    "response-metadata-none-check",
    "kinesis-failed-records",
    "deprecated-api",
    "inefficient-api-chain",
    "lambda-client-init",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct SiteLocation {
    pub path: String,
    pub line: usize,
    pub column: usize,
}

/// One finding at one call site.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Detection {
    pub rule: String,
    pub site: SiteLocation,
    pub message: String,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learn_more: Option<String>,
    pub resolution: ClientResolution,
}

type ResolutionCache = Arc<Mutex<BTreeMap<(String, NodeId), Option<ClientResolution>>>>;

/// Shared resolution gate usable from `'static` rule closures.
pub type GateFn = Arc<dyn Fn(&ProgramIndex, &MuGraph, NodeId) -> bool + Send + Sync>;

/// Everything a detector needs. Specs and the resolution cache are shared
/// behind `Arc` so resolver gates can live inside query-rule closures.
pub struct RuleCtx<'a> {
    pub index: &'a ProgramIndex,
    pub specs: Arc<SpecBundle>,
    pub config: ResolverConfig,
    /// Parameter-name pairs identifying Lambda handlers.
    pub handler_params: Vec<(Pattern, Pattern)>,
    cache: ResolutionCache,
    /// Rule id whose evaluation should be traced, plus the line sink.
    trace: Option<(String, Arc<Mutex<Vec<String>>>)>,
}

impl<'a> RuleCtx<'a> {
    pub fn new(
        index: &'a ProgramIndex,
        specs: Arc<SpecBundle>,
        config: ResolverConfig,
        handler_names: &[String],
    ) -> Self {
        let mut handler_params = vec![(Pattern::new("event"), Pattern::new("context"))];
        for pair in handler_names {
            if let Some((a, b)) = pair.split_once(',') {
                handler_params.push((Pattern::new(a.trim()), Pattern::new(b.trim())));
            }
        }
        RuleCtx {
            index,
            specs,
            config,
            handler_params,
            cache: Arc::default(),
            trace: None,
        }
    }

    /// Record per-step evaluation traces for one rule id.
    pub fn with_trace(mut self, rule: &str) -> Self {
        self.trace = Some((rule.to_string(), Arc::default()));
        self
    }

    pub fn tracing(&self, rule: &str) -> bool {
        self.trace.as_ref().is_some_and(|(r, _)| r == rule)
    }

    pub fn trace_line(&self, rule: &str, line: impl FnOnce() -> String) {
        if let Some((r, sink)) = &self.trace {
            if r == rule {
                sink.lock().unwrap().push(line());
            }
        }
    }

    pub fn trace_lines(&self) -> Vec<String> {
        self.trace
            .as_ref()
            .map(|(_, sink)| sink.lock().unwrap().clone())
            .unwrap_or_default()
    }

    pub fn catalog(&self) -> &ServiceCatalog {
        &self.specs.services
    }

    /// Resolve one call site, memoized for the run.
    pub fn resolve(&self, graph: &MuGraph, call: NodeId) -> Option<ClientResolution> {
        resolve_cached(
            &self.cache,
            self.index,
            &self.specs,
            self.config,
            graph,
            call,
        )
    }

    /// Resolution gate: the site must resolve, and to the expected service.
    pub fn gate(&self, graph: &MuGraph, call: NodeId, service: &str) -> Option<ClientResolution> {
        self.resolve(graph, call).filter(|r| r.service == service)
    }

    /// A `'static` gate closure for use inside query-rule node transforms.
    pub fn gate_fn(&self, service: &str) -> GateFn {
        let specs = Arc::clone(&self.specs);
        let cache = Arc::clone(&self.cache);
        let config = self.config;
        let service = service.to_string();
        Arc::new(move |index: &ProgramIndex, graph: &MuGraph, call: NodeId| {
            resolve_cached(&cache, index, &specs, config, graph, call)
                .is_some_and(|r| r.service == service)
        })
    }

    /// Counts of resolutions per strategy, for report statistics.
    pub fn resolution_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for resolution in self.cache.lock().unwrap().values().flatten() {
            let key = match resolution.strategy {
                crate::resolve::Strategy::S1 => "s1",
                crate::resolve::Strategy::S2 => "s2",
                crate::resolve::Strategy::S3 => "s3",
            };
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    pub fn location(&self, graph: &MuGraph, node: NodeId) -> SiteLocation {
        let span = graph.node(node).span;
        let (line, column) = match (span, self.index.files.get(&graph.file)) {
            (Some(span), Some(entry)) => entry.line_index.line_col(span.start),
            _ => (0, 0),
        };
        SiteLocation {
            path: graph.file.clone(),
            line,
            column,
        }
    }

    pub fn detection(
        &self,
        rule: &str,
        graph: &MuGraph,
        node: NodeId,
        message: String,
        spec: Option<&ApiSpec>,
        resolution: ClientResolution,
    ) -> Detection {
        Detection {
            rule: rule.to_string(),
            site: self.location(graph, node),
            message,
            confidence: resolution.confidence,
            learn_more: spec.and_then(|s| s.learn_more_url.clone()),
            resolution,
        }
    }
}

fn resolve_cached(
    cache: &ResolutionCache,
    index: &ProgramIndex,
    specs: &SpecBundle,
    config: ResolverConfig,
    graph: &MuGraph,
    call: NodeId,
) -> Option<ClientResolution> {
    let key = (graph.function_name.clone(), call);
    if let Some(cached) = cache.lock().unwrap().get(&key) {
        return cached.clone();
    }
    let resolution = CallSiteRef::from_call(graph, call)
        .and_then(|site| resolve_client(&site, index, &specs.services, specs, config));
    cache.lock().unwrap().insert(key, resolution.clone());
    resolution
}

/// Run the selected detectors over the whole program. An empty selection
/// means all rules.
pub fn run_rules(
    ctx: &RuleCtx<'_>,
    enabled: &std::collections::BTreeSet<String>,
) -> Vec<Detection> {
    let mut out = Vec::new();
    let on = |id: &str| enabled.is_empty() || enabled.contains(id);
    if on("missing-pagination") {
        out.extend(pagination::missing_pagination(ctx));
    }
    if on("batch-unchecked") {
        out.extend(batch::batch_unchecked(ctx));
    }
    if on("use-waiters") {
        out.extend(waiters::use_waiters(ctx));
    }
    if on("response-metadata-none-check") {
        out.extend(misc::response_metadata_none_check(ctx));
    }
    if on("kinesis-failed-records") {
        out.extend(batch::kinesis_failed_records(ctx));
    }
    if on("deprecated-api") {
        out.extend(misc::deprecated_api(ctx));
    }
    if on("inefficient-api-chain") {
        out.extend(pagination::inefficient_api_chain(ctx));
    }
    if on("lambda-client-init") {
        out.extend(misc::lambda_client_init(ctx));
    }
    out.sort_by(|a, b| {
        (&a.site.path, a.site.line, &a.rule, a.site.column).cmp(&(
            &b.site.path,
            b.site.line,
            &b.rule,
            b.site.column,
        ))
    });
    out
}

/// Anchored pattern matching an API name as a bare call or behind any
/// receiver path.
pub fn api_call_pattern(api: &str) -> String {
    format!(r"(.*\.)?{}", regex_escape(api))
}

fn regex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if "\\.+*?()|[]{}^$#&-~".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Call actions in one graph whose callee name equals `api`.
pub fn calls_to<'g>(graph: &'g MuGraph, api: &'g str) -> impl Iterator<Item = &'g MuNode> + 'g {
    graph
        .call_actions()
        .filter(move |n| n.meta(meta::CALLEE_NAME) == Some(api))
}

/// The checks a response value can flow into for a given set of keys:
/// subscript reads, membership tests, and `.get` calls naming the key.
pub(crate) fn action_checks_key(graph: &MuGraph, action: NodeId, keys: &[String]) -> bool {
    let node = graph.node(action);
    let const_matches = |id: NodeId| {
        let n = graph.node(id);
        n.meta(meta::CONST_STR)
            .map(|v| keys.iter().any(|k| k == v))
            .unwrap_or(false)
    };
    match &node.kind {
        NodeKind::Action(ActionKind::SubscriptRead) => graph
            .arguments_of(action)
            .first()
            .copied()
            .is_some_and(const_matches),
        NodeKind::Action(ActionKind::Compare(op)) if op == "in" || op == "not in" => {
            graph.arguments_of(action).iter().any(|&a| const_matches(a))
        }
        NodeKind::Action(ActionKind::Call) if node.meta(meta::CALLEE_NAME) == Some("get") => {
            graph.arguments_of(action).iter().any(|&a| const_matches(a))
        }
        _ => false,
    }
}

/// Does the forward data closure of `response` (file scope) reach a
/// subscript/membership/get check of any of the keys?
pub fn response_flow_checks_key(
    index: &ProgramIndex,
    graph: &MuGraph,
    response: NodeId,
    keys: &[String],
) -> bool {
    let seed: std::collections::BTreeSet<NodeId> = std::iter::once(response).collect();
    let closure = interprocedural_data_closure(
        (graph.function_name.as_str(), &seed),
        Direction::Forward,
        Scope::FileForwardReachable,
        index,
    );
    for (graph_name, nodes) in &closure.matches {
        let Some(g) = index.graphs.get(graph_name) else {
            continue;
        };
        for &n in nodes {
            if !g.node(n).kind.is_data() {
                continue;
            }
            for edge in g.edges_out(n) {
                if edge.kind.is_data() && action_checks_key(g, edge.dst, keys) {
                    return true;
                }
            }
        }
    }
    false
}

/// Loop control nodes enclosing a node.
pub fn enclosing_loops(graph: &MuGraph, node: NodeId) -> Vec<NodeId> {
    graph
        .control_parents(node)
        .into_iter()
        .filter(|&c| match &graph.node(c).kind {
            NodeKind::Control(kind) => kind.is_loop(),
            _ => false,
        })
        .collect()
}
