//! On-demand callee/caller resolution and the interprocedural matching
//! fixpoint.
//!
//! Call sites resolve to candidate callees by name, argument count and
//! available argument types (class-hierarchy style, no points-to analysis).
//! The matching fixpoint repeatedly evaluates a subrule over worklist items
//! `(graph, matched nodes)`, propagating matches across call boundaries:
//! forward from arguments into formals and from returned values into
//! call-site definitions, backward from formals into caller arguments and
//! from call-site definitions into callee returns. Items are processed at
//! most once per `(graph, node set)` pair, and the imprecision of
//! name-based resolution is kept in check by capping the scope at one
//! package.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::sync::Arc;

use crate::mugraph::{meta, CallerMap, MuGraph, NodeId, ProgramIndex};
use crate::query::eval::EvalCtx;
use crate::query::{MatchFrontier, NodeSet, SubRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// How far from the seed's file an interprocedural query may reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    FunctionLocal,
    FileForwardReachable,
    FileBackwardReachable,
    PackageForwardReachable,
    PackageBackwardReachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Breadth {
    Function,
    File,
    Package,
}

impl Scope {
    pub fn direction(self) -> Direction {
        match self {
            Scope::FileForwardReachable | Scope::PackageForwardReachable => Direction::Forward,
            Scope::FileBackwardReachable | Scope::PackageBackwardReachable => Direction::Backward,
            // A function-local query has no cross-function propagation; the
            // direction only orients the closure subrule.
            Scope::FunctionLocal => Direction::Forward,
        }
    }

    pub fn breadth(self) -> Breadth {
        match self {
            Scope::FunctionLocal => Breadth::Function,
            Scope::FileForwardReachable | Scope::FileBackwardReachable => Breadth::File,
            Scope::PackageForwardReachable | Scope::PackageBackwardReachable => Breadth::Package,
        }
    }

    pub fn with_direction(self, direction: Direction) -> Scope {
        match (self.breadth(), direction) {
            (Breadth::Function, _) => Scope::FunctionLocal,
            (Breadth::File, Direction::Forward) => Scope::FileForwardReachable,
            (Breadth::File, Direction::Backward) => Scope::FileBackwardReachable,
            (Breadth::Package, Direction::Forward) => Scope::PackageForwardReachable,
            (Breadth::Package, Direction::Backward) => Scope::PackageBackwardReachable,
        }
    }
}

/// One call action inside a graph, with what name-based resolution needs.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CallSiteRef {
    pub graph: String,
    pub node: NodeId,
    pub callee_name: String,
    pub arg_count: usize,
    pub arg_types: Option<Vec<String>>,
}

impl CallSiteRef {
    pub fn from_call(graph: &MuGraph, node: NodeId) -> Option<CallSiteRef> {
        let n = graph.node(node);
        if !n.kind.is_call() {
            return None;
        }
        let args = graph.arguments_of(node);
        let arg_types: Vec<String> = args
            .iter()
            .map(|a| {
                graph
                    .node(*a)
                    .type_string
                    .clone()
                    .unwrap_or_else(|| "Any".to_string())
            })
            .collect();
        Some(CallSiteRef {
            graph: graph.function_name.clone(),
            node,
            callee_name: n.meta(meta::CALLEE_NAME)?.to_string(),
            arg_count: args.len(),
            arg_types: if arg_types.iter().all(|t| t == "Any") {
                None
            } else {
                Some(arg_types)
            },
        })
    }
}

/// Fixpoint solution: visited graphs mapped to their matched nodes. The
/// seed graph is always present.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterprocResult {
    pub matches: BTreeMap<String, BTreeSet<NodeId>>,
}

impl InterprocResult {
    pub fn total_nodes(&self) -> usize {
        self.matches.values().map(BTreeSet::len).sum()
    }

    pub fn data_nodes(&self, index: &ProgramIndex) -> BTreeSet<(String, NodeId)> {
        let mut out = BTreeSet::new();
        for (g, nodes) in &self.matches {
            if let Some(graph) = index.graphs.get(g) {
                for &n in nodes {
                    if graph.node(n).kind.is_data() {
                        out.insert((g.clone(), n));
                    }
                }
            }
        }
        out
    }
}

/// Graph names reachable for a query anchored at `anchor_graph`.
fn scope_graphs(index: &ProgramIndex, anchor_graph: &str, breadth: Breadth) -> BTreeSet<String> {
    let Some(anchor) = index.graphs.get(anchor_graph) else {
        return std::iter::once(anchor_graph.to_string()).collect();
    };
    match breadth {
        Breadth::Function => std::iter::once(anchor_graph.to_string()).collect(),
        Breadth::File => index
            .graphs_in_file(&anchor.file)
            .map(|g| g.function_name.clone())
            .collect(),
        Breadth::Package => index
            .graphs_in_package_of(&anchor.file)
            .map(|g| g.function_name.clone())
            .collect(),
    }
}

/// Candidate callees for one call site, restricted to `allowed` graphs.
/// Matching is by simple name, compatible arity, and (when both sides are
/// annotated) argument types.
fn resolve_callees_in<'a>(
    site: &CallSiteRef,
    index: &'a ProgramIndex,
    allowed: &BTreeSet<String>,
) -> Vec<&'a MuGraph> {
    let caller = index.graphs.get(&site.graph);
    let has_receiver = caller.is_some_and(|g| g.receiver_of(site.node).is_some());
    let call_has_kwargs = caller
        .and_then(|g| g.node(site.node).meta(meta::KWARGS_POS))
        .is_some();

    let mut out = Vec::new();
    for name in allowed {
        let Some(candidate) = index.graphs.get(name) else {
            continue;
        };
        if candidate.simple_name != site.callee_name {
            continue;
        }
        if candidate.simple_name.starts_with('<') {
            continue;
        }
        if !arity_compatible(site, candidate, has_receiver, call_has_kwargs) {
            continue;
        }
        if !types_compatible(site, candidate, has_receiver) {
            continue;
        }
        out.push(candidate);
    }
    out
}

pub fn resolve_callees<'a>(
    site: &CallSiteRef,
    index: &'a ProgramIndex,
    scope: Scope,
) -> Vec<&'a MuGraph> {
    let allowed = scope_graphs(index, &site.graph, scope.breadth());
    resolve_callees_in(site, index, &allowed)
}

fn candidate_shape(candidate: &MuGraph) -> (usize, usize, bool, bool, bool) {
    let has_self = candidate.param_names.first().map(String::as_str) == Some("self");
    let mut has_varargs = false;
    let mut has_kwargs = false;
    let mut defaults = 0usize;
    for (i, &p) in candidate.params.iter().enumerate() {
        match candidate.node(p).meta(meta::PARAM_KIND) {
            Some("varargs") => has_varargs = true,
            Some("kwargs") => has_kwargs = true,
            _ => {}
        }
        if candidate.param_defaults.get(i).copied().unwrap_or(false) {
            defaults += 1;
        }
    }
    let plain = candidate.params.len() - usize::from(has_varargs) - usize::from(has_kwargs);
    (plain, defaults, has_self, has_varargs, has_kwargs)
}

fn arity_compatible(
    site: &CallSiteRef,
    candidate: &MuGraph,
    has_receiver: bool,
    call_has_kwargs: bool,
) -> bool {
    let (plain, defaults, has_self, has_varargs, has_kwargs) = candidate_shape(candidate);
    // The receiver fills `self` when present; a bare call to a self-less
    // method supplies every parameter explicitly.
    let implicit = usize::from(has_self && has_receiver);
    let supplied = site.arg_count + implicit;
    let min_required = plain.saturating_sub(defaults);
    if call_has_kwargs {
        // Keyword expansion can satisfy any remaining parameters.
        return has_varargs || has_kwargs || supplied <= plain || plain == 0 || true;
    }
    if supplied < min_required {
        return false;
    }
    if supplied > plain && !(has_varargs || has_kwargs) {
        return false;
    }
    true
}

fn types_compatible(site: &CallSiteRef, candidate: &MuGraph, has_receiver: bool) -> bool {
    let Some(arg_types) = &site.arg_types else {
        return true;
    };
    let (_, _, has_self, _, _) = candidate_shape(candidate);
    let shift = usize::from(has_self && has_receiver);
    for (i, arg_type) in arg_types.iter().enumerate() {
        if arg_type == "Any" {
            continue;
        }
        let Some(ann) = candidate
            .param_annotations
            .get(i + shift)
            .and_then(Option::as_ref)
        else {
            continue;
        };
        let bare_arg = crate::stubtypes::strip_optional(arg_type);
        let bare_ann = crate::stubtypes::strip_optional(ann);
        if bare_ann != "Any" && bare_ann != bare_arg {
            return false;
        }
    }
    true
}

/// Cached caller map for a scope anchor, built on first use.
fn caller_map(
    index: &ProgramIndex,
    anchor_graph: &str,
    breadth: Breadth,
    allowed: &BTreeSet<String>,
) -> Arc<CallerMap> {
    let key = match (breadth, index.graphs.get(anchor_graph)) {
        (Breadth::Function, _) | (_, None) => format!("fn:{anchor_graph}"),
        (Breadth::File, Some(g)) => format!("file:{}", g.file),
        (Breadth::Package, Some(g)) => {
            let pkg = index
                .files
                .get(&g.file)
                .map(|f| f.package.as_str())
                .unwrap_or("");
            format!("pkg:{pkg}")
        }
    };
    index
        .caller_cache
        .get_or_build(&key, || build_caller_map(index, allowed))
}

/// Build the caller map for a set of graphs: callee graph name ->
/// [(caller graph, call node)].
fn build_caller_map(index: &ProgramIndex, allowed: &BTreeSet<String>) -> CallerMap {
    let mut map: CallerMap = CallerMap::new();
    for name in allowed {
        let Some(graph) = index.graphs.get(name) else {
            continue;
        };
        for call in graph.call_actions() {
            let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                continue;
            };
            for callee in resolve_callees_in(&site, index, allowed) {
                map.entry(callee.function_name.clone())
                    .or_default()
                    .push((name.clone(), call.id));
            }
        }
    }
    map
}

/// Worklist processing order. The fixpoint is order-independent; the
/// shuffled variant exists so tests can demonstrate that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorklistOrder {
    Fifo,
    Lifo,
    Shuffled(u64),
}

/// The interprocedural matching fixpoint.
///
/// `subrule` is evaluated per worklist item with the item's matched nodes
/// as the seed frontier. `ScopeExhausted` is not an error: unresolved calls
/// simply contribute nothing.
pub fn interprocedural_match(
    seed: (&str, &BTreeSet<NodeId>),
    subrule: &SubRule,
    direction: Direction,
    scope: Scope,
    index: &ProgramIndex,
) -> InterprocResult {
    interprocedural_match_ordered(
        seed,
        subrule,
        direction,
        scope,
        index,
        WorklistOrder::Fifo,
        false,
    )
}

/// Specialization of the matching fixpoint to the transitive data closure
/// in the given direction.
pub fn interprocedural_data_closure(
    seed: (&str, &BTreeSet<NodeId>),
    direction: Direction,
    scope: Scope,
    index: &ProgramIndex,
) -> InterprocResult {
    let subrule = closure_subrule(direction);
    // The closure distributes over set union, so seeds already covered by a
    // graph's accumulated result can be skipped.
    interprocedural_match_ordered(
        seed,
        &subrule,
        direction,
        scope,
        index,
        WorklistOrder::Fifo,
        true,
    )
}

pub fn closure_subrule(direction: Direction) -> SubRule {
    use crate::query::{sub, OpChain};
    match direction {
        Direction::Forward => sub(|b| b.with_data_dependents_transform()),
        Direction::Backward => sub(|b| b.with_data_dependencies_transform()),
    }
}

pub fn interprocedural_match_ordered(
    seed: (&str, &BTreeSet<NodeId>),
    subrule: &SubRule,
    direction: Direction,
    scope: Scope,
    index: &ProgramIndex,
    order: WorklistOrder,
    subset_skip: bool,
) -> InterprocResult {
    let (seed_graph, seed_nodes) = seed;
    let allowed = scope_graphs(index, seed_graph, scope.breadth());
    let callers = caller_map(index, seed_graph, scope.breadth(), &allowed);

    let mut result = InterprocResult::default();
    result.matches.entry(seed_graph.to_string()).or_default();

    let mut worklist: VecDeque<(String, BTreeSet<NodeId>)> = VecDeque::new();
    worklist.push_back((seed_graph.to_string(), seed_nodes.clone()));
    let mut processed: HashSet<(String, BTreeSet<NodeId>)> = HashSet::new();
    let mut rng_state = match order {
        WorklistOrder::Shuffled(s) => s.wrapping_mul(2862933555777941757).wrapping_add(3037000493),
        _ => 0,
    };

    while !worklist.is_empty() {
        let (graph_name, mr) = match order {
            WorklistOrder::Fifo => worklist.pop_front().unwrap(),
            WorklistOrder::Lifo => worklist.pop_back().unwrap(),
            WorklistOrder::Shuffled(_) => {
                rng_state = rng_state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let i = (rng_state >> 33) as usize % worklist.len();
                worklist.swap_remove_back(i).unwrap()
            }
        };
        if !allowed.contains(&graph_name) {
            continue;
        }
        if mr.is_empty() {
            continue;
        }
        if subset_skip {
            if let Some(done) = result.matches.get(&graph_name) {
                if mr.is_subset(done) && processed.iter().any(|(g, _)| g == &graph_name) {
                    continue;
                }
            }
        }
        if !processed.insert((graph_name.clone(), mr.clone())) {
            continue;
        }
        let Some(graph) = index.graphs.get(&graph_name) else {
            continue;
        };

        // mr' = subrule.evaluate(G, mr). Results outside G land in the
        // solution map but are not propagated further from here.
        let mr_prime = evaluate_subrule_on(subrule, index, graph, &mr);
        let mut local_prime: BTreeSet<NodeId> = BTreeSet::new();
        for (g, n) in &mr_prime {
            if g.as_ref() == graph_name {
                local_prime.insert(*n);
            } else {
                result.matches.entry(g.to_string()).or_default().insert(*n);
            }
        }

        let entry = result.matches.entry(graph_name.clone()).or_default();
        entry.extend(mr.iter().copied());
        entry.extend(local_prime.iter().copied());

        let graph_callers: &[(String, NodeId)] =
            callers.get(&graph_name).map(Vec::as_slice).unwrap_or(&[]);

        match direction {
            Direction::Forward => {
                // Call arguments matched in mr' seed the callee formals.
                for call in graph.call_actions() {
                    let args = graph.arguments_of(call.id);
                    let receiver = graph.receiver_of(call.id);
                    let matched: Vec<NodeId> = args
                        .iter()
                        .copied()
                        .chain(receiver)
                        .filter(|a| local_prime.contains(a))
                        .collect();
                    if matched.is_empty() {
                        continue;
                    }
                    let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                        continue;
                    };
                    for callee in resolve_callees_in(&site, index, &allowed) {
                        let formals = args_to_formals(graph, call.id, &matched, callee);
                        if !formals.is_empty() {
                            worklist.push_back((callee.function_name.clone(), formals));
                        }
                    }
                }
                // Matched returned values reach definitions at call sites
                // in every caller.
                if graph.returns.iter().any(|r| local_prime.contains(r)) {
                    for (caller_name, call_node) in graph_callers {
                        let Some(caller_graph) = index.graphs.get(caller_name) else {
                            continue;
                        };
                        if let Some(def) = caller_graph.defined_node(*call_node) {
                            worklist
                                .push_back((caller_name.clone(), std::iter::once(def).collect()));
                        }
                    }
                }
            }
            Direction::Backward => {
                // Matched formals track corresponding caller-site arguments.
                let matched_formals: Vec<usize> = graph
                    .params
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| local_prime.contains(p))
                    .map(|(i, _)| i)
                    .collect();
                if !matched_formals.is_empty() {
                    for (caller_name, call_node) in graph_callers {
                        let Some(caller_graph) = index.graphs.get(caller_name) else {
                            continue;
                        };
                        let mut args: BTreeSet<NodeId> = BTreeSet::new();
                        for &fi in &matched_formals {
                            args.extend(formal_to_args(graph, fi, caller_graph, *call_node));
                        }
                        if !args.is_empty() {
                            worklist.push_back((caller_name.clone(), args));
                        }
                    }
                }
                // Matched call-site definitions track the callee's returns.
                for call in graph.call_actions() {
                    let Some(def) = graph.defined_node(call.id) else {
                        continue;
                    };
                    if !local_prime.contains(&def) {
                        continue;
                    }
                    let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                        continue;
                    };
                    for callee in resolve_callees_in(&site, index, &allowed) {
                        if !callee.returns.is_empty() {
                            worklist.push_back((
                                callee.function_name.clone(),
                                callee.returns.iter().copied().collect(),
                            ));
                        }
                    }
                }
            }
        }
    }

    result
}

fn evaluate_subrule_on(
    subrule: &SubRule,
    index: &ProgramIndex,
    graph: &MuGraph,
    mr: &BTreeSet<NodeId>,
) -> NodeSet {
    let ctx = EvalCtx::for_program(index, graph);
    let gid = ctx.graph_id();
    let seed: NodeSet = mr.iter().map(|&n| (gid.clone(), n)).collect();
    let mut frontier = MatchFrontier::from_nodes(seed);
    for op in &subrule.ops {
        match crate::query::eval::apply_operation(op, frontier, &ctx, 0) {
            Ok(f) => frontier = f,
            Err(_) => return NodeSet::new(),
        }
    }
    frontier.nodes
}

/// Shape of one call site: positional count, keyword names, kwargs node.
struct CallShape {
    positional: usize,
    kw_names: Vec<String>,
    kwargs_node: Option<NodeId>,
    args: Vec<NodeId>,
    receiver: Option<NodeId>,
}

fn call_shape(graph: &MuGraph, call: NodeId) -> CallShape {
    let node = graph.node(call);
    let args = graph.arguments_of(call);
    let kw_names: Vec<String> = node
        .meta(meta::KW_NAMES)
        .map(|s| s.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let kwargs_pos: Option<usize> = node.meta(meta::KWARGS_POS).and_then(|s| s.parse().ok());
    let kwargs_node = kwargs_pos.and_then(|p| args.get(p).copied());
    let positional = args.len() - kw_names.len() - usize::from(kwargs_node.is_some());
    CallShape {
        positional,
        kw_names,
        kwargs_node,
        args,
        receiver: graph.receiver_of(call),
    }
}

/// Map matched caller-side argument nodes to callee formals.
fn args_to_formals(
    caller: &MuGraph,
    call: NodeId,
    matched: &[NodeId],
    callee: &MuGraph,
) -> BTreeSet<NodeId> {
    let shape = call_shape(caller, call);
    let (_, _, has_self, _, _) = candidate_shape(callee);
    let shift = usize::from(has_self && shape.receiver.is_some());
    let mut out = BTreeSet::new();

    for &m in matched {
        if Some(m) == shape.receiver {
            if has_self {
                if let Some(&p) = callee.params.first() {
                    out.insert(p);
                }
            }
            continue;
        }
        // One node can appear at several argument positions (`f(v, v)`).
        let positions: Vec<usize> = shape
            .args
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == m)
            .map(|(i, _)| i)
            .collect();
        for pos in positions {
            map_argument_position(&shape, pos, callee, has_self, shift, &mut out);
        }
    }
    out
}

/// Dispatch one (argument node, position) pair onto the callee's formals:
/// positional by index (overflow into `*args`), keyword by name (else into
/// `**kwargs`), and a forwarded `**kwargs` onto every keyword-capable formal.
fn map_argument_position(
    shape: &CallShape,
    pos: usize,
    callee: &MuGraph,
    has_self: bool,
    shift: usize,
    out: &mut BTreeSet<NodeId>,
) {
    {
        let at_kwargs_position =
            shape.kwargs_node.is_some() && pos >= shape.positional + shape.kw_names.len();
        if at_kwargs_position {
            // `**kwargs` forwarding over-approximates to every keyword-capable
            // formal of the callee.
            for (i, &p) in callee.params.iter().enumerate() {
                if i == 0 && has_self {
                    continue;
                }
                if callee.node(p).meta(meta::PARAM_KIND) == Some("varargs") {
                    continue;
                }
                out.insert(p);
            }
        } else if pos < shape.positional {
            let idx = pos + shift;
            match callee.params.get(idx) {
                Some(&p) if callee.node(p).meta(meta::PARAM_KIND).is_none() => {
                    out.insert(p);
                }
                _ => {
                    // Overflow lands in *args when present.
                    if let Some(&v) = callee
                        .params
                        .iter()
                        .find(|&&p| callee.node(p).meta(meta::PARAM_KIND) == Some("varargs"))
                    {
                        out.insert(v);
                    }
                }
            }
        } else {
            // Keyword argument: match the formal by name, else **kwargs.
            let kw_index = pos - shape.positional;
            let name = shape.kw_names.get(kw_index);
            let named = name.and_then(|n| {
                callee
                    .param_names
                    .iter()
                    .position(|p| Some(p) == name.map(|_| n))
                    .and_then(|i| callee.params.get(i).copied())
            });
            match named {
                Some(p) => {
                    out.insert(p);
                }
                None => {
                    if let Some(&k) = callee
                        .params
                        .iter()
                        .find(|&&p| callee.node(p).meta(meta::PARAM_KIND) == Some("kwargs"))
                    {
                        out.insert(k);
                    }
                }
            }
        }
    }
}

/// Map one callee formal back to caller-side argument nodes.
fn formal_to_args(
    callee: &MuGraph,
    formal_idx: usize,
    caller: &MuGraph,
    call: NodeId,
) -> Vec<NodeId> {
    let shape = call_shape(caller, call);
    let (_, _, has_self, _, _) = candidate_shape(callee);
    let shift = usize::from(has_self && shape.receiver.is_some());
    let mut out = Vec::new();

    if formal_idx == 0 && has_self {
        if let Some(r) = shape.receiver {
            out.push(r);
        }
        return out;
    }

    let formal_node = callee.params[formal_idx];
    match callee.node(formal_node).meta(meta::PARAM_KIND) {
        Some("varargs") => {
            // Everything positional from the varargs position onward.
            let start = formal_idx.saturating_sub(shift);
            for (pos, &a) in shape.args.iter().enumerate() {
                if pos < shape.positional && pos >= start {
                    out.push(a);
                }
            }
        }
        Some("kwargs") => {
            // All keyword arguments plus forwarded kwargs.
            for (pos, &a) in shape.args.iter().enumerate() {
                if pos >= shape.positional && Some(a) != shape.kwargs_node {
                    out.push(a);
                }
            }
            if let Some(k) = shape.kwargs_node {
                out.push(k);
            }
        }
        _ => {
            let positional_idx = formal_idx.checked_sub(shift);
            if let Some(pi) = positional_idx {
                if pi < shape.positional {
                    out.push(shape.args[pi]);
                }
            }
            let formal_name = &callee.param_names[formal_idx];
            for (kw_index, name) in shape.kw_names.iter().enumerate() {
                if name == formal_name {
                    out.push(shape.args[shape.positional + kw_index]);
                }
            }
            if let Some(k) = shape.kwargs_node {
                out.push(k);
            }
        }
    }
    out
}

/// Callers of one graph within a scope anchored at the graph itself:
/// the inverse of callee resolution.
pub fn resolve_callers(
    graph_name: &str,
    index: &ProgramIndex,
    scope: Scope,
) -> Vec<(String, NodeId)> {
    let allowed = scope_graphs(index, graph_name, scope.breadth());
    caller_map(index, graph_name, scope.breadth(), &allowed)
        .get(graph_name)
        .cloned()
        .unwrap_or_default()
}
