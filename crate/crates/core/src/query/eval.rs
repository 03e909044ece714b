//! Rule evaluation: the four-case frontier transition.
//!
//! Precondition evaluation starts from the complete node set of the graph
//! (or a caller-provided seed). If the precondition frontier empties, the
//! rule is vacuously satisfied. Otherwise the postcondition restarts from
//! the complete set, with bindings carried over; the rule matches when the
//! final frontier is non-empty.
//!
//! Every operation maps the empty set to the empty set, and evaluation
//! never mutates the graph.

use std::collections::BTreeMap;
use std::fmt;

use crate::interproc::{self, Direction, Scope};
use crate::mugraph::{meta, EdgeKind, MuGraph, NodeId, NodeKind, ProgramIndex};

use super::op::{category_of, Operation};
use super::{GraphId, MatchFrontier, NodeRef, NodeSet, Rule, SubRule};

/// Evaluation context: the current graph and, when available, the whole
/// program for cross-graph operations.
#[derive(Clone, Copy)]
pub struct EvalCtx<'a> {
    pub index: Option<&'a ProgramIndex>,
    pub graph: &'a MuGraph,
}

impl<'a> EvalCtx<'a> {
    pub fn for_graph(graph: &'a MuGraph) -> Self {
        EvalCtx { index: None, graph }
    }

    pub fn for_program(index: &'a ProgramIndex, graph: &'a MuGraph) -> Self {
        EvalCtx {
            index: Some(index),
            graph,
        }
    }

    pub fn graph_id(&self) -> GraphId {
        GraphId::from(self.graph.function_name.as_str())
    }

    /// Resolve a node reference against the current graph or the program.
    pub fn resolve(&self, node: &NodeRef) -> Option<&'a MuGraph> {
        if node.0.as_ref() == self.graph.function_name {
            return Some(self.graph);
        }
        self.index.and_then(|ix| ix.graphs.get(node.0.as_ref()))
    }

    pub fn all_nodes(&self) -> NodeSet {
        let gid = self.graph_id();
        self.graph.node_ids().map(|n| (gid.clone(), n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    /// An operation received nodes outside its accepted categories.
    #[error("step {step} ({op}): signature violation: {message}")]
    Signature {
        step: usize,
        op: String,
        message: String,
    },
    #[error("step {step} ({op}): operation is declared but not implemented")]
    NotImplemented { step: usize, op: String },
    #[error("step {step} ({op}): operation requires a program index")]
    MissingIndex { step: usize, op: String },
    #[error("step {step} ({op}): invalid pattern `{pattern}`")]
    BadPattern {
        step: usize,
        op: String,
        pattern: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleOutcome {
    /// The function matcher rejected this graph; nothing was evaluated.
    Skipped,
    /// A precondition prefix emptied: vacuously satisfied, no finding.
    PreconditionUnsatisfied,
    /// Precondition held but the postcondition frontier emptied.
    PostconditionUnsatisfied,
    /// Both sides held; the final frontier and bindings are the match.
    Matched(MatchFrontier),
    Error(EvalError),
}

impl RuleOutcome {
    pub fn matched(&self) -> Option<&MatchFrontier> {
        match self {
            RuleOutcome::Matched(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub label: String,
    pub frontier_size: usize,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} nodes", self.label, self.frontier_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleEvaluationResult {
    pub outcome: RuleOutcome,
    pub trace: Option<Vec<TraceStep>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub trace: bool,
}

/// Evaluate a rule over one graph. `seed` overrides the initial frontier
/// (interprocedural matching seeds subrules this way); bindings always
/// start empty.
pub fn evaluate_rule(
    rule: &Rule,
    ctx: &EvalCtx<'_>,
    seed: Option<NodeSet>,
    opts: EvalOptions,
) -> RuleEvaluationResult {
    let mut trace = opts.trace.then(Vec::new);

    if let Some(matcher) = &rule.function_matcher {
        if !matcher.matches(ctx.graph) {
            return RuleEvaluationResult {
                outcome: RuleOutcome::Skipped,
                trace,
            };
        }
    }

    let mut frontier = MatchFrontier::from_nodes(seed.unwrap_or_else(|| ctx.all_nodes()));
    let mut step = 0usize;

    for op in &rule.pre {
        frontier = match apply_operation(op, frontier, ctx, step) {
            Ok(f) => f,
            Err(e) => {
                return RuleEvaluationResult {
                    outcome: RuleOutcome::Error(e),
                    trace,
                }
            }
        };
        record(&mut trace, op, &frontier);
        step += 1;
        if frontier.nodes.is_empty() {
            // A precondition prefix evaluated to the empty set; every
            // remaining operation would keep it empty.
            return RuleEvaluationResult {
                outcome: RuleOutcome::PreconditionUnsatisfied,
                trace,
            };
        }
    }

    // Postcondition restarts from the complete node set.
    frontier.nodes = ctx.all_nodes();
    for op in &rule.post {
        frontier = match apply_operation(op, frontier, ctx, step) {
            Ok(f) => f,
            Err(e) => {
                return RuleEvaluationResult {
                    outcome: RuleOutcome::Error(e),
                    trace,
                }
            }
        };
        record(&mut trace, op, &frontier);
        step += 1;
    }

    if frontier.nodes.is_empty() {
        RuleEvaluationResult {
            outcome: RuleOutcome::PostconditionUnsatisfied,
            trace,
        }
    } else {
        RuleEvaluationResult {
            outcome: RuleOutcome::Matched(frontier),
            trace,
        }
    }
}

fn record(trace: &mut Option<Vec<TraceStep>>, op: &Operation, frontier: &MatchFrontier) {
    if let Some(t) = trace {
        t.push(TraceStep {
            label: format!("{op:?}"),
            frontier_size: frontier.nodes.len(),
        });
    }
}

/// Apply one operation to a frontier. The empty frontier is a fixed point of
/// every operation.
pub fn apply_operation(
    op: &Operation,
    mut frontier: MatchFrontier,
    ctx: &EvalCtx<'_>,
    step: usize,
) -> Result<MatchFrontier, EvalError> {
    if frontier.nodes.is_empty() {
        return Ok(frontier);
    }
    if !op.is_implemented() {
        return Err(EvalError::NotImplemented {
            step,
            op: op.name().to_string(),
        });
    }
    if let Some(p) = op.invalid_pattern() {
        return Err(EvalError::BadPattern {
            step,
            op: op.name().to_string(),
            pattern: p.raw.clone(),
        });
    }

    // Runtime signature enforcement for strict-input operations.
    let sig = op.signature();
    if !sig.accepts.is_any() {
        for node_ref in &frontier.nodes {
            let Some(graph) = ctx.resolve(node_ref) else {
                continue;
            };
            let category = category_of(&graph.node(node_ref.1).kind);
            if !sig.accepts.contains(category) {
                return Err(EvalError::Signature {
                    step,
                    op: op.name().to_string(),
                    message: format!(
                        "{} does not accept {:?} nodes (got {} in {}); expected {:?}",
                        op.name(),
                        category,
                        node_ref.1,
                        node_ref.0,
                        sig.accepts
                    ),
                });
            }
        }
    }

    match op {
        Operation::As(id) => {
            frontier.bindings.insert(id.clone(), frontier.nodes.clone());
            Ok(frontier)
        }
        Operation::Reset => {
            frontier.nodes = ctx.all_nodes();
            Ok(frontier)
        }
        Operation::WithId(id) => {
            frontier.nodes = frontier.bindings.get(id).cloned().unwrap_or_default();
            Ok(frontier)
        }
        Operation::WithInstrumentation(f) => {
            f(&frontier);
            Ok(frontier)
        }
        Operation::WithAuxiliaryState(f) => {
            let snapshot = frontier.clone();
            f(&mut frontier.aux, &snapshot);
            Ok(frontier)
        }

        Operation::WithActionFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            g.node(n).action_text().is_some_and(|t| p.matches(t))
        })),
        Operation::WithMethodCallFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            let node = g.node(n);
            node.kind.is_call() && p.matches(callee_candidate(node))
        })),
        Operation::WithConstantDataFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            let node = g.node(n);
            node.kind.is_data() && node.meta(meta::CONST).is_some_and(|c| p.matches(c))
        })),
        Operation::WithConstantArgumentFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            g.node(n).kind.is_action()
                && g.arguments_of(n)
                    .iter()
                    .any(|a| g.node(*a).meta(meta::CONST).is_some_and(|c| p.matches(c)))
        })),
        Operation::WithDirectDataFromIdFilter(id) => {
            let bound = frontier.bindings.get(id).cloned().unwrap_or_default();
            Ok(retain(frontier, ctx, |g, n| {
                let gid = GraphId::from(g.function_name.as_str());
                g.edges_in(n)
                    .filter(|e| e.kind.is_data())
                    .any(|e| bound.contains(&(gid.clone(), e.src)))
            }))
        }
        Operation::WithDataByNameFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            let node = g.node(n);
            node.kind.is_data() && node.data_name().is_some_and(|name| p.matches(name))
        })),
        Operation::WithDataByTypeFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            let node = g.node(n);
            node.kind.is_data() && node.type_string.as_deref().is_some_and(|t| p.matches(t))
        })),
        Operation::WithReceiverByTypeFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            g.receiver_of(n)
                .and_then(|r| g.node(r).type_string.clone())
                .is_some_and(|t| p.matches(&t))
        })),
        Operation::WithReceiverByIdFilter(id) => {
            let bound = frontier.bindings.get(id).cloned().unwrap_or_default();
            Ok(retain(frontier, ctx, |g, n| {
                let gid = GraphId::from(g.function_name.as_str());
                g.receiver_of(n).is_some_and(|r| bound.contains(&(gid, r)))
            }))
        }
        Operation::WithNumberOfArgumentsFilter(count) => Ok(retain(frontier, ctx, |g, n| {
            g.node(n).kind.is_action() && g.arguments_of(n).len() == *count
        })),
        Operation::WithOutputIgnoredFilter => Ok(retain(frontier, ctx, |g, n| {
            g.node(n).kind.is_call()
                && match g.defined_node(n) {
                    None => true,
                    Some(d) => g.edges_out(d).next().is_none(),
                }
        })),
        Operation::WithContextFilter(p) => Ok(retain(frontier, ctx, |g, n| {
            g.control_parents(n).iter().any(|c| match &g.node(*c).kind {
                NodeKind::Control(kind) => p.matches(kind.label()),
                _ => false,
            })
        })),
        Operation::WithDownstreamConditionalCheckFilter => Ok(retain(frontier, ctx, |g, n| {
            g.node(n).kind.is_data()
                && data_closure_one(g, n, Direction::Forward)
                    .iter()
                    .any(|&m| g.edges_out(m).any(|e| e.kind == EdgeKind::Condition))
        })),
        Operation::WithReturnValueFilter => {
            Ok(retain(frontier, ctx, |g, n| g.returns.contains(&n)))
        }

        Operation::WithDefinitionTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            g.defined_node(n).into_iter().collect()
        })),
        Operation::WithDefinedTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            g.defining_action(n).into_iter().collect()
        })),
        Operation::WithReceiverTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            g.receiver_of(n).into_iter().collect()
        })),
        Operation::WithArgumentsTransform => Ok(map_nodes(frontier, ctx, |g, n| g.arguments_of(n))),
        Operation::WithParameterTransform => Ok(map_nodes(frontier, ctx, |g, _| g.params.clone())),
        Operation::WithDataDependenciesTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            data_closure_one(g, n, Direction::Backward)
        })),
        Operation::WithDataDependentsTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            data_closure_one(g, n, Direction::Forward)
        })),
        Operation::WithControlDependenciesTransform => {
            Ok(map_nodes(frontier, ctx, |g, n| g.control_parents(n)))
        }
        Operation::WithUsersTransform => Ok(map_nodes(frontier, ctx, |g, n| {
            g.edges_out(n)
                .filter(|e| e.kind.is_data())
                .map(|e| e.dst)
                .collect()
        })),
        Operation::WithNodeTransform(_, f) => {
            frontier.nodes = f(ctx, &frontier);
            Ok(frontier)
        }

        Operation::WithOneOf(subs) => {
            for sub in subs {
                let (result, out_frontier) = eval_subrule(sub, &frontier, ctx, step)?;
                if !result.is_empty() {
                    let mut f = out_frontier;
                    f.nodes = result;
                    return Ok(f);
                }
            }
            frontier.nodes = NodeSet::new();
            Ok(frontier)
        }
        Operation::WithAllOf(subs) => {
            let mut union = NodeSet::new();
            let mut acc = frontier.clone();
            for sub in subs {
                let (result, out_frontier) = eval_subrule(sub, &acc, ctx, step)?;
                if result.is_empty() {
                    acc.nodes = NodeSet::new();
                    return Ok(acc);
                }
                union.extend(result);
                // Bindings made inside successful subrules persist.
                acc.bindings = out_frontier.bindings;
                acc.aux = out_frontier.aux;
            }
            acc.nodes = union;
            Ok(acc)
        }
        Operation::WithAnyOf(subs) => {
            let mut union = NodeSet::new();
            let mut acc = frontier.clone();
            for sub in subs {
                let (result, out_frontier) = eval_subrule(sub, &acc, ctx, step)?;
                if !result.is_empty() {
                    union.extend(result);
                    acc.bindings = out_frontier.bindings;
                    acc.aux = out_frontier.aux;
                }
            }
            acc.nodes = union;
            Ok(acc)
        }
        Operation::WithNegationOf(sub) => {
            let (result, _) = eval_subrule(sub, &frontier, ctx, step)?;
            if result.is_empty() {
                Ok(frontier)
            } else {
                frontier.nodes = NodeSet::new();
                Ok(frontier)
            }
        }
        Operation::WithClosure(sub) => {
            let (result, mut out_frontier) = eval_subrule(sub, &frontier, ctx, step)?;
            out_frontier.nodes = result;
            Ok(out_frontier)
        }

        Operation::WithInterproceduralMatch { subrule, scope } => {
            interproc_op(&mut frontier, ctx, step, *scope, Some(subrule))?;
            Ok(frontier)
        }
        Operation::WithInterproceduralDataDependenciesTransform(scope) => {
            let scope = scope.with_direction(Direction::Backward);
            interproc_op(&mut frontier, ctx, step, scope, None)?;
            Ok(frontier)
        }
        Operation::WithInterproceduralDataDependentsTransform(scope) => {
            let scope = scope.with_direction(Direction::Forward);
            interproc_op(&mut frontier, ctx, step, scope, None)?;
            Ok(frontier)
        }

        unimplemented_op => Err(EvalError::NotImplemented {
            step,
            op: unimplemented_op.name().to_string(),
        }),
    }
}

/// Candidate text a method-call filter matches: the dotted path when the
/// callee is a plain name/attribute chain, otherwise the simple name.
pub fn callee_candidate(node: &crate::mugraph::MuNode) -> &str {
    node.meta(meta::CALLEE_PATH)
        .or(node.meta(meta::CALLEE_NAME))
        .unwrap_or("")
}

fn retain(
    mut frontier: MatchFrontier,
    ctx: &EvalCtx<'_>,
    keep: impl Fn(&MuGraph, NodeId) -> bool,
) -> MatchFrontier {
    frontier.nodes = std::mem::take(&mut frontier.nodes)
        .into_iter()
        .filter(|r| ctx.resolve(r).is_some_and(|g| keep(g, r.1)))
        .collect();
    frontier
}

fn map_nodes(
    mut frontier: MatchFrontier,
    ctx: &EvalCtx<'_>,
    f: impl Fn(&MuGraph, NodeId) -> Vec<NodeId>,
) -> MatchFrontier {
    let mut out = NodeSet::new();
    for r in std::mem::take(&mut frontier.nodes) {
        if let Some(g) = ctx.resolve(&r) {
            for n in f(g, r.1) {
                out.insert((r.0.clone(), n));
            }
        }
    }
    frontier.nodes = out;
    frontier
}

/// Evaluate a subrule from the current frontier (second-order seeding).
/// Returns the resulting node set plus the frontier whose bindings/aux the
/// caller may choose to commit.
fn eval_subrule(
    sub: &SubRule,
    seed: &MatchFrontier,
    ctx: &EvalCtx<'_>,
    step: usize,
) -> Result<(NodeSet, MatchFrontier), EvalError> {
    let mut frontier = seed.clone();
    for op in &sub.ops {
        frontier = apply_operation(op, frontier, ctx, step)?;
    }
    let nodes = frontier.nodes.clone();
    Ok((nodes, frontier))
}

/// Intraprocedural reflexive-transitive data closure from one node.
/// Yields data nodes only; phi actions are crossed like any other action.
pub fn data_closure_one(graph: &MuGraph, start: NodeId, direction: Direction) -> Vec<NodeId> {
    let mut seen_data: std::collections::BTreeSet<NodeId> = std::collections::BTreeSet::new();
    let mut seen: std::collections::BTreeSet<NodeId> = std::collections::BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(start);
    queue.push_back(start);
    if graph.node(start).kind.is_data() {
        seen_data.insert(start);
    }
    while let Some(n) = queue.pop_front() {
        let next: Vec<NodeId> = match direction {
            Direction::Forward => graph
                .edges_out(n)
                .filter(|e| e.kind.is_data())
                .map(|e| e.dst)
                .collect(),
            Direction::Backward => graph
                .edges_in(n)
                .filter(|e| e.kind.is_data())
                .map(|e| e.src)
                .collect(),
        };
        for m in next {
            if seen.insert(m) {
                if graph.node(m).kind.is_data() {
                    seen_data.insert(m);
                }
                queue.push_back(m);
            }
        }
    }
    seen_data.into_iter().collect()
}

/// Shared driver for the interprocedural operations: group the frontier by
/// graph, run the fixpoint per seed graph, union the results.
fn interproc_op(
    frontier: &mut MatchFrontier,
    ctx: &EvalCtx<'_>,
    step: usize,
    scope: Scope,
    subrule: Option<&SubRule>,
) -> Result<(), EvalError> {
    let Some(index) = ctx.index else {
        return Err(EvalError::MissingIndex {
            step,
            op: match subrule {
                Some(_) => "withInterproceduralMatch".to_string(),
                None => "withInterproceduralDataDependenciesTransform".to_string(),
            },
        });
    };

    let mut by_graph: BTreeMap<GraphId, Vec<NodeId>> = BTreeMap::new();
    for (gid, n) in std::mem::take(&mut frontier.nodes) {
        by_graph.entry(gid).or_default().push(n);
    }

    let mut out = NodeSet::new();
    for (gid, nodes) in by_graph {
        let seed: std::collections::BTreeSet<NodeId> = nodes.into_iter().collect();
        let result = match subrule {
            Some(sub) => interproc::interprocedural_match(
                (gid.as_ref(), &seed),
                sub,
                scope.direction(),
                scope,
                index,
            ),
            None => interproc::interprocedural_data_closure(
                (gid.as_ref(), &seed),
                scope.direction(),
                scope,
                index,
            ),
        };
        for (g, nodes) in result.matches {
            let g: GraphId = GraphId::from(g.as_str());
            for n in nodes {
                out.insert((g.clone(), n));
            }
        }
    }
    frontier.nodes = out;
    Ok(())
}
