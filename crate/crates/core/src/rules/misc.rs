//! Remaining detectors: unguarded response-metadata access, deprecated
//! APIs, and client construction inside Lambda handlers.

use crate::apispec::{ApiTrait, TraitKind};
use crate::interproc::Direction;
use crate::mugraph::{meta, ActionKind, EdgeKind, MuGraph, NodeId, NodeKind};
use crate::query::eval::data_closure_one;
use crate::resolve::{constructor_service, ClientResolution, Strategy};

use super::{calls_to, Detection, RuleCtx};

const RULE_METADATA: &str = "response-metadata-none-check";
const COMMENT_METADATA: &str = "Accessing `ResponseMetadata` without first checking the response \
object can raise a NoneType error.";

const RULE_DEPRECATED: &str = "deprecated-api";
const COMMENT_DEPRECATED: &str = "This API is deprecated.";

const RULE_LAMBDA: &str = "lambda-client-init";
const COMMENT_LAMBDA: &str = "Constructing a client inside a Lambda handler repeats the \
initialization on every invocation; create it at module level and reuse it.";

const METADATA_KEY: &str = "ResponseMetadata";

/// Flags `ResponseMetadata` subscript/attribute access on a response value
/// with no dominating test of that value. Any control node the access is
/// control-dependent on whose condition data-depends on the response counts
/// as a check (truthiness, `is None`, membership, assertion).
pub fn response_metadata_none_check(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for graph in ctx.index.graphs.values() {
        for access in graph
            .nodes
            .iter()
            .filter(|n| is_metadata_access(graph, n.id))
        {
            let Some(value) = accessed_value(graph, access.id) else {
                continue;
            };
            // The response must come from a resolvable API call.
            let Some(call) = graph.defining_action(value) else {
                continue;
            };
            if !graph.node(call).kind.is_call() {
                continue;
            }
            let Some(resolution) = ctx.resolve(graph, call) else {
                continue;
            };
            if guarded(graph, access.id, value) {
                continue;
            }
            let message = format!(
                "{COMMENT_METADATA} Add a None check on the `{}` response before reading `{METADATA_KEY}`.",
                graph.node(call).meta(meta::CALLEE_NAME).unwrap_or("API"),
            );
            out.push(ctx.detection(RULE_METADATA, graph, call, message, None, resolution));
        }
    }
    out
}

fn is_metadata_access(graph: &MuGraph, node: NodeId) -> bool {
    let n = graph.node(node);
    match &n.kind {
        NodeKind::Action(ActionKind::SubscriptRead) => graph
            .arguments_of(node)
            .first()
            .and_then(|&a| graph.node(a).meta(meta::CONST_STR))
            .is_some_and(|v| v == METADATA_KEY),
        NodeKind::Action(ActionKind::AttributeRead) => n.meta(meta::ATTR) == Some(METADATA_KEY),
        _ => false,
    }
}

fn accessed_value(graph: &MuGraph, access: NodeId) -> Option<NodeId> {
    graph.receiver_of(access)
}

/// Is the access dominated by a control node whose condition depends on the
/// response value?
fn guarded(graph: &MuGraph, access: NodeId, value: NodeId) -> bool {
    for ctl in graph.control_parents(access) {
        let conditions: Vec<NodeId> = graph
            .edges_in(ctl)
            .filter(|e| e.kind == EdgeKind::Condition)
            .map(|e| e.src)
            .collect();
        for cond in conditions {
            if cond == value || data_closure_one(graph, cond, Direction::Backward).contains(&value)
            {
                return true;
            }
        }
    }
    false
}

/// Flags calls matching a deprecated-trait entry, with the resolved service
/// required to match the entry's.
pub fn deprecated_api(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::Deprecated) {
        let ApiTrait::Deprecated { replacement } = &spec.api_trait else {
            continue;
        };
        for graph in ctx.index.graphs.values() {
            for call in calls_to(graph, &spec.api) {
                let Some(resolution) = ctx.gate(graph, call.id, &spec.service_id) else {
                    continue;
                };
                let message = match replacement {
                    Some(r) => format!(
                        "{COMMENT_DEPRECATED} Replace `{}` with `{r}` ({}).",
                        spec.api, spec.service_id
                    ),
                    None => format!("{COMMENT_DEPRECATED} `{}` ({}).", spec.api, spec.service_id),
                };
                out.push(ctx.detection(
                    RULE_DEPRECATED,
                    graph,
                    call.id,
                    message,
                    Some(spec),
                    resolution,
                ));
            }
        }
    }
    out
}

/// Flags recognized client/resource construction calls inside functions
/// shaped like Lambda handlers (two parameters matching the configured
/// name pairs, `event`/`context` by default).
pub fn lambda_client_init(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for graph in ctx.index.graphs.values() {
        if !is_handler(ctx, graph) {
            continue;
        }
        for call in graph.call_actions() {
            let Some((service, kind)) = constructor_service(graph, call.id, ctx.catalog()) else {
                continue;
            };
            let Some(site) = crate::interproc::CallSiteRef::from_call(graph, call.id) else {
                continue;
            };
            // The construction call itself is the evidence: its defined
            // value carries the stub-derived client type.
            let resolution = ClientResolution {
                site,
                service: service.clone(),
                kind,
                strategy: Strategy::S1,
                confidence: crate::resolve::HIGH_CONFIDENCE,
            };
            let message = format!(
                "{COMMENT_LAMBDA} `{}` builds a {service} client inside the handler.",
                graph.simple_name,
            );
            out.push(ctx.detection(RULE_LAMBDA, graph, call.id, message, None, resolution));
        }
    }
    out
}

fn is_handler(ctx: &RuleCtx<'_>, graph: &MuGraph) -> bool {
    if graph.param_names.len() != 2 {
        return false;
    }
    ctx.handler_params
        .iter()
        .any(|(a, b)| a.matches(&graph.param_names[0]) && b.matches(&graph.param_names[1]))
}
