//! Pagination detectors: missing pagination handling, and manual
//! pagination loops where the SDK provides a paginator.

use crate::apispec::{ApiTrait, TraitKind};
use crate::interproc::Direction;
use crate::mugraph::{meta, NodeId};
use crate::query::eval::data_closure_one;

use super::{calls_to, response_flow_checks_key, Detection, RuleCtx};

const RULE_MISSING: &str = "missing-pagination";
const COMMENT_MISSING: &str = "The results of a paginated API arrive in pages linked by a \
continuation token; reading only the first response drops the rest of the result set.";

const RULE_CHAIN: &str = "inefficient-api-chain";
const COMMENT_CHAIN: &str = "This loop paginates by hand; the SDK provides a paginator that \
performs the iteration for you.";

/// Flags calls to a pagination-trait API whose response flow never checks a
/// continuation token and that do not use a paginator instead.
pub fn missing_pagination(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::Pagination) {
        let ApiTrait::Pagination {
            expected_pagination_methods,
            ..
        } = &spec.api_trait
        else {
            continue;
        };
        for graph in ctx.index.graphs.values() {
            // A paginator in the same function is the compliant alternative.
            let uses_paginator = calls_to(graph, "get_paginator").any(|call| {
                graph
                    .arguments_of(call.id)
                    .first()
                    .and_then(|&a| graph.node(a).meta(meta::CONST_STR))
                    .is_some_and(|name| name == spec.api)
            });
            if uses_paginator {
                continue;
            }
            for call in calls_to(graph, &spec.api) {
                let Some(resolution) = ctx.gate(graph, call.id, &spec.service_id) else {
                    ctx.trace_line(RULE_MISSING, || {
                        format!(
                            "{}: call {} unresolved for {}",
                            graph.function_name, call.id, spec.service_id
                        )
                    });
                    continue;
                };
                let compliant = graph.defined_node(call.id).is_some_and(|response| {
                    response_flow_checks_key(
                        ctx.index,
                        graph,
                        response,
                        expected_pagination_methods,
                    )
                });
                ctx.trace_line(RULE_MISSING, || {
                    format!(
                        "{}: call {} resolved via {:?}, token check present: {compliant}",
                        graph.function_name, call.id, resolution.strategy
                    )
                });
                if compliant {
                    continue;
                }
                let message = format!(
                    "{COMMENT_MISSING} Iterate until `{}` is absent from the `{}` response ({}).",
                    expected_pagination_methods.join("`/`"),
                    spec.api,
                    spec.service_id,
                );
                out.push(ctx.detection(
                    RULE_MISSING,
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

/// Flags loops whose condition tests a pagination token and whose body
/// re-invokes the same paginated API, when a paginator is available.
pub fn inefficient_api_chain(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::Pagination) {
        let ApiTrait::Pagination {
            expected_pagination_methods,
            ..
        } = &spec.api_trait
        else {
            continue;
        };
        // Gated on an explicit paginator-availability marker.
        let paginator_available = ctx
            .specs
            .lookup(&spec.api, Some(TraitKind::PaginatorAvailable))
            .iter()
            .any(|s| {
                s.service_id == spec.service_id
                    && matches!(
                        s.api_trait,
                        ApiTrait::PaginatorAvailable { available: true }
                    )
            });
        if !paginator_available {
            continue;
        }
        for graph in ctx.index.graphs.values() {
            for call in calls_to(graph, &spec.api) {
                let loops = super::enclosing_loops(graph, call.id);
                if loops.is_empty() {
                    continue;
                }
                // The loop condition must test a continuation token.
                let token_loop = loops
                    .iter()
                    .any(|&ctl| condition_tests_key(graph, ctl, expected_pagination_methods));
                if !token_loop {
                    continue;
                }
                let Some(resolution) = ctx.gate(graph, call.id, &spec.service_id) else {
                    continue;
                };
                let message = format!(
                    "{COMMENT_CHAIN} Replace the `{}` loop with `get_paginator(\"{}\")` ({}).",
                    expected_pagination_methods.join("`/`"),
                    spec.api,
                    spec.service_id,
                );
                out.push(ctx.detection(
                    RULE_CHAIN,
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

/// Does any condition value of this control node trace back to a check of
/// one of the keys?
fn condition_tests_key(graph: &crate::mugraph::MuGraph, ctl: NodeId, keys: &[String]) -> bool {
    let condition_sources: Vec<NodeId> = graph
        .edges_in(ctl)
        .filter(|e| e.kind == crate::mugraph::EdgeKind::Condition)
        .map(|e| e.src)
        .collect();
    for source in condition_sources {
        for node in data_closure_one(graph, source, Direction::Backward) {
            if let Some(def) = graph.defining_action(node) {
                if super::action_checks_key(graph, def, keys) {
                    return true;
                }
            }
        }
    }
    false
}
