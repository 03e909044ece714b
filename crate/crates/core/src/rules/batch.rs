//! Batch-response detectors: ignored batch outputs and unchecked failed
//! records in streaming puts.

use std::sync::Arc;

use crate::apispec::{ApiTrait, TraitKind};
use crate::query::{evaluate_rule, sub, EvalCtx, EvalOptions, NodeSet, OpChain, Rule, RuleBuilder};

use super::{api_call_pattern, calls_to, response_flow_checks_key, Detection, RuleCtx};

const RULE_BATCH: &str = "batch-unchecked";
const COMMENT_BATCH: &str = "A batch operation can report per-item failures in its response \
without raising; ignoring the response silently drops failed items.";

const RULE_RECORDS: &str = "kinesis-failed-records";
const COMMENT_RECORDS: &str = "A streaming put can partially fail; check the failure count in \
the response and retry the failed records.";

const BATCH_API_CALL: &str = "BATCH_API_CALL";
const CLIENT_RECEIVER: &str = "PYTHON_AWS_CLIENT_RECEIVER";

/// The batch rule: match batch API calls and store them, transform to their
/// receivers, then relate the receivers to the service's client through the
/// layered resolver. The postcondition reloads the calls and keeps those
/// whose output is ignored (no defined node, or a defined node with no
/// outgoing edges).
fn batch_rule(ctx: &RuleCtx<'_>, service_id: &str, api: &str) -> Rule {
    let gate = ctx.gate_fn(service_id);
    RuleBuilder::new()
        .with_name(RULE_BATCH)
        .with_comment(COMMENT_BATCH)
        .with_method_call_filter(&api_call_pattern(api))
        .as_id(BATCH_API_CALL)
        .with_receiver_transform()
        .as_id(CLIENT_RECEIVER)
        .reset()
        .with_closure(sub(move |b| {
            let gate = gate.clone();
            b.with_id(BATCH_API_CALL).with_node_transform(
                "getBoto3Client",
                Arc::new(move |ectx: &EvalCtx<'_>, frontier| {
                    let Some(index) = ectx.index else {
                        return NodeSet::new();
                    };
                    let mut kept = NodeSet::new();
                    for (gid, call) in &frontier.nodes {
                        let Some(graph) = index.graphs.get(gid.as_ref()) else {
                            continue;
                        };
                        if gate(index, graph, *call) {
                            if let Some(receiver) = graph.receiver_of(*call) {
                                kept.insert((gid.clone(), receiver));
                            }
                        }
                    }
                    kept
                }),
            )
        }))
        .check()
        .with_id(BATCH_API_CALL)
        .with_output_ignored_filter()
        .build()
        .expect("batch rule is well-formed")
}

pub fn batch_unchecked(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::Batch) {
        let rule = batch_rule(ctx, &spec.service_id, &spec.api);
        for graph in ctx.index.graphs.values() {
            if calls_to(graph, &spec.api).next().is_none() {
                continue;
            }
            let ectx = EvalCtx::for_program(ctx.index, graph);
            let opts = EvalOptions {
                trace: ctx.tracing(RULE_BATCH),
            };
            let result = evaluate_rule(&rule, &ectx, None, opts);
            if let Some(steps) = &result.trace {
                for step in steps {
                    ctx.trace_line(RULE_BATCH, || format!("{}: {step}", graph.function_name));
                }
            }
            let Some(frontier) = result.outcome.matched() else {
                continue;
            };
            for (_, call) in &frontier.nodes {
                // Per-site gate: the rule-level closure only proves that
                // some call in the graph resolved.
                let Some(resolution) = ctx.gate(graph, *call, &spec.service_id) else {
                    continue;
                };
                let failure_key = match &spec.api_trait {
                    ApiTrait::Batch { failure_key } => failure_key.as_str(),
                    _ => "Failed",
                };
                let message = format!(
                    "{COMMENT_BATCH} Check `{failure_key}` in the `{}` response ({}).",
                    spec.api, spec.service_id,
                );
                out.push(ctx.detection(RULE_BATCH, graph, *call, message, Some(spec), resolution));
            }
        }
    }
    out
}

/// Flags put_records-like calls whose response flow never checks the
/// failure-count key. A fully ignored output trivially fails the check.
pub fn kinesis_failed_records(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::PutRecordsLike) {
        let ApiTrait::PutRecordsLike { failure_count_key } = &spec.api_trait else {
            continue;
        };
        let keys = vec![failure_count_key.clone()];
        for graph in ctx.index.graphs.values() {
            for call in calls_to(graph, &spec.api) {
                let Some(resolution) = ctx.gate(graph, call.id, &spec.service_id) else {
                    continue;
                };
                let compliant = graph.defined_node(call.id).is_some_and(|response| {
                    response_flow_checks_key(ctx.index, graph, response, &keys)
                });
                if compliant {
                    continue;
                }
                let message = format!(
                    "{COMMENT_RECORDS} Check `{failure_count_key}` in the `{}` response ({}).",
                    spec.api, spec.service_id,
                );
                out.push(ctx.detection(
                    RULE_RECORDS,
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
