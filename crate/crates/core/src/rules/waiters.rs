//! Polling-loop detector: loops that poll a waiter-capable API with a
//! sleep between retries should use the SDK waiter instead.

use crate::apispec::{ApiTrait, TraitKind};
use crate::mugraph::meta;

use super::{calls_to, enclosing_loops, Detection, RuleCtx};

const RULE: &str = "use-waiters";
const COMMENT: &str = "This loop polls a resource with a sleep between retries; the SDK waiter \
abstracts the polling logic behind a single call.";

/// Flags a loop containing both a call to a waiter-trait API and a call
/// named `sleep`. The finding is anchored at the polled API call.
pub fn use_waiters(ctx: &RuleCtx<'_>) -> Vec<Detection> {
    let mut out = Vec::new();
    for spec in ctx.specs.entries_with(TraitKind::Waiter) {
        let ApiTrait::Waiter { waiter_name } = &spec.api_trait else {
            continue;
        };
        for graph in ctx.index.graphs.values() {
            // Loops containing a sleep call.
            let sleep_loops: Vec<_> = graph
                .call_actions()
                .filter(|n| n.meta(meta::CALLEE_NAME) == Some("sleep"))
                .flat_map(|n| enclosing_loops(graph, n.id))
                .collect();
            if sleep_loops.is_empty() {
                continue;
            }
            for call in calls_to(graph, &spec.api) {
                let polled = enclosing_loops(graph, call.id)
                    .iter()
                    .any(|l| sleep_loops.contains(l));
                if !polled {
                    continue;
                }
                let Some(resolution) = ctx.gate(graph, call.id, &spec.service_id) else {
                    continue;
                };
                let message = format!(
                    "{COMMENT} Use the `{waiter_name}` waiter instead of polling `{}` ({}).",
                    spec.api, spec.service_id,
                );
                out.push(ctx.detection(RULE, graph, call.id, message, Some(spec), resolution));
            }
        }
    }
    out
}
