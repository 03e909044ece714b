//! The rule engine.
//!
//! A rule is an implication `pre => post`: two operation sequences separated
//! by the `check` boundary. Evaluation threads a match frontier (a node set
//! plus named bindings) through the operations. An emptied precondition
//! frontier means the rule is vacuously satisfied and produces no finding; a
//! non-empty frontier after both sequences is a match.
//!
//! Rules are built with a fluent builder mirroring the operation catalog,
//! are immutable once built, and can be evaluated concurrently over
//! different graphs.

pub mod check;
pub mod eval;
pub mod op;

pub use check::{check_rule, RuleViolation};
pub use eval::{
    apply_operation, evaluate_rule, EvalCtx, EvalError, EvalOptions, RuleEvaluationResult,
    RuleOutcome, TraceStep,
};
pub use op::{category_of, CategorySet, NodeCategory, Operation, Pattern, Signature, SubRule};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::mugraph::NodeId;

/// Identifies a graph inside a program: the qualified function name.
pub type GraphId = Arc<str>;

/// A node within a specific graph.
pub type NodeRef = (GraphId, NodeId);

/// Deterministically ordered node set spanning one or more graphs.
pub type NodeSet = std::collections::BTreeSet<NodeRef>;

/// The state threaded through rule evaluation: the current node set, the
/// bindings written by `as`, and free-form auxiliary state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchFrontier {
    pub nodes: NodeSet,
    pub bindings: BTreeMap<String, NodeSet>,
    pub aux: BTreeMap<String, String>,
}

impl MatchFrontier {
    pub fn from_nodes(nodes: NodeSet) -> Self {
        MatchFrontier {
            nodes,
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// Optional criteria deciding whether a rule runs on a function at all.
/// A rejected function is skipped: no result, not a vacuous success.
#[derive(Debug, Clone, Default)]
pub struct FunctionMatcher {
    pub name: Option<Pattern>,
    pub class: Option<Pattern>,
    pub param_count: Option<usize>,
}

impl FunctionMatcher {
    pub fn matches(&self, graph: &crate::mugraph::MuGraph) -> bool {
        op::function_matches(graph, &self.name, &self.class, self.param_count)
    }
}

/// A named `pre => post` rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub comment: String,
    pub function_matcher: Option<FunctionMatcher>,
    pub pre: Vec<Operation>,
    pub post: Vec<Operation>,
    pub(crate) has_check: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("rule `{name}` cannot be built: {problems:?}")]
pub struct RuleBuildError {
    pub name: String,
    pub problems: Vec<String>,
}

/// Shared fluent surface for rules and subrules. Each method appends one
/// catalog operation.
pub trait OpChain: Sized {
    fn push_op(self, op: Operation) -> Self;

    /// The `as` step of the fluent DSL; named `as_id` because `as` is a
    /// keyword.
    #[allow(clippy::wrong_self_convention)]
    fn as_id(self, id: &str) -> Self {
        self.push_op(Operation::As(id.to_string()))
    }
    fn reset(self) -> Self {
        self.push_op(Operation::Reset)
    }
    fn with_id(self, id: &str) -> Self {
        self.push_op(Operation::WithId(id.to_string()))
    }
    fn with_instrumentation(self, f: op::InstrumentFn) -> Self {
        self.push_op(Operation::WithInstrumentation(f))
    }
    fn with_auxiliary_state(self, f: op::AuxFn) -> Self {
        self.push_op(Operation::WithAuxiliaryState(f))
    }
    fn with_action_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithActionFilter(Pattern::new(pattern)))
    }
    fn with_method_call_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithMethodCallFilter(Pattern::new(pattern)))
    }
    fn with_constant_data_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithConstantDataFilter(Pattern::new(pattern)))
    }
    fn with_constant_argument_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithConstantArgumentFilter(Pattern::new(pattern)))
    }
    fn with_direct_data_from_id_filter(self, id: &str) -> Self {
        self.push_op(Operation::WithDirectDataFromIdFilter(id.to_string()))
    }
    fn with_data_by_name_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithDataByNameFilter(Pattern::new(pattern)))
    }
    fn with_data_by_type_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithDataByTypeFilter(Pattern::new(pattern)))
    }
    fn with_receiver_by_type_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithReceiverByTypeFilter(Pattern::new(pattern)))
    }
    fn with_receiver_by_id_filter(self, id: &str) -> Self {
        self.push_op(Operation::WithReceiverByIdFilter(id.to_string()))
    }
    fn with_number_of_arguments_filter(self, n: usize) -> Self {
        self.push_op(Operation::WithNumberOfArgumentsFilter(n))
    }
    fn with_output_ignored_filter(self) -> Self {
        self.push_op(Operation::WithOutputIgnoredFilter)
    }
    fn with_context_filter(self, pattern: &str) -> Self {
        self.push_op(Operation::WithContextFilter(Pattern::new(pattern)))
    }
    fn with_downstream_conditional_check_filter(self) -> Self {
        self.push_op(Operation::WithDownstreamConditionalCheckFilter)
    }
    fn with_return_value_filter(self) -> Self {
        self.push_op(Operation::WithReturnValueFilter)
    }
    fn with_definition_transform(self) -> Self {
        self.push_op(Operation::WithDefinitionTransform)
    }
    fn with_defined_transform(self) -> Self {
        self.push_op(Operation::WithDefinedTransform)
    }
    fn with_receiver_transform(self) -> Self {
        self.push_op(Operation::WithReceiverTransform)
    }
    fn with_arguments_transform(self) -> Self {
        self.push_op(Operation::WithArgumentsTransform)
    }
    fn with_parameter_transform(self) -> Self {
        self.push_op(Operation::WithParameterTransform)
    }
    fn with_data_dependencies_transform(self) -> Self {
        self.push_op(Operation::WithDataDependenciesTransform)
    }
    fn with_data_dependents_transform(self) -> Self {
        self.push_op(Operation::WithDataDependentsTransform)
    }
    fn with_control_dependencies_transform(self) -> Self {
        self.push_op(Operation::WithControlDependenciesTransform)
    }
    fn with_users_transform(self) -> Self {
        self.push_op(Operation::WithUsersTransform)
    }
    fn with_node_transform(self, name: &'static str, f: op::NodeTransformFn) -> Self {
        self.push_op(Operation::WithNodeTransform(name, f))
    }
    fn with_one_of(self, subs: Vec<SubRule>) -> Self {
        self.push_op(Operation::WithOneOf(subs))
    }
    fn with_all_of(self, subs: Vec<SubRule>) -> Self {
        self.push_op(Operation::WithAllOf(subs))
    }
    fn with_any_of(self, subs: Vec<SubRule>) -> Self {
        self.push_op(Operation::WithAnyOf(subs))
    }
    fn with_negation_of(self, sub: SubRule) -> Self {
        self.push_op(Operation::WithNegationOf(sub))
    }
    fn with_closure(self, sub: SubRule) -> Self {
        self.push_op(Operation::WithClosure(sub))
    }
    fn with_interprocedural_match(self, scope: crate::interproc::Scope, subrule: SubRule) -> Self {
        self.push_op(Operation::WithInterproceduralMatch { subrule, scope })
    }
    fn with_interprocedural_data_dependencies_transform(
        self,
        scope: crate::interproc::Scope,
    ) -> Self {
        self.push_op(Operation::WithInterproceduralDataDependenciesTransform(
            scope,
        ))
    }
    fn with_interprocedural_data_dependents_transform(
        self,
        scope: crate::interproc::Scope,
    ) -> Self {
        self.push_op(Operation::WithInterproceduralDataDependentsTransform(scope))
    }
}

/// Build a subrule for a second-order operation:
/// `sub(|b| b.with_method_call_filter("foo"))`.
pub fn sub(f: impl FnOnce(SubRuleBuilder) -> SubRuleBuilder) -> SubRule {
    SubRule {
        ops: f(SubRuleBuilder::default()).ops,
    }
}

#[derive(Default)]
pub struct SubRuleBuilder {
    ops: Vec<Operation>,
}

impl OpChain for SubRuleBuilder {
    fn push_op(mut self, op: Operation) -> Self {
        self.ops.push(op);
        self
    }
}

/// Fluent rule builder. `check()` is the boundary between the precondition
/// and the postcondition.
#[derive(Default)]
pub struct RuleBuilder {
    name: String,
    comment: String,
    matcher: Option<FunctionMatcher>,
    pre: Vec<Operation>,
    post: Vec<Operation>,
    checked: bool,
    repeated_check: bool,
}

impl RuleBuilder {
    pub fn new() -> Self {
        RuleBuilder::default()
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_comment(mut self, comment: &str) -> Self {
        self.comment = comment.to_string();
        self
    }

    pub fn with_function_matcher(mut self, matcher: FunctionMatcher) -> Self {
        self.matcher = Some(matcher);
        self
    }

    pub fn check(mut self) -> Self {
        if self.checked {
            self.repeated_check = true;
        }
        self.checked = true;
        self
    }

    /// Assemble the rule without validating it; run [`check_rule`] to vet
    /// structure and signatures ahead of evaluation.
    pub fn build_unchecked(self) -> Rule {
        Rule {
            name: self.name,
            comment: self.comment,
            function_matcher: self.matcher,
            pre: self.pre,
            post: self.post,
            has_check: self.checked && !self.repeated_check,
        }
    }

    /// Assemble and validate; any violation fails the build.
    pub fn build(self) -> Result<Rule, RuleBuildError> {
        let rule = self.build_unchecked();
        let problems = check_rule(&rule);
        if problems.is_empty() {
            Ok(rule)
        } else {
            Err(RuleBuildError {
                name: rule.name,
                problems: problems.into_iter().map(|v| v.to_string()).collect(),
            })
        }
    }
}

impl OpChain for RuleBuilder {
    fn push_op(mut self, op: Operation) -> Self {
        if self.checked {
            self.post.push(op);
        } else {
            self.pre.push(op);
        }
        self
    }
}
