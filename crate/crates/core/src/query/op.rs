//! The operation catalog: core, filter, transform and second-order
//! operations, each annotated with a signature stating the node categories
//! it accepts and yields.

use std::fmt;
use std::sync::Arc;

use regex::Regex;

use crate::interproc::Scope;
use crate::mugraph::{MuGraph, NodeKind};

use super::{MatchFrontier, NodeSet};

/// Node categories used by operation signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeCategory {
    Data,
    Action,
    Control,
    EntryExit,
    AnyNode,
}

pub fn category_of(kind: &NodeKind) -> NodeCategory {
    match kind {
        NodeKind::Data { .. } => NodeCategory::Data,
        NodeKind::Action(_) => NodeCategory::Action,
        NodeKind::Control(_) => NodeCategory::Control,
        NodeKind::Entry | NodeKind::Exit => NodeCategory::EntryExit,
    }
}

/// Bit set of node categories.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct CategorySet(u8);

impl CategorySet {
    pub const DATA: CategorySet = CategorySet(1);
    pub const ACTION: CategorySet = CategorySet(2);
    pub const CONTROL: CategorySet = CategorySet(4);
    pub const ENTRY_EXIT: CategorySet = CategorySet(8);
    pub const ANY: CategorySet = CategorySet(15);

    pub fn union(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 | other.0)
    }

    pub fn intersects(self, other: CategorySet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_any(self) -> bool {
        self == CategorySet::ANY
    }

    pub fn contains(self, category: NodeCategory) -> bool {
        let bit = match category {
            NodeCategory::Data => CategorySet::DATA,
            NodeCategory::Action => CategorySet::ACTION,
            NodeCategory::Control => CategorySet::CONTROL,
            NodeCategory::EntryExit => CategorySet::ENTRY_EXIT,
            NodeCategory::AnyNode => return true,
        };
        self.0 & bit.0 != 0
    }
}

impl fmt::Debug for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_any() {
            return write!(f, "any");
        }
        let mut parts = Vec::new();
        if self.intersects(CategorySet::DATA) {
            parts.push("data");
        }
        if self.intersects(CategorySet::ACTION) {
            parts.push("action");
        }
        if self.intersects(CategorySet::CONTROL) {
            parts.push("control");
        }
        if self.intersects(CategorySet::ENTRY_EXIT) {
            parts.push("entry/exit");
        }
        write!(f, "{}", parts.join("|"))
    }
}

/// Accepted input and produced output categories of one operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub accepts: CategorySet,
    pub yields: CategorySet,
}

impl Signature {
    const fn new(accepts: CategorySet, yields: CategorySet) -> Signature {
        Signature { accepts, yields }
    }
}

/// Anchored regular expression: the pattern must match the whole candidate.
#[derive(Clone)]
pub struct Pattern {
    pub raw: String,
    regex: Option<Regex>,
}

impl Pattern {
    pub fn new(raw: &str) -> Pattern {
        let regex = Regex::new(&format!("^(?:{raw})$")).ok();
        Pattern {
            raw: raw.to_string(),
            regex,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.regex.is_some()
    }

    pub fn matches(&self, candidate: &str) -> bool {
        self.regex.as_ref().is_some_and(|r| r.is_match(candidate))
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}/", self.raw)
    }
}

/// A nested operation sequence used by second-order operations.
#[derive(Clone, Debug)]
pub struct SubRule {
    pub ops: Vec<Operation>,
}

/// Read-only frontier inspection hook.
pub type InstrumentFn = Arc<dyn Fn(&MatchFrontier) + Send + Sync>;
/// Mutator over the rule's auxiliary key/value state.
pub type AuxFn =
    Arc<dyn Fn(&mut std::collections::BTreeMap<String, String>, &MatchFrontier) + Send + Sync>;
/// General frontier remap with access to the evaluation context.
pub type NodeTransformFn =
    Arc<dyn Fn(&super::eval::EvalCtx<'_>, &MatchFrontier) -> NodeSet + Send + Sync>;

#[derive(Clone)]
pub enum Operation {
    // Core.
    As(String),
    Reset,
    WithId(String),
    WithInstrumentation(InstrumentFn),
    WithAuxiliaryState(AuxFn),

    // Filters.
    WithActionFilter(Pattern),
    WithMethodCallFilter(Pattern),
    WithConstantDataFilter(Pattern),
    WithConstantArgumentFilter(Pattern),
    WithDirectDataFromIdFilter(String),
    WithDataByNameFilter(Pattern),
    WithDataByTypeFilter(Pattern),
    WithReceiverByTypeFilter(Pattern),
    WithReceiverByIdFilter(String),
    WithNumberOfArgumentsFilter(usize),
    WithOutputIgnoredFilter,
    WithContextFilter(Pattern),
    WithDownstreamConditionalCheckFilter,
    WithReturnValueFilter,

    // Transforms.
    WithDefinitionTransform,
    WithDefinedTransform,
    WithReceiverTransform,
    WithArgumentsTransform,
    WithParameterTransform,
    WithDataDependenciesTransform,
    WithDataDependentsTransform,
    WithControlDependenciesTransform,
    WithUsersTransform,
    WithNodeTransform(&'static str, NodeTransformFn),

    // Second-order.
    WithOneOf(Vec<SubRule>),
    WithAllOf(Vec<SubRule>),
    WithAnyOf(Vec<SubRule>),
    WithNegationOf(SubRule),
    WithClosure(SubRule),
    WithInterproceduralMatch { subrule: SubRule, scope: Scope },
    WithInterproceduralDataDependenciesTransform(Scope),
    WithInterproceduralDataDependentsTransform(Scope),

    // Declared catalog entries without an implementation; evaluating them
    // reports NotImplemented rather than silently passing.
    WithCatchClauseFilter(Pattern),
    WithCaughtExceptionFilter(Pattern),
    WithMethodCallGroupFilter(Pattern),
    WithTaintFlowFromTransform,
    WithTaintFlowToTransform,
    WithLanguageSpecific,
    WithThenTransform,
    WithAdditional(SubRule),
    WithIndependent(SubRule),
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::As(_) => "as",
            Operation::Reset => "reset",
            Operation::WithId(_) => "withId",
            Operation::WithInstrumentation(_) => "withInstrumentation",
            Operation::WithAuxiliaryState(_) => "withAuxiliaryState",
            Operation::WithActionFilter(_) => "withActionFilter",
            Operation::WithMethodCallFilter(_) => "withMethodCallFilter",
            Operation::WithConstantDataFilter(_) => "withConstantDataFilter",
            Operation::WithConstantArgumentFilter(_) => "withConstantArgumentFilter",
            Operation::WithDirectDataFromIdFilter(_) => "withDirectDataFromIdFilter",
            Operation::WithDataByNameFilter(_) => "withDataByNameFilter",
            Operation::WithDataByTypeFilter(_) => "withDataByTypeFilter",
            Operation::WithReceiverByTypeFilter(_) => "withReceiverByTypeFilter",
            Operation::WithReceiverByIdFilter(_) => "withReceiverByIdFilter",
            Operation::WithNumberOfArgumentsFilter(_) => "withNumberOfArgumentsFilter",
            Operation::WithOutputIgnoredFilter => "withOutputIgnoredFilter",
            Operation::WithContextFilter(_) => "withContextFilter",
            Operation::WithDownstreamConditionalCheckFilter => {
                "withDownstreamConditionalCheckFilter"
            }
            Operation::WithReturnValueFilter => "withReturnValueFilter",
            Operation::WithDefinitionTransform => "withDefinitionTransform",
            Operation::WithDefinedTransform => "withDefinedTransform",
            Operation::WithReceiverTransform => "withReceiverTransform",
            Operation::WithArgumentsTransform => "withArgumentsTransform",
            Operation::WithParameterTransform => "withParameterTransform",
            Operation::WithDataDependenciesTransform => "withDataDependenciesTransform",
            Operation::WithDataDependentsTransform => "withDataDependentsTransform",
            Operation::WithControlDependenciesTransform => "withControlDependenciesTransform",
            Operation::WithUsersTransform => "withUsersTransform",
            Operation::WithNodeTransform(name, _) => name,
            Operation::WithOneOf(_) => "withOneOf",
            Operation::WithAllOf(_) => "withAllOf",
            Operation::WithAnyOf(_) => "withAnyOf",
            Operation::WithNegationOf(_) => "withNegationOf",
            Operation::WithClosure(_) => "withClosure",
            Operation::WithInterproceduralMatch { .. } => "withInterproceduralMatch",
            Operation::WithInterproceduralDataDependenciesTransform(_) => {
                "withInterproceduralDataDependenciesTransform"
            }
            Operation::WithInterproceduralDataDependentsTransform(_) => {
                "withInterproceduralDataDependentsTransform"
            }
            Operation::WithCatchClauseFilter(_) => "withCatchClauseFilter",
            Operation::WithCaughtExceptionFilter(_) => "withCaughtExceptionFilter",
            Operation::WithMethodCallGroupFilter(_) => "withMethodCallGroupFilter",
            Operation::WithTaintFlowFromTransform => "withTaintFlowFromTransform",
            Operation::WithTaintFlowToTransform => "withTaintFlowToTransform",
            Operation::WithLanguageSpecific => "withLanguageSpecific",
            Operation::WithThenTransform => "withThenTransform",
            Operation::WithAdditional(_) => "withAdditional",
            Operation::WithIndependent(_) => "withIndependent",
        }
    }

    /// Filters accept any node at runtime (their predicates simply fail on
    /// other kinds) but declare what they yield; transforms state strict
    /// input requirements so improper compositions are caught and localized.
    pub fn signature(&self) -> Signature {
        use CategorySet as C;
        match self {
            Operation::As(_)
            | Operation::Reset
            | Operation::WithId(_)
            | Operation::WithInstrumentation(_)
            | Operation::WithAuxiliaryState(_) => Signature::new(C::ANY, C::ANY),

            Operation::WithActionFilter(_)
            | Operation::WithMethodCallFilter(_)
            | Operation::WithConstantArgumentFilter(_)
            | Operation::WithReceiverByTypeFilter(_)
            | Operation::WithReceiverByIdFilter(_)
            | Operation::WithNumberOfArgumentsFilter(_)
            | Operation::WithOutputIgnoredFilter => Signature::new(C::ANY, C::ACTION),

            Operation::WithConstantDataFilter(_)
            | Operation::WithDataByNameFilter(_)
            | Operation::WithDataByTypeFilter(_)
            | Operation::WithReturnValueFilter
            | Operation::WithDownstreamConditionalCheckFilter => Signature::new(C::ANY, C::DATA),

            Operation::WithDirectDataFromIdFilter(_) | Operation::WithContextFilter(_) => {
                Signature::new(C::ANY, C::ANY)
            }

            Operation::WithDefinitionTransform => Signature::new(C::ACTION, C::DATA),
            Operation::WithDefinedTransform => Signature::new(C::DATA, C::ACTION),
            Operation::WithReceiverTransform => Signature::new(C::ACTION, C::DATA),
            Operation::WithArgumentsTransform => {
                Signature::new(C::ACTION.union(C::CONTROL), C::DATA)
            }
            Operation::WithParameterTransform => Signature::new(C::ANY, C::DATA),
            Operation::WithDataDependenciesTransform | Operation::WithDataDependentsTransform => {
                Signature::new(C::ANY, C::DATA)
            }
            Operation::WithControlDependenciesTransform => Signature::new(C::ANY, C::CONTROL),
            Operation::WithUsersTransform => Signature::new(C::DATA, C::ACTION.union(C::CONTROL)),
            Operation::WithNodeTransform(_, _) => Signature::new(C::ANY, C::ANY),

            Operation::WithOneOf(_)
            | Operation::WithAllOf(_)
            | Operation::WithAnyOf(_)
            | Operation::WithNegationOf(_)
            | Operation::WithClosure(_)
            | Operation::WithInterproceduralMatch { .. } => Signature::new(C::ANY, C::ANY),
            Operation::WithInterproceduralDataDependenciesTransform(_)
            | Operation::WithInterproceduralDataDependentsTransform(_) => {
                Signature::new(C::ANY, C::DATA)
            }

            Operation::WithCatchClauseFilter(_)
            | Operation::WithCaughtExceptionFilter(_)
            | Operation::WithMethodCallGroupFilter(_)
            | Operation::WithTaintFlowFromTransform
            | Operation::WithTaintFlowToTransform
            | Operation::WithLanguageSpecific
            | Operation::WithThenTransform
            | Operation::WithAdditional(_)
            | Operation::WithIndependent(_) => Signature::new(C::ANY, C::ANY),
        }
    }

    pub fn is_implemented(&self) -> bool {
        !matches!(
            self,
            Operation::WithCatchClauseFilter(_)
                | Operation::WithCaughtExceptionFilter(_)
                | Operation::WithMethodCallGroupFilter(_)
                | Operation::WithTaintFlowFromTransform
                | Operation::WithTaintFlowToTransform
                | Operation::WithLanguageSpecific
                | Operation::WithThenTransform
                | Operation::WithAdditional(_)
                | Operation::WithIndependent(_)
        )
    }

    /// Invalid regex inside the operation, if any.
    pub fn invalid_pattern(&self) -> Option<&Pattern> {
        let p = match self {
            Operation::WithActionFilter(p)
            | Operation::WithMethodCallFilter(p)
            | Operation::WithConstantDataFilter(p)
            | Operation::WithConstantArgumentFilter(p)
            | Operation::WithDataByNameFilter(p)
            | Operation::WithDataByTypeFilter(p)
            | Operation::WithReceiverByTypeFilter(p)
            | Operation::WithContextFilter(p)
            | Operation::WithCatchClauseFilter(p)
            | Operation::WithCaughtExceptionFilter(p)
            | Operation::WithMethodCallGroupFilter(p) => p,
            _ => return None,
        };
        (!p.is_valid()).then_some(p)
    }

    pub fn subrules(&self) -> &[SubRule] {
        match self {
            Operation::WithOneOf(subs)
            | Operation::WithAllOf(subs)
            | Operation::WithAnyOf(subs) => subs,
            Operation::WithNegationOf(sub)
            | Operation::WithClosure(sub)
            | Operation::WithAdditional(sub)
            | Operation::WithIndependent(sub) => std::slice::from_ref(sub),
            Operation::WithInterproceduralMatch { subrule, .. } => std::slice::from_ref(subrule),
            _ => &[],
        }
    }
}

impl fmt::Debug for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::As(id)
            | Operation::WithId(id)
            | Operation::WithDirectDataFromIdFilter(id)
            | Operation::WithReceiverByIdFilter(id) => {
                write!(f, "{}({id})", self.name())
            }
            Operation::WithActionFilter(p)
            | Operation::WithMethodCallFilter(p)
            | Operation::WithConstantDataFilter(p)
            | Operation::WithConstantArgumentFilter(p)
            | Operation::WithDataByNameFilter(p)
            | Operation::WithDataByTypeFilter(p)
            | Operation::WithReceiverByTypeFilter(p)
            | Operation::WithContextFilter(p) => write!(f, "{}({})", self.name(), p.raw),
            Operation::WithNumberOfArgumentsFilter(n) => write!(f, "{}({n})", self.name()),
            other => write!(f, "{}", other.name()),
        }
    }
}

/// True when `graph`'s shape matches anchored function-matcher criteria.
pub fn function_matches(
    graph: &MuGraph,
    name: &Option<Pattern>,
    class: &Option<Pattern>,
    param_count: Option<usize>,
) -> bool {
    if let Some(p) = name {
        if !p.matches(&graph.simple_name) {
            return false;
        }
    }
    if let Some(p) = class {
        match &graph.class_name {
            Some(c) => {
                if !p.matches(c) {
                    return false;
                }
            }
            None => return false,
        }
    }
    if let Some(n) = param_count {
        if graph.params.len() != n {
            return false;
        }
    }
    true
}
