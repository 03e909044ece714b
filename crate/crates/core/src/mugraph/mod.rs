//! The MU graph: a per-function data-dependence graph overlaid on a
//! control-flow graph.
//!
//! Nodes split into entry/exit, control, action and data nodes. Control
//! edges order execution among non-data nodes; data edges (condition,
//! definition, parameter, receiver, callee) always have a data node as
//! exactly one endpoint, so data and non-data nodes strictly alternate
//! along data paths. Variables are versioned as in SSA form, with phi
//! actions merging converging definitions.
//!
//! Graphs are immutable once built and safe to share across threads.

mod build;
mod dot;
mod program;
mod validate;

pub use build::{build_graph, BuildInput, GraphSource};
pub use dot::to_dot;
pub use program::{build_program, CallerCache, CallerMap, FileEntry, ParsedModule, ProgramIndex};
pub use validate::{validate, Violation};

use std::collections::BTreeMap;
use std::fmt;

use crate::frontend::Span;

/// Graph-local node ordinal, assigned in deterministic preorder.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControlKind {
    If,
    While,
    For,
    Try,
    With,
    Except,
}

impl ControlKind {
    pub fn label(self) -> &'static str {
        match self {
            ControlKind::If => "if",
            ControlKind::While => "while",
            ControlKind::For => "for",
            ControlKind::Try => "try",
            ControlKind::With => "with",
            ControlKind::Except => "except",
        }
    }

    pub fn is_loop(self) -> bool {
        matches!(self, ControlKind::While | ControlKind::For)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Call,
    /// Binary operation; carries the operator symbol (`+`, `-`, `and`, ...).
    BinOp(String),
    UnaryOp(String),
    Compare(String),
    SubscriptRead,
    SubscriptWrite,
    AttributeRead,
    AttributeWrite,
    Phi,
    Return,
    Raise,
    Import,
    /// Value copy or literal/display materialization.
    ConstLoad,
    Pass,
}

impl ActionKind {
    /// Text an action filter matches against.
    pub fn action_text(&self) -> &str {
        match self {
            ActionKind::Call => "call",
            ActionKind::BinOp(op) | ActionKind::UnaryOp(op) | ActionKind::Compare(op) => op,
            ActionKind::SubscriptRead => "subscript-read",
            ActionKind::SubscriptWrite => "subscript-write",
            ActionKind::AttributeRead => "attribute-read",
            ActionKind::AttributeWrite => "attribute-write",
            ActionKind::Phi => "phi",
            ActionKind::Return => "return",
            ActionKind::Raise => "raise",
            ActionKind::Import => "import",
            ActionKind::ConstLoad => "const-load",
            ActionKind::Pass => "pass",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Entry,
    Exit,
    Control(ControlKind),
    Action(ActionKind),
    Data {
        /// Variable name, constant token text, or `$tN` for temporaries.
        name: Option<String>,
        is_temp: bool,
    },
}

impl NodeKind {
    pub fn is_data(&self) -> bool {
        matches!(self, NodeKind::Data { .. })
    }

    pub fn is_action(&self) -> bool {
        matches!(self, NodeKind::Action(_))
    }

    pub fn is_control(&self) -> bool {
        matches!(self, NodeKind::Control(_))
    }

    pub fn is_call(&self) -> bool {
        matches!(self, NodeKind::Action(ActionKind::Call))
    }
}

/// Well-known metadata keys. Metadata is a plain string map so graphs stay
/// serializable and language-agnostic.
pub mod meta {
    /// Simple callee name of a call action (`scan` for `db.scan(...)`).
    pub const CALLEE_NAME: &str = "callee_name";
    /// Dotted callee path when the callee is a pure name/attribute chain.
    pub const CALLEE_PATH: &str = "callee_path";
    /// Attribute name on attribute-read/write actions.
    pub const ATTR: &str = "attr";
    /// Source token text of a constant data node.
    pub const CONST: &str = "const";
    /// Cooked string value of a string constant.
    pub const CONST_STR: &str = "const_str";
    /// Constant kind: int, float, str, fstr, bool, none, ellipsis, display kind.
    pub const CONST_KIND: &str = "const_kind";
    /// SSA version of a named data node.
    pub const VERSION: &str = "version";
    /// Marks a data node for a name never assigned in the function.
    pub const FREE: &str = "free";
    /// Comma-separated keyword-argument names of a call, aligned with the
    /// parameter positions following the positional arguments.
    pub const KW_NAMES: &str = "kw_names";
    /// Parameter position of a `**kwargs` argument at a call site.
    pub const KWARGS_POS: &str = "kwargs_pos";
    /// Comma-separated ids of enclosing control nodes, innermost last.
    pub const CTL: &str = "ctl";
    /// Construct tag for synthetic and fallback nodes (unknown, assert,
    /// display kinds, lambda, for-target, except-binding).
    pub const CONSTRUCT: &str = "construct";
    /// Module path on import actions.
    pub const MODULE: &str = "module";
    /// Marks the parameter data node for `*args`/`**kwargs` of a function.
    pub const PARAM_KIND: &str = "param_kind";
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Source span; absent for synthetic nodes (entry, exit, phi, joins).
    pub span: Option<Span>,
    /// Flattened type annotation, present on data nodes once inference ran.
    pub type_string: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl MuNode {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(|s| s.as_str())
    }

    pub fn is_const(&self) -> bool {
        self.metadata.contains_key(meta::CONST)
    }

    /// Name a data-by-name filter matches against.
    pub fn data_name(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Data { name, .. } => name.as_deref(),
            _ => None,
        }
    }

    /// Text an action filter matches against: operator symbol for operator
    /// actions, callee name for calls, kind label otherwise.
    pub fn action_text(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Action(ActionKind::Call) => self.meta(meta::CALLEE_NAME).or(Some("call")),
            NodeKind::Action(kind) => Some(kind.action_text()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchLabel {
    True,
    False,
    Body,
    Else,
    Handler,
}

impl BranchLabel {
    pub fn label(self) -> &'static str {
        match self {
            BranchLabel::True => "true",
            BranchLabel::False => "false",
            BranchLabel::Body => "body",
            BranchLabel::Else => "else",
            BranchLabel::Handler => "handler",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Control(Option<BranchLabel>),
    /// Data node -> control node whose branch it decides.
    Condition,
    /// Action -> data node it defines.
    Definition,
    /// Data node -> argument position of an action.
    Parameter(u32),
    /// Data node -> receiver position of an action.
    Receiver,
    /// Data node -> callee position of a call action.
    Callee,
}

impl EdgeKind {
    pub fn is_control(self) -> bool {
        matches!(self, EdgeKind::Control(_))
    }

    pub fn is_data(self) -> bool {
        !self.is_control()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

/// Per-function graph. `params` lists the parameter data nodes in order;
/// `returns` collects the data nodes flowing into return actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MuGraph {
    pub function_name: String,
    pub file: String,
    pub simple_name: String,
    pub class_name: Option<String>,
    pub nodes: Vec<MuNode>,
    pub edges: Vec<MuEdge>,
    pub params: Vec<NodeId>,
    pub returns: std::collections::BTreeSet<NodeId>,
    /// Parameter names aligned with `params`.
    pub param_names: Vec<String>,
    /// Annotation text per parameter, aligned with `params`.
    pub param_annotations: Vec<Option<String>>,
    /// Whether each parameter has a default value, aligned with `params`.
    pub param_defaults: Vec<bool>,
    // Adjacency caches, rebuilt by `seal`.
    out_edges: Vec<Vec<u32>>,
    in_edges: Vec<Vec<u32>>,
}

impl MuGraph {
    pub(crate) fn new(
        function_name: String,
        file: String,
        simple_name: String,
        class_name: Option<String>,
    ) -> Self {
        MuGraph {
            function_name,
            file,
            simple_name,
            class_name,
            nodes: Vec::new(),
            edges: Vec::new(),
            params: Vec::new(),
            returns: std::collections::BTreeSet::new(),
            param_names: Vec::new(),
            param_annotations: Vec::new(),
            param_defaults: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> &MuNode {
        &self.nodes[id.index()]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn entry(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Entry))
            .map(|n| n.id)
            .expect("graph has an entry node")
    }

    pub fn exit(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Exit))
            .map(|n| n.id)
            .expect("graph has an exit node")
    }

    /// Build adjacency caches. Called once after construction.
    pub(crate) fn seal(&mut self) {
        self.out_edges = vec![Vec::new(); self.nodes.len()];
        self.in_edges = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            self.out_edges[e.src.index()].push(i as u32);
            self.in_edges[e.dst.index()].push(i as u32);
        }
    }

    pub fn edges_out(&self, id: NodeId) -> impl Iterator<Item = &MuEdge> + '_ {
        self.out_edges[id.index()]
            .iter()
            .map(move |&i| &self.edges[i as usize])
    }

    pub fn edges_in(&self, id: NodeId) -> impl Iterator<Item = &MuEdge> + '_ {
        self.in_edges[id.index()]
            .iter()
            .map(move |&i| &self.edges[i as usize])
    }

    /// Data node defined by an action, if any.
    pub fn defined_node(&self, action: NodeId) -> Option<NodeId> {
        self.edges_out(action)
            .find(|e| e.kind == EdgeKind::Definition)
            .map(|e| e.dst)
    }

    /// Action defining a data node, if any.
    pub fn defining_action(&self, data: NodeId) -> Option<NodeId> {
        self.edges_in(data)
            .find(|e| e.kind == EdgeKind::Definition)
            .map(|e| e.src)
    }

    pub fn receiver_of(&self, action: NodeId) -> Option<NodeId> {
        self.edges_in(action)
            .find(|e| e.kind == EdgeKind::Receiver)
            .map(|e| e.src)
    }

    /// Parameter-edge sources of an action, ordered by position.
    pub fn arguments_of(&self, action: NodeId) -> Vec<NodeId> {
        let mut args: Vec<(u32, NodeId)> = self
            .edges_in(action)
            .filter_map(|e| match e.kind {
                EdgeKind::Parameter(pos) => Some((pos, e.src)),
                _ => None,
            })
            .collect();
        args.sort_by_key(|(pos, _)| *pos);
        args.into_iter().map(|(_, src)| src).collect()
    }

    /// Enclosing control nodes of a node, innermost last.
    pub fn control_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.node(id)
            .meta(meta::CTL)
            .map(|s| {
                s.split(',')
                    .filter(|p| !p.is_empty())
                    .filter_map(|p| p.parse::<u32>().ok().map(NodeId))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Call actions in deterministic id order.
    pub fn call_actions(&self) -> impl Iterator<Item = &MuNode> + '_ {
        self.nodes.iter().filter(|n| n.kind.is_call())
    }

    /// Qualified identity of the enclosing class (`<file>::<scope>`),
    /// distinguishing same-named classes in different files or scopes.
    pub fn class_key(&self) -> Option<String> {
        self.class_name.as_ref()?;
        self.function_name.rsplit_once('.').map(|(prefix, _)| prefix.to_string())
    }
}
