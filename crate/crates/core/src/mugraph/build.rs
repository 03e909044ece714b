//! Per-function MU-graph construction.
//!
//! Construction is total: unknown constructs lower to empty-statement
//! actions, dead code after a terminator stays chained on the control path,
//! and inconsistencies are the business of the validation pass, never a
//! build failure.
//!
//! SSA discipline: every assignment mints a fresh version of the variable's
//! data node; converging branches insert phi actions; loop headers insert
//! phi actions for variables assigned in the body, patched with the
//! back-edge version after the body is built.

use std::collections::{BTreeMap, HashSet};

use crate::frontend::ast::*;

use super::{
    meta, ActionKind, BranchLabel, ControlKind, EdgeKind, MuEdge, MuGraph, MuNode, NodeId, NodeKind,
};

/// What to build a graph from.
pub enum GraphSource<'a> {
    /// A `def` statement (must be `Stmt::FunctionDef`).
    Function(&'a Stmt),
    /// A lambda expression (must be `Expr::Lambda`).
    Lambda(&'a Expr),
    /// Top-level statements of a file, as a synthetic script function.
    /// Nested function and class definitions are skipped; they get graphs
    /// of their own.
    Module(&'a Module),
}

pub struct BuildInput<'a> {
    pub source: GraphSource<'a>,
    pub function_name: String,
    pub file: String,
    pub simple_name: String,
    pub class_name: Option<String>,
}

pub fn build_graph(input: BuildInput<'_>) -> MuGraph {
    let mut b = Builder::new(
        input.function_name,
        input.file,
        input.simple_name,
        input.class_name,
    );
    match input.source {
        GraphSource::Function(stmt) => match stmt {
            Stmt::FunctionDef { params, body, .. } => {
                b.add_params(params);
                b.build_body(body);
            }
            other => {
                b.unknown_action(other.span());
            }
        },
        GraphSource::Lambda(expr) => match expr {
            Expr::Lambda { params, body, .. } => {
                b.add_params(params);
                let value = b.eval(body);
                b.emit_return(Some(value), body.span());
            }
            other => {
                b.unknown_action(other.span());
            }
        },
        GraphSource::Module(module) => {
            b.build_body(&module.body);
        }
    }
    b.finish()
}

type Env = BTreeMap<String, NodeId>;

struct Builder {
    graph: MuGraph,
    /// Control-path frontier; multiple entries at unjoined branch ends.
    cursor: Vec<NodeId>,
    pending_label: Option<BranchLabel>,
    env: Env,
    versions: BTreeMap<String, u32>,
    temp_count: u32,
    ctl_stack: Vec<NodeId>,
    /// Handler control nodes of enclosing try statements, outermost first.
    handler_stack: Vec<Vec<NodeId>>,
    loop_stack: Vec<NodeId>,
    control_edge_seen: HashSet<(NodeId, NodeId)>,
    /// Return/raise actions awaiting a control edge to the exit node.
    exit_pending: Vec<NodeId>,
}

impl Builder {
    fn new(
        function_name: String,
        file: String,
        simple_name: String,
        class_name: Option<String>,
    ) -> Self {
        let mut graph = MuGraph::new(function_name, file, simple_name, class_name);
        let entry = NodeId(0);
        graph.nodes.push(MuNode {
            id: entry,
            kind: NodeKind::Entry,
            span: None,
            type_string: None,
            metadata: BTreeMap::new(),
        });
        Builder {
            graph,
            cursor: vec![entry],
            pending_label: None,
            env: Env::new(),
            versions: BTreeMap::new(),
            temp_count: 0,
            ctl_stack: Vec::new(),
            handler_stack: Vec::new(),
            loop_stack: Vec::new(),
            control_edge_seen: HashSet::new(),
            exit_pending: Vec::new(),
        }
    }

    fn finish(mut self) -> MuGraph {
        self.ctl_stack.clear();
        let exit = self.fresh_node(NodeKind::Exit, None, BTreeMap::new());
        for src in std::mem::take(&mut self.cursor) {
            self.control_edge(src, exit, None);
        }
        for src in std::mem::take(&mut self.exit_pending) {
            self.control_edge(src, exit, None);
        }
        let mut graph = self.graph;
        graph.seal();
        graph
    }

    // -- node and edge primitives ---------------------------------------

    fn fresh_node(
        &mut self,
        kind: NodeKind,
        span: Option<crate::frontend::Span>,
        mut metadata: BTreeMap<String, String>,
    ) -> NodeId {
        let id = NodeId(self.graph.nodes.len() as u32);
        if !self.ctl_stack.is_empty() {
            let ctl = self
                .ctl_stack
                .iter()
                .map(|n| n.0.to_string())
                .collect::<Vec<_>>()
                .join(",");
            metadata.insert(meta::CTL.to_string(), ctl);
        }
        self.graph.nodes.push(MuNode {
            id,
            kind,
            span,
            type_string: None,
            metadata,
        });
        id
    }

    fn control_edge(&mut self, src: NodeId, dst: NodeId, label: Option<BranchLabel>) {
        if self.control_edge_seen.insert((src, dst)) {
            self.graph.edges.push(MuEdge {
                src,
                dst,
                kind: EdgeKind::Control(label),
            });
        }
    }

    fn data_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        self.graph.edges.push(MuEdge { src, dst, kind });
    }

    /// Append an action to the control path and advance the cursor.
    fn add_action(
        &mut self,
        kind: ActionKind,
        span: Option<crate::frontend::Span>,
        metadata: BTreeMap<String, String>,
    ) -> NodeId {
        let is_call = matches!(kind, ActionKind::Call);
        let id = self.fresh_node(NodeKind::Action(kind), span, metadata);
        let label = self.pending_label.take();
        for src in std::mem::take(&mut self.cursor) {
            self.control_edge(src, id, label);
        }
        self.cursor = vec![id];
        if is_call {
            self.link_to_handlers(id);
        }
        id
    }

    /// Exception-flow over-approximation: calls are the modeled throwers.
    fn link_to_handlers(&mut self, action: NodeId) {
        let handlers: Vec<NodeId> = self.handler_stack.iter().flatten().copied().collect();
        for h in handlers {
            self.control_edge(action, h, Some(BranchLabel::Handler));
        }
    }

    /// Append a control node to the control path.
    fn add_control(
        &mut self,
        kind: ControlKind,
        span: Option<crate::frontend::Span>,
        metadata: BTreeMap<String, String>,
    ) -> NodeId {
        let id = self.fresh_node(NodeKind::Control(kind), span, metadata);
        let label = self.pending_label.take();
        for src in std::mem::take(&mut self.cursor) {
            self.control_edge(src, id, label);
        }
        self.cursor = vec![id];
        id
    }

    fn add_data(
        &mut self,
        name: Option<String>,
        is_temp: bool,
        span: Option<crate::frontend::Span>,
        metadata: BTreeMap<String, String>,
    ) -> NodeId {
        self.fresh_node(NodeKind::Data { name, is_temp }, span, metadata)
    }

    fn temp(&mut self, span: Option<crate::frontend::Span>) -> NodeId {
        let name = format!("$t{}", self.temp_count);
        self.temp_count += 1;
        self.add_data(Some(name), true, span, BTreeMap::new())
    }

    fn read_var(&mut self, name: &str, span: crate::frontend::Span) -> NodeId {
        if let Some(&id) = self.env.get(name) {
            return id;
        }
        // A name never assigned in this function: parameter-less free
        // variable (global, import from another scope, builtin).
        let mut md = BTreeMap::new();
        md.insert(meta::FREE.to_string(), "true".to_string());
        md.insert(meta::VERSION.to_string(), "0".to_string());
        let id = self.add_data(Some(name.to_string()), false, Some(span), md);
        self.env.insert(name.to_string(), id);
        id
    }

    fn write_var(&mut self, name: &str, span: Option<crate::frontend::Span>) -> NodeId {
        let version = self.versions.entry(name.to_string()).or_insert(0);
        *version += 1;
        let mut md = BTreeMap::new();
        md.insert(meta::VERSION.to_string(), version.to_string());
        let id = self.add_data(Some(name.to_string()), false, span, md);
        self.env.insert(name.to_string(), id);
        id
    }

    fn add_params(&mut self, params: &[Param]) {
        for p in params {
            let id = self.write_var(&p.name, Some(p.span));
            match p.kind {
                ParamKind::VarArgs => {
                    self.graph.nodes[id.index()]
                        .metadata
                        .insert(meta::PARAM_KIND.to_string(), "varargs".to_string());
                }
                ParamKind::KwArgs => {
                    self.graph.nodes[id.index()]
                        .metadata
                        .insert(meta::PARAM_KIND.to_string(), "kwargs".to_string());
                }
                ParamKind::Plain => {}
            }
            self.graph.params.push(id);
            self.graph.param_names.push(p.name.clone());
            self.graph.param_annotations.push(p.annotation.clone());
            self.graph.param_defaults.push(p.default.is_some());
        }
    }

    // -- statements ------------------------------------------------------

    fn build_body(&mut self, body: &[Stmt]) {
        for stmt in body {
            self.build_stmt(stmt);
        }
    }

    fn build_stmt(&mut self, stmt: &Stmt) {
        match stmt {
            // Nested definitions get graphs of their own; the defining
            // statement contributes nothing to this graph.
            Stmt::FunctionDef { .. } | Stmt::ClassDef { .. } => {}
            Stmt::Assign {
                targets,
                value,
                annotation,
                span,
            } => {
                self.build_assign(targets, value, annotation.as_deref(), *span);
            }
            Stmt::AugAssign {
                target,
                op,
                value,
                span,
            } => {
                self.build_aug_assign(target, *op, value, *span);
            }
            Stmt::Return { value, span } => {
                let v = value.as_ref().map(|e| self.eval(e));
                self.emit_return(v, *span);
            }
            Stmt::If {
                test,
                body,
                orelse,
                span,
            } => self.build_if(test, body, orelse, *span),
            Stmt::While {
                test,
                body,
                orelse,
                span,
            } => self.build_loop(
                ControlKind::While,
                Some(test),
                None,
                None,
                body,
                orelse,
                *span,
            ),
            Stmt::For {
                target,
                iter,
                body,
                orelse,
                span,
            } => self.build_loop(
                ControlKind::For,
                None,
                Some(target),
                Some(iter),
                body,
                orelse,
                *span,
            ),
            Stmt::Try {
                body,
                handlers,
                orelse,
                finalbody,
                span,
            } => self.build_try(body, handlers, orelse, finalbody, *span),
            Stmt::Raise { exc, cause, span } => {
                let v = exc.as_ref().map(|e| self.eval(e));
                if let Some(c) = cause {
                    let _ = self.eval(c);
                }
                let action = self.add_action(ActionKind::Raise, Some(*span), BTreeMap::new());
                if let Some(v) = v {
                    self.data_edge(v, action, EdgeKind::Parameter(0));
                }
                // Raise leaves the function unless an enclosing handler
                // catches it; both paths are recorded.
                self.link_to_handlers(action);
                self.exit_pending.push(action);
            }
            Stmt::Assert { test, msg, span } => {
                let v = self.eval(test);
                if let Some(m) = msg {
                    let _ = self.eval(m);
                }
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "assert".to_string());
                let ctl = self.add_control(ControlKind::If, Some(*span), md);
                self.data_edge(v, ctl, EdgeKind::Condition);
            }
            Stmt::Import { names, span } => {
                for alias in names {
                    let mut md = BTreeMap::new();
                    md.insert(meta::MODULE.to_string(), alias.name.clone());
                    let action = self.add_action(ActionKind::Import, Some(*span), md);
                    let bound = self.write_var(alias.bound_name(), Some(alias.span));
                    self.data_edge(action, bound, EdgeKind::Definition);
                }
            }
            Stmt::ImportFrom {
                module,
                names,
                span,
                ..
            } => {
                for alias in names {
                    if alias.name == "*" {
                        continue;
                    }
                    let mut md = BTreeMap::new();
                    let full = match module {
                        Some(m) => format!("{m}.{}", alias.name),
                        None => alias.name.clone(),
                    };
                    md.insert(meta::MODULE.to_string(), full);
                    let action = self.add_action(ActionKind::Import, Some(*span), md);
                    let bound = self.write_var(alias.bound_name(), Some(alias.span));
                    self.data_edge(action, bound, EdgeKind::Definition);
                }
            }
            Stmt::ExprStmt { value, .. } => {
                let _ = self.eval_no_define(value);
            }
            Stmt::With { items, body, span } => {
                let contexts: Vec<(NodeId, Option<&Expr>)> = items
                    .iter()
                    .map(|item| (self.eval(&item.context), item.target.as_ref()))
                    .collect();
                let ctl = self.add_control(ControlKind::With, Some(*span), BTreeMap::new());
                self.ctl_stack.push(ctl);
                for (ctx, target) in contexts {
                    if let Some(target) = target {
                        self.assign_value_to_target(target, ctx);
                    }
                }
                self.build_body(body);
                self.ctl_stack.pop();
            }
            Stmt::Pass { span } => {
                self.add_action(ActionKind::Pass, Some(*span), BTreeMap::new());
            }
            Stmt::Break { span } => {
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "break".to_string());
                let action = self.add_action(ActionKind::Pass, Some(*span), md);
                if let Some(&loop_ctl) = self.loop_stack.last() {
                    self.control_edge(action, loop_ctl, None);
                }
            }
            Stmt::Continue { span } => {
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "continue".to_string());
                let action = self.add_action(ActionKind::Pass, Some(*span), md);
                if let Some(&loop_ctl) = self.loop_stack.last() {
                    self.control_edge(action, loop_ctl, None);
                }
            }
            Stmt::Unknown { span, .. } => {
                self.unknown_action(*span);
            }
        }
    }

    fn unknown_action(&mut self, span: crate::frontend::Span) -> NodeId {
        let mut md = BTreeMap::new();
        md.insert(meta::CONSTRUCT.to_string(), "unknown".to_string());
        self.add_action(ActionKind::Pass, Some(span), md)
    }

    /// Terminators keep the cursor, so any dead code that follows stays
    /// chained on the control path; the edge to exit is wired in `finish`.
    fn emit_return(&mut self, value: Option<NodeId>, span: crate::frontend::Span) {
        let action = self.add_action(ActionKind::Return, Some(span), BTreeMap::new());
        if let Some(v) = value {
            self.data_edge(v, action, EdgeKind::Parameter(0));
            self.graph.returns.insert(v);
        }
        self.exit_pending.push(action);
    }

    fn build_assign(
        &mut self,
        targets: &[Expr],
        value: &Expr,
        annotation: Option<&str>,
        _span: crate::frontend::Span,
    ) {
        if targets.len() == 1 {
            if let Expr::Name { id, span } = &targets[0] {
                let defined = self.eval_into_name(value, id, *span);
                if let Some(ann) = annotation {
                    self.graph.nodes[defined.index()]
                        .metadata
                        .insert("annotation".to_string(), ann.to_string());
                }
                return;
            }
        }
        // General case: evaluate once, copy into each target.
        let v = self.eval(value);
        for target in targets {
            self.assign_value_to_target(target, v);
        }
    }

    fn assign_value_to_target(&mut self, target: &Expr, value: NodeId) {
        match target {
            Expr::Name { id, span } => {
                let action = self.add_action(ActionKind::ConstLoad, Some(*span), BTreeMap::new());
                self.data_edge(value, action, EdgeKind::Parameter(0));
                let dst = self.write_var(id, Some(*span));
                self.data_edge(action, dst, EdgeKind::Definition);
            }
            Expr::Attribute {
                value: obj,
                attr,
                span,
            } => {
                let recv = self.eval(obj);
                let mut md = BTreeMap::new();
                md.insert(meta::ATTR.to_string(), attr.clone());
                let action = self.add_action(ActionKind::AttributeWrite, Some(*span), md);
                self.data_edge(recv, action, EdgeKind::Receiver);
                self.data_edge(value, action, EdgeKind::Parameter(0));
            }
            Expr::Subscript {
                value: obj,
                index,
                span,
            } => {
                let recv = self.eval(obj);
                let idx = self.eval(index);
                let action =
                    self.add_action(ActionKind::SubscriptWrite, Some(*span), BTreeMap::new());
                self.data_edge(recv, action, EdgeKind::Receiver);
                self.data_edge(idx, action, EdgeKind::Parameter(0));
                self.data_edge(value, action, EdgeKind::Parameter(1));
            }
            Expr::Display { elts, .. } => {
                for elt in elts {
                    self.assign_value_to_target(elt, value);
                }
            }
            Expr::Starred { value: inner, .. } => self.assign_value_to_target(inner, value),
            other => {
                self.unknown_action(other.span());
            }
        }
    }

    fn build_aug_assign(
        &mut self,
        target: &Expr,
        op: BinOpKind,
        value: &Expr,
        span: crate::frontend::Span,
    ) {
        let rhs = self.eval(value);
        match target {
            Expr::Name { id, span: t_span } => {
                let old = self.read_var(id, *t_span);
                let action = self.add_action(
                    ActionKind::BinOp(op.symbol().to_string()),
                    Some(span),
                    BTreeMap::new(),
                );
                self.data_edge(old, action, EdgeKind::Parameter(0));
                self.data_edge(rhs, action, EdgeKind::Parameter(1));
                let new = self.write_var(id, Some(*t_span));
                self.data_edge(action, new, EdgeKind::Definition);
            }
            Expr::Attribute { .. } | Expr::Subscript { .. } => {
                let old = self.eval(target);
                let action = self.add_action(
                    ActionKind::BinOp(op.symbol().to_string()),
                    Some(span),
                    BTreeMap::new(),
                );
                self.data_edge(old, action, EdgeKind::Parameter(0));
                self.data_edge(rhs, action, EdgeKind::Parameter(1));
                let tmp = self.temp(Some(span));
                self.data_edge(action, tmp, EdgeKind::Definition);
                self.assign_value_to_target(target, tmp);
            }
            other => {
                self.unknown_action(other.span());
            }
        }
    }

    fn build_if(
        &mut self,
        test: &Expr,
        body: &[Stmt],
        orelse: &[Stmt],
        span: crate::frontend::Span,
    ) {
        let cond = self.eval(test);
        let ctl = self.add_control(ControlKind::If, Some(span), BTreeMap::new());
        self.data_edge(cond, ctl, EdgeKind::Condition);
        let snapshot = self.env.clone();

        self.ctl_stack.push(ctl);
        self.cursor = vec![ctl];
        self.pending_label = Some(BranchLabel::True);
        self.build_body(body);
        let then_ends = std::mem::take(&mut self.cursor);
        let then_env = std::mem::replace(&mut self.env, snapshot.clone());

        self.cursor = vec![ctl];
        self.pending_label = Some(BranchLabel::False);
        if !orelse.is_empty() {
            self.build_body(orelse);
        }
        let else_ends = std::mem::take(&mut self.cursor);
        let else_env = std::mem::replace(&mut self.env, snapshot);
        self.ctl_stack.pop();

        self.join(vec![(then_ends, then_env), (else_ends, else_env)]);
    }

    /// Merge branch environments, inserting phi actions for variables whose
    /// versions diverge. The cursor becomes the merged control frontier.
    fn join(&mut self, paths: Vec<(Vec<NodeId>, Env)>) {
        let mut merged_cursor: Vec<NodeId> = Vec::new();
        for (ends, _) in &paths {
            merged_cursor.extend(ends.iter().copied());
        }
        self.cursor = merged_cursor;

        let mut vars: Vec<String> = Vec::new();
        for (_, env) in &paths {
            for name in env.keys() {
                if !vars.contains(name) {
                    vars.push(name.clone());
                }
            }
        }
        vars.sort();

        for name in vars {
            let mut versions: Vec<NodeId> = Vec::new();
            for (_, env) in &paths {
                if let Some(&v) = env.get(&name) {
                    if !versions.contains(&v) {
                        versions.push(v);
                    }
                }
            }
            match versions.len() {
                0 => {}
                1 => {
                    self.env.insert(name, versions[0]);
                }
                _ => {
                    let mut md = BTreeMap::new();
                    md.insert("var".to_string(), name.clone());
                    let phi = self.add_action(ActionKind::Phi, None, md);
                    for (pos, v) in versions.iter().enumerate() {
                        self.data_edge(*v, phi, EdgeKind::Parameter(pos as u32));
                    }
                    let result = self.write_var(&name, None);
                    self.data_edge(phi, result, EdgeKind::Definition);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_loop(
        &mut self,
        kind: ControlKind,
        test: Option<&Expr>,
        target: Option<&Expr>,
        iter: Option<&Expr>,
        body: &[Stmt],
        orelse: &[Stmt],
        span: crate::frontend::Span,
    ) {
        let iter_value = iter.map(|e| self.eval(e));

        // Phi nodes at the loop header for variables assigned in the body,
        // patched with the back-edge version once the body is built.
        let mut assigned = collect_assigned_names(body);
        if let Some(t) = target {
            collect_target_names(t, &mut assigned);
        }
        let mut header_phis: Vec<(NodeId, NodeId, String)> = Vec::new();
        for name in assigned {
            if let Some(&pre) = self.env.get(&name) {
                let mut md = BTreeMap::new();
                md.insert("var".to_string(), name.clone());
                let phi = self.add_action(ActionKind::Phi, None, md);
                self.data_edge(pre, phi, EdgeKind::Parameter(0));
                let result = self.write_var(&name, None);
                self.data_edge(phi, result, EdgeKind::Definition);
                header_phis.push((phi, result, name));
            }
        }

        let cond = test.map(|e| self.eval(e));
        let ctl = self.add_control(kind, Some(span), BTreeMap::new());
        if let Some(c) = cond {
            self.data_edge(c, ctl, EdgeKind::Condition);
        }
        if let Some(iv) = iter_value {
            self.data_edge(iv, ctl, EdgeKind::Condition);
        }

        self.ctl_stack.push(ctl);
        self.loop_stack.push(ctl);
        self.cursor = vec![ctl];
        self.pending_label = Some(BranchLabel::Body);
        if let (Some(t), Some(iv)) = (target, iter_value) {
            // Element extraction at the top of each iteration.
            let mut md = BTreeMap::new();
            md.insert(meta::CONSTRUCT.to_string(), "for-target".to_string());
            let extract = self.add_action(ActionKind::ConstLoad, Some(t.span()), md);
            self.data_edge(iv, extract, EdgeKind::Parameter(0));
            self.define_target_names(t, extract);
        }
        self.build_body(body);
        let body_ends = std::mem::take(&mut self.cursor);
        for end in body_ends {
            self.control_edge(end, ctl, None);
        }
        self.loop_stack.pop();
        self.ctl_stack.pop();

        // Patch header phis with the version reaching the back edge, and
        // expose the phi result as the post-loop binding.
        for (phi, result, name) in header_phis {
            if let Some(&back) = self.env.get(&name) {
                if back != result {
                    self.data_edge(back, phi, EdgeKind::Parameter(1));
                }
            }
            self.env.insert(name, result);
        }

        self.cursor = vec![ctl];
        self.pending_label = Some(BranchLabel::Else);
        if !orelse.is_empty() {
            self.build_body(orelse);
        }
    }

    /// Bind target names from a defining action (for-targets, unpacking).
    fn define_target_names(&mut self, target: &Expr, action: NodeId) {
        match target {
            Expr::Name { id, span } => {
                let v = self.write_var(id, Some(*span));
                self.data_edge(action, v, EdgeKind::Definition);
            }
            Expr::Display { elts, .. } => {
                for elt in elts {
                    // One extraction action may define several names.
                    self.define_target_names(elt, action);
                }
            }
            Expr::Starred { value, .. } => self.define_target_names(value, action),
            Expr::Attribute { .. } | Expr::Subscript { .. } => {
                let tmp = self.temp(None);
                self.data_edge(action, tmp, EdgeKind::Definition);
                self.assign_value_to_target(target, tmp);
            }
            _ => {}
        }
    }

    fn build_try(
        &mut self,
        body: &[Stmt],
        handlers: &[ExceptHandler],
        orelse: &[Stmt],
        finalbody: &[Stmt],
        span: crate::frontend::Span,
    ) {
        let try_ctl = self.add_control(ControlKind::Try, Some(span), BTreeMap::new());
        let snapshot = self.env.clone();

        // Handler control nodes exist before the body so calls inside the
        // body can take exception edges to them.
        let handler_ctls: Vec<NodeId> = handlers
            .iter()
            .map(|h| {
                let id = self.fresh_node(
                    NodeKind::Control(ControlKind::Except),
                    Some(h.span),
                    BTreeMap::new(),
                );
                self.control_edge(try_ctl, id, Some(BranchLabel::Handler));
                id
            })
            .collect();

        self.ctl_stack.push(try_ctl);
        self.handler_stack.push(handler_ctls.clone());
        self.cursor = vec![try_ctl];
        self.pending_label = Some(BranchLabel::Body);
        self.build_body(body);
        if !orelse.is_empty() {
            self.build_body(orelse);
        }
        self.handler_stack.pop();
        let body_ends = std::mem::take(&mut self.cursor);
        let body_env = std::mem::replace(&mut self.env, snapshot.clone());
        self.ctl_stack.pop();

        let mut paths = vec![(body_ends, body_env)];
        for (handler, hctl) in handlers.iter().zip(&handler_ctls) {
            self.env = snapshot.clone();
            self.cursor = vec![*hctl];
            self.ctl_stack.push(*hctl);
            if let Some(exc) = &handler.exc {
                let exc_value = self.eval(exc);
                if let Some(name) = &handler.name {
                    let mut md = BTreeMap::new();
                    md.insert(meta::CONSTRUCT.to_string(), "except-binding".to_string());
                    let bind = self.add_action(ActionKind::ConstLoad, Some(handler.span), md);
                    self.data_edge(exc_value, bind, EdgeKind::Parameter(0));
                    let bound = self.write_var(name, Some(handler.span));
                    self.data_edge(bind, bound, EdgeKind::Definition);
                }
            }
            self.build_body(&handler.body);
            self.ctl_stack.pop();
            let ends = std::mem::take(&mut self.cursor);
            let env = std::mem::replace(&mut self.env, snapshot.clone());
            paths.push((ends, env));
        }

        self.join(paths);
        if !finalbody.is_empty() {
            self.build_body(finalbody);
        }
    }

    // -- expressions -----------------------------------------------------

    /// Evaluate an expression to the data node holding its value.
    fn eval(&mut self, expr: &Expr) -> NodeId {
        self.eval_inner(expr, Define::Temp)
            .expect("Define::Temp always yields a node")
    }

    /// Evaluate in statement position: top-level calls define no node at all,
    /// which is what the ignored-output check keys on.
    fn eval_no_define(&mut self, expr: &Expr) -> Option<NodeId> {
        self.eval_inner(expr, Define::None)
    }

    /// Evaluate an assignment RHS so its top action defines the target
    /// version directly (no copy for compound expressions).
    fn eval_into_name(
        &mut self,
        expr: &Expr,
        name: &str,
        name_span: crate::frontend::Span,
    ) -> NodeId {
        match expr {
            Expr::Name { .. } | Expr::Constant { .. } => {
                let v = self.eval(expr);
                let action =
                    self.add_action(ActionKind::ConstLoad, Some(name_span), BTreeMap::new());
                self.data_edge(v, action, EdgeKind::Parameter(0));
                let dst = self.write_var(name, Some(name_span));
                self.data_edge(action, dst, EdgeKind::Definition);
                dst
            }
            _ => {
                let action_result =
                    self.eval_inner(expr, Define::Named(name.to_string(), name_span));
                action_result.expect("named define yields a node")
            }
        }
    }

    fn define_result(
        &mut self,
        action: NodeId,
        mode: &Define,
        span: crate::frontend::Span,
    ) -> Option<NodeId> {
        match mode {
            Define::None => None,
            Define::Temp => {
                let t = self.temp(Some(span));
                self.data_edge(action, t, EdgeKind::Definition);
                Some(t)
            }
            Define::Named(name, name_span) => {
                let v = self.write_var(name, Some(*name_span));
                self.data_edge(action, v, EdgeKind::Definition);
                Some(v)
            }
        }
    }

    fn eval_inner(&mut self, expr: &Expr, mode: Define) -> Option<NodeId> {
        match expr {
            Expr::Name { id, span } => {
                let v = self.read_var(id, *span);
                self.finish_value(v, mode, *span)
            }
            Expr::Constant {
                kind,
                text,
                value,
                span,
            } => {
                let mut md = BTreeMap::new();
                md.insert(meta::CONST.to_string(), text.clone());
                md.insert(
                    meta::CONST_KIND.to_string(),
                    match kind {
                        ConstKind::Int => "int",
                        ConstKind::Float => "float",
                        ConstKind::Str => "str",
                        ConstKind::FStr => "fstr",
                        ConstKind::Bool => "bool",
                        ConstKind::NoneLit => "none",
                        ConstKind::Ellipsis => "ellipsis",
                    }
                    .to_string(),
                );
                if matches!(kind, ConstKind::Str | ConstKind::FStr) {
                    md.insert(meta::CONST_STR.to_string(), value.clone());
                }
                let node = self.add_data(Some(text.clone()), false, Some(*span), md);
                self.finish_value(node, mode, *span)
            }
            Expr::Call {
                func,
                args,
                keywords,
                span,
            } => self.eval_call(func, args, keywords, *span, mode),
            Expr::Attribute { value, attr, span } => {
                let recv = self.eval(value);
                let mut md = BTreeMap::new();
                md.insert(meta::ATTR.to_string(), attr.clone());
                let action = self.add_action(ActionKind::AttributeRead, Some(*span), md);
                self.data_edge(recv, action, EdgeKind::Receiver);
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Subscript { value, index, span } => {
                let recv = self.eval(value);
                let idx = self.eval(index);
                let action =
                    self.add_action(ActionKind::SubscriptRead, Some(*span), BTreeMap::new());
                self.data_edge(recv, action, EdgeKind::Receiver);
                self.data_edge(idx, action, EdgeKind::Parameter(0));
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::BinOp {
                left,
                op,
                right,
                span,
            } => {
                let l = self.eval(left);
                let r = self.eval(right);
                let action = self.add_action(
                    ActionKind::BinOp(op.symbol().to_string()),
                    Some(*span),
                    BTreeMap::new(),
                );
                self.data_edge(l, action, EdgeKind::Parameter(0));
                self.data_edge(r, action, EdgeKind::Parameter(1));
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::UnaryOp { op, operand, span } => {
                let v = self.eval(operand);
                let action = self.add_action(
                    ActionKind::UnaryOp(op.symbol().to_string()),
                    Some(*span),
                    BTreeMap::new(),
                );
                self.data_edge(v, action, EdgeKind::Parameter(0));
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Compare {
                left,
                ops,
                comparators,
                span,
            } => {
                let mut operand = self.eval(left);
                let mut results = Vec::new();
                for (op, right) in ops.iter().zip(comparators) {
                    let r = self.eval(right);
                    let action = self.add_action(
                        ActionKind::Compare(op.symbol().to_string()),
                        Some(*span),
                        BTreeMap::new(),
                    );
                    self.data_edge(operand, action, EdgeKind::Parameter(0));
                    self.data_edge(r, action, EdgeKind::Parameter(1));
                    let t = self.temp(Some(*span));
                    self.data_edge(action, t, EdgeKind::Definition);
                    results.push(t);
                    operand = r;
                }
                if results.len() == 1 {
                    let t = results.pop().unwrap();
                    self.finish_value(t, mode, *span)
                } else {
                    let action = self.add_action(
                        ActionKind::BinOp("and".to_string()),
                        Some(*span),
                        BTreeMap::new(),
                    );
                    for (pos, t) in results.iter().enumerate() {
                        self.data_edge(*t, action, EdgeKind::Parameter(pos as u32));
                    }
                    self.define_result(action, &mode.or_temp(), *span)
                }
            }
            Expr::BoolOp { op, values, span } => {
                let operands: Vec<NodeId> = values.iter().map(|v| self.eval(v)).collect();
                let action = self.add_action(
                    ActionKind::BinOp(op.symbol().to_string()),
                    Some(*span),
                    BTreeMap::new(),
                );
                for (pos, v) in operands.iter().enumerate() {
                    self.data_edge(*v, action, EdgeKind::Parameter(pos as u32));
                }
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Display { kind, elts, span } => {
                let values: Vec<NodeId> = elts.iter().map(|e| self.eval(e)).collect();
                let mut md = BTreeMap::new();
                md.insert(
                    meta::CONSTRUCT.to_string(),
                    match kind {
                        DisplayKind::List => "list-display",
                        DisplayKind::Tuple => "tuple-display",
                        DisplayKind::Dict => "dict-display",
                        DisplayKind::Set => "set-display",
                    }
                    .to_string(),
                );
                let action = self.add_action(ActionKind::ConstLoad, Some(*span), md);
                for (pos, v) in values.iter().enumerate() {
                    self.data_edge(*v, action, EdgeKind::Parameter(pos as u32));
                }
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Starred { value, .. } => self.eval_inner(value, mode),
            Expr::Lambda { span, .. } => {
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "lambda".to_string());
                md.insert("lambda_at".to_string(), span.start.to_string());
                let action = self.add_action(ActionKind::ConstLoad, Some(*span), md);
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Comprehension { span, .. } => {
                // Opaque loop-free action; inner dataflow is not tracked.
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "comprehension".to_string());
                let action = self.add_action(ActionKind::ConstLoad, Some(*span), md);
                self.define_result(action, &mode.or_temp(), *span)
            }
            Expr::Unknown { span, .. } => {
                let mut md = BTreeMap::new();
                md.insert(meta::CONSTRUCT.to_string(), "unknown".to_string());
                let action = self.add_action(ActionKind::ConstLoad, Some(*span), md);
                self.define_result(action, &mode.or_temp(), *span)
            }
        }
    }

    /// Route a plain value through the requested definition mode.
    fn finish_value(
        &mut self,
        value: NodeId,
        mode: Define,
        span: crate::frontend::Span,
    ) -> Option<NodeId> {
        match mode {
            Define::None | Define::Temp => Some(value),
            Define::Named(name, name_span) => {
                let action = self.add_action(ActionKind::ConstLoad, Some(span), BTreeMap::new());
                self.data_edge(value, action, EdgeKind::Parameter(0));
                let dst = self.write_var(&name, Some(name_span));
                self.data_edge(action, dst, EdgeKind::Definition);
                Some(dst)
            }
        }
    }

    fn eval_call(
        &mut self,
        func: &Expr,
        args: &[Expr],
        keywords: &[Keyword],
        span: crate::frontend::Span,
        mode: Define,
    ) -> Option<NodeId> {
        // Receiver and callee: for `a.b(...)`, `a` takes the receiver edge
        // and the attribute-read of `b` feeds the callee position.
        let (receiver, callee_node, callee_name, callee_path) = match func {
            Expr::Attribute {
                value,
                attr,
                span: f_span,
            } => {
                let recv = self.eval(value);
                let mut md = BTreeMap::new();
                md.insert(meta::ATTR.to_string(), attr.clone());
                let read = self.add_action(ActionKind::AttributeRead, Some(*f_span), md);
                self.data_edge(recv, read, EdgeKind::Receiver);
                let t = self.temp(Some(*f_span));
                self.data_edge(read, t, EdgeKind::Definition);
                (Some(recv), t, attr.clone(), func.dotted_path())
            }
            Expr::Name { id, span: f_span } => {
                let c = self.read_var(id, *f_span);
                (None, c, id.clone(), Some(id.clone()))
            }
            other => {
                let c = self.eval(other);
                let name = other.textual_head().unwrap_or("<dynamic>").to_string();
                (None, c, name, None)
            }
        };

        let positional: Vec<NodeId> = args.iter().map(|a| self.eval(a)).collect();
        let mut kw_values: Vec<(Option<String>, NodeId)> = Vec::new();
        for kw in keywords {
            let v = self.eval(&kw.value);
            kw_values.push((kw.arg.clone(), v));
        }

        let mut md = BTreeMap::new();
        md.insert(meta::CALLEE_NAME.to_string(), callee_name);
        if let Some(path) = callee_path {
            md.insert(meta::CALLEE_PATH.to_string(), path);
        }
        let kw_names: Vec<&str> = kw_values.iter().filter_map(|(n, _)| n.as_deref()).collect();
        if !kw_names.is_empty() {
            md.insert(meta::KW_NAMES.to_string(), kw_names.join(","));
        }

        let mut position =
            positional.len() as u32 + kw_values.iter().filter(|(n, _)| n.is_some()).count() as u32;
        let kwargs_nodes: Vec<NodeId> = kw_values
            .iter()
            .filter(|(n, _)| n.is_none())
            .map(|(_, v)| *v)
            .collect();
        if !kwargs_nodes.is_empty() {
            md.insert(meta::KWARGS_POS.to_string(), position.to_string());
        }

        let action = self.add_action(ActionKind::Call, Some(span), md);
        if let Some(recv) = receiver {
            self.data_edge(recv, action, EdgeKind::Receiver);
        }
        self.data_edge(callee_node, action, EdgeKind::Callee);
        let mut pos = 0u32;
        for v in &positional {
            self.data_edge(*v, action, EdgeKind::Parameter(pos));
            pos += 1;
        }
        for (name, v) in &kw_values {
            if name.is_some() {
                self.data_edge(*v, action, EdgeKind::Parameter(pos));
                pos += 1;
            }
        }
        for v in kwargs_nodes {
            self.data_edge(v, action, EdgeKind::Parameter(position));
            position += 1;
        }

        self.define_result(action, &mode, span)
    }
}

#[derive(Clone)]
enum Define {
    None,
    Temp,
    Named(String, crate::frontend::Span),
}

impl Define {
    /// Attribute/subscript/operator results always define something, even in
    /// statement position, so downstream reads stay connected.
    fn or_temp(&self) -> Define {
        match self {
            Define::None => Define::Temp,
            other => other.clone(),
        }
    }
}

/// Names assigned anywhere in a statement list, not descending into nested
/// function or class definitions.
fn collect_assigned_names(body: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    collect_assigned_rec(body, &mut out);
    out
}

fn collect_assigned_rec(body: &[Stmt], out: &mut Vec<String>) {
    for stmt in body {
        match stmt {
            Stmt::Assign { targets, .. } => {
                for t in targets {
                    collect_target_names(t, out);
                }
            }
            Stmt::AugAssign { target, .. } => collect_target_names(target, out),
            Stmt::For {
                target,
                body,
                orelse,
                ..
            } => {
                collect_target_names(target, out);
                collect_assigned_rec(body, out);
                collect_assigned_rec(orelse, out);
            }
            Stmt::If { body, orelse, .. } | Stmt::While { body, orelse, .. } => {
                collect_assigned_rec(body, out);
                collect_assigned_rec(orelse, out);
            }
            Stmt::Try {
                body,
                handlers,
                orelse,
                finalbody,
                ..
            } => {
                collect_assigned_rec(body, out);
                for h in handlers {
                    if let Some(n) = &h.name {
                        push_unique(out, n);
                    }
                    collect_assigned_rec(&h.body, out);
                }
                collect_assigned_rec(orelse, out);
                collect_assigned_rec(finalbody, out);
            }
            Stmt::With { items, body, .. } => {
                for item in items {
                    if let Some(t) = &item.target {
                        collect_target_names(t, out);
                    }
                }
                collect_assigned_rec(body, out);
            }
            Stmt::Import { names, .. } | Stmt::ImportFrom { names, .. } => {
                for alias in names {
                    if alias.name != "*" {
                        push_unique(out, alias.bound_name());
                    }
                }
            }
            _ => {}
        }
    }
}

fn collect_target_names(target: &Expr, out: &mut Vec<String>) {
    match target {
        Expr::Name { id, .. } => push_unique(out, id),
        Expr::Display { elts, .. } => {
            for e in elts {
                collect_target_names(e, out);
            }
        }
        Expr::Starred { value, .. } => collect_target_names(value, out),
        _ => {}
    }
}

fn push_unique(out: &mut Vec<String>, name: &str) {
    if !out.iter().any(|n| n == name) {
        out.push(name.to_string());
    }
}
