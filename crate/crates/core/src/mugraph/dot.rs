//! DOT rendering for debugging: control edges solid, data edges dashed,
//! data nodes elliptic, actions rectangular, entry/exit trapezoidal.

use std::fmt::Write;

use super::{meta, BranchLabel, EdgeKind, MuGraph, NodeKind};

pub fn to_dot(graph: &MuGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&graph.function_name));
    let _ = writeln!(out, "  rankdir=LR;");
    for node in &graph.nodes {
        let (shape, label) = match &node.kind {
            NodeKind::Entry => ("trapezium", "entry".to_string()),
            NodeKind::Exit => ("invtrapezium", "exit".to_string()),
            NodeKind::Control(kind) => ("diamond", kind.label().to_string()),
            NodeKind::Action(kind) => {
                let mut label = kind.action_text().to_string();
                if let Some(callee) = node.meta(meta::CALLEE_NAME) {
                    label = format!("call {callee}");
                }
                ("box", label)
            }
            NodeKind::Data { name, .. } => {
                let mut label = name.clone().unwrap_or_else(|| "?".to_string());
                if let Some(v) = node.meta(meta::VERSION) {
                    if v != "0" && !node.is_const() {
                        label = format!("{label}_{v}");
                    }
                }
                if let Some(t) = &node.type_string {
                    label = format!("{label}: {t}");
                }
                ("ellipse", label)
            }
        };
        let _ = writeln!(
            out,
            "  {} [shape={shape}, label=\"{}\"];",
            node.id,
            escape(&label)
        );
    }
    for edge in &graph.edges {
        let (style, label) = match edge.kind {
            EdgeKind::Control(branch) => (
                "solid",
                branch.map(BranchLabel::label).unwrap_or("").to_string(),
            ),
            EdgeKind::Condition => ("dashed", "cond".to_string()),
            EdgeKind::Definition => ("dashed", "def".to_string()),
            EdgeKind::Parameter(pos) => ("dashed", format!("p{pos}")),
            EdgeKind::Receiver => ("dashed", "recv".to_string()),
            EdgeKind::Callee => ("dashed", "callee".to_string()),
        };
        let _ = writeln!(
            out,
            "  {} -> {} [style={style}, label=\"{}\"];",
            edge.src,
            edge.dst,
            escape(&label)
        );
    }
    let _ = writeln!(out, "}}");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
