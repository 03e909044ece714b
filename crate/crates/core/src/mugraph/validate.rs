//! Structural validation of MU graphs.
//!
//! Construction is total, so inconsistencies are defects; this pass surfaces
//! them. An empty result means every node, edge and graph invariant holds.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{meta, EdgeKind, MuGraph, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending node or edge, rendered as `n3` or `n3->n7`.
    pub subject: String,
    pub invariant: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.invariant)
    }
}

pub fn validate(graph: &MuGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let node = |id: NodeId| &graph.nodes[id.index()];

    let entries = graph
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Entry))
        .count();
    let exits = graph
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Exit))
        .count();
    if entries != 1 {
        out.push(Violation {
            subject: graph.function_name.clone(),
            invariant: format!("expected exactly one entry node, found {entries}"),
        });
    }
    if exits != 1 {
        out.push(Violation {
            subject: graph.function_name.clone(),
            invariant: format!("expected exactly one exit node, found {exits}"),
        });
    }

    for n in &graph.nodes {
        if n.type_string.is_some() && !n.kind.is_data() {
            out.push(Violation {
                subject: n.id.to_string(),
                invariant: "type_string present on a non-data node".to_string(),
            });
        }
        if n.kind.is_call() && n.meta(meta::CALLEE_NAME).is_none() {
            out.push(Violation {
                subject: n.id.to_string(),
                invariant: "call action lacks callee_name metadata".to_string(),
            });
        }
    }

    let mut param_positions: BTreeMap<NodeId, Vec<u32>> = BTreeMap::new();
    let mut definitions: BTreeMap<NodeId, usize> = BTreeMap::new();
    for e in &graph.edges {
        let subject = format!("{}->{}", e.src, e.dst);
        if e.src.index() >= graph.nodes.len() || e.dst.index() >= graph.nodes.len() {
            out.push(Violation {
                subject,
                invariant: "edge references a missing node".to_string(),
            });
            continue;
        }
        let src_data = node(e.src).kind.is_data();
        let dst_data = node(e.dst).kind.is_data();
        match e.kind {
            EdgeKind::Control(_) => {
                if src_data || dst_data {
                    out.push(Violation {
                        subject,
                        invariant: "control edge touches a data node".to_string(),
                    });
                }
            }
            _ => {
                if src_data == dst_data {
                    out.push(Violation {
                        subject,
                        invariant: "data edge must have a data node as exactly one endpoint"
                            .to_string(),
                    });
                    continue;
                }
                match e.kind {
                    EdgeKind::Definition => {
                        if !dst_data {
                            out.push(Violation {
                                subject,
                                invariant: "definition edge must target a data node".to_string(),
                            });
                        } else {
                            *definitions.entry(e.dst).or_insert(0) += 1;
                        }
                    }
                    EdgeKind::Parameter(pos) => {
                        if !src_data {
                            out.push(Violation {
                                subject,
                                invariant: "parameter edge must originate at a data node"
                                    .to_string(),
                            });
                        }
                        param_positions.entry(e.dst).or_default().push(pos);
                    }
                    EdgeKind::Condition => {
                        if !node(e.dst).kind.is_control() {
                            out.push(Violation {
                                subject,
                                invariant: "condition edge must target a control node".to_string(),
                            });
                        }
                    }
                    EdgeKind::Receiver | EdgeKind::Callee => {
                        if !src_data {
                            out.push(Violation {
                                subject,
                                invariant: "receiver/callee edge must originate at a data node"
                                    .to_string(),
                            });
                        }
                    }
                    EdgeKind::Control(_) => unreachable!(),
                }
            }
        }
    }

    // SSA: at most one definition per data node.
    for (id, count) in definitions {
        if count > 1 {
            out.push(Violation {
                subject: id.to_string(),
                invariant: format!("data node has {count} incoming definition edges (SSA)"),
            });
        }
    }

    // Parameter edges into one action are totally ordered with no gaps.
    for (action, mut positions) in param_positions {
        positions.sort_unstable();
        positions.dedup();
        let gap_free = positions.iter().enumerate().all(|(i, &p)| p == i as u32);
        if !gap_free {
            out.push(Violation {
                subject: action.to_string(),
                invariant: format!("parameter positions have gaps or duplicates: {positions:?}"),
            });
        }
    }

    for &p in &graph.params {
        if !node(p).kind.is_data() {
            out.push(Violation {
                subject: p.to_string(),
                invariant: "parameter list entry is not a data node".to_string(),
            });
        }
    }
    for &r in &graph.returns {
        if !node(r).kind.is_data() {
            out.push(Violation {
                subject: r.to_string(),
                invariant: "returns entry is not a data node".to_string(),
            });
        }
    }

    // CFG projection: single entry/exit, connected, and every non-data node
    // on some entry-to-exit path.
    if entries == 1 && exits == 1 {
        let entry = graph.entry();
        let exit = graph.exit();
        let forward = reach(graph, entry, false);
        let backward = reach(graph, exit, true);
        for n in &graph.nodes {
            if n.kind.is_data() {
                continue;
            }
            if !forward.contains(&n.id) || !backward.contains(&n.id) {
                out.push(Violation {
                    subject: n.id.to_string(),
                    invariant: "node is not on any entry-to-exit control path".to_string(),
                });
            }
        }
    }

    out
}

fn reach(graph: &MuGraph, from: NodeId, reverse: bool) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(from);
    queue.push_back(from);
    while let Some(n) = queue.pop_front() {
        let next: Vec<NodeId> = if reverse {
            graph
                .edges_in(n)
                .filter(|e| e.kind.is_control())
                .map(|e| e.src)
                .collect()
        } else {
            graph
                .edges_out(n)
                .filter(|e| e.kind.is_control())
                .map(|e| e.dst)
                .collect()
        };
        for m in next {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}
