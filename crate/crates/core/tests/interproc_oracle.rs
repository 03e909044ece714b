//! Oracle equivalence for interprocedural matching.
//!
//! For small generated programs, the fixpoint's forward/backward data
//! closures must coincide with a brute-force def-use enumeration over the
//! inlined supergraph: all intraprocedural data edges, plus argument ->
//! formal and returned-value -> call-site-definition edges for every
//! name-resolved call. Both constructions are context-insensitive, so the
//! reachable data-node sets must be equal.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use proptest::prelude::*;

use sdklint_core::frontend::{parse_module, SourceFile};
use sdklint_core::interproc::{
    interprocedural_data_closure, resolve_callees, CallSiteRef, Direction, Scope,
};
use sdklint_core::mugraph::{build_program, NodeId, ParsedModule, ProgramIndex};
use sdklint_core::synth::{random_program, ProgramShape};

type GNode = (String, NodeId);

fn build(seed: u64) -> ProgramIndex {
    let shape = ProgramShape {
        max_functions: 4,
        max_statements_per_function: 3,
        max_params: 2,
        branching: true,
    };
    let src = random_program(seed, shape);
    let file = SourceFile::new("gen.py", src);
    let ast = parse_module(&file).unwrap();
    build_program(&[ParsedModule {
        source: file,
        ast,
        package: None,
    }])
}

/// The inlined supergraph's interprocedural edges, both directions.
struct SuperGraph<'a> {
    index: &'a ProgramIndex,
    forward: BTreeMap<GNode, Vec<GNode>>,
    backward: BTreeMap<GNode, Vec<GNode>>,
}

impl<'a> SuperGraph<'a> {
    fn build(index: &'a ProgramIndex) -> Self {
        let mut forward: BTreeMap<GNode, Vec<GNode>> = BTreeMap::new();
        let mut backward: BTreeMap<GNode, Vec<GNode>> = BTreeMap::new();
        let mut connect = |from: GNode, to: GNode| {
            forward.entry(from.clone()).or_default().push(to.clone());
            backward.entry(to).or_default().push(from);
        };
        for graph in index.graphs.values() {
            for call in graph.call_actions() {
                let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                    continue;
                };
                for callee in resolve_callees(&site, index, Scope::FileForwardReachable) {
                    // Positional arguments onto formals.
                    for (pos, arg) in graph.arguments_of(call.id).into_iter().enumerate() {
                        if let Some(&formal) = callee.params.get(pos) {
                            connect(
                                (graph.function_name.clone(), arg),
                                (callee.function_name.clone(), formal),
                            );
                        }
                    }
                    // Returned values onto the call-site definition.
                    if let Some(def) = graph.defined_node(call.id) {
                        for &ret in &callee.returns {
                            connect(
                                (callee.function_name.clone(), ret),
                                (graph.function_name.clone(), def),
                            );
                        }
                    }
                }
            }
        }
        SuperGraph {
            index,
            forward,
            backward,
        }
    }

    /// Data nodes reachable from the seed by def-use chains.
    fn closure(&self, seed: &GNode, direction: Direction) -> BTreeSet<GNode> {
        let mut out = BTreeSet::new();
        let mut seen: BTreeSet<GNode> = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(seed.clone());
        queue.push_back(seed.clone());
        while let Some(node) = queue.pop_front() {
            let graph = &self.index.graphs[&node.0];
            if graph.node(node.1).kind.is_data() {
                out.insert(node.clone());
            }
            let mut next: Vec<GNode> = Vec::new();
            match direction {
                Direction::Forward => {
                    next.extend(
                        graph
                            .edges_out(node.1)
                            .filter(|e| e.kind.is_data())
                            .map(|e| (node.0.clone(), e.dst)),
                    );
                    if let Some(cross) = self.forward.get(&node) {
                        next.extend(cross.iter().cloned());
                    }
                }
                Direction::Backward => {
                    next.extend(
                        graph
                            .edges_in(node.1)
                            .filter(|e| e.kind.is_data())
                            .map(|e| (node.0.clone(), e.src)),
                    );
                    if let Some(cross) = self.backward.get(&node) {
                        next.extend(cross.iter().cloned());
                    }
                }
            }
            for n in next {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        out
    }
}

fn engine_closure(index: &ProgramIndex, seed: &GNode, direction: Direction) -> BTreeSet<GNode> {
    let scope = match direction {
        Direction::Forward => Scope::FileForwardReachable,
        Direction::Backward => Scope::FileBackwardReachable,
    };
    let nodes: BTreeSet<NodeId> = std::iter::once(seed.1).collect();
    let result = interprocedural_data_closure((seed.0.as_str(), &nodes), direction, scope, index);
    let mut out = BTreeSet::new();
    for (g, nodes) in result.matches {
        let graph = &index.graphs[&g];
        for n in nodes {
            if graph.node(n).kind.is_data() {
                out.insert((g.clone(), n));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 550, ..ProptestConfig::default() })]

    #[test]
    fn fixpoint_equals_supergraph_enumeration(seed in 0u64..1_000_000, pick in 0usize..1000) {
        let index = build(seed);
        let total_nodes: usize = index.graphs.values().map(|g| g.nodes.len()).sum();
        prop_assume!(total_nodes <= 40 + 2 * index.graphs.len());

        // Pick a data node deterministically from the pick parameter.
        let data_nodes: Vec<GNode> = index
            .graphs
            .values()
            .flat_map(|g| {
                g.nodes
                    .iter()
                    .filter(|n| n.kind.is_data())
                    .map(move |n| (g.function_name.clone(), n.id))
            })
            .collect();
        prop_assume!(!data_nodes.is_empty());
        let seed_node = data_nodes[pick % data_nodes.len()].clone();

        let supergraph = SuperGraph::build(&index);
        for direction in [Direction::Forward, Direction::Backward] {
            let expected = supergraph.closure(&seed_node, direction);
            let actual = engine_closure(&index, &seed_node, direction);
            prop_assert_eq!(
                &actual,
                &expected,
                "{:?} closure from {:?} diverged\nmissing: {:?}\nextra: {:?}",
                direction,
                &seed_node,
                expected.difference(&actual).collect::<Vec<_>>(),
                actual.difference(&expected).collect::<Vec<_>>()
            );
        }
    }
}

/// Forward/backward duality on straight-line value passing: whenever the
/// forward closure from `a` reaches `b`, the backward closure from `b`
/// reaches `a`. Phi merges and field writes are excluded by construction
/// (straight-line programs only).
#[test]
fn forward_backward_duality_on_straight_line_chains() {
    let shape = ProgramShape {
        max_functions: 3,
        max_statements_per_function: 4,
        max_params: 2,
        branching: false,
    };
    for seed in 0..60u64 {
        let src = random_program(seed, shape);
        let file = SourceFile::new("gen.py", src);
        let ast = parse_module(&file).unwrap();
        let index = build_program(&[ParsedModule {
            source: file,
            ast,
            package: None,
        }]);
        let data_nodes: Vec<GNode> = index
            .graphs
            .values()
            .flat_map(|g| {
                g.nodes
                    .iter()
                    .filter(|n| n.kind.is_data())
                    .map(move |n| (g.function_name.clone(), n.id))
            })
            .collect();
        for a in data_nodes.iter().step_by(4) {
            let reached = engine_closure(&index, a, Direction::Forward);
            for b in reached.iter().step_by(3) {
                let back = engine_closure(&index, b, Direction::Backward);
                assert!(
                    back.contains(a),
                    "seed {seed}: forward {a:?} -> {b:?} but not backward"
                );
            }
        }
    }
}

/// The whole suite stays within the time budget.
#[test]
fn oracle_suite_is_fast_enough() {
    let started = Instant::now();
    let mut checked = 0usize;
    for seed in 0..80u64 {
        let index = build(seed);
        let supergraph = SuperGraph::build(&index);
        let data_nodes: Vec<GNode> = index
            .graphs
            .values()
            .flat_map(|g| {
                g.nodes
                    .iter()
                    .filter(|n| n.kind.is_data())
                    .map(move |n| (g.function_name.clone(), n.id))
            })
            .collect();
        for seed_node in data_nodes.iter().step_by(5) {
            for direction in [Direction::Forward, Direction::Backward] {
                assert_eq!(
                    engine_closure(&index, seed_node, direction),
                    supergraph.closure(seed_node, direction)
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 500, "only {checked} oracle comparisons ran");
    assert!(
        started.elapsed().as_secs() < 60,
        "oracle suite exceeded the time budget"
    );
}
