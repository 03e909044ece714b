//! Callee resolution and interprocedural matching against the fixture
//! corpus plus constructed programs.

use std::collections::BTreeSet;

use sdklint_core::frontend::{parse_module, SourceFile};
use sdklint_core::interproc::{
    interprocedural_data_closure, interprocedural_match_ordered, resolve_callees, CallSiteRef,
    Direction, Scope, WorklistOrder,
};
use sdklint_core::mugraph::{
    build_program, meta, ActionKind, MuGraph, NodeId, NodeKind, ParsedModule, ProgramIndex,
};
use sdklint_core::stubtypes::{annotate_program, ServiceCatalog};

fn fixture_program(name: &str) -> ProgramIndex {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    let file = SourceFile::new(name, std::fs::read_to_string(path).unwrap());
    let ast = parse_module(&file).unwrap();
    let mut index = build_program(&[ParsedModule {
        source: file,
        ast,
        package: None,
    }]);
    annotate_program(&mut index, &ServiceCatalog::builtin());
    index
}

fn source_program(name: &str, src: &str) -> ProgramIndex {
    let file = SourceFile::new(name, src.to_string());
    let ast = parse_module(&file).unwrap();
    let mut index = build_program(&[ParsedModule {
        source: file,
        ast,
        package: None,
    }]);
    annotate_program(&mut index, &ServiceCatalog::builtin());
    index
}

fn graph_named<'a>(index: &'a ProgramIndex, simple: &str) -> &'a MuGraph {
    index
        .graphs
        .values()
        .find(|g| g.simple_name == simple)
        .unwrap()
}

fn call_site(graph: &MuGraph, callee: &str) -> CallSiteRef {
    let call = graph
        .call_actions()
        .find(|n| n.meta(meta::CALLEE_NAME) == Some(callee))
        .unwrap_or_else(|| panic!("no call to {callee} in {}", graph.function_name));
    CallSiteRef::from_call(graph, call.id).unwrap()
}

#[test]
fn fig9_call_resolves_to_the_file_local_function() {
    let index = fixture_program("client_parameter.py");
    let writer = graph_named(&index, "write_df_to_s3_location");
    let site = call_site(writer, "create_s3_client");
    let callees = resolve_callees(&site, &index, Scope::FileForwardReachable);
    assert_eq!(callees.len(), 1);
    assert_eq!(callees[0].simple_name, "create_s3_client");
}

#[test]
fn unresolved_call_yields_no_candidates() {
    let index = source_program("m.py", "def f():\n    missing()\n");
    let f = graph_named(&index, "f");
    let site = call_site(f, "missing");
    assert!(resolve_callees(&site, &index, Scope::FileForwardReachable).is_empty());
}

#[test]
fn fig5_bare_method_call_resolves_by_name_and_arity() {
    let index = fixture_program("resource_via_helper.py");
    let m2 = graph_named(&index, "M2");
    let site = call_site(m2, "M3");
    assert_eq!(site.arg_count, 3);
    let callees = resolve_callees(&site, &index, Scope::FileForwardReachable);
    assert_eq!(callees.len(), 1);
    assert_eq!(callees[0].simple_name, "M3");
}

#[test]
fn arity_mismatch_drops_candidates() {
    let index = source_program(
        "m.py",
        "def target(a, b):\n    return a\n\ndef caller():\n    target(1)\n    target(1, 2)\n    target(1, 2, 3)\n",
    );
    let caller = graph_named(&index, "caller");
    let sites: Vec<CallSiteRef> = caller
        .call_actions()
        .map(|n| CallSiteRef::from_call(caller, n.id).unwrap())
        .collect();
    let resolved: Vec<usize> = sites
        .iter()
        .map(|s| resolve_callees(s, &index, Scope::FileForwardReachable).len())
        .collect();
    assert_eq!(resolved, vec![0, 1, 0]);
}

#[test]
fn defaults_widen_the_acceptable_arity_range() {
    let index = source_program(
        "m.py",
        "def target(a, b=1, c=2):\n    return a\n\ndef caller():\n    target(1)\n    target(1, 2, 3)\n    target(1, 2, 3, 4)\n",
    );
    let caller = graph_named(&index, "caller");
    let counts: Vec<usize> = caller
        .call_actions()
        .map(|n| CallSiteRef::from_call(caller, n.id).unwrap())
        .map(|s| resolve_callees(&s, &index, Scope::FileForwardReachable).len())
        .collect();
    assert_eq!(counts, vec![1, 1, 0]);
}

#[test]
fn annotated_parameter_types_drop_incompatible_candidates() {
    let index = source_program(
        "m.py",
        "import boto3\n\ndef use(client: S3Client):\n    return client\n\ndef caller():\n    c = boto3.client(\"sqs\")\n    use(c)\n",
    );
    let caller = graph_named(&index, "caller");
    let site = call_site(caller, "use");
    assert_eq!(
        site.arg_types.as_deref(),
        Some(&["SQSClient".to_string()][..])
    );
    assert!(resolve_callees(&site, &index, Scope::FileForwardReachable).is_empty());
}

/// Backward closure from the `s3_client` parameter of `load_df_from_s3`
/// reaches the typed `s3_client` local in `write_df_to_s3_location`.
#[test]
fn fig9_backward_closure_crosses_the_call_boundary() {
    let index = fixture_program("client_parameter.py");
    let load = graph_named(&index, "load_df_from_s3");
    let param = load.params[0];
    let seed: BTreeSet<NodeId> = std::iter::once(param).collect();
    let result = interprocedural_data_closure(
        (load.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );

    let writer = graph_named(&index, "write_df_to_s3_location");
    let matched = &result.matches[&writer.function_name];
    let wanted = writer
        .nodes
        .iter()
        .find(|n| n.data_name() == Some("s3_client"))
        .unwrap();
    assert!(
        matched.contains(&wanted.id),
        "backward closure misses the caller's s3_client"
    );
    assert_eq!(
        writer.node(wanted.id).type_string.as_deref(),
        Some("S3Client")
    );

    // And further back: the constructor's returned value in create_s3_client.
    let creator = graph_named(&index, "create_s3_client");
    assert!(result.matches.contains_key(&creator.function_name));
    let creator_nodes = &result.matches[&creator.function_name];
    assert!(creator_nodes.iter().any(|&n| creator.returns.contains(&n)));
}

#[test]
fn uncalled_function_keeps_the_closure_local() {
    let index = source_program("m.py", "def lonely(p):\n    x = p + 1\n    return x\n");
    let lonely = graph_named(&index, "lonely");
    let seed: BTreeSet<NodeId> = std::iter::once(lonely.params[0]).collect();
    let result = interprocedural_data_closure(
        (lonely.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );
    // Only the seed graph plus the script function exist; no callers means
    // only the local backward closure of the parameter.
    assert_eq!(result.matches.len(), 1);
    assert_eq!(result.matches[&lonely.function_name], seed);
}

#[test]
fn three_function_chain_forward_matches_manual_trace() {
    // a -> b -> c passing one value through.
    let src = "def a():\n    v = 7\n    b(v)\n\ndef b(x):\n    c(x)\n\ndef c(y):\n    return y\n";
    let index = source_program("m.py", src);
    let a = graph_named(&index, "a");
    let v = a
        .nodes
        .iter()
        .find(|n| n.data_name() == Some("v") && !n.is_const())
        .unwrap();
    let seed: BTreeSet<NodeId> = std::iter::once(v.id).collect();
    let result = interprocedural_data_closure(
        (a.function_name.as_str(), &seed),
        Direction::Forward,
        Scope::FileForwardReachable,
        &index,
    );
    let c = graph_named(&index, "c");
    let y = c.params[0];
    assert!(
        result.matches[&c.function_name].contains(&y),
        "v does not reach c's parameter"
    );

    // Duality: backward from c's parameter reaches v.
    let seed_back: BTreeSet<NodeId> = std::iter::once(y).collect();
    let back = interprocedural_data_closure(
        (c.function_name.as_str(), &seed_back),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );
    assert!(back.matches[&a.function_name].contains(&v.id));
}

#[test]
fn fig5_forward_closure_reaches_m3_parameter() {
    let index = fixture_program("resource_via_helper.py");
    let getter = graph_named(&index, "get_sns_client");
    // Seed: the value returned by the constructor call.
    let seed: BTreeSet<NodeId> = getter.returns.iter().copied().collect();
    assert!(!seed.is_empty());
    let result = interprocedural_data_closure(
        (getter.function_name.as_str(), &seed),
        Direction::Forward,
        Scope::FileForwardReachable,
        &index,
    );
    let m3 = graph_named(&index, "M3");
    let client_param = m3.params[0];
    assert!(
        result.matches[&m3.function_name].contains(&client_param),
        "the client does not flow into M3 via its parameter"
    );
}

#[test]
fn backward_closure_of_a_constant_is_just_the_constant() {
    let index = source_program("m.py", "def f():\n    x = 1\n");
    let f = graph_named(&index, "f");
    let one = f
        .nodes
        .iter()
        .find(|n| n.meta(meta::CONST) == Some("1"))
        .unwrap();
    let seed: BTreeSet<NodeId> = std::iter::once(one.id).collect();
    let result = interprocedural_data_closure(
        (f.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );
    assert_eq!(result.matches.len(), 1);
    assert_eq!(result.matches[&f.function_name], seed);
}

#[test]
fn recursion_terminates_via_the_processed_guard() {
    let src = "def f(n):\n    return f(n - 1)\n";
    let index = source_program("m.py", src);
    let f = graph_named(&index, "f");
    let seed: BTreeSet<NodeId> = std::iter::once(f.params[0]).collect();
    let result = interprocedural_data_closure(
        (f.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );
    assert!(result.matches.contains_key(&f.function_name));
}

#[test]
fn scope_widening_never_removes_matches() {
    let index = fixture_program("client_parameter.py");
    let load = graph_named(&index, "load_df_from_s3");
    let seed: BTreeSet<NodeId> = std::iter::once(load.params[0]).collect();
    let file_scope = interprocedural_data_closure(
        (load.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
    );
    let package_scope = interprocedural_data_closure(
        (load.function_name.as_str(), &seed),
        Direction::Backward,
        Scope::PackageBackwardReachable,
        &index,
    );
    for (g, nodes) in &file_scope.matches {
        let wider = package_scope
            .matches
            .get(g)
            .expect("graph vanished when widening scope");
        assert!(nodes.is_subset(wider));
    }
}

#[test]
fn worklist_order_does_not_change_the_fixpoint() {
    let index = fixture_program("client_parameter.py");
    let load = graph_named(&index, "load_df_from_s3");
    let seed: BTreeSet<NodeId> = std::iter::once(load.params[0]).collect();
    let subrule = sdklint_core::interproc::closure_subrule(Direction::Backward);
    let baseline = interprocedural_match_ordered(
        (load.function_name.as_str(), &seed),
        &subrule,
        Direction::Backward,
        Scope::FileBackwardReachable,
        &index,
        WorklistOrder::Fifo,
        false,
    );
    for order in [
        WorklistOrder::Lifo,
        WorklistOrder::Shuffled(7),
        WorklistOrder::Shuffled(99),
    ] {
        let shuffled = interprocedural_match_ordered(
            (load.function_name.as_str(), &seed),
            &subrule,
            Direction::Backward,
            Scope::FileBackwardReachable,
            &index,
            order,
            false,
        );
        assert_eq!(baseline, shuffled, "{order:?} changed the fixpoint");
    }
}

/// Field tracking: backward from a `self._client` read, composed with a
/// defined-transform, reaches the construction call in another method of
/// the class.
#[test]
fn field_reads_reach_field_writes_through_node_matching() {
    let index = fixture_program("lazy_field_client.py");
    let m1 = graph_named(&index, "M1");

    // The read of self._client in M1.
    let read = m1
        .nodes
        .iter()
        .find(|n| {
            matches!(n.kind, NodeKind::Action(ActionKind::AttributeRead))
                && n.meta(meta::ATTR) == Some("_client")
        })
        .unwrap();
    let read_temp = m1.defined_node(read.id).unwrap();

    // Remap to values written into (S3, _client) anywhere in the package.
    let class = m1.class_name.as_deref().unwrap();
    let mut written_values: Vec<(String, NodeId)> = Vec::new();
    for graph in index.graphs_in_package_of(&m1.file) {
        if graph.class_name.as_deref() != Some(class) {
            continue;
        }
        for node in &graph.nodes {
            if matches!(node.kind, NodeKind::Action(ActionKind::AttributeWrite))
                && node.meta(meta::ATTR) == Some("_client")
            {
                for arg in graph.arguments_of(node.id) {
                    written_values.push((graph.function_name.clone(), arg));
                }
            }
        }
    }
    assert_eq!(
        written_values.len(),
        2,
        "None in __init__ plus the client in the property"
    );
    let _ = read_temp;

    // Backward closure from each written value, then defining actions:
    // one of them must be the boto3 construction call.
    let mut reached_constructor = false;
    for (graph_name, value) in written_values {
        let seed: BTreeSet<NodeId> = std::iter::once(value).collect();
        let result = interprocedural_data_closure(
            (graph_name.as_str(), &seed),
            Direction::Backward,
            Scope::PackageBackwardReachable,
            &index,
        );
        for (g, nodes) in &result.matches {
            let graph = &index.graphs[g];
            for &n in nodes {
                if let Some(def) = graph.defining_action(n) {
                    let dnode = graph.node(def);
                    if dnode.kind.is_call()
                        && dnode
                            .meta(meta::CALLEE_PATH)
                            .is_some_and(|p| p.eq_ignore_ascii_case("boto3.client"))
                    {
                        reached_constructor = true;
                    }
                }
            }
        }
    }
    assert!(
        reached_constructor,
        "field write values never reach the construction call"
    );
}
