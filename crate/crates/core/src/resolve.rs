//! Layered client-type resolution.
//!
//! Given a candidate API call site, decide whether its receiver is a client
//! of some known service. Three strategies run in order:
//!
//! 1. Stub-based typing (high precision, low recall): the receiver's
//!    inferred type names a known client or resource flavor.
//! 2. Custom dataflow rules (five, staged intraprocedural -> file ->
//!    package): track the receiver to a recognized construction call or an
//!    already-typed client value.
//! 3. Name-based matching (cheap, over-approximate): the callee name alone
//!    appears in the API specifications.
//!
//! Strategies 1 and 2 yield confidence 1.0; strategy 3 yields 0.5. The
//! High Confidence configuration stops after strategy 2; Mixed Confidence
//! falls through to strategy 3.

use std::collections::BTreeSet;

use crate::apispec::SpecBundle;
use crate::interproc::{interprocedural_data_closure, CallSiteRef, Direction, Scope};
use crate::mugraph::{meta, ActionKind, MuGraph, NodeId, NodeKind, ProgramIndex};
use crate::query::eval::data_closure_one;
use crate::stubtypes::{ClientFlavor, ServiceCatalog};

pub const HIGH_CONFIDENCE: f64 = 1.0;
pub const LOW_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    S1,
    S2,
    S3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Client,
    Resource,
    Unknown,
}

impl From<ClientFlavor> for ClientKind {
    fn from(f: ClientFlavor) -> Self {
        match f {
            ClientFlavor::Client => ClientKind::Client,
            ClientFlavor::Resource => ClientKind::Resource,
        }
    }
}

/// The verdict for one call site: which service the receiver belongs to,
/// which strategy established it, and at what confidence.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClientResolution {
    pub site: CallSiteRef,
    pub service: String,
    pub kind: ClientKind,
    pub strategy: Strategy,
    pub confidence: f64,
}

impl ClientResolution {
    fn new(site: CallSiteRef, service: String, kind: ClientKind, strategy: Strategy) -> Self {
        let confidence = match strategy {
            Strategy::S1 | Strategy::S2 => HIGH_CONFIDENCE,
            Strategy::S3 => LOW_CONFIDENCE,
        };
        ClientResolution {
            site,
            service,
            kind,
            strategy,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolverMode {
    /// Strategies 1 and 2 only; never emits low-confidence resolutions.
    Hc,
    /// Falls through to name-based matching at confidence 0.5.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolverConfig {
    pub mode: ResolverMode,
    /// Widest scope strategy 2 may reach; hard-capped at one package.
    pub scope_ceiling: Scope,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            mode: ResolverMode::Mc,
            scope_ceiling: Scope::PackageBackwardReachable,
        }
    }
}

impl ResolverConfig {
    pub fn hc() -> Self {
        ResolverConfig {
            mode: ResolverMode::Hc,
            ..Default::default()
        }
    }

    pub fn mc() -> Self {
        ResolverConfig::default()
    }
}

/// Stub-based typing: the receiver's inferred type names a known flavor.
pub fn strategy1(
    site: &CallSiteRef,
    index: &ProgramIndex,
    catalog: &ServiceCatalog,
) -> Option<ClientResolution> {
    let graph = index.graphs.get(&site.graph)?;
    let receiver = graph.receiver_of(site.node)?;
    let type_string = graph.node(receiver).type_string.as_deref()?;
    let (service, flavor) = catalog.classify_type(type_string)?;
    Some(ClientResolution::new(
        site.clone(),
        service.to_string(),
        flavor.into(),
        Strategy::S1,
    ))
}

/// The five dataflow rules of strategy 2, staged by scope: intraprocedural
/// receiver tracking, backward then forward file-scope tracking, the
/// parameter rule, and package-scope instance-field tracking. The first
/// rule that lands on a recognized construction call or an already-typed
/// client value wins.
pub fn strategy2(
    site: &CallSiteRef,
    index: &ProgramIndex,
    catalog: &ServiceCatalog,
    scope_ceiling: Scope,
) -> Option<ClientResolution> {
    let graph = index.graphs.get(&site.graph)?;
    let receiver = graph.receiver_of(site.node)?;
    let allow_file = scope_ceiling.breadth() >= crate::interproc::Breadth::File;
    let allow_package = scope_ceiling.breadth() >= crate::interproc::Breadth::Package;

    // R1: intraprocedural backward from the receiver.
    if let Some((service, kind)) = classify_closure_local(graph, receiver, catalog) {
        return Some(ClientResolution::new(
            site.clone(),
            service,
            kind,
            Strategy::S2,
        ));
    }

    if allow_file {
        // R2: backward interprocedural tracking at file scope.
        if let Some((service, kind)) = classify_closure_interproc(
            index,
            &site.graph,
            std::iter::once(receiver),
            Direction::Backward,
            Scope::FileBackwardReachable,
            catalog,
        ) {
            return Some(ClientResolution::new(
                site.clone(),
                service,
                kind,
                Strategy::S2,
            ));
        }

        // R3: forward from every recognized constructor in the file; does
        // the receiver appear in the flow?
        if let Some((service, kind)) = forward_from_constructors(index, graph, receiver, catalog) {
            return Some(ClientResolution::new(
                site.clone(),
                service,
                kind,
                Strategy::S2,
            ));
        }

        // R4: the receiver is a parameter; track caller arguments backward.
        if graph.params.contains(&receiver) {
            if let Some((service, kind)) = classify_closure_interproc(
                index,
                &site.graph,
                std::iter::once(receiver),
                Direction::Backward,
                Scope::FileBackwardReachable,
                catalog,
            ) {
                return Some(ClientResolution::new(
                    site.clone(),
                    service,
                    kind,
                    Strategy::S2,
                ));
            }
        }
    }

    if allow_package {
        // R5: the receiver reads an instance field; track the values written
        // to the same field of the same class, package-wide.
        if let Some((service, kind)) = instance_field_rule(index, graph, receiver, catalog) {
            return Some(ClientResolution::new(
                site.clone(),
                service,
                kind,
                Strategy::S2,
            ));
        }
    }

    None
}

/// Name-based matching: the callee name appears in the specification set.
/// No receiver inspection at all.
pub fn strategy3(site: &CallSiteRef, specs: &SpecBundle) -> Option<ClientResolution> {
    let entries = specs.lookup(&site.callee_name, None);
    let entry = entries.first()?;
    Some(ClientResolution::new(
        site.clone(),
        entry.service_id.clone(),
        ClientKind::Unknown,
        Strategy::S3,
    ))
}

/// The staged resolver: strategy 1, then strategy 2 where needed, then (in
/// mixed-confidence mode) strategy 3.
pub fn resolve_client(
    site: &CallSiteRef,
    index: &ProgramIndex,
    catalog: &ServiceCatalog,
    specs: &SpecBundle,
    config: ResolverConfig,
) -> Option<ClientResolution> {
    if let Some(r) = strategy1(site, index, catalog) {
        return Some(r);
    }
    if let Some(r) = strategy2(site, index, catalog, config.scope_ceiling) {
        return Some(r);
    }
    match config.mode {
        ResolverMode::Hc => None,
        ResolverMode::Mc => strategy3(site, specs),
    }
}

/// Does a node set contain a recognized client value: either a node typed
/// as a client/resource, or a node defined by a construction call?
fn classify_nodes<'a>(
    nodes: impl Iterator<Item = (&'a MuGraph, NodeId)>,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    for (graph, node) in nodes {
        let n = graph.node(node);
        if !n.kind.is_data() {
            continue;
        }
        if let Some(t) = n.type_string.as_deref() {
            if let Some((service, flavor)) = catalog.classify_type(t) {
                return Some((service.to_string(), flavor.into()));
            }
        }
        if let Some(def) = graph.defining_action(node) {
            if let Some((service, kind)) = constructor_service(graph, def, catalog) {
                return Some((service, kind));
            }
        }
    }
    None
}

/// Service constructed by a call action, when it is a recognized
/// construction idiom with a constant service name.
pub fn constructor_service(
    graph: &MuGraph,
    action: NodeId,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    let node = graph.node(action);
    if !node.kind.is_call() {
        return None;
    }
    let callee = node.meta(meta::CALLEE_NAME)?;
    let kind = match callee {
        "client" => ClientKind::Client,
        "resource" => ClientKind::Resource,
        _ => return None,
    };
    let path = node
        .meta(meta::CALLEE_PATH)
        .unwrap_or_default()
        .to_lowercase();
    let from_boto3 = path == format!("boto3.{callee}");
    let from_session = graph
        .receiver_of(action)
        .and_then(|r| graph.node(r).type_string.as_deref())
        == Some("Session");
    if !from_boto3 && !from_session {
        return None;
    }
    let args = graph.arguments_of(action);
    let service = graph.node(*args.first()?).meta(meta::CONST_STR)?;
    catalog.get(service)?;
    Some((service.to_string(), kind))
}

fn classify_closure_local(
    graph: &MuGraph,
    receiver: NodeId,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    let closure = data_closure_one(graph, receiver, Direction::Backward);
    classify_nodes(closure.into_iter().map(|n| (graph, n)), catalog)
}

fn classify_closure_interproc(
    index: &ProgramIndex,
    seed_graph: &str,
    seeds: impl Iterator<Item = NodeId>,
    direction: Direction,
    scope: Scope,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    let seed: BTreeSet<NodeId> = seeds.collect();
    if seed.is_empty() {
        return None;
    }
    let result = interprocedural_data_closure((seed_graph, &seed), direction, scope, index);
    let nodes = result.matches.iter().flat_map(|(g, nodes)| {
        let graph = &index.graphs[g];
        nodes.iter().map(move |&n| (graph, n))
    });
    classify_nodes(nodes, catalog)
}

/// R3: forward tracking from every recognized construction call in the
/// receiver's file; succeeds when the receiver itself is reached.
fn forward_from_constructors(
    index: &ProgramIndex,
    graph: &MuGraph,
    receiver: NodeId,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    for source in index.graphs_in_file(&graph.file) {
        for call in source.call_actions() {
            let Some((service, kind)) = constructor_service(source, call.id, catalog) else {
                continue;
            };
            let Some(constructed) = source.defined_node(call.id) else {
                continue;
            };
            let seed: BTreeSet<NodeId> = std::iter::once(constructed).collect();
            let result = interprocedural_data_closure(
                (source.function_name.as_str(), &seed),
                Direction::Forward,
                Scope::FileForwardReachable,
                index,
            );
            if result
                .matches
                .get(&graph.function_name)
                .is_some_and(|nodes| nodes.contains(&receiver))
            {
                return Some((service, kind));
            }
        }
    }
    None
}

/// R5: receivers held in instance fields. The receiver's local backward
/// closure must read `self.<field>`; the values written to the same field
/// of the same class (package-wide) are tracked backward to a constructor.
fn instance_field_rule(
    index: &ProgramIndex,
    graph: &MuGraph,
    receiver: NodeId,
    catalog: &ServiceCatalog,
) -> Option<(String, ClientKind)> {
    let class = graph.class_key()?;

    // Find field reads feeding the receiver.
    let mut fields: BTreeSet<String> = BTreeSet::new();
    for node in data_closure_one(graph, receiver, Direction::Backward) {
        if let Some(def) = graph.defining_action(node) {
            let d = graph.node(def);
            if matches!(d.kind, NodeKind::Action(ActionKind::AttributeRead)) {
                if let Some(field) = d.meta(meta::ATTR) {
                    // Only reads through `self`.
                    let through_self = graph
                        .receiver_of(def)
                        .is_some_and(|r| graph.params.first() == Some(&r));
                    if through_self {
                        fields.insert(field.to_string());
                    }
                }
            }
        }
    }
    if fields.is_empty() {
        return None;
    }

    // Field matching is by (qualified class, field name); same-named fields
    // of other classes never unify.
    for other in index.graphs_in_package_of(&graph.file) {
        if other.class_key().as_deref() != Some(class.as_str()) {
            continue;
        }
        for node in &other.nodes {
            if !matches!(node.kind, NodeKind::Action(ActionKind::AttributeWrite)) {
                continue;
            }
            let Some(field) = node.meta(meta::ATTR) else {
                continue;
            };
            if !fields.contains(field) {
                continue;
            }
            let through_self = other
                .receiver_of(node.id)
                .is_some_and(|r| other.params.first() == Some(&r));
            if !through_self {
                continue;
            }
            let values: BTreeSet<NodeId> = other.arguments_of(node.id).into_iter().collect();
            if values.is_empty() {
                continue;
            }
            if let Some(found) = classify_closure_interproc(
                index,
                &other.function_name,
                values.into_iter(),
                Direction::Backward,
                Scope::PackageBackwardReachable,
                catalog,
            ) {
                return Some(found);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apispec::SpecBundle;
    use crate::frontend::{parse_module, SourceFile};
    use crate::mugraph::{build_program, ParsedModule};
    use crate::stubtypes::annotate_program;

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

    fn site(index: &ProgramIndex, simple: &str, callee: &str) -> CallSiteRef {
        let graph = index
            .graphs
            .values()
            .find(|g| g.simple_name == simple)
            .unwrap();
        let call = graph
            .call_actions()
            .find(|n| n.meta(meta::CALLEE_NAME) == Some(callee))
            .unwrap_or_else(|| panic!("no call to {callee} in {simple}"));
        CallSiteRef::from_call(graph, call.id).unwrap()
    }

    #[test]
    fn fig4_strategy1_resolves_through_optional() {
        let index = fixture_program("lazy_field_client.py");
        let catalog = ServiceCatalog::builtin();
        let site = site(&index, "M1", "put_bucket_lifecycle");
        let r = strategy1(&site, &index, &catalog).expect("strategy 1 resolves");
        assert_eq!(r.service, "s3");
        assert_eq!(r.kind, ClientKind::Client);
        assert_eq!(r.strategy, Strategy::S1);
        assert_eq!(r.confidence, HIGH_CONFIDENCE);
    }

    #[test]
    fn fig5_strategy1_misses_but_strategy2_resolves_m3() {
        let index = fixture_program("resource_via_helper.py");
        let catalog = ServiceCatalog::builtin();
        let site = site(&index, "M3", "topic");
        assert!(
            strategy1(&site, &index, &catalog).is_none(),
            "receiver is Any"
        );
        let r = strategy2(&site, &index, &catalog, Scope::PackageBackwardReachable)
            .expect("strategy 2 resolves");
        assert_eq!(r.service, "sns");
        assert_eq!(r.kind, ClientKind::Resource);
        assert_eq!(r.confidence, HIGH_CONFIDENCE);
    }

    #[test]
    fn fig9_strategy2_resolves_get_object() {
        let index = fixture_program("client_parameter.py");
        let catalog = ServiceCatalog::builtin();
        let site = site(&index, "load_df_from_s3", "get_object");
        assert!(strategy1(&site, &index, &catalog).is_none());
        let r = strategy2(&site, &index, &catalog, Scope::PackageBackwardReachable)
            .expect("strategy 2 resolves");
        assert_eq!(r.service, "s3");
        assert_eq!(r.kind, ClientKind::Client);
        assert_eq!(r.strategy, Strategy::S2);
    }

    #[test]
    fn fig16_needs_strategy3() {
        let index = fixture_program("kwargs_client.py");
        let catalog = ServiceCatalog::builtin();
        let specs = SpecBundle::builtin();
        let site = site(&index, "describe_snapshots", "describe_snapshots");

        assert!(strategy1(&site, &index, &catalog).is_none());
        assert!(strategy2(&site, &index, &catalog, Scope::PackageBackwardReachable).is_none());

        let hc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::hc());
        assert!(hc.is_none(), "high confidence yields nothing");

        let mc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::mc())
            .expect("mixed confidence falls through to strategy 3");
        assert_eq!(mc.strategy, Strategy::S3);
        assert_eq!(mc.service, "ec2");
        assert_eq!(mc.kind, ClientKind::Unknown);
        assert_eq!(mc.confidence, LOW_CONFIDENCE);
    }

    #[test]
    fn strategy3_ignores_unknown_names() {
        let index = fixture_program("batch_noncompliant.py");
        let specs = SpecBundle::builtin();
        // print is not an API name in any specification.
        let file = SourceFile::new("p.py", "def f():\n    print(\"x\")\n");
        let ast = parse_module(&file).unwrap();
        let mut local = build_program(&[ParsedModule {
            source: file,
            ast,
            package: None,
        }]);
        annotate_program(&mut local, &ServiceCatalog::builtin());
        let s = site(&local, "f", "print");
        assert!(strategy3(&s, &specs).is_none());

        let batch_site = site(&index, "noncompliant", "send_message_batch");
        let r = strategy3(&batch_site, &specs).expect("batch API name matches");
        assert_eq!(r.service, "sqs");
        assert_eq!(r.confidence, LOW_CONFIDENCE);
    }

    #[test]
    fn hc_and_mc_agree_when_strategy1_fires() {
        let index = fixture_program("lazy_field_client.py");
        let catalog = ServiceCatalog::builtin();
        let specs = SpecBundle::builtin();
        let site = site(&index, "M1", "put_bucket_lifecycle");
        let hc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::hc()).unwrap();
        let mc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::mc()).unwrap();
        assert_eq!(hc, mc);
        assert_eq!(hc.strategy, Strategy::S1);
    }

    #[test]
    fn strategy_ordering_is_observable() {
        // A site strategy 1 can resolve never reports S2 or S3.
        let index = fixture_program("batch_noncompliant.py");
        let catalog = ServiceCatalog::builtin();
        let specs = SpecBundle::builtin();
        let site = site(&index, "noncompliant", "send_message_batch");
        let r = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::mc()).unwrap();
        assert_eq!(
            r.strategy,
            Strategy::S1,
            "local constructor types the receiver"
        );
        assert_eq!(r.service, "sqs");
    }

    /// Over the whole fixture corpus: when both dataflow-free typing and
    /// dataflow tracking resolve a site, they agree on the service; and a
    /// mixed-confidence resolution implies any high-confidence resolution
    /// of the same site names the same service at the same confidence.
    #[test]
    fn strategies_agree_and_mc_dominates_hc() {
        let catalog = ServiceCatalog::builtin();
        let specs = SpecBundle::builtin();
        for fixture in [
            "lazy_field_client.py",
            "resource_via_helper.py",
            "client_parameter.py",
            "pagination_noncompliant.py",
            "pagination_compliant.py",
            "batch_noncompliant.py",
            "batch_compliant.py",
            "kwargs_client.py",
        ] {
            let index = fixture_program(fixture);
            for graph in index.graphs.values() {
                for call in graph.call_actions() {
                    let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                        continue;
                    };
                    let s1 = strategy1(&site, &index, &catalog);
                    let s2 = strategy2(&site, &index, &catalog, Scope::PackageBackwardReachable);
                    if let (Some(a), Some(b)) = (&s1, &s2) {
                        assert_eq!(
                            a.service, b.service,
                            "{fixture}: strategies disagree at {site:?}"
                        );
                    }
                    let hc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::hc());
                    let mc = resolve_client(&site, &index, &catalog, &specs, ResolverConfig::mc());
                    if let Some(h) = &hc {
                        let m = mc.as_ref().expect("HC resolved but MC did not");
                        assert_eq!(h.service, m.service);
                        assert_eq!(h.confidence, m.confidence);
                    }
                }
            }
        }
    }

    #[test]
    fn confidence_invariant_holds() {
        let index = fixture_program("kwargs_client.py");
        let catalog = ServiceCatalog::builtin();
        let specs = SpecBundle::builtin();
        for graph in index.graphs.values() {
            for call in graph.call_actions() {
                let Some(site) = CallSiteRef::from_call(graph, call.id) else {
                    continue;
                };
                if let Some(r) =
                    resolve_client(&site, &index, &catalog, &specs, ResolverConfig::mc())
                {
                    match r.strategy {
                        Strategy::S1 | Strategy::S2 => assert_eq!(r.confidence, HIGH_CONFIDENCE),
                        Strategy::S3 => assert_eq!(r.confidence, LOW_CONFIDENCE),
                    }
                }
            }
        }
    }
}
