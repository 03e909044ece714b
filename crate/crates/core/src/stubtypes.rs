//! Type annotation from a built-in SDK knowledge base plus local
//! propagation.
//!
//! This is the first resolution layer: high precision, low recall. It
//! recognizes the documented client construction idioms
//! (`boto3.client("s3")`, `boto3.resource("s3")`, `session.client(...)`,
//! `boto3.session.Session().client(...)`, `<resource>.meta.client`),
//! propagates through copies, phi merges, intra-file bare-name calls and
//! `self.<field>` assignments, and types literals. Parameters without
//! annotations stay `Any`; closing that gap is the dataflow layer's job.
//!
//! Types are flat strings. `Any` is the designated unknown. `Optional[T]`
//! arises exactly from merging `None` with `T`.

use std::collections::BTreeMap;

use crate::mugraph::{meta, ActionKind, EdgeKind, MuGraph, NodeId, NodeKind, ProgramIndex};

pub const ANY: &str = "Any";
pub const NONE_TYPE: &str = "None";

/// Known services and their stub type names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceCatalog {
    services: BTreeMap<String, ServiceTypes>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceTypes {
    pub client_type: String,
    pub resource_type: Option<String>,
}

impl ServiceCatalog {
    /// The services appearing in the supported rule set, plus `forecast`.
    pub fn builtin() -> Self {
        let mut services = BTreeMap::new();
        let mut add = |id: &str, client: &str, resource: Option<&str>| {
            services.insert(
                id.to_string(),
                ServiceTypes {
                    client_type: client.to_string(),
                    resource_type: resource.map(str::to_string),
                },
            );
        };
        add("s3", "S3Client", Some("S3ServiceResource"));
        add("sqs", "SQSClient", Some("SQSServiceResource"));
        add("sns", "SNSClient", Some("SNSServiceResource"));
        add(
            "dynamodb",
            "DynamoDBClient",
            Some("DynamoDBServiceResource"),
        );
        add("ec2", "EC2Client", Some("EC2ServiceResource"));
        add("kinesis", "KinesisClient", None);
        add("forecast", "ForecastClient", None);
        ServiceCatalog { services }
    }

    pub fn get(&self, service: &str) -> Option<&ServiceTypes> {
        self.services.get(service)
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &str> {
        self.services.keys().map(String::as_str)
    }

    /// Extend or override entries, e.g. from a user-supplied spec bundle.
    pub fn extend(&mut self, overrides: impl IntoIterator<Item = (String, ServiceTypes)>) {
        for (id, types) in overrides {
            self.services.insert(id.to_lowercase(), types);
        }
    }

    /// Service and flavor for a type name, ignoring an `Optional[..]` wrapper.
    pub fn classify_type(&self, type_string: &str) -> Option<(&str, ClientFlavor)> {
        let bare = strip_optional(type_string);
        for (id, types) in &self.services {
            if types.client_type == bare {
                return Some((id, ClientFlavor::Client));
            }
            if types.resource_type.as_deref() == Some(bare) {
                return Some((id, ClientFlavor::Resource));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientFlavor {
    Client,
    Resource,
}

/// Outcome of matching a type string against one service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientTypeMatch {
    YesClient,
    YesResource,
    No,
}

/// Match a flattened type against a service's known client flavors.
/// `Optional[T]` is treated as `T`; `Any` never matches.
pub fn is_client_type(
    type_string: &str,
    service: &str,
    catalog: &ServiceCatalog,
) -> ClientTypeMatch {
    let bare = strip_optional(type_string);
    if bare == ANY {
        return ClientTypeMatch::No;
    }
    match catalog.get(service) {
        Some(types) if types.client_type == bare => ClientTypeMatch::YesClient,
        Some(types) if types.resource_type.as_deref() == Some(bare) => ClientTypeMatch::YesResource,
        _ => ClientTypeMatch::No,
    }
}

pub fn strip_optional(type_string: &str) -> &str {
    type_string
        .strip_prefix("Optional[")
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(type_string)
}

/// Fill `type_string` on every data node of every graph. Returns diagnostic
/// notes (e.g. construction calls naming services outside the catalog).
/// Annotation runs to a fixpoint and is idempotent.
pub fn annotate_program(index: &mut ProgramIndex, catalog: &ServiceCatalog) -> Vec<String> {
    // A set, because the fixpoint revisits call sites across rounds.
    let mut notes = std::collections::BTreeSet::new();

    // Per-file fixpoint: types never cross file boundaries here.
    let files: Vec<String> = index.files.keys().cloned().collect();
    for file in files {
        annotate_file(index, catalog, &file, &mut notes);
    }

    // Everything still unresolved is Any.
    for graph in index.graphs.values_mut() {
        for node in &mut graph.nodes {
            if node.kind.is_data() && node.type_string.is_none() {
                node.type_string = Some(ANY.to_string());
            }
        }
    }
    notes.into_iter().collect()
}

fn annotate_file(
    index: &mut ProgramIndex,
    catalog: &ServiceCatalog,
    file: &str,
    notes: &mut std::collections::BTreeSet<String>,
) {
    let graph_names: Vec<String> = index
        .graphs
        .values()
        .filter(|g| g.file == file)
        .map(|g| g.function_name.clone())
        .collect();

    // name -> graphs in this file defining a function with that simple name
    let mut by_simple_name: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in &graph_names {
        let g = &index.graphs[name];
        by_simple_name
            .entry(g.simple_name.clone())
            .or_default()
            .push(name.clone());
    }

    // Seed: parameters, literals, display constructors.
    for name in &graph_names {
        let graph = index.graphs.get_mut(name).unwrap();
        seed_types(graph);
    }

    // Iterate propagation until stable. The lattice
    // (unset < concrete < Optional < Any) only widens, so this terminates.
    for _round in 0..64 {
        let mut changed = false;

        for name in &graph_names {
            let graph = index.graphs.get_mut(name).unwrap();
            changed |= propagate_local(graph, catalog, notes);
        }

        // Intra-file return types into bare-name call sites. Calls through
        // an explicit receiver are left to the dataflow layer.
        let mut return_types: BTreeMap<String, String> = BTreeMap::new();
        for (simple, names) in &by_simple_name {
            let mut merged: Option<String> = None;
            let mut all_known = true;
            for name in names {
                let g = &index.graphs[name];
                match graph_return_type(g) {
                    Some(t) => merged = Some(merge_opt(merged, t)),
                    None => all_known = false,
                }
            }
            if all_known {
                if let Some(t) = merged {
                    return_types.insert(simple.clone(), t);
                }
            }
        }
        for name in &graph_names {
            let graph = index.graphs.get_mut(name).unwrap();
            changed |= apply_return_types(graph, &return_types);
        }

        // Class fields: merge every `self.<field> = value` across methods,
        // then type `self.<field>` reads.
        let field_types = collect_field_types(index, &graph_names);
        for name in &graph_names {
            let graph = index.graphs.get_mut(name).unwrap();
            changed |= apply_field_types(graph, &field_types);
        }

        if !changed {
            break;
        }
    }
}

fn seed_types(graph: &mut MuGraph) {
    // Parameters: annotation text or Any; `self` gets the class name.
    let class = graph.class_name.clone();
    for (i, &p) in graph.params.iter().enumerate() {
        let node = &mut graph.nodes[p.index()];
        if node.type_string.is_some() {
            continue;
        }
        let name = graph.param_names[i].as_str();
        let ann = graph.param_annotations[i].clone();
        node.type_string = Some(match (name, ann, &class) {
            (_, Some(t), _) => t,
            ("self", None, Some(c)) if i == 0 => c.clone(),
            _ => ANY.to_string(),
        });
    }

    for id in 0..graph.nodes.len() {
        let node = &graph.nodes[id];
        if !node.kind.is_data() || node.type_string.is_some() {
            continue;
        }
        if let Some(kind) = node.meta(meta::CONST_KIND) {
            let t = match kind {
                "int" => "int",
                "float" => "float",
                "str" | "fstr" => "str",
                "bool" => "bool",
                "none" => NONE_TYPE,
                "ellipsis" => "ellipsis",
                _ => ANY,
            };
            graph.nodes[id].type_string = Some(t.to_string());
        } else if let Some(ann) = node.metadata.get("annotation") {
            let ann = ann.clone();
            graph.nodes[id].type_string = Some(ann);
        }
    }

    // Display literals type their defined temp.
    for id in graph.node_ids().collect::<Vec<_>>() {
        let node = graph.node(id);
        if !matches!(node.kind, NodeKind::Action(ActionKind::ConstLoad)) {
            continue;
        }
        let t = match node.meta(meta::CONSTRUCT) {
            Some("dict-display") => "dict",
            Some("list-display") => "list",
            Some("tuple-display") => "tuple",
            Some("set-display") => "set",
            _ => continue,
        };
        if let Some(defined) = graph.defined_node(id) {
            let slot = &mut graph.nodes[defined.index()].type_string;
            if slot.is_none() {
                *slot = Some(t.to_string());
            }
        }
    }
}

/// One round of intra-graph propagation; true if anything changed.
fn propagate_local(
    graph: &mut MuGraph,
    catalog: &ServiceCatalog,
    notes: &mut std::collections::BTreeSet<String>,
) -> bool {
    let mut changed = false;
    for id in graph.node_ids().collect::<Vec<_>>() {
        let node = graph.node(id);
        let new_type: Option<(NodeId, String)> = match &node.kind {
            NodeKind::Action(ActionKind::Call) => constructor_type(graph, id, catalog, notes)
                .zip(graph.defined_node(id))
                .map(|(t, d)| (d, t)),
            NodeKind::Action(ActionKind::ConstLoad) => {
                // Copy propagation through plain value moves.
                if node.meta(meta::CONSTRUCT).is_some() {
                    None
                } else {
                    let args = graph.arguments_of(id);
                    match (args.as_slice(), graph.defined_node(id)) {
                        ([src], Some(dst)) => {
                            graph.node(*src).type_string.clone().map(|t| (dst, t))
                        }
                        _ => None,
                    }
                }
            }
            NodeKind::Action(ActionKind::Phi) => {
                let args = graph.arguments_of(id);
                let mut merged: Option<String> = None;
                let mut all_known = true;
                for a in &args {
                    match &graph.node(*a).type_string {
                        Some(t) => merged = Some(merge_opt(merged, t.clone())),
                        None => all_known = false,
                    }
                }
                if all_known {
                    merged.zip(graph.defined_node(id)).map(|(t, d)| (d, t))
                } else {
                    None
                }
            }
            NodeKind::Action(ActionKind::AttributeRead) => attribute_read_type(graph, id, catalog)
                .zip(graph.defined_node(id))
                .map(|(t, d)| (d, t)),
            NodeKind::Action(ActionKind::Compare(_)) => {
                graph.defined_node(id).map(|d| (d, "bool".to_string()))
            }
            _ => None,
        };
        if let Some((dst, t)) = new_type {
            changed |= set_type(graph, dst, t);
        }
    }
    changed
}

/// Widening type assignment: unset adopts, Any stays, concrete types merge.
fn set_type(graph: &mut MuGraph, id: NodeId, t: String) -> bool {
    let slot = &mut graph.nodes[id.index()].type_string;
    match slot {
        None => {
            *slot = Some(t);
            true
        }
        Some(current) if *current == t => false,
        Some(current) => {
            let merged = merge(current.clone(), t);
            if *current == merged {
                false
            } else {
                *slot = Some(merged);
                true
            }
        }
    }
}

/// The merge lattice used for phi nodes and field types:
/// T+T = T; None+T = Optional[T]; Any absorbs; unrelated types give Any.
pub fn merge(a: String, b: String) -> String {
    if a == b {
        return a;
    }
    if a == ANY || b == ANY {
        return ANY.to_string();
    }
    if a == NONE_TYPE {
        return wrap_optional(&b);
    }
    if b == NONE_TYPE {
        return wrap_optional(&a);
    }
    if strip_optional(&a) == strip_optional(&b) {
        // Optional[T] + T
        return wrap_optional(strip_optional(&a));
    }
    ANY.to_string()
}

fn merge_opt(acc: Option<String>, t: String) -> String {
    match acc {
        None => t,
        Some(a) => merge(a, t),
    }
}

fn wrap_optional(t: &str) -> String {
    if t == NONE_TYPE || t == ANY {
        return t.to_string();
    }
    if t.starts_with("Optional[") {
        t.to_string()
    } else {
        format!("Optional[{t}]")
    }
}

/// Recognize the client construction idioms on one call action and return
/// the constructed type.
fn constructor_type(
    graph: &MuGraph,
    call: NodeId,
    catalog: &ServiceCatalog,
    notes: &mut std::collections::BTreeSet<String>,
) -> Option<String> {
    let node = graph.node(call);
    let path = node
        .meta(meta::CALLEE_PATH)
        .unwrap_or_default()
        .to_lowercase();
    let callee = node.meta(meta::CALLEE_NAME).unwrap_or_default();

    // boto3.session.Session() / boto3.Session()
    if path == "boto3.session.session" || path == "boto3.session" && callee == "Session" {
        return Some("Session".to_string());
    }
    if path.ends_with(".session") && callee == "Session" && path.starts_with("boto3") {
        return Some("Session".to_string());
    }

    let flavor = match callee {
        "client" => ClientFlavor::Client,
        "resource" => ClientFlavor::Resource,
        _ => return None,
    };
    let from_boto3_module = path == format!("boto3.{callee}");
    let from_session = graph
        .receiver_of(call)
        .and_then(|r| graph.node(r).type_string.clone())
        .is_some_and(|t| t == "Session");
    if !from_boto3_module && !from_session {
        return None;
    }

    // Only constant string service arguments resolve; a variable name or a
    // missing first argument yields Any.
    let args = graph.arguments_of(call);
    let service = args.first().and_then(|a| {
        let n = graph.node(*a);
        n.meta(meta::CONST_STR).map(str::to_string)
    });
    let Some(service) = service else {
        return Some(ANY.to_string());
    };
    match catalog.get(&service) {
        Some(types) => match flavor {
            ClientFlavor::Client => Some(types.client_type.clone()),
            ClientFlavor::Resource => match &types.resource_type {
                Some(t) => Some(t.clone()),
                None => {
                    notes.insert(format!(
                        "{}: service `{service}` has no resource type",
                        graph.function_name
                    ));
                    Some(ANY.to_string())
                }
            },
        },
        None => {
            notes.insert(format!(
                "{}: unknown service id `{service}` in construction call",
                graph.function_name
            ));
            Some(ANY.to_string())
        }
    }
}

/// `<resource>.meta.client` re-derives the low-level client from a resource.
fn attribute_read_type(graph: &MuGraph, read: NodeId, catalog: &ServiceCatalog) -> Option<String> {
    let node = graph.node(read);
    let attr = node.meta(meta::ATTR)?;
    let recv = graph.receiver_of(read)?;
    let recv_type = graph.node(recv).type_string.clone()?;
    match attr {
        "meta" => {
            let (service, flavor) = catalog.classify_type(&recv_type)?;
            if flavor == ClientFlavor::Resource {
                Some(format!("ResourceMeta[{service}]"))
            } else {
                None
            }
        }
        "client" => {
            let service = recv_type.strip_prefix("ResourceMeta[")?.strip_suffix(']')?;
            catalog.get(service).map(|t| t.client_type.clone())
        }
        _ => None,
    }
}

/// Merged type of all values flowing into return actions; None while any
/// contributing node is still untyped, `"None"` for value-less functions.
fn graph_return_type(graph: &MuGraph) -> Option<String> {
    if graph.returns.is_empty() {
        return Some(NONE_TYPE.to_string());
    }
    let mut merged: Option<String> = None;
    for &r in &graph.returns {
        let t = graph.node(r).type_string.as_ref()?;
        merged = Some(merge_opt(merged, t.clone()));
    }
    merged
}

/// Type bare-name call sites from same-file function return types.
fn apply_return_types(graph: &mut MuGraph, return_types: &BTreeMap<String, String>) -> bool {
    let mut changed = false;
    for id in graph.node_ids().collect::<Vec<_>>() {
        let node = graph.node(id);
        if !node.kind.is_call() || graph.receiver_of(id).is_some() {
            continue;
        }
        let Some(callee) = node.meta(meta::CALLEE_NAME) else {
            continue;
        };
        // Bare-name call: the callee path is exactly the simple name.
        if node.meta(meta::CALLEE_PATH) != Some(callee) {
            continue;
        }
        let Some(t) = return_types.get(callee) else {
            continue;
        };
        if let Some(defined) = graph.defined_node(id) {
            changed |= set_type(graph, defined, t.clone());
        }
    }
    changed
}

/// (class name, field name) -> merged type of all assigned values.
fn collect_field_types(
    index: &ProgramIndex,
    graph_names: &[String],
) -> BTreeMap<(String, String), Option<String>> {
    let mut fields: BTreeMap<(String, String), Option<String>> = BTreeMap::new();
    for name in graph_names {
        let graph = &index.graphs[name];
        let Some(class) = &graph.class_name else {
            continue;
        };
        let Some(&self_param) = graph.params.first() else {
            continue;
        };
        if graph.param_names.first().map(String::as_str) != Some("self") {
            continue;
        }
        for id in graph.node_ids() {
            let node = graph.node(id);
            if !matches!(node.kind, NodeKind::Action(ActionKind::AttributeWrite)) {
                continue;
            }
            if graph.receiver_of(id) != Some(self_param) {
                continue;
            }
            let Some(field) = node.meta(meta::ATTR) else {
                continue;
            };
            let value_type = graph
                .edges_in(id)
                .find(|e| e.kind == EdgeKind::Parameter(0))
                .and_then(|e| graph.node(e.src).type_string.clone());
            let key = (class.clone(), field.to_string());

            match (fields.get(&key), value_type) {
                (_, None) => {
                    // An untyped write poisons the merge until it resolves.
                    fields.insert(key, None);
                }
                (Some(None), Some(_)) => {}
                (Some(Some(existing)), Some(t)) => {
                    let merged = merge(existing.clone(), t);
                    fields.insert(key, Some(merged));
                }
                (None, Some(t)) => {
                    fields.insert(key, Some(t));
                }
            }
        }
    }
    fields
}

/// Type `self.<field>` reads from the class-wide field map.
fn apply_field_types(
    graph: &mut MuGraph,
    fields: &BTreeMap<(String, String), Option<String>>,
) -> bool {
    let Some(class) = graph.class_name.clone() else {
        return false;
    };
    let Some(&self_param) = graph.params.first() else {
        return false;
    };
    if graph.param_names.first().map(String::as_str) != Some("self") {
        return false;
    }
    let mut changed = false;
    for id in graph.node_ids().collect::<Vec<_>>() {
        let node = graph.node(id);
        if !matches!(node.kind, NodeKind::Action(ActionKind::AttributeRead)) {
            continue;
        }
        if graph.receiver_of(id) != Some(self_param) {
            continue;
        }
        let Some(field) = node.meta(meta::ATTR) else {
            continue;
        };
        let Some(Some(t)) = fields.get(&(class.clone(), field.to_string())) else {
            continue;
        };
        let t = t.clone();
        if let Some(defined) = graph.defined_node(id) {
            changed |= set_type(graph, defined, t);
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_module, SourceFile};
    use crate::mugraph::{build_program, ParsedModule};

    fn annotated_fixture(name: &str) -> ProgramIndex {
        let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name);
        annotated_source(name, &std::fs::read_to_string(path).unwrap())
    }

    fn annotated_source(name: &str, src: &str) -> ProgramIndex {
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

    /// Type of SSA-version-latest binding of `var` inside function `simple`.
    fn type_of(index: &ProgramIndex, simple: &str, var: &str) -> String {
        let graph = index
            .graphs
            .values()
            .find(|g| g.simple_name == simple)
            .unwrap();
        let node = graph
            .nodes
            .iter()
            .rev()
            .find(|n| n.data_name() == Some(var) && !n.is_const())
            .unwrap_or_else(|| panic!("no data node {var} in {simple}"));
        node.type_string.clone().unwrap()
    }

    /// Type of the temp defined by a `self.<field>` read inside `simple`.
    fn field_read_type(index: &ProgramIndex, simple: &str, field: &str) -> String {
        let graph = index
            .graphs
            .values()
            .find(|g| g.simple_name == simple)
            .unwrap();
        let read = graph
            .nodes
            .iter()
            .find(|n| {
                matches!(n.kind, NodeKind::Action(ActionKind::AttributeRead))
                    && n.meta(meta::ATTR) == Some(field)
            })
            .unwrap_or_else(|| panic!("no read of {field} in {simple}"));
        let defined = graph.defined_node(read.id).unwrap();
        graph.node(defined).type_string.clone().unwrap()
    }

    #[test]
    fn fig4_field_read_is_optional_client() {
        let index = annotated_fixture("lazy_field_client.py");
        assert_eq!(type_of(&index, "M1", "client"), "Optional[S3Client]");
        assert_eq!(
            field_read_type(&index, "client", "_client"),
            "Optional[S3Client]"
        );
    }

    #[test]
    fn fig5_return_propagation_and_parameter_any() {
        let index = annotated_fixture("resource_via_helper.py");
        assert_eq!(type_of(&index, "M2", "client"), "SNSServiceResource");
        assert_eq!(type_of(&index, "M3", "client"), "Any");
    }

    #[test]
    fn fig9_return_propagation_and_parameter_any() {
        let index = annotated_fixture("client_parameter.py");
        assert_eq!(
            type_of(&index, "write_df_to_s3_location", "s3_client"),
            "S3Client"
        );
        assert_eq!(type_of(&index, "load_df_from_s3", "s3_client"), "Any");
    }

    #[test]
    fn fig16_stays_any_everywhere_that_matters() {
        let index = annotated_fixture("kwargs_client.py");
        assert_eq!(type_of(&index, "get_aws_client", "ec2_client"), "Any");
        assert_eq!(
            field_read_type(&index, "get_aws_client", "_boto3client"),
            "Any"
        );
        // The receiver of describe_snapshots is an untyped field read.
        let graph = index
            .graphs
            .values()
            .find(|g| g.simple_name == "describe_snapshots")
            .unwrap();
        let call = graph
            .call_actions()
            .find(|n| n.meta(meta::CALLEE_NAME) == Some("describe_snapshots"))
            .unwrap();
        let recv = graph.receiver_of(call.id).unwrap();
        assert_eq!(graph.node(recv).type_string.as_deref(), Some(ANY));
    }

    #[test]
    fn is_client_type_examples() {
        let catalog = ServiceCatalog::builtin();
        assert_eq!(
            is_client_type("Optional[S3Client]", "s3", &catalog),
            ClientTypeMatch::YesClient
        );
        assert_eq!(is_client_type("Any", "s3", &catalog), ClientTypeMatch::No);
        assert_eq!(
            is_client_type("SNSServiceResource", "sns", &catalog),
            ClientTypeMatch::YesResource
        );
        assert_eq!(
            is_client_type("S3Client", "sqs", &catalog),
            ClientTypeMatch::No
        );
    }

    #[test]
    fn construction_idioms() {
        let src = "import boto3\n\
                   a = boto3.client(\"s3\")\n\
                   b = boto3.resource(\"s3\")\n\
                   session = boto3.session.Session()\n\
                   c = session.client(\"sqs\")\n\
                   d = session.resource(\"sns\")\n\
                   e = b.meta.client\n";
        let index = annotated_source("idioms.py", src);
        assert_eq!(type_of(&index, "<script>", "a"), "S3Client");
        assert_eq!(type_of(&index, "<script>", "b"), "S3ServiceResource");
        assert_eq!(type_of(&index, "<script>", "session"), "Session");
        assert_eq!(type_of(&index, "<script>", "c"), "SQSClient");
        assert_eq!(type_of(&index, "<script>", "d"), "SNSServiceResource");
        assert_eq!(type_of(&index, "<script>", "e"), "S3Client");
    }

    #[test]
    fn variable_service_name_yields_any_with_note() {
        let src = "import boto3\nname = compute()\nc = boto3.client(name)\n";
        let file = SourceFile::new("var.py", src.to_string());
        let ast = parse_module(&file).unwrap();
        let mut index = build_program(&[ParsedModule {
            source: file,
            ast,
            package: None,
        }]);
        let notes = annotate_program(&mut index, &ServiceCatalog::builtin());
        assert_eq!(type_of(&index, "<script>", "c"), "Any");
        // Variable service names resolve to Any silently; unknown constant
        // ids produce a note.
        assert!(notes.is_empty());

        let src = "import boto3\nc = boto3.client(\"nosuchservice\")\n";
        let file = SourceFile::new("bad.py", src.to_string());
        let ast = parse_module(&file).unwrap();
        let mut index = build_program(&[ParsedModule {
            source: file,
            ast,
            package: None,
        }]);
        let notes = annotate_program(&mut index, &ServiceCatalog::builtin());
        assert_eq!(type_of(&index, "<script>", "c"), "Any");
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("nosuchservice"));
    }

    #[test]
    fn annotation_is_idempotent() {
        for fixture in [
            "lazy_field_client.py",
            "resource_via_helper.py",
            "client_parameter.py",
            "kwargs_client.py",
        ] {
            let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("tests/fixtures")
                .join(fixture);
            let src = std::fs::read_to_string(path).unwrap();
            let file = SourceFile::new(fixture, src);
            let ast = parse_module(&file).unwrap();
            let mut index = build_program(&[ParsedModule {
                source: file,
                ast,
                package: None,
            }]);
            let catalog = ServiceCatalog::builtin();
            annotate_program(&mut index, &catalog);
            let first = index.clone();
            annotate_program(&mut index, &catalog);
            assert_eq!(
                first, index,
                "{fixture}: annotate_program is not a fixpoint"
            );
        }
    }

    #[test]
    fn phi_of_none_and_client_is_optional() {
        let src =
            "import boto3\nif flag:\n    c = None\nelse:\n    c = boto3.client(\"s3\")\nuse(c)\n";
        let index = annotated_source("phi.py", src);
        assert_eq!(type_of(&index, "<script>", "c"), "Optional[S3Client]");
    }

    #[test]
    fn phi_of_distinct_types_is_any() {
        let src = "import boto3\nif flag:\n    c = boto3.client(\"s3\")\nelse:\n    c = boto3.client(\"sqs\")\nuse(c)\n";
        let index = annotated_source("phi2.py", src);
        assert_eq!(type_of(&index, "<script>", "c"), "Any");
    }

    #[test]
    fn annotated_parameters_take_their_annotation() {
        let src = "def f(client: S3Client, n: int):\n    return client\n";
        let index = annotated_source("ann.py", src);
        assert_eq!(type_of(&index, "f", "client"), "S3Client");
        assert_eq!(type_of(&index, "f", "n"), "int");
    }
}
