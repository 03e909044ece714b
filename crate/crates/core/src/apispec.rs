//! External API specifications that parameterize the rules.
//!
//! A specification attaches one trait (pagination, batch, deprecated,
//! waiter, put-records-like, paginator availability) to one service API.
//! Pagination entries use the production JSON shape:
//!
//! ```json
//! {
//!   "expectedPaginationMethods": ["IsTruncated", "NextToken"],
//!   "paginatedMethod": "list_dataset_groups",
//!   "resultKeys": ["DatasetGroups"],
//!   "serviceId": "forecast"
//! }
//! ```
//!
//! Other traits carry an explicit `"trait"` discriminator plus an `"api"`
//! field. A bundle file is either a single entry, an array of entries, or
//! an object with `"specs"` and optional `"services"` catalog overrides.
//! User entries are merged over the built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::stubtypes::{ServiceCatalog, ServiceTypes};

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("{path}: {pointer}: {message}")]
    Format {
        path: String,
        pointer: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "trait", rename_all = "camelCase")]
pub enum ApiTrait {
    Pagination {
        expected_pagination_methods: Vec<String>,
        result_keys: Vec<String>,
    },
    Batch {
        failure_key: String,
    },
    Deprecated {
        replacement: Option<String>,
    },
    Waiter {
        waiter_name: String,
    },
    PutRecordsLike {
        failure_count_key: String,
    },
    PaginatorAvailable {
        available: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraitKind {
    Pagination,
    Batch,
    Deprecated,
    Waiter,
    PutRecordsLike,
    PaginatorAvailable,
}

impl ApiTrait {
    pub fn kind(&self) -> TraitKind {
        match self {
            ApiTrait::Pagination { .. } => TraitKind::Pagination,
            ApiTrait::Batch { .. } => TraitKind::Batch,
            ApiTrait::Deprecated { .. } => TraitKind::Deprecated,
            ApiTrait::Waiter { .. } => TraitKind::Waiter,
            ApiTrait::PutRecordsLike { .. } => TraitKind::PutRecordsLike,
            ApiTrait::PaginatorAvailable { .. } => TraitKind::PaginatorAvailable,
        }
    }
}

/// One service API with one trait.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ApiSpec {
    pub service_id: String,
    pub api: String,
    #[serde(flatten)]
    pub api_trait: ApiTrait,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learn_more_url: Option<String>,
}

/// A loaded set of specifications plus the effective service catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecBundle {
    /// All effective specs: defaults merged under user entries.
    pub specs: Vec<ApiSpec>,
    /// Entries loaded from the user file only.
    pub user_specs: Vec<ApiSpec>,
    pub services: ServiceCatalog,
    index: BTreeMap<String, Vec<usize>>,
    warnings: Vec<String>,
}

impl SpecBundle {
    /// Built-in defaults covering the supported rule set.
    pub fn builtin() -> SpecBundle {
        SpecBundle::assemble(Vec::new(), ServiceCatalog::builtin(), Vec::new())
    }

    fn assemble(
        user_specs: Vec<ApiSpec>,
        services: ServiceCatalog,
        warnings: Vec<String>,
    ) -> SpecBundle {
        let mut specs = default_specs();
        // A user entry overrides a default with the same identity.
        for user in &user_specs {
            specs.retain(|s| {
                !(s.service_id == user.service_id
                    && s.api == user.api
                    && s.api_trait.kind() == user.api_trait.kind())
            });
        }
        specs.extend(user_specs.iter().cloned());
        let mut index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, spec) in specs.iter().enumerate() {
            index.entry(spec.api.clone()).or_default().push(i);
        }
        SpecBundle {
            specs,
            user_specs,
            services,
            index,
            warnings,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// All entries for an API name, optionally narrowed to one trait kind.
    pub fn lookup(&self, api_name: &str, kind: Option<TraitKind>) -> Vec<&ApiSpec> {
        self.index
            .get(api_name)
            .map(|ids| {
                ids.iter()
                    .map(|&i| &self.specs[i])
                    .filter(|s| kind.is_none_or(|k| s.api_trait.kind() == k))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn entries_with(&self, kind: TraitKind) -> impl Iterator<Item = &ApiSpec> {
        self.specs
            .iter()
            .filter(move |s| s.api_trait.kind() == kind)
    }

    /// Serialize the user-provided entries back to JSON.
    pub fn serialize_user_specs(&self) -> String {
        let values: Vec<Value> = self.user_specs.iter().map(spec_to_value).collect();
        serde_json::to_string_pretty(&values).expect("specs serialize")
    }
}

/// Render one spec in the external JSON shape (pagination entries keep the
/// production field names).
fn spec_to_value(spec: &ApiSpec) -> Value {
    let mut obj = Map::new();
    obj.insert("serviceId".to_string(), json!(spec.service_id));
    match &spec.api_trait {
        ApiTrait::Pagination {
            expected_pagination_methods,
            result_keys,
        } => {
            obj.insert(
                "expectedPaginationMethods".to_string(),
                json!(expected_pagination_methods),
            );
            obj.insert("paginatedMethod".to_string(), json!(spec.api));
            obj.insert("resultKeys".to_string(), json!(result_keys));
        }
        ApiTrait::Batch { failure_key } => {
            obj.insert("trait".to_string(), json!("batch"));
            obj.insert("api".to_string(), json!(spec.api));
            obj.insert("failureKey".to_string(), json!(failure_key));
        }
        ApiTrait::Deprecated { replacement } => {
            obj.insert("trait".to_string(), json!("deprecated"));
            obj.insert("api".to_string(), json!(spec.api));
            if let Some(r) = replacement {
                obj.insert("replacement".to_string(), json!(r));
            }
        }
        ApiTrait::Waiter { waiter_name } => {
            obj.insert("trait".to_string(), json!("waiter"));
            obj.insert("api".to_string(), json!(spec.api));
            obj.insert("waiterName".to_string(), json!(waiter_name));
        }
        ApiTrait::PutRecordsLike { failure_count_key } => {
            obj.insert("trait".to_string(), json!("putRecordsLike"));
            obj.insert("api".to_string(), json!(spec.api));
            obj.insert("failureCountKey".to_string(), json!(failure_count_key));
        }
        ApiTrait::PaginatorAvailable { available } => {
            obj.insert("trait".to_string(), json!("paginatorAvailable"));
            obj.insert("api".to_string(), json!(spec.api));
            obj.insert("available".to_string(), json!(available));
        }
    }
    if let Some(url) = &spec.learn_more_url {
        obj.insert("learnMoreUrl".to_string(), json!(url));
    }
    Value::Object(obj)
}

pub fn load_specs(path: &Path) -> Result<SpecBundle, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_specs(&path.display().to_string(), &text)
}

/// Parse a bundle from JSON text. The `path` only labels errors.
pub fn parse_specs(path: &str, text: &str) -> Result<SpecBundle, SpecError> {
    let root: Value = serde_json::from_str(text).map_err(|e| SpecError::Format {
        path: path.to_string(),
        pointer: String::new(),
        message: e.to_string(),
    })?;

    let mut warnings = Vec::new();
    let mut services = ServiceCatalog::builtin();

    let entries: Vec<(String, Value)> = match root {
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("/{i}"), v))
            .collect(),
        Value::Object(mut obj) => {
            if obj.contains_key("specs") {
                if let Some(Value::Object(service_map)) = obj.remove("services") {
                    parse_service_overrides(path, service_map, &mut services, &mut warnings)?;
                }
                match obj.remove("specs") {
                    Some(Value::Array(items)) => items
                        .into_iter()
                        .enumerate()
                        .map(|(i, v)| (format!("/specs/{i}"), v))
                        .collect(),
                    _ => {
                        return Err(SpecError::Format {
                            path: path.to_string(),
                            pointer: "/specs".to_string(),
                            message: "`specs` must be an array".to_string(),
                        })
                    }
                }
            } else {
                // A single bare entry.
                vec![(String::new(), Value::Object(obj))]
            }
        }
        other => {
            return Err(SpecError::Format {
                path: path.to_string(),
                pointer: String::new(),
                message: format!("expected an object or array, found {}", type_name(&other)),
            })
        }
    };

    let mut user_specs = Vec::new();
    for (pointer, value) in entries {
        user_specs.push(parse_entry(path, &pointer, value, &mut warnings)?);
    }
    Ok(SpecBundle::assemble(user_specs, services, warnings))
}

fn parse_service_overrides(
    path: &str,
    map: Map<String, Value>,
    services: &mut ServiceCatalog,
    warnings: &mut Vec<String>,
) -> Result<(), SpecError> {
    let mut overrides = Vec::new();
    for (id, v) in map {
        let pointer = format!("/services/{id}");
        let obj = v.as_object().ok_or_else(|| SpecError::Format {
            path: path.to_string(),
            pointer: pointer.clone(),
            message: "service override must be an object".to_string(),
        })?;
        let client_type = require_str(path, &pointer, obj, "clientType")?;
        let resource_type = obj
            .get("resourceType")
            .and_then(Value::as_str)
            .map(str::to_string);
        for key in obj.keys() {
            if key != "clientType" && key != "resourceType" {
                warnings.push(format!("{pointer}: ignoring unknown field `{key}`"));
            }
        }
        overrides.push((
            id,
            ServiceTypes {
                client_type,
                resource_type,
            },
        ));
    }
    services.extend(overrides);
    Ok(())
}

fn parse_entry(
    path: &str,
    pointer: &str,
    value: Value,
    warnings: &mut Vec<String>,
) -> Result<ApiSpec, SpecError> {
    let obj = value.as_object().ok_or_else(|| SpecError::Format {
        path: path.to_string(),
        pointer: pointer.to_string(),
        message: "specification entry must be an object".to_string(),
    })?;

    let service_id = require_str(path, pointer, obj, "serviceId")?;
    let learn_more_url = obj
        .get("learnMoreUrl")
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut known: Vec<&str> = vec!["serviceId", "learnMoreUrl"];
    let (api, api_trait) = if obj.contains_key("paginatedMethod") {
        known.extend(["paginatedMethod", "expectedPaginationMethods", "resultKeys"]);
        let api = require_str(path, pointer, obj, "paginatedMethod")?;
        let methods = require_str_array(path, pointer, obj, "expectedPaginationMethods")?;
        if methods.is_empty() {
            return Err(SpecError::Format {
                path: path.to_string(),
                pointer: format!("{pointer}/expectedPaginationMethods"),
                message: "pagination entries need at least one expected method".to_string(),
            });
        }
        let result_keys = optional_str_array(path, pointer, obj, "resultKeys")?;
        (
            api,
            ApiTrait::Pagination {
                expected_pagination_methods: methods,
                result_keys,
            },
        )
    } else {
        known.extend(["trait", "api"]);
        let kind = require_str(path, pointer, obj, "trait")?;
        let api = require_str(path, pointer, obj, "api")?;
        let parsed = match kind.as_str() {
            "pagination" => {
                known.extend(["expectedPaginationMethods", "resultKeys"]);
                let methods = require_str_array(path, pointer, obj, "expectedPaginationMethods")?;
                if methods.is_empty() {
                    return Err(SpecError::Format {
                        path: path.to_string(),
                        pointer: format!("{pointer}/expectedPaginationMethods"),
                        message: "pagination entries need at least one expected method".to_string(),
                    });
                }
                let result_keys = optional_str_array(path, pointer, obj, "resultKeys")?;
                ApiTrait::Pagination {
                    expected_pagination_methods: methods,
                    result_keys,
                }
            }
            "batch" => {
                known.push("failureKey");
                ApiTrait::Batch {
                    failure_key: require_str(path, pointer, obj, "failureKey")?,
                }
            }
            "deprecated" => {
                known.push("replacement");
                ApiTrait::Deprecated {
                    replacement: obj
                        .get("replacement")
                        .and_then(Value::as_str)
                        .map(str::to_string),
                }
            }
            "waiter" => {
                known.push("waiterName");
                ApiTrait::Waiter {
                    waiter_name: require_str(path, pointer, obj, "waiterName")?,
                }
            }
            "putRecordsLike" => {
                known.push("failureCountKey");
                ApiTrait::PutRecordsLike {
                    failure_count_key: require_str(path, pointer, obj, "failureCountKey")?,
                }
            }
            "paginatorAvailable" => {
                known.push("available");
                ApiTrait::PaginatorAvailable {
                    available: obj
                        .get("available")
                        .and_then(Value::as_bool)
                        .unwrap_or(true),
                }
            }
            other => {
                return Err(SpecError::Format {
                    path: path.to_string(),
                    pointer: format!("{pointer}/trait"),
                    message: format!("unknown trait `{other}`"),
                })
            }
        };
        (api, parsed)
    };

    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            warnings.push(format!("{pointer}: ignoring unknown field `{key}`"));
        }
    }

    Ok(ApiSpec {
        service_id,
        api,
        api_trait,
        learn_more_url,
    })
}

fn require_str(
    path: &str,
    pointer: &str,
    obj: &Map<String, Value>,
    key: &str,
) -> Result<String, SpecError> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| SpecError::Format {
            path: path.to_string(),
            pointer: format!("{pointer}/{key}"),
            message: format!("missing or non-string `{key}`"),
        })
}

fn require_str_array(
    path: &str,
    pointer: &str,
    obj: &Map<String, Value>,
    key: &str,
) -> Result<Vec<String>, SpecError> {
    let value = obj.get(key).ok_or_else(|| SpecError::Format {
        path: path.to_string(),
        pointer: format!("{pointer}/{key}"),
        message: format!("missing `{key}`"),
    })?;
    str_array(path, pointer, key, value)
}

fn optional_str_array(
    path: &str,
    pointer: &str,
    obj: &Map<String, Value>,
    key: &str,
) -> Result<Vec<String>, SpecError> {
    match obj.get(key) {
        Some(v) => str_array(path, pointer, key, v),
        None => Ok(Vec::new()),
    }
}

fn str_array(
    path: &str,
    pointer: &str,
    key: &str,
    value: &Value,
) -> Result<Vec<String>, SpecError> {
    value
        .as_array()
        .and_then(|items| {
            items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect()
        })
        .ok_or_else(|| SpecError::Format {
            path: path.to_string(),
            pointer: format!("{pointer}/{key}"),
            message: format!("`{key}` must be an array of strings"),
        })
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

const BOTO_DOCS: &str =
    "https://boto3.amazonaws.com/v1/documentation/api/latest/reference/services";

/// The hand-curated default bundle: every API the supported rules need.
/// The deprecated entries are synthetic placeholders for testing; the
/// production system derives its deprecation list from SDK API models.
fn default_specs() -> Vec<ApiSpec> {
    fn spec(service: &str, api: &str, api_trait: ApiTrait) -> ApiSpec {
        ApiSpec {
            service_id: service.to_string(),
            api: api.to_string(),
            api_trait,
            learn_more_url: Some(format!("{BOTO_DOCS}/{service}.html#{api}")),
        }
    }
    vec![
        spec(
            "dynamodb",
            "scan",
            ApiTrait::Pagination {
                expected_pagination_methods: vec!["LastEvaluatedKey".to_string()],
                result_keys: vec!["Items".to_string()],
            },
        ),
        spec(
            "dynamodb",
            "query",
            ApiTrait::Pagination {
                expected_pagination_methods: vec!["LastEvaluatedKey".to_string()],
                result_keys: vec!["Items".to_string()],
            },
        ),
        spec(
            "s3",
            "list_objects",
            ApiTrait::Pagination {
                expected_pagination_methods: vec![
                    "IsTruncated".to_string(),
                    "NextMarker".to_string(),
                ],
                result_keys: vec!["Contents".to_string()],
            },
        ),
        spec(
            "forecast",
            "list_dataset_groups",
            ApiTrait::Pagination {
                expected_pagination_methods: vec![
                    "IsTruncated".to_string(),
                    "NextToken".to_string(),
                ],
                result_keys: vec!["DatasetGroups".to_string()],
            },
        ),
        spec(
            "dynamodb",
            "put_item",
            ApiTrait::PaginatorAvailable { available: false },
        ),
        spec(
            "sqs",
            "send_message_batch",
            ApiTrait::Batch {
                failure_key: "Failed".to_string(),
            },
        ),
        spec(
            "dynamodb",
            "batch_write_item",
            ApiTrait::Batch {
                failure_key: "UnprocessedItems".to_string(),
            },
        ),
        spec(
            "kinesis",
            "put_records",
            ApiTrait::PutRecordsLike {
                failure_count_key: "FailedRecordCount".to_string(),
            },
        ),
        // Synthetic deprecation placeholders, modeled on the lifecycle APIs.
        spec(
            "s3",
            "put_bucket_lifecycle",
            ApiTrait::Deprecated {
                replacement: Some("put_bucket_lifecycle_configuration".to_string()),
            },
        ),
        spec(
            "s3",
            "get_bucket_lifecycle",
            ApiTrait::Deprecated {
                replacement: Some("get_bucket_lifecycle_configuration".to_string()),
            },
        ),
        spec(
            "s3",
            "delete_bucket_lifecycle",
            ApiTrait::Deprecated { replacement: None },
        ),
        spec(
            "ec2",
            "describe_snapshots",
            ApiTrait::Waiter {
                waiter_name: "snapshot_completed".to_string(),
            },
        ),
        spec(
            "ec2",
            "describe_instances",
            ApiTrait::Waiter {
                waiter_name: "instance_exists".to_string(),
            },
        ),
        spec(
            "sns",
            "Topic",
            ApiTrait::PaginatorAvailable { available: false },
        ),
        spec(
            "sns",
            "subscribe",
            ApiTrait::PaginatorAvailable { available: false },
        ),
    ]
}
