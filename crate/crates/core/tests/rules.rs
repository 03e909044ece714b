//! Detector behavior on the fixture corpus and constructed pattern
//! instances.

use std::collections::BTreeSet;
use std::sync::Arc;

use sdklint_core::apispec::{parse_specs, SpecBundle};
use sdklint_core::frontend::{parse_module, SourceFile};
use sdklint_core::mugraph::{build_program, ParsedModule, ProgramIndex};
use sdklint_core::resolve::{ResolverConfig, Strategy};
use sdklint_core::rules::{run_rules, Detection, RuleCtx};
use sdklint_core::stubtypes::annotate_program;

fn fixture_source(name: &str) -> String {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

fn index_of(files: &[(&str, &str)]) -> ProgramIndex {
    let modules: Vec<ParsedModule> = files
        .iter()
        .map(|(name, src)| {
            let file = SourceFile::new(*name, src.to_string());
            let ast = parse_module(&file).unwrap();
            ParsedModule {
                source: file,
                ast,
                package: None,
            }
        })
        .collect();
    let mut index = build_program(&modules);
    annotate_program(&mut index, &SpecBundle::builtin().services);
    index
}

fn detect(index: &ProgramIndex, rule: &str, config: ResolverConfig) -> Vec<Detection> {
    detect_with(index, rule, config, Arc::new(SpecBundle::builtin()))
}

fn detect_with(
    index: &ProgramIndex,
    rule: &str,
    config: ResolverConfig,
    specs: Arc<SpecBundle>,
) -> Vec<Detection> {
    let ctx = RuleCtx::new(index, specs, config, &[]);
    let enabled: BTreeSet<String> = std::iter::once(rule.to_string()).collect();
    run_rules(&ctx, &enabled)
}

#[test]
fn missing_pagination_fires_on_the_noncompliant_listing_only() {
    let pagination_noncompliant = fixture_source("pagination_noncompliant.py");
    let index = index_of(&[("pagination_noncompliant.py", &pagination_noncompliant)]);
    let detections = detect(&index, "missing-pagination", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
    assert_eq!(detections[0].site.line, 2);
    assert_eq!(detections[0].resolution.service, "dynamodb");
    assert!(detections[0].message.contains("LastEvaluatedKey"));

    let pagination_compliant = fixture_source("pagination_compliant.py");
    let index = index_of(&[("pagination_compliant.py", &pagination_compliant)]);
    let detections = detect(&index, "missing-pagination", ResolverConfig::mc());
    assert_eq!(detections.len(), 0, "{detections:?}");
}

#[test]
fn paginator_usage_suppresses_missing_pagination() {
    let src = "def lists(client):\n    paginator = client.get_paginator(\"scan\")\n    response = client.scan(TableName=\"t\")\n    for page in paginator.paginate():\n        use(page)\n";
    let index = index_of(&[("pag.py", src)]);
    let detections = detect(&index, "missing-pagination", ResolverConfig::mc());
    assert_eq!(detections.len(), 0, "{detections:?}");
}

#[test]
fn batch_unchecked_fires_on_ignored_output_only() {
    let batch_noncompliant = fixture_source("batch_noncompliant.py");
    let index = index_of(&[("batch_noncompliant.py", &batch_noncompliant)]);
    let detections = detect(&index, "batch-unchecked", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
    assert_eq!(detections[0].resolution.service, "sqs");
    assert_eq!(detections[0].confidence, 1.0);
    assert_eq!(detections[0].site.line, 3);

    let batch_compliant = fixture_source("batch_compliant.py");
    let index = index_of(&[("batch_compliant.py", &batch_compliant)]);
    let detections = detect(&index, "batch-unchecked", ResolverConfig::mc());
    assert_eq!(detections.len(), 0, "{detections:?}");
}

#[test]
fn batch_unchecked_fires_on_defined_but_unused_output() {
    let src = "def f():\n    sqs = boto3.client('sqs')\n    r = sqs.send_message_batch()\n";
    let index = index_of(&[("b.py", src)]);
    let detections = detect(&index, "batch-unchecked", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
}

#[test]
fn use_waiters_needs_both_poll_and_sleep_in_a_loop() {
    let polling = "def f():\n    ec2 = boto3.client(\"ec2\")\n    while True:\n        r = ec2.describe_instances()\n        time.sleep(5)\n";
    let index = index_of(&[("w.py", polling)]);
    let detections = detect(&index, "use-waiters", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
    assert!(detections[0].message.contains("instance_exists"));

    let no_sleep = "def f():\n    ec2 = boto3.client(\"ec2\")\n    while True:\n        r = ec2.describe_instances()\n";
    let index = index_of(&[("w.py", no_sleep)]);
    assert_eq!(detect(&index, "use-waiters", ResolverConfig::mc()).len(), 0);

    let sleep_outside = "def f():\n    ec2 = boto3.client(\"ec2\")\n    while True:\n        r = ec2.describe_instances()\n    time.sleep(5)\n";
    let index = index_of(&[("w.py", sleep_outside)]);
    assert_eq!(detect(&index, "use-waiters", ResolverConfig::mc()).len(), 0);
}

#[test]
fn response_metadata_access_without_guard_is_flagged() {
    let unguarded = "def f():\n    c = boto3.client(\"s3\")\n    resp = c.list_objects(Bucket=\"b\")\n    m = resp[\"ResponseMetadata\"]\n";
    let index = index_of(&[("m.py", unguarded)]);
    let detections = detect(&index, "response-metadata-none-check", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);

    let guarded = "def f():\n    c = boto3.client(\"s3\")\n    resp = c.list_objects(Bucket=\"b\")\n    if resp is not None:\n        m = resp[\"ResponseMetadata\"]\n";
    let index = index_of(&[("m.py", guarded)]);
    assert_eq!(
        detect(&index, "response-metadata-none-check", ResolverConfig::mc()).len(),
        0
    );

    let other_key = "def f():\n    c = boto3.client(\"s3\")\n    resp = c.list_objects(Bucket=\"b\")\n    m = resp[\"Contents\"]\n";
    let index = index_of(&[("m.py", other_key)]);
    assert_eq!(
        detect(&index, "response-metadata-none-check", ResolverConfig::mc()).len(),
        0
    );
}

#[test]
fn kinesis_failed_records_follows_the_response_flow() {
    let only_records = "def f():\n    k = boto3.client(\"kinesis\")\n    r = k.put_records(Records=data)\n    use(r[\"Records\"])\n";
    let index = index_of(&[("k.py", only_records)]);
    assert_eq!(
        detect(&index, "kinesis-failed-records", ResolverConfig::mc()).len(),
        1
    );

    let checked = "def f():\n    k = boto3.client(\"kinesis\")\n    r = k.put_records(Records=data)\n    if r[\"FailedRecordCount\"] > 0:\n        retry(r)\n";
    let index = index_of(&[("k.py", checked)]);
    assert_eq!(
        detect(&index, "kinesis-failed-records", ResolverConfig::mc()).len(),
        0
    );

    let ignored = "def f():\n    k = boto3.client(\"kinesis\")\n    k.put_records(Records=data)\n";
    let index = index_of(&[("k.py", ignored)]);
    assert_eq!(
        detect(&index, "kinesis-failed-records", ResolverConfig::mc()).len(),
        1
    );
}

#[test]
fn deprecated_api_requires_service_agreement() {
    // The bundled synthetic deprecation entries cover the lifecycle APIs.
    let s3_use =
        "def f():\n    c = boto3.client(\"s3\")\n    c.put_bucket_lifecycle(Bucket=\"b\")\n";
    let index = index_of(&[("d.py", s3_use)]);
    let detections = detect(&index, "deprecated-api", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
    assert!(detections[0]
        .message
        .contains("put_bucket_lifecycle_configuration"));

    // Same API name on a receiver resolved to a different service.
    let wrong_service =
        "def f():\n    c = boto3.client(\"dynamodb\")\n    c.put_bucket_lifecycle(Bucket=\"b\")\n";
    let index = index_of(&[("d.py", wrong_service)]);
    assert_eq!(
        detect(&index, "deprecated-api", ResolverConfig::mc()).len(),
        0
    );
}

#[test]
fn deprecated_api_on_unresolved_receiver_follows_the_layering() {
    let src = "def f(c):\n    c.put_bucket_lifecycle(Bucket=\"b\")\n";
    let index = index_of(&[("d.py", src)]);
    assert_eq!(
        detect(&index, "deprecated-api", ResolverConfig::hc()).len(),
        0
    );
    let mc = detect(&index, "deprecated-api", ResolverConfig::mc());
    assert_eq!(mc.len(), 1);
    assert_eq!(mc[0].confidence, 0.5);
    assert_eq!(mc[0].resolution.strategy, Strategy::S3);
}

#[test]
fn inefficient_api_chain_is_gated_on_paginator_availability() {
    let pagination_compliant = fixture_source("pagination_compliant.py");
    let with_paginator: Arc<SpecBundle> = Arc::new(
        parse_specs(
            "inline.json",
            r#"[{"serviceId": "dynamodb", "trait": "paginatorAvailable", "api": "scan", "available": true}]"#,
        )
        .unwrap(),
    );
    let index = index_of(&[("pagination_compliant.py", &pagination_compliant)]);
    let detections = detect_with(
        &index,
        "inefficient-api-chain",
        ResolverConfig::mc(),
        Arc::clone(&with_paginator),
    );
    assert_eq!(detections.len(), 1, "{detections:?}");
    assert!(detections[0].message.contains("get_paginator"));

    // Default bundle: no availability marker, no finding.
    let detections = detect(&index, "inefficient-api-chain", ResolverConfig::mc());
    assert_eq!(detections.len(), 0);

    // A token-testing loop that never re-invokes the API.
    let no_reinvoke = "def f(db):\n    response = db.scan(TableName=\"t\")\n    while \"LastEvaluatedKey\" in response:\n        response = advance(response)\n";
    let index = index_of(&[("n.py", no_reinvoke)]);
    let detections = detect_with(
        &index,
        "inefficient-api-chain",
        ResolverConfig::mc(),
        with_paginator,
    );
    assert_eq!(detections.len(), 0, "{detections:?}");
}

#[test]
fn missing_pagination_and_chain_never_share_a_site() {
    let pagination_compliant = fixture_source("pagination_compliant.py");
    let bundle: Arc<SpecBundle> = Arc::new(
        parse_specs(
            "inline.json",
            r#"[{"serviceId": "dynamodb", "trait": "paginatorAvailable", "api": "scan", "available": true}]"#,
        )
        .unwrap(),
    );
    let index = index_of(&[("pagination_compliant.py", &pagination_compliant)]);
    let ctx = RuleCtx::new(&index, bundle, ResolverConfig::mc(), &[]);
    let enabled: BTreeSet<String> = ["missing-pagination", "inefficient-api-chain"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let detections = run_rules(&ctx, &enabled);
    let pagination_sites: BTreeSet<_> = detections
        .iter()
        .filter(|d| d.rule == "missing-pagination")
        .map(|d| (d.site.path.clone(), d.site.line, d.site.column))
        .collect();
    let chain_sites: BTreeSet<_> = detections
        .iter()
        .filter(|d| d.rule == "inefficient-api-chain")
        .map(|d| (d.site.path.clone(), d.site.line, d.site.column))
        .collect();
    assert!(pagination_sites.is_disjoint(&chain_sites));
    assert!(!chain_sites.is_empty());
}

#[test]
fn lambda_client_init_matches_handler_shapes_only() {
    let in_handler = "def handler(event, context):\n    s3 = boto3.client(\"s3\")\n    return s3\n";
    let index = index_of(&[("l.py", in_handler)]);
    let detections = detect(&index, "lambda-client-init", ResolverConfig::mc());
    assert_eq!(detections.len(), 1);
    assert_eq!(detections[0].resolution.service, "s3");
    assert_eq!(detections[0].confidence, 1.0);

    let module_level = "s3 = boto3.client(\"s3\")\n\ndef handler(event, context):\n    return s3.list_objects(Bucket=\"b\")\n";
    let index = index_of(&[("l.py", module_level)]);
    assert_eq!(
        detect(&index, "lambda-client-init", ResolverConfig::mc()).len(),
        0
    );

    let wrong_names = "def main(a, b):\n    s3 = boto3.client(\"s3\")\n    return s3\n";
    let index = index_of(&[("l.py", wrong_names)]);
    assert_eq!(
        detect(&index, "lambda-client-init", ResolverConfig::mc()).len(),
        0
    );
}

#[test]
fn configured_handler_names_extend_the_default_pair() {
    let src = "def go(evt, ctx):\n    s3 = boto3.client(\"s3\")\n    return s3\n";
    let file = SourceFile::new("l.py", src.to_string());
    let ast = parse_module(&file).unwrap();
    let mut index = build_program(&[ParsedModule {
        source: file,
        ast,
        package: None,
    }]);
    annotate_program(&mut index, &SpecBundle::builtin().services);
    let ctx = RuleCtx::new(
        &index,
        Arc::new(SpecBundle::builtin()),
        ResolverConfig::mc(),
        &["evt,ctx".to_string()],
    );
    let enabled: BTreeSet<String> = std::iter::once("lambda-client-init".to_string()).collect();
    assert_eq!(run_rules(&ctx, &enabled).len(), 1);
}

#[test]
fn hc_detections_are_a_subset_of_mc_detections() {
    let sources: Vec<(String, String)> = [
        "lazy_field_client.py",
        "resource_via_helper.py",
        "client_parameter.py",
        "pagination_noncompliant.py",
        "pagination_compliant.py",
        "batch_noncompliant.py",
        "batch_compliant.py",
        "kwargs_client.py",
    ]
    .iter()
    .map(|n| (n.to_string(), fixture_source(n)))
    .collect();
    let refs: Vec<(&str, &str)> = sources
        .iter()
        .map(|(n, s)| (n.as_str(), s.as_str()))
        .collect();
    let index = index_of(&refs);

    let all: BTreeSet<String> = sdklint_core::rules::RULE_IDS
        .iter()
        .map(|s| s.to_string())
        .collect();
    let hc = run_rules(
        &RuleCtx::new(
            &index,
            Arc::new(SpecBundle::builtin()),
            ResolverConfig::hc(),
            &[],
        ),
        &all,
    );
    let mc = run_rules(
        &RuleCtx::new(
            &index,
            Arc::new(SpecBundle::builtin()),
            ResolverConfig::mc(),
            &[],
        ),
        &all,
    );

    let key = |d: &Detection| (d.rule.clone(), d.site.clone());
    let hc_sites: BTreeSet<_> = hc.iter().map(key).collect();
    let mc_sites: BTreeSet<_> = mc.iter().map(key).collect();
    assert!(hc_sites.is_subset(&mc_sites), "HC found sites MC did not");

    for d in &hc {
        assert_eq!(
            d.confidence, 1.0,
            "high-confidence run emitted a low-confidence finding"
        );
    }
    for d in &mc {
        assert!(d.confidence == 1.0 || d.confidence == 0.5);
    }
}
