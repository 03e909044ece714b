//! End-to-end scans over fixture directories.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sdklint_cli::{exit_code, render_json, scan, OutputFormat, ScanConfig};
use sdklint_core::resolve::ResolverMode;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn stage(dir: &Path, names: &[&str]) {
    std::fs::create_dir_all(dir).unwrap();
    for name in names {
        std::fs::copy(fixture(name), dir.join(name)).unwrap();
    }
}

fn config(root: &Path) -> ScanConfig {
    ScanConfig {
        roots: vec![root.to_path_buf()],
        ..Default::default()
    }
}

#[test]
fn noncompliant_pair_yields_two_findings_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_noncompliant.py", "batch_noncompliant.py"],
    );
    let outcome = scan(&config(dir.path())).unwrap();
    // Detections are ordered by path, so the batch fixture reports first.
    let rules: Vec<&str> = outcome
        .report
        .detections
        .iter()
        .map(|d| d.rule.as_str())
        .collect();
    assert_eq!(rules, vec!["batch-unchecked", "missing-pagination"]);
    assert_eq!(exit_code(&outcome.report), 1);
}

#[test]
fn compliant_pair_is_clean_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_compliant.py", "batch_compliant.py"],
    );
    let outcome = scan(&config(dir.path())).unwrap();
    assert!(
        outcome.report.detections.is_empty(),
        "{:?}",
        outcome.report.detections
    );
    assert_eq!(exit_code(&outcome.report), 0);
}

#[test]
fn rule_filter_restricts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_noncompliant.py", "batch_noncompliant.py"],
    );
    let mut cfg = config(dir.path());
    cfg.rules = std::iter::once("batch-unchecked".to_string()).collect::<BTreeSet<_>>();
    let outcome = scan(&cfg).unwrap();
    assert_eq!(outcome.report.detections.len(), 1);
    assert_eq!(outcome.report.detections[0].rule, "batch-unchecked");
}

#[test]
fn unknown_rule_is_a_fatal_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), &["pagination_noncompliant.py"]);
    let mut cfg = config(dir.path());
    cfg.rules = std::iter::once("no-such-rule".to_string()).collect::<BTreeSet<_>>();
    let err = scan(&cfg).unwrap_err();
    assert!(err.to_string().contains("no-such-rule"));
}

#[test]
fn missing_root_is_fatal() {
    let cfg = config(Path::new("/definitely/not/here"));
    assert!(scan(&cfg).is_err());
}

#[test]
fn parse_failures_are_warnings_not_errors() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), &["batch_noncompliant.py"]);
    std::fs::write(dir.path().join("broken.py"), b"x = \\ 1\n").unwrap();
    std::fs::write(dir.path().join("binary.py"), [0xff, 0xfe, 0x00]).unwrap();
    let outcome = scan(&config(dir.path())).unwrap();
    assert_eq!(outcome.warnings.len(), 2, "{:?}", outcome.warnings);
    assert_eq!(
        outcome.report.detections.len(),
        1,
        "the healthy file is still scanned"
    );
}

#[test]
fn hc_configuration_drops_low_confidence_findings() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_noncompliant.py", "batch_noncompliant.py"],
    );
    let mut cfg = config(dir.path());
    cfg.mode = ResolverMode::Hc;
    let outcome = scan(&cfg).unwrap();
    // Fig 10's receivers are untypable parameters: only the batch finding
    // (typed by its local constructor) survives.
    let rules: Vec<&str> = outcome
        .report
        .detections
        .iter()
        .map(|d| d.rule.as_str())
        .collect();
    assert_eq!(rules, vec!["batch-unchecked"]);
    assert!(outcome
        .report
        .detections
        .iter()
        .all(|d| d.confidence == 1.0));
}

#[test]
fn max_findings_prefers_high_confidence() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_noncompliant.py", "batch_noncompliant.py"],
    );
    let mut cfg = config(dir.path());
    cfg.max_findings = Some(1);
    let outcome = scan(&cfg).unwrap();
    assert_eq!(outcome.report.detections.len(), 1);
    assert_eq!(
        outcome.report.detections[0].confidence, 1.0,
        "the 0.5 finding must be dropped first"
    );
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    stage(
        dir.path(),
        &["pagination_noncompliant.py", "batch_noncompliant.py"],
    );
    let mut cfg = config(dir.path());
    cfg.format = OutputFormat::Json;
    let outcome = scan(&cfg).unwrap();
    let text = render_json(&outcome.report);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["detections"].as_array().unwrap().len(), 2);
    assert_eq!(value["stats"]["files"], 2);
    assert!(value["detections"][0]["site"]["line"].is_number());
}

#[test]
fn dump_mu_produces_dot_text() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), &["pagination_noncompliant.py"]);
    let mut cfg = config(dir.path());
    cfg.dump_mu = Some("sync_ddb_table".to_string());
    let outcome = scan(&cfg).unwrap();
    let dot = outcome.dot.expect("graph dumped");
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("style=dashed"));
}

#[test]
fn trace_rule_emits_step_lines() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), &["batch_noncompliant.py"]);
    let mut cfg = config(dir.path());
    cfg.trace_rule = Some("batch-unchecked".to_string());
    let outcome = scan(&cfg).unwrap();
    assert!(!outcome.trace.is_empty());
    assert!(outcome
        .trace
        .iter()
        .any(|l| l.contains("withOutputIgnoredFilter")));
}

#[test]
fn packages_ground_the_package_scope() {
    let dir = tempfile::tempdir().unwrap();
    let pkg = dir.path().join("app");
    std::fs::create_dir_all(&pkg).unwrap();
    std::fs::write(pkg.join("__init__.py"), "").unwrap();
    // The construction lives in a factory in one module; another module's
    // class stores the factory result in an instance field and uses it.
    // Resolving the receiver takes field tracking plus a package-wide
    // backward walk through the cross-module call.
    std::fs::write(
        pkg.join("factory.py"),
        "import boto3\n\n\ndef make_db():\n    return boto3.client(\"dynamodb\")\n",
    )
    .unwrap();
    std::fs::write(
        pkg.join("store.py"),
        "from factory import make_db\n\n\nclass Store(object):\n    def __init__(self):\n        self._db = make_db()\n\n    def run(self):\n        response = self._db.scan(TableName=\"t\")\n        for item in response['Items']:\n            handle(item)\n",
    )
    .unwrap();
    let mut cfg = config(dir.path());
    cfg.mode = ResolverMode::Hc;
    let outcome = scan(&cfg).unwrap();
    assert_eq!(
        outcome.report.detections.len(),
        1,
        "{:?}",
        outcome.report.detections
    );
    let d = &outcome.report.detections[0];
    assert_eq!(d.rule, "missing-pagination");
    assert_eq!(d.resolution.strategy, sdklint_core::resolve::Strategy::S2);
}

/// Same-named classes in different modules are distinct: a field written
/// in one never types or resolves a field read in the other.
#[test]
fn same_named_classes_in_different_files_never_unify() {
    let dir = tempfile::tempdir().unwrap();
    let pkg = dir.path().join("app");
    std::fs::create_dir_all(&pkg).unwrap();
    std::fs::write(pkg.join("__init__.py"), "").unwrap();
    std::fs::write(
        pkg.join("one.py"),
        "import boto3\n\nclass Holder(object):\n    def __init__(self):\n        self._db = boto3.client(\"dynamodb\")\n",
    )
    .unwrap();
    std::fs::write(
        pkg.join("two.py"),
        "class Holder(object):\n    def run(self):\n        response = self._db.scan(TableName=\"t\")\n        for item in response['Items']:\n            handle(item)\n",
    )
    .unwrap();
    let mut cfg = config(dir.path());
    cfg.mode = ResolverMode::Hc;
    let outcome = scan(&cfg).unwrap();
    assert!(
        outcome.report.detections.is_empty(),
        "distinct classes unified: {:?}",
        outcome.report.detections
    );
}
