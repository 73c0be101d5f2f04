use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn fpm(project: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpm"))
        .arg("--project")
        .arg(project)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn build_writes_artifacts_then_hits_the_cache() {
    let out = tempfile::tempdir().unwrap();
    let first = fpm(&fixture("fig4"), out.path(), &["build"]);
    assert_eq!(first.status.code(), Some(0), "{}", text(&first.stderr));
    for f in ["ecpg.json", "frg-cache.json", "build.json", "manifest.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let ecpg = std::fs::read(out.path().join("ecpg.json")).unwrap();
    let again = fpm(&fixture("fig4"), out.path(), &["build"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(text(&again.stderr).contains("cache hit"), "{}", text(&again.stderr));
    assert_eq!(std::fs::read(out.path().join("ecpg.json")).unwrap(), ecpg);
}

#[test]
fn build_of_an_empty_project_exits_2() {
    let (project, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(fpm(project.path(), out.path(), &["build"]).status.code(), Some(2));
}

#[test]
fn slice_prints_json_and_honours_labels() {
    let out = tempfile::tempdir().unwrap();
    let o = fpm(&fixture("fig4"), out.path(), &["slice", "--file", "fig4.c", "--line", "15", "--column", "9", "--labels", "C,D"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let lines: Vec<u64> = v["files"][0]["lines"].as_array().unwrap().iter().map(|l| l["n"].as_u64().unwrap()).collect();
    assert_eq!(lines, [8, 11, 15]);
    assert_eq!(v["files"][0]["lines"][2]["text"], "        z = y + 2;");

    let far = fpm(&fixture("fig4"), out.path(), &["slice", "--file", "fig4.c", "--line", "9999"]);
    assert_eq!(far.status.code(), Some(3));
}

#[test]
fn farf_prints_sorted_files() {
    let out = tempfile::tempdir().unwrap();
    let o = fpm(&fixture("fig3"), out.path(), &["farf", "--files", "good.c"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout), "good.c\nio.c\n");
    let back = fpm(&fixture("fig3"), out.path(), &["farf", "--files", "io.c"]);
    assert_eq!(text(&back.stdout), "io.c\n");
    assert_eq!(fpm(&fixture("fig3"), out.path(), &["farf", "--files", "nope.c"]).status.code(), Some(3));
}

#[test]
fn export_matches_the_built_artifact() {
    let out = tempfile::tempdir().unwrap();
    let o = fpm(&fixture("fig2"), out.path(), &["export-ecpg"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(o.stdout, std::fs::read(out.path().join("ecpg.json")).unwrap());
}

#[test]
fn inspect_then_eval() {
    let out = tempfile::tempdir().unwrap();
    let project = fixture("inspect/project");
    let config = fixture("inspect/fpm.toml");
    let report = fixture("inspect/report.xml");
    let args = ["--config", config.to_str().unwrap(), "inspect", "--report", report.to_str().unwrap()];
    let o = fpm(&project, out.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.path().join("verdicts.jsonl")).unwrap().lines().count(), 3);
    assert!(out.path().join("reports").is_dir());

    let verdicts = out.path().join("verdicts.jsonl");
    let labels = fixture("inspect/labels.json");
    let e = fpm(&project, out.path(), &["eval", "--verdicts", verdicts.to_str().unwrap(), "--labels", labels.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(0), "{}", text(&e.stderr));
    let table = text(&e.stdout);
    assert!(table.contains("overall") && table.contains("100.00%"), "{table}");
    let j = fpm(&project, out.path(), &["eval", "--json", "--verdicts", verdicts.to_str().unwrap(), "--labels", labels.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    assert_eq!(v["overall"]["accuracy"], 1.0);
    assert!(out.path().join("metrics.json").is_file());

    let other = out.path().join("other.json");
    std::fs::write(&other, r#"{"unrelated": "buggy"}"#).unwrap();
    let bad = fpm(&project, out.path(), &["eval", "--verdicts", verdicts.to_str().unwrap(), "--labels", other.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn empty_report_exits_0_with_no_verdicts() {
    let out = tempfile::tempdir().unwrap();
    let report = fixture("reports/empty.xml");
    let o = fpm(&fixture("inspect/project"), out.path(), &["inspect", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(std::fs::read(out.path().join("verdicts.jsonl")).unwrap(), b"");
}

#[test]
fn unreachable_endpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fpm.toml");
    std::fs::write(
        &config,
        "[llm]\nprovider = \"http\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nmodel = \"m\"\nretries = 2\nbackoff_ms = 1\ntimeout_secs = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let report = fixture("inspect/report.xml");
    let o =
        fpm(&fixture("inspect/project"), &out, &["--config", config.to_str().unwrap(), "inspect", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o.stderr));
    let body = std::fs::read_to_string(out.join("verdicts.jsonl")).unwrap();
    assert_eq!(body.lines().count(), 3);
    assert!(body.lines().all(|l| l.contains(r#""status":"retryable""#)), "{body}");
}

#[test]
fn bad_arguments_exit_3() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(fpm(&fixture("fig4"), out.path(), &["slice", "--line", "3"]).status.code(), Some(3));
    assert_eq!(fpm(&fixture("fig4"), out.path(), &["inspect", "--report", "r.xml", "--format", "sarif"]).status.code(), Some(3));
    let missing = out.path().join("missing.toml");
    assert_eq!(fpm(&fixture("fig4"), out.path(), &["--config", missing.to_str().unwrap(), "build"]).status.code(), Some(3));
}
