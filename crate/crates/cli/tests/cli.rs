use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ripplecot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ripplecot"))
        .args(args)
        .env_remove("RIPPLECOT_API_BASE")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn eval_writes_reports_and_report_rereads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ripplecot(&[
        "eval",
        "--method",
        "ripplecot",
        "--dataset",
        "synthetic",
        "--cases",
        "40",
        "--k",
        "5",
        "--t",
        "5",
        "--g",
        "3000",
        "--m",
        "4",
        "--seed",
        "7",
        "--backend",
        "oracle",
        "--embedder",
        "hashed",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| All | 40 | 40 | 100.0 |"), "{}", stdout(&o));
    for f in ["report.full.jsonl", "report.summary.json", "tables.md", "plot.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let ike = dir.path().join("ike");
    let o =
        ripplecot(&["eval", "--method", "ike", "--cases", "40", "--seed", "7", "--format", "full", "--out", s(&ike)]);
    assert!(o.status.success());
    assert!(!ike.join("tables.md").exists());

    let o = ripplecot(&["report", s(&out.join("report.full.jsonl")), s(&ike.join("report.full.jsonl"))]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.contains("ripplecot") && table.contains("ike"), "{table}");

    let again = dir.path().join("again");
    let o = ripplecot(&["report", s(&out.join("report.full.jsonl")), "--out", s(&again), "--format", "summary"]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(again.join("report.summary.json")).unwrap(),
        std::fs::read_to_string(out.join("report.summary.json")).unwrap()
    );
}

#[test]
fn config_file_wins_over_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "method = \"ike\"\n").unwrap();
    let out = dir.path().join("o");
    let o = ripplecot(&["eval", "--method", "ripplecot", "--cases", "10", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success());
    let summary = std::fs::read_to_string(out.join("report.summary.json")).unwrap();
    assert!(summary.contains("\"method\": \"ike\""), "{summary}");
}

#[test]
fn benchmark_fixture_runs_with_quarantine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ripplecot(&[
        "eval",
        "--dataset",
        "mquake",
        "--path",
        s(&fixture("mquake.json")),
        "--split",
        "cf",
        "--k",
        "1",
        "--t",
        "1",
        "--candidates",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| All | 3 |"), "{}", stdout(&o));
    let quarantine = std::fs::read_to_string(out.join("quarantine.jsonl")).unwrap();
    assert_eq!(quarantine.lines().count(), 2);
}

#[test]
fn edit_exports_and_answers() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("edits.jsonl");
    let common = ["edit", "--cases", "5", "--k", "1", "--t", "1", "--candidates", "4"];
    let mut args = common.to_vec();
    args.extend(["--export", s(&export)]);
    let o = ripplecot(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("5 cases, 5 edits inserted, 5 live, 0 superseded"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&export).unwrap();
    assert_eq!(text.lines().count(), 5);

    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let (subject, relation) = (first["base"]["subject"].as_str().unwrap(), first["base"]["relation"].as_str().unwrap());
    let question = format!("What is the {relation} of {subject}?");
    let mut args = common.to_vec();
    args.extend(["-q", &question]);
    let o = ripplecot(&args);
    assert!(o.status.success());
    let answer = format!("Answer: {}", first["new_object"].as_str().unwrap());
    assert!(stdout(&o).contains(&answer), "{}", stdout(&o));
}

#[test]
fn gen_demos_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demos.jsonl");
    let o = ripplecot(&["gen-demos", "--cases", "30", "--candidates", "8", "-o", s(&path)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.contains("\"thought\"")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let code = |args: &[&str]| ripplecot(args).status.code();
    assert_eq!(code(&["eval", "--k", "0", "--out", s(&out)]), Some(2));
    assert_eq!(code(&["eval", "--method", "nonsense"]), Some(2));
    assert_eq!(code(&["eval", "--dataset", "mquake", "--out", s(&out)]), Some(3));
    assert_eq!(code(&["eval", "--dataset", "mquake", "--path", "/nonexistent.json", "--out", s(&out)]), Some(3));
    assert_eq!(code(&["eval", "--backend", "remote", "--cases", "5", "--out", s(&out)]), Some(4));
}
