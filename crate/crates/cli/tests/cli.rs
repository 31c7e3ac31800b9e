use std::path::Path;
use std::process::{Command, Output};

fn casealot(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_casealot"));
    cmd.args(args)
        .env_remove("CASEALOT_AUDIT_PATH")
        .env_remove("CASEALOT_PORT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, n: &str) {
    let o = casealot(
        &[
            "gen",
            "--n",
            n,
            "--seed",
            "3",
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_run_verify_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "120");
    let corpus = d.join("corpus.jsonl");
    let court = d.join("court.json");
    let audit = d.join("audit.jsonl");
    let o = casealot(
        &[
            "run",
            "--corpus",
            corpus.to_str().unwrap(),
            "--court",
            court.to_str().unwrap(),
            "--seed",
            "7",
            "--audit-path",
            audit.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("rule  count  frequency"), "{text}");
    assert!(
        text.contains("distributed 120 lawsuits (0 failed)"),
        "{text}"
    );

    // the audit path may come from the environment
    let o = casealot(&["verify"], &[("CASEALOT_AUDIT_PATH", &audit)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "ok: 120/120 replayed");

    let o = casealot(
        &[
            "trace",
            "DA01-000001",
            "--audit-path",
            audit.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.contains("start-distribution")));
    assert!(text.contains("outcome: rule"));

    // a used audit log is never appended to
    let o = casealot(
        &[
            "run",
            "--corpus",
            corpus.to_str().unwrap(),
            "--audit-path",
            audit.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("already holds records"));
}

#[test]
fn flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "5");
    let used = d.join("used.jsonl");
    std::fs::write(&used, "not empty\n").unwrap();
    let fresh = d.join("fresh.jsonl");
    let o = casealot(
        &[
            "run",
            "--corpus",
            d.join("corpus.jsonl").to_str().unwrap(),
            "--audit-path",
            fresh.to_str().unwrap(),
        ],
        &[("CASEALOT_AUDIT_PATH", &used)],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::metadata(&fresh).unwrap().len() > 0);
}

#[test]
fn runs_with_fixed_epoch_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "60");
    let mut logs = Vec::new();
    for k in 0..2 {
        let audit = d.join(format!("audit{k}.jsonl"));
        let outcomes = d.join(format!("outcomes{k}.jsonl"));
        let o = casealot(
            &[
                "run",
                "--corpus",
                d.join("corpus.jsonl").to_str().unwrap(),
                "--court",
                d.join("court.json").to_str().unwrap(),
                "--audit-path",
                audit.to_str().unwrap(),
                "--outcomes",
                outcomes.to_str().unwrap(),
                "--epoch",
                "2016-06-24T10:57:25Z",
            ],
            &[],
        );
        assert!(o.status.success());
        let table: String = stdout(&o).lines().take(5).collect::<Vec<_>>().join("\n");
        logs.push((
            std::fs::read(audit).unwrap(),
            std::fs::read(outcomes).unwrap(),
            table,
        ));
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn verify_flags_a_tampered_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "10");
    let audit = d.join("audit.jsonl");
    let o = casealot(
        &[
            "run",
            "--corpus",
            d.join("corpus.jsonl").to_str().unwrap(),
            "--audit-path",
            audit.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success());
    let text = std::fs::read_to_string(&audit).unwrap();
    let tampered: String = text
        .lines()
        .map(|l| {
            if l.contains("\"record-outcome\"") && l.contains("DA01-000004") {
                l.replacen("\"draw_seed\":", "\"draw_seed\":1", 1)
            } else {
                l.to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    std::fs::write(&audit, tampered).unwrap();
    let o = casealot(&["verify", "--audit-path", audit.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(
        stdout(&o).contains("FAILED: 9/10 replayed"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn bench_reports_a_rate() {
    let o = casealot(&["bench", "--n", "50"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("lawsuits/sec (concurrent scheduler"));
}

#[test]
fn missing_inputs_exit_nonzero() {
    let o = casealot(&["verify", "--audit-path", "/nonexistent/audit.jsonl"], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    let o = casealot(&["run", "--corpus", "/nonexistent.jsonl"], &[]);
    assert!(!o.status.success());
    let o = casealot(&["run", "--corpus", "x", "--scheduler", "eager"], &[]);
    assert!(!o.status.success());
}

#[test]
fn corpus_directory_brings_its_court() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "30");
    let audit = d.join("audit.jsonl");
    let o = casealot(
        &[
            "run",
            "--corpus",
            d.to_str().unwrap(),
            "--audit-path",
            audit.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("distributed 30 lawsuits (0 failed)"));
    // the generated court's impediments were registered
    let log = std::fs::read_to_string(&audit).unwrap();
    assert!(log.contains("\"action\":\"register-impediment\""));
}
