use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
seed = 1
[synthetic]
vocab = 8
users = 3
steps = 30
[model]
hidden = 8
[optim]
k = 2
[buffers]
vbuf_capacity = 5
[eval]
test_k = 2
every = 10
";

fn congrad(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_congrad"))
        .args(args)
        .env("CONGRAD_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `text` as a config file and runs `run` on it, returning the run directory.
fn run_ok(root: &Path, text: &str, extra: &[&str]) -> PathBuf {
    let cfg = root.join(format!("cfg-{}.cfg", extra.len()));
    std::fs::write(&cfg, text).unwrap();
    let mut args = vec!["run", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = congrad(&args, root);
    assert!(out.status.success(), "{}", stderr(&out));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn missing_data_dir_is_a_config_error_naming_the_key() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("m.cfg");
    std::fs::write(&cfg, "stream.kind = permuted-mnist\n").unwrap();
    let out = congrad(&["run", cfg.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stream.data_dir"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_are_rejected_with_their_line() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("u.cfg");
    std::fs::write(&cfg, "seed = 1\n[optim]\nlearning_rate = 0.1\n").unwrap();
    let out = congrad(&["run", cfg.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("optim.learning_rate"), "{err}");
}

#[test]
fn bad_flag_values_are_config_errors() {
    let root = tempfile::tempdir().unwrap();
    let out = congrad(&["run", "--set", "optim.k=many"], root.path());
    assert_eq!(out.status.code(), Some(2));
    let out = congrad(&["run", "--optimizer", "newton"], root.path());
    assert_eq!(out.status.code(), Some(2));
    let out = congrad(
        &["run", &root.path().join("absent.cfg").display().to_string()],
        root.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_config_same_metrics_bytes() {
    let root = tempfile::tempdir().unwrap();
    let a = run_ok(root.path(), SMALL, &[]);
    let b = run_ok(root.path(), SMALL, &[]);
    assert_ne!(a, b);
    assert!(a.starts_with(root.path()), "output root comes from the environment");
    let csv = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("metrics.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,online_loss,chosen_k,train_loss,replay_size,vbuf_size"
    );
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn flags_override_the_file() {
    let root = tempfile::tempdir().unwrap();
    let elsewhere = root.path().join("elsewhere");
    let dir = run_ok(
        root.path(),
        SMALL,
        &[
            "--seed",
            "4",
            "--k",
            "3",
            "--optimizer",
            "online-gd",
            "--output-dir",
            elsewhere.to_str().unwrap(),
        ],
    );
    assert!(dir.starts_with(&elsewhere));
    let s = summary(&dir);
    assert_eq!(s["seed"], 4);
    assert_eq!(s["optimizer"], "online-gd");
    assert_eq!(s["config"]["optim.k"], "3");
    assert_eq!(s["chosen_k_histogram"]["3"], 30);
}

#[test]
fn summary_holds_the_metric_retention_config_and_seed() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(root.path(), &format!("{SMALL}[output]\ndump_buffers = true\n"), &[]);
    let s = summary(&dir);
    assert_eq!(s["status"], "completed");
    assert_eq!(s["seed"], 1);
    assert_eq!(s["final_metric"]["name"], "perplexity");
    assert!(s["final_metric"]["value"].as_f64().unwrap() > 1.0);
    assert!(s["retention"].is_object() || s["retention"].is_array());
    assert_eq!(s["config"]["synthetic.steps"], "30");
    assert_eq!(s["steps"], 30);

    let buffers: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("buffers.json")).unwrap()).unwrap();
    assert!(buffers["replay"]["ids"].as_array().unwrap().iter().all(Value::is_u64));
    assert_eq!(buffers["validation"]["ids"].as_array().unwrap().len(), 5);
}

#[test]
fn exported_stream_plays_back_as_jsonl() {
    let root = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}[output]\nexport_stream = true\n");
    let first = run_ok(root.path(), &text, &[]);
    let path = first.join("stream.jsonl");
    assert!(path.exists());
    let replay = format!(
        "{SMALL}[stream]\nkind = jsonl\npath = {}\nnum_classes = 8\n",
        path.display()
    );
    let second = run_ok(root.path(), &replay, &["--set", "eval.test_k=0"]);
    let rows = std::fs::read_to_string(second.join("metrics.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 31);
}

#[test]
fn report_reads_a_run_directory() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(root.path(), SMALL, &[]);
    let out = congrad(&["report", dir.to_str().unwrap()], root.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("perplexity"), "{text}");

    let s = summary(&dir);
    let total: u64 = s["chosen_k_histogram"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, s["updates"].as_u64().unwrap());

    std::fs::write(dir.join("summary.json"), "{ not json").unwrap();
    let out = congrad(&["report", dir.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("summary.json"), "{}", stderr(&out));
}

fn sweep_rows(root: &Path, extra: &str) -> Vec<String> {
    let cfg = root.join("sweep.cfg");
    std::fs::write(&cfg, format!("{SMALL}[sweep]\n{extra}")).unwrap();
    let out = congrad(&["sweep", cfg.to_str().unwrap()], root);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    let table = std::fs::read_to_string(dir.join("table.csv")).unwrap();
    table.lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn sweep_over_k_writes_one_row_per_value() {
    let root = tempfile::tempdir().unwrap();
    let rows = sweep_rows(root.path(), "axis = k\nvalues = 1,3,5\noptimizers = congrad\n");
    assert_eq!(rows.len(), 3);
    for (row, k) in rows.iter().zip(["1", "3", "5"]) {
        assert!(row.starts_with(k), "{row}");
    }
}

#[test]
fn sweep_over_strategies_writes_one_row_per_value() {
    let root = tempfile::tempdir().unwrap();
    let rows = sweep_rows(
        root.path(),
        "axis = vbuf-strategy\nvalues = fifo,reservoir,stratified\noptimizers = congrad\n",
    );
    assert_eq!(rows.len(), 3);
}

#[test]
fn sweep_without_values_is_a_config_error() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("sweep.cfg");
    std::fs::write(&cfg, format!("{SMALL}[sweep]\naxis = k\n")).unwrap();
    let out = congrad(&["sweep", cfg.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
