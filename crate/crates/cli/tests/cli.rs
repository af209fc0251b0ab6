use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
name = "cli"
[model]
input_size = 8
[train]
steps = 12
batch_size = 8
eval_every = 6
[seeds]
model = 1
data = 2
augment = 3
[[domain]]
[domain.synthetic]
classes = 3
n_per_class = 10
size = 8
[[domain]]
[domain.synthetic]
classes = 2
n_per_class = 12
size = 8
mean_offset = 1.5
seed = 9
"#;

fn unirep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unirep"))
        .args(args)
        .env("UNIREP_THREADS", "2")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", CONFIG);
    let run = tmp.path().join("run");
    let out = unirep(&["train", "--config", &cfg, "--output", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(last["step"], 12);
    assert_eq!(last["final"], true);
    for f in ["metrics.jsonl", "manifest.json", "config.toml", "checkpoint.udrc", "timing.jsonl"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ck = run.join("checkpoint.udrc");
    let ev = unirep(&["eval", "--config", &cfg, "--checkpoint", ck.to_str().unwrap()]);
    assert!(ev.status.success());
    let r: serde_json::Value = serde_json::from_str(stdout(&ev).trim()).unwrap();
    assert_eq!(r["val_error"], last["val_error"]);
    let plus = unirep(&["eval", "--config", &cfg, "--checkpoint", ck.to_str().unwrap(), "--mode", "bn-plus"]);
    assert!(plus.status.success());

    let rep = unirep(&["report", run.join("metrics.jsonl").to_str().unwrap()]);
    assert!(rep.status.success());
    let table = stdout(&rep);
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().next().unwrap().contains("mean"));
}

#[test]
fn bad_config_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &CONFIG.replace("steps = 12", "steps = 0\ncolour = 1"));
    let out = unirep(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn missing_files_exit_with_4() {
    let out = unirep(&["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", CONFIG);
    let junk = write(tmp.path(), "junk.udrc", "not a checkpoint");
    let out = unirep(&["eval", "--config", &cfg, "--checkpoint", &junk]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn divergence_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("eval_every = 6", "eval_every = 6\nwarmup_lr = 1e8\nbase_lr = 1e9\nfinal_lr = 1e7");
    let cfg = write(tmp.path(), "hot.toml", &text);
    let out = unirep(&["train", "--config", &cfg, "--output", tmp.path().join("hot").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(tmp.path().join("hot/metrics.jsonl")).unwrap();
    assert!(metrics.contains("divergence"));
}

#[test]
fn gradcheck_passes() {
    let out = unirep(&["gradcheck"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().count() >= 9);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        unirep::experiment::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n > 0);
}
