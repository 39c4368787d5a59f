use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfg"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

fn only_run(out: &Path) -> PathBuf {
    let dirs = run_dirs(out);
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn error_kind(o: &Output) -> String {
    assert_eq!(o.status.code(), Some(1));
    let line = String::from_utf8_lossy(&o.stderr);
    let last = line.lines().last().expect("an error record");
    let v: serde_json::Value = serde_json::from_str(last).expect("single-line json");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        r#"
seed = 11

[synthetic]
n = 240

[train]
max_epochs = 4
patience = 2

[cv]
folds = 3
trials = 2

[cv.grid]
learning_rates = [0.001]
batch_sizes = [50]
dropouts = [0.0, 0.25]
layers = [1]
nodes = [6]

[benchmark]
batch_size = 40
samples = 3
"#,
    )
    .unwrap();
    path
}

#[test]
fn generate_writes_requested_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = nfg(&["generate", "--n", "100", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nfg(&["generate", "--n", "100", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dirs = run_dirs(&out);
    assert_eq!(dirs.len(), 2);
    let csv = fs::read_to_string(dirs[0].join("cohort.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 14);
    for file in ["cohort.csv", "manifest.json"] {
        assert_eq!(fs::read(dirs[0].join(file)).unwrap(), fs::read(dirs[1].join(file)).unwrap());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dirs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["synthetic"]["n"], 100);
    assert!(manifest["version"].is_string());
}

#[test]
fn train_then_evaluate_and_detect_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("train");
    let o = nfg(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--nodes", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = only_run(&out);
    let ckpt = run.join("model.nfg");
    assert!(ckpt.exists());
    assert!(fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count() >= 1);

    let gen_out = dir.path().join("gen");
    assert!(nfg(&["generate", "--n", "150", "--out", gen_out.to_str().unwrap()]).status.success());
    let csv = only_run(&gen_out).join("cohort.csv");
    let eval_out = dir.path().join("eval");
    let o = nfg(&[
        "evaluate",
        "--data",
        csv.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("C-index") && stdout.contains("q25"), "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(only_run(&eval_out).join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["inputs"].as_array().unwrap().len(), 2);

    let narrow_out = dir.path().join("narrow");
    assert!(nfg(&["generate", "--n", "60", "--features", "4", "--out", narrow_out.to_str().unwrap()]).status.success());
    let narrow = only_run(&narrow_out).join("cohort.csv");
    let o = nfg(&[
        "evaluate",
        "--data",
        narrow.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(error_kind(&o), "schema");
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("12") && msg.contains('4'), "{msg}");
}

#[test]
fn cv_results_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("cv");
    for _ in 0..2 {
        let o = nfg(&["cv", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("C-index") && text.contains("Brier") && text.contains("q50"), "{text}");
    }
    let dirs = run_dirs(&out);
    assert_eq!(dirs.len(), 2);
    for file in ["cv.json", "table.txt", "fold0.nfg", "fold2.nfg"] {
        assert_eq!(fs::read(dirs[0].join(file)).unwrap(), fs::read(dirs[1].join(file)).unwrap(), "{file}");
    }
}

#[test]
fn benchmark_reports_one_row_per_degree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("bench");
    let o = nfg(&[
        "benchmark",
        "--config",
        cfg.to_str().unwrap(),
        "--degrees",
        "1,15,100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    for m in ["quadrature-1", "quadrature-15", "quadrature-100"] {
        assert!(text.contains(m), "{text}");
    }
    let v: serde_json::Value = serde_json::from_slice(&fs::read(only_run(&out).join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn reclassify_prints_both_strata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut ckpts = Vec::new();
    for variant in ["nfg", "cause-specific"] {
        let out = dir.path().join(variant);
        let o = nfg(&["train", "--config", cfg.to_str().unwrap(), "--variant", variant, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        ckpts.push(only_run(&out).join("model.nfg"));
    }
    let out = dir.path().join("reclass");
    let o = nfg(&[
        "reclassify",
        "--config",
        cfg.to_str().unwrap(),
        "--model-a",
        ckpts[0].to_str().unwrap(),
        "--model-b",
        ckpts[1].to_str().unwrap(),
        "--filter",
        "x1>=-100",
        "--group-column",
        "x1",
        "--group-edges=-10,0,10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Event-free by horizon") && text.contains("Event by horizon"), "{text}");
    assert!(text.contains("x1 in [-10, 0)"), "{text}");
}

#[test]
fn failures_exit_one_with_a_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let out = out.to_str().unwrap();
    assert_eq!(error_kind(&nfg(&["evaluate", "--data", "/nonexistent/cohort.csv", "--checkpoint", "x.nfg", "--out", out])), "io");
    assert_eq!(error_kind(&nfg(&["cv", "--variant", "deephit", "--out", out])), "usage");
    assert_eq!(error_kind(&nfg(&["frobnicate"])), "usage");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "sede = 3\n").unwrap();
    assert_eq!(error_kind(&nfg(&["generate", "--config", bad.to_str().unwrap()])), "config");
}
