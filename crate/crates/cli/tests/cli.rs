use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn w2reg(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_w2reg"))
        .args(args)
        .env("W2REG_OUT_ROOT", out_root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small biased problem: group-1 examples of class_2 lean toward class_3.
fn write_inputs(dir: &Path) {
    let spec = json!({
        "num_classes": 3, "num_features": 4,
        "counts": [[300, 300], [300, 300], [300, 300]],
        "separation": 3.0, "noise_std": 1.0,
        "biases": [{"class": 1, "toward": 2, "shift": 2.5}],
        "seed": 5
    });
    fs::write(dir.join("spec.json"), spec.to_string()).unwrap();
    let config = json!({
        "epochs": 10, "hidden": [8],
        "optimizer": {"kind": "adam", "lr": 0.01},
        "lambda": 20.0, "min_support": 50
    });
    fs::write(dir.join("config.json"), config.to_string()).unwrap();
}

fn generate(dir: &Path) -> std::path::PathBuf {
    write_inputs(dir);
    let data = dir.join("data");
    ok(&w2reg(
        &["generate", "--spec", p(&dir.join("spec.json")), "--out", p(&data)],
        dir,
    ));
    data.join("data.csv")
}

#[test]
fn generate_train_report_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = generate(dir);
    for f in ["data.csv", "schema.json", "summary.json", "spec.json"] {
        assert!(data.with_file_name(f).is_file(), "{f}");
    }
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(data.with_file_name("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 1800);

    let run = dir.join("run");
    let out = w2reg(
        &["train", "--data", p(&data), "--config", p(&dir.join("config.json")), "--out", p(&run)],
        dir,
    );
    ok(&out);
    for f in ["config.json", "manifest.json", "selection.json", "metrics.csv", "checkpoints/baseline.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["retrained"], true);

    let report = dir.join("report");
    ok(&w2reg(&["report", p(&run), "--out", p(&report)], dir));
    for f in ["accuracy_f1.csv", "tpr_gaps.csv", "confusion_diff.csv", "gain_matrix.csv"] {
        let text = fs::read_to_string(report.join(f)).unwrap();
        assert!(text.starts_with("# run=run seed=0 config_hash="), "{f}: {text}");
        assert!(text.contains(manifest["config_hash"].as_str().unwrap()));
    }
    let gain = fs::read_to_string(report.join("gain_matrix.csv")).unwrap();
    assert!(gain.contains("\nrun,seed,class,class_1,class_2,class_3\n"));
}

#[test]
fn zero_lambda_train_matches_baseline_only() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = generate(dir);
    let cfg = dir.join("config.json");
    let (a, b) = (dir.join("a"), dir.join("b"));
    ok(&w2reg(
        &["train", "--data", p(&data), "--config", p(&cfg), "--lambda", "0", "--seed", "3", "--out", p(&a)],
        dir,
    ));
    ok(&w2reg(
        &["train", "--data", p(&data), "--config", p(&cfg), "--baseline-only", "--seed", "3", "--out", p(&b)],
        dir,
    ));
    let regularized = fs::read(a.join("checkpoints/regularized.json")).expect("class selected");
    assert_eq!(regularized, fs::read(b.join("checkpoints/baseline.json")).unwrap());
    assert_eq!(
        fs::read(a.join("checkpoints/baseline.json")).unwrap(),
        fs::read(b.join("checkpoints/baseline.json")).unwrap()
    );
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = generate(dir);
    let run = dir.join("run");
    let cfg = dir.join("config.json");
    let args = ["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&run)];
    ok(&w2reg(&args, dir));
    let snapshot: Vec<(String, Vec<u8>)> = ["manifest.json", "metrics.csv", "checkpoints/baseline.json", "audit/baseline_test.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(run.join(f)).unwrap()))
        .collect();
    ok(&w2reg(&args, dir));
    for (f, bytes) in snapshot {
        assert_eq!(fs::read(run.join(&f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn audit_of_perfect_predictor_has_zero_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("x1,x2,x3,label,group\n");
    for i in 0..30 {
        let class = i % 3;
        let mut x = [0.0; 3];
        x[class] = 1.0;
        csv += &format!("{},{},{},{},{}\n", x[0], x[1], x[2], class + 1, (i / 3) % 2);
    }
    fs::write(dir.join("perfect.csv"), csv).unwrap();
    let ck = json!({
        "format": "w2reg-checkpoint", "version": 1, "seed": 0,
        "layer_sizes": [3, 3], "hidden_activation": "tanh", "output": "softmax",
        "layers": [{"weights": [[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]], "bias": [0.0, 0.0, 0.0]}]
    });
    fs::write(dir.join("ck.json"), ck.to_string()).unwrap();
    let out = w2reg(
        &["audit", "--data", p(&dir.join("perfect.csv")), "--checkpoint", p(&dir.join("ck.json"))],
        dir,
    );
    ok(&out);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["tpr_gap"], json!([0.0, 0.0, 0.0]));
}

#[test]
fn default_output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    write_inputs(tmp.path());
    ok(&w2reg(&["generate", "--spec", p(&tmp.path().join("spec.json"))], &root));
    assert!(root.join("data/data.csv").is_file());
}

#[test]
fn sweep_writes_one_run_per_member_and_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = generate(dir);
    let sweep = dir.join("sweep");
    ok(&w2reg(
        &[
            "sweep", "--data", p(&data), "--config", p(&dir.join("config.json")),
            "--seeds", "1,2", "--lambdas", "0,10", "--jobs", "2", "--epochs", "3", "--out", p(&sweep),
        ],
        dir,
    ));
    for m in ["seed1-lambda0", "seed1-lambda10", "seed2-lambda0", "seed2-lambda10"] {
        assert!(sweep.join(m).join("manifest.json").is_file(), "{m}");
    }
    let table = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("# run=")).count(), 4);
    assert!(table.contains("run,seed,lambda,model,accuracy,f1_macro,f1_weighted,selected,tpr_gap_class_1"));

    ok(&w2reg(&["report", p(&sweep)], dir));
    let acc = fs::read_to_string(sweep.join("report/accuracy_f1.csv")).unwrap();
    assert!(acc.lines().any(|l| l.starts_with("seed2-lambda10,2,")));
}

#[test]
fn errors_have_distinct_exit_codes_and_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = generate(dir);

    let usage = w2reg(&["train", "--no-such-flag"], dir);
    assert_eq!(code(&usage), 2);

    let config = w2reg(
        &["train", "--data", p(&data), "--config", p(&dir.join("missing.json"))],
        dir,
    );
    assert_eq!(code(&config), 3);
    let stderr = String::from_utf8(config.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("w2reg: error[config]:"), "{stderr}");

    fs::write(dir.join("bad.json"), r#"{"epochs": 2, "split": [0.5, 0.6, 0.1]}"#).unwrap();
    let invalid = w2reg(&["train", "--data", p(&data), "--config", p(&dir.join("bad.json"))], dir);
    assert_eq!(code(&invalid), 3);

    let missing = w2reg(&["train", "--data", p(&dir.join("nope.csv"))], dir);
    assert_eq!(code(&missing), 4);

    fs::write(dir.join("broken.csv"), "a,label,group\n1.0,1,0\n2.0,1,2\n").unwrap();
    let broken = w2reg(&["train", "--data", p(&dir.join("broken.csv"))], dir);
    assert_eq!(code(&broken), 4);
    let stderr = String::from_utf8(broken.stderr).unwrap();
    assert!(stderr.contains("row 3") && stderr.contains("group"), "{stderr}");

    let blocker = dir.join("file");
    fs::write(&blocker, "").unwrap();
    let io = w2reg(
        &["generate", "--spec", p(&dir.join("spec.json")), "--out", p(&blocker.join("sub"))],
        dir,
    );
    assert_eq!(code(&io), 5);
}
