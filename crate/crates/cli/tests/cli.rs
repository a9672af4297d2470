use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpadapt-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn dpadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpadapt")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn synth(dir: &Path, rule: &str, m: usize, n: usize) -> PathBuf {
    let spec = dir.join(format!("{rule}.toml"));
    fs::write(
        &spec,
        format!(
            "d = 2\nsource_gaussian_fraction = 0.95\ntarget_gaussian_fraction = 0.05\n\
             label_rule = \"{rule}\"\nnoise_std = 0.2\n"
        ),
    )
    .unwrap();
    let csv = dir.join(format!("{rule}.csv"));
    let out = dpadapt(&[
        "gen-synth",
        "--spec",
        spec.to_str().unwrap(),
        "--m",
        &m.to_string(),
        "--n",
        &n.to_string(),
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    json(&out);
    csv
}

#[test]
fn regression_pipeline() {
    let dir = scratch("regression");
    let csv = synth(&dir, "linear_regression", 30, 20);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 51);
    let data = csv.to_str().unwrap();

    let est = json(&dpadapt(&["discrepancy", "--data", data, "--grid", "101"]));
    assert_eq!(est["d_dp"], est["d_hat"]);
    let private = json(&dpadapt(&["discrepancy", "--data", data, "--epsilon", "1", "--seed", "4"]));
    assert!((0.0..=4.0).contains(&private["d_dp"].as_f64().unwrap()));

    let args = ["fit-convex", "--data", data, "--epsilon", "2", "--T", "50", "--kappa1", "0.1"];
    let fit = json(&dpadapt(&args));
    assert_eq!(fit["result"]["iterations"], 50);
    assert_eq!(fit, json(&dpadapt(&args)));
}

#[test]
fn classification_pipeline() {
    let dir = scratch("classification");
    let csv = synth(&dir, "linear_classification", 20, 20);
    let out = json(&dpadapt(&[
        "fit-nonconvex",
        "--data",
        csv.to_str().unwrap(),
        "--epsilon",
        "inf",
        "--T",
        "40",
        "--lambda1",
        "0.1",
    ]));
    let t_star = out["result"]["output_index"].as_u64().unwrap();
    assert!((1..=40).contains(&t_star));
}

#[test]
fn sweep_writes_records() {
    let dir = scratch("sweep");
    let spec = dir.join("sweep.toml");
    fs::write(
        &spec,
        r#"
algorithm = "cnvx"
epsilons = [1, "inf"]
target_sizes = [30]
trials = 1
master_seed = 2
metric = "relative_mse"
iterations = 50

[loss]
kind = "squared"

[reg]
alpha = 0.5

[dataset]
kind = "synthetic"
m = 40
target_pool = 10
test_size = 50

[dataset.spec]
d = 2
source_gaussian_fraction = 0.95
target_gaussian_fraction = 0.05
label_rule = "linear_regression"
noise_std = 0.2
"#,
    )
    .unwrap();
    let out_path = dir.join("out.jsonl");
    let out = dpadapt(&["sweep", "--spec", spec.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().count() >= 3);
    for line in text.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
    assert!(out_path.with_extension("csv").exists());

    let baseline_path = dir.join("baseline.jsonl");
    let out = dpadapt(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        baseline_path.to_str().unwrap(),
        "--baseline",
        "target-only",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Target-only is the reference of the relative metric.
    for line in fs::read_to_string(&baseline_path).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if let Some(metric) = v.get("metric_value") {
            assert_eq!(metric.as_f64().unwrap(), 1.0);
        }
    }
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = scratch("bad");
    let missing = dir.join("absent.csv");
    let out = dpadapt(&["discrepancy", "--data", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let csv = synth(&dir, "linear_regression", 5, 5);
    let out = dpadapt(&["fit-convex", "--data", csv.to_str().unwrap(), "--T", "zero"]);
    assert!(!out.status.success());
    let out = dpadapt(&["fit-convex", "--data", csv.to_str().unwrap(), "--epsilon", "-1"]);
    assert!(!out.status.success());
    // Real-valued labels are not ±1.
    let out = dpadapt(&["fit-nonconvex", "--data", csv.to_str().unwrap(), "--T", "5"]);
    assert!(!out.status.success());
}
