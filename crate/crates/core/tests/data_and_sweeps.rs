use std::fs;

use dpadapt::data_io::{
    generate_synthetic, load_dataset, resample_target, write_dataset_csv, DatasetManifest, LabelRule, SyntheticShiftSpec,
};
use dpadapt::harness::{emit_results, read_results, run_sweep, Epsilon, SweepSpec};
use dpadapt::rng::substream;
use dpadapt::AdaptError;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn csv_is_rescaled_to_the_feature_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "d.csv",
        "a,b,label,domain\n3,4,0.5,source\n1,0,-0.5,target\n0,2,0.25,target\n",
    );
    let loaded = load_dataset(&DatasetManifest::new(&path, 2.0)).unwrap();
    assert_eq!((loaded.data.m(), loaded.data.n(), loaded.data.dim()), (1, 2, 2));
    assert!((loaded.scale - 0.4).abs() < 1e-15);
    assert!((loaded.data.max_row_norm() - 2.0).abs() < 1e-12);
    assert!((loaded.data.public_x()[[0, 0]] - 1.2).abs() < 1e-15);
    assert_eq!(loaded.clipped_labels, 0);
}

#[test]
fn regression_labels_are_clipped() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "d.csv", "x,label,domain\n1,3,source\n1,-2,target\n1,0.5,target\n");
    let loaded = load_dataset(&DatasetManifest::new(&path, 1.0)).unwrap();
    assert_eq!(loaded.clipped_labels, 2);
    assert_eq!(loaded.data.public_y()[0], 1.0);
    assert_eq!(loaded.data.private_y()[0], -1.0);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "x,label\n1,0\n",
        "x,label,domain\n1,0,source\n",
        "x,label,domain\n1,0,source\n1,0,elsewhere\n",
        "x,label,domain\n1,0,source\nfoo,0,target\n",
    ];
    for (i, body) in cases.iter().enumerate() {
        let path = write(&dir, &format!("bad{i}.csv"), body);
        let err = load_dataset(&DatasetManifest::new(&path, 1.0)).unwrap_err();
        assert!(matches!(err, AdaptError::InvalidDataset(_)), "case {i}: {err}");
    }
    let missing = DatasetManifest {
        feature_columns: vec!["nope".into()],
        ..DatasetManifest::new(write(&dir, "ok.csv", "x,label,domain\n1,0,source\n1,0,target\n"), 1.0)
    };
    assert!(load_dataset(&missing).is_err());
}

fn gaussian_shift(d: usize) -> SyntheticShiftSpec {
    SyntheticShiftSpec {
        d,
        base_mean: Vec::new(),
        base_cov: Vec::new(),
        source_gaussian_fraction: 0.95,
        target_gaussian_fraction: 0.05,
        label_rule: LabelRule::LinearRegression,
        noise_std: 0.1,
        feature_bound: 1.0,
        w_star_norm: 1.0,
        target_label_shift: 0.0,
    }
}

#[test]
fn synthetic_mixture_counts_follow_the_fractions() {
    let spec = gaussian_shift(5);
    let out = generate_synthetic(&spec, 1000, 1000, &mut substream(61, "synth", &[])).unwrap();
    // Binomial(1000, 0.95): standard deviation ≈ 6.9; allow four of them.
    assert!((out.source_gaussian_count as i64 - 950).abs() <= 28, "{}", out.source_gaussian_count);
    assert!((out.target_gaussian_count as i64 - 50).abs() <= 28, "{}", out.target_gaussian_count);
    assert!(out.data.max_row_norm() <= 1.0 + 1e-12);
    assert!(out.data.public_y().iter().chain(out.data.private_y()).all(|y| y.abs() <= 1.0));
}

#[test]
fn written_csv_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate_synthetic(&gaussian_shift(3), 30, 20, &mut substream(62, "synth", &[])).unwrap();
    let path = dir.path().join("synth.csv");
    write_dataset_csv(&out.data, &path).unwrap();
    // The largest row has norm at most 1, so rescaling to its own norm is a
    // pure scale change; compare after undoing it.
    let back = load_dataset(&DatasetManifest::new(&path, out.data.max_row_norm())).unwrap();
    assert_eq!(back.data.public_y(), out.data.public_y());
    assert_eq!(back.data.private_y(), out.data.private_y());
    let diff = (&back.data.public_x() - &out.data.public_x()).mapv(f64::abs).sum();
    assert!(diff < 1e-12);
}

#[test]
fn resampling_draws_from_the_pool() {
    let out = generate_synthetic(&gaussian_shift(2), 10, 5, &mut substream(63, "synth", &[])).unwrap();
    let big = resample_target(&out.data, 200, &mut substream(0, "r", &[])).unwrap();
    assert_eq!(big.n(), 200);
    assert_eq!(big.public_x(), out.data.public_x());
    for row in big.private_x().rows() {
        assert!(out.data.private_x().rows().into_iter().any(|r| r == row));
    }
}

const SMALL_SWEEP: &str = r#"
algorithm = "cnvx"
epsilons = [1, "inf"]
target_sizes = [40, 80]
trials = 1
master_seed = 5
metric = "relative_mse"
iterations = 200

[loss]
kind = "squared"

[reg]
alpha = 0.5

[dataset]
kind = "synthetic"
m = 60
target_pool = 15
test_size = 100

[dataset.spec]
d = 3
source_gaussian_fraction = 0.95
target_gaussian_fraction = 0.05
label_rule = "linear_regression"
noise_std = 0.2
"#;

#[test]
fn sweep_covers_the_grid() {
    let spec = SweepSpec::from_toml_str(SMALL_SWEEP).unwrap();
    let result = run_sweep(&spec).unwrap();
    assert_eq!(result.records.len(), 4);
    assert_eq!(result.aggregates.len(), 4);
    assert!(result.aggregates.iter().all(|a| a.count == 1 && a.std.is_none()));
    let mut cells: Vec<(String, usize)> = result.records.iter().map(|r| (r.epsilon.to_string(), r.n)).collect();
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 4);
    assert!(result.records.iter().all(|r| r.metric_value > 0.0 && r.t_used == 200));
    // Privacy levels of one (n, trial) share the fit seed.
    for n in [40, 80] {
        let seeds: Vec<u64> = result.records.iter().filter(|r| r.n == n).map(|r| r.seed).collect();
        assert_eq!(seeds[0], seeds[1]);
    }
}

#[test]
fn sweep_output_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec::from_toml_str(SMALL_SWEEP).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let first = run_sweep(&spec).unwrap();
    let csv = emit_results(&first, &a).unwrap();
    emit_results(&run_sweep(&spec).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(fs::read_to_string(csv).unwrap().starts_with("epsilon,n,trial"));

    let back = read_results(&a).unwrap();
    assert_eq!(back.records, first.records);
    assert_eq!(back.aggregates, first.aggregates);
    assert_eq!(back.metadata, first.metadata);
    assert!(back.records.iter().any(|r| r.epsilon == Epsilon(f64::INFINITY)));
}

#[test]
fn empty_sweep_output_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec::from_toml_str(SMALL_SWEEP).unwrap();
    let mut result = run_sweep(&spec).unwrap();
    result.records.clear();
    result.aggregates.clear();
    result.wall_times.clear();
    let path = dir.path().join("empty.jsonl");
    emit_results(&result, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
    let back = read_results(&path).unwrap();
    assert!(back.records.is_empty() && back.aggregates.is_empty());
}

#[test]
fn invalid_sweeps_are_rejected() {
    for (from, to) in [
        ("trials = 1", "trials = 0"),
        ("epsilons = [1, \"inf\"]", "epsilons = []"),
        ("epsilons = [1, \"inf\"]", "epsilons = [-1]"),
        ("alpha = 0.5", "alpha = 1.5"),
        ("iterations = 200", "iterations = 0"),
    ] {
        let text = SMALL_SWEEP.replace(from, to);
        assert!(SweepSpec::from_toml_str(&text).is_err(), "{to}");
    }
    let logistic = SMALL_SWEEP.replace("kind = \"squared\"", "kind = \"logistic\"");
    // The convex objective needs the squared loss, at parse or at run time.
    assert!(SweepSpec::from_toml_str(&logistic).and_then(|s| run_sweep(&s)).is_err());
}
