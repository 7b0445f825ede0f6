use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use cartimark::cli::run;
use cartimark::fsutil::sha256_file;
use cartimark::report::EvaluationReport;
use serde_json::Value;

fn cli(data_dir: &Path, args: &[&str]) -> i32 {
    let mut argv: Vec<OsString> = vec!["cartimark".into(), "--data-dir".into(), data_dir.into()];
    argv.extend(args.iter().map(OsString::from));
    run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn outputs_are_consistent(dir: &Path) {
    let outputs = json(&dir.join("outputs.json"));
    let files = outputs["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let path = dir.join(f["path"].as_str().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_file(&path).unwrap());
        assert_eq!(f["bytes"].as_u64().unwrap(), fs::metadata(&path).unwrap().len());
    }
}

fn no_partials(parent: &Path) {
    for e in fs::read_dir(parent).unwrap() {
        let name = e.unwrap().file_name().to_string_lossy().to_string();
        assert!(!name.contains(".partial-"), "leftover {name}");
    }
}

#[test]
fn pipeline_from_phantoms_to_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = |s: &str| -> String { d.join(s).to_str().unwrap().to_string() };
    let op = |s: &str| -> PathBuf { d.join(s) };
    assert_eq!(cli(d, &["phantom", "--n-patients", "40", "--seed", "4", "--out", &o("ph")]), 0);
    outputs_are_consistent(&op("ph"));
    let manifest = op("ph/manifest.json");
    assert_eq!(cli(d, &["validate", "--manifest", p(&manifest), "--out", &o("va")]), 0);
    assert_eq!(cli(d, &["split", "--manifest", p(&manifest), "--seed", "8", "--out", &o("sp")]), 0);
    let split = op("sp/split.json");
    for view in ["sagittal", "coronal"] {
        let code = cli(
            d,
            &["train", "--manifest", p(&manifest), "--split", p(&split), "--view", view, "--epochs", "3", "--learning-rate", "0.01", "--out", &o(view)],
        );
        assert_eq!(code, 0);
        outputs_are_consistent(&op(view));
    }
    let fuse = [
        "fuse-train", "--manifest", p(&manifest), "--split", p(&split),
        "--sagittal", &o("sagittal/model.json"), "--coronal", &o("coronal/model.json"), "--out", &o("fu"),
    ];
    assert_eq!(cli(d, &fuse), 0);
    let fusion = op("fu/fusion.json");
    assert!(op("fu/sagittal/model.json").is_file() && op("fu/coronal/weights.json").is_file());

    assert_eq!(cli(d, &["predict", "--model", p(&fusion), "--manifest", p(&manifest), "--split", p(&split), "--out", &o("pr")]), 0);
    assert_eq!(
        cli(d, &["predict", "--model", &o("sagittal/model.json"), "--manifest", p(&manifest), "--split", p(&split), "--out", &o("ps")]),
        0
    );
    let lines = fs::read_to_string(op("pr/predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4); // floor(0.1 * 40)

    let eval = [
        "evaluate", "--predictions", &o("pr/predictions.jsonl"), &o("ps/predictions.jsonl"),
        "--truth", p(&manifest), "--split", p(&split), "--subset", "test", "--out", &o("ev"),
    ];
    assert_eq!(cli(d, &eval), 0);
    let report: EvaluationReport = serde_json::from_value(json(&op("ev/report.json"))).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.plot.curves.len(), 2);
    for row in &report.rows {
        assert_eq!(row.confusion.total(), 4);
    }

    assert_eq!(cli(d, &["roc-plot", "--report", &o("ev/report.json"), "--out", &o("roc")]), 0);
    let svg = fs::read_to_string(op("roc/roc.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 2);

    let patient = lines.lines().next().map(|l| serde_json::from_str::<Value>(l).unwrap()["patient_id"].as_str().unwrap().to_string()).unwrap();
    let sal = |out: &str| cli(d, &["saliency", "--model", p(&fusion), "--patient", &patient, "--manifest", p(&manifest), "--out", &o(out)]);
    assert_eq!(sal("sa1"), 0);
    assert_eq!(sal("sa2"), 0);
    for view in ["sagittal", "coronal"] {
        let overlay = format!("overlay_{patient}_{view}.png");
        assert_eq!(fs::read(op("sa1").join(&overlay)).unwrap(), fs::read(op("sa2").join(&overlay)).unwrap());
        let map = json(&op("sa1").join(format!("saliency_{patient}_{view}.json")));
        let values: Vec<f64> = serde_json::from_value(map["values"].clone()).unwrap();
        assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(values.contains(&1.0));
        let img = image::open(op("sa1").join(&overlay)).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
    }
    no_partials(d);
}

#[test]
fn split_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(cli(d, &["phantom", "--n-patients", "50", "--out", p(&d.join("ph"))]), 0);
    let m = d.join("ph/manifest.json");
    for (out, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        assert_eq!(cli(d, &["split", "--manifest", p(&m), "--seed", seed, "--out", p(&d.join(out))]), 0);
    }
    let read = |s: &str| fs::read(d.join(s).join("split.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn default_output_goes_under_runs() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(tmp.path(), &["reproduce-tables"]), 0);
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let stage = runs[0].join("reproduce-tables");
    outputs_are_consistent(&stage);
    let report = json(&stage.join("report.json"));
    assert_eq!(report["audit"]["all_pass"], Value::Bool(true));
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn failures_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = d.join("t");
    let code = cli(d, &["train", "--manifest", p(&d.join("missing.json")), "--split", "x.json", "--view", "sagittal", "--out", p(&out)]);
    assert_eq!(code, 2);
    assert!(!out.exists());
    no_partials(d);

    // Existing non-empty targets are never overwritten.
    assert_eq!(cli(d, &["reproduce-tables", "--out", p(&out)]), 0);
    let before = fs::read(out.join("report.json")).unwrap();
    assert_eq!(cli(d, &["roc-plot", "--out", p(&out)]), 2);
    assert_eq!(fs::read(out.join("report.json")).unwrap(), before);
    assert!(!out.join("roc.svg").exists());

    // An empty existing directory is fine.
    fs::create_dir(d.join("empty")).unwrap();
    assert_eq!(cli(d, &["roc-plot", "--out", p(&d.join("empty"))]), 0);
    assert!(d.join("empty/roc.svg").is_file());
}

#[test]
fn usage_errors_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(tmp.path(), &["--help"]), 0);
    assert_eq!(cli(tmp.path(), &["train", "--help"]), 0);
    assert_eq!(cli(tmp.path(), &["train", "--bogus"]), 2);
    assert_eq!(cli(tmp.path(), &["train", "--manifest", "m", "--split", "s", "--view", "axial"]), 2);
    assert_eq!(cli(tmp.path(), &["split", "--manifest", "m", "--ratios", "0.5,0.5"]), 2);
    assert!(!tmp.path().join("runs").exists() || fs::read_dir(tmp.path().join("runs")).unwrap().count() == 0);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = d.join("run.toml");
    fs::write(&cfg, "seed = 99\n\n[phantom]\nn_patients = 10\nimage_size = 40\n").unwrap();
    assert_eq!(cli(d, &["--config", p(&cfg), "phantom", "--out", p(&d.join("a"))]), 0);
    assert_eq!(cli(d, &["--config", p(&cfg), "phantom", "--n-patients", "12", "--out", p(&d.join("b"))]), 0);
    let count = |s: &str| json(&d.join(s).join("manifest.json"))["records"].as_array().unwrap().len();
    assert_eq!(count("a"), 10);
    assert_eq!(count("b"), 12);
    let cfg_a = json(&d.join("a/phantom_config.json"));
    assert_eq!(cfg_a["image_size"], 40);
    // The subcommand table shadows top-level keys, so the seed is the default.
    assert_eq!(cfg_a["seed"], 7);

    let js = d.join("run.json");
    fs::write(&js, r#"{"n_patients": 14, "seed": 5}"#).unwrap();
    assert_eq!(cli(d, &["phantom", "--config", p(&js), "--out", p(&d.join("c"))]), 0);
    assert_eq!(count("c"), 14);
    assert_eq!(json(&d.join("c/phantom_config.json"))["seed"], 5);

    fs::write(&js, r#"{"no_such_flag": 1}"#).unwrap();
    assert_eq!(cli(d, &["phantom", "--config", p(&js), "--out", p(&d.join("e"))]), 2);
}
