use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn transit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transit"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a subcommand on the demo corpus, writing into `out`.
fn demo(command: &str, out: &Path, extra: &[&str]) -> Output {
    let corpus = data("demo_corpus.jsonl");
    let venues = data("demo_venues.txt");
    let out = out.to_string_lossy();
    let mut args = vec![command, "--corpus", &corpus, "--venues", &venues, "--out", &out];
    args.extend_from_slice(extra);
    transit(&args)
}

fn ok(output: Output) -> String {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<BTreeMap<String, String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn ingest_counts_the_demo_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(demo("ingest", dir.path(), &[]));
    assert!(stdout.contains("users: 12"));
    let summary = json(dir.path().join("ingest_summary.json"));
    assert_eq!(summary["posts"], 88);
    assert_eq!(summary["malformed"], 2);
    assert_eq!(summary["out_of_venue"], 1);
}

#[test]
fn empty_corpus_is_not_an_error_but_a_missing_one_is() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("out");
    let run = |corpus: &Path| {
        transit(&[
            "ingest",
            "--corpus",
            &corpus.to_string_lossy(),
            "--venues",
            &data("demo_venues.txt"),
            "--out",
            &out.to_string_lossy(),
        ])
    };
    assert!(ok(run(&empty)).contains("users: 0"));
    let missing = run(&dir.path().join("nope.jsonl"));
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.jsonl"));
}

#[test]
fn cohort_matches_the_demo_design() {
    let dir = tempfile::tempdir().unwrap();
    ok(demo("cohort", dir.path(), &[]));
    let labels: Vec<(String, String)> = csv_rows(dir.path().join("cohort.csv"))
        .into_iter()
        .map(|r| (r["author"].clone(), r["label"].clone()))
        .collect();
    let expect = |names: &[&str], label: &str| names.iter().map(|n| (n.to_string(), label.to_owned())).collect::<Vec<_>>();
    let mut expected = expect(&["amber_fox", "blue_heron", "cedar_moth", "dune_lark"], "CAS_TO_RECOV");
    expected.extend(expect(&["elm_otter", "fern_wren", "gale_moss", "heath_pike"], "CAS"));
    expected.sort();
    assert_eq!(labels, expected);

    let survival: Vec<(String, u32, String)> = csv_rows(dir.path().join("survival.csv"))
        .into_iter()
        .map(|r| (r["author"].clone(), r["time_days"].parse().unwrap(), r["event"].clone()))
        .collect();
    assert_eq!(
        survival,
        [
            ("amber_fox".to_owned(), 200, "1".to_owned()),
            ("blue_heron".to_owned(), 365, "0".to_owned()),
            ("elm_otter".to_owned(), 365, "0".to_owned()),
            ("iris_vole".to_owned(), 50, "1".to_owned()),
        ]
    );
}

#[test]
fn one_day_horizon_censors_everyone() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(demo("km", dir.path(), &["--horizon-days", "1"]));
    assert!(stdout.starts_with("4 users, 0 events"), "{stdout}");
    for r in csv_rows(dir.path().join("km.csv")) {
        assert!(r["t"].parse::<f64>().unwrap() <= 1.0);
        assert_eq!(r["survival"], "1");
    }
    // No transition can happen inside a one-day horizon.
    let cohort = demo("cohort", dir.path(), &["--horizon-days", "1"]);
    assert!(!cohort.status.success());
    assert!(String::from_utf8_lossy(&cohort.stderr).contains("positives: 0"));
}

#[test]
fn forest_predictions_for_known_users() {
    let dir = tempfile::tempdir().unwrap();
    ok(demo("train-forest", dir.path(), &[]));
    let model = dir.path().join("forest_model.json");
    let model = model.to_string_lossy();
    let predictions = dir.path().join("pred");
    ok(demo("predict", &predictions, &["--model", &model, "--author", "amber_fox"]));
    ok(demo("predict", &predictions, &["--model", &model, "--author", "elm_otter"]));
    assert_eq!(csv_rows(predictions.join("prediction_amber_fox.csv"))[0]["label"], "CAS_TO_RECOV");
    assert_eq!(csv_rows(predictions.join("prediction_elm_otter.csv"))[0]["label"], "CAS");

    let unknown = demo("predict", &predictions, &["--model", &model, "--author", "nobody"]);
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown author"));
}

fn curve(path: PathBuf) -> Vec<(f64, f64)> {
    csv_rows(path)
        .into_iter()
        .map(|r| (r["t"].parse().unwrap(), r["survival"].parse().unwrap()))
        .collect()
}

#[test]
fn cox_curves_are_non_increasing_and_null_model_gives_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    ok(demo("train-cox", dir.path(), &[]));
    let model_path = dir.path().join("cox_model.json");
    let preds = dir.path().join("pred");
    ok(demo("predict", &preds, &["--model", &model_path.to_string_lossy(), "--author", "amber_fox"]));
    let fitted = curve(preds.join("survival_amber_fox.csv"));
    assert!(fitted.windows(2).all(|w| w[1].1 <= w[0].1));

    let mut saved = json(model_path);
    for key in ["beta", "beta_original"] {
        for b in saved["model"]["model"][key].as_array_mut().unwrap() {
            *b = 0.0.into();
        }
    }
    let null_path = dir.path().join("null_model.json");
    fs::write(&null_path, saved.to_string()).unwrap();
    let null_out = dir.path().join("null");
    ok(demo("predict", &null_out, &["--model", &null_path.to_string_lossy(), "--author", "amber_fox"]));
    assert_eq!(
        curve(null_out.join("survival_amber_fox.csv")),
        curve(dir.path().join("baseline_survival.csv"))
    );
}

/// Type-7 quantile of unsorted values.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - h.floor()) * (v[hi] - v[lo])
}

#[test]
fn report_quartiles_and_constant_features() {
    let dir = tempfile::tempdir().unwrap();
    ok(demo("features", dir.path(), &[]));
    ok(demo("report", dir.path(), &[]));

    let features = csv_rows(dir.path().join("features.csv"));
    let distributions = csv_rows(dir.path().join("feature_distributions.csv"));
    assert!(!distributions.is_empty());
    for row in &distributions {
        let values: Vec<f64> = features
            .iter()
            .filter(|f| f["label"] == row["label"])
            .map(|f| f[&row["feature"]].parse().unwrap())
            .collect();
        assert_eq!(row["n"].parse::<usize>().unwrap(), values.len());
        for (col, q) in [("q25", 0.25), ("q50", 0.5), ("q75", 0.75)] {
            let got: f64 = row[col].parse().unwrap();
            assert!((got - quantile(&values, q)).abs() < 1e-12, "{} {col}", row["feature"]);
        }
    }

    let screening = csv_rows(dir.path().join("kw_screening.csv"));
    let constant = screening.iter().find(|r| r["feature"] == "drug:Buprenorphine").unwrap();
    assert_eq!(constant["h"].parse::<f64>().unwrap(), 0.0);
    assert_eq!(constant["p"].parse::<f64>().unwrap(), 1.0);
    assert_eq!(constant["selected"], "false");
    let p: Vec<f64> = screening.iter().map(|r| r["p"].parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]));
    assert!(fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("seed 42"));
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".transit.lock"), "").unwrap();
    let out = demo("ingest", dir.path(), &[]);
    assert!(!out.status.success());
    assert!(!dir.path().join("ingest_summary.json").exists());

    let free = tempfile::tempdir().unwrap();
    ok(demo("ingest", free.path(), &[]));
    assert!(!free.path().join(".transit.lock").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        for command in ["cohort", "features", "train-forest", "train-cox", "report", "km"] {
            ok(demo(command, dir.path(), &[]));
        }
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 15);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        format!(
            "# demo run\ncorpus = {}\nvenues = {}\nhorizon_days = 1\n",
            data("demo_corpus.jsonl"),
            data("demo_venues.txt")
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(transit(&["km", "--config", &config.to_string_lossy(), "--out", &out.to_string_lossy()]));
    assert!(stdout.contains("S(1) ="), "{stdout}");
    let stdout = ok(transit(&[
        "km",
        "--config",
        &config.to_string_lossy(),
        "--horizon-days",
        "365",
        "--out",
        &out.to_string_lossy(),
    ]));
    assert!(stdout.contains("S(365) ="), "{stdout}");
}
