use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn palsy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palsy")).args(args).env_remove("PALSY_BENCH_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = palsy(args);
    assert!(out.status.success(), "palsy {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic cohort with the given class counts, preprocessed.
fn cohort(dir: &TempDir, counts: [usize; 3], seed: u64) -> PathBuf {
    let raw = dir.path().join("raw");
    let [p, c, h] = counts.map(|n| n.to_string());
    ok(&["synth", "--peripheral", &p, "--central", &c, "--healthy", &h, "--seed", &seed.to_string(), "--out", s(&raw)]);
    let processed = dir.path().join("processed");
    ok(&["preprocess", "--data", s(&raw.join("cohort.csv")), "--out", s(&processed)]);
    processed.join("processed.csv")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn missing_input_fails_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for cmd in ["preprocess", "evaluate"] {
        let res = palsy(&[cmd, "--data", "/no/such/cohort.csv", "--view", "metrics", "--model", "gnb", "--out", s(&out)]);
        assert!(!res.status.success());
        assert!(String::from_utf8_lossy(&res.stderr).contains("does not exist"));
        assert!(!out.exists(), "{cmd} left {out:?} behind");
    }
}

#[test]
fn synthetic_cohort_has_no_exclusions() {
    let dir = TempDir::new().unwrap();
    cohort(&dir, [6, 4, 4], 1);
    let report = json(&dir.path().join("processed/pipeline_report.json"));
    assert_eq!(report["pipeline"]["excluded"].as_array().unwrap().len(), 0);
    assert_eq!(report["pipeline"]["retained_count"], 14);
    assert_eq!(report["provenance"]["config"]["command"], "preprocess");
}

#[test]
fn same_config_gives_identical_reports_at_any_thread_count() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [10, 6, 6], 3);
    for model in ["gnb", "forest", "svm"] {
        let mut outputs = Vec::new();
        for (i, threads) in ["1", "4"].iter().enumerate() {
            let out = dir.path().join(format!("{model}-{i}"));
            ok(&[
                "evaluate", "--data", s(&data), "--view", "nochin", "--model", model, "--trees", "15", "--seed", "11",
                "--threads", threads, "--out", s(&out),
            ]);
            outputs.push(std::fs::read(out.join(format!("eval_{model}_no_chin.json"))).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{model}");
    }
}

#[test]
fn report_embeds_provenance() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [6, 4, 4], 2);
    let out = dir.path().join("e");
    ok(&["evaluate", "--data", s(&data), "--view", "metrics", "--model", "knn", "--k", "3", "--out", s(&out)]);
    let r = json(&out.join("eval_knn_metrics.json"));
    let p = &r["provenance"];
    assert_eq!(p["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(p["seed"], 0);
    assert_eq!(p["catalog_version"], "palsy-metrics/1");
    assert!(p["versions"]["palsy_core"].is_string() && p["versions"]["palsy_cli"].is_string());
    assert_eq!(p["config"]["model"], serde_json::json!({ "family": "knn", "k": 3 }));
    assert_eq!(r["result"]["n"], 14);
    assert!(std::fs::read_to_string(out.join("eval_knn_metrics.txt")).unwrap().contains("predicted \\ actual"));
}

#[test]
fn seed_comes_from_flag_then_file_then_environment() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [6, 4, 4], 2);
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "model = \"gnb\"\nview = \"metrics\"\nseed = 17\n").unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let out = dir.path().join("seed");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_palsy"));
        cmd.args(["evaluate", "--data", s(&data), "--out", s(&out)]).args(extra).env_remove("PALSY_BENCH_SEED");
        if let Some(v) = env {
            cmd.env("PALSY_BENCH_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        json(&out.join("eval_gnb_metrics.json"))["provenance"]["seed"].as_u64().unwrap()
    };
    let cfg = ["--config", s(&config)];
    assert_eq!(seed_of(&cfg, Some("5")), 17);
    assert_eq!(seed_of(&[&cfg[..], &["--seed", "3"]].concat(), Some("5")), 3);
    assert_eq!(seed_of(&["--model", "gnb", "--view", "metrics"], Some("5")), 5);
    assert_eq!(seed_of(&["--model", "gnb", "--view", "metrics"], None), 0);
}

#[test]
fn single_value_sweep_matches_evaluate() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [10, 6, 6], 4);
    let cases: [(&str, &str, &str, &[&str]); 3] = [
        ("forest", "trees", "12", &["--trees", "12"]),
        ("knn", "k", "4", &["--k", "4"]),
        ("tree", "depth", "3", &["--depth", "3"]),
    ];
    for (model, param, value, flag) in cases {
        let t = dir.path().join(format!("tune-{model}"));
        let e = dir.path().join(format!("eval-{model}"));
        let common = ["--data", s(&data), "--view", "metrics", "--model", model, "--seed", "9"];
        ok(&[&["tune"], &common[..], &["--param", param, "--values", value, "--out", s(&t)]].concat());
        ok(&[&["evaluate"], &common[..], flag, &["--out", s(&e)]].concat());
        let rows = csv_rows(&t.join(format!("tune_{model}_metrics_{param}.csv")));
        assert_eq!(rows.len(), 1);
        let eval = json(&e.join(format!("eval_{model}_metrics.json")));
        let tuned: f64 = rows[0][1].parse().unwrap();
        assert_eq!(tuned, eval["result"]["accuracy"].as_f64().unwrap(), "{model}");
        assert!(t.join(format!("tune_{model}_metrics_{param}.svg")).exists());
    }
}

#[test]
fn full_published_sweep_ranges() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [8, 5, 5], 5);
    let out = dir.path().join("t");
    ok(&["tune", "--data", s(&data), "--view", "metrics", "--model", "forest", "--out", s(&out)]);
    assert_eq!(csv_rows(&out.join("tune_forest_metrics_trees.csv")).len(), 200);
    ok(&["tune", "--data", s(&data), "--view", "nochin", "--model", "svm", "--out", s(&out)]);
    let rows = csv_rows(&out.join("tune_svm_no_chin_degree.csv"));
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.iter().map(|r| r[0].parse::<usize>().unwrap()).collect::<Vec<_>>(), (1..=40).collect::<Vec<_>>());
}

#[test]
fn every_model_runs_on_a_two_row_cohort() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [1, 1, 0], 6);
    for model in ["gnb", "tree", "knn", "forest", "svm"] {
        let out = dir.path().join(model);
        ok(&["evaluate", "--data", s(&data), "--view", "landmarks", "--model", model, "--out", s(&out)]);
        let r = json(&out.join(format!("eval_{model}_landmarks.json")));
        assert_eq!(r["result"]["n"], 2, "{model}");
        assert_eq!(r["result"]["predictions"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn scale_is_deterministic_and_handles_the_shortest_schedule() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [14, 8, 8], 7);
    let run = |out: &Path, extra: &[&str]| {
        ok(&[&["scale", "--data", s(&data), "--view", "metrics", "--model", "knn", "--seed", "2", "--out", s(out)], extra]
            .concat());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, &["--floor", "12", "--stride", "3"]);
    run(&b, &["--floor", "12", "--stride", "3"]);
    for f in ["scale_knn_metrics.csv", "scale_knn_metrics.json", "scale_knn_metrics.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sizes: Vec<usize> = csv_rows(&a.join("scale_knn_metrics.csv")).iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(sizes, vec![30, 27, 24, 21, 18, 15, 12]);

    let c = dir.path().join("c");
    run(&c, &["--floor", "29"]);
    let r = json(&c.join("scale_knn_metrics.json"));
    assert_eq!(r["series"]["points"].as_array().unwrap().len(), 2);
    let acc: Vec<f64> = r["series"]["points"].as_array().unwrap().iter().map(|p| p["accuracy"].as_f64().unwrap()).collect();
    let error = r["fits"]["accuracy"]["error"].as_str().unwrap();
    if acc[0] == acc[1] {
        assert!(error.contains("flat"), "{error}");
    } else {
        assert!(error.contains("at least 3"), "{error}");
    }
}

#[test]
fn train_then_predict_reproduces_labels() {
    let dir = TempDir::new().unwrap();
    let data = cohort(&dir, [8, 5, 5], 8);
    let m = dir.path().join("m");
    ok(&["train", "--data", s(&data), "--view", "nochin", "--model", "tree", "--out", s(&m)]);
    let p = dir.path().join("p");
    ok(&["predict", "--data", s(&data), "--model-file", s(&m.join("model_tree_no_chin.json")), "--out", s(&p)]);
    let rows = csv_rows(&p.join("predictions.csv"));
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| r[1] == r[2]), "an unbounded-enough tree fits its training set");
    let wrong = palsy(&[
        "predict", "--data", s(&data), "--view", "metrics", "--model-file", s(&m.join("model_tree_no_chin.json")),
        "--out", s(&dir.path().join("x")),
    ]);
    assert!(!wrong.status.success());
}

#[test]
fn featurize_writes_all_views() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw");
    ok(&["synth", "--peripheral", "3", "--central", "2", "--healthy", "2", "--format", "json", "--out", s(&raw)]);
    let f = dir.path().join("f");
    ok(&["featurize", "--data", s(&raw.join("cohort.json")), "--out", s(&f)]);
    for (view, width) in [("landmarks", 136), ("no_chin", 102), ("metrics", 52)] {
        let rows = csv_rows(&f.join(format!("features_{view}.csv")));
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0].len(), width + 2, "{view}");
    }
    let e = dir.path().join("e");
    ok(&["evaluate", "--data", s(&f.join("features_no_chin.csv")), "--model", "gnb", "--out", s(&e)]);
    assert!(e.join("eval_gnb_no_chin.json").exists());
    let mismatch = palsy(&[
        "evaluate", "--data", s(&f.join("features_no_chin.csv")), "--view", "metrics", "--model", "gnb", "--out",
        s(&dir.path().join("x")),
    ]);
    assert!(!mismatch.status.success());
}
