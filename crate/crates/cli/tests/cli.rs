use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use ugsl::graph::save_dataset;
use ugsl::layer::EncoderKind;
use ugsl::search::SearchSpace;
use ugsl::synthetic::four_node_fixture;
use ugsl::trainer::{GslConfig, TrialResult, TrialStatus};

fn ugsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugsl")).args(args).env_remove("UGSL_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(dir: &Path) -> String {
    save_dataset(&four_node_fixture(), &dir.join("data")).unwrap().to_string_lossy().into_owned()
}

fn small_space(dir: &Path) -> String {
    let space = SearchSpace { max_epochs: 30, patience: 10, ..Default::default() };
    let p = dir.join("space.json");
    fs::write(&p, serde_json::to_string(&space).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

#[test]
fn train_base_writes_results_and_adjacency() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let out = tmp.path().join("run");
    let o = ugsl(&["train", "--data", &data, "--base", "--out", &p(&out), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let l = lines(&out.join("results.jsonl"));
    assert_eq!(l.len(), 2);
    let header: Value = serde_json::from_str(&l[0]).unwrap();
    assert_eq!(header["header"]["seed"], 3);
    assert_eq!(header["header"]["config_hash"].as_str().unwrap().len(), 64);
    let r: TrialResult = serde_json::from_str(&l[1]).unwrap();
    assert_eq!(r.status, TrialStatus::Completed);
    assert!(out.join("adjacency.tsv").exists());

    let again = tmp.path().join("again");
    assert_eq!(code(&ugsl(&["train", "--data", &data, "--base", "--out", &p(&again), "--seed", "3"])), 0);
    assert_eq!(lines(&again.join("results.jsonl"))[1..], l[1..]);
    assert_eq!(fs::read(again.join("adjacency.tsv")).unwrap(), fs::read(out.join("adjacency.tsv")).unwrap());
}

#[test]
fn seed_comes_from_environment_when_flag_absent() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let out = tmp.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_ugsl"))
        .args(["train", "--data", &data, "--base", "--out", &p(&out)])
        .env("UGSL_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header: Value = serde_json::from_str(&lines(&out.join("results.jsonl"))[0]).unwrap();
    assert_eq!(header["header"]["seed"], 11);
    let o = Command::new(env!("CARGO_BIN_EXE_ugsl"))
        .args(["train", "--data", &data, "--base", "--out", &p(&out), "--seed", "4"])
        .env("UGSL_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let header: Value = serde_json::from_str(&lines(&out.join("results.jsonl"))[0]).unwrap();
    assert_eq!(header["header"]["seed"], 4);
}

#[test]
fn exit_codes_for_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let out = p(&tmp.path().join("run"));

    let o = ugsl(&["train", "--data", "/nonexistent/manifest.json", "--base", "--out", &out]);
    assert_eq!(code(&o), 3);

    let mut cfg = GslConfig::base(4);
    cfg.model.sparsifier.k = 15;
    let cfg_path = tmp.path().join("bad.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = ugsl(&["train", "--data", &data, "--config", &p(&cfg_path), "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sparsifier.k"), "{}", stderr(&o));

    fs::write(&cfg_path, r#"{"lr": 0.01, "bogus": 1}"#).unwrap();
    assert_eq!(code(&ugsl(&["train", "--data", &data, "--config", &p(&cfg_path), "--out", &out])), 2);

    assert_eq!(code(&ugsl(&["train", "--data", &data, "--base", "--out", &out, "--frobnicate"])), 2);
    assert_eq!(code(&ugsl(&["train", "--data", &data, "--out", &out])), 2);
}

#[test]
fn stats_command() {
    let tmp = TempDir::new().unwrap();
    let path4 = tmp.path().join("p4.tsv");
    fs::write(&path4, "src\tdst\tweight\n0\t1\t1\n1\t2\t1\n2\t3\t1\n").unwrap();
    let csv = tmp.path().join("stats/p4.csv");
    let o = ugsl(&["stats", "--graph", &p(&path4), "--n", "4", "--out", &p(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let l = lines(&csv);
    let cols: BTreeMap<&str, &str> = l[0].split(',').zip(l[1].split(',')).collect();
    assert_eq!(cols["diameter"], "3");
    assert_eq!(cols["degenerate"], "false");
    assert!(tmp.path().join("stats/p4.csv.header.json").exists());

    let empty = tmp.path().join("empty.tsv");
    fs::write(&empty, "src\tdst\tweight\n").unwrap();
    let o = ugsl(&["stats", "--graph", &p(&empty), "--n", "5", "--out", &p(&csv)]);
    assert_eq!(code(&o), 0);
    let l = lines(&csv);
    assert!(l[1].ends_with(",true"));

    let bad = tmp.path().join("bad.tsv");
    fs::write(&bad, "0\t1\n1\tx\n").unwrap();
    let o = ugsl(&["stats", "--graph", &p(&bad), "--n", "4", "--out", &p(&csv)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

fn result_lines(dir: &Path) -> Vec<String> {
    lines(&dir.join("results.jsonl"))[1..].to_vec()
}

fn configs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = result_lines(dir)
        .iter()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["config"].to_string())
        .collect();
    v.sort();
    v
}

#[test]
fn random_search_streams_resumes_and_ignores_job_count() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let space = small_space(tmp.path());
    let run = |out: &PathBuf, trials: &str, jobs: &str| {
        let o = ugsl(&[
            "random-search", "--data", &data, "--space", &space, "--trials", trials, "--jobs", jobs, "--out", &p(out),
            "--seed", "9",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    let full = tmp.path().join("full");
    run(&full, "5", "1");
    assert_eq!(result_lines(&full).len(), 5);
    assert!(full.join("top_fraction.csv").exists());
    let best: Option<GslConfig> = serde_json::from_str(&fs::read_to_string(full.join("best_config.json")).unwrap()).unwrap();
    assert!(best.is_some());

    let parallel = tmp.path().join("parallel");
    run(&parallel, "5", "4");
    assert_eq!(configs(&parallel), configs(&full));
    assert_eq!(result_lines(&parallel), result_lines(&full));

    let resumed = tmp.path().join("resumed");
    run(&resumed, "2", "1");
    assert_eq!(result_lines(&resumed).len(), 2);
    let before = result_lines(&resumed);
    // an interrupted write leaves a partial final line
    let mut text = fs::read_to_string(resumed.join("results.jsonl")).unwrap();
    text.push_str("{\"trial_id\": 7, \"conf");
    fs::write(resumed.join("results.jsonl"), text).unwrap();
    run(&resumed, "5", "2");
    let after = result_lines(&resumed);
    assert_eq!(after[..2], before[..]);
    assert_eq!(after, result_lines(&full));

    let other = tmp.path().join("other");
    run(&other, "2", "1");
    let o = ugsl(&["random-search", "--data", &data, "--default", "--trials", "3", "--out", &p(&other), "--seed", "9"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn line_search_reports_one_row_per_option() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let space = small_space(tmp.path());
    let out = tmp.path().join("ls");
    let o = ugsl(&[
        "line-search", "--data", &data, "--base", "--component", "scorer", "--options", "mlp,att,fp",
        "--trials-per-option", "2", "--space", &space, "--out", &p(&out), "--seed", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = lines(&out.join("line_search.csv"));
    assert_eq!(csv.len(), 4);
    assert!(csv[1].starts_with("scorer,mlp,2,"));
    assert_eq!(result_lines(&out).len(), 6);
    let o = ugsl(&["line-search", "--data", &data, "--base", "--component", "decoder", "--out", &p(&out)]);
    assert_eq!(code(&o), 2);
}

fn synthetic_result(id: usize, val: f64, test: f64, encoder: EncoderKind) -> String {
    let mut config = GslConfig::base(10);
    config.model.encoder.kind = encoder;
    let stats = ugsl::stats::compute_stats(&ugsl::tensor::Matrix::from_fn(4, 4, |i, j| {
        if i != j && (i + j + id) % 3 != 0 {
            1.0
        } else {
            0.0
        }
    }))
    .unwrap();
    let r = TrialResult {
        trial_id: id,
        config,
        status: TrialStatus::Completed,
        best_val_accuracy: val,
        test_accuracy: test,
        best_epoch: 1,
        epochs_run: 2,
        train_loss: vec![1.0, 0.5],
        val_accuracy: vec![val, val],
        graph_stats: Some(stats),
    };
    serde_json::to_string(&r).unwrap()
}

#[test]
fn report_modes() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.jsonl");
    let text: String = (0..100)
        .map(|i| synthetic_result(i, (i % 17) as f64 / 17.0, (i % 13) as f64 / 13.0, EncoderKind::Gcn) + "\n")
        .collect();
    fs::write(&a, text).unwrap();
    let b = tmp.path().join("b.jsonl");
    fs::write(
        &b,
        [synthetic_result(0, 0.9, 0.7, EncoderKind::Gcn), synthetic_result(1, 0.9, 0.9, EncoderKind::Gin)].join("\n"),
    )
    .unwrap();
    let out = tmp.path().join("rep");

    let o = ugsl(&["report", "--results", &p(&a), "--mode", "top5", "--out", &p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("top_fraction.json")).unwrap()).unwrap();
    assert_eq!(report[0]["report"]["selected"].as_array().unwrap().len(), 5);
    assert!(lines(&out.join("top_fraction.csv"))[0].starts_with("dataset,component,value,count,min,q1,median,q3,max"));

    let o = ugsl(&["report", "--results", &p(&a), &p(&b), "--mode", "best-arch", "--out", &p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = lines(&out.join("best_architectures.csv"));
    assert_eq!(csv.len(), 2);
    assert!(csv[1].contains(",gcn,"));
    assert!(csv[1].ends_with(",0.9230769230769231,0.7,0.8115384615384615"), "{}", csv[1]);

    let o = ugsl(&["report", "--results", &p(&a), &p(&b), "--mode", "component-avg", "--out", &p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(!fs::read_to_string(out.join("component_average.csv")).unwrap().contains("gin"));

    let o = ugsl(&["report", "--results", &p(&a), "--mode", "correlation", "--out", &p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(lines(&out.join("correlation.csv")).len(), 9);
    let first = fs::read(out.join("correlation.csv")).unwrap();
    assert_eq!(code(&ugsl(&["report", "--results", &p(&a), "--mode", "correlation", "--out", &p(&out)])), 0);
    assert_eq!(fs::read(out.join("correlation.csv")).unwrap(), first);

    let o = ugsl(&["report", "--results", &p(&tmp.path().join("missing.jsonl")), "--mode", "top5", "--out", &p(&out)]);
    assert_eq!(code(&o), 3);
}
