use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn anntune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anntune"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"{{
            "dataset": {{"kind": "files", "base": "{}", "queries": "{}"}},
            "split": {{"train_fraction": 0.6, "holdout_fraction": 0.4, "seed": 3}},
            "hierarchy": {{"preset": "desk3"}},
            "k": 10,
            "seed": 4{extra}
        }}"#,
        s(&data.join("base.fvecs")),
        s(&data.join("queries.fvecs"))
    );
    let path = dir.join("experiment.json");
    fs::write(&path, cfg).unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn full_pipeline_on_synthetic_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(anntune(&["gen-synthetic", "--n", "10000", "--d", "16", "--queries", "500", "--seed", "9", "--out", s(&data)]));
    assert!(data.join("base.fvecs").exists() && data.join("queries.fvecs").exists());
    let cfg = files_config(
        tmp.path(),
        &data,
        r#", "grid": {"levels": [[2000, 5000, 10000], [50, 200, 1000], [10, 20]]},
             "validate": {"sample_sizes": [50], "replicas": 2, "frontier_points": 10}"#,
    );
    let out = tmp.path().join("out");
    let (cfg, out_s) = (s(&cfg), s(&out));
    ok(anntune(&["gt", "--config", cfg, "--out", out_s]));
    assert!(out.join("gt.ivecs").exists());
    ok(anntune(&["build", "--config", cfg, "--out", out_s]));
    assert!(out.join("hierarchy").join("manifest.json").exists() || out.join("hierarchy").is_dir());
    let gt = out.join("gt.ivecs");
    let h = out.join("hierarchy");
    let inputs = ["--hierarchy", s(&h), "--gt", s(&gt)];
    let mut args = vec!["stats", "--config", cfg, "--out", out_s];
    args.extend(inputs);
    ok(anntune(&args));
    ok(anntune(&["tune", "--config", cfg, "--out", out_s, "--budget", "0.05", "--recall", "0.9", "--frontier"]));
    let frontier = fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert!(frontier.starts_with("tuning_id,t_1,t_2,t_3,"));
    assert!(frontier.lines().count() > 2);
    let tuned: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tune.json")).unwrap()).unwrap();
    let results = tuned["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results[0]["modeled_cost"].as_f64().unwrap() <= 0.05);
    assert!(results[1]["modeled_recall"].as_f64().unwrap() >= 0.9 - 1e-12);

    let mut args = vec!["bench", "--config", cfg, "--out", out_s, "--tunings"];
    let fpath = out.join("frontier.csv");
    args.push(s(&fpath));
    args.extend(["-t", "10000,1000,10"]);
    args.extend(inputs);
    ok(anntune(&args));
    let bench = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(bench.starts_with("tuning_id,t_1,t_2,t_3,modeled_cost,bytes_per_query,recall_at_k,qps"));
    assert_eq!(bench.lines().count(), frontier.lines().count() + 1);

    for cmd in ["grid", "validate"] {
        let mut args = vec![cmd, "--config", cfg, "--out", out_s];
        args.extend(inputs);
        ok(anntune(&args));
    }
    for f in ["grid.csv", "parity.csv", "accuracy.csv", "out_of_sample.csv", "sample_size.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".staging"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn stats_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(anntune(&["gen-synthetic", "--n", "5000", "--d", "16", "--queries", "200", "--out", s(&data)]));
    let cfg = files_config(tmp.path(), &data, "");
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        ok(anntune(&["stats", "--config", s(&cfg), "--out", s(&out), "--threads", "2"]));
        runs.push(read_dir_bytes(&out.join("stats")));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn missing_dataset_is_an_io_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = files_config(tmp.path(), &tmp.path().join("nowhere"), "");
    let out = tmp.path().join("out");
    for cmd in ["gt", "build", "stats", "validate"] {
        let res = anntune(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(res.status.code(), Some(3), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!out.exists(), "{cmd} left outputs behind");
    }
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"dataset": {"kind": "synthetic", "n": 100, "d": 4, "n_queries": 10}, "hierarchy": {"preset": "nope"}}"#).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(anntune(&["build", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(5));
    assert_eq!(anntune(&["build", "--out", s(&out)]).status.code(), Some(5));
    assert_eq!(anntune(&["frobnicate"]).status.code(), Some(2));

    let data = tmp.path().join("data");
    ok(anntune(&["gen-synthetic", "--n", "5000", "--d", "16", "--queries", "100", "--out", s(&data)]));
    let cfg = files_config(tmp.path(), &data, "");
    ok(anntune(&["stats", "--config", s(&cfg), "--out", s(&out)]));
    let res = anntune(&["tune", "--out", s(&out), "--budget", "1e-9"]);
    assert_eq!(res.status.code(), Some(6), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.join("tune.json").exists());
    fs::write(data.join("queries.fvecs"), [1u8, 2, 3]).unwrap();
    assert_eq!(anntune(&["gt", "--config", s(&cfg), "--out", s(&tmp.path().join("o2"))]).status.code(), Some(4));
}
