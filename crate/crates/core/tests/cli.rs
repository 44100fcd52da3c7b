use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvar")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gvar(args);
    assert!(out.status.success(), "gvar {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates the desk parameter files into `dir` and returns the first one.
fn first_params(dir: &Path) -> PathBuf {
    ok(&["generate", "--config", s(&desk_config()), "--out", s(dir)]);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.remove(0)
}

#[test]
fn generate_writes_one_file_per_draw() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--config", s(&desk_config()), "--out", s(dir.path())]);
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["M5_s0.08_p0.json", "M5_s0.08_p1.json"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(&names[0])).unwrap()).unwrap();
    assert_eq!(v["M"], 5);
    assert_eq!(v["D"], 1);
    assert_eq!(v["nu"].as_array().unwrap().len(), 5);
    assert_eq!(v["A"][0].as_array().unwrap().len(), 5);
    assert!(v["seed"].is_u64());
    let score = v["recoverability"].as_f64().unwrap();
    assert!((0.5..=1.5).contains(&score));
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let params = first_params(&dir.path().join("params"));
    let csv = dir.path().join("x.csv");
    ok(&["simulate", "--params", s(&params), "--length", "500", "--seed", "3", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 501);
    assert_eq!(lines[0], "t,x1,x2,x3,x4,x5");
    assert!(lines[500].starts_with("499,"));

    let again = dir.path().join("y.csv");
    ok(&["simulate", "--params", s(&params), "--length", "500", "--seed", "3", "--out", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), text.as_bytes());
}

#[test]
fn fit_writes_results_and_naive_is_densest() {
    let dir = tempfile::tempdir().unwrap();
    let params = first_params(&dir.path().join("params"));
    let csv = dir.path().join("x.csv");
    ok(&["simulate", "--params", s(&params), "--length", "400", "--seed", "8", "--out", s(&csv)]);
    let mut sizes = std::collections::HashMap::new();
    for method in ["naive", "cv", "support-agg", "model-agg", "combined"] {
        let out = dir.path().join(format!("{method}.json"));
        ok(&[
            "fit", "--data", s(&csv), "--method", method, "--order", "1", "--config", s(&desk_config()), "--out", s(&out),
        ]);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["method"], method.replace('-', "_"));
        assert_eq!(v["M"], 5);
        for triple in v["support"].as_array().unwrap() {
            let t: Vec<u64> = triple.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
            assert!(t[0] == 1 && (1..=5).contains(&t[1]) && (1..=5).contains(&t[2]));
        }
        assert!(!v["chosen_lambdas"].as_array().unwrap().is_empty());
        sizes.insert(method, v["support"].as_array().unwrap().len());
    }
    assert!(sizes["naive"] >= sizes["model-agg"], "{sizes:?}");
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "t,x1\n0,1\n1,oops\n").unwrap();
    let out = gvar(&["fit", "--data", s(&csv), "--method", "cv", "--out", s(&dir.path().join("r.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:"));

    let out = gvar(&["fit", "--data", s(&csv), "--method", "lars", "--out", "r.json"]);
    assert!(!out.status.success());

    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"dims": [5], "n_draws": 3}"#).unwrap();
    let out = gvar(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("p"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_draws"));
}

#[test]
fn study_reports_every_dataset_and_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    ok(&["study", "--config", s(&desk_config()), "--out", s(&out), "--threads", "2"]);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,M,s,T,param_id,rep,fp,fn,sel_error,fp_rate,fn_rate,mse,seconds");
    assert_eq!(lines.len(), 1 + 4 * 4);
    for method in ["cv", "support_agg", "model_agg", "combined"] {
        assert_eq!(lines.iter().filter(|l| l.starts_with(&format!("{method},"))).count(), 4);
    }
    assert_eq!(std::fs::read_to_string(out.join("manifest.txt")).unwrap().lines().count(), 4);
    let aggregate = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 4);

    // Drop one finished dataset, as if the run had been interrupted.
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let kept: Vec<&str> = manifest.lines().skip(1).collect();
    std::fs::write(out.join("manifest.txt"), kept.join("\n") + "\n").unwrap();
    std::fs::remove_file(out.join("report.csv")).unwrap();
    let resumed = ok(&["study", "--config", s(&desk_config()), "--out", s(&out), "--resume"]);
    assert!(String::from_utf8_lossy(&resumed.stderr).contains("3 datasets reused"));

    let strip_seconds = |text: &str| -> Vec<String> {
        text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let again = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(strip_seconds(&again), strip_seconds(&report));
}
