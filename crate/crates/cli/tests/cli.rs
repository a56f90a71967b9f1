use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlab")).args(args).output().expect("binary runs")
}

const CONFIG: &str = r#"
horizons = [100, 200, 400]
seeds = [0, 1, 2]
output_dir = "unused"
master_seed = 11
trajectory_points = 10

[environment]
kind = "hard_instance"
k = 1

[learner]
kind = "m3"
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sweep_writes_reproducible_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, extra) in [(&a, None), (&b, Some("--sequential"))] {
        let mut args = vec!["sweep", "-c", &cfg, "-o", out.to_str().unwrap()];
        args.extend(extra);
        let o = mmlab(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut files: Vec<_> = fs::read_dir(a.join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files.len(), 9);
    for f in &files {
        assert_eq!(fs::read(a.join("runs").join(f)).unwrap(), fs::read(b.join("runs").join(f)).unwrap());
    }
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
    // manifests differ only in where they were written
    let (mut ma, mut mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    ma["config"]["output_dir"].take();
    mb["config"]["output_dir"].take();
    assert_eq!(ma, mb);
}

#[test]
fn summary_matches_run_csvs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("out");
    let o = mmlab(&["sweep", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = json(&out.join("summary.json"));
    let header = "t,bid,ask,m,v,utility,cum_utility,prefix_benchmark,regret";
    for agg in summary["horizons"].as_array().unwrap() {
        let h = agg["horizon"].as_u64().unwrap();
        let mut regrets = Vec::new();
        for seed in 0..3 {
            let text = fs::read_to_string(out.join(format!("runs/T{h}_seed{seed}.csv"))).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some(header));
            let rows: Vec<&str> = lines.collect();
            assert_eq!(rows.len() as u64, h);
            let last: Vec<&str> = rows.last().unwrap().split(',').collect();
            regrets.push(last[8].parse::<f64>().unwrap());
            // benchmark columns are filled at checkpoints only
            let filled = rows.iter().filter(|r| !r.ends_with(',')).count();
            assert_eq!(filled, 10);
        }
        let mean = regrets.iter().sum::<f64>() / 3.0;
        let std = (regrets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((mean - agg["mean_regret"].as_f64().unwrap()).abs() < 1e-9);
        assert!((std - agg["std_regret"].as_f64().unwrap()).abs() < 1e-9);
        assert_eq!(agg["n_seeds"], 3);
    }
    assert!(summary["exponent_fit"].is_number() || summary["exponent_fit"].is_null());
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 9);
    assert_eq!(manifest["config"]["master_seed"], 11);
}

#[test]
fn simulate_takes_one_horizon_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("sim");
    let o = mmlab(&["simulate", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("one horizon"));

    let o = mmlab(&[
        "simulate", "-c", &cfg, "-o", out.to_str().unwrap(), "-T", "150", "--set", "environment.k=2", "--set",
        "seeds=[5]",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/T150_seed5.csv").exists());
    assert_eq!(json(&out.join("manifest.json"))["config"]["environment"]["k"], 2);
}

#[test]
fn invalid_config_fails_before_running() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("never");
    let o = mmlab(&["sweep", "-c", &cfg, "-o", out.to_str().unwrap(), "--set", "horizons=[10,5]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = mmlab(&["sweep", "-c", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn best_fixed_on_trace() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("trace.csv");
    fs::write(&trace, "m,v\n1.0,0.5\n0.0,0.75\n").unwrap();
    let o = mmlab(&["best-fixed", trace.to_str().unwrap(), "--grid", "1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // buy at 0.5 from the first taker, sell just below 0.75 to the second
    assert_eq!(v["value"], 1.25);
    assert_eq!(v["bid"], 0.5);
    assert_eq!(v["ask"], 0.75);
    assert_eq!(v["ask_left_limit"], true);
    assert!(v["grid_value"].as_f64().unwrap() <= 1.25);
}

#[test]
fn custom_trace_environment() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("trace.csv");
    let mut text = String::from("m,v\n");
    for i in 0..300 {
        text.push_str(&format!("{},{}\n", (i % 7) as f64 / 7.0, (i % 11) as f64 / 11.0));
    }
    fs::write(&trace, text).unwrap();
    let cfg = tmp.path().join("custom.toml");
    fs::write(
        &cfg,
        format!(
            "horizons = [300]\nseeds = [0]\noutput_dir = \"{}\"\n[environment]\nkind = \"custom\"\ntrace = \"{}\"\n[learner]\nkind = \"random_pair\"\n",
            tmp.path().join("out").display(),
            trace.display()
        ),
    )
    .unwrap();
    let o = mmlab(&["simulate", "-c", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&tmp.path().join("out/summary.json"));
    assert!(s["horizons"][0]["mean_expected_regret"].is_null());
    // longer than the trace
    let o = mmlab(&["simulate", "-c", cfg.to_str().unwrap(), "-T", "301"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_reports_constants_and_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("verify.json");
    let o = mmlab(&["verify", "-K", "4,8", "--samples", "200", "--partition-samples", "5000", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert_eq!(v["c1"], 2.0 / 81.0);
    assert_eq!(v["c2"], 65.0 / 9.0);
    assert_eq!(v["passed"], true);
    for p in v["partition"].as_array().unwrap() {
        assert_eq!(p["passed"], p["samples"]);
    }
    let region = &v["kl"][0]["regions"][0];
    for key in ["samples", "max_kl", "bound", "violations"] {
        assert!(!region[key].is_null(), "{key}");
    }
    let o = mmlab(&["verify", "-K", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
