use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn slowmix(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowmix"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

#[test]
fn minimal_moments_run_writes_all_files() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(
        &["moments", "--map", "lsv", "--alpha", "0.4", "--seed", "1", "--trials", "200", "--n-pow", "4:7", "--center-samples", "100000"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["result.csv", "result.json", "summary.txt"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    let j = read_json(tmp.path());
    assert_eq!(j["config"]["gamma"], 1.5);
    assert_eq!(j["config"]["p"], 3.0);
    assert_eq!(j["config"]["seed"], 1);
    assert!(j["version"].is_string());
    assert!(j["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(j["threads"].as_u64().unwrap() >= 1);
    let csv = std::fs::read_to_string(tmp.path().join("result.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,p,value,ci_low,ci_high,std_error,trials"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    let value: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(value, j["rows"][0]["value"].as_f64().unwrap());
}

#[test]
fn missing_seed_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(&["moments", "--map", "lsv", "--alpha", "0.4"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn alpha_out_of_range_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(&["moments", "--alpha", "1.5", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha must be in (0, 1)"), "{}", stderr(&o));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "trails": 100}"#).unwrap();
    let o = slowmix(&["tower-psi", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("trails"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "trials": 500, "beta": 1.5, "n_list": [8, 16, 32]}"#).unwrap();
    let out = tmp.path().join("out");
    let o = slowmix(&["tower-psi", "--config", cfg.to_str().unwrap(), "--trials", "300"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j = read_json(&out);
    assert_eq!(j["config"]["trials"], 300);
    assert_eq!(j["config"]["beta"], 1.5);
    assert_eq!(j["config"]["seed"], 3);
    assert_eq!(j["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn results_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let args = ["weakdep", "--map", "doubling", "--seed", "9", "--trials", "500", "--n-pow", "3:6"];
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "1", "2"].iter().enumerate() {
        let dir = tmp.path().join(i.to_string());
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        let o = slowmix(&a, &dir);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push(std::fs::read(dir.join("result.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn failed_threshold_under_check_exits_2() {
    let tmp = TempDir::new().unwrap();
    let args = ["tower-psi", "--beta", "4", "--theta", "0.9", "--n-list", "2,4,8", "--trials", "2000", "--seed", "1"];
    let o = slowmix(&args, &tmp.path().join("a"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut checked = args.to_vec();
    checked.push("--check");
    let o = slowmix(&checked, &tmp.path().join("b"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("b/summary.txt")).unwrap();
    assert!(summary.contains("FAIL tower slope"), "{summary}");
}

#[test]
fn selftest_quick_passes() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(&["selftest", "--quick", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j = read_json(tmp.path());
    let checks = j["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 5);
    assert!(checks.iter().all(|c| c["pass"] == true));
}

/// CLT scaling: `‖S_v(n)‖_4 ~ n^{1/2}` for the doubling map.
#[test]
fn doubling_moments_exponent_near_half() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(
        &["moments", "--map", "doubling", "--gamma", "2", "--n-pow", "6:14", "--trials", "2000", "--seed", "4", "--check"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = read_json(tmp.path())["fits"]["birkhoff"]["exponent"].as_f64().unwrap();
    assert!((e - 0.5).abs() < 0.03, "exponent {e}");
}

/// `∫ θ^{ψ_n} dμ_Δ` decays like `n^{-(β-1)}`.
#[test]
fn tower_psi_slope_near_target() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(
        &["tower-psi", "--beta", "2.5", "--theta", "0.5", "--trials", "20000", "--seed", "2", "--check"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = read_json(tmp.path())["fits"]["tower"]["exponent"].as_f64().unwrap();
    assert!((e + 1.5).abs() < 0.1, "slope {e}");
}

#[test]
fn conflicting_n_flags_and_bad_subcommand_exit_1() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(&["moments", "--seed", "1", "--n-list", "8,16", "--n-pow", "3:4"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = slowmix(&["frobnicate", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fastslow_writes_distribution_table() {
    let tmp = TempDir::new().unwrap();
    let o = slowmix(
        &[
            "fastslow", "--map", "doubling", "--v", "x", "--seed", "6", "--trials", "500", "--n-list", "64,256",
            "--gk-orbits", "4", "--gk-orbit-len", "20000",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("distribution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,x,cdf_fast,cdf_reference"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 401);
    assert!(rows.iter().all(|r| r[0] == 256.0));
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] >= w[0][2] && w[1][3] >= w[0][3]));
    assert_eq!(rows.last().unwrap()[2], 1.0);
    let grid_ks = rows.iter().map(|r| (r[2] - r[3]).abs()).fold(0.0, f64::max);
    let ks = read_json(tmp.path())["rows"][1]["ks"].as_f64().unwrap();
    assert!(grid_ks <= ks + 1e-12, "grid {grid_ks} exceeds ks {ks}");
}
