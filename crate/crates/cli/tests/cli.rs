use std::path::Path;
use std::process::Command as Process;

use eigenscape_cli::{fit_loglog, run, Command, ExperimentSpec, Overrides};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn resolve(json: &str, command: Command) -> ExperimentSpec {
    ExperimentSpec::from_json(json).unwrap().resolve(command, Overrides::default()).unwrap()
}

const SMALL_SCALING: &str = r#"{
  "command": "scaling",
  "trials": 6,
  "model": {"kind": "matrix_sensing", "n": 12, "r": 2, "seed": 3,
            "ground_truth": "random_psd:{\"n\":12,\"r\":2}"},
  "sweep": [200, 400, 800]
}"#;

fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn scaling_csv_refits_to_the_reported_slope() {
    let out = run(&resolve(SMALL_SCALING, Command::Scaling)).unwrap();
    let (header, rows) = read_csv(out.get("scaling.csv").unwrap());
    assert_eq!(header, ["sweep_value", "mean_distance", "std_distance", "trials"]);
    assert_eq!(rows.len(), 3);
    let xs: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let summary: Value = serde_json::from_str(out.get("summary.json").unwrap()).unwrap();
    let slope = summary["slope"].as_f64().unwrap();
    assert!((fit_loglog(&xs, &ys).unwrap().slope - slope).abs() < 1e-12);
    // every float field round-trips through its text
    for (row, point) in rows.iter().zip(summary["points"].as_array().unwrap()) {
        assert_eq!(row[1].parse::<f64>().unwrap(), point["mean_distance"].as_f64().unwrap());
        assert_eq!(row[2].parse::<f64>().unwrap(), point["std_distance"].as_f64().unwrap());
        assert_eq!(row[3], "6");
    }
    assert_eq!(summary["config"]["seed"], 3);
    assert_eq!(summary["schema"], 1);
}

#[test]
fn doubling_trials_shrinks_the_standard_error_by_root_two() {
    let se = |trials: usize| -> Vec<f64> {
        let spec = ExperimentSpec::from_json(SMALL_SCALING)
            .unwrap()
            .resolve(Command::Scaling, Overrides { trials: Some(trials), ..Overrides::default() })
            .unwrap();
        let (_, rows) = read_csv(run(&spec).unwrap().get("scaling.csv").unwrap());
        rows.iter().map(|r| r[2].parse::<f64>().unwrap() / (trials as f64).sqrt()).collect()
    };
    let (a, b) = (se(60), se(120));
    let log_ratio: f64 = a.iter().zip(&b).map(|(x, y)| (x / y).ln()).sum::<f64>() / a.len() as f64;
    let ratio = log_ratio.exp();
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn rgd_trials_agree_with_the_oracle() {
    let json = SMALL_SCALING.replace("\"trials\": 6,", "\"trials\": 6, \"rgd\": true,");
    let out = run(&resolve(&json, Command::Scaling)).unwrap();
    let summary: Value = serde_json::from_str(out.get("summary.json").unwrap()).unwrap();
    let rgd = &summary["rgd"];
    assert_eq!(rgd["runs"], 18);
    assert_eq!(
        rgd["agreed"].as_u64().unwrap() + rgd["saddle_flagged"].as_u64().unwrap(),
        18,
        "{rgd}"
    );
}

const SENSING_SCAN: &str = r#"{
  "model": {"kind": "matrix_sensing", "n": 3, "r": 1, "m": 100, "seed": 1, "ground_truth": "diag:[2,1,0]"},
  "grid": {"theta": 19, "phi": 12}
}"#;

#[test]
fn landscape_grid_matches_direct_evaluation() {
    let out = run(&resolve(SENSING_SCAN, Command::LandscapeScan)).unwrap();
    let (header, rows) = read_csv(out.get("landscape.csv").unwrap());
    assert_eq!(header, ["theta", "phi", "g", "f"]);
    assert_eq!(rows.len(), 19 * 12);
    let critical: Value = serde_json::from_str(out.get("critical_points.json").unwrap()).unwrap();
    let matrix = |key: &str| {
        let rows: Vec<Vec<f64>> = serde_json::from_value(critical[key].clone()).unwrap();
        DMatrix::from_fn(3, 3, |i, j| rows[i][j])
    };
    let (pop, emp) = (matrix("population_matrix"), matrix("empirical_matrix"));
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        let (t, p) = (v[0], v[1]);
        let x = DVector::from_vec(vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]);
        let g = -0.5 * x.dot(&(&pop * &x));
        let f = -0.5 * x.dot(&(&emp * &x));
        assert!((g - v[2]).abs() < 1e-14 && (f - v[3]).abs() < 1e-14);
    }
    // population minima of diag(2,1,0) sit at ±e1
    let minima: Vec<&Value> = critical["population"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["case"] == "GlobalMin")
        .collect();
    assert_eq!(minima.len(), 2);
    for e in minima {
        let x: Vec<f64> = serde_json::from_value(e["point"][0].clone()).unwrap();
        assert!((x[0].abs() - 1.0).abs() < 1e-12 && x[1] == 0.0 && x[2] == 0.0);
    }
}

#[test]
fn phase_retrieval_population_minima_at_the_signal() {
    let json = r#"{
      "model": {"kind": "phase_retrieval", "n": 3, "r": 1, "m": 200, "seed": 3, "ground_truth": "vector:[0,0,1]"},
      "grid": {"theta": 5, "phi": 4}
    }"#;
    let out = run(&resolve(json, Command::LandscapeScan)).unwrap();
    let critical: Value = serde_json::from_str(out.get("critical_points.json").unwrap()).unwrap();
    let mins: Vec<Vec<f64>> = critical["population"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["case"] == "GlobalMin")
        .map(|e| serde_json::from_value(e["point"][0].clone()).unwrap())
        .collect();
    assert_eq!(mins.len(), 2);
    assert!((mins[0][2] + mins[1][2]).abs() < 1e-12);
    assert!(mins.iter().all(|x| (x[2].abs() - 1.0).abs() < 1e-12));
}

#[test]
fn rank_two_scan_lists_critical_points_only() {
    let json = r#"{
      "model": {"kind": "quadratic_sensing", "n": 3, "r": 2, "m": 100, "seed": 4,
                "ground_truth": "factor:[[0,0],[0,2],[1,0]]"}
    }"#;
    let out = run(&resolve(json, Command::LandscapeScan)).unwrap();
    assert!(out.get("landscape.csv").is_none());
    let critical: Value = serde_json::from_str(out.get("critical_points.json").unwrap()).unwrap();
    assert_eq!(critical["population"].as_array().unwrap().len(), 6);
}

fn binary(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_eigenscape"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let good = write(dir.path(), "good.json", SENSING_SCAN);
    assert_eq!(binary(&["landscape-scan", "--spec", &good, "--out", out]), 0);
    assert!(dir.path().join("out/landscape.csv").exists());

    let n4 = write(dir.path(), "n4.json", &SENSING_SCAN.replace("\"n\": 3", "\"n\": 4"));
    assert_eq!(binary(&["landscape-scan", "--spec", &n4, "--out", out]), 2);
    let unsorted = write(dir.path(), "bad.json", &SMALL_SCALING.replace("[200, 400, 800]", "[400, 200]"));
    assert_eq!(binary(&["scaling", "--spec", &unsorted, "--out", out]), 2);
    assert_eq!(binary(&["scaling", "--spec", &good, "--out", out, "--trials", "0"]), 2);
    assert_eq!(binary(&["scaling", "--spec", &dir.path().join("missing.json").to_string_lossy(), "--out", out]), 4);

    // tied eigenvalues leave the probe without a strict gap
    let tied = write(dir.path(), "tied.json", r#"{"probe": {"matrix": "diag:[1,1,0]", "r": 1}}"#);
    assert_eq!(binary(&["probe", "--spec", &tied, "--out", out]), 3);

    let blocker = write(dir.path(), "file", "");
    assert_eq!(binary(&["landscape-scan", "--spec", &good, "--out", &blocker]), 4);
}

#[test]
fn seed_override_changes_the_draws_and_nothing_else() {
    let base = resolve(SENSING_SCAN, Command::LandscapeScan);
    let other = ExperimentSpec::from_json(SENSING_SCAN)
        .unwrap()
        .resolve(Command::LandscapeScan, Overrides { seed: Some(99), ..Overrides::default() })
        .unwrap();
    let (a, b) = (run(&base).unwrap(), run(&other).unwrap());
    assert_eq!(a, run(&base).unwrap());
    let (_, ra) = read_csv(a.get("landscape.csv").unwrap());
    let (_, rb) = read_csv(b.get("landscape.csv").unwrap());
    assert!(ra.iter().zip(&rb).all(|(x, y)| x[2] == y[2]));
    assert!(ra.iter().zip(&rb).any(|(x, y)| x[3] != y[3]));
}

#[test]
fn unknown_fields_and_command_mismatch_are_rejected() {
    assert!(ExperimentSpec::from_json(r#"{"trails": 3}"#).is_err());
    let spec = ExperimentSpec::from_json(r#"{"command": "probe", "probe": {"matrix": "diag:[2,1]", "r": 1}}"#).unwrap();
    assert_eq!(spec.clone().resolve(Command::Scaling, Overrides::default()).unwrap_err().exit_code(), 2);
    assert!(spec.resolve(Command::Probe, Overrides::default()).is_ok());
}

#[test]
fn correspond_reports_davis_kahan_counts() {
    let json = r#"{
      "trials": 5,
      "model": {"kind": "matrix_sensing", "n": 6, "r": 2, "m": 5000, "seed": 8, "ground_truth": "diag:[4,3,1,0,0,0]"}
    }"#;
    let out = run(&resolve(json, Command::Correspond)).unwrap();
    let v: Value = serde_json::from_str(out.get("correspondence.json").unwrap()).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 5);
    assert_eq!(v["davis_kahan_violations"], 0);
    assert_eq!(v["davis_kahan_applicable"], 5);
}
