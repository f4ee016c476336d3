use std::path::Path;
use std::process::{Command, Output};

use rdtrack_cli::problems::load_problem;

fn rdtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdtrack")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn missing_problem_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let res = rdtrack(&["track", "--problem", "/no/such/problem.json", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/no/such/problem.json"));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let positive = rdtrack(&["track", "--problem", "fig3", "--step", "0.1", "--out", path_str(&out)]);
    assert_eq!(positive.status.code(), Some(2));
    let bad_p = rdtrack(&["track", "--problem", "binary-hamming:p=0.7", "--out", path_str(&out)]);
    assert_eq!(bad_p.status.code(), Some(2));
    let unknown = rdtrack(&["track", "--no-such-flag"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn problem_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    std::fs::write(&file, r#"{"source": [0.4, 0.6], "distortion": [[1.0, 0.0, 0.3], [0.0, 1.0, 0.3]]}"#).unwrap();
    let loaded = load_problem(path_str(&file)).unwrap();
    assert_eq!(loaded, load_problem("berger273").unwrap());
    std::fs::write(&file, r#"{"source": [0.4, 0.7], "distortion": [[1.0], [0.0]]}"#).unwrap();
    let res = rdtrack(&["ba", "--problem", path_str(&file), "--beta-max", "1", "--out", path_str(&dir.path().join("b.csv"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn tracking_is_deterministic_and_embeds_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let args = ["track", "--problem", "fig3", "--beta0", "20", "--beta-min", "0.05", "--step", "-0.05", "--out", path_str(&out)];
    assert!(rdtrack(&args).status.success());
    let first_json = std::fs::read(&out).unwrap();
    let first_csv = std::fs::read(out.with_extension("csv")).unwrap();
    assert!(rdtrack(&args).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first_json);
    assert_eq!(std::fs::read(out.with_extension("csv")).unwrap(), first_csv);

    let doc: serde_json::Value = serde_json::from_slice(&first_json).unwrap();
    assert_eq!(doc["manifest"]["command"], "track");
    assert_eq!(doc["manifest"]["problem"], "fig3");
    assert_eq!(doc["manifest"]["config"]["step"], -0.05);
    assert_eq!(doc["manifest"]["library_version"], rdtrack::VERSION);
    let csv = String::from_utf8(first_csv).unwrap();
    assert!(csv.starts_with("# manifest {"));
    let header = csv.lines().nth(1).unwrap();
    assert_eq!(header, "beta,r0,r1,r2,r3,distortion,rate,min_marginal,event");
    assert_eq!(data_rows(&csv).len(), doc["points"].as_array().unwrap().len());
}

#[test]
fn single_beta_ba_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let res = rdtrack(&["ba", "--problem", "binary-hamming:p=0.3", "--beta-max", "2.1972245773362196", "--out", path_str(&out)]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[3], "true");
    let r1: f64 = fields[5].parse().unwrap();
    assert!((r1 - 0.25).abs() < 1e-10);
}

#[test]
fn trace_compared_with_oracle_and_ba_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let base = dir.path().join("b.csv");
    let track = ["track", "--problem", "binary-hamming:p=0.3", "--beta0", "8", "--beta-min", "2", "--step", "-0.125", "--out", path_str(&trace)];
    assert!(rdtrack(&track).status.success());
    let ba = [
        "ba", "--problem", "binary-hamming:p=0.3", "--grid", "linear", "--beta-max", "8", "--beta-min", "2", "--points", "49", "--out",
        path_str(&base),
    ];
    assert!(rdtrack(&ba).status.success());
    for reference in ["oracle:binary-hamming:p=0.3", path_str(&base)] {
        let out = dir.path().join("c.csv");
        let res = rdtrack(&["compare", "--trace", path_str(&trace), "--reference", reference, "--out", path_str(&out)]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let csv = std::fs::read_to_string(&out).unwrap();
        let rows = data_rows(&csv);
        assert_eq!(rows.len(), 49);
        let worst = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{reference}: {worst:e}");
        let first: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
        assert!(first <= 1e-12);
    }
}

#[test]
fn spectra_flags_the_support_switch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let res = rdtrack(&["spectra", "--problem", "berger273", "--betas", "1.801072775389,3.0", "--out", path_str(&out)]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",possibly-support-switching,"), "{}", rows[0]);
    assert!(rows[1].contains(",none,"), "{}", rows[1]);
}

#[test]
fn order_sweep_reports_costs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let report = dir.path().join("sweep.json");
    let res = rdtrack(&[
        "compare", "--problem", "binary-hamming:p=0.3", "--reference", "oracle:binary-hamming:p=0.3", "--orders", "1,2", "--steps",
        "0.5,0.25", "--out", path_str(&out), "--report", path_str(&report),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(data_rows(&csv).len(), 4);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["manifest"]["command"], "compare");
}

#[test]
fn oracle_comparison_reaches_zero_beta() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let out = dir.path().join("c.csv");
    assert!(rdtrack(&["track", "--problem", "binary-hamming:p=0.3", "--beta0", "4", "--step", "-0.5", "--out", path_str(&trace)]).status.success());
    let res = rdtrack(&["compare", "--trace", path_str(&trace), "--reference", "oracle:binary-hamming:p=0.3", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let last = data_rows(&csv).last().unwrap().to_string();
    let fields: Vec<&str> = last.split(',').collect();
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0);
}
