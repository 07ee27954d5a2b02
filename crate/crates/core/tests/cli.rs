use std::path::Path;
use std::process::{Command, Output};

fn quatwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quatwind"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_writes_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let o = quatwind(&[
            "simulate",
            "--geometry",
            "hh1",
            "--t",
            "0.5",
            "--r0",
            "1",
            "--paths",
            "40",
            "--route",
            "direct",
            "--step",
            "0.01",
            "--seed",
            "9",
            "--workers",
            workers,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "path_index,t,zeta1,zeta2,zeta3,clock");
    assert_eq!(lines.count(), 40);
}

#[test]
fn cf_exact_matches_reference() {
    let o = quatwind(&[
        "cf",
        "--geometry",
        "flat",
        "--t",
        "1",
        "--r0",
        "1",
        "--lambda-grid",
        "1,0:0:0",
        "--exact",
    ]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[0]["value_re"].as_f64().unwrap() - 0.7341002686570476).abs() < 1e-10);
    assert!((rows[1]["value_re"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn cf_limit_and_girsanov_run() {
    let o = quatwind(&[
        "cf",
        "--geometry",
        "hh1",
        "--r0",
        "1",
        "--lambda-grid",
        "0.5,2",
        "--limit",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = quatwind(&[
        "cf",
        "--geometry",
        "hp1",
        "--r0",
        "0.7",
        "--lambda-grid",
        "1",
        "--girsanov",
        "--paths",
        "200",
        "--step",
        "0.02",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // --exact on a curved geometry is refused
    let o = quatwind(&["cf", "--geometry", "hp1", "--exact"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn limit_density_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = quatwind(&[
        "limit-density",
        "--r0",
        "1",
        "--rmax",
        "10",
        "--points",
        "101",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("radius,density\n"));
    assert_eq!(text.lines().count(), 102);
}

fn write_config(dir: &Path, n_paths: usize) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(
        &p,
        format!(
            r#"{{"geometry":"flat","horizon":1,"startRadius":1,"nPaths":{n_paths},"frequencies":[0.5,1],
                "masterSeed":4,"stepPolicy":{{"grid":{{"kind":"uniform","step":0.01}}}}}}"#
        ),
    )
    .unwrap();
    p
}

fn without_timing(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["summary"]["wall_time_s"] = 0.into();
    for row in v["rows"].as_array_mut().unwrap() {
        row["wall_time_s"] = 0.into();
    }
    v
}

#[test]
fn verify_reports_are_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2_000);
    let mut reports = Vec::new();
    for (i, w) in ["1", "8", "1"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.json"));
        let o = quatwind(&[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            w,
        ]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
        reports.push(without_timing(&out));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn verify_with_one_path_is_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let out = dir.path().join("r.json");
    let o = quatwind(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = without_timing(&out);
    assert_eq!(r["summary"]["failed"], 0);
}

#[test]
fn bad_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"geometry":"flat","horizon":-1}"#).unwrap();
    let o = quatwind(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = quatwind(&["simulate", "--geometry", "hp1", "--t", "1", "--r0", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convergence_ladder() {
    let o = quatwind(&["convergence", "--geometry", "flat", "--t-ladder", "1e4,1e6,1e8"]);
    assert!(o.status.success());
    let gaps: Vec<f64> = stdout(&o)
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["gap"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert_eq!(gaps.len(), 3);
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
}
