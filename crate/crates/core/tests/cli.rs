use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixed-dynkin"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_constants_demo_exits_zero() {
    let spec = data("constants_demo.json");
    let out = run(&["validate", "--spec", path_str(&spec)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"violations\": []"));
}

#[test]
fn validate_reports_reversed_barriers() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(data("constants_demo.json")).unwrap()).unwrap();
    v["barriers"]["lower"] = serde_json::json!({ "family": "constant", "value": 2.0 });
    let spec = dir.path().join("bad.json");
    fs::write(&spec, v.to_string()).unwrap();
    let out = run(&["validate", "--spec", path_str(&spec)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("barrier_order"));
}

#[test]
fn oracle_random_batch_and_bundled_two_step_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["oracle", "--count", "10", "--output-dir", path_str(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 10);
    for r in records {
        assert!(r["gap"].as_f64().unwrap() <= 1e-10);
        for key in ["instance_seed", "oracle_value", "solver_value", "gap"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }

    let spec = data("constants_demo.json");
    let out = run(&[
        "oracle", "--spec", path_str(&spec), "--n-steps", "2", "--n-states", "9", "--x-min", "-2", "--x-max", "2",
        "--output-dir", path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_penalty_matches_omitted_obstacles_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = data("mixed_jump.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&spec_path).unwrap()).unwrap();
    v["barriers"]["lower"] = serde_json::Value::Null;
    v["barriers"]["upper"] = serde_json::Value::Null;
    let free = dir.path().join("free.json");
    fs::write(&free, v.to_string()).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let grid = ["--n-steps", "10", "--n-states", "41", "--x-min", "-4", "--x-max", "4"];
    let solve = |spec: &Path, out: &Path, method: &str| {
        let mut args = vec!["solve", "--spec", path_str(spec), "--method", method, "--penalty", "0", "--output-dir", path_str(out)];
        args.extend(grid);
        assert_eq!(code(&run(&args)), 0);
    };
    solve(&spec_path, &a, "fd-penalty");
    solve(&free, &b, "fd-penalty");
    solve(&free, &c, "fd-projection");
    let va = fs::read(a.join("value.csv")).unwrap();
    assert_eq!(va, fs::read(b.join("value.csv")).unwrap());
    assert_eq!(va, fs::read(c.join("value.csv")).unwrap());
}

#[test]
fn check_failures_exit_one_and_name_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let spec = data("mixed_jump.json");
    let out = run(&["cross-check", "--spec", path_str(&spec), "--tolerance", "1e-6", "--output-dir", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds tolerance 1e-6"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = data("mixed_jump.json");
    let missing = run(&["solve", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read spec"));
    assert_eq!(code(&run(&["solve", "--spec", path_str(&spec), "--method", "simplex"])), 2);
    assert_eq!(code(&run(&["bogus-command"])), 2);

    let unstable = run(&["solve", "--spec", path_str(&spec), "--n-steps", "1", "--n-states", "401", "--x-min", "-4", "--x-max", "4"]);
    assert_eq!(code(&unstable), 2);
    assert!(String::from_utf8_lossy(&unstable.stderr).contains("exceeds 1"));

    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let unwritable = run(&["solve", "--spec", path_str(&spec), "--output-dir", path_str(&file.join("sub"))]);
    assert_eq!(code(&unwritable), 2);

    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"schema": 7, "spec_path": "x.json"}"#).unwrap();
    let bad_schema = run(&["validate", "--config", path_str(&cfg)]);
    assert_eq!(code(&bad_schema), 2);
    assert!(String::from_utf8_lossy(&bad_schema.stderr).contains("schema 7"));
}

#[test]
fn checks_pass_on_bundled_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path();
    let jump = data("mixed_jump.run.json");
    let env = data("step_envelope.run.json");
    for (cmd, cfg) in [("dpp-check", &jump), ("cross-check", &jump), ("solve", &jump), ("envelope", &env)] {
        let out = run(&[cmd, "--config", path_str(cfg), "--output-dir", path_str(out_dir)]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for n in [1, 2, 4, 8, 16] {
        assert!(out_dir.join(format!("u_n_{n}.csv")).is_file());
    }
    let out = run(&["report", "--output-dir", path_str(out_dir)]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["artifacts"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    for expected in ["cross_check.json", "dpp.json", "envelope.json", "strategy.csv", "value.csv"] {
        assert!(names.contains(&expected), "report lacks {expected}");
    }
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let jump = data("mixed_jump.run.json");
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        for cmd in ["solve", "cross-check", "dpp-check", "report"] {
            let out = run(&[cmd, "--config", path_str(&jump), "--threads", threads, "--output-dir", path_str(&out_dir)]);
            assert_eq!(code(&out), 0, "{cmd}");
        }
    }
    for name in ["value.csv", "strategy.csv", "cross_check.json", "dpp.json", "report.json"] {
        assert_eq!(fs::read(dir.path().join("1").join(name)).unwrap(), fs::read(dir.path().join("3").join(name)).unwrap(), "{name}");
    }
}
