//! End-to-end CLI tests: exit codes, file outputs, determinism, and the
//! comparison harness artifact layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn compasskit(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compasskit"))
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn missing_scenario_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = compasskit(
        &["--scenario", "/nonexistent/never.scenario", "search"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn search_is_deterministic_across_invocations() {
    let s = scenario("paper_table1.scenario");
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let output = compasskit(
            &["--scenario", s.to_str().unwrap(), "--seed", "7", "search"],
            dir.path(),
        );
        assert_success(&output);
    }
    for file in ["feasible_set.json", "search_trace.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn tau_sweep_flag_fans_out_runs() {
    let s = scenario("paper_table1.scenario");
    let dir = tempfile::tempdir().unwrap();
    let output = compasskit(
        &[
            "--scenario",
            s.to_str().unwrap(),
            "search",
            "--tau",
            "0.3..0.9:8",
        ],
        dir.path(),
    );
    assert_success(&output);
    let dirs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("tau_"))
        .collect();
    assert_eq!(dirs.len(), 8);
    for d in dirs {
        assert!(d.path().join("feasible_set.json").exists());
        assert!(d.path().join("search_trace.csv").exists());
    }
}

#[test]
fn plan_respects_overrides_and_slo_feasibility() {
    let s = scenario("paper_table1.scenario");
    let dir = tempfile::tempdir().unwrap();
    assert_success(&compasskit(
        &["--scenario", s.to_str().unwrap(), "search"],
        dir.path(),
    ));

    // SLO below every rung's tail latency is infeasible: exit 3
    let output = compasskit(
        &["--scenario", s.to_str().unwrap(), "plan", "--slo-ms", "100"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(3));

    // slack override lands in the emitted policy
    let output = compasskit(
        &[
            "--scenario",
            s.to_str().unwrap(),
            "plan",
            "--slo-ms",
            "1000",
            "--slack-ms",
            "50",
        ],
        dir.path(),
    );
    assert_success(&output);
    let policy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("policy.json")).unwrap())
            .unwrap();
    assert_eq!(policy["slack_buffer_ms"], 50.0);
    assert_eq!(policy["slo_ms"], 1000.0);
    let entries = policy["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    let ladder: Vec<u64> = entries
        .iter()
        .map(|e| e["upscale_threshold"].as_u64().unwrap())
        .collect();
    assert_eq!(ladder, vec![6, 1, 0]);
    assert!(dir.path().join("front.json").exists());
}

#[test]
fn simulate_static_and_elastico_runs() {
    let s = scenario("paper_table1.scenario");
    let dir = tempfile::tempdir().unwrap();
    assert_success(&compasskit(
        &["--scenario", s.to_str().unwrap(), "search"],
        dir.path(),
    ));
    assert_success(&compasskit(
        &["--scenario", s.to_str().unwrap(), "plan", "--slo-ms", "1000"],
        dir.path(),
    ));
    let policy_path = dir.path().join("policy.json");

    // static accurate baseline, scenario defaults: 180 s at 1.5 qps
    let output = compasskit(
        &[
            "--scenario",
            s.to_str().unwrap(),
            "simulate",
            "--policy",
            policy_path.to_str().unwrap(),
            "--pattern",
            "spike",
            "--static",
            "2",
        ],
        dir.path(),
    );
    assert_success(&output);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    // spike pattern at defaults: 60*1.5 + 60*6 + 60*1.5 = 540 expected
    let requests = metrics["requests"].as_u64().unwrap() as f64;
    assert!((requests - 540.0).abs() < 3.0 * 540.0f64.sqrt(), "{requests}");
    // a pinned rung serves every request at its own accuracy
    let acc = metrics["mean_accuracy"].as_f64().unwrap();
    let policy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&policy_path).unwrap()).unwrap();
    let rung_acc = policy["entries"][2]["accuracy"].as_f64().unwrap();
    assert!((acc - rung_acc).abs() < 1e-9);
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("timeline.csv").exists());

    // seed list fans out one run per seed
    let fan_dir = tempfile::tempdir().unwrap();
    let output = compasskit(
        &[
            "--scenario",
            s.to_str().unwrap(),
            "simulate",
            "--policy",
            policy_path.to_str().unwrap(),
            "--pattern",
            "bursty",
            "--seeds",
            "1,2,3",
        ],
        fan_dir.path(),
    );
    assert_success(&output);
    for seed in [1, 2, 3] {
        assert!(fan_dir.path().join(format!("seed_{seed}/metrics.json")).exists());
    }
}

#[test]
fn compare_emits_the_full_grid_and_report() {
    let s = scenario("paper_table1.scenario");
    let dir = tempfile::tempdir().unwrap();
    let output = compasskit(
        &[
            "--scenario",
            s.to_str().unwrap(),
            "--threads",
            "2",
            "compare",
        ],
        dir.path(),
    );
    assert_success(&output);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    // 3 SLOs x 2 patterns x (elastico + 3 statics) = 24 rows
    assert_eq!(report["simulation"].as_array().unwrap().len(), 24);
    // the bundled default scenario reaches full recall
    for row in report["recall"].as_array().unwrap() {
        assert_eq!(row["recall"].as_f64().unwrap(), 1.0);
    }
    // every artifact path in the report exists on disk
    for row in report["recall"].as_array().unwrap() {
        for key in ["feasible_set_path", "search_trace_path"] {
            let rel = row[key].as_str().unwrap();
            assert!(dir.path().join(rel).exists(), "{rel} missing");
        }
    }
    for row in report["simulation"].as_array().unwrap() {
        for rel in row["artifact_dirs"].as_array().unwrap() {
            let rel = rel.as_str().unwrap();
            for file in ["trace.csv", "timeline.csv", "metrics.json"] {
                assert!(dir.path().join(rel).join(file).exists(), "{rel}/{file} missing");
            }
        }
    }
    assert!(dir.path().join("recall.csv").exists());
    assert!(dir.path().join("simulation.csv").exists());

    // report subcommand re-summarizes the existing artifacts
    let output = compasskit(&["report"], dir.path());
    assert_success(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("paper_table1"));
}

#[test]
fn out_env_var_overrides_the_flag() {
    let s = scenario("paper_table1.scenario");
    let flag_dir = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_compasskit"))
        .args(["--scenario", s.to_str().unwrap(), "search"])
        .arg("--out")
        .arg(flag_dir.path())
        .env("COMPASSKIT_OUT", env_dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(env_dir.path().join("feasible_set.json").exists());
    assert!(!flag_dir.path().join("feasible_set.json").exists());
}
