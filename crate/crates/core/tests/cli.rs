use std::process::{Command, Output};

use cosify::cli::data_lines;

fn cosify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cosify"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn static_suite_exits_zero() {
    let o = cosify(&["verify", "static"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1,block-inverse-roundtrip,true"));
}

#[test]
fn corrupted_noise_fails_quick_suite_by_name() {
    let o = cosify(&["verify", "all", "--quick", "--corrupt-noise"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("envelope-percolation-equivalence"), "{err}");
    assert!(err.contains("envelope-sandwich"), "{err}");
}

#[test]
fn honest_quick_suite_passes() {
    let o = cosify(&["verify", "all", "--quick", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two_and_name_the_constraint() {
    let o = cosify(&["cosy", "--epsilon", "0.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon-range"), "{}", stderr(&o));
    let o = cosify(&["cftp", "--epsilon", "0.05"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("subcritical-epsilon"));
    let o = cosify(&["perc", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "epsilon = 0.2\nk = 0\nn0 = -6\nreplicas = 300\nseed = 3\n").unwrap();
    let out = dir.path().join("a.csv");
    let args = |out: &std::path::Path| {
        vec![
            "cosy".to_owned(),
            "--config".into(),
            cfg.display().to_string(),
            "--n0".into(),
            "-8".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let run = |out: &std::path::Path| {
        let a = args(out);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let o = cosify(&refs);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
        std::fs::read_to_string(out).unwrap()
    };
    let first = run(&out);
    assert!(first.contains("# epsilon=0.2\n"));
    assert!(first.contains("# n0=-8\n"));
    assert!(first.contains("# replicas=300\n"));
    let second = run(&dir.path().join("b.csv"));
    assert_eq!(data_lines(&first), data_lines(&second));
    assert_eq!(data_lines(&first)[1].split(',').take(2).collect::<Vec<_>>(), ["0", "-8"]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "epsilom = 0.2\n").unwrap();
    let o = cosify(&["perc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilom"));
}

#[test]
fn cftp_emits_json_with_samples() {
    let o = cosify(&["cftp", "--sites", "0:0,-2:5", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let samples = v["payload"]["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!(v["truncations"], 0);
    assert_eq!(v["config"]["seed"], 11);
}

#[test]
fn every_subcommand_runs_small() {
    for args in [
        &["perc", "--width", "128", "--depth", "20", "--replicas", "20"][..],
        &["envelope", "--width", "64", "--depth", "10"],
        &["envelope", "--width", "64", "--depth", "10", "--boundary", "cone"],
        &["dyncosy", "--width", "128", "--depth", "10"],
        &["diag", "--len", "6", "--positions", "0,-1"],
        &["ergo", "--depths", "1,5", "--replicas", "200"],
        &["cosy", "--k", "1", "--n0", "-12", "--replicas", "100", "--extended-target"],
        &["cosy", "--group", "2,2", "--epsilon", "0.5", "--replicas", "100", "--threads", "1"],
    ] {
        let o = cosify(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        assert!(data_lines(&stdout(&o)).len() >= 2, "{args:?}");
    }
}

#[test]
fn json_reports_match_the_documented_schema() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/report.schema.json")).unwrap(),
    )
    .unwrap();
    let keys = |v: &serde_json::Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let required = |v: &serde_json::Value| {
        let mut k: Vec<String> = v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_owned()).collect();
        k.sort();
        k
    };
    for args in [
        &["cftp", "--sites", "0:0,4:-1"][..],
        &["verify", "static", "--format", "json"],
        &["dyncosy", "--width", "64", "--depth", "3", "--format", "json"],
    ] {
        let o = cosify(args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(keys(&report), required(&schema["required"]));
        assert_eq!(keys(&report["config"]), required(&schema["$defs"]["config"]["required"]));
        for check in report["checks"].as_array().unwrap() {
            assert_eq!(keys(check), required(&schema["$defs"]["check"]["required"]));
        }
        if let Some(samples) = report["payload"]["samples"].as_array() {
            let item = &schema["$defs"]["cftp_result"]["properties"]["samples"]["items"];
            for s in samples {
                assert_eq!(keys(s), required(&item["required"]));
            }
        }
        let experiments = &schema["$defs"]["config"]["properties"]["experiment"]["enum"];
        assert!(experiments.as_array().unwrap().contains(&report["config"]["experiment"]));
    }
}
