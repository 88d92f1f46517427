use std::fs;
use std::process::Command;

use dirichlet_lab_cli::{emit_report, run_counterexample, run_experiment, CliError, DomainSpec, ExperimentConfig, Verdict};

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lab"))
}

#[test]
fn config_defaults_and_round_trip() {
    let cfg = ExperimentConfig::from_json_str(r#"{"name": "kernel"}"#).unwrap();
    assert_eq!(cfg.domain_spec(), DomainSpec::Lshape);
    assert_eq!(cfg.k_list, vec![2, 4, 8, 16]);
    assert_eq!(cfg.quad_degree(), 2 * cfg.order + 2);
    cfg.validate().unwrap();
    let back = ExperimentConfig::from_json_str(&cfg.to_json()).unwrap();
    assert_eq!(back.to_json(), cfg.to_json());

    let saw = ExperimentConfig::from_json_str(r#"{"name": "mesh", "domain": {"sawtooth": {"k": 4}}}"#).unwrap();
    assert_eq!(saw.domain_spec(), DomainSpec::Sawtooth { k: 4 });
}

#[test]
fn config_errors() {
    assert!(ExperimentConfig::from_json_str(r#"{"name": "mesh", "colour": 1}"#).is_err());
    let bad = [
        r#"{"name": "counterexample", "k_list": [0, 2]}"#,
        r#"{"name": "counterexample", "k_list": [4, 2]}"#,
        r#"{"name": "counterexample", "k_list": []}"#,
        r#"{"name": "norms", "s_values": [1.5]}"#,
        r#"{"name": "solve", "order": 3}"#,
        r#"{"name": "flood"}"#,
    ];
    for json in bad {
        let cfg = ExperimentConfig::from_json_str(json).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))), "{json}");
        assert!(run_experiment(&cfg).is_err(), "{json}");
    }
}

#[test]
fn empty_report_writes_only_summary() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&[], dir.path()).unwrap();
    assert_eq!(paths, vec![dir.path().join("summary.txt")]);
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["summary.txt"]);
    assert_eq!(fs::read_to_string(&paths[0]).unwrap(), "verdicts: 0 pass, 0 fail, 0 skipped\n");
}

#[test]
fn single_k_has_insufficient_data() {
    let cfg = ExperimentConfig::from_json_str(r#"{"name": "counterexample", "k_list": [2]}"#).unwrap();
    let r = run_counterexample(&cfg).unwrap();
    let growth = r.check("growth").unwrap();
    assert_eq!(growth.verdict, Verdict::Skipped);
    assert_eq!(growth.note, "insufficient data");
    assert_eq!(r.check("lower_bound").unwrap().verdict, Verdict::Pass);
    assert_eq!(r.table("blowup").unwrap().csv.lines().count(), 2);
}

#[test]
fn binary_runs_and_reproduces_bytes() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = dirs[0].path().join("ce.json");
    fs::write(&cfg, r#"{"name": "counterexample", "k_list": [2]}"#).unwrap();
    for d in &dirs {
        let st = lab().args(["counterexample", "--seed", "5", "--config"]).arg(&cfg).arg("--out").arg(d.path()).output().unwrap().status;
        assert!(st.success());
    }
    let read = |i: usize| fs::read(dirs[i].path().join("blowup.csv")).unwrap();
    assert_eq!(read(0), read(1));
    let written = fs::read_to_string(dirs[0].path().join("counterexample.config.json")).unwrap();
    assert_eq!(ExperimentConfig::from_json_str(&written).unwrap().seed, 5);
    assert!(dirs[0].path().join("blowup.svg").exists());
}

#[test]
fn binary_rejects_mismatched_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.json");
    fs::write(&cfg, r#"{"name": "kernel"}"#).unwrap();
    let out = lab().args(["mesh", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel"));

    fs::write(&cfg, r#"{"name": "counterexample", "k_list": [0]}"#).unwrap();
    let out = lab().args(["counterexample", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mesh_experiment_on_sawtooth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json_str(r#"{"name": "mesh", "domain": {"sawtooth": {"k": 2}}, "h": 0.1}"#).unwrap();
    let results = run_experiment(&cfg).unwrap();
    assert!(results.iter().all(|r| r.checks.iter().all(|c| c.verdict == Verdict::Pass)));
    emit_report(&results, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("mesh.txt")).unwrap();
    assert!(!text.is_empty());
    assert!(fs::read_to_string(dir.path().join("summary.txt")).unwrap().contains("sawtooth2"));
}
