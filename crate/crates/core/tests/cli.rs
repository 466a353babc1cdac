use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn qndsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qndsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Compares two CSV texts cell by cell, numbers to a relative tolerance.
fn assert_csv_close(actual: &str, expected: &str, tol: f64) {
    let (a, e): (Vec<&str>, Vec<&str>) = (actual.lines().collect(), expected.lines().collect());
    assert_eq!(a.len(), e.len(), "row count");
    assert_eq!(a[0], e[0], "header");
    for (row, (la, le)) in a.iter().zip(&e).enumerate().skip(1) {
        for (ca, ce) in la.split(',').zip(le.split(',')) {
            let (x, y): (f64, f64) = (ca.parse().unwrap(), ce.parse().unwrap());
            let scale = x.abs().max(y.abs()).max(1e-300);
            assert!((x - y).abs() / scale <= tol, "row {row}: {ca} vs {ce}");
        }
    }
}

#[test]
fn derive_prints_closed_form_table() {
    let o = qndsim(&["derive", "--config", "fig2d"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("quantity,value,unit\n"));
    let factor = out.lines().find(|l| l.starts_with("reduction_factor,")).unwrap();
    assert!(factor.starts_with("reduction_factor,5.1654"), "{factor}");
    for key in [
        "fsr,",
        "tau_cav,",
        "q_preparation,",
        "squeezing,",
        "echo_contrast,",
        "no_echo_contrast,",
    ] {
        assert!(out.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
}

#[test]
fn derive_json_is_parseable() {
    let o = qndsim(&["derive", "--config", "contrast73", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["derived"]["n_ss"].as_f64().unwrap() > 0.0);
    assert!(v["echo_contrast"]["contrast"].as_f64().unwrap() < 1.0);
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"preset": "fig2d", "ensemble": {"n_atoms": -5}}"#).unwrap();
    let o = qndsim(&["derive", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/ensemble/n_atoms"), "{}", stderr(&o));

    let o = qndsim(&["derive", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(qndsim(&["derive"]).status.code(), Some(2));
    assert_eq!(qndsim(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        qndsim(&["mc", "run", "--config", "fig2d", "--shots", "many"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(qndsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn theta_override_needs_echo_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("single.json");
    fs::write(
        &path,
        r#"{"preset": "fig2d", "sequence": {"no_echo": {"tau_pulse_us": 60, "tau_off_us": 60, "tau_meas_us": 300}}}"#,
    )
    .unwrap();
    let o = qndsim(&[
        "curve",
        "rotation-noise",
        "--config",
        path.to_str().unwrap(),
        "--theta",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/sequence"));
}

#[test]
fn mc_run_json_reports_ensemble() {
    let o = qndsim(&[
        "mc", "run", "--config", "fig2d", "--shots", "50", "--seed", "3", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let stats = &v["stats"];
    assert_eq!(stats["shots"], 50);
    assert_eq!(stats["seed"], 3);
    let counts: u64 = stats["histogram"]["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert_eq!(counts, 50);
    let (lo, hi) = (
        stats["variance_interval"][0].as_f64().unwrap(),
        stats["variance_interval"][1].as_f64().unwrap(),
    );
    let var = stats["variance_of_outcome"].as_f64().unwrap();
    assert!(lo < var && var < hi);
    assert!(v["model"]["at_theta"].as_f64().unwrap() > v["model"]["var_z"].as_f64().unwrap());
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shots.csv");
    let o = qndsim(&[
        "mc",
        "run",
        "--config",
        "fig2d",
        "--shots",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("shot,true_jz,cond_mean,cond_var,outcome,scattered")
    );
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn antisqueezing_curve_lists_both_powers() {
    let o = qndsim(&["curve", "antisqueezing", "--config", "fig3_low", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["curves"].as_array().unwrap().len(), 2);
    let ratio = v["slope_ratio_last_to_first"].as_f64().unwrap();
    assert!((ratio - 2.5 / 1.2).abs() < 1e-12);
}

#[test]
fn sweep_emits_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    fs::write(
        &path,
        r#"{"preset": "fig2d", "sweep": {"parameters": [
            {"path": "probe.power_nw", "values": [1.0, 2.5]},
            {"path": "ensemble.n_atoms", "values": [20000, 40000, 57000]}
        ]}}"#,
    )
    .unwrap();
    let o = qndsim(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("probe.power_nw,ensemble.n_atoms,n_ss,"));

    assert_eq!(qndsim(&["sweep", "--config", "fig2d"]).status.code(), Some(2));
}

#[test]
fn config_command_fills_defaults() {
    let o = qndsim(&["config", "--config", "fig2d"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["probe"]["wavelength_nm"], 780.241);
    assert!(v["probe"]["detuning_lower_ghz"].as_f64().unwrap() < -1.5);
}

#[test]
fn rotation_noise_matches_golden() {
    let o = qndsim(&["curve", "rotation-noise", "--config", "fig2d"]);
    assert_eq!(o.status.code(), Some(0));
    assert_csv_close(&stdout(&o), include_str!("golden/rotation_noise_fig2d.csv"), 1e-9);
}

#[test]
fn mc_shots_match_golden() {
    let o = qndsim(&[
        "mc", "run", "--config", "fig2d", "--shots", "24", "--seed", "5", "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_csv_close(&stdout(&o), include_str!("golden/mc_fig2d_24_shots.csv"), 1e-9);
}
