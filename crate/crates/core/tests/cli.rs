use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dissipacert");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DISSIPACERT_SEED").output().expect("spawn binary")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SVRG1: &[&str] = &["certify", "--method", "svrg1", "--sigma", "0.1", "--lipschitz", "1", "--eta", "0.01", "--m", "100"];

#[test]
fn certify_svrg1_verifies_and_reports_closed_form_rate() {
    let out = run(&[SVRG1, &["--json"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["verified"], true);
    let nu = v["rate"]["nu"].as_f64().unwrap();
    let expected = (1.0 - 2.0 * 0.01 * 0.1 * (1.0 - 0.01_f64)).powi(100) + 0.01 / (0.1 * (1.0 - 0.01));
    assert!((nu - expected).abs() <= 1e-12 * expected, "nu {nu} vs {expected}");
    let lambdas: Vec<f64> = v["certificate"]["instance"]["lambdas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(lambdas.len(), 4);
    assert!(v["certificate"]["lhs_max_eig"].as_f64().unwrap() <= 1e-9);
    let rho2 = v["bisection"]["rho_sq"].as_f64().unwrap();
    assert!(rho2 > 0.9 && rho2 <= 1.0, "bisected rho^2 {rho2}");
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    let args = [SVRG1, &["--json"]].concat();
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn json_floats_use_seventeen_significant_digits() {
    let out = run(&[SVRG1, &["--json"]].concat());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"sigma\":0.10000000000000001"), "{text}");
}

#[test]
fn katyusha_above_tau1_bound_fails_with_eigenvalue_diagnostic() {
    // sigma = 0.001, L = 1, m = 100, tau2 = 1/2: recipe tau1 = sqrt(m sigma / (3L)).
    let sigma = 0.001_f64;
    let tau1 = (100.0 * sigma / 3.0).sqrt();
    let alpha = 1.0 / (3.0 * tau1);
    let tau1_bad = format!("{}", 1.1 * tau1);
    let alpha = format!("{alpha}");
    let out = run(&[
        "certify", "--method", "katyusha", "--sigma", "0.001", "--lipschitz", "1", "--m", "100", "--tau1", &tau1_bad, "--tau2",
        "0.5", "--alpha", &alpha,
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("positive eigenvalue"), "{text}");
}

#[test]
fn katyusha_recipe_verifies() {
    let out = run(&["certify", "--method", "katyusha", "--sigma", "0.01", "--lipschitz", "1", "--m", "100", "--tau1", "0.18257418583505536", "--tau2", "0.5", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["katyusha"]["predicate"], true);
    assert_eq!(v["verified"], true);
}

#[test]
fn missing_required_parameter_is_a_usage_error() {
    let out = run(&["certify", "--method", "katyusha", "--sigma", "0.1", "--lipschitz", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("tau1"), "{}", stderr(&out));

    let out = run(&["certify", "--method", "svrg1", "--sigma", "0.1", "--lipschitz", "1", "--m", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eta"), "{}", stderr(&out));
}

#[test]
fn contradictory_or_invalid_flags_are_usage_errors() {
    for args in [
        &[SVRG1, &["--tau1", "0.1"]].concat()[..],
        &[SVRG1, &["--json", "--format", "csv"]].concat()[..],
        &[SVRG1, &["--format", "csv"]].concat()[..],
        &["certify", "--method", "svrg1", "--sigma", "0.1", "--lipschitz", "1", "--eta", "-1", "--m", "10"][..],
        &["certify", "--bogus"][..],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = run(&[SVRG1, &["--output", "/nonexistent/dir/report.json"]].concat());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"method":"svrg1","function_class":{"sigma":0.1,"lipschitz":1},"eta":0.01,"m":100}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let base = json(&run(&["certify", "--config", cfg, "--json"]));
    assert_eq!(base["spec"]["eta"].as_f64(), Some(0.01));
    assert_eq!(base["spec"]["m"].as_u64(), Some(100));
    let over = json(&run(&["certify", "--config", cfg, "--eta", "0.02", "--json"]));
    assert_eq!(over["spec"]["eta"].as_f64(), Some(0.02));
    assert_eq!(over["spec"]["m"].as_u64(), Some(100));
}

#[test]
fn dump_files_hold_lmi_data_and_supply_rates() {
    let dir = tempfile::tempdir().unwrap();
    let lmi = dir.path().join("lmi.json");
    let rates = dir.path().join("rates.json");
    let out = run(&[
        SVRG1,
        &["--dump-lmi", lmi.to_str().unwrap(), "--dump-supply-rates", rates.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lmi: Value = serde_json::from_str(&std::fs::read_to_string(&lmi).unwrap()).unwrap();
    for key in ["rho_sq", "lambdas", "pbar", "abar", "bbar", "lhs", "lhs_max_eig", "verified"] {
        assert!(lmi.get(key).is_some(), "missing {key}");
    }
    assert_eq!(lmi["lhs"].as_array().unwrap().len(), 3);
    let rates: Value = serde_json::from_str(&std::fs::read_to_string(&rates).unwrap()).unwrap();
    let rates = rates.as_array().unwrap();
    assert_eq!(rates.len(), 4);
    for r in rates {
        assert_eq!(r["xbar"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn simulate_csv_has_versioned_header() {
    let out = run(&["simulate", "--method", "svrg1", "--eta", "0.05", "--m", "5", "--epochs", "2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# dissipacert-csv v1"));
    assert_eq!(lines.next(), Some("epoch,step,index,v_value,iterate_norm"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn seed_comes_from_environment_when_not_given() {
    let args = ["simulate", "--method", "sg", "--eta", "0.05", "--m", "5", "--epochs", "1", "--json"];
    let with_env = |seed: &str| Command::new(BIN).args(args).env("DISSIPACERT_SEED", seed).output().unwrap();
    let a = with_env("7");
    let b = with_env("7");
    let c = with_env("8");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let flag = run(&[&args[..], &["--seed", "7"]].concat());
    assert_eq!(flag.stdout, a.stdout);
}

#[test]
fn validate_all_suites_pass_on_small_problem() {
    let out = run(&["validate", "--suite", "all", "--n", "5", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    let reports = v["reports"].as_array().unwrap();
    let suites: std::collections::BTreeSet<&str> = reports.iter().map(|r| r["suite"].as_str().unwrap()).collect();
    for s in ["appendix", "katyusha", "dissipation", "contraction"] {
        assert!(suites.contains(s), "suite {s} missing");
    }
    assert!(reports.iter().all(|r| r["pass"] == true));
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let out = run(&["sweep", "--method", "svrg2", "--sigma", "0.1", "--lipschitz", "1", "--m", "200", "--eta-min", "0.01", "--eta-max", "0.2", "--points", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# dissipacert-csv v1\n"));
    assert_eq!(text.lines().count(), 2 + 5);
}
