use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eek(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eek")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn version_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("eek "));
    assert_eq!(eek(dir.path(), &["evolve", "--help"]).status.code(), Some(0));
}

#[test]
fn argument_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["bogus"][..], &["symbol", "--nope", "1"], &[]] {
        let out = eek(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr(&out).trim().lines().count(), 1, "{}", stderr(&out));
    }
}

#[test]
fn inadmissible_order_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["evolve", "--s", "5", "--gamma", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("evolve"), "{}", stderr(&out));
    // Admissible order, but no data given.
    let out = eek(dir.path(), &["evolve", "--s", "4", "--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--data"));
}

#[test]
fn trivial_pipeline_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["pipeline", "--free", "trivial"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    for key in ["metric", "metric_derivatives", "fluid"] {
        assert_eq!(v["evolution"]["deviation"][key].as_f64(), Some(0.0));
    }
    assert_eq!(v["constraints"]["hamiltonian_norm"].as_f64(), Some(0.0));
    let root = dir.path().join("eek-pipeline");
    for f in ["free.eek", "data.eek", "constraints.csv", "fluid.eek", "monitor.csv", "final.eek", "summary.json"] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    assert!(csv_header(&root.join("monitor.csv")).starts_with("t,energy,H_norm,norm_residual,ham_residual,mom_residual"));
    assert_eq!(csv_header(&root.join("constraints.csv")), "stage,residual_norm,iterations,wall_time");
}

#[test]
fn pipeline_reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["pipeline", "--free", "wave-packet", "--n", "16", "--T", "0.2"];
    for d in ["a", "b"] {
        let mut a = args.to_vec();
        a.extend(["--out-dir", d]);
        assert_eq!(eek(dir.path(), &a).status.code(), Some(0));
    }
    for f in ["data.eek", "fluid.eek", "final.eek"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn numerical_failure_exits_three_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["pipeline", "--free", "wave-packet", "--n", "16", "--T", "20", "--cfl", "3", "--record-every", "1000"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("evolve stage failed"), "{}", stderr(&out));
}

#[test]
fn properties_suite_runs_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["properties", "--suite", "spaces", "--report", "props.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["results"].as_array().unwrap().len(), 8);
    assert_eq!(v["pass"], Value::Bool(true));
    assert_eq!(csv_header(&dir.path().join("props.csv")), "name,constant,variation,bound,pass");
    let out = eek(dir.path(), &["properties", "--suite", "fluid"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn symbol_reports_classification_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = eek(dir.path(), &["symbol", "--gamma", "1.8", "--K", "1", "--state", "w=0.3,u=1.02,0.2,0,0", "--metric", "minkowski", "--xi", "1,0.5,0,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["classification"], "non-characteristic");
    assert_eq!(v["a0_spectrum"].as_array().unwrap().len(), 5);
    assert!(v["det"].as_f64().unwrap() > 0.0);

    // Rest frame, σ² = γKw² = 0.36: ξ = (σ, 1, 0, 0) lies on the sound cone.
    let out = eek(dir.path(), &["symbol", "--gamma", "1.8", "--state", "w=0.4472135954999579,u=1,0,0,0", "--xi", "0.6,1,0,0"]);
    let v = json(&out);
    assert_eq!(v["classification"], "sound-cone");
    assert!(v["Q"].as_f64().unwrap().abs() < 1e-12);

    let out = eek(dir.path(), &["symbol", "--state", "w=0.3,u=0,0,0", "--xi", "0,1,0,0"]);
    assert_eq!(json(&out)["classification"], "hyperplane");

    // σ² ≥ 1 is a validation failure.
    let out = eek(dir.path(), &["symbol", "--gamma", "2", "--state", "w=0.9,u=1,0,0,0", "--xi", "1,0,0,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("symbol stage failed"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# symbol run\ngamma = 1.8\nstate = w=0.5,u=1,0,0,0\nxi = 1,0,0,0\n").unwrap();
    let out = eek(dir.path(), &["--config", "run.cfg", "symbol"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!((json(&out)["sigma2"].as_f64().unwrap() - 1.8 * 0.25).abs() < 1e-14);
    let out = eek(dir.path(), &["symbol", "--config", "run.cfg", "--gamma", "1.2"]);
    assert!((json(&out)["sigma2"].as_f64().unwrap() - 1.2 * 0.25).abs() < 1e-14);
    std::fs::write(dir.path().join("bad.cfg"), "gamma 1.8\n").unwrap();
    assert_eq!(eek(dir.path(), &["--config", "bad.cfg", "symbol"]).status.code(), Some(2));
    assert_eq!(eek(dir.path(), &["--config", "missing.cfg", "symbol"]).status.code(), Some(2));
}

#[test]
fn stepwise_commands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = eek(d, &["constraints", "--free", "fluid-blob", "--n", "16", "--gamma", "1.5", "--out", "data.eek", "--report", "res.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["stages"].as_array().unwrap().len(), 4);
    assert_eq!(csv_header(&d.join("res.csv")), "stage,residual_norm,iterations,wall_time");

    let out = eek(d, &["reconstruct", "--gamma", "1.5", "--in", "data.eek", "--metric", "data.eek", "--out", "fluid.eek"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(json(&out)["w_max"].as_f64().unwrap() > 0.0);

    let out = eek(d, &["norms", "--field", "fluid.eek", "--s", "2.5", "--delta", "-1", "--gamma-psi", "2", "--report", "shells.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(json(&out)["norm"].as_f64().unwrap() > 0.0);
    assert_eq!(csv_header(&d.join("shells.csv")), "j,shell_term,weight,cumulative");

    let out = eek(
        d,
        &["evolve", "--data", "data.eek", "--fluid", "fluid.eek", "--gamma", "1.5", "--T", "0.1", "--s", "4", "--delta", "-1", "--monitor", "run.csv", "--picard", "4"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert!(v["picard"]["limit_vs_direct"].as_f64().unwrap() <= 1e-5);
    assert!(csv_header(&d.join("run.csv")).starts_with("t,energy,H_norm,norm_residual,ham_residual,mom_residual"));

    // Inputs of the wrong layout are validation failures.
    let out = eek(d, &["evolve", "--data", "fluid.eek", "--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = eek(d, &["norms", "--field", "nope.eek", "--s", "1", "--delta", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
