use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn seaflow(args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_seaflow"));
    cmd.args(args);
    for var in ["SEAFLOW_FLOWS", "SEAFLOW_DISTANCES", "SEAFLOW_OUTPUT", "SEAFLOW_SEED", "RUST_LOG"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    let out = cmd.output().expect("binary runs");
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run(command: &str, config: &Path) -> (i32, String) {
    seaflow(&[command, "--config", config.to_str().unwrap()], &[])
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

const EQUIDISTANT: &str = "port,A,B,C\nA,0,1,1\nB,1,0,1\nC,1,1,0\n";

fn model_config(dir: &Path, transport: f64, congestion: [f64; 3], values: [f64; 3], distances: &str) -> PathBuf {
    write(&dir.join("d.csv"), distances);
    write(
        &dir.join("run.toml"),
        &format!(
            "seed = 1\n\n[paths]\ndistances = \"d.csv\"\noutput = \"out\"\n\n[model]\ngoods = [\"coal\"]\ncapacities = [90.0]\n\
             transport = [{transport:?}]\ncongestion = {congestion:?}\nvalues = [{values:?}]\n"
        ),
    )
}

#[test]
fn symmetric_instance_solves_to_the_uniform_field_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model_config(dir.path(), 1.0, [1.0; 3], [0.0; 3], EQUIDISTANT);
    let (code, err) = run("solve", &cfg);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    let summary = json(&out.join("solve.json"));
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["iterations"], 1);
    let occupancy = std::fs::read_to_string(out.join("occupancy.csv")).unwrap();
    assert_eq!(occupancy, "good,port,occupancy\ncoal,A,30\ncoal,B,30\ncoal,C,30\n");
    assert!(summary["representative"]["relative_gap"].as_f64().unwrap() <= 1e-6);

    let (code, err) = run("validate", &cfg);
    assert_eq!(code, 0, "{err}");
    assert_eq!(json(&out.join("validation.json"))["passed"], true);
    assert!(out.join("manifest.validate.json").is_file());
    assert!(!out.join("error.validate.json").exists());
}

#[test]
fn tampered_solution_fails_validation_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model_config(dir.path(), 1.0, [1.0; 3], [0.0; 3], EQUIDISTANT);
    assert_eq!(run("solve", &cfg).0, 0);
    let out = dir.path().join("out");
    let text = std::fs::read_to_string(out.join("occupancy.csv")).unwrap().replace("coal,A,30", "coal,A,40");
    write(&out.join("occupancy.csv"), &text);
    let (code, _) = run("validate", &cfg);
    assert_eq!(code, 2);
    let record = json(&out.join("error.validate.json"));
    assert_eq!(record["kind"], "VerificationFailed");
    assert_eq!(record["exit_code"], 2);
    assert_eq!(json(&out.join("validation.json"))["passed"], false);
    assert_eq!(json(&out.join("manifest.validate.json"))["status"], "VerificationFailed");
}

#[test]
fn uniform_congestion_without_transport_cost_is_a_finding() {
    let dir = tempfile::tempdir().unwrap();
    let distances = "port,A,B,C\nA,0,1.3,2.9\nB,1.1,0,0.7\nC,2.2,1.6,0\n";
    let cfg = model_config(dir.path(), 0.0, [1.0; 3], [0.4, -0.1, -0.3], distances);
    let (code, err) = run("check", &cfg);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    let good = &json(&out.join("check.json"))["goods"][0];
    assert_eq!(good["raw_determinant_vanishes"], true);
    assert!(good["relative_determinant"].as_f64().unwrap() <= 1e-10);
    assert!(["unique", "degenerate"].contains(&good["verdict"].as_str().unwrap()));
    let omega = std::fs::read_to_string(out.join("omega.csv")).unwrap();
    assert_eq!(omega.lines().count(), 1 + 9);
}

fn simulate_then_infer(dir: &Path, sigma: f64) -> (Value, Value, PathBuf) {
    let sim = write(
        &dir.join("sim.toml"),
        &format!("seed = 4\n[paths]\noutput = \"sim\"\n[synthetic]\nnoise_sigma = {sigma:?}\nhorizon_days = 400\n"),
    );
    let (code, err) = run("simulate", &sim);
    assert_eq!(code, 0, "{err}");
    let inf = write(
        &dir.join("infer.toml"),
        "seed = 4\n[paths]\nflows = \"sim/flows.csv\"\ndistances = \"sim/distances.csv\"\noutput = \"fit\"\n",
    );
    let (code, err) = run("infer", &inf);
    assert_eq!(code, 0, "{err}");
    (json(&dir.join("sim/truth.json")), json(&dir.join("fit/calibration.json")), inf)
}

#[test]
fn noise_free_simulation_is_recovered_through_the_files() {
    let dir = tempfile::tempdir().unwrap();
    let (truth, fit, _) = simulate_then_infer(dir.path(), 0.0);
    let good = &fit["goods"][0];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    assert!(rel(good["transport_cost"].as_f64().unwrap(), truth["transport"][0].as_f64().unwrap()) <= 1e-4);
    for (r, t) in floats(&good["congestion"]).iter().zip(floats(&truth["congestion"])) {
        assert!(rel(*r, t) <= 1e-4, "{r} vs {t}");
    }
    for (v, t) in floats(&good["values"]).iter().zip(floats(&truth["values"][0])) {
        assert!((v - t).abs() <= 1e-4, "{v} vs {t}");
    }

    let intercepts = std::fs::read_to_string(dir.path().join("fit/intercepts.csv")).unwrap();
    let ports: Vec<String> = truth["ports"].as_array().unwrap().iter().map(|p| p.as_str().unwrap().to_string()).collect();
    let mut seen = 0;
    for line in intercepts.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let i = ports.iter().position(|p| p == f[1]).unwrap();
        let j = ports.iter().position(|p| p == f[2]).unwrap();
        let expected = truth["coefficients"][0]["intercept"][i][j].as_f64().unwrap();
        assert!((f[3].parse::<f64>().unwrap() - expected).abs() <= 1e-8, "A[{i},{j}]");
        seen += 1;
    }
    assert_eq!(seen, ports.len() * (ports.len() - 1));
}

#[test]
fn report_is_a_pure_function_of_saved_results() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, inf) = simulate_then_infer(dir.path(), 0.01);
    assert_eq!(run("report", &inf).0, 0);
    let report = dir.path().join("fit/report");
    let first: Vec<(String, Vec<u8>)> = {
        let mut v: Vec<_> = std::fs::read_dir(&report)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["congestion_bars.csv", "intercepts.G0.csv", "route_coefficients.csv", "transport_cost.csv", "value_bars.csv"]
    );
    let bars = String::from_utf8(first[0].1.clone()).unwrap();
    assert!(bars.starts_with("port,G0\nP0,"));

    // Copied results produce the same tables without the config's inputs.
    let copy = dir.path().join("copy");
    std::fs::create_dir_all(&copy).unwrap();
    for f in ["coefficients.csv", "intercepts.csv", "calibration.json"] {
        std::fs::copy(dir.path().join("fit").join(f), copy.join(f)).unwrap();
    }
    let (code, err) = seaflow(&["report", "--config", inf.to_str().unwrap(), "--from", copy.to_str().unwrap()], &[]);
    assert_eq!(code, 0, "{err}");
    for (name, bytes) in &first {
        assert_eq!(&std::fs::read(report.join(name)).unwrap(), bytes, "{name}");
    }
}

#[test]
fn input_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("d.csv"), "port,A,B\nA,0,1\nB,1,0\n");
    write(&dir.path().join("f.csv"), "date,origin,destination,good,tons\n2020-01-01,A,B,coal,-3\n");
    let cfg = write(
        &dir.path().join("run.toml"),
        "[paths]\nflows = \"f.csv\"\ndistances = \"d.csv\"\noutput = \"out\"\n",
    );
    let (code, err) = run("infer", &cfg);
    assert_eq!(code, 1);
    assert!(err.contains("\"NegativeQuantity\""), "{err}");
    let record = json(&dir.path().join("out/error.infer.json"));
    assert_eq!(record["status"], "error");
    assert!(record["message"].as_str().unwrap().contains(":2:"));
    assert!(!dir.path().join("out/manifest.infer.json").exists());

    let missing = write(&dir.path().join("missing.toml"), "[paths]\nflows = \"nope.csv\"\n");
    let (code, err) = run("infer", &missing);
    assert_eq!(code, 1);
    assert!(err.contains("\"Config\""), "{err}");
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            e.path().is_file().then(|| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_reproduce_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, inf) = simulate_then_infer(dir.path(), 0.01);
    let first = read_all(&dir.path().join("fit"));
    let manifest = json(&dir.path().join("fit/manifest.infer.json"));
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 3);

    assert_eq!(run("infer", &inf).0, 0);
    assert_eq!(read_all(&dir.path().join("fit")), first);
}

#[test]
fn environment_overrides_seed_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(&dir.path().join("sim.toml"), "seed = 4\n[paths]\noutput = \"a\"\n[synthetic]\nhorizon_days = 200\n");
    let other = dir.path().join("b");
    let (code, err) = seaflow(
        &["simulate", "--config", sim.to_str().unwrap()],
        &[("SEAFLOW_SEED", "9"), ("SEAFLOW_OUTPUT", other.to_str().unwrap())],
    );
    assert_eq!(code, 0, "{err}");
    assert!(!dir.path().join("a").exists());
    let manifest = json(&other.join("manifest.simulate.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(json(&other.join("truth.json"))["seed"], 9);
    assert_eq!(manifest["overrides"]["SEAFLOW_SEED"], "9");
}
