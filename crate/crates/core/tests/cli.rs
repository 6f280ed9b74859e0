//! End-to-end tests of the binary: exit codes, reproducibility of the file
//! outputs, and the simulate → estimate round trip.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jdcontrast"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn model_json() -> &'static str {
    r#"{"theta1":-1.0,"theta2":2.0,"sigma":0.5,"gamma":1.0,"lambda":0.0,"mu_J":0.0,"sigma_J":1.0}"#
}

#[test]
fn missing_config_exits_2() {
    let out = bin()
        .args(["simulate", "--config", "/nonexistent/cfg.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_steps_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write(
        &cfg,
        &format!(
            r#"{{"schema":1,"model":{},"t_horizon":1.0,"n_steps":0,"seed":1}}"#,
            model_json()
        ),
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write(
        &cfg,
        &format!(
            r#"{{"schema":1,"model":{},"t_horizon":1.0,"n_steps":10,"seed":1,"typo_key":true}}"#,
            model_json()
        ),
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write(
        &cfg,
        &format!(
            r#"{{"schema":1,"model":{{"theta1":-1.0,"theta2":2.0,"sigma":0.5,"gamma":1.0,"lambda":2.0,"mu_J":0.5,"sigma_J":1.0}},"t_horizon":5.0,"n_steps":500,"seed":12,"output_dir":"{}"}}"#,
            dir.path().join("a").display()
        ),
    );
    assert!(bin().args(["simulate", "--config"]).arg(&cfg).status().unwrap().success());
    let first_path = std::fs::read(dir.path().join("a/path.csv")).unwrap();
    let first_jumps = std::fs::read(dir.path().join("a/jumps.csv")).unwrap();
    // rerun into another directory via the CLI override
    let outb = dir.path().join("b");
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&outb)
        .status()
        .unwrap()
        .success());
    assert_eq!(first_path, std::fs::read(outb.join("path.csv")).unwrap());
    assert_eq!(first_jumps, std::fs::read(outb.join("jumps.csv")).unwrap());
    // a different seed changes the path
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "13"])
        .arg("--output-dir")
        .arg(dir.path().join("c"))
        .status()
        .unwrap()
        .success());
    assert_ne!(
        first_path,
        std::fs::read(dir.path().join("c/path.csv")).unwrap()
    );
}

fn estimate_cfg(dir: &Path, input: &Path, estimator: &str) -> std::path::PathBuf {
    let cfg = dir.join("est.json");
    write(
        &cfg,
        &format!(
            r#"{{"schema":1,"model":{},"input_csv":"{}","filter":{{"beta":0.49,"k":3.0}},"kernel":{{"level":0}},"variant":"exact-ou","pbox":{{"mu_lo":0.0,"mu_hi":4.0,"sigma_lo":0.1,"sigma_hi":2.0}},"estimator":{estimator},"output":"{}"}}"#,
            model_json(),
            input.display(),
            dir.join("result.json").display()
        ),
    );
    cfg
}

#[test]
fn empty_csv_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    write(&input, "t,x\n");
    let cfg = estimate_cfg(dir.path(), &input, r#"{"mode":"closed-form"}"#);
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn eval_outside_box_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    write(&input, "t,x\n0.0,0.1\n0.5,0.2\n1.0,0.15\n");
    let cfg = estimate_cfg(
        dir.path(),
        &input,
        r#"{"mode":"eval","theta":[9.0,0.5]}"#,
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_estimate_recovers_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = dir.path().join("sim.json");
    write(
        &sim_cfg,
        &format!(
            r#"{{"schema":1,"model":{},"t_horizon":1000.0,"n_steps":50000,"seed":99,"output_dir":"{}"}}"#,
            model_json(),
            dir.path().display()
        ),
    );
    assert!(bin().args(["simulate", "--config"]).arg(&sim_cfg).status().unwrap().success());
    let cfg = estimate_cfg(
        dir.path(),
        &dir.path().join("path.csv"),
        r#"{"mode":"closed-form"}"#,
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap())
            .unwrap();
    let sigma = result["sigma_hat"].as_f64().unwrap();
    // one path at this size has sigma-error std about 0.0016
    assert!(
        (sigma - 0.5).abs() < 0.005,
        "sigma_hat = {sigma} too far from 0.5"
    );
    let theta1 = result["theta1_hat"].as_f64().unwrap();
    assert!((theta1 + 1.0).abs() < 0.2, "theta1_hat = {theta1}");
}

#[test]
fn kernel_check_certifies_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    // level-2 kernel certifies moments 0..2
    let good = dir.path().join("kc.json");
    write(
        &good,
        r#"{"schema":1,"kernel":{"level":2,"scale":1.4}}"#,
    );
    let out = bin().args(["kernel-check", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // the plain kernel's first moment vanishes by symmetry
    let plain = dir.path().join("kc0.json");
    write(&plain, r#"{"schema":1,"kernel":{"level":0},"moments":[1]}"#);
    let out = bin().args(["kernel-check", "--config"]).arg(&plain).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    // but its zeroth moment is the (positive) mass, so certification fails
    let bad = dir.path().join("kcbad.json");
    write(&bad, r#"{"schema":1,"kernel":{"level":0},"moments":[0]}"#);
    let out = bin().args(["kernel-check", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // plot data emission
    let plot = dir.path().join("kplot.json");
    write(
        &plot,
        &format!(
            r#"{{"schema":1,"kernel":{{"level":2,"scale":1.4}},"plot":{{"n_points":51,"output":"{}"}}}}"#,
            dir.path().join("phi.csv").display()
        ),
    );
    assert!(bin().args(["kernel-check", "--config"]).arg(&plot).status().unwrap().success());
    let csv = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52); // header + 51 points
}

#[test]
fn mc_emits_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.json");
    write(
        &cfg,
        &format!(
            r#"{{"schema":1,"experiment":{{"model":{},"t_horizon":50.0,"n_steps":1000,"substeps":1,"filter":{{"beta":0.49,"k":3.0}},"kernel":{{"level":0}},"variant":"exact-ou","replications":6,"base_seed":7,"estimator":{{"mode":"closed-form"}}}},"output_dir":"{}"}}"#,
            model_json(),
            dir.path().join("r1").display()
        ),
    );
    assert!(bin()
        .args(["mc", "--config"])
        .arg(&cfg)
        .args(["--workers", "2"])
        .status()
        .unwrap()
        .success());
    let csv1 = std::fs::read_to_string(dir.path().join("r1/mc_report.csv")).unwrap();
    assert!(csv1.starts_with("variant,param,true_value,mean,std,bias,se_mean,M,failures"));
    assert!(csv1.contains("theta2"));

    // identical run with one worker gives identical bytes
    assert!(bin()
        .args(["mc", "--config"])
        .arg(&cfg)
        .args(["--workers", "1"])
        .arg("--output-dir")
        .arg(dir.path().join("r2"))
        .status()
        .unwrap()
        .success());
    let csv2 = std::fs::read_to_string(dir.path().join("r2/mc_report.csv")).unwrap();
    assert_eq!(csv1, csv2);
}

#[test]
fn compare_and_diagnose_run() {
    let dir = tempfile::tempdir().unwrap();
    let cmp_cfg = dir.path().join("cmp.json");
    write(
        &cmp_cfg,
        &format!(
            r#"{{"schema":1,"experiment":{{"model":{},"t_horizon":50.0,"n_steps":1000,"substeps":1,"filter":{{"beta":0.49,"k":3.0}},"kernel":{{"level":0}},"variant":"exact-ou","replications":4,"base_seed":7,"estimator":{{"mode":"closed-form"}}}},"arms":[{{"label":"euler","variant":"euler"}},{{"label":"exact","variant":"exact-ou"}}],"output_dir":"{}"}}"#,
            model_json(),
            dir.path().display()
        ),
    );
    assert!(bin().args(["compare", "--config"]).arg(&cmp_cfg).status().unwrap().success());
    assert!(dir.path().join("compare.csv").exists());
    assert!(dir.path().join("compare_paired.json").exists());

    let diag_cfg = dir.path().join("diag.json");
    write(
        &diag_cfg,
        &format!(
            r#"{{"schema":1,"model":{},"filter":{{"beta":0.49,"c":2.0,"k":3.0}},"kernel":{{"level":0}},"seed":3,"diagnostic":{{"check":"filter-rate","t_horizon":10.0,"n_steps":5000,"paths":2,"arm":"false-positive"}}}}"#,
            model_json()
        ),
    );
    let out = bin().args(["diagnose", "--config"]).arg(&diag_cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("fraction"), "{text}");
}
