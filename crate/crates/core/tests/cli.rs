use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn chain(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("chains").join(name)
}

fn asip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asip"))
        .args(args)
        .env("ASIP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn moments_reports_the_reference_variance() {
    let c = chain("symmetric.json");
    let out = asip(&["moments", "--chain", c.to_str().unwrap(), "--horizon", "20", "--json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["tool"], "asip");
    assert_eq!(v["result"]["var_s2"][0].as_f64().unwrap(), 3.0);
    assert_eq!(v["result"]["curve"].as_array().unwrap().len(), 20);
    assert!(v["result"]["balance"]["variances"].is_object());
}

#[test]
fn mixing_reference_values_and_missing_n0() {
    let c = chain("symmetric.json");
    let out = asip(&["mixing", "--chain", c.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["result"]["report"]["coefficients"][0]["alpha"].as_f64().unwrap(), 0.125);
    assert_eq!(v["result"]["report"]["coefficients"][0]["phi"].as_f64().unwrap(), 0.25);

    let slow = chain("slow.json");
    let out = asip(&["mixing", "--chain", slow.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n₀ not found"));
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(code(&asip(&["moments", "--chain", "/does/not/exist.json"])), 2);
    assert_eq!(code(&asip(&["moments"])), 2);
    let c = chain("symmetric.json");
    let c = c.to_str().unwrap();
    assert_eq!(code(&asip(&["blocks", "--chain", c, "--p", "2"])), 2);
    assert_eq!(code(&asip(&["simulate", "--chain", c, "--paths", "1"])), 2);
    assert_eq!(code(&asip(&["mixing", "--chain", c, "--delta", "-1"])), 2);
    assert_eq!(code(&asip(&["nonsense"])), 2);
}

#[test]
fn mutated_kernel_is_rejected() {
    let text = std::fs::read_to_string(chain("symmetric.json")).unwrap();
    let bad = text.replace("[0.75, 0.25], [0.25, 0.75]", "[0.75, 0.35], [0.25, 0.75]");
    assert_ne!(text, bad);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, bad).unwrap();
    let out = asip(&["moments", "--chain", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row sum"));
}

#[test]
fn blocks_exit_codes() {
    let c = chain("symmetric.json");
    let c = c.to_str().unwrap();
    let out = asip(&["blocks", "--chain", c, "--amplitude", "30", "--separation", "3", "--horizon", "1000", "--json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(v["result"]["verification"]["sandwich_holds"].as_bool().unwrap());
    assert!(v["result"]["plan"]["a_overridden"].as_bool().unwrap());
    // the automatic amplitude cannot be reached in ten steps
    assert_eq!(code(&asip(&["blocks", "--chain", c, "--horizon", "10"])), 4);
}

#[test]
fn simulate_writes_reports_and_repeats_exactly() {
    let c = chain("lazy3_d2.json");
    let c = c.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out_dir = dir.path().join(format!("r{i}"));
        let out = Command::new(env!("CARGO_BIN_EXE_asip"))
            .args(["simulate", "--chain", c, "--paths", "500", "--horizon", "300", "--directions", "4"])
            .args(["--seed", "11", "--out", out_dir.to_str().unwrap()])
            .env("ASIP_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        runs.push(files);
    }
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["ks.csv", "lil.csv", "oracle.csv", "simulate.json", "variance_gap.csv", "w1.csv"]);
    assert!(runs[0] == runs[1], "outputs differ between worker counts");
    let ks = String::from_utf8(runs[0][0].1.clone()).unwrap();
    assert!(ks.starts_with("n,direction_id,ks,stderr\n"));
    let report: serde_json::Value = serde_json::from_slice(&runs[0][3].1).unwrap();
    assert!(report["notes"][0].as_str().unwrap().contains("cannot be certified"));
    assert_eq!(report["config"]["seed"], 11);
}
