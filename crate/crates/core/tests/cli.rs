use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn data_files() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut files: Vec<PathBuf> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "hvf")).collect();
    files.sort();
    assert!(files.len() >= 8);
    files
}

fn grushin1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/grushin1.hvf")
}

fn dim_of(file: &Path) -> usize {
    let text = fs::read_to_string(file).unwrap();
    let line = text.lines().find(|l| l.trim_start().starts_with("dim")).unwrap();
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

/// Runs `hvf` and returns the exit code, stdout and stderr.
fn hvf(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hvf")).args(args).env("HVF_THREADS", "2").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn hvf_json(args: &[&str]) -> (i32, Value) {
    let (code, stdout, stderr) = hvf(args);
    let v: Value = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{args:?}: {e}\n{stdout}\n{stderr}"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["exit_code"], code);
    (code, v)
}

#[test]
fn analyze_grushin() {
    let (code, v) = hvf_json(&["analyze", grushin1().to_str().unwrap()]);
    assert_eq!(code, 0);
    let r = &v["result"];
    assert_eq!(r["q"], 3);
    assert_eq!(r["lie"]["N"], 3);
    assert_eq!(r["hormander_rank_at_origin"], 2);
    let fk: Vec<u64> = r["volume"]["f_k"].as_array().unwrap().iter().map(|f| f["k"].as_u64().unwrap()).collect();
    assert_eq!(fk, [2, 3]);
}

#[test]
fn lift_prints_heisenberg_law() {
    let (code, out, _) = hvf(&["lift", grushin1().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("x1: x1 + x1'"), "{out}");
    assert!(out.contains("x2: x1*xi1' + x2 + x2'"), "{out}");
    assert!(out.contains("X2~ = (0, x1, 1)"), "{out}");
}

#[test]
fn every_subcommand_on_every_file() {
    for file in data_files() {
        let f = file.to_str().unwrap();
        let n = dim_of(&file);
        let zero = vec!["0"; n].join(",");
        let half = vec!["0.5"; n].join(",");
        let grushin = file.file_name().unwrap() == "grushin1.hvf";
        for (args, general) in [
            (vec!["analyze", f], true),
            (vec!["lift", f, "--json"], true),
            (vec!["verify", f, "--seed", "11"], true),
            (vec!["distance", f, "--from", &zero, "--to", &half, "--restarts", "4"], true),
            (vec!["gamma", f, "--x", "0.5,0.2", "--y", "1,1"], false),
            (vec!["potential", f, "--pole", "0.5,0.2", "--levels", "1", "--funcs", "1,y1^2"], false),
        ] {
            let (code, v) = hvf_json(&args);
            if general || grushin {
                assert_eq!(code, 0, "{args:?}: {v}");
                assert_eq!(v["status"], "ok");
            } else {
                assert_eq!(code, 1, "{args:?}: {v}");
                assert_eq!(v["error"]["kind"], "unsupported");
            }
        }
    }
}

#[test]
fn gamma_calibrate_and_pole_alias() {
    let g = grushin1();
    let g = g.to_str().unwrap();
    let (code, v) = hvf_json(&["gamma", g, "--calibrate"]);
    assert_eq!(code, 0);
    let gamma0 = v["result"]["calibration"]["gamma0"].as_f64().unwrap();
    assert!(gamma0 > 0.0 && v["result"]["calibration"]["residual"].as_f64().unwrap() < 1e-3);
    let (code, v) = hvf_json(&["gamma", g, "--pole", "0,0", "--y", "1,0"]);
    assert_eq!(code, 0);
    // on the axis Γ(0; (1, 0)) = γ₀√2·K(1/2)
    let want = gamma0 * 2f64.sqrt() * 1.854_074_677_301_372;
    let val = v["result"]["values"][0]["gamma"].as_f64().unwrap();
    assert!((val - want).abs() < 1e-9 * want, "{val} vs {want}");
    assert_eq!(hvf(&["gamma", g]).0, 3);
}

#[test]
fn pole_suite_passes() {
    let (code, v) = hvf_json(&["verify", grushin1().to_str().unwrap(), "--suite", "pole", "--seed", "7"]);
    assert_eq!(code, 0);
    let reports = v["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["pass"] == true));
}

#[test]
fn exit_codes() {
    let g = grushin1();
    let g = g.to_str().unwrap();
    assert_eq!(hvf(&["frobnicate"]).0, 3);
    assert_eq!(hvf(&["analyze", "/nonexistent.hvf"]).0, 3);
    assert_eq!(hvf(&["verify", g, "--suite", "pole"]).0, 3);
    assert_eq!(hvf(&["distance", g, "--from", "0,0", "--to", "1"]).0, 3);
    assert_eq!(hvf(&["--help"]).0, 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.hvf");
    fs::write(&bad, "dim = 2\nweights = [1, 2]\nfield X1 = (1, 0\n").unwrap();
    let (code, v) = hvf_json(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "parse");

    let chain4 = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chain4.hvf");
    let args = ["distance", chain4.to_str().unwrap(), "--from", "0,0,0,0", "--to", "0.3,0.5,0.7,0.9", "--segments", "1", "--restarts", "1"];
    let (code, v) = hvf_json(&args);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "tolerance");
}

#[test]
fn identical_runs_write_identical_csv() {
    let g = grushin1();
    let g = g.to_str().unwrap();
    let runs: [&[&str]; 3] = [
        &["distance", g, "--from", "-0.5,0.3", "--to", "0.8,-0.4", "--seed", "5"],
        &["gamma", g, "--x", "0.5,0.2", "--grid", "6"],
        &["potential", g, "--pole", "1,1", "--levels", "1,2", "--funcs", "y1,y1^2", "--deficits"],
    ];
    for args in runs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let mut a = args.to_vec();
            a.extend(["--out", d.path().to_str().unwrap()]);
            assert_eq!(hvf(&a).0, 0, "{a:?}");
        }
        let mut names: Vec<_> = fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".csv")));
        for name in names {
            let a = fs::read(dirs[0].path().join(&name)).unwrap();
            let b = fs::read(dirs[1].path().join(&name)).unwrap();
            assert!(a == b, "{args:?}: {name:?} differs between runs");
        }
    }
}
