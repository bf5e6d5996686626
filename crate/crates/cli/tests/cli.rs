use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_youngbsde"));
    c.env_remove("YOUNGBSDE_WORKERS");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("youngbsde-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(file).display()))
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("stderr line is JSON")
}

#[test]
fn hurst_region_matches_pointwise_inequalities() {
    let out = scratch("hurst");
    let o = bin().args(["hurst-region", "--d", "1", "--resolution", "101", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "hurst_region.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h0,h,admissible"));
    let mut n = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (h0, h) = (v[0], v[1]);
        let expect = h0 + h / 2.0 > 1.0 && h < 2.0 * h0 - 1.0;
        assert_eq!(v[2] == 1.0, expect, "h0 = {h0}, h = {h}");
        n += 1;
    }
    assert_eq!(n, 101 * 101);
}

#[test]
fn invalid_radius_exits_3_without_outputs() {
    let out = scratch("bad-radius");
    let o = run(&["nonlinear-bsde", "--x0", "1.0", "--radii", "[0.5, 2.0]", "--samples", "100"], &out);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr_json(&o);
    assert_eq!(e["kind"], "precondition");
    assert_eq!(e["exit_code"], 3);
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_2() {
    let out = scratch("cfg");
    let o = run(&["exit-decay", "--override", "samplez=10"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("samplez"));
    let o = run(&["exit-decay", "--override", "samples=\"many\""], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["pde-fk", "--diffusion", "levy"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn non_convergence_writes_outputs_and_exits_5() {
    let out = scratch("nonconv");
    let o = run(&["young-integral", "--max-levels", "1", "--tol-abs", "1e-14"], &out);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(stderr_json(&o)["kind"], "non-convergence");
    assert!(read(&out, "young_integral.csv").lines().nth(1).unwrap().ends_with(",0.0000000000000000e0"));
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert!(m["status"].as_str().unwrap().starts_with("non-converged"));
}

fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn replay_is_byte_identical_across_worker_counts() {
    let (a, b) = (scratch("replay-a"), scratch("replay-b"));
    let cfg = scratch("replay-cfg.toml");
    std::fs::write(&cfg, "kind = \"nonlinear-bsde\"\nsamples = 2000\nsteps = 16\nx0 = 0.5\nradii = [2.0, 4.0]\nf = \"tanh\"\ng = \"one\"\ndriver = \"cos-potential\"\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let oa = run(&["nonlinear-bsde", "--config", cfg_s, "--seed", "17", "--workers", "1"], &a);
    let ob = run(&["nonlinear-bsde", "--config", cfg_s, "--seed", "17", "--workers", "3"], &b);
    assert!(oa.status.success() && ob.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let (ca, cb) = (csv_bodies(&a), csv_bodies(&b));
    assert_eq!(ca.len(), 2);
    assert_eq!(ca, cb);
    let ma: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&read(&b, "manifest.json")).unwrap();
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["workers"], 1);
    assert_eq!(mb["workers"], 3);

    let oc = run(&["nonlinear-bsde", "--config", cfg_s, "--seed", "18", "--workers", "1"], &scratch("replay-c"));
    assert!(oc.status.success());
    assert_ne!(csv_bodies(&scratch_keep("replay-c")), ca);
}

fn scratch_keep(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("youngbsde-cli-{}-{name}", std::process::id()))
}

#[test]
fn manifest_checksums_validate() {
    let out = scratch("verify");
    assert!(run(&["exit-decay", "--samples", "5000", "--steps", "50"], &out).status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    for f in m["files"].as_array().unwrap() {
        let body = std::fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, body.len());
        assert_eq!(f["sha256"].as_str().unwrap(), youngbsde_cli::manifest::sha256_hex(&body));
    }
    assert!(m["phases"].as_array().unwrap().iter().any(|p| p["name"] == "exit_decay"));
    let v = bin().arg("verify").arg(&out).output().unwrap();
    assert!(v.status.success());
    std::fs::write(out.join("exit_fit.csv"), "tampered\n").unwrap();
    let v = bin().arg("verify").arg(&out).output().unwrap();
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn worker_count_precedence() {
    let out = scratch("workers-env");
    let o = bin().args(["hurst-region", "--resolution", "3", "--out"]).arg(&out).env("YOUNGBSDE_WORKERS", "2").output().unwrap();
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["workers"], 2);
    let o = bin()
        .args(["hurst-region", "--resolution", "3", "--override", "workers=3", "--out"])
        .arg(&out)
        .env("YOUNGBSDE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["workers"], 3);
    let o = bin().args(["hurst-region", "--resolution", "3", "--workers", "4", "--override", "workers=3", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["workers"], 4);
}

#[test]
fn every_kind_runs_on_a_small_budget() {
    let cases: [&[&str]; 10] = [
        &["simulate-fbs", "--samples", "3", "--nt", "3", "--nx", "3"],
        &["young-integral"],
        &["flow", "--steps", "64", "--richardson", "true"],
        &["linear-bsde", "--samples", "500", "--girsanov", "sin", "--x0", "0.5", "--eval-times", "[0.0, 0.5]"],
        &["nonlinear-bsde", "--samples", "500", "--steps", "8"],
        &["pde-fk", "--samples", "500", "--steps", "20", "--driver", "cos-potential", "--terminal", "one", "--fd-reference", "true"],
        &["localization-error", "--samples", "2000", "--steps", "8", "--points", "0.0", "--radii", "[1.0, 1.5, 4.0]"],
        &["hurst-region", "--d", "2", "--resolution", "11"],
        &["tower-rule", "--samples", "1000", "--steps", "8", "--a-process", "terminal-square"],
        &["exit-decay", "--samples", "5000", "--steps", "20"],
    ];
    for args in cases {
        let out = scratch(&format!("kind-{}", args[0]));
        let o = run(args, &out);
        assert!(o.status.success(), "{}: {}", args[0], String::from_utf8_lossy(&o.stderr));
        assert!(out.join("manifest.json").exists());
        assert!(!csv_bodies(&out).is_empty());
    }
    let out = scratch("double");
    let o = run(
        &["pde-fk", "--method", "double", "--samples", "500", "--steps", "10", "--points", "[0.0]", "--deltas", "[0.2, 0.0]", "--radii", "[2.0, 4.0]", "--driver", "cos-potential", "--g", "one"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&out, "double_diagnostics.csv").lines().count() > 1);
}

#[test]
fn fast_suite_and_tolerance_isolation() {
    let out = scratch("fast");
    let o = bin().args(["acceptance", "--suite", "fast", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = read(&out, "acceptance.csv");
    assert_eq!(summary.lines().count(), 1 + 5);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",1")));

    let bad = scratch("corrupted");
    let o = bin().args(["acceptance", "--suite", "1,2,3", "--override", "c2_tol=1e-30", "--out"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(6));
    let summary = read(&bad, "acceptance.csv");
    let verdicts: Vec<&str> = summary.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(verdicts, ["1", "0", "1"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("criterion  2") && l.contains("FAIL")));

    let o = bin().args(["acceptance", "--suite", "13", "--out"]).arg(scratch("sel")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
