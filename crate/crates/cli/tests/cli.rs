use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pencilbench")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn analyze_scalar_mode() {
    let o = run(&["analyze", "--model", "builtin:dahlquist:-1", "--methods", "itm", "--h", "0.1"]);
    assert!(o.status.success());
    let re: f64 = column(&stdout(&o), "re_stilde")[0].parse().unwrap();
    assert!((re + 1.000835).abs() < 1e-6);
}

#[test]
fn analyze_dominant_mode_damping_column() {
    let o = run(&["analyze", "--mode=-0.1699+7.6696j", "--methods", "fem,bem,itm,dirk2s,bdf2", "--h", "0.05"]);
    assert!(o.status.success());
    let dz: Vec<f64> = column(&stdout(&o), "d_zeta_pct").iter().map(|v| v.parse().unwrap()).collect();
    // Two units of the last printed digit.
    let expected = [(-18.5, 0.2), (18.2, 0.2), (-0.052, 0.002), (-0.005, 0.002), (0.9, 0.2)];
    for (k, (e, tol)) in expected.iter().enumerate() {
        let got = dz[2 * k];
        assert!((got - e).abs() <= *tol, "{got} vs {e}");
    }
}

#[test]
fn missing_model_file_exits_2_and_names_it() {
    let o = run(&["analyze", "--model", "no/such/model.json", "--h", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/model.json"));
}

#[test]
fn bounds_examples() {
    let o = run(&["bounds", "--mode=-0.3042+4.1426j", "--method", "dirk2s", "--ds", "0.1"]);
    let h: f64 = column(&stdout(&o), "h")[0].parse().unwrap();
    assert!((h - 0.189).abs() < 1e-3, "{h}");
    let o = run(&["bounds", "--model", "builtin:dahlquist:-1000", "--method", "fem", "--stability"]);
    let h: f64 = column(&stdout(&o), "h")[0].parse().unwrap();
    assert!((h - 0.002).abs() < 1e-6, "{h}");
}

#[test]
fn unreachable_bound_is_open() {
    let o = run(&["bounds", "--mode=-1+2j", "--method", "itm", "--ds", "100"]);
    assert!(o.status.success());
    assert_eq!(column(&stdout(&o), "open")[0], "true");
}

#[test]
fn simulate_beyond_margin_reports_divergence() {
    let o = run(&["simulate", "--model", "builtin:dahlquist:-1000", "--method", "fem", "--h", "0.0022", "--t-end", "1", "--x0", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged at t ="));
}

#[test]
fn out_files_are_deterministic_and_carry_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&["analyze", "--model", "builtin:smib", "--h", "0.01,0.05", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "analyze");
    assert_eq!(manifest["inputs"]["model"], "builtin:smib");
    assert_eq!(manifest["outputs"][0], a.to_str().unwrap());
}

#[test]
fn validate_passes_and_detects_the_negative_control() {
    let o = run(&["validate", "--trials", "10"]);
    assert!(o.status.success());
    let o = run(&["validate", "--trials", "10", "--perturb-itm"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL growth-pencil-itm"));
}

#[test]
fn invalid_thread_count_is_an_input_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_pencilbench"))
        .args(["validate", "--trials", "1"])
        .env("PENCILBENCH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
