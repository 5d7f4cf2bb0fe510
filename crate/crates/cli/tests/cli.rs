use std::fs;
use std::process::{Command, Output};

fn chronos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chronos"))
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

#[test]
fn coeffs_multiroot_root() {
    let o = chronos(&["coeffs", "--family", "multiroot", "--order", "3", "--rho", "0.125"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = v["roots"]["r"].as_f64().unwrap();
    assert!((r - 2.3917).abs() < 1e-4, "r = {r}");
    assert_eq!(v["spec"]["m"], 3);
}

#[test]
fn coeffs_distinct_trapezoidal_limit() {
    let o = chronos(&["coeffs", "--family", "distinct", "--order", "1", "--rho", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rho"].as_f64(), Some(-1.0));
    let root = &v["roots"]["roots"]["roots"][0];
    assert_eq!(root[0].as_f64(), Some(2.0));
    assert_eq!(root[1].as_f64(), Some(0.0));
}

#[test]
fn rho_out_of_range_exits_2() {
    let o = chronos(&["coeffs", "--family", "distinct", "--order", "2", "--rho", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rho_inf = 1.5 is outside the admissible range [0, 1]"));
}

#[test]
fn unsupported_order_exits_2() {
    let o = chronos(&["coeffs", "--family", "distinct", "--order", "9", "--rho", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("order M = 9"), "{}", stderr(&o));
}

#[test]
fn run_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = chronos(&[
            "run", "--family", "multiroot", "--order", "3", "--rho", "0", "--benchmark", "3dof-sinh",
            "--dt", "0.05", "--t-end", "10", "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,u_1,v_1,a_1,u_2,v_2,a_2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r.split(',').count() == 7));
}

#[test]
fn run_rod_with_cfl() {
    let o = chronos(&[
        "run", "--family", "multiroot", "--order", "3", "--rho", "0", "--benchmark", "rod", "--cfl", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("t,u_1,v_1,a_1,"));
    // Header plus the initial state and 80 steps of the default mesh at CFL 5.
    assert_eq!(text.lines().count(), 1 + 81);
}

#[test]
fn step_size_flags_are_exclusive() {
    let both = chronos(&[
        "run", "--family", "distinct", "--order", "2", "--rho", "0", "--benchmark", "rod", "--dt", "0.01",
        "--cfl", "5",
    ]);
    assert_eq!(both.status.code(), Some(2));
    let neither = chronos(&["run", "--family", "distinct", "--order", "2", "--rho", "0", "--benchmark", "sdof"]);
    assert_eq!(neither.status.code(), Some(2));
    let cfl_sdof = chronos(&[
        "run", "--family", "distinct", "--order", "2", "--rho", "0", "--benchmark", "sdof", "--cfl", "5",
    ]);
    assert_eq!(cfl_sdof.status.code(), Some(2));
    assert!(stderr(&cfl_sdof).contains("rod"));
}

#[test]
fn nonconvergence_exits_3_with_step() {
    let o = chronos(&[
        "run", "--family", "distinct", "--order", "2", "--rho", "0.5", "--benchmark", "pendulum", "--dt", "0.5",
        "--t-end", "10", "--max-iter", "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("at step 1"), "{}", stderr(&o));
}

#[test]
fn spectral_csv() {
    let o = chronos(&["spectral", "--family", "distinct", "--order", "2", "--rho", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,radius"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (w, r) = l.split_once(',').unwrap();
            (w.parse().unwrap(), r.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 361);
    assert!(rows.iter().all(|&(_, r)| r <= 1.0 + 1e-9));
    assert!((rows[360].1 - 0.5).abs() < 1e-3);
}

#[test]
fn converge_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = chronos(&[
        "converge", "--family", "multiroot", "--order", "2", "--benchmark", "sdof", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let reports = v.as_array().unwrap();
    assert!(!reports.is_empty());
    for r in reports {
        assert_eq!(r["benchmark"], "sdof");
        assert!(r["dts"].as_array().unwrap().len() >= 2);
    }
}

#[test]
fn converge_respects_thread_cap() {
    let o = Command::new(env!("CARGO_BIN_EXE_chronos"))
        .args(["converge", "--family", "distinct", "--order", "1", "--rho", "0", "--benchmark", "sdof"])
        .env("CHRONOS_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().count() >= 2);
    let bad = Command::new(env!("CARGO_BIN_EXE_chronos"))
        .args(["converge", "--family", "distinct", "--order", "1", "--rho", "0", "--benchmark", "sdof"])
        .env("CHRONOS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"family": "multiroot", "order": 3, "rho": 0.125}"#).unwrap();
    let from_file = chronos(&["coeffs", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let v: serde_json::Value = serde_json::from_str(&stdout(&from_file)).unwrap();
    assert_eq!(v["spec"]["family"], "multiroot");
    assert_eq!(v["spec"]["m"], 3);

    let overridden = chronos(&["coeffs", "--config", cfg.to_str().unwrap(), "--order", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&overridden)).unwrap();
    assert_eq!(v["spec"]["m"], 2);
    assert_eq!(v["spec"]["rho_inf"].as_f64(), Some(0.125));

    fs::write(&cfg, r#"{"famly": "multiroot"}"#).unwrap();
    let bad = chronos(&["coeffs", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
