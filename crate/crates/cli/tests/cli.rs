use std::process::{Command, Output};

fn tbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbl"))
        .args(args)
        .env("TBL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn compute_row_counts_and_anchor() {
    let o = tbl(&["compute", "--sigma", "indicator", "--L", "1", "--s", "-1/2..21/2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "sigma_id,L,s,q,trunc_err,window_lo,window_hi");
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(first[2], "-0.5");
    let q: f64 = first[3].parse().unwrap();
    assert!((q - (-1.0f64).exp()).abs() < 1e-10);
    assert_eq!(text.lines().count(), 13);

    let o = tbl(&["compute", "--sigma", "fermi:0.5", "--L", "0.5,1,2", "--s", "-9/2..21/2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 49);
}

#[test]
fn compute_json_and_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.json");
    let o = tbl(&[
        "compute",
        "--u",
        "0.5",
        "--L",
        "1",
        "--s",
        "1/2,3/2",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["s"], "3/2");
}

#[test]
fn sigma_file_matches_named_profile() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigma.json");
    std::fs::write(&path, r#"{"kind": "fermi", "u": 0.5}"#).unwrap();
    let a = tbl(&[
        "compute",
        "--sigma-file",
        path.to_str().unwrap(),
        "--L",
        "1",
        "--s",
        "1/2",
    ]);
    let b = tbl(&["compute", "--sigma", "fermi:0.5", "--L", "1", "--s", "1/2"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn verify_passes_and_reports() {
    let o = tbl(&[
        "verify",
        "toda",
        "--sigma",
        "fermi:0.5",
        "--L",
        "1",
        "--s",
        "3/2",
        "--h",
        "1e-2",
        "--tol",
        "1e-6",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v[0];
    assert_eq!(r["check"], "toda");
    assert_eq!(r["pass"], true);
    assert!(r["residual"].as_f64().unwrap() < 1e-6);

    let o = tbl(&["verify", "dpii", "--L", "1", "--s-max", "21/2", "--tol", "1e-8"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v[0]["params"]["cross_check"].as_array().unwrap().len() >= 9);
}

#[test]
fn verify_csv_format() {
    let o = tbl(&["verify", "ratio", "--L", "1", "--s", "1/2", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("check,params,residual,tolerance,pass,error"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn exit_codes() {
    // a tolerance nothing can meet
    let o = tbl(&["verify", "toda", "--L", "1", "--s", "3/2", "--tol", "1e-30"]);
    assert_eq!(code(&o), 1);
    // bad lattice point, unknown profile, Toeplitz with a non-indicator profile
    assert_eq!(code(&tbl(&["compute", "--L", "1", "--s", "1"])), 2);
    assert_eq!(
        code(&tbl(&["compute", "--sigma", "gauss", "--L", "1", "--s", "1/2"])),
        2
    );
    assert_eq!(code(&tbl(&["verify", "toeplitz", "--sigma", "fermi:0.5"])), 2);
    assert_eq!(code(&tbl(&["compute", "--L", "-1", "--s", "1/2"])), 2);
    // sampler cap
    assert_eq!(code(&tbl(&["mc", "--L", "25", "--s", "1/2", "--samples", "10"])), 3);
    let bad = Command::new(env!("CARGO_BIN_EXE_tbl"))
        .args(["compute", "--L", "1", "--s", "1/2"])
        .env("TBL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn tables_are_deterministic() {
    let args = [
        "mc",
        "--sigma",
        "fermi:0.5",
        "--L",
        "2",
        "--s",
        "1/2,5/2",
        "--samples",
        "20000",
        "--seed",
        "9",
    ];
    let a = tbl(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_tbl"))
        .args(args)
        .env("TBL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("sigma_id,L,s,mc_mean,mc_stderr,fredholm_q,z_score"));

    let o = tbl(&["dpii", "--L", "1,2", "--s-max", "7/2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("L,s,v,cross_check"));

    let o = tbl(&["kdv", "--epsilon", "0.4,0.3"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("x,t,epsilon,L,s,q,kdv_residual"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verify_all_quick() {
    let o = tbl(&["verify", "all", "--quick"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v.as_array().unwrap();
    assert!(reports.iter().all(|r| r["pass"] == true));
    for check in [
        "anchors",
        "toeplitz",
        "toda",
        "variational-alpha",
        "idpii-recursion",
        "dpii",
        "volterra",
        "small-l",
        "mc",
        "kdv-trend",
    ] {
        assert!(reports.iter().any(|r| r["check"] == check), "missing {check}");
    }
}
