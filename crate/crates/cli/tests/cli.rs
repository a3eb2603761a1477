use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_qpcocycle");

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
}

fn run_cli(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{cmd}-{}.json", extra.len()));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{cmd}-{}", extra.join("_").replace(['-', '/'], "")));
    let o: Output = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .expect("binary runs");
    Run { code: o.status.code().unwrap_or(-1), out, stderr: String::from_utf8_lossy(&o.stderr).into_owned() }
}

/// Header comments and data rows of an output CSV.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let comments = text.lines().filter(|l| l.starts_with('#')).map(String::from).collect();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (comments, rows)
}

fn error_body(run: &Run) -> Value {
    serde_json::from_str(run.stderr.trim().lines().last().unwrap()).expect("error body is JSON")
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn top_identity_is_zero() {
    let dir = TempDir::new().unwrap();
    let r = run_cli(dir.path(), "top", r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"top":{"n":100,"samples":20}}"#, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (_, rows) = read_csv(&r.out.join("top.csv"));
    assert_eq!(f(&rows[0][5]), 0.0);
}

#[test]
fn top_diagonal_const_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"diagonal-const","params":{"a":[2,3],"b":[0.5,0.5]}},"seed":3,"top":{"n":1000,"samples":200}}"#;
    let r = run_cli(dir.path(), "top", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (_, rows) = read_csv(&r.out.join("top.csv"));
    let exact = 0.5 * (2f64.ln() + 3f64.ln());
    assert!((f(&rows[0][5]) - exact).abs() <= 3.0 * f(&rows[0][6]) + 1e-3, "{:?}", rows[0]);
}

#[test]
fn config_errors_exit_2_with_json_body() {
    let dir = TempDir::new().unwrap();
    let cases = [
        r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"bogus":true}"#,
        r#"{"system":{"kind":"fixture","name":"no-such-fixture"},"seed":1}"#,
        r#"{"system":{"kind":"fixture","name":"identity"}}"#,
        r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"p":[0.7,0.7]}"#,
        r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"top":{"n":0}}"#,
        "not json",
    ];
    for cfg in cases {
        let r = run_cli(dir.path(), "top", cfg, &[]);
        assert_eq!(r.code, 2, "{cfg}: {}", r.stderr);
        let body = error_body(&r);
        assert_eq!(body["error"]["kind"], "config");
        assert_eq!(body["error"]["code"], 2);
        assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let o = Command::new(BIN).args(["top"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).args(["frobnicate", "--config", "x.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config_and_is_echoed() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"irreducible-2d"},"seed":1,"top":{"n":200,"samples":20}}"#;
    let a = run_cli(dir.path(), "top", cfg, &[]);
    let b = run_cli(dir.path(), "top", cfg, &["--seed", "99"]);
    assert_eq!(a.code, 0);
    assert_eq!(b.code, 0);
    let (ca, ra) = read_csv(&a.out.join("top.csv"));
    let (cb, rb) = read_csv(&b.out.join("top.csv"));
    assert!(ca.contains(&"# seed: 1".to_string()));
    assert!(cb.contains(&"# seed: 99".to_string()));
    assert!(ca[0].starts_with("# qpcocycle "));
    assert_ne!(ca[2], cb[2], "config hash covers the seed");
    assert_ne!(ra[0][5], rb[0][5]);
    let record: Value = serde_json::from_str(&std::fs::read_to_string(b.out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 99);
    assert_eq!(record["command"], "top");
    assert!(record["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(record["outputs"][0]["file"], "top.csv");
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn spectrum_reports_both_methods() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"triangular-3"},"seed":5,"spectrum":{"n":400,"samples":60,"det_quad":16}}"#;
    let r = run_cli(dir.path(), "spectrum", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (comments, rows) = read_csv(&r.out.join("spectrum.csv"));
    assert_eq!(rows.len(), 3);
    assert!(comments.iter().any(|c| c.starts_with("# det_average: ")));
    for row in &rows {
        assert_eq!(row.len(), 8);
        assert!(row[7] == "ok" || row[7] == "warning");
        let (diff, se) = (f(&row[5]), f(&row[6]));
        let floor = 1e-12 * (1.0 + f(&row[1]).abs());
        assert_eq!(row[7] == "warning", diff.abs() > 2.0 * se + floor);
    }
    assert!(f(&rows[0][1]) >= f(&rows[1][1]) && f(&rows[1][1]) >= f(&rows[2][1]));
}

#[test]
fn sweep_single_point_equals_top() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"rotation-band"},"seed":11,"top":{"n":300,"samples":40},"sweep":{"n":300,"samples":40}}"#;
    let t = run_cli(dir.path(), "top", cfg, &[]);
    let s = run_cli(dir.path(), "sweep", cfg, &[]);
    assert_eq!((t.code, s.code), (0, 0));
    let (_, tr) = read_csv(&t.out.join("top.csv"));
    let (_, sr) = read_csv(&s.out.join("sweep.csv"));
    assert_eq!(sr.len(), 1);
    assert_eq!(tr[0][5], sr[0][3]);
    assert_eq!(tr[0][6], sr[0][4]);
}

#[test]
fn sweep_simplex_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"triangular-const"},"seed":2,"sweep":{"n":100,"samples":20,"path":{"kind":"simplex","resolution":5}}}"#;
    let r = run_cli(dir.path(), "sweep", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (_, rows) = read_csv(&r.out.join("sweep.csv"));
    let ps: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ps, ["0.2;0.8", "0.4;0.6", "0.6;0.4", "0.8;0.2"]);
    assert_eq!(rows[0][5], "");
    let bad = r#"{"system":{"kind":"fixture","name":"triangular-const"},"seed":2,"sweep":{"path":{"kind":"simplex","resolution":1}}}"#;
    assert_eq!(run_cli(dir.path(), "sweep", bad, &[]).code, 2);
}

#[test]
fn contraction_exit_codes() {
    let dir = TempDir::new().unwrap();
    let r = run_cli(dir.path(), "contraction", r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"contraction":{"n_max":4,"samples":50}}"#, &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    let body = error_body(&r);
    assert_eq!(body["error"]["kind"], "no-contraction");
    assert_eq!(body["error"]["details"]["n_max"], 4);
    for alpha in ["0", "1.5", "-0.2"] {
        let cfg = format!(r#"{{"system":{{"kind":"fixture","name":"irreducible-2d"}},"seed":1,"contraction":{{"alpha":{alpha}}}}}"#);
        assert_eq!(run_cli(dir.path(), "contraction", &cfg, &[]).code, 2, "alpha {alpha}");
    }
    let cfg = r#"{"system":{"kind":"fixture","name":"irreducible-2d"},"seed":1,"contraction":{"alpha":"half"}}"#;
    assert_eq!(run_cli(dir.path(), "contraction", cfg, &[]).code, 2);
}

#[test]
fn contraction_certificate_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"irreducible-2d"},"seed":4,"contraction":{"n_max":6,"samples":300,"alpha":0.25}}"#;
    let r = run_cli(dir.path(), "contraction", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(r.out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["meta"]["command"], "contraction");
    assert!(cert["zeta"].as_f64().unwrap() > 0.0);
    assert!(cert["C0"].as_f64().unwrap() >= 1.0);
    let (_, kn) = read_csv(&r.out.join("kn.csv"));
    let n0 = cert["n0"].as_u64().unwrap() as usize;
    assert_eq!(kn.len(), 3 * n0 + 1);
    let (_, ka) = read_csv(&r.out.join("kn_alpha.csv"));
    assert_eq!(ka.len(), 7);
    assert_eq!(f(&ka[0][2]), 1.0);
    assert!(f(&ka[6][2]) < f(&ka[1][2]));
}

#[test]
fn analytic_identity_is_zero_uncertified() {
    let dir = TempDir::new().unwrap();
    let r = run_cli(dir.path(), "analytic", r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"contraction":{"n_max":3,"samples":20},"analytic":{"fallback_n":20,"params":{"samples":8,"short_samples":32}}}"#, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let a: Value = serde_json::from_str(&std::fs::read_to_string(r.out.join("analytic.json")).unwrap()).unwrap();
    assert_eq!(a["certified"], false);
    let e = &a["evaluations"][0];
    assert_eq!(e["value"][0].as_f64(), Some(0.0));
    assert_eq!(e["value"][1].as_f64(), Some(0.0));
    assert!(e["tail_bound"].is_null());
    let required = r#"{"system":{"kind":"fixture","name":"identity"},"seed":1,"contraction":{"n_max":3,"samples":20},"analytic":{"certify":"required"}}"#;
    assert_eq!(run_cli(dir.path(), "analytic", required, &[]).code, 3);
}

#[test]
fn analytic_at_p_matches_top() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"triangular-fourier"},"seed":8,
        "top":{"n":2000,"samples":200,"burn_in":100},
        "analytic":{"certify":"off","gamma":0.7,"params":{"n":60,"samples":32,"short_samples":256}}}"#;
    let t = run_cli(dir.path(), "top", cfg, &[]);
    let a = run_cli(dir.path(), "analytic", cfg, &[]);
    assert_eq!((t.code, a.code), (0, 0), "{}", a.stderr);
    let (_, tr) = read_csv(&t.out.join("top.csv"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(a.out.join("analytic.json")).unwrap()).unwrap();
    let e = &v["evaluations"][0];
    let value = e["value"][0].as_f64().unwrap();
    assert!(e["value"][1].as_f64().unwrap().abs() < 1e-12);
    let tol = 3.0 * f(&tr[0][6]) + e["stderr"].as_f64().unwrap() * 3.0 + 1e-3;
    assert!((value - f(&tr[0][5])).abs() <= tol, "analytic {value} vs top {}", tr[0][5]);
}

#[test]
fn analytic_domain_violations_exit_4() {
    let dir = TempDir::new().unwrap();
    let circle = r#"{"system":{"kind":"fixture","name":"triangular-fourier"},"seed":1,
        "analytic":{"certify":"off","gamma":0.7,"params":{"n":20,"samples":8,"short_samples":32},"slice":{"delta":[1,-1],"radius":0.5}}}"#;
    let r = run_cli(dir.path(), "analytic", circle, &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert_eq!(error_body(&r)["error"]["kind"], "domain-violation");
    let point = r#"{"system":{"kind":"fixture","name":"triangular-fourier"},"seed":1,
        "analytic":{"certify":"off","gamma":0.7,"params":{"n":20,"samples":8,"short_samples":32},"points":[[[1.3,0],[-0.3,0]]]}}"#;
    assert_eq!(run_cli(dir.path(), "analytic", point, &[]).code, 4);
}

#[test]
fn analytic_slice_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"triangular-fourier"},"seed":1,
        "analytic":{"certify":"off","gamma":0.7,"params":{"n":40,"samples":16,"short_samples":64},"slice":{"delta":[1,-1],"k_max":4,"grid":3}}}"#;
    let r = run_cli(dir.path(), "analytic", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (comments, taylor) = read_csv(&r.out.join("taylor.csv"));
    assert_eq!(taylor.len(), 5);
    assert!(comments.iter().any(|c| c == "# delta: 1.0;-1.0"));
    let (_, holo) = read_csv(&r.out.join("holomorphy.csv"));
    assert_eq!(holo.len(), 9);
    for row in &holo {
        assert!(f(&row[2]) < 1e-6, "{row:?}");
    }
}

#[test]
fn reduce_cases() {
    let dir = TempDir::new().unwrap();
    let tri = r#"{"system":{"kind":"fixture","name":"triangular-3"},"seed":1,"reduce":{"declared":true,"n":300,"samples":40}}"#;
    let r = run_cli(dir.path(), "reduce", tri, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(r.out.join("reduce.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["dims"], serde_json::json!([3, 2, 1]));

    let none = r#"{"system":{"kind":"fixture","name":"irreducible-2d"},"seed":1,"reduce":{"n":200,"samples":20}}"#;
    let r = run_cli(dir.path(), "reduce", none, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(r.out.join("reduce.json")).unwrap()).unwrap();
    assert_eq!(v["trivial"], true);
    assert_eq!(v["dims"], serde_json::json!([2]));
    assert_eq!(v["terminal"]["dim"], 2);

    let bad = r#"{"system":{"kind":"fixture","name":"irreducible-2d"},"seed":1,"reduce":{"sections":[{"kind":"constant","basis":[[1.0],[0.3]]}]}}"#;
    let r = run_cli(dir.path(), "reduce", bad, &[]);
    assert_eq!(r.code, 5, "{}", r.stderr);
    let body = error_body(&r);
    assert_eq!(body["error"]["kind"], "invariance-failure");
    assert!(body["error"]["details"]["defect"].as_f64().unwrap() > 0.1);

    let nested = r#"{"system":{"kind":"fixture","name":"triangular-3"},"seed":1,"reduce":{"sections":[
        {"kind":"constant","basis":[[1,0],[0,1],[0,0]]},{"kind":"constant","basis":[[0],[0],[1]]}]}}"#;
    assert_eq!(run_cli(dir.path(), "reduce", nested, &[]).code, 2);
}

fn files_except_run(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn outputs_are_bitwise_deterministic_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"system":{"kind":"fixture","name":"schrodinger-like"},"seed":21,"spectrum":{"n":300,"samples":50,"det_quad":16}}"#;
    let a = run_cli(dir.path(), "spectrum", cfg, &["--workers", "1"]);
    let b = run_cli(dir.path(), "spectrum", cfg, &["--workers", "4"]);
    assert_eq!((a.code, b.code), (0, 0));
    let fa = files_except_run(&a.out);
    assert!(!fa.is_empty());
    assert_eq!(fa, files_except_run(&b.out));
    let ra: Value = serde_json::from_str(&std::fs::read_to_string(a.out.join("run.json")).unwrap()).unwrap();
    let rb: Value = serde_json::from_str(&std::fs::read_to_string(b.out.join("run.json")).unwrap()).unwrap();
    assert_eq!(ra["outputs"], rb["outputs"]);
}
