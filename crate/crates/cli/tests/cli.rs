use std::path::Path;
use std::process::{Command, Output};

fn pulsekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulsekit")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hard_pulse_rows() {
    let o = pulsekit(&["shape-params", "--hard", "90", "--hard", "180", "--label", "Q1(180)"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row = |name: &str| text.lines().find(|l| l.starts_with(name)).unwrap().split_whitespace().skip(2).collect::<Vec<_>>().join(" ");
    assert_eq!(row("hard(90)"), "0.707107 0.125000 0.176777");
    assert_eq!(row("hard(180)"), "0.000000 0.000000 0.250000");
    assert!(row("Q1(180)").starts_with("0.000000 0.000000"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&pulsekit(&["no-such-command"])), 1);
    assert_eq!(code(&pulsekit(&["scan", "amp-freq", "--grid", "0:0.1:0"])), 1);
    assert_eq!(code(&pulsekit(&["scan", "amp-freq", "--grid", "0:0.1"])), 1);
    assert_eq!(code(&pulsekit(&["order-table", "--n", "1"])), 1);
    assert_eq!(code(&pulsekit(&["order-table", "--model", "heisenberg"])), 1);
    let o = pulsekit(&["shape-params", "--shape", "/nonexistent/shape.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape.json"));
    assert_eq!(code(&pulsekit(&["--help"])), 0);
}

#[test]
fn scan_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = ["scan", "amp-freq", "--seq", "bb1_Wp", "--grid", "-0.1:0.1:5", "--dtau-grid", "-0.1:0.1:3", "--steps", "64"];
    let mut one = vec!["--jobs", "1"];
    one.extend(args);
    one.extend(["--out", path(&a)]);
    let mut three = vec!["--jobs", "3"];
    three.extend(args);
    three.extend(["--out", path(&b)]);
    assert_eq!(code(&pulsekit(&one)), 0);
    assert_eq!(code(&pulsekit(&three)), 0);
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert!(ta.starts_with("# manifest={"));
    assert_eq!(ta.lines().filter(|l| !l.starts_with('#')).count(), 1 + 15);

    let o = pulsekit(&["replay", path(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("replay identical"));
}

#[test]
fn tau_scan_reports_cycles() {
    let o = pulsekit(&["scan", "tau", "--seq", "seq4", "--n", "2", "--exponents", "2:4", "--steps", "64"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau,infidelity,delta,cycles");
    assert_eq!(rows.len(), 4);
    // default total time is 128 cycles at the longest slot width
    let cycles: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(cycles, vec![128.0, 256.0, 512.0]);
}

#[test]
fn order_table_json_embeds_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = pulsekit(&["order-table", "--model", "ising", "--seq", "seq4", "--family", "S1", "--n", "2", "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["manifest"]["command"]["order-table"]["kmax"], 7);
    assert_eq!(v["result"].as_array().unwrap().len(), 1);
}

#[test]
fn synthesis_without_convergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = pulsekit(&["synthesize", "--m", "3", "--budget", "100", "--steps", "128", "--out", path(&out)]);
    assert_eq!(code(&o), 3);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["synthesis"]["converged"], false);
    assert_eq!(v["L"], 1);
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 3);

    // the written file is itself a usable shape file
    let o = pulsekit(&["shape-params", "--shape", path(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("K1L1M3(180)"));
}

#[test]
fn problem_files_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    std::fs::write(&p, r#"{"phi0_degrees": 90, "k": 2, "l": 1, "harmonics": 5}"#).unwrap();
    let o = pulsekit(&["synthesize", "--problem", path(&p)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("harmonics"));
}
