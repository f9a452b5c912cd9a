use std::path::Path;
use std::process::Command;

fn cloak(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_cloak"))
        .args(args)
        .output()
        .expect("spawn cloak");
    assert!(
        out.status.success(),
        "cloak {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn values(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn privatize_then_unmask_restores_input() {
    let dir = tempfile::tempdir().unwrap();
    let (y, yt, back) = (dir.path().join("y.csv"), dir.path().join("yt.csv"), dir.path().join("back.csv"));
    std::fs::write(&y, "value\n0.5\n0.25\n-1.125\n3\n").unwrap();
    cloak(&[
        "privatize", "--input", p(&y), "--epsilon", "4", "--delta", "0.1", "--delta2", "1", "--seed", "9",
        "--out", p(&yt),
    ]);
    let key = dir.path().join("yt.csv.json");
    let meta = json(&std::fs::read_to_string(&key).unwrap());
    assert!((meta["sigma"].as_f64().unwrap() - 1.2628643221).abs() < 1e-9);
    assert_ne!(values(&yt), values(&y));
    cloak(&["unmask", "--input", p(&yt), "--key", p(&key), "--out", p(&back)]);
    assert_eq!(values(&back), vec![0.5, 0.25, -1.125, 3.0]);
}

#[test]
fn kernel_then_recover_noiseless_atom() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.csv");
    cloak(&["kernel", "--n", "20", "--m", "10", "--mu", "0.5", "--t", "0.1", "--out", p(&op)]);
    let text = std::fs::read_to_string(&op).unwrap();
    assert!(text.starts_with("kind,rows,cols,T,mu,t,tau\ninterval,10,20,"));
    // measurements of a unit source at column 9
    let y: Vec<String> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(9).unwrap().to_string())
        .collect();
    let ypath = dir.path().join("y.csv");
    std::fs::write(&ypath, format!("value\n{}\n", y.join("\n"))).unwrap();
    let f = dir.path().join("f.csv");
    cloak(&["recover", "--operator", p(&op), "--measurements", p(&ypath), "--radius", "1e-3", "--out", p(&f)]);
    let est = values(&f);
    assert_eq!(est.len(), 20);
    let argmax = (0..20).max_by(|&a, &b| est[a].total_cmp(&est[b])).unwrap();
    assert_eq!(argmax, 9);
    let diag = json(&std::fs::read_to_string(dir.path().join("f.csv.json")).unwrap());
    assert_eq!(diag["converged"], true);
    assert!(diag["constraint_violation"].as_f64().unwrap() <= 1e-6 * 1.001);
}

#[test]
fn recover_reports_infeasible_radius() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.csv");
    cloak(&["kernel", "--n", "5", "--m", "3", "--t", "0.2", "--out", p(&op)]);
    let y = dir.path().join("y.csv");
    std::fs::write(&y, "value\n-5\n-5\n-5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cloak"))
        .args(["recover", "--operator", p(&op), "--measurements", p(&y), "--radius", "0.1"])
        .args(["--out", p(&dir.path().join("f.csv"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn bounds_and_packing() {
    let lower = json(&cloak(&["bounds", "--T", "0.5", "--sigma", "0.1", "--m", "50", "--lower"]));
    assert_eq!(lower["value"].as_f64().unwrap(), 0.005);
    let upper = json(&cloak(&["bounds", "--T", "0.05", "--sigma", "0.1"]));
    let v = upper["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&v));
    let pack = json(&cloak(&["packing", "--a", "0.2", "--n", "100"]));
    assert_eq!(pack["indices"], serde_json::json!([29, 39, 49, 59, 69]));
}

#[test]
fn sensitivity_modes() {
    let grid = json(&cloak(&["sensitivity", "--n", "100", "--m", "50"]));
    let radius = json(&cloak(&["sensitivity", "--n", "100", "--m", "50", "--alpha", "0.1", "--neighbours", "emd-radius"]));
    let (g, r) = (grid["delta2"].as_f64().unwrap(), radius["delta2"].as_f64().unwrap());
    assert!((r - 10.0 * g).abs() < 1e-12 * r);
}

#[test]
fn sweep_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    std::fs::write(&cfg, "n = 40\nm = 20\nsweep = sigma\nvalues = 0.05, 0.2\n").unwrap();
    let (rec, sum) = (dir.path().join("r.csv"), dir.path().join("s.csv"));
    cloak(&["sweep", "--config", p(&cfg), "--trials", "3", "--out", p(&rec), "--summary", p(&sum)]);
    let records = std::fs::read_to_string(&rec).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 3);
    assert!(records.starts_with("sweep_var,sweep_value,trial,seed,"));
    let summary = std::fs::read_to_string(&sum).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);

    let rec2 = dir.path().join("r2.csv");
    cloak(&["sweep", "--config", p(&cfg), "--trials", "3", "--out", p(&rec2), "--summary", p(&sum)]);
    assert_eq!(records, std::fs::read_to_string(&rec2).unwrap());
}

#[test]
fn graph_kernel_is_doubly_stochastic() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("g.csv");
    cloak(&["kernel", "--graph", "star", "--n", "6", "--tau", "0.7", "--out", p(&op)]);
    let text = std::fs::read_to_string(&op).unwrap();
    for line in text.lines().skip(2) {
        let s: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
