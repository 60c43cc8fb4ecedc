use std::path::Path;
use std::process::{Command, Output};

fn hodgelab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hodgelab")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PUNCTURED: &str = r#"{"schema_version":1,"domain":{"kind":"punctured_box","cells":[12,12],"hole":[[4,8],[4,8]]},"degree":1}"#;

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hodgelab(&["verify", "geometry"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown suite"));
    let o = hodgelab(&["solve", "--problem", "sideways"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"domian":{}}"#).unwrap();
    let o = hodgelab(&["--config", "c.json", "solve"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_binary_names_the_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = hodgelab(&["solve", "--degree", "1", "--out", "run/omega.bin"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("run/omega.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(dir.path().join("short.bin"), &bytes).unwrap();
    let o = hodgelab(&["solve", "--degree", "1", "--eta", "short.bin", "--out", "again"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("binary.length"), "{}", stderr(&o));

    std::fs::write(dir.path().join("p.json"), PUNCTURED).unwrap();
    let o = hodgelab(&["--config", "p.json", "solve", "--eta", "run/omega.bin", "--out", "other"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("binary.cell_counts"), "{}", stderr(&o));
}

#[test]
fn solve_writes_report_and_rejects_incompatible_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), PUNCTURED).unwrap();
    let o = hodgelab(&["--config", "p.json", "solve", "--problem", "neumann", "--out", "ok"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("ok/solve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iterations,residual,harmonic_dim,compat_violation"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[2], "1");

    // the harmonic field of the punctured box is not in the range of the Laplacian
    let o = hodgelab(&["--config", "p.json", "decompose", "--flavor", "n", "--out", "dec"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hodgelab(&["--config", "p.json", "solve", "--problem", "neumann", "--eta", "dec/h.bin", "--out", "bad"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("compatibility"), "{}", stderr(&o));
}

#[test]
fn decompose_reports_harmonic_dimension() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), PUNCTURED).unwrap();
    let o = hodgelab(&["--config", "p.json", "decompose", "--flavor", "t", "--out", "d"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("d/summary.json")).unwrap()).unwrap();
    assert_eq!(s["harmonic_dim"], 1);
    assert_eq!(s["schema_version"], 1);
    assert!(s["residuals"]["reconstruction"].as_f64().unwrap() <= 1e-8);
    for f in ["h.bin", "alpha.bin", "beta.bin"] {
        assert!(dir.path().join("d").join(f).exists(), "{f}");
    }
}

#[test]
fn parametrix_sweep_writes_one_row_per_radius() {
    let dir = tempfile::tempdir().unwrap();
    let o = hodgelab(
        &["parametrix", "--metric", "test", "--degree", "0", "--patch", "half", "--R-sweep", "0.5,0.25,0.125", "--cells-per-radius", "12", "--report", "contraction.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("contraction.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "R,est_norm,series_terms,vs_direct_rel_diff");
    assert_eq!(lines.len(), 4);
    let norms: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = hodgelab(&["--seed", "5", "pxlap", "--gamma", "0.5", "--L", "2.0", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["summary.json", "u.bin"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    let hist: Vec<f64> = s["energy_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(hist.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("busy")).unwrap();
    std::fs::write(dir.path().join("busy/.hodgelab.lock"), "1").unwrap();
    let o = hodgelab(&["norms", "--out", "busy"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("locked"));
}

#[test]
fn report_tabulates_a_verify_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = hodgelab(&["verify", "algebra", "--out", "v"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hodgelab(&["report", "--input", "v/verify_algebra.json", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert!(csv.starts_with("suite,name,status,measured,bound\n"));
    assert!(csv.lines().skip(1).all(|l| l.contains(",pass,")));
}
