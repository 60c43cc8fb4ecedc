//! Runs `hodgelab verify all` twice and reports one line per acceptance criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hodgelab::report::SuiteReport;

const CRITERIA: &[(u32, &str, &[&str])] = &[
    (1, "structural exactness d∘d = 0, δ∘δ = 0", &["algebra/dd/", "algebra/deltadelta/"]),
    (2, "adjointness and boundary integration by parts", &["algebra/adjoint/", "algebra/ibp_boundary_order/"]),
    (3, "Luxemburg norm: L^p agreement, homogeneity, modular at norm", &["norms/luxemburg/"]),
    (4, "Riesz potential scaling exponent", &["norms/riesz_scaling/"]),
    (5, "half-space Dirichlet kernel and trace extension", &["potentials/"]),
    (6, "manufactured Poisson order and first eigenvalue", &["bvp/poisson/"]),
    (7, "harmonic field dimensions", &["bvp/betti/"]),
    (8, "Hodge decompositions", &["decomposition/hodge/"]),
    (9, "commutation of δ with the Dirichlet potential", &["decomposition/commutation"]),
    (10, "div-curl and Hodge-Dirac residuals, compatibility gates", &["decomposition/divcurl/", "decomposition/dirac/", "decomposition/gate/"]),
    (11, "Poincaré constant scaling", &["bvp/poincare_scaling/"]),
    (12, "parametrix contraction and Neumann series", &["parametrix/"]),
    (13, "p(x)-Laplacian minimization", &["decomposition/pxlap/"]),
];

fn run_all(dir: &Path) -> (Vec<u8>, Duration, bool) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_hodgelab")).args(["verify", "all", "--out"]).arg(dir).output().expect("binary runs");
    (out.stdout, start.elapsed(), out.status.success())
}

fn main() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (first, t1, ok1) = run_all(a.path());
    let (second, t2, _) = run_all(b.path());
    let report: SuiteReport = serde_json::from_slice(&first).expect("verify prints a JSON report");
    let on_disk = std::fs::read(a.path().join("verify_all.json")).unwrap();
    assert_eq!(on_disk, first, "stdout and verify_all.json differ");

    let mut failed = Vec::new();
    for (id, what, prefixes) in CRITERIA {
        let checks: Vec<_> = report.checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect();
        let pass = !checks.is_empty() && checks.iter().all(|c| c.passed());
        println!("criterion {id:>2} {} {what} ({} checks)", if pass { "PASS" } else { "FAIL" }, checks.len());
        for c in checks.iter().filter(|c| !c.passed()) {
            println!("      failed {} measured {:?} bound {:e}", c.name, c.measured, c.bound);
        }
        if !pass {
            failed.push(*id);
        }
    }
    let identical = first == second && std::fs::read(b.path().join("verify_all.json")).unwrap() == on_disk;
    let wall = t1.max(t2);
    let pass14 = identical && wall <= Duration::from_secs(600);
    println!("criterion 14 {} determinism and wall time (identical {identical}, slowest run {:.1} s)", if pass14 { "PASS" } else { "FAIL" }, wall.as_secs_f64());
    if !pass14 {
        failed.push(14);
    }
    assert!(ok1 == report.passed());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
