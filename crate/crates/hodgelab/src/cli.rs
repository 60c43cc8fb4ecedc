//! Command-line interface: argument definitions and the subcommand runners.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hodgelab_core::decomposition::{Flavor, PxSettings, Side};
use hodgelab_core::exponent::{derivative_magnitude, luxemburg_norm, modular, ExponentField};
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::dec::{Cochain, Dec};
use hodgelab_core::forms::sampled::de_rham_map;
use hodgelab_core::hodge::{project_harmonic, BoundaryCondition, Hodge, VariationalProblem};
use hodgelab_core::lattice::ScalarField;
use hodgelab_core::parametrix::{radius_sweep, Patch, PatchBc, SweepSettings};
use hodgelab_core::potentials::{derivative_potential, halfspace_potential, halfspace_potential_at, interior_residual, newtonian_potential, HalfBc, HalfKind};
use hodgelab_core::rng::XorShift64;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, MetricSpec, ProblemKind, SCHEMA_VERSION};
use crate::format;
use crate::report::{num, to_json, write_csv, write_json, DirLock, SuiteReport};
use crate::suites;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 check or solver failure, 2 usage error.

Artifacts:
  *.bin         HLAB container: magic, u32 LE header length, JSON header
                {format, version, degree, n, cell_counts, domain_hash, len}, f64 LE values
  summary.json  {schema_version, command, ...}; residuals, harmonic_dims, compat_checks,
                harmonic_dim, energy_history (pxlap)
  verify JSON   {schema_version, suite, checks: [{name, status, measured, bound, note?}]}
  residual.csv  h, interior_L2_residual, boundary_trace_max
  solve.csv     iterations, residual, harmonic_dim, compat_violation
  norms.csv     field_id, p_spec, k, norm, modular_at_norm
  contraction.csv  R, est_norm, series_terms, vs_direct_rel_diff
  report.csv    suite, name, status, measured, bound";

#[derive(Debug, Parser)]
#[command(name = "hodgelab", version, about = "Hodge-Laplacian experiments and verification suites", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Global {
    /// JSON experiment configuration (unknown keys are rejected).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of every random corpus; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, or the primary artifact path when it ends in `.bin`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Relative solver tolerance; overrides the configuration.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run verification suites and emit a JSON report.
    Verify {
        /// algebra | norms | potentials | bvp | decomposition | parametrix | all
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Luxemburg norms of a field and its gradient (norms.csv).
    Norms {
        /// Field binary on the cube-center lattice; defaults to a set of sample fields.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Volume potentials of a density on the cube-center lattice.
    Potentials {
        #[arg(long, value_enum, default_value = "newtonian")]
        kernel: Kernel,
        /// Derivative direction for the derivative kernels.
        #[arg(long, default_value_t = 0)]
        alpha: usize,
        /// Domain configuration (same schema as --config).
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Weak Hodge-Laplace solve (solve.csv, omega.bin, summary.json).
    Solve {
        #[arg(long, value_enum)]
        problem: Option<ProblemKind>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        eta: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Hodge decomposition (h.bin, alpha.bin, beta.bin, summary.json).
    Decompose {
        #[arg(long, value_enum, default_value = "t")]
        flavor: FlavorArg,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Div-curl system with homogeneous trace.
    Divcurl {
        #[arg(long, value_enum, default_value = "t")]
        side: SideArg,
    },
    /// Hodge-Dirac system with parameter alpha.
    Dirac {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "t")]
        side: SideArg,
    },
    /// p(x)-Laplacian minimization with coefficient a in [gamma, L].
    Pxlap {
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long = "L", default_value_t = 2.0)]
        upper: f64,
    },
    /// Contraction estimates of the localized parametrix over patch radii.
    Parametrix {
        /// euclidean, test, or a JSON metric object.
        #[arg(long, default_value = "test")]
        metric: String,
        #[arg(long, default_value_t = 0)]
        degree: usize,
        #[arg(long, value_enum, default_value = "interior")]
        patch: PatchArg,
        #[arg(long, value_enum, default_value = "dirichlet")]
        bc: BcArg,
        #[arg(long = "R-sweep", value_delimiter = ',', default_value = "0.5,0.25,0.125")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 32)]
        cells_per_radius: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate a verify JSON report as CSV; fails if any check failed.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kernel {
    Newtonian,
    Derivative,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FlavorArg {
    T,
    N,
    Mixed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    T,
    N,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatchArg {
    Interior,
    Half,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BcArg {
    Dirichlet,
    Neumann,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub error: Option<anyhow::Error>,
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit { code: 1, error: Some(e) }
    }
}

impl From<hodgelab_core::Error> for Exit {
    fn from(e: hodgelab_core::Error) -> Self {
        Exit { code: 1, error: Some(e.into()) }
    }
}

fn usage(msg: impl Into<String>) -> Exit {
    Exit { code: 2, error: Some(anyhow::anyhow!(msg.into())) }
}

/// Where artifacts go: a directory plus an optional primary file name.
struct Output {
    dir: PathBuf,
    primary: Option<PathBuf>,
}

impl Output {
    fn new(g: &Global, cfg: &ExperimentConfig) -> Self {
        match g.out.clone().or_else(|| cfg.out.clone()) {
            Some(p) if p.extension().is_some_and(|e| e == "bin") => {
                let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
                Output { dir, primary: Some(p) }
            }
            Some(p) => Output { dir: p, primary: None },
            None => Output { dir: PathBuf::from("."), primary: None },
        }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn primary_or(&self, name: &str) -> PathBuf {
        self.primary.clone().unwrap_or_else(|| self.file(name))
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Exit> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Exit { code: 2, error: Some(e) })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.tol {
        if !(t > 0.0) {
            return Err(usage("--tol must be positive"));
        }
        cfg.tolerances.solver = t;
    }
    Ok(cfg)
}

fn build_hodge(cfg: &ExperimentConfig) -> anyhow::Result<Hodge> {
    let cx = cfg.domain.build()?;
    let dec = Dec::new(std::sync::Arc::new(cx), cfg.metric.build())?;
    Ok(Hodge::new(dec, cfg.tolerances.solver)?)
}

fn seeded(dec: &Dec, r: usize, seed: u64) -> Cochain {
    let mut rng = XorShift64::new(seed);
    let mut c = dec.zeros(r);
    rng.fill_symmetric(&mut c.values);
    c
}

fn summary(command: &str, cfg: &ExperimentConfig, body: Value) -> Value {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": cfg.seed,
        "domain": cfg.domain,
        "metric": cfg.metric,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

fn harmonic_dims(hd: &Hodge) -> Value {
    let mut m = serde_json::Map::new();
    for r in 0..=hd.n() {
        for bc in [BoundaryCondition::Tangential, BoundaryCondition::Normal] {
            let v = hd.harmonic_fields(r, bc).map(|b| json!(b.dim())).unwrap_or(Value::Null);
            m.insert(format!("{}_r{r}", bc.name()), v);
        }
    }
    Value::Object(m)
}

pub fn run(cli: Cli) -> Result<(), Exit> {
    let g = cli.global.clone();
    let cfg = load_config(&g)?;
    match cli.command {
        Command::Verify { suite } => verify(&g, &cfg, &suite),
        Command::Report { input } => report(&g, &cfg, &input),
        cmd => {
            let out = Output::new(&g, &cfg);
            let _lock = DirLock::acquire(&out.dir)?;
            match cmd {
                Command::Norms { input } => norms(&cfg, &out, input.as_deref()),
                Command::Potentials { kernel, alpha, domain, input, report } => potentials(&cfg, &out, kernel, alpha, domain.as_deref(), input.as_deref(), report),
                Command::Solve { problem, degree, eta, report } => solve(&cfg, &out, problem, degree, eta.as_deref(), report),
                Command::Decompose { flavor, input } => decompose(&cfg, &out, flavor, input.as_deref()),
                Command::Divcurl { side } => divcurl(&cfg, &out, side),
                Command::Dirac { alpha, side } => dirac(&cfg, &out, alpha, side),
                Command::Pxlap { gamma, upper } => pxlap(&cfg, &out, gamma, upper, g.tol),
                Command::Parametrix { metric, degree, patch, bc, radii, cells_per_radius, report } => {
                    parametrix(&cfg, &out, &metric, degree, patch, bc, &radii, cells_per_radius, report)
                }
                Command::Verify { .. } | Command::Report { .. } => unreachable!(),
            }
        }
    }
}

fn verify(g: &Global, cfg: &ExperimentConfig, suite: &str) -> Result<(), Exit> {
    let checks = suites::run_suite(suite, cfg.seed).ok_or_else(|| usage(format!("unknown suite '{suite}' (expected one of {}, all)", suites::SUITES.join(", "))))?;
    let rep = SuiteReport { schema_version: SCHEMA_VERSION, suite: suite.into(), checks };
    let text = to_json(&rep)?;
    if let Some(dir) = g.out.clone().or_else(|| cfg.out.clone()) {
        let _lock = DirLock::acquire(&dir)?;
        let path = dir.join(format!("verify_{suite}.json"));
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");
    if rep.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
        Err(anyhow::anyhow!("failed checks: {}", failed.join(", ")).into())
    }
}

fn report(g: &Global, cfg: &ExperimentConfig, input: &Path) -> Result<(), Exit> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let rep: SuiteReport = serde_json::from_str(&text).with_context(|| format!("{} is not a verify report", input.display()))?;
    let out = Output::new(g, cfg);
    let _lock = DirLock::acquire(&out.dir)?;
    let rows: Vec<Vec<String>> = rep
        .checks
        .iter()
        .map(|c| {
            let status = if c.passed() { "pass" } else { "fail" };
            vec![rep.suite.clone(), c.name.clone(), status.into(), c.measured.map(num).unwrap_or_else(|| "nan".into()), num(c.bound)]
        })
        .collect();
    write_csv(&out.file("report.csv"), &["suite", "name", "status", "measured", "bound"], &rows)?;
    let failed = rep.checks.iter().filter(|c| !c.passed()).count();
    println!("{}: {} checks, {} failed", rep.suite, rep.checks.len(), failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{failed} failed checks in {}", input.display()).into())
    }
}

fn norms(cfg: &ExperimentConfig, out: &Output, input: Option<&Path>) -> Result<(), Exit> {
    let cx = cfg.domain.build()?;
    let lat = cx.cube_lattice();
    let p = cfg.exponent.to_spec()?.sample(&lat)?;
    let fields: Vec<(String, ScalarField)> = match input {
        Some(path) => {
            let (_, comps) = format::read_field(path, &lat)?;
            comps.into_iter().enumerate().map(|(i, c)| Ok((format!("input[{i}]"), ScalarField::new(lat.clone(), c)?))).collect::<anyhow::Result<_>>()?
        }
        None => {
            let mut rng = XorShift64::new(cfg.seed);
            let mut noise = vec![0.0; lat.len()];
            rng.fill_symmetric(&mut noise);
            vec![
                ("one".into(), ScalarField::from_fn(lat.clone(), |_| 1.0)),
                ("bubble".into(), ScalarField::from_fn(lat.clone(), |x| 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]))),
                ("noise".into(), ScalarField::new(lat.clone(), noise)?),
            ]
        }
    };
    let spec = cfg.exponent.describe();
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (id, f) in &fields {
        for k in 0..=1 {
            let g = derivative_magnitude(f, k)?;
            let nrm = luxemburg_norm(&g, &p)?;
            let m = if nrm > 0.0 { modular(&g.scaled(1.0 / nrm), &p)? } else { 0.0 };
            rows.push(vec![id.clone(), spec.clone(), k.to_string(), num(nrm), num(m)]);
            table.push(json!({"field_id": id, "k": k, "norm": nrm, "modular_at_norm": m}));
        }
    }
    write_csv(&out.file("norms.csv"), &["field_id", "p_spec", "k", "norm", "modular_at_norm"], &rows)?;
    write_json(&out.file("summary.json"), &summary("norms", cfg, json!({"exponent": cfg.exponent, "norms": table})))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn potentials(cfg: &ExperimentConfig, out: &Output, kernel: Kernel, alpha: usize, domain: Option<&Path>, input: Option<&Path>, report: Option<PathBuf>) -> Result<(), Exit> {
    let dcfg = match domain {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Exit { code: 2, error: Some(e) })?,
        None => cfg.clone(),
    };
    let cx = dcfg.domain.build()?;
    let lat = cx.cube_lattice();
    let n = lat.n;
    if alpha >= n {
        return Err(usage(format!("--alpha must be below the dimension {n}")));
    }
    let f = match input {
        Some(path) => {
            let (_, comps) = format::read_field(path, &lat)?;
            ScalarField::new(lat.clone(), comps[0].clone())?
        }
        None => {
            let c = cube_center(&cx);
            ScalarField::from_fn(lat.clone(), move |x| {
                let r2: f64 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum();
                (-r2 / 0.02).exp()
            })
        }
    };
    let half = |bc| -> anyhow::Result<(ScalarField, f64)> {
        let p = halfspace_potential(&f, bc, HalfKind::P, 1.0)?;
        // trace points (x', 0) below the first layer of cube centers
        let pts: Vec<[f64; 3]> = (0..lat.len())
            .filter(|&i| lat.coords(i)[n - 1] == 0)
            .map(|i| {
                let mut x = lat.point(i);
                x[n - 1] = 0.0;
                x
            })
            .collect();
        let t = halfspace_potential_at(&f, bc, HalfKind::P, 1.0, &pts)?;
        Ok((p, t.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
    };
    let (pot, trace, target) = match kernel {
        Kernel::Newtonian => {
            let p = newtonian_potential(&f)?;
            let b = boundary_max(&p);
            (p, b, f.clone())
        }
        Kernel::Derivative => {
            let p = derivative_potential(&f, alpha)?;
            let b = boundary_max(&p);
            // Laplacian of Q_alpha[f] is -d_alpha f
            (p, b, f.partial(alpha).scaled(-1.0))
        }
        Kernel::Dirichlet => {
            let (p, t) = half(HalfBc::Dirichlet)?;
            (p, t, f.clone())
        }
        Kernel::Neumann => {
            let (p, t) = half(HalfBc::Neumann)?;
            (p, t, f.clone())
        }
    };
    let res = interior_residual(&pot, &target, 2)?;
    let report = report.unwrap_or_else(|| out.file("residual.csv"));
    write_csv(&report, &["h", "interior_L2_residual", "boundary_trace_max"], &[vec![num(lat.h), num(res), num(trace)]])?;
    format::write_field(&out.primary_or("P.bin"), &lat, 0, std::slice::from_ref(&pot.values))?;
    write_json(&out.file("summary.json"), &summary("potentials", &dcfg, json!({"kernel": format!("{kernel:?}").to_lowercase(), "h": lat.h, "residuals": {"interior_L2": res}, "boundary_trace_max": trace})))?;
    Ok(())
}

fn cube_center(cx: &CubicalComplex) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..cx.n {
        c[k] = cx.origin[k] + 0.5 * cx.h * cx.cells_per_axis[k] as f64;
    }
    c
}

/// max |P| on the outermost layer of the lattice.
fn boundary_max(p: &ScalarField) -> f64 {
    let b = p.lattice.boundary_points();
    (0..p.values.len()).filter(|&i| b[i]).fold(0.0f64, |m, i| m.max(p.values[i].abs()))
}

fn bc_of(kind: ProblemKind) -> BoundaryCondition {
    match kind {
        ProblemKind::Dirichlet => BoundaryCondition::Tangential,
        ProblemKind::Neumann => BoundaryCondition::Normal,
        ProblemKind::Full => BoundaryCondition::FullDirichlet,
        ProblemKind::Natural => BoundaryCondition::Natural,
    }
}

fn solve(cfg: &ExperimentConfig, out: &Output, problem: Option<ProblemKind>, degree: Option<usize>, eta: Option<&Path>, report: Option<PathBuf>) -> Result<(), Exit> {
    let kind = problem.unwrap_or(cfg.problem);
    let r = degree.unwrap_or(cfg.degree);
    let hd = build_hodge(cfg)?;
    let dec = &hd.dec;
    if r > hd.n() {
        return Err(usage(format!("degree {r} exceeds the dimension {}", hd.n())));
    }
    let bc = bc_of(kind);
    let eta = match eta {
        Some(p) => format::read_cochain(p, &dec.cx, Some(r))?,
        None => {
            // seeded data with its harmonic part removed, so the default run is solvable
            let mut c = seeded(dec, r, cfg.seed);
            if bc.pins_tangential() {
                dec.zero_tangential(&mut c);
            }
            match kind {
                ProblemKind::Natural => c = c.minus(&hd.mixed_projection(&c)?),
                ProblemKind::Full => {}
                _ => {
                    let basis = hd.harmonic_fields(r, bc)?;
                    c = c.minus(&project_harmonic(&c, &basis, dec)?);
                }
            }
            c
        }
    };
    let (omega, iterations, residual, harmonic_dim, compat) = if kind == ProblemKind::Natural {
        let s = hd.solve_natural(&eta, None, None)?;
        (s.omega, 0usize, s.weak_residual, 0usize, s.compat)
    } else {
        let p = VariationalProblem { degree: r, eta, phi: None, psi: None, bc, tol: cfg.tolerances.solver };
        let s = hd.solve_weak(&p)?;
        (s.omega, s.iterations, s.residual, s.harmonic_dim, s.compat_violation)
    };
    let report = report.unwrap_or_else(|| out.file("solve.csv"));
    write_csv(&report, &["iterations", "residual", "harmonic_dim", "compat_violation"], &[vec![iterations.to_string(), num(residual), harmonic_dim.to_string(), num(compat)]])?;
    format::write_cochain(&out.primary_or("omega.bin"), &dec.cx, &omega)?;
    let body = json!({
        "problem": kind,
        "degree": r,
        "iterations": iterations,
        "residuals": {"weak": residual},
        "harmonic_dim": harmonic_dim,
        "compat_checks": [{"name": "harmonic_pairing", "measured": compat, "bound": hodgelab_core::hodge::COMPAT_BOUND}],
    });
    write_json(&out.file("summary.json"), &summary("solve", cfg, body))?;
    Ok(())
}

fn decompose(cfg: &ExperimentConfig, out: &Output, flavor: FlavorArg, input: Option<&Path>) -> Result<(), Exit> {
    let hd = build_hodge(cfg)?;
    let dec = &hd.dec;
    let r = cfg.degree;
    let flavor = match flavor {
        FlavorArg::T => Flavor::Tangential,
        FlavorArg::N => Flavor::Normal,
        FlavorArg::Mixed => Flavor::Mixed,
    };
    let omega = match input {
        Some(p) => format::read_cochain(p, &dec.cx, Some(r))?,
        None => {
            let mut c = seeded(dec, r, cfg.seed);
            if flavor == Flavor::Tangential {
                dec.zero_tangential(&mut c);
            }
            c
        }
    };
    let t = hd.hodge_decompose(&omega, flavor)?;
    let audit = hd.audit_decomposition(&omega, &t)?;
    let harmonic_dim = match flavor {
        Flavor::Tangential => hd.harmonic_fields(r, BoundaryCondition::Tangential)?.dim(),
        Flavor::Normal => hd.harmonic_fields(r, BoundaryCondition::Normal)?.dim(),
        Flavor::Mixed => 0,
    };
    format::write_cochain(&out.file("h.bin"), &dec.cx, &t.h)?;
    if let Some(a) = &t.alpha {
        format::write_cochain(&out.file("alpha.bin"), &dec.cx, a)?;
    }
    if let Some(b) = &t.beta {
        format::write_cochain(&out.file("beta.bin"), &dec.cx, b)?;
    }
    let body = json!({
        "flavor": format!("{flavor:?}").to_lowercase(),
        "degree": r,
        "residuals": {
            "reconstruction": audit.reconstruction,
            "orthogonality": audit.orthogonality,
            "alpha_gauge": audit.alpha_gauge,
            "beta_gauge": audit.beta_gauge,
        },
        "harmonic_dim": harmonic_dim,
        "harmonic_dims": harmonic_dims(&hd),
        "compat_checks": [],
    });
    write_json(&out.file("summary.json"), &summary("decompose", cfg, body))?;
    Ok(())
}

/// Size of the harmonic part of `c` relative to `c`.
fn pairing(hd: &Hodge, c: &Cochain, bc: BoundaryCondition) -> anyhow::Result<f64> {
    let basis = hd.harmonic_fields(c.degree, bc)?;
    let h = project_harmonic(c, &basis, &hd.dec)?;
    Ok(hd.dec.norm(&h) / hd.dec.norm(c).max(f64::MIN_POSITIVE))
}

fn side_of(s: SideArg) -> Side {
    match s {
        SideArg::T => Side::Tangential,
        SideArg::N => Side::Normal,
    }
}

fn divcurl(cfg: &ExperimentConfig, out: &Output, side: SideArg) -> Result<(), Exit> {
    let hd = build_hodge(cfg)?;
    let dec = &hd.dec;
    let r = cfg.degree;
    if r == 0 || r >= hd.n() {
        return Err(usage("divcurl needs 0 < degree < n"));
    }
    // f = d(bubble), v = delta d(g): compatible data built from seeded potentials
    let mut bubble = seeded(dec, r, cfg.seed);
    dec.zero_tangential(&mut bubble);
    let f = dec.d(&bubble)?;
    let mut g = seeded(dec, r - 1, cfg.seed.wrapping_add(1));
    dec.zero_tangential(&mut g);
    let v = dec.delta(&dec.d(&g)?)?;
    let s = hd.solve_divcurl(Some(&f), Some(&v), &dec.zeros(r), side_of(side))?;
    let bc = match side_of(side) {
        Side::Tangential => BoundaryCondition::Tangential,
        Side::Normal => BoundaryCondition::Normal,
    };
    format::write_cochain(&out.primary_or("omega.bin"), &dec.cx, &s.omega)?;
    let body = json!({
        "side": format!("{:?}", side_of(side)).to_lowercase(),
        "degree": r,
        "residuals": {"curl": s.curl_residual, "div": s.div_residual, "trace": s.trace_residual},
        "harmonic_dims": harmonic_dims(&hd),
        "compat_checks": [
            {"name": "f_harmonic_pairing", "measured": pairing(&hd, &f, bc)?, "bound": hodgelab_core::decomposition::GATE},
            {"name": "v_harmonic_pairing", "measured": pairing(&hd, &v, bc)?, "bound": hodgelab_core::decomposition::GATE},
        ],
    });
    write_json(&out.file("summary.json"), &summary("divcurl", cfg, body))?;
    Ok(())
}

fn dirac(cfg: &ExperimentConfig, out: &Output, alpha: f64, side: SideArg) -> Result<(), Exit> {
    let hd = build_hodge(cfg)?;
    let dec = &hd.dec;
    let n = hd.n();
    let r = cfg.degree.min(n);
    let mut data: Vec<Cochain> = (0..=n).map(|k| dec.zeros(k)).collect();
    let mut fr = seeded(dec, r, cfg.seed);
    dec.zero_tangential(&mut fr);
    if side_of(side) == Side::Tangential {
        let basis = hd.harmonic_fields(r, BoundaryCondition::Tangential)?;
        fr = fr.minus(&project_harmonic(&fr, &basis, dec)?);
    } else {
        let basis = hd.harmonic_fields(r, BoundaryCondition::Normal)?;
        fr = fr.minus(&project_harmonic(&fr, &basis, dec)?);
    }
    data[r] = fr;
    let s = hd.solve_hodge_dirac(&data, alpha, side_of(side))?;
    for (k, w) in s.omega.iter().enumerate() {
        format::write_cochain(&out.file(&format!("omega{k}.bin")), &dec.cx, w)?;
    }
    let body = json!({
        "alpha": alpha,
        "side": format!("{:?}", side_of(side)).to_lowercase(),
        "residuals": s.residuals,
        "harmonic_dims": harmonic_dims(&hd),
        "compat_checks": [{"name": "harmonic_pairing", "measured": s.harmonic_pairing}],
    });
    write_json(&out.file("summary.json"), &summary("dirac", cfg, body))?;
    Ok(())
}

fn pxlap(cfg: &ExperimentConfig, out: &Output, gamma: f64, upper: f64, tol: Option<f64>) -> Result<(), Exit> {
    if !(gamma > 0.0 && gamma <= upper) {
        return Err(usage("need 0 < gamma <= L"));
    }
    let hd = build_hodge(cfg)?;
    let dec = &hd.dec;
    let cx = &dec.cx;
    let r = cfg.degree.min(hd.n() - 1);
    let lat = cx.cube_lattice();
    let a = ScalarField::from_fn(lat.clone(), |x| gamma + (upper - gamma) * (0.5 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin()));
    let p: ExponentField = cfg.exponent.to_spec()?.sample(&lat)?;
    let k = hodgelab_core::forms::index::binomial(hd.n(), r + 1);
    let force = de_rham_map(cx, r + 1, |x| (0..k).map(|i| (std::f64::consts::PI * (x[0] + i as f64 * x[1])).sin() + x[1]).collect());
    let u0 = dec.zeros(r);
    let s = hd.solve_px_laplacian(&u0, &force, &a, &p, None, PxSettings { tol: tol.unwrap_or(PxSettings::default().tol), ..PxSettings::default() })?;
    format::write_cochain(&out.primary_or("u.bin"), cx, &s.u)?;
    let body = json!({
        "gamma": gamma,
        "L": upper,
        "degree": r,
        "exponent": cfg.exponent,
        "energy": s.energy,
        "iterations": s.iterations,
        "residuals": {"euler_lagrange": s.el_residual},
        "energy_history": s.energy_history,
        "harmonic_dims": harmonic_dims(&hd),
        "compat_checks": [],
    });
    write_json(&out.file("summary.json"), &summary("pxlap", cfg, body))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn parametrix(cfg: &ExperimentConfig, out: &Output, metric: &str, degree: usize, patch: PatchArg, bc: BcArg, radii: &[f64], cells: usize, report: Option<PathBuf>) -> Result<(), Exit> {
    let spec = MetricSpec::parse(metric).map_err(|e| Exit { code: 2, error: Some(e) })?;
    if degree > 2 {
        return Err(usage("patches are planar: degree must be 0, 1 or 2"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(usage("--R-sweep needs positive radii"));
    }
    let settings = SweepSettings {
        degree,
        patch: match patch {
            PatchArg::Interior => Patch::Interior,
            PatchArg::Half => Patch::Half,
        },
        bc: match bc {
            BcArg::Dirichlet => PatchBc::Dirichlet,
            BcArg::Neumann => PatchBc::Neumann,
        },
        cells_per_radius: cells,
        exponent: cfg.exponent.to_spec().unwrap_or_else(|_| SweepSettings::default().exponent),
        seed: cfg.seed,
        ..SweepSettings::default()
    };
    let sweep = radius_sweep(&spec.build(), radii, &settings)?;
    let rows: Vec<Vec<String>> = sweep.rows.iter().map(|r| vec![num(r.radius), num(r.estimate), r.series_terms.to_string(), num(r.rel_diff)]).collect();
    let report = report.unwrap_or_else(|| out.file("contraction.csv"));
    write_csv(&report, &["R", "est_norm", "series_terms", "vs_direct_rel_diff"], &rows)?;
    let body = json!({
        "metric": spec,
        "degree": degree,
        "patch": format!("{patch:?}").to_lowercase(),
        "threshold": sweep.threshold,
        "monotone": sweep.monotone,
        "rows": sweep.rows.iter().map(|r| json!({"R": r.radius, "est_norm": r.estimate, "series_terms": r.series_terms, "vs_direct_rel_diff": if r.rel_diff.is_finite() { json!(r.rel_diff) } else { Value::Null }})).collect::<Vec<_>>(),
    });
    write_json(&out.file("summary.json"), &summary("parametrix", cfg, body))?;
    Ok(())
}
