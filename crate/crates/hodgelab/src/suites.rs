//! Verification suites. Each check records what was measured and the bound
//! it was held to; names are prefixed by the suite.

use std::f64::consts::PI;
use std::sync::Arc;

use hodgelab_core::decomposition::{Flavor, PxSettings, Side};
use hodgelab_core::exponent::{luxemburg_norm, modular, riesz_potential, ExponentField, ExponentSpec};
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::dec::{Cochain, Dec};
use hodgelab_core::forms::metric::MetricField;
use hodgelab_core::forms::sampled::{boundary_pairing, de_rham_map, BoundarySample, SampledForm};
use hodgelab_core::hodge::{project_harmonic, BoundaryCondition, Hodge, VariationalProblem};
use hodgelab_core::lattice::{Lattice, ScalarField};
use hodgelab_core::parametrix::{coefficients_from_metric, radius_sweep, test_metric, Patch, PatchBc, SweepSettings};
use hodgelab_core::potentials::{halfspace_potential_at, trace_extension, HalfBc, HalfKind};
use hodgelab_core::rng::XorShift64;
use hodgelab_core::Error;

use crate::report::Check;

pub const SUITES: [&str; 6] = ["algebra", "norms", "potentials", "bvp", "decomposition", "parametrix"];

pub fn run_suite(name: &str, seed: u64) -> Option<Vec<Check>> {
    let checks = match name {
        "algebra" => algebra(seed),
        "norms" => norms(seed),
        "potentials" => potentials(seed),
        "bvp" => bvp(seed),
        "decomposition" => decomposition(seed),
        "parametrix" => parametrix(seed),
        "all" => SUITES.iter().flat_map(|s| run_suite(s, seed).expect("known suite")).collect(),
        _ => return None,
    };
    Some(checks)
}

fn random(dec: &Dec, r: usize, seed: u64) -> Cochain {
    let mut rng = XorShift64::new(seed);
    let mut c = dec.zeros(r);
    rng.fill_symmetric(&mut c.values);
    c
}

fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(k)
}

/// Least-squares slope of log(y) against log(x).
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

fn hodge(cx: CubicalComplex) -> Hodge {
    Hodge::new(Dec::euclidean(cx), 1e-10).expect("valid complex")
}

fn square(m: usize) -> CubicalComplex {
    CubicalComplex::unit_box(2, &[m, m], 1.0 / m as f64).expect("box")
}

fn punctured(m: usize) -> CubicalComplex {
    let q = m / 3;
    CubicalComplex::punctured_box(2, &[m, m], 1.0 / m as f64, &[(q, m - q), (q, m - q)]).expect("punctured box")
}

fn catalog() -> Vec<(&'static str, CubicalComplex)> {
    vec![
        ("box2", square(8)),
        ("lshape2", CubicalComplex::l_shape(2, &[8, 8], 0.125).expect("l")),
        ("punctured2", punctured(9)),
        ("halfbox2", CubicalComplex::from_mask(2, &[8, 4], 0.125, &[-0.5, 0.0], |_| true).expect("half")),
        ("box3", CubicalComplex::unit_box(3, &[4, 4, 4], 0.25).expect("box3")),
        ("lshape3", CubicalComplex::l_shape(3, &[4, 4, 4], 0.25).expect("l3")),
        ("punctured3", CubicalComplex::punctured_box(3, &[6, 6, 6], 1.0 / 6.0, &[(2, 4), (2, 4), (2, 4)]).expect("p3")),
    ]
}

fn curved() -> MetricField {
    MetricField::affine([1.0, 2.0, 1.5], [[0.3, 0.1, 0.0], [0.0, -0.2, 0.1], [0.1, 0.0, 0.2]])
}

pub fn algebra(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (k, (name, cx)) in catalog().into_iter().enumerate() {
        let n = cx.n;
        let dec = Dec::new(Arc::new(cx), curved()).expect("elliptic metric");
        let s = sub_seed(seed, 100 * k as u64);
        for r in 0..=n {
            if r + 2 <= n {
                let c = random(&dec, r, s + r as u64);
                let dd = dec.d(&dec.d(&c).unwrap()).unwrap().max_abs();
                out.push(Check::at_most(format!("algebra/dd/{name}/r{r}"), dd, 1e-13));
            }
            if r >= 2 {
                let c = random(&dec, r, s + 10 + r as u64);
                let ss = dec.delta(&dec.delta(&c).unwrap()).unwrap().max_abs();
                let scale = dec.delta_magnitude(&dec.delta_magnitude(&c).unwrap()).unwrap().max_abs();
                out.push(Check::at_most(format!("algebra/deltadelta/{name}/r{r}"), ss / scale, 1e-13));
            }
            if r < n {
                let mut a = random(&dec, r, s + 20 + r as u64);
                dec.zero_tangential(&mut a);
                let b = random(&dec, r + 1, s + 30 + r as u64);
                let lhs = dec.inner(&dec.d(&a).unwrap(), &b).unwrap();
                let rhs = dec.inner(&a, &dec.delta_t(&b).unwrap()).unwrap();
                out.push(Check::at_most(format!("algebra/adjoint/{name}/r{r}"), (lhs - rhs).abs() / lhs.abs().max(1.0), 1e-12));
            }
        }
    }
    // full identity (da, b) - (a, delta_T b) = [a, b] up to O(h)
    for r in 0..2usize {
        let fa = move |x: [f64; 3]| if r == 0 { vec![(x[0] + 2.0 * x[1]).cos()] } else { vec![x[1] * x[1] + 1.0, x[0].exp()] };
        let fb = move |x: [f64; 3]| if r == 0 { vec![x[1] * x[1] + 1.0, x[0].exp()] } else { vec![(x[0] * x[1]).sin() + 1.0] };
        let mut hs = Vec::new();
        let mut res = Vec::new();
        for m in [16usize, 32, 64] {
            let cx = square(m);
            let dec = Dec::new(Arc::new(cx.clone()), curved()).unwrap();
            let a = de_rham_map(&cx, r, fa);
            let b = de_rham_map(&cx, r + 1, fb);
            let lhs = dec.inner(&dec.d(&a).unwrap(), &b).unwrap() - dec.inner(&a, &dec.delta_t(&b).unwrap()).unwrap();
            let bp = boundary_pairing(&dec, &BoundarySample::from_fn(&cx, r, fa), &BoundarySample::from_fn(&cx, r + 1, fb)).unwrap();
            hs.push(1.0 / m as f64);
            res.push((lhs - bp).abs());
        }
        out.push(Check::at_least(format!("algebra/ibp_boundary_order/r{r}"), fitted_order(&hs, &res), 0.9));
    }
    out
}

fn lp_norm(f: &ScalarField, p: f64) -> f64 {
    let w = f.lattice.cell_volume();
    f.values.iter().zip(&f.lattice.active).filter(|(_, a)| **a).map(|(v, _)| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p)
}

fn bump(t2: f64) -> f64 {
    if t2 >= 1.0 {
        0.0
    } else {
        (1.0 - t2) * (1.0 - t2)
    }
}

pub fn norms(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let lat = Lattice::cell_centered(2, &[32, 32], 1.0 / 32.0, &[0.0, 0.0]).unwrap();
    let mut rng = XorShift64::new(sub_seed(seed, 1));
    let mut vals = vec![0.0; lat.len()];
    rng.fill_symmetric(&mut vals);
    let f = ScalarField::new(lat.clone(), vals).unwrap();
    for p in [1.5, 2.0, 3.5] {
        let pf = ExponentField::constant(&lat, p).unwrap();
        let lux = luxemburg_norm(&f, &pf).unwrap();
        let exact = lp_norm(&f, p);
        out.push(Check::at_most(format!("norms/luxemburg/constant_p{p}"), (lux - exact).abs() / exact, 1e-10));
    }
    let variable = [
        ("radial", ExponentSpec::Radial { center: [0.5, 0.5, 0.0], inner: 1.5, outer: 4.0 }),
        ("split", ExponentSpec::Split { axis: 0, at: 0.5, left: 2.0, right: 4.0 }),
    ];
    for (name, spec) in variable {
        let pf = spec.sample(&lat).unwrap();
        let base = luxemburg_norm(&f, &pf).unwrap();
        let mut worst = 0.0f64;
        for lambda in [0.3, 7.5, -2.0] {
            let scaled = luxemburg_norm(&f.scaled(lambda), &pf).unwrap();
            worst = worst.max((scaled - lambda.abs() * base).abs() / (lambda.abs() * base));
        }
        out.push(Check::at_most(format!("norms/luxemburg/homogeneity/{name}"), worst, 1e-10));
        let m = modular(&f.scaled(1.0 / base), &pf).unwrap();
        out.push(Check::holds(format!("norms/luxemburg/modular_at_norm/{name}"), (1.0 - 1e-9..=1.0).contains(&m), m, 1.0 - 1e-9));
    }
    for (n, m) in [(2usize, 24usize), (3, 12)] {
        for alpha in [1.0, 2.0] {
            let radii = [0.25, 0.5, 1.0, 2.0];
            let mut ratios = Vec::new();
            for &radius in &radii {
                let h = 2.0 * radius / m as f64;
                let lat = Lattice::cell_centered(n, &vec![m; n], h, &vec![-radius; n]).unwrap();
                let f = ScalarField::from_fn(lat.clone(), |x| bump((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (0.64 * radius * radius)));
                let pf = ExponentSpec::Radial { center: [0.0; 3], inner: 2.0, outer: 3.0 }.sample(&lat).unwrap();
                let i = riesz_potential(&f, alpha).unwrap();
                ratios.push(luxemburg_norm(&i, &pf).unwrap() / luxemburg_norm(&f, &pf).unwrap());
            }
            let slope = fitted_order(&radii, &ratios);
            out.push(Check::at_most(format!("norms/riesz_scaling/n{n}/alpha{alpha}"), (slope - alpha).abs() / alpha, 0.15));
        }
    }
    out
}

pub fn potentials(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for n in [2usize, 3] {
        let (dims, h): (Vec<usize>, f64) = if n == 2 { (vec![20, 10], 0.1) } else { (vec![8, 8, 4], 0.25) };
        let mut origin = vec![-1.0; n];
        origin[n - 1] = 0.0;
        let lat = Lattice::cell_centered(n, &dims, h, &origin).unwrap();
        let mut rng = XorShift64::new(sub_seed(seed, 10 + n as u64));
        let mut vals = vec![0.0; lat.len()];
        rng.fill_symmetric(&mut vals);
        let f = ScalarField::new(lat, vals).unwrap();
        let mut pts = Vec::new();
        for k in 0..21 {
            let t = -1.0 + 0.1 * k as f64;
            pts.push(if n == 2 { [t, 0.0, 0.0] } else { [t, 0.3 * t - 0.1, 0.0] });
        }
        let mut worst = 0.0f64;
        let mut kinds = vec![HalfKind::P];
        kinds.extend((0..n).map(HalfKind::Q));
        for kind in kinds {
            for rho in [1.0, 0.5] {
                let v = halfspace_potential_at(&f, HalfBc::Dirichlet, kind, rho, &pts).unwrap();
                worst = v.iter().fold(worst, |m, x| m.max(x.abs()));
            }
        }
        out.push(Check::at_most(format!("potentials/dirichlet_trace/n{n}"), worst, 1e-12));
    }
    // trace extension: zero boundary value, normal derivative recovers the data
    let mut bmax = 0.0f64;
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for m in [8usize, 16, 32] {
        let h = 1.0 / m as f64;
        let lat = Lattice::new(2, &[2 * m + 1, m + 1], h, &[-1.0, 0.0]).unwrap();
        let data = |x: [f64; 3]| 1.0 + 0.5 * (PI * x[0]).cos();
        let f = SampledForm::from_fn(lat.clone(), 1, |x| vec![0.0, data(x)]);
        let g = trace_extension(&f, None).unwrap();
        let gv = &g.components[0];
        let mut dmax = 0.0f64;
        for i in 0..lat.len() {
            let c = lat.coords(i);
            if c[1] == 0 {
                bmax = bmax.max(gv[i].abs());
                let x = lat.point(i);
                // one-cell collar excluded at the lateral ends
                if x[0].abs() <= 0.5 && c[0] >= 1 && c[0] + 1 < 2 * m + 1 {
                    // two-layer one-sided derivative, gamma vanishing on the trace
                    let (u1, u2) = (gv[lat.index([c[0], 1, 0])], gv[lat.index([c[0], 2, 0])]);
                    dmax = dmax.max(((-3.0 * gv[i] + 4.0 * u1 - u2) / (2.0 * h) - data(x)).abs());
                }
            }
        }
        hs.push(h);
        errs.push(dmax);
    }
    out.push(Check::at_most("potentials/trace_extension/boundary", bmax, 1e-12));
    out.push(Check::at_least("potentials/trace_extension/normal_derivative_order", fitted_order(&hs, &errs), 0.9));
    out
}

pub fn bvp(_seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let u = |x: [f64; 3]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for m in [16usize, 32, 64] {
        let hd = hodge(square(m));
        let eta = de_rham_map(&hd.dec.cx, 0, |x| vec![2.0 * PI * PI * u(x)]);
        match hd.full_dirichlet_potential(&eta) {
            Ok(w) => {
                let exact = de_rham_map(&hd.dec.cx, 0, |x| vec![u(x)]);
                hs.push(1.0 / m as f64);
                errs.push(hd.dec.norm(&w.minus(&exact)));
            }
            Err(e) => out.push(Check::error(format!("bvp/poisson/solve_m{m}"), e, 0.0)),
        }
    }
    if errs.len() == 3 {
        out.push(Check::at_least("bvp/poisson/l2_order", fitted_order(&hs, &errs), 1.9));
    }
    let hd = hodge(square(64));
    match hd.poincare_constant(0, BoundaryCondition::FullDirichlet) {
        Ok(c) => out.push(Check::at_most("bvp/poisson/eigenvalue_h64", ((1.0 / c) / (2.0 * PI * PI) - 1.0).abs(), 0.02)),
        Err(e) => out.push(Check::error("bvp/poisson/eigenvalue_h64", e, 0.02)),
    }
    let bcs = [("T", BoundaryCondition::Tangential), ("N", BoundaryCondition::Normal)];
    for (name, cx) in [("box2", square(8)), ("box3", CubicalComplex::unit_box(3, &[6, 6, 6], 1.0 / 6.0).unwrap())] {
        let n = cx.n;
        let hd = hodge(cx);
        for r in 0..=n {
            for (b, bc) in bcs {
                // T: B_{n-r}, N: B_r of a contractible box
                let want = match bc {
                    BoundaryCondition::Tangential => (r == n) as usize,
                    _ => (r == 0) as usize,
                };
                let label = format!("bvp/betti/{name}/{b}/r{r}");
                match hd.harmonic_fields(r, bc) {
                    Ok(basis) => out.push(Check::holds(label, basis.dim() == want, basis.dim() as f64, want as f64)),
                    Err(e) => out.push(Check::error(label, e, want as f64)),
                }
            }
        }
    }
    let hp = hodge(punctured(18));
    for (b, bc) in bcs {
        match hp.harmonic_fields(1, bc) {
            Ok(basis) => {
                out.push(Check::holds(format!("bvp/betti/punctured2/{b}/r1"), basis.dim() == 1, basis.dim() as f64, 1.0));
                out.push(Check::at_least(format!("bvp/betti/punctured2/{b}/eigengap"), basis.eigengap, 10.0));
            }
            Err(e) => out.push(Check::error(format!("bvp/betti/punctured2/{b}/r1"), e, 1.0)),
        }
    }
    // Poincaré constants of the boxes of side R and R/2 at equal h
    for r in [0usize, 1] {
        let h = 1.0 / 32.0;
        let big = hodge(CubicalComplex::unit_box(2, &[32, 32], h).unwrap());
        let small = hodge(CubicalComplex::unit_box(2, &[16, 16], h).unwrap());
        let label = format!("bvp/poincare_scaling/r{r}");
        match (big.poincare_constant(r, BoundaryCondition::Tangential), small.poincare_constant(r, BoundaryCondition::Tangential)) {
            (Ok(a), Ok(b)) => out.push(Check::at_most(label, ((a / b) / 4.0 - 1.0).abs(), 0.1)),
            (Err(e), _) | (_, Err(e)) => out.push(Check::error(label, e, 0.1)),
        }
    }
    out
}

pub fn decomposition(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let hp = hodge(punctured(9));
    let dec = &hp.dec;
    for (name, flavor) in [("T", Flavor::Tangential), ("N", Flavor::Normal), ("mixed", Flavor::Mixed)] {
        let mut worst = [0.0f64; 4];
        let mut failure = None;
        for k in 0..20 {
            let mut w = random(dec, 1, sub_seed(seed, 200 + k));
            if flavor == Flavor::Tangential {
                dec.zero_tangential(&mut w);
            }
            match hp.hodge_decompose(&w, flavor).and_then(|t| hp.audit_decomposition(&w, &t)) {
                Ok(a) => {
                    for (m, v) in worst.iter_mut().zip([a.reconstruction, a.orthogonality, a.alpha_gauge, a.beta_gauge]) {
                        *m = m.max(v);
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
        if let Some(e) = failure {
            out.push(Check::error(format!("decomposition/hodge/{name}"), e, 1e-8));
            continue;
        }
        for (label, v) in ["reconstruction", "orthogonality", "alpha_gauge", "beta_gauge"].iter().zip(worst) {
            out.push(Check::at_most(format!("decomposition/hodge/{name}/{label}"), v, 1e-8));
        }
    }
    // delta G_D[eta - P_T eta] = G_D[delta eta]
    match hp.harmonic_fields(1, BoundaryCondition::Tangential) {
        Ok(basis) => {
            let mut worst = 0.0f64;
            for k in 0..10 {
                let mut eta = random(dec, 1, sub_seed(seed, 300 + k));
                dec.zero_tangential(&mut eta);
                let rest = eta.minus(&project_harmonic(&eta, &basis, dec).unwrap());
                let lhs = hp.dirichlet_potential(&rest).and_then(|g| dec.delta_t(&g));
                let rhs = dec.delta(&eta).and_then(|d| hp.dirichlet_potential(&d));
                match (lhs, rhs) {
                    (Ok(l), Ok(r)) => worst = worst.max(dec.norm(&l.minus(&r)) / dec.norm(&r)),
                    _ => worst = f64::INFINITY,
                }
            }
            out.push(Check::at_most("decomposition/commutation", worst, 1e-7));
        }
        Err(e) => out.push(Check::error("decomposition/commutation", e, 1e-7)),
    }
    let hs = hodge(square(8));
    let ds = &hs.dec;
    for (name, side) in [("T", Side::Tangential), ("N", Side::Normal)] {
        let mut bubble = random(ds, 1, sub_seed(seed, 400));
        ds.zero_tangential(&mut bubble);
        let f = ds.d(&bubble).unwrap();
        let mut g = random(ds, 0, sub_seed(seed, 401));
        ds.zero_tangential(&mut g);
        let v = ds.delta(&ds.d(&g).unwrap()).unwrap();
        match hs.solve_divcurl(Some(&f), Some(&v), &ds.zeros(1), side) {
            Ok(s) => {
                out.push(Check::at_most(format!("decomposition/divcurl/{name}/curl"), s.curl_residual, 1e-8));
                out.push(Check::at_most(format!("decomposition/divcurl/{name}/div"), s.div_residual, 1e-8));
            }
            Err(e) => out.push(Check::error(format!("decomposition/divcurl/{name}"), e, 1e-8)),
        }
        let mut f1 = random(ds, 1, sub_seed(seed, 402));
        ds.zero_tangential(&mut f1);
        let data = vec![ds.zeros(0), f1, ds.zeros(2)];
        match hs.solve_hodge_dirac(&data, 1.0, side) {
            Ok(s) => out.push(Check::at_most(format!("decomposition/dirac/{name}"), s.residuals.iter().cloned().fold(0.0, f64::max), 1e-8)),
            Err(e) => out.push(Check::error(format!("decomposition/dirac/{name}"), e, 1e-8)),
        }
    }
    // compatibility gates on the punctured box
    let fired = |r: Result<(), Error>| matches!(r, Err(Error::Compatibility { .. }));
    let mut ones2 = dec.zeros(2);
    ones2.values.iter_mut().for_each(|v| *v = 1.0);
    let mut ones0 = dec.zeros(0);
    ones0.values.iter_mut().for_each(|v| *v = 1.0);
    let t_gate = fired(hp.solve_divcurl(Some(&ones2), Some(&dec.zeros(0)), &dec.zeros(1), Side::Tangential).map(|_| ()));
    out.push(Check::holds("decomposition/gate/divcurl_T", t_gate, t_gate as u8 as f64, 1.0));
    let n_gate = fired(hp.solve_divcurl(Some(&dec.zeros(2)), Some(&ones0), &dec.zeros(1), Side::Normal).map(|_| ()));
    out.push(Check::holds("decomposition/gate/divcurl_N", n_gate, n_gate as u8 as f64, 1.0));
    if let Ok(basis) = hp.harmonic_fields(1, BoundaryCondition::Tangential) {
        let g = fired(hp.dirichlet_potential(&basis.fields[0]).map(|_| ()));
        out.push(Check::holds("decomposition/gate/dirichlet_solve", g, g as u8 as f64, 1.0));
    }
    out.extend(px_checks(seed));
    out
}

fn px_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let hs = hodge(square(12));
    let dec = &hs.dec;
    let cx = &dec.cx;
    let lat = cx.cube_lattice();
    let a = ScalarField::from_fn(lat.clone(), |_| 1.0);
    let p2 = ExponentField::constant(&lat, 2.0).unwrap();
    let force = de_rham_map(cx, 1, |x| vec![(PI * x[0]).sin() * x[1], x[0] * x[1]]);
    let u0 = de_rham_map(cx, 0, |x| vec![x[1]]);
    match hs.solve_px_laplacian(&u0, &force, &a, &p2, None, PxSettings::default()) {
        Ok(s) => {
            let rhs = force.minus(&dec.d(&u0).unwrap());
            let p = VariationalProblem { degree: 0, eta: dec.zeros(0), phi: Some(rhs), psi: None, bc: BoundaryCondition::Tangential, tol: 1e-12 };
            let diff = hs.solve_weak(&p).map(|lin| s.u.minus(&u0.plus(&lin.omega)).max_abs()).unwrap_or(f64::INFINITY);
            out.push(Check::at_most("decomposition/pxlap/p2_vs_linear", diff, 1e-7));
        }
        Err(e) => out.push(Check::error("decomposition/pxlap/p2_vs_linear", e, 1e-7)),
    }
    let hs = hodge(square(10));
    let dec = &hs.dec;
    let cx = &dec.cx;
    let lat = cx.cube_lattice();
    let a = ScalarField::from_fn(lat.clone(), |x| 1.0 + 0.5 * x[0]);
    let p = ExponentSpec::Split { axis: 0, at: 0.5, left: 2.0, right: 3.0 }.sample(&lat).unwrap();
    let force = de_rham_map(cx, 1, |x| vec![(PI * x[0]).sin() + x[1], x[0] * x[1]]);
    let u0 = dec.zeros(0);
    let mut start = random(dec, 0, sub_seed(seed, 500));
    dec.zero_tangential(&mut start);
    let runs = (
        hs.solve_px_laplacian(&u0, &force, &a, &p, None, PxSettings::default()),
        hs.solve_px_laplacian(&u0, &force, &a, &p, Some(&start), PxSettings::default()),
    );
    match runs {
        (Ok(s1), Ok(s2)) => {
            out.push(Check::at_most("decomposition/pxlap/el_residual", s1.el_residual.max(s2.el_residual), 1e-8));
            out.push(Check::at_most("decomposition/pxlap/two_start", s1.u.minus(&s2.u).max_abs(), 1e-6));
            let rise = [&s1, &s2]
                .iter()
                .flat_map(|s| s.energy_history.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
                .fold(0.0f64, f64::max);
            out.push(Check::at_most("decomposition/pxlap/energy_monotone", rise, 0.0));
        }
        (Err(e), _) | (_, Err(e)) => out.push(Check::error("decomposition/pxlap/split", e, 1e-8)),
    }
    out
}

pub fn parametrix(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let p = ExponentSpec::Radial { center: [0.0; 3], inner: 2.0, outer: 3.0 };
    for (name, degree, patch, bc) in [("interior_r0", 0, Patch::Interior, PatchBc::Dirichlet), ("half_r1", 1, Patch::Half, PatchBc::Neumann)] {
        let flat = coefficients_from_metric(&MetricField::euclidean(), degree, patch, bc, 0.5, 16, &p).and_then(|lp| {
            let est = lp.contraction_norm_estimate(20, seed)?;
            let cmp = lp.compare_with_direct(&lp.sample_data()?, est.norm)?;
            Ok((est.norm, cmp.rel_diff))
        });
        match flat {
            Ok((norm, diff)) => {
                out.push(Check::at_most(format!("parametrix/euclidean/{name}/norm"), norm, 1e-12));
                out.push(Check::at_most(format!("parametrix/euclidean/{name}/vs_direct"), diff, 1e-6));
            }
            Err(e) => out.push(Check::error(format!("parametrix/euclidean/{name}"), e, 1e-12)),
        }
        let settings = SweepSettings { degree, patch, bc, exponent: p.clone(), seed, ..SweepSettings::default() };
        match radius_sweep(&test_metric(), &[1.0, 0.5, 0.25, 0.125], &settings) {
            Ok(sweep) => {
                let tag = format!("parametrix/test_metric/{name}");
                out.push(Check::holds(format!("{tag}/monotone"), sweep.monotone, sweep.monotone as u8 as f64, 1.0));
                let threshold = sweep.threshold.unwrap_or(0.0);
                out.push(Check::at_least(format!("{tag}/threshold"), threshold, 0.125));
                let below: Vec<_> = sweep.rows.iter().filter(|r| r.radius <= threshold).collect();
                let est = below.iter().map(|r| r.estimate).fold(f64::NEG_INFINITY, f64::max);
                let diff = below.iter().map(|r| r.rel_diff).fold(f64::NEG_INFINITY, f64::max);
                out.push(Check::at_most(format!("{tag}/norm_below_threshold"), est, 0.5));
                out.push(Check::at_most(format!("{tag}/series_vs_direct"), diff, 1e-4));
            }
            Err(e) => out.push(Check::error(format!("parametrix/test_metric/{name}"), e, 0.5)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_order_of_power_law() {
        let x = [0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((fitted_order(&x, &y) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn unknown_suite() {
        assert!(run_suite("geometry", 1).is_none());
    }

    #[test]
    fn algebra_suite_passes() {
        let checks = algebra(1);
        assert!(checks.len() > 20);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
    }
}
