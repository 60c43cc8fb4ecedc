//! Jacobi-preconditioned conjugate gradients with optional deflation, and a
//! shift-invert subspace iteration for the lowest generalized eigenpairs.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::XorShift64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    /// Bound on both |r|_inf and |M^{-1} r|_inf, relative to max(1, |b|).
    pub tol: f64,
    pub max_iter: usize,
    /// Deflate the iterate and search direction this often.
    pub deflate_every: usize,
}

impl CgSettings {
    pub fn new(tol: f64, len: usize) -> Self {
        Self { tol, max_iter: 10 * len.max(10), deflate_every: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final |b - Ax|_inf.
    pub residual: f64,
    pub history: Vec<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn mdot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * m[i] * b[i];
    }
    s
}

fn inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn scaled_inf(a: &[f64], m: &[f64]) -> f64 {
    a.iter().zip(m).fold(0.0f64, |acc, (v, w)| acc.max((v / w).abs()))
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` given by `apply`.
/// `deflate` must remove kernel components from iterates and `project` must
/// remove the pairing of residuals with the kernel (both no-ops for definite
/// systems). Without `project` rounding drives the residual out of the range
/// of a singular `A` and the iteration blows up.
#[allow(clippy::too_many_arguments)]
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    mass: &[f64],
    settings: CgSettings,
    deflate: impl Fn(&mut [f64]),
    project: impl Fn(&mut [f64]),
) -> Result<CgOutcome> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    if let Some(x0) = x0 {
        x.copy_from_slice(x0);
        apply(&x, &mut ap);
        for i in 0..n {
            r[i] -= ap[i];
        }
    }
    let b_inf = inf(b).max(1.0);
    let bm_inf = scaled_inf(b, mass).max(1.0);
    let done = |r: &[f64]| inf(r) <= settings.tol * b_inf && scaled_inf(r, mass) <= settings.tol * bm_inf;
    let mut history = vec![inf(&r)];
    if done(&r) {
        return Ok(CgOutcome { x, iterations: 0, residual: inf(&r), history });
    }
    project(&mut r);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(v, d)| v / d).collect();
    deflate(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=settings.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if it % settings.deflate_every == 0 {
            deflate(&mut x);
            deflate(&mut p);
        }
        let res = inf(&r);
        history.push(res);
        if done(&r) {
            deflate(&mut x);
            // report the true residual of the returned iterate
            apply(&x, &mut ap);
            let true_res = b.iter().zip(&ap).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            return Ok(CgOutcome { x, iterations: it, residual: true_res, history });
        }
        project(&mut r);
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        deflate(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let last = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NotConverged { iterations: history.len() - 1, last, history })
}

/// Lowest eigenpairs of `A x = lambda M x` restricted to the `free` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    pub block: usize,
    pub shift: f64,
    pub max_outer: usize,
    /// Relative change of the wanted Ritz values that stops the iteration.
    pub tol: f64,
    /// Number of leading Ritz values that must settle.
    pub wanted: usize,
    pub seed: u64,
}

pub fn lowest_eigenpairs(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    mass: &[f64],
    free: &[bool],
    settings: EigenSettings,
) -> Result<EigenPairs> {
    let n = mass.len();
    let k = settings.block.min(free.iter().filter(|f| **f).count()).max(1);
    let sigma = settings.shift;
    let mut rng = XorShift64::new(settings.seed);
    let mut xs: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v = vec![0.0; n];
            rng.fill_symmetric(&mut v);
            for (x, f) in v.iter_mut().zip(free) {
                if !*f {
                    *x = 0.0;
                }
            }
            v
        })
        .collect();
    let shifted_diag: Vec<f64> = diag.iter().zip(mass).zip(free).map(|((d, m), f)| if *f { d + sigma * m } else { 1.0 }).collect();
    let shifted = |x: &[f64], y: &mut [f64]| {
        apply(x, y);
        for i in 0..n {
            if free[i] {
                y[i] += sigma * mass[i] * x[i];
            } else {
                y[i] = x[i];
            }
        }
    };
    let inner = CgSettings { tol: 1e-11, max_iter: 20 * n.max(10), deflate_every: usize::MAX };
    let mut prev: Vec<f64> = vec![f64::INFINITY; k];
    let mut ritz: Vec<f64> = vec![0.0; k];
    let mut tmp = vec![0.0; n];
    for outer in 0..settings.max_outer {
        let mut ys = Vec::with_capacity(k);
        for (j, x) in xs.iter().enumerate() {
            let rhs: Vec<f64> = (0..n).map(|i| if free[i] { mass[i] * x[i] } else { 0.0 }).collect();
            // normalize the right-hand side so the relative tolerance bites
            let scale = inf(&rhs).max(f64::MIN_POSITIVE);
            let rhs: Vec<f64> = rhs.iter().map(|v| v / scale).collect();
            // warm start from the Ritz approximation x / (theta + sigma)
            let guess: Vec<f64> = x.iter().map(|v| v / ((ritz[j].max(0.0) + sigma) * scale)).collect();
            let x0 = (outer > 0).then_some(guess.as_slice());
            let sol = pcg(&shifted, &shifted_diag, &rhs, x0, &shifted_diag, inner, |_| {}, |_| {})?;
            ys.push(sol.x);
        }
        // Rayleigh-Ritz on span(ys)
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DMatrix::<f64>::zeros(k, k);
        let ay: Vec<Vec<f64>> = ys
            .iter()
            .map(|y| {
                apply(y, &mut tmp);
                tmp.clone()
            })
            .collect();
        for i in 0..k {
            for j in 0..=i {
                let aij = 0.5 * (dot(&ys[i], &ay[j]) + dot(&ys[j], &ay[i]));
                let bij = mdot(&ys[i], &ys[j], mass);
                a[(i, j)] = aij;
                a[(j, i)] = aij;
                b[(i, j)] = bij;
                b[(j, i)] = bij;
            }
        }
        let (theta, coeffs) = generalized_eigen(a, b)?;
        xs = (0..k)
            .map(|j| {
                let mut v = vec![0.0; n];
                for i in 0..k {
                    let c = coeffs[(i, j)];
                    for t in 0..n {
                        v[t] += c * ys[i][t];
                    }
                }
                v
            })
            .collect();
        ritz.copy_from_slice(&theta);
        let wanted = settings.wanted.min(k);
        let settled = (0..wanted).all(|j| (theta[j] - prev[j]).abs() <= settings.tol * (theta[j].abs() + sigma));
        prev = theta;
        if settled {
            return Ok(EigenPairs { values: prev, vectors: xs });
        }
    }
    Err(Error::NotConverged { iterations: settings.max_outer, last: prev.first().copied().unwrap_or(f64::NAN), history: prev })
}

/// Solves the small dense problem `A c = theta B c` with B positive definite;
/// eigenvalues ascending, columns B-orthonormal.
pub(crate) fn generalized_eigen(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = a.nrows();
    let chol = b.cholesky().ok_or_else(|| Error::NotConverged { iterations: 0, last: f64::NAN, history: Vec::new() })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::NotConverged { iterations: 0, last: f64::NAN, history: Vec::new() })?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vecs = linv.transpose() * &eig.eigenvectors;
    let mut out = DMatrix::<f64>::zeros(k, k);
    let mut vals = Vec::with_capacity(k);
    for (col, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        out.set_column(col, &vecs.column(i));
    }
    Ok((vals, out))
}

/// Modified Gram-Schmidt in the M inner product; drops vectors that vanish.
pub fn m_orthonormalize(vs: &mut Vec<Vec<f64>>, mass: &[f64]) {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs.drain(..) {
        let mut v = v;
        let before = mdot(&v, &v, mass).sqrt();
        for _ in 0..2 {
            for u in &out {
                let c = mdot(u, &v, mass);
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= c * b;
                }
            }
        }
        let nrm = mdot(&v, &v, mass).sqrt();
        if nrm > 1e-10 * before {
            v.iter_mut().for_each(|x| *x /= nrm);
            out.push(v);
        }
    }
    *vs = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    // 1D Dirichlet Laplacian on m interior nodes, spacing 1/(m+1)
    fn lap(m: usize) -> (impl Fn(&[f64], &mut [f64]), Vec<f64>, Vec<f64>) {
        let h = 1.0 / (m + 1) as f64;
        let apply = move |x: &[f64], y: &mut [f64]| {
            for i in 0..m {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < m { x[i + 1] } else { 0.0 };
                y[i] = (2.0 * x[i] - l - r) / h;
            }
        };
        (apply, vec![2.0 / h; m], vec![h; m])
    }

    #[test]
    fn cg_solves_poisson() {
        let m = 63;
        let (apply, diag, mass) = lap(m);
        let b = mass.clone();
        let out = pcg(&apply, &diag, &b, None, &mass, CgSettings::new(1e-12, m), |_| {}, |_| {}).unwrap();
        let h = 1.0 / 64.0;
        for (i, v) in out.x.iter().enumerate() {
            let x = (i + 1) as f64 * h;
            assert!((v - 0.5 * x * (1.0 - x)).abs() < 1e-10);
        }
        assert!(out.residual < 1e-12);
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let m = 50;
        let (apply, diag, mass) = lap(m);
        let settings = CgSettings { tol: 1e-14, max_iter: 3, deflate_every: 25 };
        match pcg(&apply, &diag, &mass, None, &mass, settings, |_| {}, |_| {}) {
            Err(Error::NotConverged { history, .. }) => assert_eq!(history.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eigenpairs_of_laplacian() {
        let m = 127;
        let (apply, diag, mass) = lap(m);
        let free = vec![true; m];
        let settings = EigenSettings { block: 4, shift: 1.0, max_outer: 100, tol: 1e-12, wanted: 2, seed: 7 };
        let e = lowest_eigenpairs(&apply, &diag, &mass, &free, settings).unwrap();
        assert!((e.values[0] - PI * PI).abs() / (PI * PI) < 1e-3);
        assert!((e.values[1] - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 1e-3);
        assert!((mdot(&e.vectors[0], &e.vectors[0], &mass) - 1.0).abs() < 1e-10);
        assert!(mdot(&e.vectors[0], &e.vectors[1], &mass).abs() < 1e-10);
    }

    #[test]
    fn gram_schmidt() {
        let mass = vec![1.0, 2.0, 3.0];
        let mut vs = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]];
        m_orthonormalize(&mut vs, &mass);
        assert_eq!(vs.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((mdot(&vs[i], &vs[j], &mass) - want).abs() < 1e-12);
            }
        }
    }
}
