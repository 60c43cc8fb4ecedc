//! Volume potentials of the (anisotropic) Laplacian in the whole space and
//! the half space, single-layer potentials on a flat boundary and the
//! boundary-data extension built from two layers.
//!
//! All sums are direct O(N^2) loops in row-major order over targets and
//! sources, so results are reproducible bit for bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exponent::{dist2, equal_volume_radius, sphere_area};
use crate::forms::index::{merge_sign, subsets};
use crate::forms::sampled::SampledForm;
use crate::lattice::{Lattice, ScalarField};

/// Fundamental solution of `sum_{j<n} d_j^2 + rho^2 d_n^2` in 2 or 3 dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub n: usize,
    pub rho: f64,
}

impl KernelSpec {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::Unsupported(format!("potentials are implemented for n = 2, 3 (got {n})")));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(invalid("rho must be positive"));
        }
        Ok(Self { n, rho })
    }

    pub fn laplace(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    fn stretch(&self, z: [f64; 3]) -> [f64; 3] {
        let mut w = z;
        w[self.n - 1] /= self.rho;
        w
    }

    /// K_0(z; rho) = rho^-1 K_0(z', z_n / rho).
    pub fn value(&self, z: [f64; 3]) -> f64 {
        let w = self.stretch(z);
        let r2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        base_value(self.n, r2) / self.rho
    }

    /// Gradient of K_0(.; rho) at z.
    pub fn gradient(&self, z: [f64; 3]) -> [f64; 3] {
        let w = self.stretch(z);
        let r2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        let c = 1.0 / (sphere_area(self.n) * r2.powf(0.5 * self.n as f64) * self.rho);
        let mut g = [0.0; 3];
        for k in 0..self.n {
            g[k] = c * w[k];
        }
        g[self.n - 1] /= self.rho;
        g
    }

    /// Integral of K_0(.; rho) over the ball with the volume of one cell; the
    /// stretched ellipsoid is replaced by the ball of equal volume.
    pub fn self_term(&self, h: f64) -> f64 {
        let a = equal_volume_radius(self.n, h) * self.rho.powf(-1.0 / self.n as f64);
        match self.n {
            2 => 0.5 * a * a * (a.ln() - 0.5),
            _ => -0.5 * a * a,
        }
    }
}

fn base_value(n: usize, r2: f64) -> f64 {
    if n == 2 {
        r2.ln() / (4.0 * PI)
    } else {
        -1.0 / (4.0 * PI * r2.sqrt())
    }
}

fn sources(f: &ScalarField) -> Vec<usize> {
    let lat = &f.lattice;
    (0..lat.len()).filter(|&j| lat.active[j] && f.values[j] != 0.0).collect()
}

fn check_n(lat: &Lattice) -> Result<KernelSpec> {
    KernelSpec::laplace(lat.n)
}

/// P[f](x) = sum_y K_0(x - y) f(y) h^n; the coincident cell uses the
/// integral over the ball of equal volume.
pub fn newtonian_potential(f: &ScalarField) -> Result<ScalarField> {
    let lat = &f.lattice;
    let k = check_n(lat)?;
    let w = lat.cell_volume();
    let self_term = k.self_term(lat.h);
    let src = sources(f);
    let mut out = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        if !lat.active[i] {
            continue;
        }
        let x = lat.point(i);
        let mut s = 0.0;
        for &j in &src {
            if i == j {
                s += f.values[j] * self_term;
            } else {
                s += f.values[j] * base_value(k.n, dist2(x, lat.point(j))) * w;
            }
        }
        out[i] = s;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

/// Q_alpha[f](x) = sum_y (y_alpha - x_alpha) |x - y|^-n f(y) h^n / |S^{n-1}|,
/// solving Laplace Q = -d_alpha f. The coincident cell contributes nothing.
pub fn derivative_potential(f: &ScalarField, alpha: usize) -> Result<ScalarField> {
    let lat = &f.lattice;
    let k = check_n(lat)?;
    if alpha >= k.n {
        return Err(invalid(format!("axis {alpha} out of range")));
    }
    let w = lat.cell_volume() / sphere_area(k.n);
    let half_n = 0.5 * k.n as f64;
    let src = sources(f);
    let mut out = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        if !lat.active[i] {
            continue;
        }
        let x = lat.point(i);
        let mut s = 0.0;
        for &j in &src {
            if i == j {
                continue;
            }
            let y = lat.point(j);
            s += f.values[j] * (y[alpha] - x[alpha]) / dist2(x, y).powf(half_n) * w;
        }
        out[i] = s;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

/// Planar normalizing constant c(f; B_2R) = log(2R)/(2 pi) * integral of f.
pub fn planar_constant(f: &ScalarField, radius: f64) -> Result<f64> {
    if f.lattice.n != 2 {
        return Err(Error::Unsupported("the planar constant is defined for n = 2".into()));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    Ok((2.0 * radius).ln() / (2.0 * PI) * f.integral())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfBc {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfKind {
    /// Volume potential of the density.
    P,
    /// Potential of the derivative of the density along an axis.
    Q(usize),
}

fn reflect(y: [f64; 3], n: usize) -> [f64; 3] {
    let mut r = y;
    r[n - 1] = -r[n - 1];
    r
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Half-space potentials with the image kernels K(x-y) -+ K(x-y*) evaluated
/// at arbitrary points with x_n >= 0. The Dirichlet variants vanish on
/// x_n = 0 exactly because the two image terms are computed identically there.
pub fn halfspace_potential_at(
    f: &ScalarField,
    bc: HalfBc,
    kind: HalfKind,
    rho: f64,
    points: &[[f64; 3]],
) -> Result<Vec<f64>> {
    let lat = &f.lattice;
    let k = KernelSpec::new(lat.n, rho)?;
    let n = k.n;
    if lat.origin[n - 1] < 0.0 {
        return Err(invalid("the density must live in the closed upper half space"));
    }
    if let HalfKind::Q(a) = kind {
        if a >= n {
            return Err(invalid(format!("axis {a} out of range")));
        }
    }
    if let Some(p) = points.iter().find(|p| p[n - 1] < 0.0) {
        return Err(invalid(format!("evaluation point below the boundary (x_n = {})", p[n - 1])));
    }
    let sign = if bc == HalfBc::Dirichlet { -1.0 } else { 1.0 };
    let w = lat.cell_volume();
    let self_term = k.self_term(lat.h);
    let src = sources(f);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        let mut s = 0.0;
        for &j in &src {
            let y = lat.point(j);
            let ys = reflect(y, n);
            let (z, zs) = (sub(x, y), sub(x, ys));
            let term = match kind {
                HalfKind::P => {
                    let direct = if z == [0.0; 3] { self_term } else { k.value(z) * w };
                    let image = if zs == [0.0; 3] { self_term } else { k.value(zs) * w };
                    direct + sign * image
                }
                HalfKind::Q(a) => {
                    // derivative in y of the image kernel; y*_n = -y_n flips the last axis
                    let direct = if z == [0.0; 3] { 0.0 } else { -k.gradient(z)[a] };
                    let image = if zs == [0.0; 3] {
                        0.0
                    } else if a == n - 1 {
                        k.gradient(zs)[a]
                    } else {
                        -k.gradient(zs)[a]
                    };
                    (direct + sign * image) * w
                }
            };
            s += f.values[j] * term;
        }
        out.push(s);
    }
    Ok(out)
}

/// Half-space potential evaluated on the density's own lattice.
pub fn halfspace_potential(f: &ScalarField, bc: HalfBc, kind: HalfKind, rho: f64) -> Result<ScalarField> {
    let lat = &f.lattice;
    let idx: Vec<usize> = (0..lat.len()).filter(|&i| lat.active[i]).collect();
    let pts: Vec<[f64; 3]> = idx.iter().map(|&i| lat.point(i)).collect();
    let vals = halfspace_potential_at(f, bc, kind, rho, &pts)?;
    let mut out = vec![0.0; lat.len()];
    for (i, v) in idx.into_iter().zip(vals) {
        out[i] = v;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

/// Integral of log(t^2 + z^2) for t in [a, b], z >= 0.
fn log_segment(a: f64, b: f64, z: f64) -> f64 {
    let prim = |t: f64| {
        let q = t * t + z * z;
        let l = if t == 0.0 { 0.0 } else { t * q.ln() };
        let at = if z == 0.0 { 0.0 } else { 2.0 * z * (t / z).atan() };
        l - 2.0 * t + at
    };
    prim(b) - prim(a)
}

/// Integral of 1/sqrt(u^2 + v^2 + z^2) over [u0,u1] x [v0,v1], z >= 0.
fn inverse_rect(u0: f64, u1: f64, v0: f64, v1: f64, z: f64) -> f64 {
    let prim = |u: f64, v: f64| {
        let r = (u * u + v * v + z * z).sqrt();
        let su = (u * u + z * z).sqrt();
        let sv = (v * v + z * z).sqrt();
        let a = if su == 0.0 { 0.0 } else { u * (v / su).asinh() };
        let b = if sv == 0.0 { 0.0 } else { v * (u / sv).asinh() };
        let c = if z == 0.0 { 0.0 } else { z * (u * v / (z * r)).atan() };
        a + b - c
    };
    prim(u1, v1) - prim(u0, v1) - prim(u1, v0) + prim(u0, v0)
}

/// Single layer U_rho[f](x) = integral of g_N(x, (y', 0)) f(y') dy' for a
/// density that is constant on each boundary panel of width h centered at
/// the nodes of `f.lattice` (an (n-1)-dimensional lattice). Each panel is
/// integrated in closed form, so rho^2 dU/dx_n recovers f on the trace.
pub fn single_layer_at(f: &ScalarField, rho: f64, points: &[[f64; 3]]) -> Result<Vec<f64>> {
    let lat = &f.lattice;
    let n = lat.n + 1;
    KernelSpec::new(n, rho)?;
    if let Some(p) = points.iter().find(|p| p[n - 1] < 0.0) {
        return Err(invalid(format!("evaluation point below the boundary (x_n = {})", p[n - 1])));
    }
    let h = lat.h;
    let src = sources(f);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        let z = x[n - 1] / rho;
        let mut s = 0.0;
        for &j in &src {
            let y = lat.point(j);
            let panel = if n == 2 {
                let t = x[0] - y[0];
                // 2 K_0 = log(r^2) / (2 pi)
                log_segment(t - 0.5 * h, t + 0.5 * h, z) / (2.0 * PI)
            } else {
                let (u, v) = (x[0] - y[0], x[1] - y[1]);
                // 2 K_0 = -1 / (2 pi r)
                -inverse_rect(u - 0.5 * h, u + 0.5 * h, v - 0.5 * h, v + 0.5 * h, z) / (2.0 * PI)
            };
            s += f.values[j] * panel;
        }
        out.push(s / rho);
    }
    Ok(out)
}

/// Single layer evaluated on every active node of `target`, an n-dimensional
/// lattice in the closed upper half space.
pub fn single_layer(f: &ScalarField, rho: f64, target: &Lattice) -> Result<ScalarField> {
    if target.n != f.lattice.n + 1 {
        return Err(Error::GridMismatch("target lattice must have one more dimension than the boundary data".into()));
    }
    let idx: Vec<usize> = (0..target.len()).filter(|&i| target.active[i]).collect();
    let pts: Vec<[f64; 3]> = idx.iter().map(|&i| target.point(i)).collect();
    let vals = single_layer_at(f, rho, &pts)?;
    let mut out = vec![0.0; target.len()];
    for (i, v) in idx.into_iter().zip(vals) {
        out[i] = v;
    }
    Ok(ScalarField { lattice: target.clone(), values: out })
}

/// Boundary slice x_n = 0 of a half-box lattice as an (n-1)-dimensional lattice,
/// together with the index of each trace node in the full lattice.
pub fn boundary_slice(lat: &Lattice) -> Result<(Lattice, Vec<usize>)> {
    let n = lat.n;
    if n < 2 || lat.origin[n - 1] != 0.0 {
        return Err(Error::Unsupported("the patch must be flat with its first layer on x_n = 0".into()));
    }
    let dims: Vec<usize> = lat.dims[..n - 1].to_vec();
    let origin: Vec<f64> = lat.origin[..n - 1].to_vec();
    let slice = Lattice::new(n - 1, &dims, lat.h, &origin)?;
    let mut map = Vec::with_capacity(slice.len());
    for i in 0..slice.len() {
        let c = slice.coords(i);
        let mut full = [0usize; 3];
        full[..n - 1].copy_from_slice(&c[..n - 1]);
        map.push(lat.index(full));
    }
    Ok((slice, map))
}

/// Extension gamma of degree r vanishing on x_n = 0 with prescribed normal
/// derivatives: d gamma_I / dx_n = f_{nI} for n not in I and
/// d gamma_{nI} / dx_n = -v_I, each component being
/// (eta/2)(U_{1/2} - 2 U_1) of the trace data. The cutoff eta is taken as 1.
pub fn trace_extension(f: &SampledForm, v: Option<&SampledForm>) -> Result<SampledForm> {
    let lat = &f.lattice;
    let n = lat.n;
    if f.degree == 0 {
        return Err(invalid("f must have degree r + 1 >= 1"));
    }
    let r = f.degree - 1;
    match v {
        Some(v) => {
            if !v.lattice.same_grid(lat) {
                return Err(Error::GridMismatch("f and v must share the patch lattice".into()));
            }
            if v.degree + 1 != r {
                return Err(invalid("v must have degree r - 1"));
            }
        }
        None if r > 0 => return Err(invalid("v is required when r > 0")),
        None => {}
    }
    let (slice, map) = boundary_slice(lat)?;
    let normal = 1u8 << (n - 1);
    let pts: Vec<[f64; 3]> = (0..lat.len()).map(|i| lat.point(i)).collect();
    let mut out = SampledForm::zeros(lat.clone(), r);
    for (k, &mask) in subsets(n, r).iter().enumerate() {
        // trace data for this component
        let data: Vec<f64> = if mask & normal == 0 {
            let src = f.component(mask | normal);
            let s = merge_sign(normal, mask);
            map.iter().map(|&i| s * src[i]).collect()
        } else {
            let rest = mask & !normal;
            let src = v.expect("checked above").component(rest);
            let s = merge_sign(normal, rest);
            map.iter().map(|&i| -s * src[i]).collect()
        };
        let data = ScalarField::new(slice.clone(), data)?;
        if data.max_abs() == 0.0 {
            continue;
        }
        let half = single_layer_at(&data, 0.5, &pts)?;
        let one = single_layer_at(&data, 1.0, &pts)?;
        // the stored component is gamma_{mask}; for normal components gamma_{nI} carries the merge sign
        let s = if mask & normal == 0 { 1.0 } else { merge_sign(normal, mask & !normal) };
        for i in 0..lat.len() {
            if lat.active[i] {
                out.components[k][i] = s * 0.5 * (half[i] - 2.0 * one[i]);
            }
        }
    }
    Ok(out)
}

/// 5- or 7-point Laplacian at interior nodes (None elsewhere).
pub fn discrete_laplacian(u: &ScalarField) -> Vec<Option<f64>> {
    let lat = &u.lattice;
    let h2 = lat.h * lat.h;
    (0..lat.len())
        .map(|i| {
            if !lat.active[i] {
                return None;
            }
            let mut s = 0.0;
            for axis in 0..lat.n {
                let a = lat.neighbor(i, axis, -1)?;
                let b = lat.neighbor(i, axis, 1)?;
                s += u.values[a] + u.values[b] - 2.0 * u.values[i];
            }
            Some(s / h2)
        })
        .collect()
}

/// Relative L2 residual of the discrete Laplacian of P[f] against f over
/// nodes at least `margin` lattice steps inside the grid.
pub fn interior_residual(p: &ScalarField, f: &ScalarField, margin: usize) -> Result<f64> {
    p.lattice.check_same(&f.lattice)?;
    let lat = &p.lattice;
    let lap = discrete_laplacian(p);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..lat.len() {
        let c = lat.coords(i);
        if (0..lat.n).any(|k| c[k] < margin || c[k] + margin >= lat.dims[k]) {
            continue;
        }
        if let Some(l) = lap[i] {
            num += (l - f.values[i]).powi(2);
            den += f.values[i].powi(2);
        }
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::log_potential;

    fn square(m: usize, lo: f64, len: f64) -> Lattice {
        let h = len / m as f64;
        Lattice::cell_centered(2, &[m, m], h, &[lo, lo]).unwrap()
    }

    fn half_box(m: usize, len: f64) -> Lattice {
        let h = len / m as f64;
        Lattice::cell_centered(2, &[2 * m, m], h, &[-len, 0.0]).unwrap()
    }

    fn bump(x: [f64; 3], c: [f64; 2], r: f64) -> f64 {
        let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
        if d < 1.0 {
            (1.0 - d).powi(3)
        } else {
            0.0
        }
    }

    #[test]
    fn zero_density_gives_zero() {
        let lat = square(8, -1.0, 2.0);
        let f = ScalarField::zeros(lat);
        assert_eq!(newtonian_potential(&f).unwrap().max_abs(), 0.0);
        assert_eq!(derivative_potential(&f, 1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn ball_potential_at_center() {
        // P[1_B](0) = -R^2/2 in three dimensions
        let m = 25;
        let h = 2.0 / m as f64;
        let lat = Lattice::cell_centered(3, &[m, m, m], h, &[-1.0, -1.0, -1.0]).unwrap();
        let radius = 0.8;
        let f = ScalarField::from_fn(lat.clone(), |x| if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() < radius { 1.0 } else { 0.0 });
        let p = newtonian_potential(&f).unwrap();
        let center = p.values[lat.index([12, 12, 12])];
        assert!((center + radius * radius / 2.0).abs() < 0.01, "{center}");
    }

    #[test]
    fn laplacian_of_newtonian_potential_converges() {
        let mut errs = vec![];
        for m in [16, 32] {
            let lat = square(m, -1.0, 2.0);
            let f = ScalarField::from_fn(lat, |x| bump(x, [0.1, -0.2], 0.6));
            let p = newtonian_potential(&f).unwrap();
            errs.push(interior_residual(&p, &f, 2).unwrap());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 0.9, "{errs:?}");
    }

    #[test]
    fn derivative_potential_matches_difference_of_p() {
        let mut errs = vec![];
        for m in [16, 32] {
            let lat = square(m, -1.0, 2.0);
            let f = ScalarField::from_fn(lat.clone(), |x| bump(x, [0.0, 0.0], 0.5));
            let p = newtonian_potential(&f).unwrap();
            let q = derivative_potential(&f, 0).unwrap();
            let dp = p.partial(0);
            let mut e = 0.0f64;
            for i in 0..lat.len() {
                let c = lat.coords(i);
                if c[0] > 0 && c[0] + 1 < m {
                    e = e.max((q.values[i] + dp.values[i]).abs());
                }
            }
            errs.push(e / q.max_abs());
        }
        assert!(errs[1] < errs[0] && errs[1] < 0.05, "{errs:?}");
    }

    #[test]
    fn derivative_potential_parity() {
        let lat = square(12, -1.0, 2.0);
        let f = ScalarField::from_fn(lat.clone(), |x| bump(x, [0.0, 0.1], 0.7));
        let q = derivative_potential(&f, 0).unwrap();
        for i in 0..lat.len() {
            let c = lat.coords(i);
            let j = lat.index([11 - c[0], c[1], 0]);
            assert!((q.values[i] + q.values[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn planar_constant_identity() {
        let lat = square(16, -0.5, 1.0);
        let f = ScalarField::from_fn(lat, |x| bump(x, [0.1, 0.0], 0.4) - 0.2);
        let radius = 0.75;
        let c = planar_constant(&f, radius).unwrap();
        let p = newtonian_potential(&f).unwrap();
        let l = log_potential(&f, 2.0 * radius).unwrap();
        for i in 0..p.values.len() {
            let want = l.values[i] / (2.0 * PI);
            assert!((p.values[i] - c - want).abs() < 1e-14, "{} {}", p.values[i] - c, want);
        }
        let unit = ScalarField::from_fn(square(8, -0.5, 1.0), |_| 1.0);
        assert!(planar_constant(&unit, 0.5).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dirichlet_trace_vanishes() {
        let lat = half_box(10, 1.0);
        let mut rng = crate::rng::XorShift64::new(11);
        let mut vals = vec![0.0; lat.len()];
        rng.fill_symmetric(&mut vals);
        let f = ScalarField::new(lat, vals).unwrap();
        let pts: Vec<[f64; 3]> = (0..41).map(|k| [-1.0 + k as f64 * 0.05, 0.0, 0.0]).collect();
        for kind in [HalfKind::P, HalfKind::Q(0), HalfKind::Q(1)] {
            for rho in [1.0, 0.5] {
                let t = halfspace_potential_at(&f, HalfBc::Dirichlet, kind, rho, &pts).unwrap();
                assert!(t.iter().all(|v| v.abs() <= 1e-12), "{kind:?} {t:?}");
            }
        }
        assert!(halfspace_potential_at(&f, HalfBc::Dirichlet, HalfKind::P, 1.0, &[[0.0, -0.1, 0.0]]).is_err());
    }

    #[test]
    fn neumann_normal_derivative_decays() {
        let mut errs = vec![];
        for m in [16, 32, 64] {
            let lat = half_box(m, 1.0);
            let h = lat.h;
            let f = ScalarField::from_fn(lat, |x| bump(x, [0.0, 0.3], 0.4));
            let pts0: Vec<[f64; 3]> = (0..9).map(|k| [-0.4 + 0.1 * k as f64, 0.0, 0.0]).collect();
            let pts1: Vec<[f64; 3]> = pts0.iter().map(|p| [p[0], h, 0.0]).collect();
            let a = halfspace_potential_at(&f, HalfBc::Neumann, HalfKind::P, 1.0, &pts0).unwrap();
            let b = halfspace_potential_at(&f, HalfBc::Neumann, HalfKind::P, 1.0, &pts1).unwrap();
            errs.push(a.iter().zip(&b).fold(0.0f64, |m, (a, b)| m.max(((b - a) / h).abs())));
        }
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!(slope >= 0.8 && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn anisotropic_kernel_scaling() {
        let lat = half_box(8, 1.0);
        let f = ScalarField::from_fn(lat.clone(), |x| bump(x, [0.1, 0.4], 0.5));
        let k = KernelSpec::new(2, 0.5).unwrap();
        let pts = [[0.05, 0.33, 0.0], [-0.7, 0.9, 0.0], [0.2, 0.01, 0.0], [0.6, 0.5, 0.0], [-0.1, 0.77, 0.0]];
        let got = halfspace_potential_at(&f, HalfBc::Dirichlet, HalfKind::P, 0.5, &pts).unwrap();
        for (x, g) in pts.iter().zip(got) {
            let mut s = 0.0;
            for j in 0..lat.len() {
                let y = lat.point(j);
                let base = |z: [f64; 3]| 2.0 * base_value(2, z[0] * z[0] + (z[1] / 0.5).powi(2));
                s += f.values[j] * (base(sub(*x, y)) - base(sub(*x, reflect(y, 2)))) * lat.cell_volume();
            }
            assert!((g - s).abs() < 1e-12 * s.abs().max(1.0), "{g} {s}");
            let _ = k;
        }
    }

    #[test]
    fn single_layer_scaling_and_trace() {
        let slice = Lattice::cell_centered(1, &[32], 1.0 / 16.0, &[-1.0]).unwrap();
        let f = ScalarField::from_fn(slice, |x| (1.0 - x[0] * x[0]).max(0.0));
        let pts = [[0.1, 0.2, 0.0], [0.5, 0.05, 0.0], [-0.3, 0.7, 0.0]];
        let half = single_layer_at(&f, 0.5, &pts).unwrap();
        let scaled: Vec<[f64; 3]> = pts.iter().map(|p| [p[0], p[1] / 0.5, 0.0]).collect();
        let one = single_layer_at(&f, 1.0, &scaled).unwrap();
        for (a, b) in half.iter().zip(&one) {
            assert!((a - b / 0.5).abs() < 1e-14);
        }
        let zero = ScalarField::zeros(f.lattice.clone());
        assert_eq!(single_layer_at(&zero, 1.0, &pts).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn trace_extension_boundary_and_derivative() {
        let mut errs = vec![];
        for m in [8, 16, 32] {
            let h = 1.0 / m as f64;
            let lat = Lattice::new(2, &[2 * m + 1, m + 1], h, &[-1.0, 0.0]).unwrap();
            // r = 0: d gamma/dx_2 = f_2
            let f = SampledForm::from_fn(lat.clone(), 1, |_| vec![0.0, 1.0]);
            let g = trace_extension(&f, None).unwrap();
            let gv = &g.components[0];
            let mut bmax = 0.0f64;
            let mut dmax = 0.0f64;
            for i in 0..lat.len() {
                let c = lat.coords(i);
                if c[1] == 0 {
                    bmax = bmax.max(gv[i].abs());
                    let x = lat.point(i)[0];
                    if x.abs() <= 0.5 {
                        let up = lat.index([c[0], 1, 0]);
                        dmax = dmax.max(((gv[up] - gv[i]) / h - 1.0).abs());
                    }
                }
            }
            assert!(bmax <= 1e-12, "{bmax}");
            errs.push(dmax);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 0.1, "{errs:?}");
    }

    #[test]
    fn trace_extension_one_forms_in_3d() {
        let m = 6;
        let h = 1.0 / m as f64;
        let lat = Lattice::new(3, &[m + 1, m + 1, m + 1], h, &[-0.5, -0.5, 0.0]).unwrap();
        let f = SampledForm::from_fn(lat.clone(), 2, |x| vec![x[0], 1.0 - x[1], 0.5]);
        let v = SampledForm::from_fn(lat.clone(), 0, |x| vec![x[0] + x[1]]);
        let g = trace_extension(&f, Some(&v)).unwrap();
        assert_eq!(g.degree, 1);
        for i in 0..lat.len() {
            if lat.coords(i)[2] == 0 {
                assert!(g.components.iter().all(|c| c[i].abs() <= 1e-12));
            }
        }
        let shifted = Lattice::new(3, &[3, 3, 3], h, &[0.0, 0.0, 0.1]).unwrap();
        let bad = SampledForm::zeros(shifted, 1);
        assert!(matches!(trace_extension(&bad, None), Err(Error::Unsupported(_))));
        let zf = SampledForm::zeros(lat.clone(), 2);
        let zv = SampledForm::zeros(lat, 0);
        assert_eq!(trace_extension(&zf, Some(&zv)).unwrap().max_abs(), 0.0);
    }
}
