//! Variable-exponent Lebesgue machinery: modulars, Luxemburg and Sobolev
//! norms, log-Hölder diagnostics, maximal and Riesz-type potentials,
//! mollification and McShane extension of exponents.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};


use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::lattice::{magnitude, Lattice, ScalarField};

/// Surface area of the unit sphere in R^n.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => f64::NAN,
    }
}

/// Radius of the ball whose volume equals one lattice cell.
pub fn equal_volume_radius(n: usize, h: f64) -> f64 {
    let vol = h.powi(n as i32);
    (n as f64 * vol / sphere_area(n)).powf(1.0 / n as f64)
}

/// Analytic description of an exponent, evaluated on lattices.
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentSpec {
    Constant(f64),
    /// `left` where `x[axis] < at`, `right` elsewhere.
    Split { axis: usize, at: f64, left: f64, right: f64 },
    /// `inner + (outer - inner) * r / (1 + r)` with `r = |x - center|`.
    Radial { center: [f64; 3], inner: f64, outer: f64 },
    Affine { gradient: [f64; 3], offset: f64 },
}

impl ExponentSpec {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match *self {
            ExponentSpec::Constant(v) => v,
            ExponentSpec::Split { axis, at, left, right } => {
                if x[axis] < at {
                    left
                } else {
                    right
                }
            }
            ExponentSpec::Radial { center, inner, outer } => {
                let r = dist(x, center);
                inner + (outer - inner) * r / (1.0 + r)
            }
            ExponentSpec::Affine { gradient, offset } => {
                offset + gradient[0] * x[0] + gradient[1] * x[1] + gradient[2] * x[2]
            }
        }
    }

    pub fn sample(&self, lattice: &Lattice) -> Result<ExponentField> {
        ExponentField::new(ScalarField::from_fn(lattice.clone(), |x| self.eval(x)))
    }
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

/// Exponent p(x) with 1 < p_minus <= p <= p_plus < inf on active points.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    pub field: ScalarField,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl ExponentField {
    /// Bounds taken as the extreme active values.
    pub fn new(field: ScalarField) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (v, a) in field.values.iter().zip(&field.lattice.active) {
            if *a {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if !lo.is_finite() {
            return Err(Error::DegenerateDomain("no active points".into()));
        }
        Self::with_bounds(field, lo, hi)
    }

    pub fn with_bounds(field: ScalarField, p_minus: f64, p_plus: f64) -> Result<Self> {
        if !(p_minus > 1.0) || !(p_plus < f64::INFINITY) || p_minus > p_plus {
            return Err(invalid(format!("exponent bounds [{p_minus}, {p_plus}] must satisfy 1 < p- <= p+ < inf")));
        }
        for (v, a) in field.values.iter().zip(&field.lattice.active) {
            if *a && !(*v >= p_minus && *v <= p_plus) {
                return Err(invalid(format!("exponent value {v} outside [{p_minus}, {p_plus}]")));
            }
        }
        Ok(Self { field, p_minus, p_plus })
    }

    pub fn constant(lattice: &Lattice, p: f64) -> Result<Self> {
        Self::new(ScalarField::from_fn(lattice.clone(), |_| p))
    }

    pub fn lattice(&self) -> &Lattice {
        &self.field.lattice
    }

    /// p' = p / (p - 1); bounds swap roles.
    pub fn conjugate(&self) -> Self {
        let field = self.field.map(|p| p / (p - 1.0));
        let lo = self.p_plus / (self.p_plus - 1.0);
        let hi = self.p_minus / (self.p_minus - 1.0);
        Self { field, p_minus: lo, p_plus: hi }
    }

    /// Pointwise product `c * p`, used for the sharp exponent `kappa * p`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::with_bounds(self.field.scaled(c), c * self.p_minus, c * self.p_plus)
    }
}

/// max over active pairs of |p(x) - p(y)| * log(e + 1/|x - y|).
pub fn log_holder_constant(p: &ExponentField) -> Result<f64> {
    let lat = p.lattice();
    let pts: Vec<usize> = (0..lat.len()).filter(|&i| lat.active[i]).collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateDomain("log-Hölder constant needs at least two nodes".into()));
    }
    let mut best = 0.0f64;
    for (a, &i) in pts.iter().enumerate() {
        let xi = lat.point(i);
        let pi = p.field.values[i];
        for &j in &pts[a + 1..] {
            let d = dist(xi, lat.point(j));
            let v = (pi - p.field.values[j]).abs() * (E + 1.0 / d).ln();
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}

/// Midpoint quadrature of the integral of |f|^p(x).
pub fn modular(f: &ScalarField, p: &ExponentField) -> Result<f64> {
    f.lattice.check_same(p.lattice())?;
    Ok(modular_scaled(&f.values, &p.field.values, &f.lattice.active, 1.0) * f.lattice.cell_volume())
}

fn modular_scaled(f: &[f64], p: &[f64], active: &[bool], inv_lambda: f64) -> f64 {
    let mut s = 0.0;
    for ((v, q), a) in f.iter().zip(p).zip(active) {
        if *a && *v != 0.0 {
            s += (v.abs() * inv_lambda).powf(*q);
        }
    }
    s
}

/// inf { lambda > 0 : modular(f / lambda) <= 1 } by bisection; the returned
/// value is the upper end of the final bracket, so the modular there is <= 1.
pub fn luxemburg_norm(f: &ScalarField, p: &ExponentField) -> Result<f64> {
    f.lattice.check_same(p.lattice())?;
    let w = f.lattice.cell_volume();
    let act = &f.lattice.active;
    let pv = &p.field.values;
    let m = |lambda: f64| modular_scaled(&f.values, pv, act, 1.0 / lambda) * w;
    if f.values.iter().zip(act).all(|(v, a)| !*a || *v == 0.0) {
        return Ok(0.0);
    }
    let mut hi = 1.0 + f.abs().integral();
    while m(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 1e-14f64.min(0.5 * hi);
    while m(lo) <= 1.0 {
        hi = lo;
        lo *= 1e-3;
        if lo < f64::MIN_POSITIVE {
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if m(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Pointwise |grad^k f| (Euclidean/Frobenius) for k in {0, 1, 2}.
pub fn derivative_magnitude(f: &ScalarField, k: usize) -> Result<ScalarField> {
    match k {
        0 => Ok(f.abs()),
        1 => magnitude(&f.gradient()),
        2 => {
            let mut parts = Vec::new();
            for g in f.gradient() {
                parts.extend(g.gradient());
            }
            magnitude(&parts)
        }
        _ => Err(Error::Unsupported(format!("Sobolev order {k} > 2"))),
    }
}

/// Sum over l <= k of the Luxemburg norm of |grad^l f|.
pub fn sobolev_norm(f: &ScalarField, k: usize, p: &ExponentField) -> Result<f64> {
    if k > 2 {
        return Err(Error::Unsupported(format!("Sobolev order {k} > 2")));
    }
    let mut s = 0.0;
    for l in 0..=k {
        s += luxemburg_norm(&derivative_magnitude(f, l)?, p)?;
    }
    Ok(s)
}

/// Multi-dimensional prefix sums over the lattice (inclusive), padded by one.
struct Prefix {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Prefix {
    fn new(lat: &Lattice, vals: &[f64]) -> Self {
        let d = [lat.dims[0] + 1, lat.dims[1] + 1, lat.dims[2] + 1];
        let idx = |a: usize, b: usize, c: usize| (a * d[1] + b) * d[2] + c;
        let mut data = vec![0.0; d[0] * d[1] * d[2]];
        for a in 0..lat.dims[0] {
            for b in 0..lat.dims[1] {
                for c in 0..lat.dims[2] {
                    data[idx(a + 1, b + 1, c + 1)] = vals[lat.index([a, b, c])];
                }
            }
        }
        for axis in 0..3 {
            for a in 0..d[0] {
                for b in 0..d[1] {
                    for c in 0..d[2] {
                        let cur = [a, b, c];
                        if cur[axis] == 0 {
                            continue;
                        }
                        let mut prev = cur;
                        prev[axis] -= 1;
                        data[idx(a, b, c)] += data[idx(prev[0], prev[1], prev[2])];
                    }
                }
            }
        }
        Self { dims: d, data }
    }

    /// Sum over the closed index box [lo, hi].
    fn sum(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let d = self.dims;
        let mut s = 0.0;
        for mask in 0..8usize {
            let mut c = [0usize; 3];
            let mut sign = 1.0;
            for k in 0..3 {
                if mask >> k & 1 == 1 {
                    c[k] = lo[k];
                    sign = -sign;
                } else {
                    c[k] = hi[k] + 1;
                }
            }
            s += sign * self.data[(c[0] * d[1] + c[1]) * d[2] + c[2]];
        }
        s
    }
}

/// Centered-cube maximal function: the largest average of |f| over
/// node-centered cubes (clipped to the domain) containing each point.
pub fn maximal_function(f: &ScalarField) -> ScalarField {
    let lat = &f.lattice;
    let len = lat.len();
    let absf: Vec<f64> = (0..len).map(|i| if lat.active[i] { f.values[i].abs() } else { 0.0 }).collect();
    let ones: Vec<f64> = (0..len).map(|i| if lat.active[i] { 1.0 } else { 0.0 }).collect();
    let sums = Prefix::new(lat, &absf);
    let counts = Prefix::new(lat, &ones);
    let kmax = lat.dims[..lat.n].iter().copied().max().unwrap_or(1) - 1;
    let mut out = vec![0.0f64; len];
    let mut avg = vec![f64::NEG_INFINITY; len];
    let mut tmp = vec![f64::NEG_INFINITY; len];
    for k in 0..=kmax {
        for i in 0..len {
            avg[i] = f64::NEG_INFINITY;
            if !lat.active[i] {
                continue;
            }
            let c = lat.coords(i);
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for a in 0..3 {
                lo[a] = c[a].saturating_sub(k);
                hi[a] = (c[a] + k).min(lat.dims[a] - 1);
            }
            let cnt = counts.sum(lo, hi);
            avg[i] = sums.sum(lo, hi) / cnt;
        }
        // dilate by the window [-k, k] along each axis
        for axis in 0..lat.n {
            for i in 0..len {
                let c = lat.coords(i);
                let lo = c[axis].saturating_sub(k);
                let hi = (c[axis] + k).min(lat.dims[axis] - 1);
                let mut m = f64::NEG_INFINITY;
                let mut cc = c;
                for v in lo..=hi {
                    cc[axis] = v;
                    let x = avg[lat.index(cc)];
                    if x > m {
                        m = x;
                    }
                }
                tmp[i] = m;
            }
            core::mem::swap(&mut avg, &mut tmp);
        }
        for i in 0..len {
            if lat.active[i] && avg[i] > out[i] {
                out[i] = avg[i];
            }
        }
    }
    ScalarField { lattice: lat.clone(), values: out }
}

/// Riesz potential sum_y f(y) |x-y|^(alpha-n) h^n; the self cell uses the
/// exact integral over the ball of equal volume.
pub fn riesz_potential(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    let lat = &f.lattice;
    let n = lat.n;
    if !(alpha > 0.0) || alpha > n as f64 {
        return Err(invalid(format!("Riesz order {alpha} must lie in (0, n]")));
    }
    let w = lat.cell_volume();
    let rho = equal_volume_radius(n, lat.h);
    let self_term = sphere_area(n) * rho.powf(alpha) / alpha;
    let e = 0.5 * (alpha - n as f64);
    let src: Vec<usize> = (0..lat.len()).filter(|&j| lat.active[j] && f.values[j] != 0.0).collect();
    let mut out = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        if !lat.active[i] {
            continue;
        }
        let x = lat.point(i);
        let mut s = 0.0;
        for &j in &src {
            if j == i {
                s += f.values[j] * self_term;
            } else {
                let r2 = dist2(x, lat.point(j));
                s += f.values[j] * r2.powf(e) * w;
            }
        }
        out[i] = s;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Planar logarithmic potential sum_y f(y) log(|x-y|/R) h^2.
pub fn log_potential(f: &ScalarField, radius: f64) -> Result<ScalarField> {
    let lat = &f.lattice;
    if lat.n != 2 {
        return Err(Error::Unsupported("logarithmic potential is planar only".into()));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let w = lat.cell_volume();
    let rho = equal_volume_radius(2, lat.h);
    // integral of log(|z|/R) over the disc of radius rho
    let self_term = w * ((rho / radius).ln() - 0.5);
    let src: Vec<usize> = (0..lat.len()).filter(|&j| lat.active[j] && f.values[j] != 0.0).collect();
    let mut out = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        if !lat.active[i] {
            continue;
        }
        let x = lat.point(i);
        let mut s = 0.0;
        for &j in &src {
            if j == i {
                s += f.values[j] * self_term;
            } else {
                let r = dist2(x, lat.point(j)).sqrt();
                s += f.values[j] * (r / radius).ln() * w;
            }
        }
        out[i] = s;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

/// Poincaré quotients for f vanishing on the boundary nodes:
/// `(|f|_p / (R |grad f|_p), |f|_{kappa p} / (R^{1/(n p_-')} |grad f|_p))`
/// with kappa = n/(n-1).
pub fn poincare_check(f: &ScalarField, p: &ExponentField, radius: f64) -> Result<(f64, f64)> {
    f.lattice.check_same(p.lattice())?;
    let lat = &f.lattice;
    let n = lat.n;
    if n < 2 {
        return Err(Error::Unsupported("Poincaré check needs n >= 2".into()));
    }
    let scale = f.max_abs();
    let bdry = lat.boundary_points();
    let defect = (0..lat.len()).filter(|&i| bdry[i]).fold(0.0f64, |m, i| m.max(f.values[i].abs()));
    if defect > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition { what: "f must vanish on the boundary nodes".into(), defect });
    }
    let grad = luxemburg_norm(&derivative_magnitude(f, 1)?, p)?;
    if grad == 0.0 {
        return Err(Error::Precondition { what: "gradient norm is zero".into(), defect: 0.0 });
    }
    let kappa = n as f64 / (n as f64 - 1.0);
    let ratio = luxemburg_norm(f, p)? / (radius * grad);
    let pm_conj = p.p_minus / (p.p_minus - 1.0);
    let sharp = luxemburg_norm(f, &p.scaled(kappa)?)? / (radius.powf(1.0 / (n as f64 * pm_conj)) * grad);
    Ok((ratio, sharp))
}

fn bump(t2: f64) -> f64 {
    if t2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t2)).exp()
    }
}

/// Convolution with a normalized smooth bump of radius eps (f extended by
/// zero outside the mask). The kernel is normalized on the lattice itself,
/// so interior mass is preserved exactly up to rounding.
pub fn mollify(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    let lat = &f.lattice;
    if !(eps >= 2.0 * lat.h) {
        return Err(Error::Resolution(format!("mollifier radius {eps} below 2h = {}", 2.0 * lat.h)));
    }
    let reach = (eps / lat.h).ceil() as isize;
    let n = lat.n;
    let mut offsets: Vec<([isize; 3], f64)> = Vec::new();
    let span = |k: usize| if k < n { -reach..=reach } else { 0..=0 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                let z = [a as f64 * lat.h, b as f64 * lat.h, c as f64 * lat.h];
                let t2 = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) / (eps * eps);
                let v = bump(t2);
                if v > 0.0 {
                    offsets.push(([a, b, c], v));
                }
            }
        }
    }
    let total: f64 = offsets.iter().map(|o| o.1).sum();
    let mut out = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        if !lat.active[i] {
            continue;
        }
        let c = lat.coords(i);
        let mut s = 0.0;
        for (o, wgt) in &offsets {
            let mut cc = [0usize; 3];
            let mut inside = true;
            for k in 0..3 {
                let v = c[k] as isize + o[k];
                if v < 0 || v >= lat.dims[k] as isize {
                    inside = false;
                    break;
                }
                cc[k] = v as usize;
            }
            if !inside {
                continue;
            }
            let j = lat.index(cc);
            if lat.active[j] {
                s += wgt * f.values[j];
            }
        }
        out[i] = s / total;
    }
    Ok(ScalarField { lattice: lat.clone(), values: out })
}

/// McShane extension of an exponent known on the active points of `p`'s
/// lattice to every active point of `target` (same geometry).
pub fn mcshane_extend(p: &ExponentField, target: &Lattice) -> Result<ExponentField> {
    let src = p.lattice();
    if src.n != target.n || src.dims != target.dims || src.h != target.h || src.origin != target.origin {
        return Err(Error::GridMismatch("extension target must share the lattice geometry".into()));
    }
    let pts: Vec<usize> = (0..src.len()).filter(|&i| src.active[i]).collect();
    if pts.is_empty() {
        return Err(Error::DegenerateDomain("empty submask".into()));
    }
    let big_l = if pts.len() >= 2 { log_holder_constant(p)? } else { 0.0 };
    let mut vals = vec![0.0; target.len()];
    for i in 0..target.len() {
        if !target.active[i] {
            continue;
        }
        let x = target.point(i);
        let mut best = p.p_minus;
        for &j in &pts {
            let d = dist(x, src.point(j));
            let modulus = if d == 0.0 { 0.0 } else { big_l / (E + 1.0 / d).ln() };
            let v = p.field.values[j] - modulus;
            if v > best {
                best = v;
            }
        }
        vals[i] = best;
    }
    ExponentField::with_bounds(ScalarField { lattice: target.clone(), values: vals }, p.p_minus, p.p_plus)
}
