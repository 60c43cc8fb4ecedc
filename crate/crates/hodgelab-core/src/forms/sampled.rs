//! Forms sampled pointwise on lattices (component per ordered multi-index),
//! boundary samples, and the maps between cochains and samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use num_traits::Float;

use super::complex::CubicalComplex;
use super::dec::{Cochain, Dec};
use super::index::{axes, binomial, merge_sign, rank, sort_sign, subsets};
use super::metric::MetricField;
use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, ScalarField};

/// Difference step for metric derivatives; the metric is an analytic closure.
pub const CHRISTOFFEL_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledForm {
    pub lattice: Lattice,
    pub degree: usize,
    /// `components[k]` belongs to `subsets(n, degree)[k]`.
    pub components: Vec<Vec<f64>>,
}

impl SampledForm {
    pub fn new(lattice: Lattice, degree: usize, components: Vec<Vec<f64>>) -> Result<Self> {
        let n = lattice.n;
        if degree > n || components.len() != binomial(n, degree) {
            return Err(invalid(format!("a {degree}-form in {n} dimensions needs {} components", binomial(n, degree))));
        }
        if components.iter().any(|c| c.len() != lattice.len()) {
            return Err(Error::GridMismatch("component length differs from lattice size".into()));
        }
        Ok(Self { lattice, degree, components })
    }

    pub fn zeros(lattice: Lattice, degree: usize) -> Self {
        let len = lattice.len();
        let k = binomial(lattice.n, degree);
        Self { lattice, degree, components: vec![vec![0.0; len]; k] }
    }

    /// `f(x)` returns the components in multi-index order.
    pub fn from_fn(lattice: Lattice, degree: usize, f: impl Fn([f64; 3]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(lattice, degree);
        for i in 0..out.lattice.len() {
            if !out.lattice.active[i] {
                continue;
            }
            let v = f(out.lattice.point(i));
            for (c, x) in out.components.iter_mut().zip(v) {
                c[i] = x;
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.lattice.n
    }

    pub fn component(&self, mask: u8) -> &[f64] {
        &self.components[rank(self.n(), mask)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.components.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= s));
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn minus(&self, other: &SampledForm) -> Result<Self> {
        self.lattice.check_same(&other.lattice)?;
        if self.degree != other.degree {
            return Err(invalid("degree mismatch"));
        }
        let mut out = self.clone();
        for (a, b) in out.components.iter_mut().zip(&other.components) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        Ok(out)
    }

    /// Pointwise metric inner product as a scalar field.
    pub fn pointwise_inner(&self, other: &SampledForm, g: &MetricField) -> Result<ScalarField> {
        self.lattice.check_same(&other.lattice)?;
        if self.degree != other.degree {
            return Err(invalid("degree mismatch"));
        }
        let masks = subsets(self.n(), self.degree);
        let mut out = ScalarField::zeros(self.lattice.clone());
        for i in 0..self.lattice.len() {
            if !self.lattice.active[i] {
                continue;
            }
            let x = self.lattice.point(i);
            let mut s = 0.0;
            for (k, m) in masks.iter().enumerate() {
                s += g.inverse_weight(x, *m) * self.components[k][i] * other.components[k][i];
            }
            out.values[i] = s;
        }
        Ok(out)
    }

    /// Pointwise |f|_g.
    pub fn norm_field(&self, g: &MetricField) -> ScalarField {
        self.pointwise_inner(self, g).expect("same form").map(|v| v.sqrt())
    }
}

fn check_pair(a: &SampledForm, b: &SampledForm) -> Result<()> {
    a.lattice.check_same(&b.lattice)
}

pub fn wedge(a: &SampledForm, b: &SampledForm) -> Result<SampledForm> {
    check_pair(a, b)?;
    let n = a.n();
    let deg = a.degree + b.degree;
    if deg > n {
        return Err(invalid(format!("wedge of degrees {} and {} exceeds dimension {n}", a.degree, b.degree)));
    }
    let mut out = SampledForm::zeros(a.lattice.clone(), deg);
    let ma = subsets(n, a.degree);
    let mb = subsets(n, b.degree);
    for (ia, &i) in ma.iter().enumerate() {
        for (jb, &j) in mb.iter().enumerate() {
            let s = merge_sign(i, j);
            if s == 0.0 {
                continue;
            }
            let k = rank(n, i | j);
            for p in 0..a.lattice.len() {
                out.components[k][p] += s * a.components[ia][p] * b.components[jb][p];
            }
        }
    }
    Ok(out)
}

/// (f _| v)_K = sum_J f^J v_{JK} with indices raised by `g`.
pub fn interior_product(f: &SampledForm, v: &SampledForm, g: &MetricField) -> Result<SampledForm> {
    check_pair(f, v)?;
    if f.degree > v.degree {
        return Err(invalid(format!("interior product needs degree {} <= {}", f.degree, v.degree)));
    }
    let n = f.n();
    let deg = v.degree - f.degree;
    let mut out = SampledForm::zeros(f.lattice.clone(), deg);
    let mf = subsets(n, f.degree);
    let mk = subsets(n, deg);
    for p in 0..f.lattice.len() {
        if !f.lattice.active[p] {
            continue;
        }
        let x = f.lattice.point(p);
        for (ik, &k) in mk.iter().enumerate() {
            let mut s = 0.0;
            for (jf, &j) in mf.iter().enumerate() {
                let sg = merge_sign(j, k);
                if sg == 0.0 {
                    continue;
                }
                s += sg * g.inverse_weight(x, j) * f.components[jf][p] * v.component(j | k)[p];
            }
            out.components[ik][p] = s;
        }
    }
    Ok(out)
}

/// (*w)_K = sum_J w^J sqrt(g) sign(J K).
pub fn hodge_star(f: &SampledForm, g: &MetricField) -> SampledForm {
    let n = f.n();
    let full = ((1u16 << n) - 1) as u8;
    let mut out = SampledForm::zeros(f.lattice.clone(), n - f.degree);
    for (ik, &k) in subsets(n, n - f.degree).iter().enumerate() {
        let j = full & !k;
        let sg = merge_sign(j, k);
        let src = f.component(j);
        for p in 0..f.lattice.len() {
            if !f.lattice.active[p] {
                continue;
            }
            let x = f.lattice.point(p);
            out.components[ik][p] = sg * g.inverse_weight(x, j) * g.sqrt_det(x, n) * src[p];
        }
    }
    out
}

/// Coordinate codifferential with Christoffel terms:
/// (dw)_I = -g^{kl} (d_l w_{kI} - G^s_{kl} w_{sI} - sum_m G^s_{i_m l} w_{k..s..}).
/// Derivatives are centered in the interior and one-sided at the mask edge.
pub fn pointwise_codifferential(f: &SampledForm, g: &MetricField) -> Result<SampledForm> {
    if f.degree == 0 {
        return Err(invalid("codifferential of a 0-form"));
    }
    let lat = &f.lattice;
    let n = f.n();
    let masks = subsets(n, f.degree);
    // partials[c][l]
    let partials: Vec<Vec<Vec<f64>>> = f
        .components
        .iter()
        .map(|c| {
            let sf = ScalarField { lattice: lat.clone(), values: c.clone() };
            (0..n).map(|l| sf.partial(l).values).collect()
        })
        .collect();
    let comp_index = |idx: &[usize]| -> Option<(f64, usize)> {
        let (s, m) = sort_sign(idx);
        if s == 0.0 {
            None
        } else {
            Some((s, masks.iter().position(|&q| q == m).expect("mask of degree r")))
        }
    };
    let mut out = SampledForm::zeros(lat.clone(), f.degree - 1);
    let outs = subsets(n, f.degree - 1);
    for p in 0..lat.len() {
        if !lat.active[p] {
            continue;
        }
        let x = lat.point(p);
        let gd = g.diag(x);
        let gam = g.christoffel(x, n, CHRISTOFFEL_STEP);
        for (io, &om) in outs.iter().enumerate() {
            let ii: Vec<usize> = axes(om).collect();
            let mut total = 0.0;
            for k in 0..n {
                let l = k;
                let mut idx = Vec::with_capacity(f.degree);
                idx.push(k);
                idx.extend_from_slice(&ii);
                let mut t = 0.0;
                if let Some((s, c)) = comp_index(&idx) {
                    t += s * partials[c][l][p];
                }
                for sx in 0..n {
                    idx[0] = sx;
                    if let Some((s, c)) = comp_index(&idx) {
                        t -= gam[sx][k][l] * s * f.components[c][p];
                    }
                }
                idx[0] = k;
                for m in 0..ii.len() {
                    for sx in 0..n {
                        let mut j = idx.clone();
                        j[m + 1] = sx;
                        if let Some((s, c)) = comp_index(&j) {
                            t -= gam[sx][ii[m]][l] * s * f.components[c][p];
                        }
                    }
                }
                total -= t / gd[k];
            }
            out.components[io][p] = total;
        }
    }
    Ok(out)
}

/// Integrates an analytic form over each r-cell by the midpoint rule.
pub fn de_rham_map(cx: &CubicalComplex, degree: usize, f: impl Fn([f64; 3]) -> Vec<f64>) -> Cochain {
    let n = cx.n;
    let masks = subsets(n, degree);
    let hr = cx.h.powi(degree as i32);
    let values = cx
        .cells(degree)
        .iter()
        .map(|c| {
            let v = f(cx.barycenter(*c));
            v[masks.iter().position(|&m| m == c.axes).expect("cell axes")] * hr
        })
        .collect();
    Cochain { degree, values }
}

fn same_geometry(a: &Lattice, b: &Lattice) -> bool {
    a.n == b.n && a.dims == b.dims && a.h == b.h && a.origin == b.origin
}

/// de Rham map of a form sampled at cube centers: average over incident
/// active cubes, times h^r.
pub fn de_rham_sampled(cx: &CubicalComplex, f: &SampledForm) -> Result<Cochain> {
    let lat = cx.cube_lattice();
    if !same_geometry(&lat, &f.lattice) {
        return Err(Error::GridMismatch("form must be sampled at the cube centers".into()));
    }
    let n = cx.n;
    let hr = cx.h.powi(f.degree as i32);
    let mut out = Cochain::zeros(f.degree, cx.count(f.degree));
    for (i, cell) in cx.cells(f.degree).iter().enumerate() {
        let comp = f.component(cell.axes);
        let free: Vec<usize> = (0..n).filter(|k| cell.axes >> k & 1 == 0).collect();
        let mut s = 0.0;
        let mut cnt = 0.0;
        for choice in 0..(1usize << free.len()) {
            let mut c = [cell.corner[0] as isize, cell.corner[1] as isize, cell.corner[2] as isize];
            for (j, &k) in free.iter().enumerate() {
                if choice >> j & 1 == 1 {
                    c[k] -= 1;
                }
            }
            if let Some(q) = cube_at(cx, c) {
                s += comp[q];
                cnt += 1.0;
            }
        }
        out.values[i] = s / cnt * hr;
    }
    Ok(out)
}

fn cube_at(cx: &CubicalComplex, c: [isize; 3]) -> Option<usize> {
    for k in 0..3 {
        if c[k] < 0 || c[k] as usize >= cx.cells_per_axis[k] {
            return None;
        }
    }
    let q = cx.cube_index([c[0] as usize, c[1] as usize, c[2] as usize]);
    cx.cube_mask[q].then_some(q)
}

/// Samples a cochain at cube centers: each component is the average of the
/// cube's cells with matching axes, divided by h^r.
pub fn whitney_sample(cx: &CubicalComplex, c: &Cochain) -> Result<SampledForm> {
    if c.degree > cx.n || c.values.len() != cx.count(c.degree) {
        return Err(Error::GridMismatch("cochain does not fit the complex".into()));
    }
    let n = cx.n;
    let lat = cx.cube_lattice();
    let mut out = SampledForm::zeros(lat.clone(), c.degree);
    let hr = cx.h.powi(c.degree as i32);
    let masks = subsets(n, c.degree);
    for q in 0..lat.len() {
        if !lat.active[q] {
            continue;
        }
        let corner = lat.coords(q);
        for (k, &m) in masks.iter().enumerate() {
            let free: Vec<usize> = (0..n).filter(|a| m >> a & 1 == 0).collect();
            let mut s = 0.0;
            for choice in 0..(1usize << free.len()) {
                let mut v = corner;
                for (j, &a) in free.iter().enumerate() {
                    if choice >> j & 1 == 1 {
                        v[a] += 1;
                    }
                }
                let idx = cx.find(super::complex::Cell { corner: v, axes: m }).expect("faces of active cubes exist");
                s += c.values[idx];
            }
            out.components[k][q] = s / (1usize << free.len()) as f64 / hr;
        }
    }
    Ok(out)
}

/// Form components sampled at the centers of the boundary faces, in the
/// order of `CubicalComplex::boundary_faces`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub n: usize,
    pub degree: usize,
    pub components: Vec<Vec<f64>>,
}

impl BoundarySample {
    pub fn from_fn(cx: &CubicalComplex, degree: usize, f: impl Fn([f64; 3]) -> Vec<f64>) -> Self {
        let k = binomial(cx.n, degree);
        let faces = cx.boundary_faces();
        let mut components = vec![vec![0.0; faces.len()]; k];
        for (i, face) in faces.iter().enumerate() {
            let v = f(cx.barycenter(cx.cell(cx.n - 1, face.cell)));
            for (c, x) in components.iter_mut().zip(v) {
                c[i] = x;
            }
        }
        Self { n: cx.n, degree, components }
    }

    /// Restriction of a cube-center sample: each face takes the value of its
    /// unique active cube.
    pub fn from_sampled(cx: &CubicalComplex, f: &SampledForm) -> Result<Self> {
        if !same_geometry(&cx.cube_lattice(), &f.lattice) {
            return Err(Error::GridMismatch("form must be sampled at the cube centers".into()));
        }
        let faces = cx.boundary_faces();
        let mut components = vec![vec![0.0; faces.len()]; f.components.len()];
        for (i, face) in faces.iter().enumerate() {
            let cell = cx.cell(cx.n - 1, face.cell);
            let mut c = [cell.corner[0] as isize, cell.corner[1] as isize, cell.corner[2] as isize];
            if face.outward > 0.0 {
                c[face.axis] -= 1;
            }
            let q = cube_at(cx, c).expect("boundary face has an active cube");
            for (dst, src) in components.iter_mut().zip(&f.components) {
                dst[i] = src[q];
            }
        }
        Ok(Self { n: cx.n, degree: f.degree, components })
    }

    fn split(&self, cx: &CubicalComplex, keep_normal: bool) -> Self {
        let masks = subsets(self.n, self.degree);
        let mut out = self.clone();
        for (i, face) in cx.boundary_faces().iter().enumerate() {
            for (k, m) in masks.iter().enumerate() {
                let has = m >> face.axis & 1 == 1;
                if has != keep_normal {
                    out.components[k][i] = 0.0;
                }
            }
        }
        out
    }

    /// Components whose multi-index excludes the face's conormal axis.
    pub fn tangential_part(&self, cx: &CubicalComplex) -> Self {
        self.split(cx, false)
    }

    /// Components whose multi-index contains the face's conormal axis.
    pub fn normal_part(&self, cx: &CubicalComplex) -> Self {
        self.split(cx, true)
    }
}

/// [f, v] = sum over boundary faces of <nu ^ f, v> sqrt(g) h^{n-1}.
pub fn boundary_pairing(dec: &Dec, f: &BoundarySample, v: &BoundarySample) -> Result<f64> {
    let cx = &dec.cx;
    if f.degree + 1 != v.degree || f.n != cx.n || v.n != cx.n {
        return Err(invalid("boundary pairing needs degrees r and r+1 on the same complex"));
    }
    let n = cx.n;
    let area = cx.h.powi(n as i32 - 1);
    let fm = subsets(n, f.degree);
    let mut s = 0.0;
    for (i, face) in cx.boundary_faces().iter().enumerate() {
        let x = cx.barycenter(cx.cell(n - 1, face.cell));
        let nu = 1u8 << face.axis;
        let mut t = 0.0;
        for (k, &m) in fm.iter().enumerate() {
            let sg = merge_sign(nu, m);
            if sg == 0.0 {
                continue;
            }
            let vk = rank(n, nu | m);
            t += sg * dec.metric.inverse_weight(x, nu | m) * f.components[k][i] * v.components[vk][i];
        }
        s += face.outward * t * dec.metric.sqrt_det(x, n) * area;
    }
    Ok(s)
}
