//! Cochains with metric mass matrices: d, the codifferentials, inner
//! products and the Dirichlet energy.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;


use num_traits::Float;

use super::complex::CubicalComplex;
use super::metric::MetricField;
use crate::error::{invalid, Error, Result};

/// Values per r-cell (integrals of the form over the cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn zeros(degree: usize, len: usize) -> Self {
        Self { degree, values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { degree: self.degree, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn axpy(&mut self, a: f64, x: &Cochain) {
        debug_assert_eq!(self.degree, x.degree);
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn plus(&self, x: &Cochain) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, x);
        out
    }

    pub fn minus(&self, x: &Cochain) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, x);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A complex together with a metric and its diagonal mass matrices.
#[derive(Debug, Clone)]
pub struct Dec {
    pub cx: Arc<CubicalComplex>,
    pub metric: MetricField,
    mass: Vec<Vec<f64>>,
}

impl Dec {
    pub fn new(cx: Arc<CubicalComplex>, metric: MetricField) -> Result<Self> {
        let mut mass = Vec::with_capacity(cx.n + 1);
        for r in 0..=cx.n {
            mass.push(mass_matrix(&cx, &metric, r)?);
        }
        Ok(Self { cx, metric, mass })
    }

    pub fn euclidean(cx: CubicalComplex) -> Self {
        Self::new(Arc::new(cx), MetricField::euclidean()).expect("euclidean metric is elliptic")
    }

    pub fn n(&self) -> usize {
        self.cx.n
    }

    pub fn count(&self, r: usize) -> usize {
        self.cx.count(r)
    }

    pub fn zeros(&self, r: usize) -> Cochain {
        Cochain::zeros(r, self.count(r))
    }

    pub fn mass(&self, r: usize) -> &[f64] {
        &self.mass[r]
    }

    pub fn check(&self, c: &Cochain) -> Result<()> {
        if c.degree > self.n() || c.values.len() != self.count(c.degree) {
            return Err(Error::GridMismatch(format!(
                "cochain of degree {} with {} values does not fit the complex",
                c.degree,
                c.values.len()
            )));
        }
        Ok(())
    }

    pub fn d(&self, c: &Cochain) -> Result<Cochain> {
        self.check(c)?;
        if c.degree == self.n() {
            return Err(Error::TopDegree(self.n()));
        }
        let mut out = self.zeros(c.degree + 1);
        self.cx.incidence(c.degree).apply(&c.values, &mut out.values);
        Ok(out)
    }

    /// d^T applied to an (r+1)-cochain, giving an r-cochain (no masses).
    pub fn d_transpose(&self, c: &Cochain) -> Result<Cochain> {
        self.check(c)?;
        if c.degree == 0 {
            return Err(invalid("transpose of d on 0-cochains"));
        }
        let mut out = self.zeros(c.degree - 1);
        self.cx.incidence(c.degree - 1).apply_transpose(&c.values, &mut out.values);
        Ok(out)
    }

    /// delta = M_{r-1}^{-1} d^T M_r.
    pub fn delta(&self, c: &Cochain) -> Result<Cochain> {
        self.check(c)?;
        if c.degree == 0 {
            return Err(invalid("codifferential of a 0-cochain"));
        }
        let weighted = self.apply_mass(c);
        let mut out = self.d_transpose(&weighted)?;
        for (v, m) in out.values.iter_mut().zip(&self.mass[c.degree - 1]) {
            *v /= m;
        }
        Ok(out)
    }

    /// Codifferential of the tangentially constrained space: delta followed by
    /// zeroing the boundary subcomplex.
    pub fn delta_t(&self, c: &Cochain) -> Result<Cochain> {
        let mut out = self.delta(c)?;
        self.zero_tangential(&mut out);
        Ok(out)
    }

    pub fn zero_tangential(&self, c: &mut Cochain) {
        for (v, t) in c.values.iter_mut().zip(self.cx.classes(c.degree)) {
            if *t == super::complex::CellClass::Tangential {
                *v = 0.0;
            }
        }
    }

    pub fn tangential_defect(&self, c: &Cochain) -> f64 {
        c.values
            .iter()
            .zip(self.cx.classes(c.degree))
            .filter(|(_, t)| **t == super::complex::CellClass::Tangential)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
    }

    /// |delta| applied entrywise to |c|: the floating-point scale of `delta c`.
    pub fn delta_magnitude(&self, c: &Cochain) -> Result<Cochain> {
        self.check(c)?;
        if c.degree == 0 {
            return Err(invalid("codifferential of a 0-cochain"));
        }
        let inc = self.cx.incidence(c.degree - 1);
        let m = &self.mass[c.degree];
        let mut out = self.zeros(c.degree - 1);
        for r in 0..inc.rows {
            let v = (c.values[r] * m[r]).abs();
            for k in inc.row_ptr[r]..inc.row_ptr[r + 1] {
                out.values[inc.col[k] as usize] += v;
            }
        }
        for (v, w) in out.values.iter_mut().zip(&self.mass[c.degree - 1]) {
            *v /= w;
        }
        Ok(out)
    }

    pub fn apply_mass(&self, c: &Cochain) -> Cochain {
        let m = &self.mass[c.degree];
        Cochain { degree: c.degree, values: c.values.iter().zip(m).map(|(v, w)| v * w).collect() }
    }

    pub fn inner(&self, a: &Cochain, b: &Cochain) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        if a.degree != b.degree {
            return Err(invalid(format!("degree mismatch {} vs {}", a.degree, b.degree)));
        }
        Ok(dot3(&a.values, &b.values, &self.mass[a.degree]))
    }

    pub fn norm(&self, a: &Cochain) -> f64 {
        dot3(&a.values, &a.values, &self.mass[a.degree]).sqrt()
    }

    /// (da, db) + (delta a, delta b), dropping terms that do not exist in
    /// the extreme degrees.
    pub fn energy(&self, a: &Cochain, b: &Cochain) -> Result<f64> {
        if a.degree != b.degree {
            return Err(invalid("degree mismatch"));
        }
        let mut s = 0.0;
        if a.degree < self.n() {
            s += self.inner(&self.d(a)?, &self.d(b)?)?;
        }
        if a.degree > 0 {
            s += self.inner(&self.delta(a)?, &self.delta(b)?)?;
        }
        Ok(s)
    }
}

pub(crate) fn dot3(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i] * w[i];
    }
    s
}

/// Diagonal r-form masses: G^{II} sqrt(g) h^{n-2r} at the barycenter times the
/// fraction of the dual cell inside the domain.
pub fn mass_matrix(cx: &CubicalComplex, metric: &MetricField, r: usize) -> Result<Vec<f64>> {
    if r > cx.n {
        return Err(invalid(format!("degree {r} above dimension {}", cx.n)));
    }
    let n = cx.n;
    let scale = cx.h.powi(n as i32 - 2 * r as i32);
    let full = (1usize << (n - r)) as f64;
    let mut out = Vec::with_capacity(cx.count(r));
    for (i, cell) in cx.cells(r).iter().enumerate() {
        let x = cx.barycenter(*cell);
        metric.check(x, n)?;
        let w = metric.inverse_weight(x, cell.axes) * metric.sqrt_det(x, n) * scale;
        out.push(w * cx.multiplicity(r, i) as f64 / full);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::complex::Cell;
    use crate::rng::XorShift64;

    fn random(dec: &Dec, r: usize, seed: u64) -> Cochain {
        let mut rng = XorShift64::new(seed);
        let mut c = dec.zeros(r);
        rng.fill_symmetric(&mut c.values);
        c
    }

    #[test]
    fn d_of_linear_function() {
        let h = 0.125;
        let dec = Dec::euclidean(CubicalComplex::unit_box(2, &[8, 8], h).unwrap());
        let mut c = dec.zeros(0);
        for (i, cell) in dec.cx.cells(0).iter().enumerate() {
            c.values[i] = dec.cx.barycenter(*cell)[0];
        }
        let dc = dec.d(&c).unwrap();
        for (i, cell) in dec.cx.cells(1).iter().enumerate() {
            let want = if cell.axes == 0b01 { h } else { 0.0 };
            assert!((dc.values[i] - want).abs() < 1e-15);
        }
        assert!(matches!(dec.d(&dec.zeros(2)), Err(Error::TopDegree(2))));
        assert!(dec.delta(&dec.zeros(0)).is_err());
    }

    #[test]
    fn nilpotency_and_adjointness() {
        let cx = CubicalComplex::punctured_box(2, &[8, 8], 0.125, &[(3, 5), (3, 5)]).unwrap();
        let g = MetricField::affine([1.0, 2.0, 1.0], [[0.3, 0.1, 0.0], [0.0, -0.2, 0.0], [0.0; 3]]);
        let dec = Dec::new(Arc::new(cx), g).unwrap();
        let c0 = random(&dec, 0, 1);
        let dd = dec.d(&dec.d(&c0).unwrap()).unwrap();
        assert!(dd.max_abs() < 1e-13);
        let c2 = random(&dec, 2, 2);
        let ss = dec.delta(&dec.delta(&c2).unwrap()).unwrap();
        let scale = dec.delta_magnitude(&dec.delta_magnitude(&c2).unwrap()).unwrap();
        assert!(ss.max_abs() <= 1e-13 * scale.max_abs());
        let mut a = random(&dec, 1, 3);
        dec.zero_tangential(&mut a);
        let b = random(&dec, 2, 4);
        let lhs = dec.inner(&dec.d(&a).unwrap(), &b).unwrap();
        let rhs = dec.inner(&a, &dec.delta(&b).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn mass_examples() {
        let h = 0.25;
        let cx = CubicalComplex::unit_box(2, &[4, 4], h).unwrap();
        let m0 = mass_matrix(&cx, &MetricField::euclidean(), 0).unwrap();
        let inner_vertex = cx.find(Cell { corner: [2, 2, 0], axes: 0 }).unwrap();
        assert_eq!(m0[inner_vertex], h * h);
        let m1 = mass_matrix(&cx, &MetricField::constant([4.0, 4.0, 1.0]), 1).unwrap();
        let e = cx.find(Cell { corner: [1, 1, 0], axes: 0b01 }).unwrap();
        assert_eq!(m1[e], 1.0);
        // (dx^1, dx^1) = area
        let dec = Dec::euclidean(cx);
        let mut c = dec.zeros(1);
        for (i, cell) in dec.cx.cells(1).iter().enumerate() {
            if cell.axes == 0b01 {
                c.values[i] = h;
            }
        }
        assert!((dec.inner(&c, &c).unwrap() - 1.0).abs() < 1e-14);
        let bad = MetricField::constant([1.0, 0.0, 1.0]);
        assert!(matches!(mass_matrix(&dec.cx, &bad, 1), Err(Error::NonElliptic(_))));
    }

    #[test]
    fn energy_of_constant_vanishes() {
        let dec = Dec::euclidean(CubicalComplex::unit_box(2, &[4, 4], 0.25).unwrap());
        let one = Cochain { degree: 0, values: vec![1.0; dec.count(0)] };
        assert_eq!(dec.energy(&one, &one).unwrap(), 0.0);
        let a = random(&dec, 1, 9);
        assert!(dec.energy(&a, &a).unwrap() >= 0.0);
        assert!(dec.inner(&a, &a).unwrap() > 0.0);
    }
}
