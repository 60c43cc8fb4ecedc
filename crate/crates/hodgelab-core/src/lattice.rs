//! Regular point lattices and scalar fields sampled on them.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Points `origin + i*h` for multi-indices `i < dims`, with an activity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub n: usize,
    pub dims: [usize; 3],
    pub h: f64,
    pub origin: [f64; 3],
    pub active: Vec<bool>,
}

impl Lattice {
    pub fn new(n: usize, dims: &[usize], h: f64, origin: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&n) || dims.len() != n || origin.len() != n {
            return Err(invalid("lattice dimension must be 1, 2 or 3 with matching dims/origin"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid("lattice spacing must be positive"));
        }
        let mut d = [1usize; 3];
        let mut o = [0.0; 3];
        for k in 0..n {
            if dims[k] == 0 {
                return Err(invalid("empty lattice axis"));
            }
            d[k] = dims[k];
            o[k] = origin[k];
        }
        let len = d[0] * d[1] * d[2];
        Ok(Self { n, dims: d, h, origin: o, active: vec![true; len] })
    }

    /// Lattice of `cells` points per axis at cell centers of `[lo, lo + cells*h]`.
    pub fn cell_centered(n: usize, cells: &[usize], h: f64, lo: &[f64]) -> Result<Self> {
        let origin: Vec<f64> = lo.iter().map(|x| x + 0.5 * h).collect();
        Self::new(n, cells, h, &origin)
    }

    pub fn with_mask(mut self, keep: impl Fn([f64; 3]) -> bool) -> Self {
        for i in 0..self.len() {
            self.active[i] = keep(self.point(i));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn cell_volume(&self) -> f64 {
        let mut v = 1.0;
        for _ in 0..self.n {
            v *= self.h;
        }
        v
    }

    /// Row-major index, last axis fastest.
    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let c2 = i % self.dims[2];
        let r = i / self.dims[2];
        [r / self.dims[1], r % self.dims[1], c2]
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        let c = self.coords(i);
        let mut x = [0.0; 3];
        for k in 0..self.n {
            x[k] = self.origin[k] + c[k] as f64 * self.h;
        }
        x
    }

    pub fn same_grid(&self, other: &Lattice) -> bool {
        self.n == other.n
            && self.dims == other.dims
            && self.h == other.h
            && self.origin == other.origin
            && self.active == other.active
    }

    pub fn check_same(&self, other: &Lattice) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different lattices".into()))
        }
    }

    /// Active neighbour along `axis` in direction `dir` (+1 / -1).
    pub fn neighbor(&self, i: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut c = self.coords(i);
        let v = c[axis] as isize + dir;
        if v < 0 || v >= self.dims[axis] as isize {
            return None;
        }
        c[axis] = v as usize;
        let j = self.index(c);
        if self.active[j] {
            Some(j)
        } else {
            None
        }
    }

    /// Active points with at least one missing neighbour.
    pub fn boundary_points(&self) -> Vec<bool> {
        let mut b = vec![false; self.len()];
        for i in 0..self.len() {
            if !self.active[i] {
                continue;
            }
            'axes: for axis in 0..self.n {
                for dir in [-1isize, 1] {
                    if self.neighbor(i, axis, dir).is_none() {
                        b[i] = true;
                        break 'axes;
                    }
                }
            }
        }
        b
    }
}

/// Scalar samples on a lattice; inactive points are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::GridMismatch("value count differs from lattice size".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        let mut f = Self { lattice, values };
        f.clear_inactive();
        Ok(f)
    }

    pub fn zeros(lattice: Lattice) -> Self {
        let len = lattice.len();
        Self { lattice, values: vec![0.0; len] }
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..lattice.len())
            .map(|i| if lattice.active[i] { f(lattice.point(i)) } else { 0.0 })
            .collect();
        Self { lattice, values }
    }

    fn clear_inactive(&mut self) {
        for (v, a) in self.values.iter_mut().zip(&self.lattice.active) {
            if !*a {
                *v = 0.0;
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (v, a) in out.values.iter_mut().zip(&self.lattice.active) {
            *v = if *a { f(*v) } else { 0.0 };
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.lattice.check_same(&other.lattice)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(out)
    }

    /// Sum of samples times cell volume over active points.
    pub fn integral(&self) -> f64 {
        let w = self.lattice.cell_volume();
        let mut s = 0.0;
        for (v, a) in self.values.iter().zip(&self.lattice.active) {
            if *a {
                s += v * w;
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Partial derivative along `axis`: centered in the interior, first-order
    /// one-sided where a neighbour is missing, zero for isolated points.
    pub fn partial(&self, axis: usize) -> Self {
        let lat = &self.lattice;
        let h = lat.h;
        let mut out = vec![0.0; lat.len()];
        for i in 0..lat.len() {
            if !lat.active[i] {
                continue;
            }
            let fwd = lat.neighbor(i, axis, 1);
            let bwd = lat.neighbor(i, axis, -1);
            out[i] = match (bwd, fwd) {
                (Some(b), Some(f)) => (self.values[f] - self.values[b]) / (2.0 * h),
                (None, Some(f)) => (self.values[f] - self.values[i]) / h,
                (Some(b), None) => (self.values[i] - self.values[b]) / h,
                (None, None) => 0.0,
            };
        }
        Self { lattice: lat.clone(), values: out }
    }

    pub fn gradient(&self) -> Vec<ScalarField> {
        (0..self.lattice.n).map(|k| self.partial(k)).collect()
    }
}

/// Pointwise Euclidean magnitude of a list of component fields.
pub fn magnitude(components: &[ScalarField]) -> Result<ScalarField> {
    let first = components.first().ok_or_else(|| invalid("no components"))?;
    let mut out = ScalarField::zeros(first.lattice.clone());
    for c in components {
        c.lattice.check_same(&first.lattice)?;
        for (o, v) in out.values.iter_mut().zip(&c.values) {
            *o += v * v;
        }
    }
    for o in out.values.iter_mut() {
        *o = o.sqrt();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let l = Lattice::new(3, &[3, 4, 5], 0.1, &[0.0, 0.0, 0.0]).unwrap();
        for i in 0..l.len() {
            assert_eq!(l.index(l.coords(i)), i);
        }
    }

    #[test]
    fn partial_of_linear_is_exact() {
        let l = Lattice::new(2, &[6, 5], 0.2, &[0.0, 0.0]).unwrap();
        let f = ScalarField::from_fn(l, |x| 3.0 * x[0] - x[1]);
        let fx = f.partial(0);
        let fy = f.partial(1);
        for i in 0..fx.values.len() {
            assert!((fx.values[i] - 3.0).abs() < 1e-12);
            assert!((fy.values[i] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_points_of_box() {
        let l = Lattice::new(2, &[4, 4], 1.0, &[0.0, 0.0]).unwrap();
        let b = l.boundary_points();
        assert_eq!(b.iter().filter(|x| **x).count(), 12);
    }
}
