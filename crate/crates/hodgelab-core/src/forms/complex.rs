//! Cubical complexes built from masks of active unit cubes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::index::{axes, position, subsets};
use crate::error::{invalid, Error, Result};
use crate::lattice::Lattice;

const NONE: u32 = u32::MAX;

/// An r-cell: lower corner on the vertex lattice plus its spanning axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub corner: [usize; 3],
    pub axes: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Interior,
    /// Lies in the boundary subcomplex; zeroed by the tangential constraint.
    Tangential,
    /// Touches the boundary subcomplex without lying in it.
    NormalAdjacent,
}

/// A boundary (n-1)-cell with its outward conormal `outward * dx^axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub axis: usize,
    pub outward: f64,
}

/// Signed incidence of (r+1)-cells on r-cells, one row per (r+1)-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub sign: Vec<f64>,
}

impl Incidence {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.rows {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.sign[k] * x[self.col[k] as usize];
            }
            out[r] = s;
        }
    }

    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            let v = y[r];
            if v == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col[k] as usize] += self.sign[k] * v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicalComplex {
    pub n: usize,
    pub h: f64,
    pub origin: [f64; 3],
    /// Unit cubes per axis (1 for unused axes).
    pub cells_per_axis: [usize; 3],
    pub cube_mask: Vec<bool>,
    cells: Vec<Vec<Cell>>,
    lookup: Vec<Vec<u32>>,
    multiplicity: Vec<Vec<u8>>,
    classes: Vec<Vec<CellClass>>,
    faces: Vec<BoundaryFace>,
    incidence: Vec<Incidence>,
}

impl CubicalComplex {
    pub fn from_mask(n: usize, cells: &[usize], h: f64, origin: &[f64], mask: impl Fn([usize; 3]) -> bool) -> Result<Self> {
        if !(2..=3).contains(&n) || cells.len() != n || origin.len() != n {
            return Err(invalid("complex dimension must be 2 or 3 with matching cells/origin"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid("grid spacing must be positive"));
        }
        let mut cpa = [1usize; 3];
        let mut org = [0.0; 3];
        for k in 0..n {
            if cells[k] == 0 {
                return Err(invalid("empty axis"));
            }
            cpa[k] = cells[k];
            org[k] = origin[k];
        }
        let ncubes = cpa[0] * cpa[1] * cpa[2];
        let mut cube_mask = vec![false; ncubes];
        for (i, m) in cube_mask.iter_mut().enumerate() {
            *m = mask(unflatten(i, cpa));
        }
        if !cube_mask.iter().any(|&m| m) {
            return Err(Error::DegenerateDomain("no active cubes".into()));
        }
        let mut cx = Self {
            n,
            h,
            origin: org,
            cells_per_axis: cpa,
            cube_mask,
            cells: Vec::new(),
            lookup: vec![Vec::new(); 1 << n],
            multiplicity: Vec::new(),
            classes: Vec::new(),
            faces: Vec::new(),
            incidence: Vec::new(),
        };
        cx.build_cells();
        cx.build_boundary();
        cx.build_incidence();
        Ok(cx)
    }

    pub fn unit_box(n: usize, cells: &[usize], h: f64) -> Result<Self> {
        Self::from_mask(n, cells, h, &vec![0.0; n], |_| true)
    }

    /// Box with the cubes whose indices lie in `hole[k].0 <= c[k] < hole[k].1`
    /// removed on every axis.
    pub fn punctured_box(n: usize, cells: &[usize], h: f64, hole: &[(usize, usize)]) -> Result<Self> {
        if hole.len() != n {
            return Err(invalid("hole needs one index range per axis"));
        }
        for (k, r) in hole.iter().enumerate() {
            if r.0 == 0 || r.1 >= cells[k] || r.0 >= r.1 {
                return Err(invalid(format!("hole range {r:?} must lie strictly inside axis {k}")));
            }
        }
        Self::from_mask(n, cells, h, &vec![0.0; n], |c| !(0..n).all(|k| c[k] >= hole[k].0 && c[k] < hole[k].1))
    }

    /// Square (cube) with the upper quadrant in the first two axes removed.
    pub fn l_shape(n: usize, cells: &[usize], h: f64) -> Result<Self> {
        let half: Vec<usize> = cells.iter().map(|c| c / 2).collect();
        Self::from_mask(n, cells, h, &vec![0.0; n], |c| !(c[0] >= half[0] && c[1] >= half[1]))
    }

    fn vertex_dims(&self) -> [usize; 3] {
        let mut d = [1usize; 3];
        for k in 0..self.n {
            d[k] = self.cells_per_axis[k] + 1;
        }
        d
    }

    pub fn cube_index(&self, c: [usize; 3]) -> usize {
        let d = self.cells_per_axis;
        (c[0] * d[1] + c[1]) * d[2] + c[2]
    }

    fn cube_active(&self, c: [isize; 3]) -> bool {
        for k in 0..3 {
            if c[k] < 0 || c[k] as usize >= self.cells_per_axis[k] {
                return false;
            }
        }
        self.cube_mask[self.cube_index([c[0] as usize, c[1] as usize, c[2] as usize])]
    }

    /// Number of active cubes having the cell as a face.
    fn count_cubes(&self, v: [usize; 3], mask: u8) -> u8 {
        let free: Vec<usize> = (0..self.n).filter(|k| mask >> k & 1 == 0).collect();
        let mut count = 0;
        for choice in 0..(1usize << free.len()) {
            let mut c = [v[0] as isize, v[1] as isize, v[2] as isize];
            for (j, &k) in free.iter().enumerate() {
                if choice >> j & 1 == 1 {
                    c[k] -= 1;
                }
            }
            if self.cube_active(c) {
                count += 1;
            }
        }
        count
    }

    fn build_cells(&mut self) {
        let vd = self.vertex_dims();
        let nv = vd[0] * vd[1] * vd[2];
        for r in 0..=self.n {
            let mut list = Vec::new();
            let mut mult = Vec::new();
            for m in subsets(self.n, r) {
                let mut table = vec![NONE; nv];
                for (vi, slot) in table.iter_mut().enumerate() {
                    let v = unflatten(vi, vd);
                    if axes(m).any(|k| v[k] >= self.cells_per_axis[k]) {
                        continue;
                    }
                    let c = self.count_cubes(v, m);
                    if c > 0 {
                        *slot = list.len() as u32;
                        list.push(Cell { corner: v, axes: m });
                        mult.push(c);
                    }
                }
                self.lookup[m as usize] = table;
            }
            self.cells.push(list);
            self.multiplicity.push(mult);
        }
    }

    fn build_boundary(&mut self) {
        let n = self.n;
        let mut tangential: Vec<Vec<bool>> = self.cells.iter().map(|c| vec![false; c.len()]).collect();
        for (i, cell) in self.cells[n - 1].iter().enumerate() {
            if self.multiplicity[n - 1][i] != 1 {
                continue;
            }
            let full = ((1u16 << n) - 1) as u8;
            let axis = (full & !cell.axes).trailing_zeros() as usize;
            let v = cell.corner;
            let mut below = [v[0] as isize, v[1] as isize, v[2] as isize];
            below[axis] -= 1;
            let outward = if self.cube_active(below) { 1.0 } else { -1.0 };
            self.faces.push(BoundaryFace { cell: i, axis, outward });
            // mark every face of this boundary cell
            let a = cell.axes;
            let span: Vec<usize> = axes(a).collect();
            for sub in 0..(1usize << span.len()) {
                let mut b = 0u8;
                for (j, &k) in span.iter().enumerate() {
                    if sub >> j & 1 == 1 {
                        b |= 1 << k;
                    }
                }
                let rest: Vec<usize> = span.iter().copied().filter(|k| b >> k & 1 == 0).collect();
                for off in 0..(1usize << rest.len()) {
                    let mut c = v;
                    for (j, &k) in rest.iter().enumerate() {
                        if off >> j & 1 == 1 {
                            c[k] += 1;
                        }
                    }
                    let idx = self.find(Cell { corner: c, axes: b }).expect("faces of cells exist");
                    tangential[b.count_ones() as usize][idx] = true;
                }
            }
        }
        for r in 0..=n {
            let mut cls = Vec::with_capacity(self.cells[r].len());
            for (i, cell) in self.cells[r].iter().enumerate() {
                if tangential[r][i] {
                    cls.push(CellClass::Tangential);
                    continue;
                }
                let span: Vec<usize> = axes(cell.axes).collect();
                let mut touches = false;
                for off in 0..(1usize << span.len()) {
                    let mut c = cell.corner;
                    for (j, &k) in span.iter().enumerate() {
                        if off >> j & 1 == 1 {
                            c[k] += 1;
                        }
                    }
                    let vi = self.find(Cell { corner: c, axes: 0 }).expect("vertices exist");
                    if tangential[0][vi] {
                        touches = true;
                        break;
                    }
                }
                cls.push(if touches { CellClass::NormalAdjacent } else { CellClass::Interior });
            }
            self.classes.push(cls);
        }
    }

    fn build_incidence(&mut self) {
        for r in 0..self.n {
            let rows = self.cells[r + 1].len();
            let mut row_ptr = Vec::with_capacity(rows + 1);
            let mut col = Vec::new();
            let mut sign = Vec::new();
            row_ptr.push(0);
            for cell in &self.cells[r + 1] {
                for k in axes(cell.axes) {
                    let s = if position(cell.axes, k) % 2 == 0 { 1.0 } else { -1.0 };
                    let face = cell.axes & !(1 << k);
                    let lo = self.find(Cell { corner: cell.corner, axes: face }).expect("face exists");
                    let mut up = cell.corner;
                    up[k] += 1;
                    let hi = self.find(Cell { corner: up, axes: face }).expect("face exists");
                    col.push(hi as u32);
                    sign.push(s);
                    col.push(lo as u32);
                    sign.push(-s);
                }
                row_ptr.push(col.len());
            }
            self.incidence.push(Incidence { rows, cols: self.cells[r].len(), row_ptr, col, sign });
        }
    }

    pub fn find(&self, cell: Cell) -> Option<usize> {
        let vd = self.vertex_dims();
        for k in 0..3 {
            if cell.corner[k] >= vd[k] {
                return None;
            }
        }
        let table = self.lookup.get(cell.axes as usize)?;
        let vi = (cell.corner[0] * vd[1] + cell.corner[1]) * vd[2] + cell.corner[2];
        match table.get(vi) {
            Some(&i) if i != NONE => Some(i as usize),
            _ => None,
        }
    }

    pub fn count(&self, r: usize) -> usize {
        self.cells.get(r).map_or(0, |c| c.len())
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..=self.n).map(|r| self.count(r)).collect()
    }

    pub fn cells(&self, r: usize) -> &[Cell] {
        &self.cells[r]
    }

    pub fn cell(&self, r: usize, i: usize) -> Cell {
        self.cells[r][i]
    }

    /// Number of active cubes incident to the cell.
    pub fn multiplicity(&self, r: usize, i: usize) -> u8 {
        self.multiplicity[r][i]
    }

    pub fn classes(&self, r: usize) -> &[CellClass] {
        &self.classes[r]
    }

    pub fn is_tangential(&self, r: usize, i: usize) -> bool {
        self.classes[r][i] == CellClass::Tangential
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    /// Coboundary from r-cells to (r+1)-cells.
    pub fn incidence(&self, r: usize) -> &Incidence {
        &self.incidence[r]
    }

    pub fn barycenter(&self, cell: Cell) -> [f64; 3] {
        let mut x = [0.0; 3];
        for k in 0..self.n {
            let half = if cell.axes >> k & 1 == 1 { 0.5 } else { 0.0 };
            x[k] = self.origin[k] + self.h * (cell.corner[k] as f64 + half);
        }
        x
    }

    /// Lattice of cube centers with the active-cube mask.
    pub fn cube_lattice(&self) -> Lattice {
        let cells: Vec<usize> = self.cells_per_axis[..self.n].to_vec();
        let mut lat = Lattice::cell_centered(self.n, &cells, self.h, &self.origin[..self.n]).expect("valid complex");
        lat.active.copy_from_slice(&self.cube_mask);
        lat
    }

    /// Betti-type structural count: vertices - edges + faces - ...
    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.n).map(|r| if r % 2 == 0 { self.count(r) as i64 } else { -(self.count(r) as i64) }).sum()
    }
}

fn unflatten(i: usize, d: [usize; 3]) -> [usize; 3] {
    [i / (d[1] * d[2]), (i / d[2]) % d[1], i % d[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_counts() {
        let cx = CubicalComplex::unit_box(2, &[3, 2], 0.5).unwrap();
        assert_eq!(cx.counts(), [12, 17, 6]);
        assert_eq!(cx.euler_characteristic(), 1);
        assert_eq!(cx.boundary_faces().len(), 10);
        let c3 = CubicalComplex::unit_box(3, &[2, 2, 2], 0.5).unwrap();
        assert_eq!(c3.euler_characteristic(), 1);
    }

    #[test]
    fn punctured_box_topology() {
        let cx = CubicalComplex::punctured_box(2, &[6, 6], 1.0 / 6.0, &[(2, 4), (2, 4)]).unwrap();
        assert_eq!(cx.euler_characteristic(), 0);
        // every vertex of the hole rim is tangential
        let v = cx.find(Cell { corner: [2, 2, 0], axes: 0 }).unwrap();
        assert!(cx.is_tangential(0, v));
        let l = CubicalComplex::l_shape(2, &[4, 4], 0.25).unwrap();
        assert_eq!(l.euler_characteristic(), 1);
    }

    #[test]
    fn classes_on_box() {
        let cx = CubicalComplex::unit_box(2, &[4, 4], 0.25).unwrap();
        let e = cx.find(Cell { corner: [1, 0, 0], axes: 0b01 }).unwrap();
        assert_eq!(cx.classes(1)[e], CellClass::Tangential);
        let e = cx.find(Cell { corner: [1, 0, 0], axes: 0b10 }).unwrap();
        assert_eq!(cx.classes(1)[e], CellClass::NormalAdjacent);
        let e = cx.find(Cell { corner: [2, 2, 0], axes: 0b10 }).unwrap();
        assert_eq!(cx.classes(1)[e], CellClass::Interior);
        let bottom = cx.boundary_faces().iter().find(|f| cx.cell(1, f.cell).corner == [1, 0, 0] && f.axis == 1).unwrap();
        assert_eq!(bottom.outward, -1.0);
    }

    #[test]
    fn coboundary_squares_to_zero() {
        let cx = CubicalComplex::punctured_box(3, &[4, 4, 4], 0.25, &[(1, 3), (1, 3), (1, 3)]).unwrap();
        for r in 0..2 {
            let x: Vec<f64> = (0..cx.count(r)).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut y = vec![0.0; cx.count(r + 1)];
            let mut z = vec![0.0; cx.count(r + 2)];
            cx.incidence(r).apply(&x, &mut y);
            cx.incidence(r + 1).apply(&y, &mut z);
            assert!(z.iter().all(|v| v.abs() < 1e-13));
        }
    }
}
