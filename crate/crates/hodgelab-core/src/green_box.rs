//! Green operator of the bilinear (Q1) finite-element Laplacian on a
//! rectangle, inverted by fast diagonalization of the 1D factors.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::generalized_eigen;

/// Treatment of the two ends of a 1D axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisEnds {
    pub low_free: bool,
    pub high_free: bool,
}

impl AxisEnds {
    pub const PINNED: Self = Self { low_free: false, high_free: false };
}

/// Linear elements on `cells` equal intervals: stiffness and mass restricted
/// to the unknown nodes, plus the node index of each unknown.
fn factors(cells: usize, h: f64, ends: AxisEnds) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let first = if ends.low_free { 0 } else { 1 };
    let last = if ends.high_free { cells } else { cells - 1 };
    let nodes: Vec<usize> = (first..=last).collect();
    let m = nodes.len();
    let mut k = DMatrix::zeros(m, m);
    let mut mm = DMatrix::zeros(m, m);
    for (a, &i) in nodes.iter().enumerate() {
        let elems = (i > 0) as usize + (i < cells) as usize;
        k[(a, a)] = elems as f64 / h;
        mm[(a, a)] = elems as f64 * h / 3.0;
        if a + 1 < m {
            k[(a, a + 1)] = -1.0 / h;
            k[(a + 1, a)] = -1.0 / h;
            mm[(a, a + 1)] = h / 6.0;
            mm[(a + 1, a)] = h / 6.0;
        }
    }
    (k, mm, nodes)
}

/// Inverse of Kx (x) My + Mx (x) Ky on the unknown nodes of an
/// `(cx + 1) x (cy + 1)` node grid; node arrays are row-major in x.
#[derive(Debug, Clone)]
pub struct BoxGreen {
    pub cells: [usize; 2],
    pub h: f64,
    vx: DMatrix<f64>,
    lx: Vec<f64>,
    vy: DMatrix<f64>,
    ly: Vec<f64>,
    nodes_x: Vec<usize>,
    nodes_y: Vec<usize>,
}

impl BoxGreen {
    pub fn new(cells: [usize; 2], h: f64, ends: [AxisEnds; 2]) -> Result<Self> {
        if cells.iter().any(|&c| c < 2) || !(h > 0.0) {
            return Err(invalid("box needs at least two cells per axis and positive spacing"));
        }
        if ends.iter().all(|e| e.low_free && e.high_free) {
            return Err(invalid("a fully free box has constants in the kernel"));
        }
        let (kx, mx, nodes_x) = factors(cells[0], h, ends[0]);
        let (ky, my, nodes_y) = factors(cells[1], h, ends[1]);
        let (lx, vx) = generalized_eigen(kx, mx)?;
        let (ly, vy) = generalized_eigen(ky, my)?;
        Ok(Self { cells, h, vx, lx, vy, ly, nodes_x, nodes_y })
    }

    pub fn node_count(&self) -> usize {
        (self.cells[0] + 1) * (self.cells[1] + 1)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * (self.cells[1] + 1) + j
    }

    /// Whether a node carries an unknown.
    pub fn free_mask(&self) -> Vec<bool> {
        let mut out = vec![false; self.node_count()];
        for &i in &self.nodes_x {
            for &j in &self.nodes_y {
                out[self.node(i, j)] = true;
            }
        }
        out
    }

    /// Solves K u = b for a node-indexed load; pinned entries of b are
    /// ignored and pinned entries of u are zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (mx, my) = (self.nodes_x.len(), self.nodes_y.len());
        let mut rhs = DMatrix::zeros(mx, my);
        for (a, &i) in self.nodes_x.iter().enumerate() {
            for (c, &j) in self.nodes_y.iter().enumerate() {
                rhs[(a, c)] = b[self.node(i, j)];
            }
        }
        let mut t = self.vx.transpose() * rhs * &self.vy;
        for a in 0..mx {
            for c in 0..my {
                t[(a, c)] /= self.lx[a] + self.ly[c];
            }
        }
        let u = &self.vx * t * self.vy.transpose();
        let mut out = vec![0.0; self.node_count()];
        for (a, &i) in self.nodes_x.iter().enumerate() {
            for (c, &j) in self.nodes_y.iter().enumerate() {
                out[self.node(i, j)] = u[(a, c)];
            }
        }
        out
    }

    /// K u assembled element by element.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let free = self.free_mask();
        let mut out = vec![0.0; self.node_count()];
        // element stiffness of the bilinear square, independent of h in 2D
        let ke = [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ];
        for i in 0..self.cells[0] {
            for j in 0..self.cells[1] {
                let ids = [self.node(i, j), self.node(i + 1, j), self.node(i, j + 1), self.node(i + 1, j + 1)];
                for a in 0..4 {
                    if !free[ids[a]] {
                        continue;
                    }
                    let mut s = 0.0;
                    for b in 0..4 {
                        if free[ids[b]] {
                            s += ke[a][b] * u[ids[b]];
                        }
                    }
                    out[ids[a]] += s / 6.0;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    #[test]
    fn inverse_matches_assembled_stiffness() {
        for ends in [[AxisEnds::PINNED; 2], [AxisEnds::PINNED, AxisEnds { low_free: true, high_free: false }]] {
            let g = BoxGreen::new([9, 6], 0.1, ends).unwrap();
            let free = g.free_mask();
            let mut rng = XorShift64::new(4);
            let mut u = vec![0.0; g.node_count()];
            rng.fill_symmetric(&mut u);
            for (v, f) in u.iter_mut().zip(&free) {
                if !*f {
                    *v = 0.0;
                }
            }
            let back = g.solve(&g.apply(&u));
            let err = back.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-11, "{err}");
        }
    }

    #[test]
    fn discrete_poisson_is_second_order() {
        use core::f64::consts::PI;
        use num_traits::Float;
        let mut errs = vec![];
        for m in [8usize, 16, 32] {
            let h = 1.0 / m as f64;
            let g = BoxGreen::new([m, m], h, [AxisEnds::PINNED; 2]).unwrap();
            // load of -Laplace u = 2 pi^2 sin sin by nodal mass lumping
            let mut b = vec![0.0; g.node_count()];
            for i in 0..=m {
                for j in 0..=m {
                    let (x, y) = (i as f64 * h, j as f64 * h);
                    b[g.node(i, j)] = 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin() * h * h;
                }
            }
            let u = g.solve(&b);
            let mut e = 0.0f64;
            for i in 0..=m {
                for j in 0..=m {
                    let (x, y) = (i as f64 * h, j as f64 * h);
                    e = e.max((u[g.node(i, j)] - (PI * x).sin() * (PI * y).sin()).abs());
                }
            }
            errs.push(e);
        }
        assert!((errs[1] / errs[2]).log2() > 1.8, "{errs:?}");
    }
}
