//! Diagonal Riemannian metrics given as closures of the coordinates.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;


use num_traits::Float;

use super::index::axes;
use crate::error::{Error, Result};

type Diag = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Diagonal metric g = diag(g_11, ..., g_nn). Unused axes carry 1.
#[derive(Clone)]
pub struct MetricField {
    pub name: String,
    diag: Option<Diag>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricField({})", self.name)
    }
}

impl MetricField {
    pub fn euclidean() -> Self {
        Self { name: "euclidean".into(), diag: None }
    }

    pub fn diagonal(name: impl Into<String>, f: impl Fn([f64; 3]) -> [f64; 3] + Send + Sync + 'static) -> Self {
        Self { name: name.into(), diag: Some(Arc::new(f)) }
    }

    pub fn constant(d: [f64; 3]) -> Self {
        Self::diagonal(format!("constant{d:?}"), move |_| d)
    }

    /// g_ii = base_i + sum_j slope[i][j] x_j.
    pub fn affine(base: [f64; 3], slope: [[f64; 3]; 3]) -> Self {
        Self::diagonal(format!("affine{base:?}{slope:?}"), move |x| {
            let mut g = base;
            for i in 0..3 {
                for j in 0..3 {
                    g[i] += slope[i][j] * x[j];
                }
            }
            g
        })
    }

    /// g_ii = exp(rate[i] . x).
    pub fn exponential(rate: [[f64; 3]; 3]) -> Self {
        Self::diagonal(format!("exp{rate:?}"), move |x| {
            let mut g = [1.0; 3];
            for i in 0..3 {
                g[i] = (rate[i][0] * x[0] + rate[i][1] * x[1] + rate[i][2] * x[2]).exp();
            }
            g
        })
    }

    pub fn is_euclidean(&self) -> bool {
        self.diag.is_none()
    }

    pub fn diag(&self, x: [f64; 3]) -> [f64; 3] {
        match &self.diag {
            None => [1.0; 3],
            Some(f) => f(x),
        }
    }

    pub fn sqrt_det(&self, x: [f64; 3], n: usize) -> f64 {
        let g = self.diag(x);
        g[..n].iter().product::<f64>().sqrt()
    }

    /// G^{II} = prod over i in I of g^{ii}.
    pub fn inverse_weight(&self, x: [f64; 3], mask: u8) -> f64 {
        let g = self.diag(x);
        axes(mask).map(|i| 1.0 / g[i]).product()
    }

    /// Errors unless every g_ii at x is finite and positive.
    pub fn check(&self, x: [f64; 3], n: usize) -> Result<()> {
        let g = self.diag(x);
        for (i, v) in g[..n].iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::NonElliptic(format!("g_{i}{i} = {v} at {x:?}")));
            }
        }
        Ok(())
    }

    /// Christoffel symbols `gamma[k][l][m]` by centered differences with step `step`.
    pub fn christoffel(&self, x: [f64; 3], n: usize, step: f64) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        if self.is_euclidean() {
            return out;
        }
        // dg[s][j] = d g_jj / d x^s
        let mut dg = [[0.0; 3]; 3];
        for s in 0..n {
            let mut xp = x;
            let mut xm = x;
            xp[s] += step;
            xm[s] -= step;
            let gp = self.diag(xp);
            let gm = self.diag(xm);
            for j in 0..n {
                dg[s][j] = (gp[j] - gm[j]) / (2.0 * step);
            }
        }
        let g = self.diag(x);
        for k in 0..n {
            for l in 0..n {
                for m in 0..n {
                    // only s = k survives for a diagonal inverse
                    let s = k;
                    let d_l_gsm = if s == m { dg[l][m] } else { 0.0 };
                    let d_m_gls = if l == s { dg[m][l] } else { 0.0 };
                    let d_s_glm = if l == m { dg[s][l] } else { 0.0 };
                    out[k][l][m] = 0.5 / g[k] * (d_l_gsm + d_m_gls - d_s_glm);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn christoffel_examples() {
        let e = MetricField::euclidean();
        assert_eq!(e.christoffel([0.3, 0.2, 0.0], 2, 1e-3), [[[0.0; 3]; 3]; 3]);
        let g = MetricField::exponential([[2.0, 0.0, 0.0], [0.0; 3], [0.0; 3]]);
        let c = g.christoffel([0.4, 0.1, 0.0], 2, 1e-4);
        assert!((c[0][0][0] - 1.0).abs() < 1e-7);
        for k in 0..2 {
            for l in 0..2 {
                for m in 0..2 {
                    assert_eq!(c[k][l][m], c[k][m][l]);
                    if (k, l, m) != (0, 0, 0) {
                        assert!(c[k][l][m].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn weights_and_ellipticity() {
        let g = MetricField::constant([4.0, 4.0, 1.0]);
        assert_eq!(g.inverse_weight([0.0; 3], 0b01) * g.sqrt_det([0.0; 3], 2), 1.0);
        let bad = MetricField::constant([1.0, -1.0, 1.0]);
        assert!(matches!(bad.check([0.0; 3], 2), Err(Error::NonElliptic(_))));
    }

    #[test]
    fn mixed_christoffel_by_hand() {
        // g = diag(1 + x2, 1): Gamma^1_12 = 1/(2(1+x2)), Gamma^2_11 = -1/2
        let g = MetricField::affine([1.0, 1.0, 1.0], [[0.0, 1.0, 0.0], [0.0; 3], [0.0; 3]]);
        let x = [0.2, 0.5, 0.0];
        let c = g.christoffel(x, 2, 1e-3);
        assert!((c[0][0][1] - 0.5 / 1.5).abs() < 1e-12);
        assert!((c[1][0][0] + 0.5).abs() < 1e-12);
        assert!(c[1][1][1].abs() < 1e-12);
    }
}
