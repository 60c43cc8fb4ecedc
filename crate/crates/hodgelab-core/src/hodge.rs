//! Weak Hodge-Laplacian problems under the four classical boundary
//! conditions, harmonic fields, projectors and the G_D / G_N / G_0 potentials.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exponent::{luxemburg_norm, ExponentField};
use crate::forms::complex::CellClass;
use crate::forms::dec::{Cochain, Dec};
use crate::forms::sampled::whitney_sample;
use crate::lattice::{magnitude, ScalarField};
use crate::linalg::{lowest_eigenpairs, m_orthonormalize, mdot, pcg, CgSettings, EigenSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryCondition {
    /// Both traces vanish.
    FullDirichlet,
    /// t omega = 0; t delta omega natural.
    Tangential,
    /// n omega = 0; n d omega natural.
    Normal,
    /// t delta omega and n d omega natural.
    Natural,
}

impl BoundaryCondition {
    /// Whether the boundary subcomplex is zeroed in the trial space.
    pub fn pins_tangential(self) -> bool {
        matches!(self, Self::FullDirichlet | Self::Tangential)
    }

    /// Whether the weak form uses the constrained codifferential.
    pub fn uses_delta_t(self) -> bool {
        matches!(self, Self::Tangential | Self::Natural)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FullDirichlet => "full",
            Self::Tangential => "tangential",
            Self::Normal => "normal",
            Self::Natural => "natural",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalProblem {
    pub degree: usize,
    pub eta: Cochain,
    /// (r+1)-cochain paired with d zeta.
    pub phi: Option<Cochain>,
    /// (r-1)-cochain paired with delta zeta.
    pub psi: Option<Cochain>,
    pub bc: BoundaryCondition,
    pub tol: f64,
}

/// Mass-orthonormal basis of the discrete harmonic fields.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicBasis {
    pub degree: usize,
    pub bc: BoundaryCondition,
    pub fields: Vec<Cochain>,
    /// First eigenvalue above the kernel divided by the kernel threshold.
    pub eigengap: f64,
    pub threshold: f64,
    /// First eigenvalue above the kernel.
    pub first_positive: f64,
    /// Ritz values that were computed, ascending.
    pub spectrum: Vec<f64>,
}

impl HarmonicBasis {
    pub fn dim(&self) -> usize {
        self.fields.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakSolution {
    pub omega: Cochain,
    pub iterations: usize,
    /// max |D(omega, zeta) - rhs(zeta)| over unit basis cochains zeta.
    pub residual: f64,
    pub history: Vec<f64>,
    pub harmonic_dim: usize,
    /// Largest |(eta_eff, h)| over the harmonic basis.
    pub compat_violation: f64,
}

/// Gate for harmonic compatibility pairings.
pub const COMPAT_BOUND: f64 = 1e-8;

/// Assembled constrained operator for one degree and boundary condition.
struct System<'a> {
    dec: &'a Dec,
    r: usize,
    free: Vec<bool>,
    /// (r-1)-cells kept by the codifferential.
    keep: Vec<bool>,
    diag: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(dec: &'a Dec, r: usize, bc: BoundaryCondition) -> Self {
        let cx = &dec.cx;
        let free: Vec<bool> = cx.classes(r).iter().map(|c| !bc.pins_tangential() || *c != CellClass::Tangential).collect();
        let keep: Vec<bool> = if r > 0 {
            cx.classes(r - 1).iter().map(|c| !bc.uses_delta_t() || *c != CellClass::Tangential).collect()
        } else {
            Vec::new()
        };
        let mut diag = vec![0.0; cx.count(r)];
        if r < cx.n {
            let inc = cx.incidence(r);
            let m1 = dec.mass(r + 1);
            for row in 0..inc.rows {
                for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                    diag[inc.col[k] as usize] += m1[row];
                }
            }
        }
        if r > 0 {
            let inc = cx.incidence(r - 1);
            let m = dec.mass(r);
            let mlow = dec.mass(r - 1);
            for row in 0..inc.rows {
                let mut s = 0.0;
                for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                    let c = inc.col[k] as usize;
                    if keep[c] {
                        s += 1.0 / mlow[c];
                    }
                }
                diag[row] += m[row] * m[row] * s;
            }
        }
        for (d, f) in diag.iter_mut().zip(&free) {
            if !*f || *d == 0.0 {
                *d = 1.0;
            }
        }
        Self { dec, r, free, keep, diag }
    }

    fn len(&self) -> usize {
        self.free.len()
    }

    /// y = P [d^T M d + M d Q M^{-1} Q d^T M] P x, zero on pinned cells.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let cx = &self.dec.cx;
        let r = self.r;
        let xs: Vec<f64> = x.iter().zip(&self.free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
        y.iter_mut().for_each(|v| *v = 0.0);
        if r < cx.n {
            let inc = cx.incidence(r);
            let mut t = vec![0.0; inc.rows];
            inc.apply(&xs, &mut t);
            for (v, m) in t.iter_mut().zip(self.dec.mass(r + 1)) {
                *v *= m;
            }
            inc.apply_transpose(&t, y);
        }
        if r > 0 {
            let inc = cx.incidence(r - 1);
            let m = self.dec.mass(r);
            let mx: Vec<f64> = xs.iter().zip(m).map(|(v, w)| v * w).collect();
            let mut s = vec![0.0; inc.cols];
            inc.apply_transpose(&mx, &mut s);
            for ((v, w), k) in s.iter_mut().zip(self.dec.mass(r - 1)).zip(&self.keep) {
                *v = if *k { *v / w } else { 0.0 };
            }
            let mut u = vec![0.0; inc.rows];
            inc.apply(&s, &mut u);
            for i in 0..y.len() {
                y[i] += m[i] * u[i];
            }
        }
        for (v, f) in y.iter_mut().zip(&self.free) {
            if !*f {
                *v = 0.0;
            }
        }
    }

    /// b = P [M eta + d^T M phi + M d Q psi].
    fn rhs(&self, eta: &Cochain, phi: Option<&Cochain>, psi: Option<&Cochain>) -> Vec<f64> {
        let cx = &self.dec.cx;
        let r = self.r;
        let mut b: Vec<f64> = eta.values.iter().zip(self.dec.mass(r)).map(|(v, m)| v * m).collect();
        if let Some(phi) = phi {
            let inc = cx.incidence(r);
            let mp: Vec<f64> = phi.values.iter().zip(self.dec.mass(r + 1)).map(|(v, m)| v * m).collect();
            let mut t = vec![0.0; inc.cols];
            inc.apply_transpose(&mp, &mut t);
            for (a, v) in b.iter_mut().zip(&t) {
                *a += v;
            }
        }
        if let Some(psi) = psi {
            let inc = cx.incidence(r - 1);
            let q: Vec<f64> = psi.values.iter().zip(&self.keep).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
            let mut t = vec![0.0; inc.rows];
            inc.apply(&q, &mut t);
            for ((a, v), m) in b.iter_mut().zip(&t).zip(self.dec.mass(r)) {
                *a += m * v;
            }
        }
        for (v, f) in b.iter_mut().zip(&self.free) {
            if !*f {
                *v = 0.0;
            }
        }
        b
    }
}

/// Orthogonal projection onto the span of the basis.
pub fn project_harmonic(omega: &Cochain, basis: &HarmonicBasis, dec: &Dec) -> Result<Cochain> {
    if omega.degree != basis.degree {
        return Err(invalid(format!("degree {} vs basis degree {}", omega.degree, basis.degree)));
    }
    dec.check(omega)?;
    let m = dec.mass(omega.degree);
    let mut out = dec.zeros(omega.degree);
    for h in &basis.fields {
        let c = mdot(&omega.values, &h.values, m);
        out.axpy(c, h);
    }
    Ok(out)
}

/// Solver context: a complex with metric, a tolerance and cached harmonic bases.
pub struct Hodge {
    pub dec: Dec,
    pub tol: f64,
    bases: RefCell<BTreeMap<(usize, BoundaryCondition), Rc<HarmonicBasis>>>,
}

impl Hodge {
    pub fn new(dec: Dec, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        Ok(Self { dec, tol, bases: RefCell::new(BTreeMap::new()) })
    }

    pub fn n(&self) -> usize {
        self.dec.n()
    }

    /// Side length of the bounding box.
    pub fn domain_scale(&self) -> f64 {
        let cx = &self.dec.cx;
        (0..cx.n).map(|k| cx.cells_per_axis[k] as f64 * cx.h).fold(0.0, f64::max)
    }

    /// Harmonic fields (trivial for full Dirichlet), with the spectral data
    /// that certifies the rank.
    pub fn harmonic_fields(&self, r: usize, bc: BoundaryCondition) -> Result<Rc<HarmonicBasis>> {
        if r > self.n() {
            return Err(invalid(format!("degree {r} above dimension")));
        }
        if bc == BoundaryCondition::Natural {
            return Err(Error::Unsupported("the natural kernel is not finite dimensional; use the mixed decomposition".into()));
        }
        if let Some(b) = self.bases.borrow().get(&(r, bc)) {
            return Ok(b.clone());
        }
        let basis = Rc::new(self.compute_basis(r, bc)?);
        self.bases.borrow_mut().insert((r, bc), basis.clone());
        Ok(basis)
    }

    fn compute_basis(&self, r: usize, bc: BoundaryCondition) -> Result<HarmonicBasis> {
        let sys = System::new(&self.dec, r, bc);
        let free_count = sys.free.iter().filter(|f| **f).count();
        let scale = self.domain_scale();
        let sigma = 1.0 / (scale * scale);
        let threshold = 1e-6 * sigma;
        let mass = self.dec.mass(r);
        if free_count == 0 {
            return Ok(HarmonicBasis {
                degree: r,
                bc,
                fields: Vec::new(),
                eigengap: f64::INFINITY,
                threshold,
                first_positive: f64::INFINITY,
                spectrum: Vec::new(),
            });
        }
        let mut block = 6;
        loop {
            let settings = EigenSettings {
                block,
                shift: sigma,
                max_outer: 400,
                tol: 1e-10,
                wanted: block / 2,
                seed: 0x5EED ^ ((r as u64) << 8) ^ bc as u64,
            };
            let pairs = lowest_eigenpairs(|x, y| sys.apply(x, y), &sys.diag, mass, &sys.free, settings)?;
            let k = pairs.values.len();
            let dim = pairs.values.iter().filter(|v| **v <= threshold).count();
            if dim + 1 > settings.wanted && k < free_count {
                block *= 2;
                continue;
            }
            let first_positive = pairs.values.get(dim).copied().unwrap_or(f64::INFINITY);
            let eigengap = first_positive / threshold;
            if eigengap < 10.0 {
                return Err(Error::AmbiguousRank { eigenvalues: pairs.values, threshold });
            }
            let mut vs: Vec<Vec<f64>> = pairs.vectors.into_iter().take(dim).collect();
            for v in vs.iter_mut() {
                for (x, f) in v.iter_mut().zip(&sys.free) {
                    if !*f {
                        *x = 0.0;
                    }
                }
            }
            m_orthonormalize(&mut vs, mass);
            let fields = vs.into_iter().map(|values| Cochain { degree: r, values }).collect();
            return Ok(HarmonicBasis { degree: r, bc, fields, eigengap, threshold, first_positive, spectrum: pairs.values });
        }
    }

    /// Reciprocal of the first eigenvalue above the harmonic kernel.
    pub fn poincare_constant(&self, r: usize, bc: BoundaryCondition) -> Result<f64> {
        Ok(1.0 / self.harmonic_fields(r, bc)?.first_positive)
    }

    /// Constrained weak solve with harmonic deflation and a compatibility gate.
    pub fn solve_weak(&self, p: &VariationalProblem) -> Result<WeakSolution> {
        let r = p.degree;
        let dec = &self.dec;
        if p.eta.degree != r {
            return Err(invalid("eta must have the problem degree"));
        }
        dec.check(&p.eta)?;
        if let Some(phi) = &p.phi {
            if phi.degree != r + 1 || r >= self.n() {
                return Err(invalid("phi must be an (r+1)-cochain"));
            }
            dec.check(phi)?;
        }
        if let Some(psi) = &p.psi {
            if r == 0 || psi.degree + 1 != r {
                return Err(invalid("psi must be an (r-1)-cochain"));
            }
            dec.check(psi)?;
        }
        if !(p.tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        let sys = System::new(dec, r, p.bc);
        let mut b = sys.rhs(&p.eta, p.phi.as_ref(), p.psi.as_ref());
        // harmonic kernel of the constrained form
        let basis = match p.bc {
            BoundaryCondition::FullDirichlet | BoundaryCondition::Natural => None,
            bc => Some(self.harmonic_fields(r, bc)?),
        };
        let mass = dec.mass(r);
        let mut compat = 0.0f64;
        if let Some(basis) = &basis {
            let eff_norm = b.iter().zip(mass).map(|(v, m)| v * v / m).sum::<f64>().sqrt();
            let bound = COMPAT_BOUND * eff_norm.max(1.0);
            let pairings: Vec<f64> = basis.fields.iter().map(|h| crate::linalg::dot(&b, &h.values)).collect();
            compat = pairings.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if compat > bound {
                return Err(Error::Compatibility { pairings, bound });
            }
            for (h, c) in basis.fields.iter().zip(&pairings) {
                for i in 0..b.len() {
                    b[i] -= c * mass[i] * h.values[i];
                }
            }
        }
        let deflate = |x: &mut [f64]| {
            if let Some(basis) = &basis {
                for h in &basis.fields {
                    let c = mdot(x, &h.values, mass);
                    for (a, v) in x.iter_mut().zip(&h.values) {
                        *a -= c * v;
                    }
                }
            }
        };
        let project = |r: &mut [f64]| {
            if let Some(basis) = &basis {
                for h in &basis.fields {
                    let c = crate::linalg::dot(r, &h.values);
                    for i in 0..r.len() {
                        r[i] -= c * mass[i] * h.values[i];
                    }
                }
            }
        };
        let settings = CgSettings::new(p.tol, sys.len());
        let out = pcg(|x, y| sys.apply(x, y), &sys.diag, &b, None, mass, settings, deflate, project)?;
        Ok(WeakSolution {
            omega: Cochain { degree: r, values: out.x },
            iterations: out.iterations,
            residual: out.residual,
            history: out.history,
            harmonic_dim: basis.map_or(0, |b| b.dim()),
            compat_violation: compat,
        })
    }

    fn potential(&self, eta: &Cochain, bc: BoundaryCondition) -> Result<Cochain> {
        let p = VariationalProblem { degree: eta.degree, eta: eta.clone(), phi: None, psi: None, bc, tol: self.tol };
        Ok(self.solve_weak(&p)?.omega)
    }

    /// G_D: tangentially constrained, harmonic-orthogonal solution.
    pub fn dirichlet_potential(&self, eta: &Cochain) -> Result<Cochain> {
        self.potential(eta, BoundaryCondition::Tangential)
    }

    /// G_N: normally constrained counterpart.
    pub fn neumann_potential(&self, eta: &Cochain) -> Result<Cochain> {
        self.potential(eta, BoundaryCondition::Normal)
    }

    /// G_0: both traces constrained; the kernel is trivial.
    pub fn full_dirichlet_potential(&self, eta: &Cochain) -> Result<Cochain> {
        self.potential(eta, BoundaryCondition::FullDirichlet)
    }

    /// Natural problem without harmonic gate or deflation; callers remove
    /// the (large) natural kernel themselves.
    pub fn natural_potential(&self, eta: &Cochain) -> Result<Cochain> {
        self.potential(eta, BoundaryCondition::Natural)
    }

    /// Codifferential matching the condition: constrained for tangential and
    /// natural problems, full otherwise.
    pub fn codifferential(&self, c: &Cochain, bc: BoundaryCondition) -> Result<Cochain> {
        if bc.uses_delta_t() {
            self.dec.delta_t(c)
        } else {
            self.dec.delta(c)
        }
    }

    /// D_bc(a, b) = (da, db) + (delta a, delta b) with the condition's delta.
    pub fn energy(&self, a: &Cochain, b: &Cochain, bc: BoundaryCondition) -> Result<f64> {
        let dec = &self.dec;
        let mut s = 0.0;
        if a.degree < self.n() {
            s += dec.inner(&dec.d(a)?, &dec.d(b)?)?;
        }
        if a.degree > 0 {
            s += dec.inner(&self.codifferential(a, bc)?, &self.codifferential(b, bc)?)?;
        }
        Ok(s)
    }

    /// Weak residual max_zeta |D(omega, zeta) - rhs(zeta)| over unconstrained
    /// unit cochains of the given condition.
    pub fn weak_residual(&self, omega: &Cochain, p: &VariationalProblem) -> Result<f64> {
        let sys = System::new(&self.dec, omega.degree, p.bc);
        let b = sys.rhs(&p.eta, p.phi.as_ref(), p.psi.as_ref());
        let mut y = vec![0.0; sys.len()];
        sys.apply(&omega.values, &mut y);
        Ok(y.iter().zip(&b).zip(&sys.free).filter(|(_, f)| **f).fold(0.0f64, |m, ((a, c), _)| m.max((a - c).abs())))
    }

    /// |w|_{W^{1,p}} / (|dw|_p + |delta w|_p + |w|_1) on whitney samples.
    pub fn gaffney_ratio(&self, omega: &Cochain, bc: BoundaryCondition, p: &ExponentField) -> Result<f64> {
        let dec = &self.dec;
        dec.check(omega)?;
        if bc.pins_tangential() {
            let defect = dec.tangential_defect(omega);
            if defect > 0.0 {
                return Err(Error::Precondition { what: format!("{} trace must vanish", bc.name()), defect });
            }
        }
        let cx = &dec.cx;
        let s = whitney_sample(cx, omega)?;
        p.lattice().check_same(&s.lattice)?;
        let g = &dec.metric;
        let abs = s.norm_field(g);
        let mut grads: Vec<ScalarField> = Vec::new();
        for c in &s.components {
            let f = ScalarField { lattice: s.lattice.clone(), values: c.clone() };
            grads.extend(f.gradient());
        }
        let numer = luxemburg_norm(&abs, p)? + luxemburg_norm(&magnitude(&grads)?, p)?;
        let mut denom = abs.integral();
        if omega.degree < self.n() {
            denom += luxemburg_norm(&whitney_sample(cx, &dec.d(omega)?)?.norm_field(g), p)?;
        }
        if omega.degree > 0 {
            denom += luxemburg_norm(&whitney_sample(cx, &self.codifferential(omega, bc)?)?.norm_field(g), p)?;
        }
        if denom == 0.0 {
            return Err(invalid("Gaffney ratio of the zero form"));
        }
        Ok(numer / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::complex::CubicalComplex;
    use crate::forms::sampled::de_rham_map;
    use crate::rng::XorShift64;
    use core::f64::consts::PI;

    fn square(m: usize) -> Hodge {
        Hodge::new(Dec::euclidean(CubicalComplex::unit_box(2, &[m, m], 1.0 / m as f64).unwrap()), 1e-10).unwrap()
    }

    fn punctured(m: usize) -> Hodge {
        let q = m / 3;
        let cx = CubicalComplex::punctured_box(2, &[m, m], 1.0 / m as f64, &[(q, m - q), (q, m - q)]).unwrap();
        Hodge::new(Dec::euclidean(cx), 1e-10).unwrap()
    }

    fn random(dec: &Dec, r: usize, seed: u64) -> Cochain {
        let mut rng = XorShift64::new(seed);
        let mut c = dec.zeros(r);
        rng.fill_symmetric(&mut c.values);
        c
    }

    #[test]
    fn zero_data_gives_zero() {
        let hs = square(8);
        for bc in [BoundaryCondition::FullDirichlet, BoundaryCondition::Tangential, BoundaryCondition::Normal] {
            let p = VariationalProblem { degree: 1, eta: hs.dec.zeros(1), phi: None, psi: None, bc, tol: 1e-10 };
            assert_eq!(hs.solve_weak(&p).unwrap().omega.max_abs(), 0.0);
        }
    }

    #[test]
    fn betti_numbers_2d() {
        let hs = square(8);
        assert_eq!(hs.harmonic_fields(1, BoundaryCondition::Tangential).unwrap().dim(), 0);
        assert_eq!(hs.harmonic_fields(1, BoundaryCondition::Normal).unwrap().dim(), 0);
        assert_eq!(hs.harmonic_fields(2, BoundaryCondition::Tangential).unwrap().dim(), 1);
        assert_eq!(hs.harmonic_fields(0, BoundaryCondition::Normal).unwrap().dim(), 1);
        assert_eq!(hs.harmonic_fields(2, BoundaryCondition::Normal).unwrap().dim(), 0);
        let hp = punctured(9);
        for bc in [BoundaryCondition::Tangential, BoundaryCondition::Normal] {
            let b = hp.harmonic_fields(1, bc).unwrap();
            assert_eq!(b.dim(), 1, "{bc:?}");
            assert!(b.eigengap >= 10.0);
            let h = &b.fields[0];
            assert!((hp.dec.norm(h) - 1.0).abs() < 1e-10);
            assert!(hp.energy(h, h, bc).unwrap() < 1e-8);
        }
    }

    #[test]
    fn projector_laws() {
        let hp = punctured(9);
        let b = hp.harmonic_fields(1, BoundaryCondition::Normal).unwrap();
        let w = random(&hp.dec, 1, 3);
        let pw = project_harmonic(&w, &b, &hp.dec).unwrap();
        let ppw = project_harmonic(&pw, &b, &hp.dec).unwrap();
        assert!(ppw.minus(&pw).max_abs() < 1e-10);
        let rest = w.minus(&pw);
        assert!(hp.dec.inner(&rest, &b.fields[0]).unwrap().abs() < 1e-10);
        let h = b.fields[0].clone();
        assert!(project_harmonic(&h, &b, &hp.dec).unwrap().minus(&h).max_abs() < 1e-10);
    }

    #[test]
    fn manufactured_poisson_and_eigenvalue() {
        let mut errs = Vec::new();
        for m in [16usize, 32] {
            let hs = square(m);
            let u = |x: [f64; 3]| (PI * x[0]).sin() * (PI * x[1]).sin();
            let eta = de_rham_map(&hs.dec.cx, 0, |x| vec![2.0 * PI * PI * u(x)]);
            let w = hs.full_dirichlet_potential(&eta).unwrap();
            let exact = de_rham_map(&hs.dec.cx, 0, |x| vec![u(x)]);
            errs.push(hs.dec.norm(&w.minus(&exact)));
        }
        assert!((errs[0] / errs[1]).log2() > 1.9, "{errs:?}");
        let hs = square(32);
        let c = hs.poincare_constant(0, BoundaryCondition::FullDirichlet).unwrap();
        assert!((c * 2.0 * PI * PI - 1.0).abs() < 0.02, "{c}");
    }

    #[test]
    fn compatibility_gate_fires() {
        let hp = punctured(9);
        let b = hp.harmonic_fields(1, BoundaryCondition::Tangential).unwrap();
        match hp.dirichlet_potential(&b.fields[0]) {
            Err(Error::Compatibility { pairings, .. }) => assert!((pairings[0].abs() - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dirichlet_round_trip_and_symmetry() {
        let hs = square(10);
        let dec = &hs.dec;
        let mut w0 = random(dec, 1, 11);
        dec.zero_tangential(&mut w0);
        // eta = discrete Laplacian image of w0 (weak form), via the system
        let sys = System::new(dec, 1, BoundaryCondition::Tangential);
        let mut y = vec![0.0; sys.len()];
        sys.apply(&w0.values, &mut y);
        let eta = Cochain { degree: 1, values: y.iter().zip(dec.mass(1)).map(|(v, m)| v / m).collect() };
        let w = hs.dirichlet_potential(&eta).unwrap();
        assert!(w.minus(&w0).max_abs() < 1e-8 * w0.max_abs());
        let a = random(dec, 1, 1);
        let b = random(dec, 1, 2);
        let ga = hs.neumann_potential(&a).unwrap();
        let gb = hs.neumann_potential(&b).unwrap();
        let lhs = dec.inner(&ga, &b).unwrap();
        let rhs = dec.inner(&a, &gb).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn gaffney_ratio_is_homogeneous() {
        let hs = square(8);
        let mut w = random(&hs.dec, 1, 4);
        hs.dec.zero_tangential(&mut w);
        let p = ExponentField::constant(&hs.dec.cx.cube_lattice(), 2.0).unwrap();
        let a = hs.gaffney_ratio(&w, BoundaryCondition::Tangential, &p).unwrap();
        let b = hs.gaffney_ratio(&w.scaled(5.0), BoundaryCondition::Tangential, &p).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
        let one = Cochain { degree: 0, values: vec![1.0; hs.dec.count(0)] };
        assert!(matches!(hs.gaffney_ratio(&one, BoundaryCondition::FullDirichlet, &p), Err(Error::Precondition { .. })));
    }
}
