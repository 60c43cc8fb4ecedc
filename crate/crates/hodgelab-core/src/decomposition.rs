//! Hodge decompositions and the first-order solvers built on the potentials:
//! cohomology resolution, gauge fixing, div-curl, Hodge-Dirac, the Poincaré
//! lemma with Dirichlet data, natural boundary conditions and the p(x)-Laplacian.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::exponent::ExponentField;
use crate::forms::complex::{Cell, CellClass};
use crate::forms::dec::{Cochain, Dec};
use crate::hodge::{project_harmonic, BoundaryCondition, Hodge, VariationalProblem};
use crate::lattice::ScalarField;
use crate::linalg::{mdot, pcg, CgSettings};

/// Relative size below which a precondition counts as satisfied.
pub const GATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Tangential,
    Normal,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tangential,
    Normal,
}

impl Side {
    fn bc(self) -> BoundaryCondition {
        match self {
            Side::Tangential => BoundaryCondition::Tangential,
            Side::Normal => BoundaryCondition::Normal,
        }
    }
}

/// omega = h + d alpha + delta beta.
#[derive(Debug, Clone, PartialEq)]
pub struct HodgeTriple {
    pub h: Cochain,
    pub alpha: Option<Cochain>,
    pub beta: Option<Cochain>,
    pub flavor: Flavor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionAudit {
    /// |omega - h - d alpha - delta beta| / |omega|
    pub reconstruction: f64,
    /// Largest normalized pairwise inner product of the three parts.
    pub orthogonality: f64,
    /// |delta alpha| / |omega|
    pub alpha_gauge: f64,
    /// |d beta| / |omega|
    pub beta_gauge: f64,
}

fn gate(what: &str, defect: f64, scale: f64) -> Result<()> {
    if defect > GATE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition { what: what.into(), defect });
    }
    Ok(())
}

fn tiny(x: f64) -> f64 {
    x.max(1e-300)
}

impl Hodge {
    fn delta_for(&self, c: &Cochain, flavor: Flavor) -> Result<Cochain> {
        match flavor {
            Flavor::Tangential => self.dec.delta_t(c),
            _ => self.dec.delta(c),
        }
    }

    /// Requires d c = 0 up to the gate.
    fn require_closed(&self, c: &Cochain, what: &str) -> Result<()> {
        if c.degree < self.n() {
            let dc = self.dec.d(c)?;
            gate(what, dc.max_abs(), 2.0 * self.n() as f64 * c.max_abs())?;
        }
        Ok(())
    }

    fn require_coclosed(&self, c: &Cochain, constrained: bool, what: &str) -> Result<()> {
        if c.degree > 0 {
            let dc = if constrained { self.dec.delta_t(c)? } else { self.dec.delta(c)? };
            gate(what, dc.max_abs(), self.dec.delta_magnitude(c)?.max_abs())?;
        }
        Ok(())
    }

    fn require_tangential(&self, c: &Cochain, what: &str) -> Result<()> {
        gate(what, self.dec.tangential_defect(c), c.max_abs())
    }

    /// Hodge decomposition in one of the three flavors. The tangential
    /// flavor needs omega in the tangentially constrained space.
    pub fn hodge_decompose(&self, omega: &Cochain, flavor: Flavor) -> Result<HodgeTriple> {
        let dec = &self.dec;
        dec.check(omega)?;
        let r = omega.degree;
        let n = self.n();
        match flavor {
            Flavor::Tangential | Flavor::Normal => {
                let bc = if flavor == Flavor::Tangential { BoundaryCondition::Tangential } else { BoundaryCondition::Normal };
                if flavor == Flavor::Tangential {
                    self.require_tangential(omega, "tangential trace of omega must vanish")?;
                }
                let basis = self.harmonic_fields(r, bc)?;
                let h = project_harmonic(omega, &basis, dec)?;
                let g = if flavor == Flavor::Tangential {
                    self.dirichlet_potential(&omega.minus(&h))?
                } else {
                    self.neumann_potential(&omega.minus(&h))?
                };
                let alpha = if r > 0 { Some(self.delta_for(&g, flavor)?) } else { None };
                let beta = if r < n { Some(dec.d(&g)?) } else { None };
                Ok(HodgeTriple { h, alpha, beta, flavor })
            }
            Flavor::Mixed => {
                let alpha = if r > 0 { Some(self.dirichlet_potential(&dec.delta_t(omega)?)?) } else { None };
                let beta = if r < n { Some(self.neumann_potential(&dec.d(omega)?)?) } else { None };
                let mut h = omega.clone();
                if let Some(a) = &alpha {
                    h = h.minus(&dec.d(a)?);
                }
                if let Some(b) = &beta {
                    h = h.minus(&dec.delta(b)?);
                }
                Ok(HodgeTriple { h, alpha, beta, flavor })
            }
        }
    }

    pub fn reconstruct(&self, t: &HodgeTriple) -> Result<(Cochain, Cochain)> {
        let dec = &self.dec;
        let da = match &t.alpha {
            Some(a) => dec.d(a)?,
            None => dec.zeros(t.h.degree),
        };
        let db = match &t.beta {
            Some(b) => self.delta_for(b, t.flavor)?,
            None => dec.zeros(t.h.degree),
        };
        Ok((da, db))
    }

    pub fn audit_decomposition(&self, omega: &Cochain, t: &HodgeTriple) -> Result<DecompositionAudit> {
        let dec = &self.dec;
        let (da, db) = self.reconstruct(t)?;
        let norm = tiny(dec.norm(omega));
        let rec = omega.minus(&t.h).minus(&da).minus(&db);
        let pairs = [(&t.h, &da), (&t.h, &db), (&da, &db)];
        let mut orth = 0.0f64;
        for (a, b) in pairs {
            orth = orth.max(dec.inner(a, b)?.abs() / (norm * norm));
        }
        let alpha_gauge = match &t.alpha {
            Some(a) if a.degree > 0 => {
                let flavor = if t.flavor == Flavor::Normal { Flavor::Normal } else { Flavor::Tangential };
                dec.norm(&self.delta_for(a, flavor)?) / norm
            }
            _ => 0.0,
        };
        let beta_gauge = match &t.beta {
            Some(b) if b.degree < self.n() => dec.norm(&dec.d(b)?) / norm,
            _ => 0.0,
        };
        Ok(DecompositionAudit { reconstruction: dec.norm(&rec) / norm, orthogonality: orth, alpha_gauge, beta_gauge })
    }
}

/// Which primitive to build and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolve {
    /// f closed, tangential: alpha = delta_T G_D[f], d alpha = f.
    S1,
    /// f closed: alpha = delta G_N[f], d alpha = f.
    S2,
    /// f co-closed: beta = d G_N[f], delta beta = f.
    S3,
    /// f tangential and co-closed in the constrained sense: beta = d G_D[f].
    S4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// delta_T G_D[d eta]: same d, co-closed.
    I0,
    /// delta G_N[d eta].
    I1,
    /// d G_N[delta eta]: same delta, closed.
    I2,
    /// d G_D[delta_T eta].
    I3,
}

impl Hodge {
    pub fn cohomology_resolve(&self, f: &Cochain, variant: Resolve) -> Result<Cochain> {
        let dec = &self.dec;
        dec.check(f)?;
        match variant {
            Resolve::S1 | Resolve::S2 => {
                if f.degree == 0 {
                    return Err(invalid("a 0-cochain has no primitive"));
                }
                self.require_closed(f, "f must be closed")?;
                if variant == Resolve::S1 {
                    self.require_tangential(f, "tangential trace of f must vanish")?;
                    dec.delta_t(&self.dirichlet_potential(f)?)
                } else {
                    dec.delta(&self.neumann_potential(f)?)
                }
            }
            Resolve::S3 | Resolve::S4 => {
                if f.degree == self.n() {
                    return Err(Error::TopDegree(self.n()));
                }
                if variant == Resolve::S3 {
                    self.require_coclosed(f, false, "f must be co-closed")?;
                    dec.d(&self.neumann_potential(f)?)
                } else {
                    self.require_tangential(f, "tangential trace of f must vanish")?;
                    self.require_coclosed(f, true, "f must be co-closed")?;
                    dec.d(&self.dirichlet_potential(f)?)
                }
            }
        }
    }

    pub fn gauge_fix(&self, eta: &Cochain, variant: Gauge) -> Result<Cochain> {
        let dec = &self.dec;
        dec.check(eta)?;
        match variant {
            Gauge::I0 => {
                self.require_tangential(eta, "tangential trace of eta must vanish")?;
                if eta.degree == 0 {
                    return Ok(dec.zeros(0));
                }
                dec.delta_t(&self.dirichlet_potential(&dec.d(eta)?)?)
            }
            Gauge::I1 => {
                if eta.degree == 0 {
                    return Ok(dec.zeros(0));
                }
                dec.delta(&self.neumann_potential(&dec.d(eta)?)?)
            }
            Gauge::I2 => {
                if eta.degree == self.n() {
                    return Ok(dec.zeros(eta.degree));
                }
                dec.d(&self.neumann_potential(&dec.delta(eta)?)?)
            }
            Gauge::I3 => {
                if eta.degree == self.n() {
                    return Ok(dec.zeros(eta.degree));
                }
                dec.d(&self.dirichlet_potential(&dec.delta_t(eta)?)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivCurl {
    pub omega: Cochain,
    /// |d omega - f| / |f|
    pub curl_residual: f64,
    /// |delta omega - v| / |v| on the unconstrained cells
    pub div_residual: f64,
    /// max |omega - phi| on constrained cells
    pub trace_residual: f64,
}

impl Hodge {
    /// d omega = f, delta omega = v with omega - phi constrained on the
    /// chosen side. `f` is absent in top degree and `v` in degree 0.
    pub fn solve_divcurl(&self, f: Option<&Cochain>, v: Option<&Cochain>, phi: &Cochain, side: Side) -> Result<DivCurl> {
        let dec = &self.dec;
        dec.check(phi)?;
        let r = phi.degree;
        let n = self.n();
        if (r < n) != f.is_some() || (r > 0) != v.is_some() {
            return Err(invalid("f is required below top degree and v above degree 0"));
        }
        let tangential = side == Side::Tangential;
        let mut omega = phi.clone();
        if let Some(f) = f {
            dec.check(f)?;
            if f.degree != r + 1 {
                return Err(invalid("f must have degree r+1"));
            }
            self.require_closed(f, "d f must vanish")?;
            let rest = f.minus(&dec.d(phi)?);
            if tangential {
                self.require_tangential(&rest, "tangential trace of f - d phi must vanish")?;
                omega = omega.plus(&dec.delta_t(&self.dirichlet_potential(&rest)?)?);
            } else {
                omega = omega.plus(&dec.delta(&self.neumann_potential(&rest)?)?);
            }
        }
        if let Some(v) = v {
            dec.check(v)?;
            if v.degree + 1 != r {
                return Err(invalid("v must have degree r-1"));
            }
            if tangential {
                let mut y = v.minus(&dec.delta(phi)?);
                dec.zero_tangential(&mut y);
                self.require_coclosed(&y, true, "delta v must vanish")?;
                omega = omega.plus(&dec.d(&self.dirichlet_potential(&y)?)?);
            } else {
                self.require_coclosed(v, false, "delta v must vanish")?;
                let y = v.minus(&dec.delta(phi)?);
                omega = omega.plus(&dec.d(&self.neumann_potential(&y)?)?);
            }
        }
        let curl_residual = match f {
            Some(f) => dec.norm(&dec.d(&omega)?.minus(f)) / tiny(dec.norm(f).max(dec.norm(&dec.d(phi)?))),
            None => 0.0,
        };
        let div_residual = match v {
            Some(v) => {
                let (mut got, mut want) = if tangential {
                    (dec.delta_t(&omega)?, v.clone())
                } else {
                    (dec.delta(&omega)?, v.clone())
                };
                if tangential {
                    dec.zero_tangential(&mut want);
                    dec.zero_tangential(&mut got);
                }
                let floor = dec.norm(&dec.delta_magnitude(&omega)?);
                dec.norm(&got.minus(&want)) / tiny(dec.norm(&want).max(dec.norm(&dec.delta(phi)?)).max(floor))
            }
            None => 0.0,
        };
        let trace_residual = if tangential { dec.tangential_defect(&omega.minus(phi)) } else { 0.0 };
        Ok(DivCurl { omega, curl_residual, div_residual, trace_residual })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracSolution {
    /// omega[j] has degree j.
    pub omega: Vec<Cochain>,
    /// Relative residual of d omega^{j-1} + alpha delta omega^{j+1} = f^j per degree.
    pub residuals: Vec<f64>,
    /// Largest |(omega^j, h)| over the harmonic bases.
    pub harmonic_pairing: f64,
}

impl Hodge {
    /// Solves (d + alpha delta) omega = f on mixed-degree collections.
    pub fn solve_hodge_dirac(&self, f: &[Cochain], alpha: f64, side: Side) -> Result<DiracSolution> {
        let dec = &self.dec;
        let n = self.n();
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(invalid("alpha must be a nonzero finite number"));
        }
        if f.len() != n + 1 {
            return Err(invalid(format!("expected {} degrees, got {}", n + 1, f.len())));
        }
        for (j, fj) in f.iter().enumerate() {
            if fj.degree != j {
                return Err(invalid("f[j] must have degree j"));
            }
            dec.check(fj)?;
            if side == Side::Tangential {
                self.require_tangential(fj, "tangential trace of f must vanish")?;
            }
        }
        let bc = side.bc();
        let g: Vec<Cochain> = f
            .iter()
            .map(|fj| if side == Side::Tangential { self.dirichlet_potential(fj) } else { self.neumann_potential(fj) })
            .collect::<Result<_>>()?;
        let delta = |c: &Cochain| self.codifferential(c, bc);
        let mut omega = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut w = dec.zeros(j);
            if j > 0 {
                w.axpy(1.0 / alpha, &dec.d(&g[j - 1])?);
            }
            if j < n {
                w = w.plus(&delta(&g[j + 1])?);
            }
            omega.push(w);
        }
        let scale = tiny(f.iter().map(|c| dec.norm(c)).fold(0.0, f64::max));
        let mut residuals = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut lhs = dec.zeros(j);
            if j > 0 {
                lhs = lhs.plus(&dec.d(&omega[j - 1])?);
            }
            if j < n {
                lhs.axpy(alpha, &delta(&omega[j + 1])?);
            }
            let mut diff = lhs.minus(&f[j]);
            if side == Side::Tangential {
                dec.zero_tangential(&mut diff);
            }
            residuals.push(dec.norm(&diff) / scale);
        }
        let mut harmonic_pairing = 0.0f64;
        for w in &omega {
            let basis = self.harmonic_fields(w.degree, bc)?;
            for h in &basis.fields {
                harmonic_pairing = harmonic_pairing.max(dec.inner(w, h)?.abs());
            }
        }
        Ok(DiracSolution { omega, residuals, harmonic_pairing })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareDirichlet {
    pub omega: Cochain,
    /// |d omega - f| / |f|
    pub exactness_residual: f64,
    /// max |omega - phi| / h^r over cells touching the boundary.
    pub trace_residual: f64,
}

impl Hodge {
    /// d omega = f with the full trace of omega matching phi. The correction
    /// d gamma is built from a one-layer extension: gamma lives on the cells
    /// one step inside and is fitted by least squares where layers meet.
    pub fn poincare_dirichlet(&self, f: &Cochain, phi: &Cochain) -> Result<PoincareDirichlet> {
        let dec = &self.dec;
        let cx = &dec.cx;
        dec.check(f)?;
        dec.check(phi)?;
        let r = phi.degree;
        if f.degree != r + 1 {
            return Err(invalid("f must have degree r+1"));
        }
        self.require_closed(f, "d f must vanish")?;
        let rest = f.minus(&dec.d(phi)?);
        self.require_tangential(&rest, "tangential trace of f - d phi must vanish")?;
        let a = dec.delta_t(&self.dirichlet_potential(&rest)?)?;
        let mut omega = phi.plus(&a);
        if r > 0 {
            let gamma = self.boundary_layer_primitive(&a)?;
            omega = omega.minus(&dec.d(&gamma)?);
        }
        let exactness_residual = dec.norm(&dec.d(&omega)?.minus(f)) / tiny(dec.norm(f));
        let hr = cx.h.powi(r as i32);
        let diff = omega.minus(phi);
        let trace_residual = cx
            .classes(r)
            .iter()
            .zip(&diff.values)
            .filter(|(c, _)| **c != CellClass::Interior)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs() / hr));
        Ok(PoincareDirichlet { omega, exactness_residual, trace_residual })
    }

    /// Least-squares gamma in the tangentially constrained (r-1)-space with
    /// d gamma = a on the cells touching the boundary, supported on their faces.
    fn boundary_layer_primitive(&self, a: &Cochain) -> Result<Cochain> {
        let dec = &self.dec;
        let cx = &dec.cx;
        let r = a.degree;
        let inc = cx.incidence(r - 1);
        let rows: Vec<usize> = (0..cx.count(r)).filter(|&i| cx.classes(r)[i] == CellClass::NormalAdjacent).collect();
        let mut unknown = vec![false; cx.count(r - 1)];
        for &row in &rows {
            for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                let c = inc.col[k] as usize;
                if cx.classes(r - 1)[c] != CellClass::Tangential {
                    unknown[c] = true;
                }
            }
        }
        let m = cx.count(r - 1);
        let apply_d = |x: &[f64], out: &mut Vec<f64>| {
            out.clear();
            for &row in &rows {
                let mut s = 0.0;
                for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                    let c = inc.col[k] as usize;
                    if unknown[c] {
                        s += inc.sign[k] * x[c];
                    }
                }
                out.push(s);
            }
        };
        let apply_dt = |y: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for (j, &row) in rows.iter().enumerate() {
                for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                    let c = inc.col[k] as usize;
                    if unknown[c] {
                        out[c] += inc.sign[k] * y[j];
                    }
                }
            }
        };
        let target: Vec<f64> = rows.iter().map(|&i| a.values[i]).collect();
        let mut b = vec![0.0; m];
        apply_dt(&target, &mut b);
        let mut diag = vec![1.0; m];
        for &row in &rows {
            for k in inc.row_ptr[row]..inc.row_ptr[row + 1] {
                let c = inc.col[k] as usize;
                if unknown[c] {
                    diag[c] += 1.0;
                }
            }
        }
        for (d, u) in diag.iter_mut().zip(&unknown) {
            if *u {
                *d -= 1.0;
            }
        }
        let ones = vec![1.0; m];
        let normal = |x: &[f64], y: &mut [f64]| {
            let mut t = Vec::with_capacity(rows.len());
            apply_d(x, &mut t);
            apply_dt(&t, y);
            for i in 0..m {
                if !unknown[i] {
                    y[i] = 0.0;
                }
            }
        };
        let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale == 0.0 {
            return Ok(dec.zeros(r - 1));
        }
        let bs: Vec<f64> = b.iter().map(|v| v / scale).collect();
        let settings = CgSettings { tol: 1e-14, max_iter: 20 * m.max(10), deflate_every: usize::MAX };
        let out = pcg(normal, &diag, &bs, None, &ones, settings, |_| {}, |_| {})?;
        Ok(Cochain { degree: r - 1, values: out.x.iter().map(|v| v * scale).collect() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSolution {
    pub omega: Cochain,
    /// Weak residual against every unit cochain.
    pub weak_residual: f64,
    /// |P_mixed (eta - delta_T psi - d phi)| relative to the data.
    pub compat: f64,
    /// |t delta omega - t phi| one layer inside, in form units.
    pub t_delta_residual: f64,
    /// |n d omega - n psi| on cells crossing the boundary, in form units.
    pub n_d_residual: f64,
    /// |P_mixed omega| / |omega|
    pub harmonic_part: f64,
}

impl Hodge {
    /// Harmonic part of the mixed decomposition: projection onto
    /// ker d intersected with ker delta_T.
    pub fn mixed_projection(&self, c: &Cochain) -> Result<Cochain> {
        Ok(self.hodge_decompose(c, Flavor::Mixed)?.h)
    }

    /// Natural problem with t delta omega = t phi and n d omega = n psi;
    /// phi is an (r-1)-cochain and psi an (r+1)-cochain.
    pub fn solve_natural(&self, eta: &Cochain, phi: Option<&Cochain>, psi: Option<&Cochain>) -> Result<NaturalSolution> {
        let dec = &self.dec;
        let cx = &dec.cx;
        dec.check(eta)?;
        let r = eta.degree;
        let n = self.n();
        let mut eff = eta.clone();
        if let Some(phi) = phi {
            dec.check(phi)?;
            if r == 0 || phi.degree + 1 != r {
                return Err(invalid("phi must have degree r-1"));
            }
            eff = eff.minus(&dec.d(phi)?);
        }
        if let Some(psi) = psi {
            dec.check(psi)?;
            if psi.degree != r + 1 || r >= n {
                return Err(invalid("psi must have degree r+1"));
            }
            eff = eff.minus(&dec.delta_t(psi)?);
        }
        let h = self.mixed_projection(&eff)?;
        let eff_norm = dec.norm(&eff);
        let compat = dec.norm(&h);
        let bound = GATE * eff_norm.max(1.0);
        if compat > bound {
            return Err(Error::Compatibility { pairings: vec![compat], bound });
        }
        let problem = VariationalProblem {
            degree: r,
            eta: eff.clone(),
            phi: psi.cloned(),
            psi: phi.cloned(),
            bc: BoundaryCondition::Natural,
            tol: self.tol,
        };
        let omega = if phi.is_none() && psi.is_none() {
            let mut w = dec.zeros(r);
            if r > 0 {
                let inner = dec.delta_t(&self.dirichlet_potential(eta)?)?;
                w = w.plus(&dec.d(&self.dirichlet_potential(&inner)?)?);
            }
            if r < n {
                let inner = dec.d(&self.neumann_potential(eta)?)?;
                w = w.plus(&dec.delta(&self.neumann_potential(&inner)?)?);
            }
            w
        } else {
            let w = self.solve_weak(&problem)?.omega;
            let hw = self.mixed_projection(&w)?;
            w.minus(&hw)
        };
        let weak_residual = self.weak_residual(&omega, &problem)?;
        let harmonic_part = dec.norm(&self.mixed_projection(&omega)?) / tiny(dec.norm(&omega));
        // boundary residuals in form units
        let mut t_delta_residual = 0.0f64;
        if let Some(phi) = phi {
            let dw = dec.delta_t(&omega)?;
            let hr = cx.h.powi(r as i32 - 1);
            for face in cx.boundary_faces() {
                let fcell = cx.cell(n - 1, face.cell);
                let inward: isize = if face.outward > 0.0 { -1 } else { 1 };
                for (idx, cell) in faces_of(cx, fcell, r - 1) {
                    if cx.classes(r - 1)[idx] != CellClass::Tangential {
                        continue;
                    }
                    let mut c = cell.corner;
                    let shifted = c[face.axis] as isize + inward;
                    if shifted < 0 {
                        continue;
                    }
                    c[face.axis] = shifted as usize;
                    if let Some(j) = cx.find(Cell { corner: c, axes: cell.axes }) {
                        if cx.classes(r - 1)[j] != CellClass::Tangential {
                            t_delta_residual = t_delta_residual.max((dw.values[j] - phi.values[j]).abs() / hr);
                        }
                    }
                }
            }
        }
        let mut n_d_residual = 0.0f64;
        if let Some(psi) = psi {
            let dw = dec.d(&omega)?;
            let hr = cx.h.powi(r as i32 + 1);
            for (i, c) in cx.classes(r + 1).iter().enumerate() {
                if *c == CellClass::NormalAdjacent {
                    n_d_residual = n_d_residual.max((dw.values[i] - psi.values[i]).abs() / hr);
                }
            }
        }
        Ok(NaturalSolution {
            omega,
            weak_residual,
            compat: compat / tiny(eff_norm),
            t_delta_residual,
            n_d_residual,
            harmonic_part,
        })
    }
}

/// All k-faces of a cell, with their indices.
fn faces_of(cx: &crate::forms::complex::CubicalComplex, cell: Cell, k: usize) -> Vec<(usize, Cell)> {
    let span: Vec<usize> = (0..cx.n).filter(|a| cell.axes >> a & 1 == 1).collect();
    let mut out = Vec::new();
    for sub in 0..(1usize << span.len()) {
        if (sub as u32).count_ones() as usize != k {
            continue;
        }
        let mut axes = 0u8;
        for (j, &a) in span.iter().enumerate() {
            if sub >> j & 1 == 1 {
                axes |= 1 << a;
            }
        }
        let rest: Vec<usize> = span.iter().copied().filter(|a| axes >> a & 1 == 0).collect();
        for off in 0..(1usize << rest.len()) {
            let mut c = cell.corner;
            for (j, &a) in rest.iter().enumerate() {
                if off >> j & 1 == 1 {
                    c[a] += 1;
                }
            }
            let f = Cell { corner: c, axes };
            if let Some(i) = cx.find(f) {
                out.push((i, f));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PxSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Regularization of |du| near zero.
    pub eps: f64,
    pub restart: usize,
}

impl Default for PxSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 20000, eps: 1e-10, restart: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PxSolution {
    pub u: Cochain,
    pub energy: f64,
    pub energy_history: Vec<f64>,
    /// max over constrained unit tests of |(a|du|^{p-2}du - F, d zeta)|
    pub el_residual: f64,
    pub iterations: usize,
}

/// Coefficients and weights of the cell-wise p(x)-energy on (r+1)-cells.
struct PxEnergy<'a> {
    dec: &'a Dec,
    r: usize,
    /// sqrt(G) / h^{r+1}: cochain value to pointwise magnitude
    scale: Vec<f64>,
    /// sqrt(g) h^n times the dual fraction
    vol: Vec<f64>,
    a: Vec<f64>,
    p: Vec<f64>,
    /// M F
    mf: Vec<f64>,
    eps: f64,
    free: Vec<bool>,
}

impl PxEnergy<'_> {
    fn du(&self, u: &[f64]) -> Vec<f64> {
        let inc = self.dec.cx.incidence(self.r);
        let mut out = vec![0.0; inc.rows];
        inc.apply(u, &mut out);
        out
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let du = self.du(u);
        let mut e = 0.0;
        for i in 0..du.len() {
            let v = self.scale[i] * du[i];
            let p = self.p[i];
            e += self.vol[i] * self.a[i] / p * (v * v + self.eps * self.eps).powf(0.5 * p) - self.mf[i] * du[i];
        }
        e
    }

    /// E(u + t dir) - E(u), summed cell by cell so that small changes are
    /// not lost against the size of E.
    fn energy_change(&self, du: &[f64], ddir: &[f64], t: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..du.len() {
            let v = self.scale[i] * du[i];
            let dv = self.scale[i] * t * ddir[i];
            let p = self.p[i];
            let s0 = v * v + self.eps * self.eps;
            let ds = dv * (2.0 * v + dv);
            let grow = (0.5 * p * (ds / s0).ln_1p()).exp_m1();
            total += self.vol[i] * self.a[i] / p * s0.powf(0.5 * p) * grow - self.mf[i] * t * ddir[i];
        }
        total
    }

    /// Flux per (r+1)-cell: derivative of the energy with respect to du.
    fn flux(&self, u: &[f64]) -> Vec<f64> {
        let du = self.du(u);
        (0..du.len())
            .map(|i| {
                let v = self.scale[i] * du[i];
                let p = self.p[i];
                self.vol[i] * self.a[i] * (v * v + self.eps * self.eps).powf(0.5 * p - 1.0) * v * self.scale[i] - self.mf[i]
            })
            .collect()
    }

    /// Euclidean gradient d^T flux, zero on pinned cells.
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let inc = self.dec.cx.incidence(self.r);
        let fl = self.flux(u);
        let mut g = vec![0.0; inc.cols];
        inc.apply_transpose(&fl, &mut g);
        for (v, f) in g.iter_mut().zip(&self.free) {
            if !*f {
                *v = 0.0;
            }
        }
        g
    }
}

/// Average of a cube-center field over the active cubes incident to a cell.
fn cell_average(dec: &Dec, field: &ScalarField, r: usize) -> Result<Vec<f64>> {
    let cx = &dec.cx;
    let lat = cx.cube_lattice();
    if !(lat.n == field.lattice.n && lat.dims == field.lattice.dims && lat.h == field.lattice.h && lat.origin == field.lattice.origin) {
        return Err(Error::GridMismatch("coefficient fields must live on the cube centers".into()));
    }
    let n = cx.n;
    let mut out = Vec::with_capacity(cx.count(r));
    for cell in cx.cells(r) {
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
            if (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < cx.cells_per_axis[k]) {
                let q = cx.cube_index([c[0] as usize, c[1] as usize, c[2] as usize]);
                if cx.cube_mask[q] {
                    s += field.values[q];
                    cnt += 1.0;
                }
            }
        }
        out.push(s / cnt);
    }
    Ok(out)
}

impl Hodge {
    /// Minimizes sum (a/p)|du|^p - <F, du> over u0 + (tangentially zero,
    /// delta_T-free) cochains by Polak-Ribière conjugate gradients with an
    /// Armijo backtracking line search. `start` must lie in the same affine
    /// space (defaults to u0).
    pub fn solve_px_laplacian(
        &self,
        u0: &Cochain,
        force: &Cochain,
        a: &ScalarField,
        p: &ExponentField,
        start: Option<&Cochain>,
        settings: PxSettings,
    ) -> Result<PxSolution> {
        let dec = &self.dec;
        let cx = &dec.cx;
        dec.check(u0)?;
        let r = u0.degree;
        let n = self.n();
        if !cx.cube_mask.iter().all(|m| *m) {
            return Err(Error::Unsupported("the p(x)-Laplacian minimizer needs a contractible (full box) domain".into()));
        }
        let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, act) in a.values.iter().zip(&a.lattice.active) {
            if *act {
                amin = amin.min(*v);
                amax = amax.max(*v);
            }
        }
        if !(amin > 0.0) || !amax.is_finite() {
            return Err(invalid(format!("coefficient a must lie in [gamma, L] with gamma > 0 (found [{amin}, {amax}])")));
        }
        if r == n {
            return Ok(PxSolution { u: u0.clone(), energy: 0.0, energy_history: vec![0.0], el_residual: 0.0, iterations: 0 });
        }
        dec.check(force)?;
        if force.degree != r + 1 {
            return Err(invalid("F must have degree r+1"));
        }
        let mut u = u0.clone();
        if let Some(s) = start {
            dec.check(s)?;
            let diff = s.minus(u0);
            let scale = s.max_abs().max(u0.max_abs());
            gate("start must differ from u0 by a tangentially zero cochain", dec.tangential_defect(&diff), scale)?;
            if r > 0 {
                let dd = dec.delta_t(&diff)?;
                gate("start must differ from u0 by a delta_T-free cochain", dd.max_abs(), dec.delta_magnitude(&diff)?.max_abs())?;
            }
            u = s.clone();
        }
        let hr = cx.h.powi(r as i32 + 1);
        let full = (1usize << (n - r - 1)) as f64;
        let mut scale = Vec::with_capacity(cx.count(r + 1));
        let mut vol = Vec::with_capacity(cx.count(r + 1));
        for (i, cell) in cx.cells(r + 1).iter().enumerate() {
            let x = cx.barycenter(*cell);
            scale.push(dec.metric.inverse_weight(x, cell.axes).sqrt() / hr);
            vol.push(dec.metric.sqrt_det(x, n) * cx.h.powi(n as i32) * cx.multiplicity(r + 1, i) as f64 / full);
        }
        let av = cell_average(dec, a, r + 1)?;
        let pv = cell_average(dec, &p.field, r + 1)?;
        let mf: Vec<f64> = force.values.iter().zip(dec.mass(r + 1)).map(|(f, m)| f * m).collect();
        let free: Vec<bool> = cx.classes(r).iter().map(|c| *c != CellClass::Tangential).collect();
        let en = PxEnergy { dec, r, scale, vol, a: av, p: pv, mf, eps: settings.eps, free };
        let mass = dec.mass(r);
        let el = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x = u.values.clone();
        let mut e = en.energy(&x);
        let mut history = vec![e];
        let mut g = en.gradient(&x);
        // M-preconditioned direction; for r >= 1 it is delta_T of a flux and
        // therefore stays in ker delta_T.
        let mut z: Vec<f64> = g.iter().zip(mass).map(|(v, m)| v / m).collect();
        let mut dir: Vec<f64> = z.iter().map(|v| -v).collect();
        let mut step = 1.0;
        let mut iterations = 0;
        while el(&g) > settings.tol {
            if iterations >= settings.max_iter {
                return Err(Error::NotConverged { iterations, last: el(&g), history });
            }
            iterations += 1;
            let mut slope = crate::linalg::dot(&g, &dir);
            if slope >= 0.0 {
                dir = z.iter().map(|v| -v).collect();
                slope = crate::linalg::dot(&g, &dir);
            }
            // secant estimate of the minimizing step from the directional derivative
            let probe: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let slope_probe = crate::linalg::dot(&en.gradient(&probe), &dir);
            let mut t = if slope_probe > slope { -slope * step / (slope_probe - slope) } else { 2.0 * step };
            if !(t > 0.0) || !t.is_finite() {
                t = step;
            }
            let mut accepted = None;
            let (dx, ddir) = (en.du(&x), en.du(&dir));
            for _ in 0..80 {
                let change = en.energy_change(&dx, &ddir, t);
                if change <= 1e-4 * t * slope {
                    let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                    accepted = Some((trial, e + change));
                    break;
                }
                t *= 0.5;
            }
            let (nx, ne) = match accepted {
                Some(v) => v,
                None => {
                    // no descent measurable in floating point: accept if already stationary
                    if el(&g) <= 10.0 * settings.tol {
                        break;
                    }
                    return Err(Error::LineSearch { iteration: iterations, energy: e, history });
                }
            };
            step = t;
            x = nx;
            e = ne;
            history.push(e);
            let g_new = en.gradient(&x);
            let z_new: Vec<f64> = g_new.iter().zip(mass).map(|(v, m)| v / m).collect();
            let num = crate::linalg::dot(&g_new, &z_new) - crate::linalg::dot(&g_new, &z);
            let den = crate::linalg::dot(&g, &z);
            let mut beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
            if iterations % settings.restart == 0 {
                beta = 0.0;
            }
            for i in 0..dir.len() {
                dir[i] = -z_new[i] + beta * dir[i];
            }
            g = g_new;
            z = z_new;
        }
        let _ = mdot;
        u.values = x;
        let energy = en.energy(&u.values);
        Ok(PxSolution { u, energy, energy_history: history, el_residual: el(&g), iterations })
    }
}
