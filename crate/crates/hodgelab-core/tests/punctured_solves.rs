//! Singular solves on punctured boxes of several sizes: the harmonic field
//! must be deflated without the iteration drifting into the kernel.

use hodgelab_core::decomposition::Flavor;
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::dec::{Cochain, Dec};
use hodgelab_core::hodge::{BoundaryCondition, Hodge};
use hodgelab_core::rng::XorShift64;

#[test]
fn decompositions_converge_across_sizes() {
    for m in 10..=16 {
        let q = m / 3;
        let cx = CubicalComplex::punctured_box(2, &[m, m], 1.0 / m as f64, &[(q, m - q), (q, m - q)]).unwrap();
        let hd = Hodge::new(Dec::euclidean(cx), 1e-10).unwrap();
        for (flavor, bc) in [(Flavor::Tangential, BoundaryCondition::Tangential), (Flavor::Normal, BoundaryCondition::Normal)] {
            assert_eq!(hd.harmonic_fields(1, bc).unwrap().dim(), 1);
            let mut w = Cochain::zeros(1, hd.dec.count(1));
            XorShift64::new(m as u64).fill_symmetric(&mut w.values);
            if flavor == Flavor::Tangential {
                hd.dec.zero_tangential(&mut w);
            }
            let t = hd.hodge_decompose(&w, flavor).unwrap_or_else(|e| panic!("m = {m}, {flavor:?}: {e}"));
            let audit = hd.audit_decomposition(&w, &t).unwrap();
            assert!(audit.reconstruction <= 1e-8 && audit.orthogonality <= 1e-8, "m = {m}, {flavor:?}: {audit:?}");
        }
    }
}
