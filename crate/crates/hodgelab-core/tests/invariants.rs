use hodgelab_core::exponent::{luxemburg_norm, modular, ExponentSpec};
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::dec::{Cochain, Dec};
use hodgelab_core::lattice::{Lattice, ScalarField};
use proptest::prelude::*;

fn complex(n: usize, m: usize, punctured: bool) -> CubicalComplex {
    let cells = vec![m; n];
    let h = 1.0 / m as f64;
    if punctured && m >= 3 {
        let hole = vec![(1, m - 1); n];
        CubicalComplex::punctured_box(n, &cells, h, &hole).unwrap()
    } else {
        CubicalComplex::unit_box(n, &cells, h).unwrap()
    }
}

fn cochain(len: usize, degree: usize, seed: &[f64]) -> Cochain {
    Cochain { degree, values: (0..len).map(|i| seed[i % seed.len()] * (1.0 + (i % 7) as f64)).collect() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_squared_vanishes(n in 2usize..=3, m in 2usize..=5, punctured: bool, r in 0usize..2, seed in prop::collection::vec(-1.0f64..1.0, 1..16)) {
        let r = r.min(n - 2);
        let dec = Dec::euclidean(complex(n, m, punctured));
        let c = cochain(dec.count(r), r, &seed);
        let dd = dec.d(&dec.d(&c).unwrap()).unwrap();
        prop_assert!(dd.max_abs() <= 1e-13 * c.max_abs().max(1.0));
    }

    #[test]
    fn d_is_linear(m in 2usize..=6, a in -3.0f64..3.0, s1 in prop::collection::vec(-1.0f64..1.0, 1..9), s2 in prop::collection::vec(-1.0f64..1.0, 1..9)) {
        let dec = Dec::euclidean(complex(2, m, false));
        let x = cochain(dec.count(1), 1, &s1);
        let y = cochain(dec.count(1), 1, &s2);
        let mut ax_y = y.clone();
        ax_y.axpy(a, &x);
        let lhs = dec.d(&ax_y).unwrap();
        let mut rhs = dec.d(&y).unwrap();
        rhs.axpy(a, &dec.d(&x).unwrap());
        prop_assert!(lhs.minus(&rhs).max_abs() <= 1e-12 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn delta_t_is_adjoint_on_tangentially_zero(m in 2usize..=6, s1 in prop::collection::vec(-1.0f64..1.0, 1..9), s2 in prop::collection::vec(-1.0f64..1.0, 1..9)) {
        let dec = Dec::euclidean(complex(2, m, m >= 4));
        let mut a = cochain(dec.count(0), 0, &s1);
        dec.zero_tangential(&mut a);
        let b = cochain(dec.count(1), 1, &s2);
        let lhs = dec.inner(&dec.d(&a).unwrap(), &b).unwrap();
        let rhs = dec.inner(&a, &dec.delta_t(&b).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn luxemburg_is_homogeneous(scale in 0.01f64..100.0, left in 1.2f64..4.0, right in 1.2f64..4.0, s in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let lat = Lattice::cell_centered(2, &[8, 8], 0.125, &[0.0, 0.0]).unwrap();
        let f = ScalarField::new(lat.clone(), (0..lat.len()).map(|i| s[i % s.len()] + 0.1).collect()).unwrap();
        let p = ExponentSpec::Split { axis: 0, at: 0.5, left, right }.sample(&lat).unwrap();
        let base = luxemburg_norm(&f, &p).unwrap();
        let scaled = luxemburg_norm(&f.scaled(scale), &p).unwrap();
        prop_assert!((scaled - scale * base).abs() <= 1e-10 * scale * base);
        let m = modular(&f.scaled(1.0 / base), &p).unwrap();
        prop_assert!(m <= 1.0 && m >= 1.0 - 1e-9);
    }
}
