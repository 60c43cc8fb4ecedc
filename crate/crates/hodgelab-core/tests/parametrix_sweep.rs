use hodgelab_core::forms::metric::MetricField;
use hodgelab_core::parametrix::{coefficients_from_metric, radius_sweep, test_metric, Patch, PatchBc, SweepSettings};
use hodgelab_core::exponent::ExponentSpec;

#[test]
fn contraction_shrinks_with_radius() {
    for (patch, degree) in [(Patch::Interior, 0), (Patch::Half, 1)] {
        let s = SweepSettings { patch, degree, cells_per_radius: 16, ..SweepSettings::default() };
        let sweep = radius_sweep(&test_metric(), &[1.0, 0.5, 0.25, 0.125], &s).unwrap();
        assert!(sweep.monotone, "{sweep:?}");
        assert!(sweep.threshold.unwrap() >= 0.5, "{sweep:?}");
        for w in sweep.rows.windows(2) {
            let ratio = w[0].estimate / w[1].estimate;
            if w[0].estimate <= 0.5 {
                assert!((1.4..=2.6).contains(&ratio), "{ratio}");
            }
        }
        for row in sweep.rows.iter().filter(|r| r.estimate <= 0.5) {
            assert!(row.series_terms <= 40 && row.rel_diff <= 1e-4, "{row:?}");
        }
    }
}

#[test]
fn flat_chart_has_no_correction() {
    let lp = coefficients_from_metric(&MetricField::euclidean(), 1, Patch::Half, PatchBc::Neumann, 0.5, 8, &ExponentSpec::Constant(3.0)).unwrap();
    let est = lp.contraction_norm_estimate(20, 9).unwrap();
    assert!(est.norm <= 1e-12);
    let data = lp.sample_data().unwrap();
    let cmp = lp.compare_with_direct(&data, est.norm).unwrap();
    assert!(cmp.rel_diff <= 1e-6, "{cmp:?}");
}
