// Special functions checked against statrs as an independent implementation.
use housebench::eval::paired_t_test;
use housebench::stats::{chi2_sf, normal_cdf, t_cdf, t_two_sided_p};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

#[test]
fn t_cdf_matches_statrs() {
    for df in [1.0, 2.0, 3.5, 5.0, 19.0, 120.0] {
        let d = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [-8.0, -2.5, -0.3, 0.0, 0.7, 1.96, 4.0, 30.0] {
            let (a, b) = (t_cdf(t, df), d.cdf(t));
            assert!((a - b).abs() <= 1e-12 * b.max(1e-3), "df {df} t {t}: {a} vs {b}");
        }
    }
}

#[test]
fn paired_example_p_value() {
    // d = (1, 2, 3): t = 2 sqrt(3) on 2 df
    let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
    let want = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 2.0).unwrap().cdf(r.t));
    assert!((r.p_value - want).abs() < 1e-12);
    assert!((t_two_sided_p(r.t, 2.0) - r.p_value).abs() < 1e-15);
}

#[test]
fn chi2_and_normal_match_statrs() {
    for k in [1.0, 3.0, 10.0, 94.0] {
        let d = ChiSquared::new(k).unwrap();
        for x in [0.5, 2.0, 9.0, 80.0, 120.0] {
            let (a, b) = (chi2_sf(x, k), 1.0 - d.cdf(x));
            assert!((a - b).abs() <= 1e-10, "k {k} x {x}: {a} vs {b}");
        }
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    for z in [-6.0, -1.0, 0.0, 0.5, 2.575] {
        assert!((normal_cdf(z) - n.cdf(z)).abs() <= 1e-10, "z {z}");
    }
    // statrs is only good to ~1e-11 here, so also pin high-precision table values
    for (z, want) in [(-1.0, 0.158_655_253_931_457_05), (0.5, 0.691_462_461_274_013_1), (-6.0, 9.865_876_450_376_981e-10)] {
        let got = normal_cdf(z);
        assert!((got - want).abs() <= 1e-15 * want.max(1e-300) + 1e-17, "z {z}: {got} vs {want}");
    }
}
