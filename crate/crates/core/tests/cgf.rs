mod common;

use common::p;
use ouldp::cgf::{cgf_exact, lambda_cgf_exact, restricted_h, restricted_l, script_h, script_l};
use ouldp::montecarlo::{mc_mean, z_functional, McConfig};
use ouldp::rate::lambda_cgf;
use ouldp::SimGrid;

#[test]
fn finite_horizon_cgf_matches_simulation() {
    let (a, b, t) = (0.3, 0.15, 2.0);
    let m = p(-1.0, 0.5);
    let cfg = McConfig::new(200_000, SimGrid::new(t, 400).unwrap(), 12).unwrap();
    let est = mc_mean(&m, &cfg, |s| Ok(z_functional(s, a, b).exp())).unwrap();
    let mc = est.mean.ln() / t;
    let exact = cgf_exact(&m, a, b, t).unwrap().value_exact;
    // Delta method for the log plus a small allowance for the grid.
    let tol = 4.0 * est.stderr / est.mean / t + 2e-3;
    eprintln!("mc {mc} exact {exact} tol {tol}");
    assert!((mc - exact).abs() < tol, "{mc} vs {exact}");
}

#[test]
fn expansion_remainder_stays_bounded() {
    let m = p(-1.0, 0.4);
    for (a, b) in [(0.3, 0.2), (-0.5, 0.1), (0.2, -0.4)] {
        let rem: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&t| cgf_exact(&m, a, b, t).unwrap().remainder)
            .collect();
        eprintln!("({a},{b}) remainders {rem:?}");
        let r = cgf_exact(&m, a, b, 80.0).unwrap();
        assert_eq!(r.leading, script_l(&m, a, b).unwrap());
        assert_eq!(r.correction, script_h(&m, a, b).unwrap());
        // T^2 times the remainder is O(1), so the error after two terms is O(1/T^2).
        assert!(rem.iter().all(|r| r.is_finite()));
        assert!((rem[3] - rem[2]).abs() <= (rem[1] - rem[0]).abs() + 1e-9);
    }
}

#[test]
fn restricted_functions_are_the_cgf_on_the_line() {
    let m = p(-2.0, 0.7);
    for c in [-3.0, -1.0, 0.5] {
        for a in [0.1, 0.4] {
            assert_eq!(restricted_l(&m, c, a).unwrap(), script_l(&m, a, -a * c).unwrap());
            assert_eq!(restricted_h(&m, c, a).unwrap(), script_h(&m, a, -a * c).unwrap());
        }
    }
}

#[test]
fn triplet_cgf_converges_with_horizon() {
    let m = p(-1.5, 0.3);
    let err = |a: f64, b: f64, c: f64, t: f64| lambda_cgf_exact(&m, a, b, c, t).unwrap() - lambda_cgf(&m, a, b, c).value();
    // Without the terminal coordinate the error is exactly of order 1/T.
    for (b, c) in [(0.3, 0.1), (-1.0, 0.5), (0.0, -0.2)] {
        let scaled: Vec<f64> = [10.0, 160.0, 2560.0].iter().map(|&t| t * err(0.0, b, c, t)).collect();
        assert!((scaled[2] - scaled[1]).abs() < 1e-6 * (1.0 + scaled[1].abs()), "{scaled:?}");
    }
    // The stationary mean enters through a sqrt(T) X_T, giving a 1/sqrt(T) term.
    for (a, b, c) in [(0.2, 0.3, 0.1), (-0.4, -1.0, 0.5)] {
        let scaled: Vec<f64> = [160.0f64, 640.0, 2560.0].iter().map(|&t| t.sqrt() * err(a, b, c, t)).collect();
        assert!((scaled[2] - scaled[1]).abs() < 0.5 * (scaled[1] - scaled[0]).abs() + 1e-12, "{scaled:?}");
        assert!(err(a, b, c, 2560.0).abs() < 0.01);
    }
    let exact_shift = 0.2 * 0.3 / 1.5;
    assert!((2560f64.sqrt() * err(0.2, 0.0, 0.0, 2560.0) - exact_shift).abs() < 5e-3);
}
