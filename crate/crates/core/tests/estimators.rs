mod common;

use common::p;
use ouldp::estimators::{discrepancy, equivalence_bound, mle, mle_tilde, SuffStats};
use ouldp::montecarlo::{estimator_sample, McConfig};
use ouldp::SimGrid;
use proptest::prelude::*;

#[test]
fn mle_is_consistent_at_long_horizons() {
    let m = p(-1.0, 0.5);
    let cfg = McConfig::new(200, SimGrid::new(400.0, 40_000).unwrap(), 21).unwrap();
    let est = estimator_sample(&m, &cfg).unwrap();
    let n = est.len() as f64;
    let th = est.iter().map(|e| e.0).sum::<f64>() / n;
    let g = est.iter().map(|e| e.1).sum::<f64>() / n;
    // Sampling sd of the averages is about sqrt(2 / (400 n)) and sqrt(1.5 / (400 n)).
    assert!((th + 1.0).abs() < 0.02, "{th}");
    assert!((g - 0.5).abs() < 0.02, "{g}");
}

fn stats() -> impl Strategy<Value = SuffStats> {
    (1.0f64..200.0, -5.0f64..5.0, -3.0f64..3.0, 0.05f64..4.0).prop_map(|(t, x_t, mean, spread)| {
        let int_x = mean * t;
        let int_x2 = (spread + mean * mean) * t;
        SuffStats::new(x_t, int_x, int_x2, t).unwrap()
    })
}

proptest! {
    #[test]
    fn discrepancy_identities_hold(s in stats()) {
        let d = discrepancy(&s).unwrap();
        let (th, gh) = mle(&s).unwrap();
        let (tt, gt) = mle_tilde(&s).unwrap();
        prop_assert!((d.d_theta - (th - tt)).abs() <= 1e-9 * (th.abs() + tt.abs()).max(d.d_theta.abs()));
        prop_assert!((d.d_gamma - (gh - gt)).abs() <= 1e-9 * (gh.abs() + gt.abs()).max(d.d_gamma.abs()));
    }

    #[test]
    fn equivalence_bound_holds(s in stats()) {
        let b = equivalence_bound(&s).unwrap();
        prop_assert!(b.holds(), "{b:?}");
        prop_assert!(b.xi >= s.mean().abs() && s.sigma() * b.xi >= 1.0 - 1e-12);
    }

    #[test]
    fn tilde_gamma_recenters_the_mean(s in stats()) {
        let (tt, gt) = mle_tilde(&s).unwrap();
        prop_assert!((gt + tt * s.mean()).abs() <= 1e-12 * (1.0 + gt.abs()));
    }
}
