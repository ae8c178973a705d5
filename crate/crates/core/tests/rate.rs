mod common;

use common::{legendre_triplet, p};
use ouldp::numeric::golden_min;
use ouldp::rate::{contraction_map, rate_gamma, rate_joint, rate_theta, rate_triplet, TripletPoint};
use proptest::prelude::*;

/// Infimum of the triplet rate over the preimage of `(c, d)` under the
/// contraction map, parametrized by the spread `mu - delta^2`.
fn contracted(m: &ouldp::ModelParams, c: f64, d: f64) -> f64 {
    let delta = -d / c;
    let max_spread = if c < 0.0 { -1.0 / (2.0 * c) } else { 1e3 };
    let f = |s: f64| {
        let lambda = (1.0 + 2.0 * c * s).max(0.0).sqrt();
        let q = TripletPoint { lambda, mu: s + delta * delta, delta };
        rate_triplet(m, &q).value()
    };
    golden_min(f, 1e-12, max_spread, 1e-13).1
}

#[test]
fn joint_rate_is_the_contraction_of_the_triplet_rate() {
    for (theta, gamma) in [(-2.0, 0.0), (-1.0, 0.7), (-0.5, -1.5)] {
        let m = p(theta, gamma);
        for (c, d) in [(-1.0, 0.3), (-3.0, -2.0), (0.5, 0.2), (2.0, -1.0), (-0.2, 0.0)] {
            let q = contracted(&m, c, d);
            let j = rate_joint(&m, c, d).value();
            assert!((q - j).abs() < 1e-6 * (1.0 + j), "({theta},{gamma}) ({c},{d}): {q} vs {j}");
        }
    }
}

#[test]
fn marginal_rates_are_infima_of_the_joint_rate() {
    for (theta, gamma) in [(-2.0, 0.0), (-1.0, 0.7)] {
        let m = p(theta, gamma);
        for c in [-3.0, -1.0, -0.4, 0.5, 2.0] {
            let (_, v) = golden_min(|d| rate_joint(&m, c, d).value(), -50.0, 50.0, 1e-12);
            assert!((v - rate_theta(theta, c).unwrap()).abs() < 1e-6, "c = {c}");
        }
        for d in [-1.0, 0.0, 0.3, 2.0] {
            let brute = (1..40_000)
                .map(|i| -20.0 + 40.0 * i as f64 / 40_000.0)
                .map(|c| rate_joint(&m, c, d).value())
                .fold(f64::INFINITY, f64::min);
            let r = rate_gamma(&m, d).value;
            assert!(r <= brute + 1e-12 && brute - r < 1e-3, "d = {d}: {r} vs {brute}");
        }
    }
}

#[test]
fn contraction_map_inverts_the_parametrization() {
    let (c, d) = contraction_map(&TripletPoint { lambda: 0.5, mu: 1.0, delta: 0.5 }).unwrap();
    assert!((c - (0.25 - 1.0) / 1.5).abs() < 1e-15);
    assert!((d + 0.5 * c).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn triplet_rate_matches_numerical_legendre_transform(
        lambda in -2.0f64..2.0, delta in -1.0f64..1.0, spread in 0.05f64..2.0, gamma in -1.0f64..1.0
    ) {
        let m = p(-1.3, gamma);
        let q = TripletPoint { lambda, mu: delta * delta + spread, delta };
        let closed = rate_triplet(&m, &q).value();
        prop_assert!(closed >= 0.0);
        prop_assert!((closed - legendre_triplet(&m, &q)).abs() < 1e-6);
    }
}
