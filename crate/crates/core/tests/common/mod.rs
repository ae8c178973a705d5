//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ouldp::cgf::cgf_exact;
use ouldp::numeric::{golden_min, normal_sf};
use ouldp::rate::{lambda_cgf, TripletPoint};
use ouldp::ModelParams;

pub fn p(theta: f64, gamma: f64) -> ModelParams {
    ModelParams::new(theta, gamma).unwrap()
}

/// `sup_{a,b,c} lambda a + mu b + delta c - Lambda(a, b, c)` by nested
/// golden-section search, with `b` parametrized through `phi = sqrt(theta^2 - 2b)`.
pub fn legendre_triplet(m: &ModelParams, q: &TripletPoint) -> f64 {
    let th = m.theta();
    let lam = |a: f64, b: f64, c: f64| lambda_cgf(m, a, b, c).value();
    let profile = |log_phi: f64| {
        let phi = log_phi.exp();
        let b = 0.5 * (th * th - phi * phi);
        let (c_star, _) = golden_min(|c| -(q.delta * c) + lam(0.0, b, c), -1e4, 1e4, 1e-11);
        let (_, v) = golden_min(|a| -(q.lambda * a + q.mu * b + q.delta * c_star) + lam(a, b, c_star), -1e4, 1e4, 1e-11);
        v
    };
    -golden_min(profile, -12.0, 8.0, 1e-12).1
}

/// Lugannani-Rice approximation of `P(theta_hat_T >= c)` for `theta < c < 0`
/// from the exact finite-horizon CGF of `Z_T(s, -c s)`, whose sign is that of
/// `theta_hat_T - c`.
pub fn saddlepoint_upper_tail(m: &ModelParams, c: f64, t: f64) -> f64 {
    let k = |s: f64| cgf_exact(m, s, -c * s, t).map(|b| t * b.value_exact).unwrap_or(f64::INFINITY);
    // The saddle lies inside the line segment where the CGF is finite.
    let hi = 2.0 * (c - m.theta()).max(-m.theta()) * 0.999;
    let (s, ks) = golden_min(k, 1e-9, hi, 1e-12);
    let h = 1e-4 * s;
    let k2 = (k(s + h) - 2.0 * ks + k(s - h)) / (h * h);
    let w = (-2.0 * ks).sqrt();
    let u = s * k2.sqrt();
    let dens = (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_sf(w) + dens * (1.0 / u - 1.0 / w)
}

/// `ln P(Z >= 0)` for `Z = mean + sum alpha_k (xi_k^2 - 1) + beta_k xi_k`,
/// by inverting the CGF along the vertical line through the saddle point.
pub fn chaos_log_upper_tail(d: &ouldp::spectral::ChaosDecomposition) -> f64 {
    use num_complex::Complex64;
    let shift = d.mean - d.alphas.iter().sum::<f64>();
    let k = |s: Complex64| {
        let mut acc = s * shift;
        for (&al, &be) in d.alphas.iter().zip(&d.betas) {
            let w = Complex64::new(1.0, 0.0) - 2.0 * s * al;
            acc += -0.5 * w.ln() + 0.5 * s * s * be * be / w;
        }
        acc
    };
    let dk = |s: f64| {
        shift
            + d.alphas
                .iter()
                .zip(&d.betas)
                .map(|(&al, &be)| {
                    let w = 1.0 - 2.0 * s * al;
                    al / w + s * be * be / w + s * s * be * be * al / (w * w)
                })
                .sum::<f64>()
    };
    let max_pos = d.alphas.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, if max_pos > 0.0 { 0.5 / max_pos } else { 1e6 });
    assert!(dk(lo) < 0.0, "mean is not negative");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dk(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s0 = 0.5 * (lo + hi);
    let k0 = k(Complex64::new(s0, 0.0)).re;
    let h2 = 1e-4 * s0;
    let k2 = (dk(s0 + h2) - dk(s0 - h2)) / (2.0 * h2);
    let step = 0.05 / k2.sqrt();
    let f = |y: f64| {
        let s = Complex64::new(s0, y);
        ((k(s) - k0).exp() / s).re
    };
    let mut sum = 0.5 * f(0.0);
    let mut y = 0.0;
    loop {
        y += step;
        let s = Complex64::new(s0, y);
        let v = f(y);
        sum += v;
        if (k(s).re - k0).exp() / s.norm() < 1e-15 / s0 {
            break;
        }
    }
    k0 + (sum * step / std::f64::consts::PI).ln()
}
