//! The shifted Ornstein-Uhlenbeck process `dX = (theta X + gamma) dt + dB`,
//! `X_0 = 0`: parameters, exact simulation and the Gaussian law of the pair
//! `(X_T, mean of X over [0, T])`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::numeric::expm1_over_x;

/// Drift and shift of the process. The drift is strictly negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    theta: f64,
    gamma: f64,
}

impl ModelParams {
    pub fn new(theta: f64, gamma: f64) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("gamma", gamma)?;
        if theta >= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "theta must be strictly negative (stable mean reversion), got {theta}"
            )));
        }
        Ok(Self { theta, gamma })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Long-run mean `-gamma / theta`.
    pub fn stationary_mean(&self) -> f64 {
        -self.gamma / self.theta
    }

    /// Long-run variance `-1 / (2 theta)`.
    pub fn stationary_variance(&self) -> f64 {
        -0.5 / self.theta
    }

    /// Same drift, shift set to zero.
    pub fn centered(&self) -> Self {
        Self { theta: self.theta, gamma: 0.0 }
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimGrid {
    horizon: f64,
    n_steps: usize,
}

impl SimGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        ensure_finite("horizon", horizon)?;
        if horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Grid whose step is as close as possible to `dt`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        ensure_finite("dt", dt)?;
        if dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let n = (horizon / dt).round().max(1.0);
        Self::new(horizon, n as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps { self.horizon } else { i as f64 * self.dt() }
    }

    /// Trapezoid weights for the `n_steps + 1` grid points.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.n_steps + 1];
        w[0] = 0.5 * dt;
        w[self.n_steps] = 0.5 * dt;
        w
    }
}

/// A simulated trajectory on a grid; `values[i]` is `X` at `grid.time(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: SimGrid,
    pub values: Vec<f64>,
}

impl Path {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("a path has at least two points")
    }
}

/// Mean and covariance of `(X_T, Xbar_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointMoments {
    /// `E[X_T]`
    pub m_t: f64,
    /// `E[Xbar_T]`
    pub mu_t: f64,
    /// `Var(X_T)`
    pub a_t: f64,
    /// `Cov(X_T, Xbar_T)`
    pub b_t: f64,
    /// `Var(Xbar_T)`
    pub c_t: f64,
}

impl JointMoments {
    pub fn det(&self) -> f64 {
        self.a_t * self.c_t - self.b_t * self.b_t
    }
}

/// Covariance `Gamma_T(phi)` of `(X_T, Xbar_T)` for the centered process with
/// drift `phi`, stored with an exponential scale factor:
/// every entry *and* the determinant equal `exp(log_scale)` times the
/// stored value. For `phi > 0` and `phi T >= 1` the scale is `2 phi T`,
/// otherwise it is zero and the stored values are the plain ones.
///
/// The determinant comes from its closed form, not from `a c - b^2`, which
/// cancels catastrophically when `phi T` is large and positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledGram {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub det: f64,
    pub log_scale: f64,
}

const SERIES_CUTOFF: f64 = 1.0;
const SERIES_TERMS: usize = 40;

impl ScaledGram {
    pub fn new(phi: f64, horizon: f64) -> Result<Self> {
        ensure_finite("phi", phi)?;
        ensure_finite("horizon", horizon)?;
        if horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let t = horizon;
        let x = phi * t;
        if x.abs() < SERIES_CUTOFF {
            return Ok(Self::series(phi, t));
        }
        if phi > 0.0 {
            let e1 = (-x).exp();
            let e2 = e1 * e1;
            let a = -(-2.0 * x).exp_m1() / (2.0 * phi);
            let b = (-x).exp_m1().powi(2) / (2.0 * phi * phi * t);
            let c = ((1.0 - e2) / (2.0 * phi) - 2.0 * (e1 - e2) / phi + t * e2) / (phi * phi * t * t);
            let det = ((x - 2.0) + 4.0 * e1 - (x + 2.0) * e2) / (2.0 * phi.powi(4) * t * t);
            Ok(Self { a, b, c, det, log_scale: 2.0 * x })
        } else {
            let a = (2.0 * x).exp_m1() / (2.0 * phi);
            let b = x.exp_m1().powi(2) / (2.0 * phi * phi * t);
            let c = ((2.0 * x).exp_m1() / (2.0 * phi) - 2.0 * x.exp_m1() / phi + t) / (phi * phi * t * t);
            let det = ((x - 2.0) * (2.0 * x).exp() + 4.0 * x.exp() - (x + 2.0)) / (2.0 * phi.powi(4) * t * t);
            Ok(Self { a, b, c, det, log_scale: 0.0 })
        }
    }

    /// Taylor expansions in `x = phi T`, exact at `phi = 0`.
    fn series(phi: f64, t: f64) -> Self {
        let x = phi * t;
        let a = expm1_over_x(2.0 * x) * t;
        let em = expm1_over_x(x);
        let b = 0.5 * t * em * em;
        // c = T * sum_{k>=2} (2^k - 2) x^(k-2) / (k+1)!
        // det = T^2/2 * sum_{n>=4} (2^(n-1) (n-4) + 4) x^(n-4) / n!
        let mut c_sum = 0.0;
        let mut det_sum = 0.0;
        let mut fact = 2.0; // 2!
        let mut pow2 = 2.0; // 2^1
        let mut xp = 1.0;
        for k in 2..SERIES_TERMS {
            pow2 *= 2.0; // 2^k
            fact *= (k + 1) as f64; // (k+1)!
            c_sum += (pow2 - 2.0) * xp / fact;
            xp *= x;
        }
        let mut fact_n = 24.0; // 4!
        let mut pow2n = 8.0; // 2^(n-1) at n = 4
        let mut xp = 1.0;
        for n in 4..SERIES_TERMS {
            if n > 4 {
                fact_n *= n as f64;
                pow2n *= 2.0;
            }
            det_sum += (pow2n * (n as f64 - 4.0) + 4.0) * xp / fact_n;
            xp *= x;
        }
        Self { a, b, c: t * c_sum, det: 0.5 * t * t * det_sum, log_scale: 0.0 }
    }

    pub fn unscaled(&self) -> Result<(f64, f64, f64, f64)> {
        let s = self.log_scale.exp();
        let out = (self.a * s, self.b * s, self.c * s, self.det * s);
        if [out.0, out.1, out.2, out.3].iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Numerical(format!(
                "covariance overflows at log-scale {}",
                self.log_scale
            )))
        }
    }
}

/// Mean and covariance of `(X_T, Xbar_T)` for drift `phi` and shift `gamma`.
pub fn joint_moments(phi: f64, gamma: f64, horizon: f64) -> Result<JointMoments> {
    ensure_finite("gamma", gamma)?;
    let gram = ScaledGram::new(phi, horizon)?;
    let (a_t, b_t, c_t, _) = gram.unscaled()?;
    let x = phi * horizon;
    let m_t = gamma * horizon * expm1_over_x(x);
    // mu_T = gamma T sum_{k>=1} x^(k-1) / (k+1)!
    let mu_t = if x.abs() < SERIES_CUTOFF {
        let mut sum = 0.0;
        let mut term = 0.5;
        for k in 1..SERIES_TERMS {
            sum += term;
            term *= x / (k + 2) as f64;
        }
        gamma * horizon * sum
    } else {
        gamma / phi * (x.exp_m1() / x - 1.0)
    };
    let out = JointMoments { m_t, mu_t, a_t, b_t, c_t };
    if [m_t, mu_t].iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Numerical("mean overflows".into()))
    }
}

/// Reproducible generator for path `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One step of the exact Gaussian transition
/// `X_{t+dt} | X_t ~ N(rho X_t + drift, sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactStepper {
    pub rho: f64,
    pub drift: f64,
    pub sd: f64,
}

impl ExactStepper {
    pub fn new(params: &ModelParams, dt: f64) -> Self {
        let th = params.theta();
        let rho = (th * dt).exp();
        let drift = params.gamma() * dt * expm1_over_x(th * dt);
        let sd = ((2.0 * th * dt).exp_m1() / (2.0 * th)).sqrt();
        Self { rho, drift, sd }
    }

    #[inline]
    pub fn step(&self, x: f64, z: f64) -> f64 {
        self.rho * x + self.drift + self.sd * z
    }
}

/// Path driven by an arbitrary standard-normal source; `noise` returning
/// zeros gives the mean trajectory.
pub fn simulate_path_from_noise<N: FnMut() -> f64>(params: &ModelParams, grid: &SimGrid, mut noise: N) -> Path {
    let stepper = ExactStepper::new(params, grid.dt());
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut x = 0.0;
    values.push(x);
    for _ in 0..grid.n_steps() {
        x = stepper.step(x, noise());
        values.push(x);
    }
    Path { grid: *grid, values }
}

/// Exact-transition path started at `X_0 = 0`, deterministic in `seed`.
pub fn simulate_path(params: &ModelParams, grid: &SimGrid, seed: u64) -> Path {
    simulate_path_stream(params, grid, seed, 0)
}

/// Path `stream` under master seed `seed`; the same path the Monte Carlo
/// drivers produce for path index `stream`.
pub fn simulate_path_stream(params: &ModelParams, grid: &SimGrid, seed: u64, stream: u64) -> Path {
    let mut rng = stream_rng(seed, stream);
    simulate_path_from_noise(params, grid, || StandardNormal.sample(&mut rng))
}

/// Exact draw of `(X_T, Xbar_T)` from its bivariate Gaussian law.
pub fn simulate_terminal_pair(params: &ModelParams, horizon: f64, seed: u64) -> Result<(f64, f64)> {
    let sampler = TerminalPairSampler::new(params, horizon)?;
    let mut rng = stream_rng(seed, 0);
    Ok(sampler.sample(&mut rng))
}

/// Cholesky factor of the terminal law, reusable across many draws.
#[derive(Debug, Clone, Copy)]
pub struct TerminalPairSampler {
    pub moments: JointMoments,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl TerminalPairSampler {
    pub fn new(params: &ModelParams, horizon: f64) -> Result<Self> {
        let moments = joint_moments(params.theta(), params.gamma(), horizon)?;
        let det = moments.det();
        if moments.a_t <= 0.0 || det < 0.0 {
            return Err(Error::Numerical(format!(
                "covariance of (X_T, Xbar_T) is not positive semidefinite: a = {}, det = {det}",
                moments.a_t
            )));
        }
        let l11 = moments.a_t.sqrt();
        let l21 = moments.b_t / l11;
        let l22 = (det / moments.a_t).sqrt();
        Ok(Self { moments, l11, l21, l22 })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (self.moments.m_t + self.l11 * z1, self.moments.mu_t + self.l21 * z1 + self.l22 * z2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_negative_drift() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
        assert!(ModelParams::new(-1.0, 1.0).is_ok());
    }

    #[test]
    fn variance_of_terminal_value() {
        let jm = joint_moments(-1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(jm.a_t, (1.0 - (-2.0f64).exp()) / 2.0, max_relative = 1e-15);
        assert_relative_eq!(jm.a_t, 0.432_332_358_381_693_6, max_relative = 1e-14);
    }

    #[test]
    fn stationary_mean_reached() {
        let jm = joint_moments(-2.0, 2.0, 60.0).unwrap();
        assert_relative_eq!(jm.m_t, 1.0, epsilon = 1e-12);
        assert!((jm.mu_t - 1.0).abs() < 0.01);
    }

    #[test]
    fn printed_formulas_match_series_branch() {
        // Evaluate the printed closed forms naively and compare with the
        // series branch just inside the cutoff, where both are accurate.
        for &(phi, t) in &[(-0.9, 1.0), (0.3, 2.5), (-0.05, 12.0)] {
            let g = ScaledGram::new(phi, t).unwrap();
            let e1 = (phi * t).exp();
            let e2 = (2.0 * phi * t).exp();
            let a = (e2 - 1.0) / (2.0 * phi);
            let b = (e1 - 1.0).powi(2) / (2.0 * phi * phi * t);
            let c = ((e2 - 1.0) / (2.0 * phi) - 2.0 / phi * (e1 - 1.0) + t) / (phi * phi * t * t);
            assert_relative_eq!(g.a, a, max_relative = 1e-12);
            assert_relative_eq!(g.b, b, max_relative = 1e-12);
            assert_relative_eq!(g.c, c, max_relative = 1e-8);
            assert_relative_eq!(g.det, a * c - b * b, max_relative = 1e-6);
        }
    }

    #[test]
    fn series_and_closed_forms_agree_at_cutoff() {
        for &phi in &[-1.0, 1.0] {
            let below = ScaledGram::series(phi, 0.999_999_9);
            let above = ScaledGram::new(phi, 1.000_000_1).unwrap();
            let (a, b, c, d) = above.unscaled().unwrap();
            assert_relative_eq!(below.a, a, max_relative = 1e-6);
            assert_relative_eq!(below.b, b, max_relative = 1e-6);
            assert_relative_eq!(below.c, c, max_relative = 1e-6);
            assert_relative_eq!(below.det, d, max_relative = 1e-6);
        }
    }

    #[test]
    fn brownian_limit_at_zero_drift() {
        let jm = joint_moments(0.0, 1.0, 3.0).unwrap();
        assert_relative_eq!(jm.a_t, 3.0, max_relative = 1e-15);
        assert_relative_eq!(jm.b_t, 1.5, max_relative = 1e-15);
        assert_relative_eq!(jm.c_t, 1.0, max_relative = 1e-15);
        assert_relative_eq!(jm.m_t, 3.0, max_relative = 1e-15);
        assert_relative_eq!(jm.mu_t, 1.5, max_relative = 1e-15);
        let g = ScaledGram::new(0.0, 3.0).unwrap();
        assert_relative_eq!(g.det, 9.0 / 12.0, max_relative = 1e-15);
    }

    #[test]
    fn scaled_gram_survives_long_horizons() {
        let g = ScaledGram::new(2.0, 500.0).unwrap();
        assert_eq!(g.log_scale, 2000.0);
        assert_relative_eq!(g.a, 0.25, max_relative = 1e-12);
        // det * e^{-2 phi T} * T -> 1 / (2 phi^3)
        assert_relative_eq!(g.det * 500.0, 1.0 / 16.0, max_relative = 0.01);
        assert!(g.unscaled().is_err());
    }

    #[test]
    fn mean_path_without_noise() {
        let params = ModelParams::new(-2.0, 2.0).unwrap();
        let grid = SimGrid::new(1.0, 100).unwrap();
        let path = simulate_path_from_noise(&params, &grid, || 0.0);
        assert_eq!(path.values[0], 0.0);
        assert_relative_eq!(path.terminal(), 1.0 - (-2.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(path.terminal(), 0.864_664_716_763_387_3, max_relative = 1e-13);
        let jm = joint_moments(-2.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(path.terminal(), jm.m_t, max_relative = 1e-13);
    }

    #[test]
    fn simulation_is_deterministic_in_seed() {
        let params = ModelParams::new(-1.0, 0.3).unwrap();
        let grid = SimGrid::new(2.0, 50).unwrap();
        assert_eq!(simulate_path(&params, &grid, 9), simulate_path(&params, &grid, 9));
        assert_ne!(simulate_path(&params, &grid, 9), simulate_path(&params, &grid, 10));
        assert_eq!(
            simulate_terminal_pair(&params, 2.0, 4).unwrap(),
            simulate_terminal_pair(&params, 2.0, 4).unwrap()
        );
    }

    #[test]
    fn terminal_pair_moments_match() {
        let params = ModelParams::new(-1.5, 0.8).unwrap();
        let horizon = 2.0;
        let sampler = TerminalPairSampler::new(&params, horizon).unwrap();
        let jm = sampler.moments;
        let n = 100_000;
        let mut rng = stream_rng(17, 0);
        let draws: Vec<(f64, f64)> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let nf = n as f64;
        let mx = draws.iter().map(|d| d.0).sum::<f64>() / nf;
        let my = draws.iter().map(|d| d.1).sum::<f64>() / nf;
        assert!((mx - jm.m_t).abs() < 4.0 * (jm.a_t / nf).sqrt());
        assert!((my - jm.mu_t).abs() < 4.0 * (jm.c_t / nf).sqrt());
        let vxx = draws.iter().map(|d| (d.0 - jm.m_t).powi(2)).sum::<f64>() / nf;
        let vyy = draws.iter().map(|d| (d.1 - jm.mu_t).powi(2)).sum::<f64>() / nf;
        let vxy = draws.iter().map(|d| (d.0 - jm.m_t) * (d.1 - jm.mu_t)).sum::<f64>() / nf;
        // Standard error of a sample variance is sqrt(2/n) var; of a covariance sqrt((ac + b^2)/n).
        assert!((vxx - jm.a_t).abs() < 4.0 * jm.a_t * (2.0 / nf).sqrt());
        assert!((vyy - jm.c_t).abs() < 4.0 * jm.c_t * (2.0 / nf).sqrt());
        assert!((vxy - jm.b_t).abs() < 4.0 * ((jm.a_t * jm.c_t + jm.b_t * jm.b_t) / nf).sqrt());
    }

    #[test]
    fn exact_transition_law_is_resolution_free() {
        let params = ModelParams::new(-1.0, 0.5).unwrap();
        let horizon = 1.5;
        let jm = joint_moments(params.theta(), params.gamma(), horizon).unwrap();
        let n = 20_000;
        for steps in [3usize, 6] {
            let grid = SimGrid::new(horizon, steps).unwrap();
            let xs: Vec<f64> = (0..n)
                .map(|i| simulate_path_stream(&params, &grid, 5, i as u64).terminal())
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - jm.m_t).powi(2)).sum::<f64>() / n as f64;
            assert!((mean - jm.m_t).abs() < 4.0 * (jm.a_t / n as f64).sqrt());
            assert!((var - jm.a_t).abs() < 4.0 * jm.a_t * (2.0 / n as f64).sqrt());
        }
    }

    proptest! {
        #[test]
        fn covariance_is_a_gram_matrix(theta in -5.0f64..-0.01, t in 0.01f64..80.0) {
            let jm = joint_moments(theta, 0.0, t).unwrap();
            prop_assert!(jm.a_t > 0.0);
            prop_assert!(jm.c_t > 0.0);
            prop_assert!(jm.det() >= -1e-12 * jm.a_t * jm.c_t);
            prop_assert!(jm.a_t <= -0.5 / theta);
        }

        #[test]
        fn shifted_means_converge(theta in -3.0f64..-0.2, gamma in -2.0f64..2.0, t in 0.1f64..40.0) {
            let jm = joint_moments(theta, gamma, t).unwrap();
            let printed = -(gamma / theta) * (1.0 + (1.0 - (theta * t).exp()) / (theta * t));
            prop_assert!((jm.mu_t - printed).abs() <= 1e-9 * (1.0 + printed.abs()));
            let long = joint_moments(theta, gamma, 400.0 / -theta).unwrap();
            prop_assert!((long.m_t + gamma / theta).abs() < 1e-9);
            prop_assert!((long.mu_t + gamma / theta).abs() < 0.01 * (1.0 + (gamma / theta).abs()));
        }
    }
}
