//! Path functionals and the two estimator pairs built from them.

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::model::{ModelParams, Path};

/// The five path functionals every estimator consumes.
///
/// `int_x_dx` is the Itô integral, fixed by `(X_T^2 - T) / 2`, and `s_t`
/// is `int_x2 - int_x^2 / T` clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuffStats {
    pub x_t: f64,
    pub int_x: f64,
    pub int_x2: f64,
    pub int_x_dx: f64,
    pub s_t: f64,
    pub horizon: f64,
}

impl SuffStats {
    pub fn new(x_t: f64, int_x: f64, int_x2: f64, horizon: f64) -> Result<Self> {
        for (name, v) in [("x_t", x_t), ("int_x", int_x), ("int_x2", int_x2), ("horizon", horizon)] {
            ensure_finite(name, v)?;
        }
        if horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let s_t = (int_x2 - int_x * int_x / horizon).max(0.0);
        Ok(Self { x_t, int_x, int_x2, int_x_dx: 0.5 * (x_t * x_t - horizon), s_t, horizon })
    }

    /// Time average `Xbar_T`.
    pub fn mean(&self) -> f64 {
        self.int_x / self.horizon
    }

    /// `Sigma_T = S_T / T`.
    pub fn sigma(&self) -> f64 {
        self.s_t / self.horizon
    }

    fn require_spread(&self) -> Result<()> {
        if self.s_t > 0.0 {
            Ok(())
        } else {
            Err(Error::DegeneratePath(
                "path has zero empirical variance (S_T = 0); estimators are undefined".into(),
            ))
        }
    }
}

/// Streaming trapezoid accumulator on a uniform grid, started at `X_0 = 0`.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    dt: f64,
    steps: usize,
    sum_x: f64,
    sum_x2: f64,
    last: f64,
}

impl StatsAccumulator {
    pub fn new(dt: f64) -> Self {
        Self { dt, steps: 0, sum_x: 0.0, sum_x2: 0.0, last: 0.0 }
    }

    /// Record the value at the next grid point.
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.sum_x += x;
        self.sum_x2 += x * x;
        self.last = x;
        self.steps += 1;
    }

    pub fn finish(&self) -> Result<SuffStats> {
        let x = self.last;
        // Interior points carry weight dt, the end points dt / 2; X_0 = 0.
        let int_x = self.dt * (self.sum_x - 0.5 * x);
        let int_x2 = self.dt * (self.sum_x2 - 0.5 * x * x);
        SuffStats::new(x, int_x, int_x2, self.dt * self.steps as f64)
    }
}

pub fn suff_stats(path: &Path) -> Result<SuffStats> {
    if path.values.len() != path.grid.n_steps() + 1 {
        return Err(Error::InvalidParameter(format!(
            "path has {} values for a grid of {} steps",
            path.values.len(),
            path.grid.n_steps()
        )));
    }
    if path.values[0] != 0.0 {
        return Err(Error::InvalidParameter("paths must start at X_0 = 0".into()));
    }
    let mut acc = StatsAccumulator::new(path.grid.dt());
    for &x in &path.values[1..] {
        acc.push(x);
    }
    let mut stats = acc.finish()?;
    stats.horizon = path.grid.horizon();
    Ok(stats)
}

/// Maximum-likelihood pair `(theta_hat, gamma_hat)`.
pub fn mle(stats: &SuffStats) -> Result<(f64, f64)> {
    stats.require_spread()?;
    let t = stats.horizon;
    // T int X^2 - (int X)^2 written as T S_T to avoid the cancellation.
    let den = t * stats.s_t;
    let theta = (t * stats.int_x_dx - stats.x_t * stats.int_x) / den;
    let gamma = (stats.x_t * stats.int_x2 - stats.int_x_dx * stats.int_x) / den;
    Ok((theta, gamma))
}

/// Surrogate pair `(theta_tilde, gamma_tilde)` with `theta_tilde = int X dX / S_T`.
pub fn mle_tilde(stats: &SuffStats) -> Result<(f64, f64)> {
    stats.require_spread()?;
    let theta = stats.int_x_dx / stats.s_t;
    Ok((theta, -theta * stats.mean()))
}

/// Differences between the two estimator pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discrepancy {
    pub d_theta: f64,
    pub d_gamma: f64,
    pub d_theta_direct: f64,
    pub d_gamma_direct: f64,
}

impl Discrepancy {
    pub fn norm(&self) -> f64 {
        self.d_theta.hypot(self.d_gamma)
    }
}

const IDENTITY_TOL: f64 = 1e-9;

/// `theta_hat - theta_tilde = -(X_T/T) Xbar/Sigma` and
/// `gamma_hat - gamma_tilde = (X_T/T)(1 + Xbar^2/Sigma)`, cross-checked
/// against direct subtraction.
///
/// The tolerance is relative to the size of the subtracted estimates, the
/// scale at which direct subtraction loses digits.
pub fn discrepancy(stats: &SuffStats) -> Result<Discrepancy> {
    let (th, gh) = mle(stats)?;
    let (tt, gt) = mle_tilde(stats)?;
    let r = stats.x_t / stats.horizon;
    let m = stats.mean();
    let sigma = stats.sigma();
    let d_theta = -r * m / sigma;
    let d_gamma = r * (1.0 + m * m / sigma);
    let out = Discrepancy { d_theta, d_gamma, d_theta_direct: th - tt, d_gamma_direct: gh - gt };
    let checks = [
        ("theta", d_theta, th - tt, th.abs() + tt.abs()),
        ("gamma", d_gamma, gh - gt, gh.abs() + gt.abs()),
    ];
    for (name, closed, direct, scale) in checks {
        if (closed - direct).abs() > IDENTITY_TOL * closed.abs().max(scale) {
            return Err(Error::Consistency(format!(
                "{name} discrepancy: closed form {closed:e} vs direct {direct:e}"
            )));
        }
    }
    Ok(out)
}

/// Smallest `xi` for which `sqrt(3) xi^3` dominates the sharp constant
/// `sqrt(xi^4 + (1 + xi^3)^2)`.
pub const EQUIVALENCE_XI_MIN: f64 = 1.25;

/// Per-path bound on the discrepancy norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceBound {
    pub xi: f64,
    pub norm: f64,
    /// `sqrt(xi^4 + (1 + xi^3)^2) |X_T| / T`
    pub sharp: f64,
    /// `sqrt(3) xi^3 |X_T| / T`
    pub cubic: f64,
}

impl EquivalenceBound {
    pub fn holds(&self) -> bool {
        let slack = 1.0 + 1e-12;
        self.norm <= self.sharp * slack && self.sharp <= self.cubic * slack
    }
}

/// Bound with the tightest admissible `xi`: `|Xbar| <= xi`, `Sigma >= 1/xi`
/// and `xi >= EQUIVALENCE_XI_MIN`.
pub fn equivalence_bound(stats: &SuffStats) -> Result<EquivalenceBound> {
    let d = discrepancy(stats)?;
    let xi = EQUIVALENCE_XI_MIN.max(stats.mean().abs()).max(1.0 / stats.sigma());
    let scale = stats.x_t.abs() / stats.horizon;
    let xi3 = xi.powi(3);
    Ok(EquivalenceBound {
        xi,
        norm: d.norm(),
        sharp: (xi.powi(4) + (1.0 + xi3).powi(2)).sqrt() * scale,
        cubic: 3f64.sqrt() * xi3 * scale,
    })
}

/// Asymptotic covariance of `sqrt(T) (theta_hat - theta, gamma_hat - gamma)`:
/// the inverse of the stationary Fisher information per unit time.
pub fn clt_covariance(params: &ModelParams) -> [[f64; 2]; 2] {
    let th = params.theta();
    let g = params.gamma();
    [[-2.0 * th, -2.0 * g], [-2.0 * g, 1.0 - 2.0 * g * g / th]]
}
