//! Closed-form rate functions for the estimators, the limiting cumulant
//! generating function of `(X_T/sqrt(T), mean of X^2, mean of X)` and its
//! Legendre transform.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::golden_min;

/// A value in `R ∪ {+inf}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The value as a float, `+inf` for the infinite case.
    pub fn value(&self) -> f64 {
        match *self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Rate of `(theta_hat, gamma_hat)` at `(c, d)`.
pub fn rate_joint(params: &ModelParams, c: f64, d: f64) -> ExtReal {
    let th = params.theta();
    if c == 0.0 {
        return if d == 0.0 { ExtReal::Finite(-th) } else { ExtReal::Infinite };
    }
    let shift = 0.5 * (params.gamma() - d * th / c).powi(2);
    ExtReal::Finite(drift_part(th, c) + shift)
}

fn drift_part(theta: f64, c: f64) -> f64 {
    if c <= theta / 3.0 {
        -(c - theta).powi(2) / (4.0 * c)
    } else {
        2.0 * c - theta
    }
}

/// Rate of `theta_hat` at `c`.
pub fn rate_theta(theta: f64, c: f64) -> Result<f64> {
    if !(theta < 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be strictly negative, got {theta}")));
    }
    Ok(drift_part(theta, c))
}

/// Infimum of the joint rate over `c` together with a minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRate {
    pub value: f64,
    pub argmin_c: f64,
}

const GAMMA_GRID: usize = 4000;

/// Rate of `gamma_hat` at `d`, as a numerical infimum over the drift.
pub fn rate_gamma(params: &ModelParams, d: f64) -> GammaRate {
    let th = params.theta();
    let g = params.gamma();
    if d == 0.0 {
        // Away from c = 0 the infimum is gamma^2 / 2 at c = theta.
        return if -th < 0.5 * g * g {
            GammaRate { value: -th, argmin_c: 0.0 }
        } else {
            GammaRate { value: 0.5 * g * g, argmin_c: th }
        };
    }
    let f = |c: f64| rate_joint(params, c, d).value();
    let lo = th - 10.0 * (1.0 + g.abs());
    let hi = 10.0 * th.abs();
    let mut best = GammaRate { value: f64::INFINITY, argmin_c: th };
    for (a, b) in [(lo, 0.0), (0.0, hi)] {
        let mut grid: Vec<f64> = (1..GAMMA_GRID).map(|i| a + (b - a) * i as f64 / GAMMA_GRID as f64).collect();
        // Geometric points toward the pole at c = 0.
        let side = if b > 0.0 { 1.0 } else { -1.0 };
        grid.extend((1..40).map(|k| side * (b - a).abs() / GAMMA_GRID as f64 * 0.7f64.powi(k)));
        grid.sort_by(f64::total_cmp);
        let (i_best, _) = grid
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, f(c)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("grid is not empty");
        let left = if i_best == 0 { a } else { grid[i_best - 1] };
        let right = if i_best + 1 == grid.len() { b } else { grid[i_best + 1] };
        let (c, v) = golden_min(&f, left, right, 1e-13 * (1.0 + left.abs().max(right.abs())));
        let v0 = f(grid[i_best]);
        let (c, v) = if v0 < v { (grid[i_best], v0) } else { (c, v) };
        if v < best.value {
            best = GammaRate { value: v, argmin_c: c };
        }
    }
    best
}

/// Limiting normalized CGF of `(X_T/sqrt(T), (1/T) int X^2, (1/T) int X)`.
pub fn lambda_cgf(params: &ModelParams, a: f64, b: f64, c: f64) -> ExtReal {
    let th = params.theta();
    let g = params.gamma();
    if !(b < 0.5 * th * th) {
        return ExtReal::Infinite;
    }
    let phi = (th * th - 2.0 * b).sqrt();
    ExtReal::Finite(
        -0.5 * (th + phi + g * g) + 0.5 * a * a / (phi - th) + 0.5 * ((c - th * g) / phi).powi(2),
    )
}

/// Coordinates `(lambda, mu, delta)` of the triplet
/// `(X_T/sqrt(T), (1/T) int X^2, (1/T) int X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripletPoint {
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
}

/// Legendre transform of [`lambda_cgf`].
pub fn rate_triplet(params: &ModelParams, p: &TripletPoint) -> ExtReal {
    let th = params.theta();
    let g = params.gamma();
    let spread = p.mu - p.delta * p.delta;
    if !(spread > 0.0) {
        return ExtReal::Infinite;
    }
    let l2 = p.lambda * p.lambda;
    ExtReal::Finite(
        0.5 * (th * th * p.mu - th * l2)
            + 0.5 * (th + g * g + 2.0 * th * g * p.delta)
            + (1.0 + l2).powi(2) / (8.0 * spread),
    )
}

/// Map from the triplet to `(theta_tilde, gamma_tilde)`.
pub fn contraction_map(p: &TripletPoint) -> Result<(f64, f64)> {
    let spread = p.mu - p.delta * p.delta;
    if !(spread > 0.0) {
        return Err(Error::Domain(format!(
            "mu must exceed delta^2, got mu = {}, delta = {}",
            p.mu, p.delta
        )));
    }
    let c = (p.lambda * p.lambda - 1.0) / (2.0 * spread);
    Ok((c, -p.delta * c))
}

/// Rate of `Sigma_T = S_T / T` at `c`.
pub fn sigma_rate(theta: f64, c: f64) -> ExtReal {
    if c > 0.0 {
        ExtReal::Finite((2.0 * theta * c + 1.0).powi(2) / (8.0 * c))
    } else {
        ExtReal::Infinite
    }
}
