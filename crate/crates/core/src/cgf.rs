//! Exact finite-horizon normalized cumulant generating functions.
//!
//! `L_T(a, b) = (1/T) log E exp(a int (X - Xbar) dX + b S_T)` and
//! `Lambda_T(a, b, c) = (1/T) log E exp(a sqrt(T) X_T + b int X^2 + c int X)`
//! are both Gaussian integrals over `(X_T, Xbar_T)` after a change of drift
//! to `phi = sqrt(theta^2 - 2b)`, evaluated here by 2x2 matrix arithmetic on
//! the scaled covariance.

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::model::{ModelParams, ScaledGram};

/// A point of the effective domain of `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltPoint {
    pub a: f64,
    pub b: f64,
    /// `sqrt(theta^2 - 2b)`
    pub phi: f64,
    /// `phi - (a + theta)`
    pub tau: f64,
}

impl TiltPoint {
    pub fn new(params: &ModelParams, a: f64, b: f64) -> Result<Self> {
        ensure_finite("a", a)?;
        ensure_finite("b", b)?;
        let th = params.theta();
        let disc = th * th - 2.0 * b;
        if !(disc > 0.0) {
            return Err(Error::Domain(format!(
                "theta^2 - 2b > 0 fails: theta^2 - 2b = {disc} at b = {b}"
            )));
        }
        let phi = disc.sqrt();
        let tau = phi - (a + th);
        if !(tau > 0.0) {
            return Err(Error::Domain(format!(
                "a + theta < sqrt(theta^2 - 2b) fails: a + theta = {}, sqrt(theta^2 - 2b) = {phi}",
                a + th
            )));
        }
        Ok(Self { a, b, phi, tau })
    }
}

/// `L_T = L + H/T + R_T/T^2`, with `R_T` defined by the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgfBreakdown {
    pub value_exact: f64,
    pub leading: f64,
    pub correction: f64,
    pub remainder: f64,
    pub horizon: f64,
}

/// Limit `L(a, b) = -(a + theta + phi) / 2`.
pub fn script_l(params: &ModelParams, a: f64, b: f64) -> Result<f64> {
    let p = TiltPoint::new(params, a, b)?;
    Ok(-0.5 * (a + params.theta() + p.phi))
}

/// First-order correction `H(a, b)`.
pub fn script_h(params: &ModelParams, a: f64, b: f64) -> Result<f64> {
    let p = TiltPoint::new(params, a, b)?;
    let th = params.theta();
    let g = params.gamma();
    Ok(-0.5 * (p.tau * th * th / (2.0 * p.phi.powi(3))).ln() - g * g * (a + th + p.phi) / (2.0 * th * th))
}

/// Gaussian integral
/// `log E exp(-V'JV/2 + gamma U'V)` for `V ~ N(0, Gamma_T(phi))`, returned as
/// `(log det M, U' Gamma M^{-1} U)` with `M = I + J Gamma`.
///
/// `Gamma M^{-1} = (Gamma + det(Gamma) adj(J)) / det M`, which stays exact
/// when both `Gamma` and `det M` are astronomically large.
fn gaussian_quadratic(gram: &ScaledGram, j: [f64; 3], u: [f64; 2]) -> Result<(f64, f64)> {
    let [j11, j12, j22] = j;
    let s = (-gram.log_scale).exp();
    let tr = j11 * gram.a + 2.0 * j12 * gram.b + j22 * gram.c;
    let det_j = j11 * j22 - j12 * j12;
    let sdet = s + tr + det_j * gram.det;
    if !(sdet > 0.0 && 2.0 * s + tr > 0.0) {
        return Err(Error::PreAsymptotic(format!(
            "I + J Gamma_T is not positive definite (scaled det {sdet:e}); increase T"
        )));
    }
    let log_det = gram.log_scale + sdet.ln();
    // adj(J) = [[j22, -j12], [-j12, j11]]
    let n11 = gram.a + gram.det * j22;
    let n12 = gram.b - gram.det * j12;
    let n22 = gram.c + gram.det * j11;
    let quad = (u[0] * u[0] * n11 + 2.0 * u[0] * u[1] * n12 + u[1] * u[1] * n22) / sdet;
    Ok((log_det, quad))
}

/// Exact `L_T(a, b)` and its expansion terms.
pub fn cgf_exact(params: &ModelParams, a: f64, b: f64, horizon: f64) -> Result<CgfBreakdown> {
    ensure_finite("T", horizon)?;
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    let p = TiltPoint::new(params, a, b)?;
    let t = horizon;
    let th = params.theta();
    let g2 = params.gamma().powi(2);
    let gram = ScaledGram::new(p.phi, t)?;
    let (log_det, quad) = gaussian_quadratic(&gram, [p.tau, a, 2.0 * b * t], [1.0, -th * t])?;
    let value = 0.5 * (p.tau - g2) - log_det / (2.0 * t) + g2 * quad / (2.0 * t);
    let leading = script_l(params, a, b)?;
    let correction = script_h(params, a, b)?;
    Ok(CgfBreakdown {
        value_exact: value,
        leading,
        correction,
        remainder: t * t * (value - leading - correction / t),
        horizon: t,
    })
}

/// Determinant of `I + J_T Gamma_T(phi)` for `L_T`, returned as its
/// logarithm; `det M_T e^{-2 phi T} -> tau theta^2 / (2 phi^3)`.
pub fn log_det_m(params: &ModelParams, a: f64, b: f64, horizon: f64) -> Result<f64> {
    let p = TiltPoint::new(params, a, b)?;
    let gram = ScaledGram::new(p.phi, horizon)?;
    Ok(gaussian_quadratic(&gram, [p.tau, a, 2.0 * b * horizon], [0.0, 0.0])?.0)
}

/// Exact `Lambda_T(a, b, c)`.
pub fn lambda_cgf_exact(params: &ModelParams, a: f64, b: f64, c: f64, horizon: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b), ("c", c), ("T", horizon)] {
        ensure_finite(name, v)?;
    }
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    let th = params.theta();
    let g = params.gamma();
    if !(b < 0.5 * th * th) {
        return Err(Error::Domain(format!("b < theta^2/2 fails at b = {b}")));
    }
    let t = horizon;
    let phi = (th * th - 2.0 * b).sqrt();
    let gram = ScaledGram::new(phi, t)?;
    let u = [a * t.sqrt() + g, t * (c - th * g)];
    let (log_det, quad) = gaussian_quadratic(&gram, [phi - th, 0.0, 0.0], u)?;
    Ok(0.5 * (phi - th - g * g) - log_det / (2.0 * t) + quad / (2.0 * t))
}

/// `L` and `H` along the line `b = -a c`, as functions of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restricted {
    pub theta: f64,
    pub gamma: f64,
    pub c: f64,
}

impl Restricted {
    pub fn new(params: &ModelParams, c: f64) -> Result<Self> {
        ensure_finite("c", c)?;
        Ok(Self { theta: params.theta(), gamma: params.gamma(), c })
    }

    /// Open interval of `a` on which `(a, -a c)` lies in the domain of `L`;
    /// the lower end is `-inf` when `c <= 0`.
    pub fn domain(&self) -> (f64, f64) {
        let th = self.theta;
        let c = self.c;
        let pole = -th * th / (2.0 * c);
        let tau_edge = (-th).max(2.0 * (c - th));
        if c > 0.0 {
            (pole, tau_edge)
        } else if c < 0.0 {
            (f64::NEG_INFINITY, tau_edge.min(pole))
        } else {
            (f64::NEG_INFINITY, tau_edge)
        }
    }

    pub fn check(&self, a: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if a > lo && a < hi {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "a = {a} outside ({lo}, {hi}) for c = {}",
                self.c
            )))
        }
    }

    /// `sqrt(theta^2 + 2 a c)`
    pub fn phi(&self, a: f64) -> f64 {
        (self.theta * self.theta + 2.0 * a * self.c).sqrt()
    }

    /// `phi - (a + theta)`, rationalized when `a + theta > 0`.
    pub fn tau(&self, a: f64) -> f64 {
        let phi = self.phi(a);
        let s = a + self.theta;
        if s > 0.0 {
            a * (2.0 * self.c - a - 2.0 * self.theta) / (phi + s)
        } else {
            phi - s
        }
    }

    pub fn l(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        Ok(-0.5 * (a + self.theta + self.phi(a)))
    }

    pub fn dl(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        Ok(-0.5 * (1.0 + self.c / self.phi(a)))
    }

    pub fn d2l(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        Ok(self.c * self.c / (2.0 * self.phi(a).powi(3)))
    }

    pub fn h(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        let th = self.theta;
        let phi = self.phi(a);
        Ok(-0.5 * (self.tau(a) * th * th / (2.0 * phi.powi(3))).ln()
            - self.gamma.powi(2) * (a + th + phi) / (2.0 * th * th))
    }

    pub fn dh(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        let th = self.theta;
        let phi = self.phi(a);
        let dphi = self.c / phi;
        Ok(-0.5 * ((dphi - 1.0) / self.tau(a) - 3.0 * dphi / phi)
            - self.gamma.powi(2) * (1.0 + dphi) / (2.0 * th * th))
    }

    /// Sum of the absolute values of the terms of `H'(a)`: the scale at which
    /// `H'` is known when those terms cancel.
    pub fn dh_scale(&self, a: f64) -> Result<f64> {
        self.check(a)?;
        let phi = self.phi(a);
        let dphi = self.c / phi;
        Ok(0.5 * (((dphi - 1.0) / self.tau(a)).abs() + (3.0 * dphi / phi).abs())
            + self.gamma.powi(2) * (1.0 + dphi).abs() / (2.0 * self.theta.powi(2)))
    }
}

/// `L(a) = L(a, -a c)`.
pub fn restricted_l(params: &ModelParams, c: f64, a: f64) -> Result<f64> {
    Restricted::new(params, c)?.l(a)
}

/// `H(a) = H(a, -a c)`.
pub fn restricted_h(params: &ModelParams, c: f64, a: f64) -> Result<f64> {
    Restricted::new(params, c)?.h(a)
}

/// Symmetric difference quotient with step `1e-6 (1 + |x|)`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = 1e-6 * (1.0 + x.abs());
    (f(x + h) - f(x - h)) / (2.0 * h)
}
