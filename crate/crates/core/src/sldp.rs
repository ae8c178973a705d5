//! Sharp tail approximations for the drift estimator `theta_hat_T`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::cgf::Restricted;
use crate::error::{ensure_finite, Error, Result};
use crate::model::{joint_moments, ModelParams};
use crate::numeric::{bisect, integrate_real_line, integrate_to_infinity, normal_sf};
use crate::rate::rate_theta;

/// Position of the threshold `c` relative to the true drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `theta < c < theta/3`
    EasyUpper,
    /// `c < theta`
    LowerTail,
    /// `c > theta/3`, `c != 0`
    General,
    /// `c = theta/3`
    Junction,
    /// `c = 0`
    Zero,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::EasyUpper => "easy_upper",
            Regime::LowerTail => "lower_tail",
            Regime::General => "general",
            Regime::Junction => "junction",
            Regime::Zero => "zero",
        }
    }

    /// `true` when the tail event is `theta_hat <= c`.
    pub fn is_lower(&self) -> bool {
        matches!(self, Regime::LowerTail)
    }
}

/// Relative distance to `theta/3` treated as the junction itself.
pub const JUNCTION_TOL: f64 = 1e-12;

pub fn classify(theta: f64, c: f64) -> Result<Regime> {
    ensure_finite("c", c)?;
    if !(theta < 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be strictly negative, got {theta}")));
    }
    if c == theta {
        return Err(Error::Domain(format!("c = theta = {theta}: no tail approximation at the true value")));
    }
    let third = theta / 3.0;
    Ok(if c == 0.0 {
        Regime::Zero
    } else if (c - third).abs() <= JUNCTION_TOL * theta.abs() {
        Regime::Junction
    } else if c < theta {
        Regime::LowerTail
    } else if c < third {
        Regime::EasyUpper
    } else {
        Regime::General
    })
}

/// Constants of the `theta < c < theta/3` and `c < theta` expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EasyPrefactor {
    pub a_c: f64,
    pub sigma_c: f64,
    pub j: f64,
}

pub fn prefactor_easy(params: &ModelParams, c: f64) -> Result<EasyPrefactor> {
    let th = params.theta();
    let regime = classify(th, c)?;
    if !matches!(regime, Regime::EasyUpper | Regime::LowerTail) {
        return Err(Error::Domain(format!(
            "c = {c} is in the {} regime, not theta < c < theta/3 or c < theta",
            regime.name()
        )));
    }
    let g2 = params.gamma().powi(2);
    let a_c = (c * c - th * th) / (2.0 * c);
    let sigma_c = (-0.5 / c).sqrt();
    let j = -0.5 * (th * th * (c + th) * (3.0 * c - th) / (4.0 * c.powi(4))).ln()
        + g2 * (c - th).powi(2) / (4.0 * c * th * th);
    Ok(EasyPrefactor { a_c, sigma_c, j })
}

/// Constants of the `c > theta/3`, `c != 0` expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralPrefactor {
    pub a_c: f64,
    pub sigma_c: f64,
    pub k: f64,
    pub b_c: f64,
}

pub fn prefactor_general(params: &ModelParams, c: f64) -> Result<GeneralPrefactor> {
    let th = params.theta();
    let regime = classify(th, c)?;
    if regime != Regime::General {
        return Err(Error::Domain(format!(
            "c = {c} is in the {} regime, not c > theta/3 with c != 0",
            regime.name()
        )));
    }
    let g2 = params.gamma().powi(2);
    let u = 2.0 * c - th;
    let a_c = 2.0 * (c - th);
    let sigma_c = (c * c / (2.0 * u.powi(3))).sqrt();
    let k = -0.5 * (th * th * (c - th) * (3.0 * c - th) / (4.0 * c * c * u * u)).ln() - g2 / (th * th) * u;
    let b_c = (3.0 * c - th) / (2.0 * u);
    Ok(GeneralPrefactor { a_c, sigma_c, k, b_c })
}

/// Constants of the `c = theta/3` expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JunctionPrefactor {
    pub a_theta: f64,
    pub b_theta: f64,
    pub sigma_theta: f64,
}

pub fn prefactor_junction(theta: f64) -> JunctionPrefactor {
    JunctionPrefactor {
        a_theta: -4.0 * theta / 3.0,
        b_theta: 1.0 / (3.0 * theta),
        sigma_theta: (-1.5 / theta).sqrt(),
    }
}

/// `Gamma(1/4) = 4 int_0^inf exp(-u^4) du`, computed once.
pub fn gamma_quarter() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        4.0 * integrate_to_infinity(|u| (-u.powi(4)).exp(), 0.0, 1e-14, 0.0)
            .expect("the Gamma integrand is smooth and integrable")
            .value
    })
}

/// Root of `L'(a) + H'(a)/T = 0` near the right end of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSolution {
    pub a_t: f64,
    /// `L'(a_T) + H'(a_T)/T`
    pub residual: f64,
    /// `phi(a_T) - (a_T + theta)`
    pub tau: f64,
    /// `sqrt(theta^2 + 2 a_T c)`
    pub phi: f64,
    pub dh_analytic: f64,
    pub dh_numeric: f64,
}

const DERIVATIVE_TOL: f64 = 1e-5;

pub fn solve_tilt(params: &ModelParams, c: f64, horizon: f64) -> Result<TiltSolution> {
    ensure_finite("T", horizon)?;
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    let regime = classify(params.theta(), c)?;
    if !matches!(regime, Regime::General | Regime::Junction) {
        return Err(Error::Domain(format!(
            "tilt equation applies to c > theta/3 or c = theta/3, c = {c} is {}",
            regime.name()
        )));
    }
    let r = Restricted::new(params, c)?;
    let t = horizon;
    let g = |a: f64| match (r.dl(a), r.dh(a)) {
        (Ok(dl), Ok(dh)) => dl + dh / t,
        _ => f64::NAN,
    };
    let (lo, hi) = r.domain();
    let width = if lo.is_finite() { hi - lo } else { 1.0 + hi.abs() };
    let start = if lo.is_finite() { lo + 0.5 * width } else { hi - width };
    // Walk from the interior toward the right edge: last point with g < 0,
    // first point after it with g > 0.
    let mut a_lo = None;
    let mut a_hi = None;
    for k in 0..=1000 {
        let a = hi - (hi - start) * 0.5f64.powf(k as f64 / 8.0);
        if !(a < hi) {
            break;
        }
        let v = g(a);
        if v < 0.0 {
            a_lo = Some(a);
        } else if v > 0.0 && a_lo.is_some() {
            a_hi = Some(a);
            break;
        }
    }
    let (a_lo, a_hi) = match (a_lo, a_hi) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(Error::PreAsymptotic(format!(
                "no sign change of L' + H'/T on [{start}, {hi}) at T = {t}; increase T"
            )))
        }
    };
    let a_t = bisect(g, a_lo, a_hi)?;
    let residual = g(a_t);
    let dh_analytic = r.dh(a_t)?;
    // Step well inside the distance to the pole, where H has derivatives of
    // order 1/tau^k.
    let tau = r.tau(a_t);
    let step = (1e-6 * (1.0 + a_t.abs())).min(1e-3 * tau);
    let dh_numeric = if a_t + step < hi {
        let h = |a: f64| r.h(a).unwrap_or(f64::NAN);
        (h(a_t + step) - h(a_t - step)) / (2.0 * step)
    } else {
        f64::NAN
    };
    let scale = r.dh_scale(a_t)?.max(1.0);
    if !dh_numeric.is_finite() || (dh_numeric - dh_analytic).abs() > DERIVATIVE_TOL * scale {
        return Err(Error::Consistency(format!(
            "H'(a_T): analytic {dh_analytic:e} vs central difference {dh_numeric:e}"
        )));
    }
    Ok(TiltSolution { a_t, residual, tau: r.tau(a_t), phi: r.phi(a_t), dh_analytic, dh_numeric })
}

/// Sharp approximation of `P(theta_hat_T >= c)` (or `<= c` below the truth).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SldpReport {
    pub regime: Regime,
    pub c: f64,
    pub horizon: f64,
    /// `"ge"` for `P(theta_hat >= c)`, `"le"` for `P(theta_hat <= c)`
    pub event: &'static str,
    pub rate: f64,
    pub a_c: Option<f64>,
    pub sigma_c: Option<f64>,
    pub j: Option<f64>,
    pub k: Option<f64>,
    pub b_c: Option<f64>,
    pub a_theta: Option<f64>,
    pub b_theta: Option<f64>,
    pub sigma_theta: Option<f64>,
    pub gamma_quarter: Option<f64>,
    pub tilt_a_t: Option<f64>,
    pub approx_prob: f64,
    /// Natural log of `approx_prob`, finite where `approx_prob` underflows.
    pub log_approx_prob: f64,
    /// `c = 0` and `c = theta/3` only: the expansion with the constant the
    /// exact computations support, without the `e^2` factor at `c = 0` and
    /// divided by `sqrt(2)` at the junction.
    pub approx_prob_corrected: Option<f64>,
    /// Set when the expansion exceeds 1 at this horizon.
    pub pre_asymptotic: bool,
}

pub fn tail_approx(params: &ModelParams, c: f64, horizon: f64) -> Result<SldpReport> {
    ensure_finite("T", horizon)?;
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    let th = params.theta();
    let g2 = params.gamma().powi(2);
    let t = horizon;
    let regime = classify(th, c)?;
    let rate = rate_theta(th, c)?;
    let mut report = SldpReport {
        regime,
        c,
        horizon: t,
        event: if regime.is_lower() { "le" } else { "ge" },
        rate,
        a_c: None,
        sigma_c: None,
        j: None,
        k: None,
        b_c: None,
        a_theta: None,
        b_theta: None,
        sigma_theta: None,
        gamma_quarter: None,
        tilt_a_t: None,
        approx_prob: f64::NAN,
        log_approx_prob: f64::NAN,
        approx_prob_corrected: None,
        pre_asymptotic: false,
    };
    let log_gauss = 0.5 * (2.0 * PI * t).ln();
    report.log_approx_prob = match regime {
        Regime::EasyUpper | Regime::LowerTail => {
            let p = prefactor_easy(params, c)?;
            report.a_c = Some(p.a_c);
            report.sigma_c = Some(p.sigma_c);
            report.j = Some(p.j);
            // a_c < 0 below the truth, so the leading minus keeps the value positive.
            let sign = if regime.is_lower() { -1.0 } else { 1.0 };
            -t * rate + p.j - (sign * p.a_c * p.sigma_c).ln() - log_gauss
        }
        Regime::General => {
            let p = prefactor_general(params, c)?;
            report.a_c = Some(p.a_c);
            report.sigma_c = Some(p.sigma_c);
            report.k = Some(p.k);
            report.b_c = Some(p.b_c);
            report.tilt_a_t = Some(solve_tilt(params, c, t)?.a_t);
            -t * rate + p.k - (p.a_c * p.sigma_c).ln() - log_gauss
        }
        Regime::Junction => {
            let p = prefactor_junction(th);
            let gq = gamma_quarter();
            report.a_theta = Some(p.a_theta);
            report.b_theta = Some(p.b_theta);
            report.sigma_theta = Some(p.sigma_theta);
            report.gamma_quarter = Some(gq);
            report.tilt_a_t = Some(solve_tilt(params, c, t)?.a_t);
            let printed = -t * rate + g2 * p.b_theta + gq.ln()
                - (6.0 * PI * 2f64.sqrt() * p.a_theta.powf(0.75) * p.sigma_theta).ln()
                - 0.25 * t.ln();
            report.approx_prob_corrected = Some((printed - 0.5 * 2f64.ln()).exp());
            printed
        }
        Regime::Zero => {
            let corrected = -t * rate + g2 / th + 0.5 * 2f64.ln() - log_gauss - 0.5 * (-th).ln();
            report.approx_prob_corrected = Some(corrected.exp());
            corrected + 2.0
        }
    };
    report.approx_prob = report.log_approx_prob.exp();
    report.pre_asymptotic = !(report.log_approx_prob < 0.0);
    Ok(report)
}

/// `P(theta_hat_T >= 0) = P(X_T^2 - 2 X_T Xbar_T >= T)` by quadrature over
/// the Gaussian law of `Xbar_T` of the conditional two-sided tail of `X_T`.
pub fn tail_exact_c0(params: &ModelParams, horizon: f64) -> Result<f64> {
    let t = horizon;
    let jm = joint_moments(params.theta(), params.gamma(), t)?;
    let sd_y = jm.c_t.sqrt();
    let slope = jm.b_t / jm.c_t;
    let cond_sd = (jm.det() / jm.c_t).sqrt();
    if !(cond_sd > 0.0) {
        return Err(Error::Numerical(format!("conditional variance of X_T is not positive at T = {t}")));
    }
    let inner = |z: f64| {
        let y = jm.mu_t + sd_y * z;
        let m = jm.m_t + slope * (y - jm.mu_t);
        let root = (y * y + t).sqrt();
        let upper = normal_sf((y + root - m) / cond_sd);
        let lower = normal_sf((m - (y - root)) / cond_sd);
        (upper + lower) * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
    };
    let q = integrate_real_line(inner, 1e-8, 0.0)?;
    let p = q.value;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numerical(format!("quadrature returned {p} outside (0, 1)")));
    }
    Ok(p)
}
