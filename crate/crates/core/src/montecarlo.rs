//! Parallel Monte Carlo over exact-transition paths.
//!
//! Path `i` draws its noise from stream `i` of the master seed, and every
//! total is a pairwise sum in path order, so results do not depend on the
//! number of workers.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{discrepancy, equivalence_bound, mle, mle_tilde, StatsAccumulator, SuffStats};
use crate::model::{stream_rng, ExactStepper, ModelParams, SimGrid};
use crate::numeric::pairwise_sum;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Maximum-likelihood `(theta_hat, gamma_hat)`.
    Hat,
    /// `(theta_tilde, gamma_tilde)`
    Tilde,
}

impl Estimator {
    pub fn apply(&self, stats: &SuffStats) -> Result<(f64, f64)> {
        match self {
            Estimator::Hat => mle(stats),
            Estimator::Tilde => mle_tilde(stats),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub grid: SimGrid,
    pub seed: u64,
    pub estimator: Estimator,
    /// Drift of the sampling law for importance sampling.
    pub tilt: Option<f64>,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, grid: SimGrid, seed: u64) -> Result<Self> {
        let cfg = Self { n_paths, grid, seed, estimator: Estimator::Hat, tilt: None, workers: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tilt(mut self, tilt: f64) -> Result<Self> {
        self.tilt = Some(tilt);
        self.validate()?;
        Ok(self)
    }

    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        self.workers = workers;
        self.validate()?;
        Ok(self)
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    /// Same configuration on a grid of horizon `t` with the current step.
    pub fn at_horizon(&self, t: f64) -> Result<Self> {
        let n = (t / self.grid.dt()).round().max(1.0) as usize;
        Ok(Self { grid: SimGrid::new(t, n)?, ..*self })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidParameter(format!("n_paths must be at least 100, got {}", self.n_paths)));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        if let Some(t) = self.tilt {
            if !(t < 0.0) {
                return Err(Error::InvalidParameter(format!("tilt must be strictly negative, got {t}")));
            }
        }
        Ok(())
    }
}

/// Applies `f` to the sufficient statistics of every path, in path order.
pub fn map_paths<T, F>(params: &ModelParams, cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SuffStats) -> Result<T> + Sync,
{
    cfg.validate()?;
    let stepper = ExactStepper::new(params, cfg.grid.dt());
    let n_steps = cfg.grid.n_steps();
    let horizon = cfg.grid.horizon();
    let run_chunk = |k: usize| -> Result<Vec<T>> {
        let lo = k * CHUNK;
        let hi = (lo + CHUNK).min(cfg.n_paths);
        (lo..hi)
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, i as u64);
                let mut acc = StatsAccumulator::new(cfg.grid.dt());
                let mut x = 0.0;
                for _ in 0..n_steps {
                    x = stepper.step(x, StandardNormal.sample(&mut rng));
                    acc.push(x);
                }
                let mut stats = acc.finish()?;
                stats.horizon = horizon;
                f(&stats)
            })
            .collect()
    };
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let chunks: Vec<Result<Vec<T>>> = pool.install(|| (0..n_chunks).into_par_iter().map(run_chunk).collect());
    let mut out = Vec::with_capacity(cfg.n_paths);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// `E f` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

fn mean_and_stderr(values: &[f64]) -> MeanEstimate {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    MeanEstimate { mean, stderr: (var / n).sqrt(), n_paths: values.len() }
}

pub fn mc_mean<F>(params: &ModelParams, cfg: &McConfig, f: F) -> Result<MeanEstimate>
where
    F: Fn(&SuffStats) -> Result<f64> + Sync,
{
    Ok(mean_and_stderr(&map_paths(params, cfg, f)?))
}

/// `Z_T(a, b) = a int (X - Xbar) dX + b S_T`
pub fn z_functional(stats: &SuffStats, a: f64, b: f64) -> f64 {
    a * (stats.int_x_dx - stats.mean() * stats.x_t) + b * stats.s_t
}

/// Estimator pairs for every path.
pub fn estimator_sample(params: &ModelParams, cfg: &McConfig) -> Result<Vec<(f64, f64)>> {
    map_paths(params, cfg, |s| cfg.estimator.apply(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Plain,
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub method: Method,
    /// `"ge"` for `theta_hat >= c`, `"le"` below the truth.
    pub event: &'static str,
    /// Effective sample size of the likelihood-ratio weights.
    pub ess: Option<f64>,
    pub warning: Option<String>,
}

/// Upper tail unless `c` lies below the true drift.
pub fn tail_event(theta: f64, c: f64) -> &'static str {
    if c < theta {
        "le"
    } else {
        "ge"
    }
}

fn hits(event: &str, est: f64, c: f64) -> bool {
    match event {
        "le" => est <= c,
        _ => est >= c,
    }
}

/// Plain Monte Carlo estimate of `P(event)` with binomial standard error.
pub fn estimate_event<F>(params: &ModelParams, cfg: &McConfig, event: F) -> Result<TailEstimate>
where
    F: Fn(&SuffStats) -> Result<bool> + Sync,
{
    let flags = map_paths(params, cfg, |s| event(s).map(|b| if b { 1.0 } else { 0.0 }))?;
    let n = flags.len() as f64;
    let p = pairwise_sum(&flags) / n;
    Ok(TailEstimate {
        p_hat: p,
        stderr: (p * (1.0 - p) / n).sqrt(),
        n_paths: flags.len(),
        method: Method::Plain,
        event: "ge",
        ess: None,
        warning: None,
    })
}

pub fn estimate_tail(params: &ModelParams, c: f64, horizon: f64, cfg: &McConfig) -> Result<TailEstimate> {
    if c.is_nan() {
        return Err(Error::InvalidParameter("c must not be NaN".into()));
    }
    let cfg = cfg_for(cfg, horizon)?;
    let event = tail_event(params.theta(), c);
    let mut out = estimate_event(params, &cfg, |s| Ok(hits(event, cfg.estimator.apply(s)?.0, c)))?;
    out.event = event;
    Ok(out)
}

fn cfg_for(cfg: &McConfig, horizon: f64) -> Result<McConfig> {
    if (cfg.grid.horizon() - horizon).abs() <= 1e-12 * horizon {
        Ok(*cfg)
    } else {
        cfg.at_horizon(horizon)
    }
}

/// Log likelihood ratio of the `(theta, gamma)` law against the
/// `(tilt, 0)` law on one path.
pub fn log_weight(params: &ModelParams, tilt: f64, s: &SuffStats) -> f64 {
    let th = params.theta();
    let g = params.gamma();
    (th - tilt) * s.int_x_dx + g * s.x_t
        - 0.5 * ((th * th - tilt * tilt) * s.int_x2 + 2.0 * th * g * s.int_x + g * g * s.horizon)
}

const ESS_WARN: f64 = 0.01;

/// Importance-sampled tail: paths drawn with drift `cfg.tilt` and no shift,
/// indicator weighted by the likelihood ratio.
pub fn estimate_tail_is(params: &ModelParams, c: f64, horizon: f64, cfg: &McConfig) -> Result<TailEstimate> {
    let tilt = cfg
        .tilt
        .ok_or_else(|| Error::InvalidParameter("importance sampling needs a tilt".into()))?;
    if c.is_nan() {
        return Err(Error::InvalidParameter("c must not be NaN".into()));
    }
    let cfg = cfg_for(cfg, horizon)?;
    let sampling = ModelParams::new(tilt, 0.0)?;
    let event = tail_event(params.theta(), c);
    let pairs = map_paths(&sampling, &cfg, |s| {
        let w = log_weight(params, tilt, s).exp();
        let hit = hits(event, cfg.estimator.apply(s)?.0, c);
        Ok((w, if hit { w } else { 0.0 }))
    })?;
    let weights: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let est = mean_and_stderr(&values);
    let sum_w = pairwise_sum(&weights);
    let sum_w2 = pairwise_sum(&weights.iter().map(|w| w * w).collect::<Vec<_>>());
    let ess = sum_w * sum_w / sum_w2;
    let n = pairs.len();
    let warning = (ess < ESS_WARN * n as f64)
        .then(|| format!("effective sample size {ess:.1} is below {:.0}% of {n} paths", 100.0 * ESS_WARN));
    Ok(TailEstimate {
        p_hat: est.mean,
        stderr: est.stderr,
        n_paths: n,
        method: Method::Tilted,
        event,
        ess: Some(ess),
        warning,
    })
}

/// Plain estimate of `P(theta_hat >= c, |gamma_hat - d| < delta)`.
pub fn estimate_joint_tail(
    params: &ModelParams,
    c: f64,
    d: f64,
    delta: f64,
    horizon: f64,
    cfg: &McConfig,
) -> Result<TailEstimate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let cfg = cfg_for(cfg, horizon)?;
    estimate_event(params, &cfg, |s| {
        let (th, g) = cfg.estimator.apply(s)?;
        Ok(th >= c && (g - d).abs() < delta)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopePoint {
    pub horizon: f64,
    pub p_hat: f64,
    pub stderr: f64,
    /// `-(1/T) log p_hat`
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub points: Vec<SlopePoint>,
    /// Least-squares limit of `value - log(T)/(2T) = I + K/T`.
    pub limit: Option<f64>,
    pub warnings: Vec<String>,
}

fn check_horizons(t_list: &[f64]) -> Result<()> {
    if t_list.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 horizons, got {}", t_list.len())));
    }
    if t_list.iter().any(|t| !(t.is_finite() && *t > 0.0)) || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Empirical large-deviation slope; importance-sampled when `cfg.tilt` is set.
pub fn ldp_slope(params: &ModelParams, c: f64, t_list: &[f64], cfg: &McConfig) -> Result<SlopeReport> {
    ldp_slope_by(t_list, |t| {
        if cfg.tilt.is_some() {
            estimate_tail_is(params, c, t, cfg)
        } else {
            estimate_tail(params, c, t, cfg)
        }
    })
}

/// Slope of a generic tail estimate over the horizons.
pub fn ldp_slope_by<F>(t_list: &[f64], mut estimate: F) -> Result<SlopeReport>
where
    F: FnMut(f64) -> Result<TailEstimate>,
{
    check_horizons(t_list)?;
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for &t in t_list {
        let e = estimate(t)?;
        if let Some(w) = e.warning {
            warnings.push(format!("T = {t}: {w}"));
        }
        if e.p_hat > 0.0 {
            points.push(SlopePoint { horizon: t, p_hat: e.p_hat, stderr: e.stderr, value: -e.p_hat.ln() / t });
        } else {
            warnings.push(format!("T = {t}: no hits, dropped"));
        }
    }
    let limit = (points.len() >= 2).then(|| {
        let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.horizon).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.value - p.horizon.ln() / (2.0 * p.horizon)).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        my - sxy / sxx * mx
    });
    Ok(SlopeReport { points, limit, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivRow {
    pub horizon: f64,
    pub eps: f64,
    pub n_paths: usize,
    /// Paths with `|(theta_hat, gamma_hat) - (theta_tilde, gamma_tilde)| > eps`.
    pub exceedances: usize,
    /// Paths where the per-path algebraic bound fails.
    pub bound_violations: usize,
    /// Paths where the closed-form discrepancy disagrees with direct subtraction.
    pub identity_failures: usize,
}

pub const EQUIV_EPS: [f64; 2] = [0.1, 0.05];

pub fn exp_equiv_probe(params: &ModelParams, t_list: &[f64], cfg: &McConfig) -> Result<Vec<EquivRow>> {
    if t_list.is_empty() || t_list.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("horizons must be positive".into()));
    }
    let mut rows = Vec::new();
    for &t in t_list {
        let cfg = cfg_for(cfg, t)?;
        // (norm, bound holds, identity holds)
        let per_path = map_paths(params, &cfg, |s| match equivalence_bound(s) {
            Ok(b) => Ok((b.norm, b.holds(), true)),
            Err(Error::Consistency(_)) => {
                let d = discrepancy_unchecked(s)?;
                Ok((d, true, false))
            }
            Err(e) => Err(e),
        })?;
        let bound_violations = per_path.iter().filter(|p| !p.1).count();
        let identity_failures = per_path.iter().filter(|p| !p.2).count();
        for eps in EQUIV_EPS {
            rows.push(EquivRow {
                horizon: t,
                eps,
                n_paths: per_path.len(),
                exceedances: per_path.iter().filter(|p| p.0 > eps).count(),
                bound_violations,
                identity_failures,
            });
        }
    }
    Ok(rows)
}

fn discrepancy_unchecked(s: &SuffStats) -> Result<f64> {
    let (a, b) = mle(s)?;
    let (c, d) = mle_tilde(s)?;
    Ok((a - c).hypot(b - d))
}

/// Largest per-path mismatch between the closed-form discrepancies and
/// direct subtraction of the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    /// Relative to `|closed form|` or the size of the subtracted estimates,
    /// whichever is larger.
    pub max_scaled: f64,
    /// Relative to `|closed form|` alone.
    pub max_naive: f64,
}

pub fn identity_check(params: &ModelParams, cfg: &McConfig) -> Result<IdentityCheck> {
    let errs = map_paths(params, cfg, |s| {
        let (th, gh) = mle(s)?;
        let (tt, gt) = mle_tilde(s)?;
        let d = discrepancy(s)?;
        let rel = |x: f64, y: f64, scale: f64| (x - y).abs() / x.abs().max(scale).max(f64::MIN_POSITIVE);
        let scaled = rel(d.d_theta, d.d_theta_direct, th.abs() + tt.abs())
            .max(rel(d.d_gamma, d.d_gamma_direct, gh.abs() + gt.abs()));
        let naive = rel(d.d_theta, d.d_theta_direct, 0.0).max(rel(d.d_gamma, d.d_gamma_direct, 0.0));
        Ok((scaled, naive))
    })?;
    Ok(IdentityCheck {
        max_scaled: errs.iter().map(|e| e.0).fold(0.0, f64::max),
        max_naive: errs.iter().map(|e| e.1).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(theta: f64, gamma: f64) -> ModelParams {
        ModelParams::new(theta, gamma).unwrap()
    }

    fn cfg(n: usize, t: f64, steps: usize, seed: u64) -> McConfig {
        McConfig::new(n, SimGrid::new(t, steps).unwrap(), seed).unwrap()
    }

    #[test]
    fn config_validation() {
        let g = SimGrid::new(1.0, 10).unwrap();
        assert!(McConfig::new(99, g, 0).is_err());
        assert!(McConfig::new(100, g, 0).unwrap().with_tilt(0.0).is_err());
        assert!(McConfig::new(100, g, 0).unwrap().with_workers(0).is_err());
    }

    #[test]
    fn certain_event() {
        let m = p(-2.0, 0.0);
        let e = estimate_tail(&m, -1e300, 2.0, &cfg(500, 2.0, 50, 1)).unwrap();
        assert_eq!((e.event, e.p_hat, e.stderr), ("le", 0.0, 0.0));
        let e = estimate_tail(&m, f64::NEG_INFINITY, 2.0, &cfg(500, 2.0, 50, 1)).unwrap();
        assert_eq!((e.p_hat, e.stderr), (0.0, 0.0));
        let e = estimate_event(&m, &cfg(500, 2.0, 50, 1), |_| Ok(true)).unwrap();
        assert_eq!((e.p_hat, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn identity_tilt_has_unit_weights() {
        let m = p(-2.0, 0.0);
        let c = cfg(2000, 3.0, 150, 4).with_tilt(-2.0).unwrap();
        let plain = estimate_tail(&m, -1.0, 3.0, &c).unwrap();
        let tilted = estimate_tail_is(&m, -1.0, 3.0, &c).unwrap();
        assert_eq!(plain.p_hat, tilted.p_hat);
        assert_eq!(tilted.ess, Some(2000.0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let m = p(-2.0, 0.5);
        let c1 = cfg(5000, 2.0, 100, 9);
        let c3 = c1.with_workers(3).unwrap();
        let a = estimate_tail(&m, -1.0, 2.0, &c1).unwrap();
        let b = estimate_tail(&m, -1.0, 2.0, &c3).unwrap();
        assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
        let zt = |s: &SuffStats| Ok(z_functional(s, 0.1, -0.2).exp());
        assert_eq!(mc_mean(&m, &c1, zt).unwrap(), mc_mean(&m, &c3, zt).unwrap());
    }

    #[test]
    fn log_weight_is_zero_at_identity() {
        let m = p(-1.5, 0.0);
        let s = SuffStats::new(0.4, 1.2, 3.0, 5.0).unwrap();
        assert_eq!(log_weight(&m, -1.5, &s), 0.0);
    }

    #[test]
    fn slope_fit_recovers_linear_model() {
        let ts = [5.0, 10.0, 20.0];
        let r = ldp_slope_by(&ts, |t| {
            let v = 0.25 + t.ln() / (2.0 * t) + 0.7 / t;
            Ok(TailEstimate {
                p_hat: (-v * t).exp(),
                stderr: 0.0,
                n_paths: 100,
                method: Method::Plain,
                event: "ge",
                ess: None,
                warning: None,
            })
        })
        .unwrap();
        assert!((r.limit.unwrap() - 0.25).abs() < 1e-12);
        assert!(ldp_slope_by(&[1.0, 2.0], |_| unreachable!()).is_err());
        assert!(ldp_slope_by(&[1.0, 3.0, 2.0], |_| unreachable!()).is_err());
    }
}
