//! Discretized Wiener-chaos decomposition of
//! `Z_T(a, b) = a int (X - Xbar) dX + b S_T`.
//!
//! On a grid, `Y = X - E X` at the nodes is `L xi` with `xi` i.i.d. standard
//! normal and `L[i][j] = s rho^(i-j)` the exact OU transition factor. Then
//! `Z = E Z + 2 (Qm)' L xi + xi' (L'QL) xi - tr(L'QL)`, so the chaos weights are
//! the eigenvalues of `S = L'QL` and the linear weights are `2 L'Qm` rotated
//! into its eigenbasis.

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, SimGrid};
use crate::numeric::{expm1_over_x, integrate_real_line, pairwise_sum};

#[derive(Debug, Clone, Serialize)]
pub struct ChaosDecomposition {
    pub a: f64,
    pub b: f64,
    /// `E[Z_T(a, b)]`
    pub mean: f64,
    /// Sorted by decreasing absolute value.
    pub alphas: Vec<f64>,
    /// Paired with `alphas`; all zero when the linear chaos vanishes.
    pub betas: Vec<f64>,
    /// `max |alpha_k|`
    pub max_abs_alpha: f64,
    /// `sum beta_k^2`
    pub beta_sq_sum: f64,
    #[serde(skip)]
    pub grid: SimGrid,
}

impl ChaosDecomposition {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }
}

/// `y[j] = s sum_{i >= j} rho^(i-j) x[i]`
fn apply_lt(x: &[f64], rho: f64, s: f64) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    let mut acc = 0.0;
    for j in (0..x.len()).rev() {
        acc = x[j] + rho * acc;
        y[j] = s * acc;
    }
    y
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    pairwise_sum(&x.iter().zip(y).map(|(a, b)| a * b).collect::<Vec<_>>())
}

pub fn decompose(params: &ModelParams, a: f64, b: f64, grid: &SimGrid) -> Result<ChaosDecomposition> {
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
        }
    }
    let th = params.theta();
    let gamma = params.gamma();
    let t = grid.horizon();
    let n = grid.n_steps();
    let dt = grid.dt();
    let rho = (th * dt).exp();
    let s = (dt * expm1_over_x(2.0 * th * dt)).sqrt();

    // Node k + 1 of the grid; the initial node is deterministic.
    let w: Vec<f64> = grid.trapezoid_weights()[1..].to_vec();
    let m: Vec<f64> = (1..=n)
        .map(|i| {
            let ti = grid.time(i);
            gamma * ti * expm1_over_x(th * ti)
        })
        .collect();

    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    let u = apply_lt(&e, rho, s);
    let v = apply_lt(&w, rho, s);

    // (L'WL)[j][k] = s^2 rho^|j-k| R[max(j,k)], R[m] = sum_{i>=m} w_i rho^(2(i-m)).
    let mut r = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc = w[i] + rho * rho * acc;
        r[i] = acc;
    }
    let rho_pow: Vec<f64> = {
        let mut p = vec![1.0; n];
        for k in 1..n {
            p[k] = p[k - 1] * rho;
        }
        p
    };
    let s2 = s * s;
    let sm = Mat::<f64>::from_fn(n, n, |j, k| {
        let hi = j.max(k);
        b * s2 * rho_pow[j.abs_diff(k)] * r[hi] + 0.5 * a * u[j] * u[k]
            - 0.5 * a / t * (u[j] * v[k] + v[j] * u[k])
            - b / t * v[j] * v[k]
    });

    let em = m[n - 1];
    let wm = dot(&w, &m);
    let qm: Vec<f64> = (0..n)
        .map(|i| b * w[i] * m[i] + 0.5 * a * e[i] * em - 0.5 * a / t * (e[i] * wm + w[i] * em) - b / t * w[i] * wm)
        .collect();
    let lin: Vec<f64> = apply_lt(&qm, rho, s).into_iter().map(|x| 2.0 * x).collect();
    let trace = pairwise_sum(&(0..n).map(|i| sm[(i, i)]).collect::<Vec<_>>());
    let mean = dot(&m, &qm) + trace - 0.5 * a * t;

    let (mut pairs, has_linear) = if lin.iter().all(|&x| x == 0.0) {
        let vals = sm
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
        (vals.into_iter().map(|x| (x, 0.0)).collect::<Vec<_>>(), false)
    } else {
        let evd = sm
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
        let vecs = evd.U();
        let vals = evd.S().column_vector();
        let pairs = (0..n)
            .map(|k| {
                let beta = pairwise_sum(&(0..n).map(|i| vecs[(i, k)] * lin[i]).collect::<Vec<_>>());
                (vals[k], beta)
            })
            .collect::<Vec<_>>();
        (pairs, true)
    };
    pairs.sort_by(|x, y| y.0.abs().total_cmp(&x.0.abs()));
    let alphas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let betas: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let alpha_sum = pairwise_sum(&alphas);
    if (alpha_sum - trace).abs() > 1e-8 * (1.0 + alphas.iter().map(|x| x.abs()).sum::<f64>()) {
        return Err(Error::Consistency(format!("sum of eigenvalues {alpha_sum:e} vs trace {trace:e}")));
    }
    let beta_sq_sum = pairwise_sum(&betas.iter().map(|x| x * x).collect::<Vec<_>>());
    if has_linear {
        let lin_sq = dot(&lin, &lin);
        if (beta_sq_sum - lin_sq).abs() > 1e-8 * (1.0 + lin_sq) {
            return Err(Error::Consistency(format!("rotated linear part {beta_sq_sum:e} vs {lin_sq:e}")));
        }
    }
    Ok(ChaosDecomposition {
        a,
        b,
        mean,
        max_abs_alpha: alphas.first().map_or(0.0, |x| x.abs()),
        alphas,
        betas,
        beta_sq_sum,
        grid: *grid,
    })
}

/// `L_T(xa, xb)` from the chaos expansion.
pub fn series_cgf(decomp: &ChaosDecomposition, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("x must be finite, got {x}")));
    }
    if 2.0 * x.abs() * decomp.max_abs_alpha >= 1.0 {
        return Err(Error::Domain(format!(
            "|x| = {} is outside the radius 1/(2 max|alpha|) = {}",
            x.abs(),
            0.5 / decomp.max_abs_alpha
        )));
    }
    let t = decomp.horizon();
    let terms: Vec<f64> = decomp
        .alphas
        .iter()
        .zip(&decomp.betas)
        .map(|(&al, &be)| {
            let y = 2.0 * x * al;
            -0.5 * ((-y).ln_1p() + y) + 0.5 * (x * be).powi(2) / (1.0 - y)
        })
        .collect();
    Ok((x * decomp.mean + pairwise_sum(&terms)) / t)
}

fn check_power(p: u32) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    Ok(())
}

/// `(1/T) sum alpha_k^p`
pub fn spectral_moment(decomp: &ChaosDecomposition, p: u32) -> Result<f64> {
    check_power(p)?;
    let terms: Vec<f64> = decomp.alphas.iter().map(|a| a.powi(p as i32)).collect();
    Ok(pairwise_sum(&terms) / decomp.horizon())
}

/// `(1/2pi) int (b g(x))^p dx` with `g(x) = 1/(theta^2 + x^2)`.
pub fn spectral_limit(theta: f64, b: f64, p: u32) -> Result<f64> {
    check_power(p)?;
    if !(theta < 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be strictly negative, got {theta}")));
    }
    let th = theta.abs();
    match p {
        2 => Ok(b * b / (4.0 * th.powi(3))),
        3 => Ok(3.0 * b.powi(3) / (16.0 * th.powi(5))),
        _ => {
            let q = integrate_real_line(|x| (b / (theta * theta + x * x)).powi(p as i32), 1e-12, 0.0)?;
            Ok(q.value / (2.0 * std::f64::consts::PI))
        }
    }
}

/// Number of `alpha_k` with `|alpha_k| >= eps`.
pub fn count_above(decomp: &ChaosDecomposition, eps: f64) -> usize {
    decomp.alphas.iter().take_while(|a| a.abs() >= eps).count()
}
