//! Small numerical kernels shared by the other modules: adaptive
//! Gauss-Kronrod quadrature, golden-section minimization, bracketed
//! bisection and order-stable summation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod abscissae / weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 20_000;

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub segments: usize,
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive 7/15 Gauss-Kronrod integration of `f` over `[lo, hi]`.
///
/// Stops once the summed error estimate falls below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "quadrature bounds must be finite, got [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(Quadrature { value: 0.0, error: 0.0, segments: 0 });
    }
    let (value, error) = kronrod(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut segments = 1;
    loop {
        if !total.is_finite() {
            return Err(Error::Numerical("integrand produced a non-finite value".into()));
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Quadrature { value: total, error: total_err, segments });
        }
        if segments >= MAX_SEGMENTS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge: estimate {total:e}, error {total_err:e} after {segments} segments"
            )));
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        let (lv, le) = kronrod(&f, worst.lo, mid);
        let (rv, re) = kronrod(&f, mid, worst.hi);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment { lo: worst.lo, hi: mid, value: lv, error: le });
        heap.push(Segment { lo: mid, hi: worst.hi, value: rv, error: re });
        segments += 1;
        // Re-sum occasionally so the running totals do not drift.
        if segments % 256 == 0 {
            total = pairwise_sum(&heap.iter().map(|s| s.value).collect::<Vec<_>>());
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integral over `[lo, +inf)` through the map `x = lo + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    integrate(
        |t| {
            let one_minus = 1.0 - t;
            let v = f(lo + t / one_minus) / (one_minus * one_minus);
            if v.is_finite() { v } else { 0.0 }
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Integral over the whole real line through the map `x = t / (1 - t^2)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, rel_tol: f64, abs_tol: f64) -> Result<Quadrature> {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            let v = f(t / d) * (1.0 + t * t) / (d * d);
            if v.is_finite() { v } else { 0.0 }
        },
        -1.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
///
/// Returns `(argmin, min)`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..400 {
        if (hi - lo).abs() <= x_tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Bisection for a sign change of `f` on `[lo, hi]`, run until the bracket
/// cannot shrink any further in floating point.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (left, right) = xs.split_at(xs.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}

/// `expm1(x) / x`, equal to 1 at the origin.
pub fn expm1_over_x(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Upper tail of the standard normal law, accurate in relative terms far
/// into the tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}
