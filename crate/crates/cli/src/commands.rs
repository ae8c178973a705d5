use std::fs::File;
use std::io::{BufWriter, Write};

use serde_json::Value;

use ouldp::cgf::{cgf_exact, log_det_m};
use ouldp::estimators::{discrepancy, mle, mle_tilde, suff_stats};
use ouldp::model::simulate_path_stream;
use ouldp::montecarlo::{estimate_tail, estimate_tail_is, Estimator, McConfig, TailEstimate};
use ouldp::rate::{rate_gamma, rate_joint, rate_theta};
use ouldp::sldp::{tail_approx, tail_exact_c0, Regime};
use ouldp::spectral::{count_above, decompose, series_cgf, spectral_limit, spectral_moment};
use ouldp::{Error, ModelParams, SimGrid};

use crate::output::{write_records, Format, Record};
use crate::{record, Cli, Command, EstimatorArg, ModelArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "output: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn model(m: &ModelArgs) -> Result<ModelParams> {
    Ok(ModelParams::new(m.theta, m.gamma)?)
}

fn estimator(e: EstimatorArg) -> Estimator {
    match e {
        EstimatorArg::Hat => Estimator::Hat,
        EstimatorArg::Tilde => Estimator::Tilde,
    }
}

fn decimals(s: &str) -> i32 {
    s.split_once('.').map_or(0, |(_, f)| f.trim_end_matches(|c: char| !c.is_ascii_digit()).len() as i32)
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return usage(format!("range {text:?} must be lo:hi:step"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("range {text:?}: {e}")))?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return usage(format!("range {text:?} needs finite lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return usage(format!("range {text:?} has more than 10^7 points"));
    }
    let scale = 10f64.powi(decimals(parts[0]).max(decimals(parts[2])));
    Ok((0..=n).map(|k| ((lo + k as f64 * step) * scale).round() / scale).collect())
}

pub fn run(cli: &Cli) -> Result<()> {
    let (records, default_format) = match &cli.command {
        Command::Rate(a) => (cmd_rate(a)?, Format::Csv),
        Command::Tail(a) => (vec![cmd_tail(a, cli.workers)?], Format::Jsonl),
        Command::Cgf(a) => (vec![cmd_cgf(a)?], Format::Jsonl),
        Command::Spectral(a) => (vec![cmd_spectral(a)?], Format::Jsonl),
        Command::Simulate(a) => (cmd_simulate(a)?, Format::Csv),
        Command::Estimate(a) => (cmd_estimate(a)?, Format::Csv),
    };
    let format = cli.format.unwrap_or(default_format);
    match &cli.output {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
            write_records(BufWriter::new(f), format, &records)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_records(&mut lock, format, &records)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn values(single: Option<f64>, range: &Option<String>) -> Result<Vec<Option<f64>>> {
    Ok(match (single, range) {
        (Some(v), _) => vec![Some(v)],
        (None, Some(r)) => parse_range(r)?.into_iter().map(Some).collect(),
        (None, None) => vec![None],
    })
}

fn cmd_rate(a: &crate::RateArgs) -> Result<Vec<Record>> {
    let params = model(&a.model)?;
    let cs = values(a.c, &a.c_range)?;
    let ds = values(a.d, &a.d_range)?;
    if cs[0].is_none() && ds[0].is_none() {
        return usage("rate needs --c, --c-range, --d or --d-range");
    }
    let mut rows = Vec::with_capacity(cs.len() * ds.len());
    for &c in &cs {
        let i_theta = c.map(|c| rate_theta(params.theta(), c)).transpose()?;
        for &d in &ds {
            let i_joint = c.zip(d).map(|(c, d)| rate_joint(&params, c, d));
            let i_gamma = d.map(|d| rate_gamma(&params, d).value);
            rows.push(record! {
                "c" => c, "d" => d, "i_joint" => i_joint, "i_theta" => i_theta, "i_gamma" => i_gamma,
            });
        }
    }
    Ok(rows)
}

fn mc_fields(r: &mut Record, e: &TailEstimate, approx: f64) {
    r.insert("mc_method".into(), serde_json::to_value(e.method).unwrap_or(Value::Null));
    r.insert("mc_p_hat".into(), e.p_hat.into());
    r.insert("mc_stderr".into(), e.stderr.into());
    r.insert("mc_paths".into(), e.n_paths.into());
    r.insert("mc_ess".into(), serde_json::json!(e.ess));
    r.insert("mc_warning".into(), serde_json::json!(e.warning));
    r.insert("ratio_mc".into(), serde_json::json!(approx / e.p_hat));
}

fn cmd_tail(a: &crate::TailArgs, workers: usize) -> Result<Record> {
    let params = model(&a.model)?;
    if !(a.horizon > 0.0) {
        return usage(format!("T must be positive, got {}", a.horizon));
    }
    let rep = tail_approx(&params, a.c, a.horizon)?;
    let mut r = record! {
        "theta" => a.model.theta, "gamma" => a.model.gamma, "c" => a.c, "T" => a.horizon,
        "regime" => rep.regime.name(), "event" => rep.event, "rate" => rep.rate,
        "a_c" => rep.a_c, "sigma_c" => rep.sigma_c, "j" => rep.j, "k" => rep.k, "b_c" => rep.b_c,
        "a_theta" => rep.a_theta, "b_theta" => rep.b_theta, "sigma_theta" => rep.sigma_theta,
        "gamma_quarter" => rep.gamma_quarter, "tilt_a_t" => rep.tilt_a_t,
        "approx_prob" => rep.approx_prob, "log_approx_prob" => rep.log_approx_prob,
        "approx_prob_corrected" => rep.approx_prob_corrected, "pre_asymptotic" => rep.pre_asymptotic,
    };
    if a.exact_c0 {
        if rep.regime != Regime::Zero {
            return usage(format!("--exact-c0 needs c = 0, got c = {}", a.c));
        }
        let exact = tail_exact_c0(&params, a.horizon)?;
        r.insert("exact_prob".into(), exact.into());
        r.insert("ratio_exact".into(), serde_json::json!(rep.approx_prob / exact));
        r.insert("ratio_exact_corrected".into(), serde_json::json!(rep.approx_prob_corrected.map(|p| p / exact)));
    }
    if let Some(n) = a.mc {
        let grid = SimGrid::with_step(a.horizon, a.dt)?;
        let mut cfg = McConfig::new(n, grid, a.seed)?.with_workers(workers)?.with_estimator(estimator(a.estimator));
        let est = if a.is {
            let tilt = match a.tilt {
                Some(t) => t,
                None if a.c < 0.0 => a.c,
                None => {
                    return usage(format!(
                        "--is has no default tilt for c = {} >= 0 (the tilted law would be explosive); pass --tilt",
                        a.c
                    ))
                }
            };
            cfg = cfg.with_tilt(tilt)?;
            r.insert("mc_tilt".into(), tilt.into());
            estimate_tail_is(&params, a.c, a.horizon, &cfg)?
        } else {
            estimate_tail(&params, a.c, a.horizon, &cfg)?
        };
        mc_fields(&mut r, &est, rep.approx_prob);
    }
    Ok(r)
}

fn cmd_cgf(a: &crate::CgfArgs) -> Result<Record> {
    let params = model(&a.model)?;
    let b = cgf_exact(&params, a.a, a.b, a.horizon)?;
    let ldm = log_det_m(&params, a.a, a.b, a.horizon)?;
    Ok(record! {
        "theta" => a.model.theta, "gamma" => a.model.gamma, "a" => a.a, "b" => a.b, "T" => a.horizon,
        "value_exact" => b.value_exact, "leading" => b.leading, "correction" => b.correction,
        "remainder" => b.remainder, "log_det_m" => ldm,
    })
}

fn cmd_spectral(a: &crate::SpectralArgs) -> Result<Record> {
    let params = model(&a.model)?;
    let grid = SimGrid::new(a.horizon, a.steps)?;
    let d = decompose(&params, a.a, a.b, &grid)?;
    let moment = spectral_moment(&d, a.p)?;
    let limit = spectral_limit(a.model.theta, a.b, a.p)?;
    let mut r = record! {
        "theta" => a.model.theta, "gamma" => a.model.gamma, "a" => a.a, "b" => a.b, "p" => a.p,
        "T" => a.horizon, "steps" => a.steps, "mean" => d.mean, "n_alpha" => d.alphas.len(),
        "max_abs_alpha" => d.max_abs_alpha, "beta_sq_sum" => d.beta_sq_sum,
        "moment" => moment, "limit" => limit, "rel_err" => (moment - limit) / limit,
    };
    if let Some(x) = a.x {
        r.insert("x".into(), x.into());
        r.insert("series_cgf".into(), series_cgf(&d, x)?.into());
        let exact = cgf_exact(&params, x * a.a, x * a.b, a.horizon).ok().map(|b| b.value_exact);
        r.insert("cgf_exact".into(), serde_json::json!(exact));
    }
    if let Some(eps) = a.eps {
        r.insert("eps".into(), eps.into());
        r.insert("q_t".into(), count_above(&d, eps).into());
    }
    Ok(r)
}

fn cmd_simulate(a: &crate::SimulateArgs) -> Result<Vec<Record>> {
    let params = model(&a.model)?;
    let grid = SimGrid::new(a.horizon, a.steps)?;
    let path = simulate_path_stream(&params, &grid, a.seed, 0);
    Ok(path.values.iter().enumerate().map(|(i, &x)| record! {"t" => grid.time(i), "x" => x}).collect())
}

fn cmd_estimate(a: &crate::EstimateArgs) -> Result<Vec<Record>> {
    let params = model(&a.model)?;
    let grid = SimGrid::new(a.horizon, a.steps)?;
    if a.paths == 0 {
        return usage("paths must be at least 1");
    }
    (0..a.paths)
        .map(|i| {
            let s = suff_stats(&simulate_path_stream(&params, &grid, a.seed, i as u64))?;
            let (th, gh) = mle(&s)?;
            let (tt, gt) = mle_tilde(&s)?;
            let d = discrepancy(&s)?;
            Ok(record! {
                "path" => i, "x_t" => s.x_t, "int_x" => s.int_x, "int_x2" => s.int_x2, "s_t" => s.s_t,
                "theta_hat" => th, "gamma_hat" => gh, "theta_tilde" => tt, "gamma_tilde" => gt,
                "d_theta" => d.d_theta, "d_gamma" => d.d_gamma,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_rounded_to_input_precision() {
        let r = parse_range("-1:5:0.01").unwrap();
        assert_eq!(r.len(), 601);
        assert_eq!(r[7], -0.93);
        assert_eq!(*r.last().unwrap(), 5.0);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }
}
