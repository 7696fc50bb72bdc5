//! Convergence diagnostics: Gelman-Rubin potential scale reduction and
//! autocorrelation functions.

use crate::error::{data_err, Result};
use crate::stats::{mean, sample_variance};

/// Potential scale reduction factor with a degeneracy flag for chains with
/// no within-chain variance.
#[derive(Clone, Copy, Debug)]
pub struct Psrf {
    pub value: f64,
    pub degenerate: bool,
}

/// Gelman-Rubin PSRF over m >= 2 chains of equal length (1992 formula
/// without the degrees-of-freedom correction):
/// B = n var(chain means), W = mean(within variances),
/// V = (n-1)/n W + B/n, PSRF = sqrt(V/W).
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<Psrf> {
    if chains.len() < 2 {
        return data_err("gelman-rubin needs at least two chains");
    }
    let n = chains[0].len();
    if n < 10 {
        return data_err("gelman-rubin needs at least 10 draws per chain");
    }
    if chains.iter().any(|c| c.len() != n) {
        return data_err("chains must have equal lengths");
    }

    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within: Vec<f64> = chains.iter().map(|c| sample_variance(c)).collect();
    let w = mean(&within);
    if w == 0.0 {
        return Ok(Psrf { value: 1.0, degenerate: true });
    }
    let b = n as f64 * sample_variance(&means);
    let v = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Ok(Psrf { value: (v / w).sqrt(), degenerate: false })
}

/// Split-Rhat variant: one chain halved and compared against itself.
pub fn split_rhat(chain: &[f64]) -> Result<Psrf> {
    let half = chain.len() / 2;
    // drop the middle draw when the length is odd
    gelman_rubin(&[&chain[..half], &chain[chain.len() - half..]])
}

/// Normalized autocorrelation function up to `max_lag` inclusive, plus a
/// flag for zero-variance traces (ACF reported as zeros then).
pub fn autocorrelation(trace: &[f64], max_lag: usize) -> Result<(Vec<f64>, bool)> {
    let n = trace.len();
    if n <= max_lag {
        return data_err(format!("trace of length {n} cannot support lag {max_lag}"));
    }
    let m = mean(trace);
    let denom: f64 = trace.iter().map(|&x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        return Ok((vec![0.0; max_lag + 1], true));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let num: f64 = (0..n - lag).map(|t| (trace[t] - m) * (trace[t + lag] - m)).sum();
        acf.push(num / denom);
    }
    Ok((acf, false))
}
