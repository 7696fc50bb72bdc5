//! Small numeric helpers shared by the sampler, predictors and diagnostics.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 when fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// log(sum(exp(xs))) without overflow; -inf for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Effective sample size of a correlated chain via the initial positive
/// sequence of autocovariances (Geyer truncation).
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let rho_a = autocov(xs, m, lag) / var;
        let rho_b = autocov(xs, m, lag + 1) / var;
        if rho_a + rho_b <= 0.0 {
            break;
        }
        sum_rho += rho_a + rho_b;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_rho)).min(n as f64).max(1.0)
}

fn autocov(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    (0..n - lag).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum::<f64>() / n as f64
}

/// Monte Carlo standard error of the chain mean, adjusted for
/// autocorrelation through the effective sample size.
pub fn mc_standard_error(xs: &[f64]) -> f64 {
    let ess = effective_sample_size(xs);
    (sample_variance(xs) / ess).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic: sup |F_a - F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            i += 1;
        } else if b[j] < a[i] {
            j += 1;
        } else {
            // consume ties on both sides before evaluating the gap
            let v = a[i];
            while i < a.len() && a[i] == v {
                i += 1;
            }
            while j < b.len() && b[j] == v {
                j += 1;
            }
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical_value(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

/// Half-width of the normal-approximation 95% binomial confidence interval.
pub fn binomial_ci_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}
