//! Leave-one-out subtype classification.
//!
//! The Bayesian route reuses a single posterior run: per retained draw the
//! trace stores each subject's log-likelihood under every candidate subtype,
//! and classification reweights the draws by the inverse of the subject's
//! own likelihood, which removes that subject's contribution from the
//! posterior without refitting. Naive-Bayes and per-voxel Firth baselines
//! share the reporting machinery.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{data_err, Result};
use crate::firth::{firth_fit_masked, FirthOptions};
use crate::normal::norm_logcdf;
use crate::stats::{binomial_ci_half_width, logsumexp};

/// Per-voxel likelihood terms are clamped to [EPS_LIK, 1 - EPS_LIK] before
/// taking logs; probit tails underflow otherwise.
pub const EPS_LIK: f64 = 1e-10;
/// Importance-sampling runs with effective sample size below this are
/// flagged low-confidence (still returned).
pub const LOO_ESS_THRESHOLD: f64 = 10.0;

/// ln(EPS_LIK) and ln(1 - EPS_LIK) bounds applied to log Phi terms.
fn clamp_log_prob(lp: f64) -> f64 {
    const LO: f64 = -23.025850929940457; // ln 1e-10
    const HI: f64 = -1.000000082790371e-10; // ln(1 - 1e-10)
    lp.clamp(LO, HI)
}

/// Retained-draw log-likelihood table: for draw t, subject i and candidate
/// subtype k, the full-map log-likelihood of subject i's outcomes with the
/// subtype block forced to k.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodTrace {
    pub n: usize,
    pub k: usize,
    pub iterations: Vec<u64>,
    /// t-major layout [t][i][k].
    pub values: Vec<f64>,
    pub true_subtypes: Vec<usize>,
}

impl LikelihoodTrace {
    pub fn new(dataset: &Dataset) -> Self {
        LikelihoodTrace {
            n: dataset.num_subjects(),
            k: dataset.design.num_subtypes(),
            iterations: Vec::new(),
            values: Vec::new(),
            true_subtypes: dataset.design.subtypes().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    #[inline]
    pub fn value(&self, t: usize, subject: usize, subtype: usize) -> f64 {
        self.values[(t * self.n + subject) * self.k + subtype - 1]
    }

    /// Append the table row for the current draw.
    pub fn accumulate(&mut self, dataset: &Dataset, beta_star: &[f64], gamma: f64, iteration: u64) {
        let n = self.n;
        let k = self.k;
        let p = dataset.design.num_coefficients();
        let m = dataset.num_sites();
        let design = &dataset.design;

        let start = self.values.len();
        self.values.resize(start + n * k, 0.0);
        let block = &mut self.values[start..];
        block.par_chunks_mut(k).enumerate().for_each(|(subject, lls)| {
            // Covariate part of eta, shared across candidate subtypes.
            for site in 0..m {
                let base = site * p;
                let mut eta_cov = dataset.w(site) * gamma;
                for pp in k..p {
                    eta_cov += design.value(subject, pp) * beta_star[base + pp];
                }
                let y = dataset.outcomes.get(site, subject);
                for (kk, ll) in lls.iter_mut().enumerate() {
                    let eta = eta_cov + beta_star[base + kk];
                    let term = if y { norm_logcdf(eta) } else { norm_logcdf(-eta) };
                    *ll += clamp_log_prob(term);
                }
            }
        });
        self.iterations.push(iteration);
    }
}

/// LOO posterior over subtypes for one subject.
#[derive(Clone, Debug)]
pub struct LooPosterior {
    pub probabilities: Vec<f64>,
    pub ess: f64,
    pub low_confidence: bool,
}

/// Importance-sampled leave-one-out posterior:
/// Pr(k | data_-i, Y_i) proportional to pi_k sum_t u_t exp(l_ik(t)) / sum_t u_t
/// with u_t = exp(-l_{i, k_i}(t)) removing the subject's own contribution.
pub fn loo_posterior(trace: &LikelihoodTrace, subject: usize, prior: &[f64]) -> Result<LooPosterior> {
    if trace.is_empty() {
        return data_err("likelihood trace is empty");
    }
    if prior.len() != trace.k {
        return data_err(format!("prior has {} entries, trace has {} subtypes", prior.len(), trace.k));
    }
    let t_len = trace.len();
    let k_i = trace.true_subtypes[subject];
    let log_u: Vec<f64> = (0..t_len).map(|t| -trace.value(t, subject, k_i)).collect();
    let log_denom = logsumexp(&log_u);

    let mut log_scores = Vec::with_capacity(trace.k);
    let mut buf = vec![0.0; t_len];
    for kk in 1..=trace.k {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = log_u[t] + trace.value(t, subject, kk);
        }
        log_scores.push(prior[kk - 1].ln() + logsumexp(&buf) - log_denom);
    }

    let norm = logsumexp(&log_scores);
    let probabilities: Vec<f64> = log_scores.iter().map(|s| (s - norm).exp()).collect();

    let max_log_u = log_u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ess = (log_denom - max_log_u).exp();
    Ok(LooPosterior { probabilities, ess, low_confidence: ess < LOO_ESS_THRESHOLD })
}

/// Variant with the subject's own likelihood left in (u_t = 1); only used to
/// sanity-check that LOO is less confident than "cheating".
pub fn in_sample_posterior(trace: &LikelihoodTrace, subject: usize, prior: &[f64]) -> Vec<f64> {
    let t_len = trace.len();
    let mut log_scores = Vec::with_capacity(trace.k);
    let mut buf = vec![0.0; t_len];
    for kk in 1..=trace.k {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = trace.value(t, subject, kk);
        }
        log_scores.push(prior[kk - 1].ln() + logsumexp(&buf));
    }
    let norm = logsumexp(&log_scores);
    log_scores.iter().map(|s| (s - norm).exp()).collect()
}

/// Classification report: per-subject posteriors, confusion matrix and the
/// two headline rates with binomial confidence half-widths.
#[derive(Clone, Debug)]
pub struct ClassificationResult {
    pub k: usize,
    /// N x K posterior probabilities.
    pub posteriors: Vec<f64>,
    /// 1-based predicted subtype per subject (argmax, ties to lower index).
    pub predicted: Vec<usize>,
    pub true_subtypes: Vec<usize>,
    pub low_confidence: Vec<bool>,
    /// K x K counts, row = true subtype, column = predicted.
    pub confusion_counts: Vec<u64>,
    /// Row-normalized confusion matrix (rows with no subjects stay zero).
    pub confusion_rows: Vec<f64>,
    pub overall_rate: f64,
    pub overall_ci_half_width: f64,
    /// Unweighted mean of per-subtype correct rates.
    pub average_rate: f64,
    pub average_ci_half_width: f64,
}

impl ClassificationResult {
    pub fn from_posteriors(
        k: usize,
        posteriors: Vec<f64>,
        true_subtypes: Vec<usize>,
        low_confidence: Vec<bool>,
    ) -> Self {
        let n = true_subtypes.len();
        assert_eq!(posteriors.len(), n * k);
        let predicted: Vec<usize> = (0..n)
            .map(|i| {
                let row = &posteriors[i * k..(i + 1) * k];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best + 1
            })
            .collect();

        let mut confusion_counts = vec![0u64; k * k];
        for (t, p) in true_subtypes.iter().zip(&predicted) {
            confusion_counts[(t - 1) * k + (p - 1)] += 1;
        }
        let mut confusion_rows = vec![0.0; k * k];
        let mut per_class_rates = Vec::new();
        for row in 0..k {
            let total: u64 = confusion_counts[row * k..(row + 1) * k].iter().sum();
            if total > 0 {
                for col in 0..k {
                    confusion_rows[row * k + col] =
                        confusion_counts[row * k + col] as f64 / total as f64;
                }
                per_class_rates.push(confusion_rows[row * k + row]);
            }
        }
        let correct: u64 = (0..k).map(|d| confusion_counts[d * k + d]).sum();
        let overall_rate = correct as f64 / n as f64;
        let average_rate = crate::stats::mean(&per_class_rates);

        ClassificationResult {
            k,
            posteriors,
            predicted,
            true_subtypes,
            low_confidence,
            confusion_counts,
            confusion_rows,
            overall_rate,
            overall_ci_half_width: binomial_ci_half_width(overall_rate, n),
            average_rate,
            average_ci_half_width: binomial_ci_half_width(average_rate, n),
        }
    }
}

/// Classify every subject from the likelihood trace.
pub fn classify_all(trace: &LikelihoodTrace, prior: &[f64]) -> Result<ClassificationResult> {
    let n = trace.n;
    let k = trace.k;
    let mut posteriors = vec![0.0; n * k];
    let mut low_confidence = vec![false; n];
    for i in 0..n {
        let loo = loo_posterior(trace, i, prior)?;
        posteriors[i * k..(i + 1) * k].copy_from_slice(&loo.probabilities);
        low_confidence[i] = loo.low_confidence;
    }
    Ok(ClassificationResult::from_posteriors(
        k,
        posteriors,
        trace.true_subtypes.clone(),
        low_confidence,
    ))
}

/// Uniform or empirical-frequency prior over subtypes.
pub fn subtype_prior(dataset: &Dataset, empirical: bool) -> Vec<f64> {
    let k = dataset.design.num_subtypes();
    if empirical {
        let mut counts = vec![0usize; k];
        for &s in dataset.design.subtypes() {
            counts[s - 1] += 1;
        }
        counts.iter().map(|&c| c as f64 / dataset.num_subjects() as f64).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Empirical per-subtype lesion rate maps on the voxel filter.
#[derive(Clone, Debug)]
pub struct NbcRates {
    /// Sites with total lesion count >= the filter threshold.
    pub sites: Vec<u32>,
    /// K x sites lesion counts per subtype.
    pub counts: Vec<u32>,
    /// Subjects per subtype.
    pub group_sizes: Vec<usize>,
    /// K x sites clamped rates r_kj.
    pub rates: Vec<f64>,
}

/// Half-count clamp bound for a subtype with n subjects.
fn nbc_eps(n: usize) -> f64 {
    1.0 / (2.0 * n as f64 + 2.0)
}

/// Fit the naive-Bayes rate maps: restrict to voxels with at least
/// `min_lesions` lesions across all subjects, then per subtype the raw rate
/// clamped away from 0 and 1.
pub fn nbc_fit(dataset: &Dataset, min_lesions: usize) -> Result<NbcRates> {
    let k = dataset.design.num_subtypes();
    let m = dataset.num_sites();
    let mut group_sizes = vec![0usize; k];
    for &s in dataset.design.subtypes() {
        group_sizes[s - 1] += 1;
    }
    if let Some(kk) = group_sizes.iter().position(|&c| c == 0) {
        return data_err(format!("subtype {} has no subjects", kk + 1));
    }

    let mut sites = Vec::new();
    let mut counts = Vec::new();
    for site in 0..m {
        if dataset.site_lesion_count(site) >= min_lesions {
            sites.push(site as u32);
            let mut per_k = vec![0u32; k];
            for subject in 0..dataset.num_subjects() {
                if dataset.outcomes.get(site, subject) {
                    per_k[dataset.design.subtypes()[subject] - 1] += 1;
                }
            }
            counts.extend(per_k);
        }
    }

    let v = sites.len();
    let mut rates = vec![0.0; k * v];
    for (vi, chunk) in counts.chunks(k).enumerate() {
        for kk in 0..k {
            let eps = nbc_eps(group_sizes[kk]);
            let raw = chunk[kk] as f64 / group_sizes[kk] as f64;
            rates[kk * v + vi] = raw.clamp(eps, 1.0 - eps);
        }
    }
    // counts stored site-major above; transpose to k-major to match rates
    let mut counts_km = vec![0u32; k * v];
    for vi in 0..v {
        for kk in 0..k {
            counts_km[kk * v + vi] = counts[vi * k + kk];
        }
    }
    Ok(NbcRates { sites, counts: counts_km, group_sizes, rates })
}

/// Leave-one-out naive-Bayes classification: for each held-out subject the
/// per-subtype counts are recomputed without that subject, then the subject
/// is scored by log prior + sum of Bernoulli log-likelihoods over the
/// filtered voxels.
pub fn nbc_classify_loo(
    dataset: &Dataset,
    min_lesions: usize,
    prior: &[f64],
) -> Result<ClassificationResult> {
    let fitted = nbc_fit(dataset, min_lesions)?;
    let k = dataset.design.num_subtypes();
    let n = dataset.num_subjects();
    let v = fitted.sites.len();
    if prior.len() != k {
        return data_err("prior length does not match subtype count");
    }
    for (kk, &gs) in fitted.group_sizes.iter().enumerate() {
        if gs < 2 {
            return data_err(format!(
                "subtype {} has a single subject; its rates are undefined under leave-one-out",
                kk + 1
            ));
        }
    }

    // log-rate lookup tables by (subtype, count, in/out of the held-out
    // subject's own subtype); counts are small integers so this removes all
    // per-voxel logs from the subject loop.
    let table = |n_k: usize| -> Vec<(f64, f64)> {
        let eps = nbc_eps(n_k);
        (0..=n_k)
            .map(|c| {
                let r = (c as f64 / n_k as f64).clamp(eps, 1.0 - eps);
                (r.ln(), (1.0 - r).ln())
            })
            .collect()
    };
    let full: Vec<Vec<(f64, f64)>> = fitted.group_sizes.iter().map(|&g| table(g)).collect();
    let held: Vec<Vec<(f64, f64)>> = fitted.group_sizes.iter().map(|&g| table(g - 1)).collect();

    let posteriors: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|subject| {
            let own = dataset.design.subtypes()[subject];
            let mut scores: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
            for (vi, &site) in fitted.sites.iter().enumerate() {
                let y = dataset.outcomes.get(site as usize, subject);
                for kk in 0..k {
                    let mut count = fitted.counts[kk * v + vi];
                    let tab = if kk + 1 == own {
                        if y {
                            count -= 1;
                        }
                        &held[kk]
                    } else {
                        &full[kk]
                    };
                    let (ln_r, ln_1mr) = tab[count as usize];
                    scores[kk] += if y { ln_r } else { ln_1mr };
                }
            }
            let norm = logsumexp(&scores);
            scores.into_iter().map(move |s| (s - norm).exp())
        })
        .collect();

    Ok(ClassificationResult::from_posteriors(
        k,
        posteriors,
        dataset.design.subtypes().to_vec(),
        vec![false; n],
    ))
}

/// Leave-one-out classification from per-voxel Firth fits: every voxel is
/// refit without the held-out subject (warm-started at the full fit), and
/// the subject is scored under each candidate subtype at that voxel.
pub fn firth_classify_loo(
    dataset: &Dataset,
    min_lesions: usize,
    prior: &[f64],
    opts: &FirthOptions,
) -> Result<ClassificationResult> {
    let design = &dataset.design;
    let k = design.num_subtypes();
    let p = design.num_coefficients();
    let n = dataset.num_subjects();
    if prior.len() != k {
        return data_err("prior length does not match subtype count");
    }

    let sites: Vec<u32> = (0..dataset.num_sites())
        .filter(|&s| dataset.site_lesion_count(s) >= min_lesions)
        .map(|s| s as u32)
        .collect();
    if sites.is_empty() {
        return data_err("no voxels pass the lesion-count filter");
    }

    let columns: Vec<&[f64]> = (0..p).map(|pp| design.column(pp)).collect();
    // Candidate rows per (subject, subtype).
    let rows: Vec<Vec<f64>> = (0..n)
        .flat_map(|i| (1..=k).map(move |kk| (i, kk)))
        .map(|(i, kk)| design.row_with_subtype(i, kk))
        .collect();

    // Per-site-chunk partial score matrices, combined in fixed chunk order.
    let chunks: Vec<&[u32]> = sites.chunks(64).collect();
    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut scores = vec![0.0; n * k];
            let mut y = vec![false; n];
            for &site in *chunk {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = dataset.outcomes.get(site as usize, i);
                }
                let full = match firth_fit_masked(&columns, &y, None, None, opts) {
                    Ok(f) => f,
                    Err(_) => continue, // voxel recorded as uninformative
                };
                for subject in 0..n {
                    let refit = match firth_fit_masked(
                        &columns,
                        &y,
                        Some(subject),
                        Some(&full.coefficients),
                        opts,
                    ) {
                        Ok(f) => f,
                        Err(_) => continue,
                    };
                    for kk in 0..k {
                        let row = &rows[subject * k + kk];
                        let mut eta = 0.0;
                        for pp in 0..p {
                            eta += row[pp] * refit.coefficients[pp];
                        }
                        let prob = (1.0 / (1.0 + (-eta).exp())).clamp(EPS_LIK, 1.0 - EPS_LIK);
                        scores[subject * k + kk] +=
                            if y[subject] { prob.ln() } else { (1.0 - prob).ln() };
                    }
                }
            }
            scores
        })
        .collect();

    let mut scores = vec![0.0; n * k];
    for part in &partials {
        for (s, v) in scores.iter_mut().zip(part) {
            *s += v;
        }
    }

    let mut posteriors = vec![0.0; n * k];
    for subject in 0..n {
        let row: Vec<f64> = (0..k)
            .map(|kk| prior[kk].ln() + scores[subject * k + kk])
            .collect();
        let norm = logsumexp(&row);
        for kk in 0..k {
            posteriors[subject * k + kk] = (row[kk] - norm).exp();
        }
    }
    Ok(ClassificationResult::from_posteriors(
        k,
        posteriors,
        design.subtypes().to_vec(),
        vec![false; n],
    ))
}
