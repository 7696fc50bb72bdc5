//! Leave-one-out importance sampling against the brute-force refit oracle:
//! for every subject the full sampler is re-run without that subject and
//! the held-out posterior is computed from the refit draws directly.

mod common;

use blm_core::inference::PosteriorSummary;
use blm_core::normal::norm_logcdf;
use blm_core::predict::{in_sample_posterior, loo_posterior, LikelihoodTrace};
use blm_core::sampler::{GibbsEngine, McmcConfig, RunSinks};
use blm_core::stats::logsumexp;
use common::two_group_cohort;

const SUBTYPES: [usize; 12] = [1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2];

/// Moderately separable 2-site toy: group 1 lesions mostly at site 0,
/// group 2 mostly at site 1.
fn toy_lesions() -> Vec<(usize, usize)> {
    vec![
        (0, 0),
        (0, 1),
        (0, 2),
        (0, 3), // group 1 at site 0: 4/6
        (1, 0),
        (1, 4), // group 1 at site 1: 2/6
        (0, 6), // group 2 at site 0: 1/6
        (1, 6),
        (1, 7),
        (1, 8),
        (1, 9), // group 2 at site 1: 4/6 (subject 9 also below)
        (0, 9),
    ]
}

fn config(seed: u64) -> McmcConfig {
    // The 2-site, 2-coefficient toy leaves the improper prior with
    // df = M - c = 1 <= P - 1, so it runs under a proper Wishart(2, I).
    McmcConfig { iterations: 30_000, burn_in: 2_000, seed, wishart_df: 2.0, ..Default::default() }
}

/// Log-likelihood of outcome pair (y0, y1) under subtype k for a draw of
/// the 2-site coefficient field.
fn loglik(beta: &[f64], k: usize, y0: bool, y1: bool) -> f64 {
    let eta0 = beta[k - 1];
    let eta1 = beta[2 + k - 1];
    let t0 = if y0 { norm_logcdf(eta0) } else { norm_logcdf(-eta0) };
    let t1 = if y1 { norm_logcdf(eta1) } else { norm_logcdf(-eta1) };
    t0 + t1
}

#[test]
fn importance_sampling_matches_refit_oracle() {
    let lesions = toy_lesions();
    let n = SUBTYPES.len();
    let (lattice, dataset) = two_group_cohort(2, 1, &SUBTYPES, &lesions);
    let prior = [0.5, 0.5];

    // one full run with the likelihood trace
    let engine = GibbsEngine::new(&lattice, &dataset, config(7000), 0).unwrap();
    let mut state = engine.init_state();
    let mut sinks = RunSinks {
        summary: PosteriorSummary::new(2, 2, vec![], vec![], vec![]),
        likelihood: Some(LikelihoodTrace::new(&dataset)),
    };
    engine.run(&mut state, &mut sinks, None).unwrap();
    let trace = sinks.likelihood.unwrap();

    let mut tv_sum = 0.0;
    for subject in 0..n {
        let is_post = loo_posterior(&trace, subject, &prior).unwrap().probabilities;

        // refit oracle: drop the subject, re-run the full sampler, monitor
        // the complete 2-site field, and average the held-out likelihood
        let keep: Vec<usize> = (0..n).filter(|&i| i != subject).collect();
        let sub_types: Vec<usize> = keep.iter().map(|&i| SUBTYPES[i]).collect();
        let sub_lesions: Vec<(usize, usize)> = lesions
            .iter()
            .filter(|(_, s)| *s != subject)
            .map(|&(site, s)| (site, keep.iter().position(|&i| i == s).unwrap()))
            .collect();
        let (lat2, data2) = two_group_cohort(2, 1, &sub_types, &sub_lesions);
        let engine2 = GibbsEngine::new(&lat2, &data2, config(7100 + subject as u64), 0).unwrap();
        let mut state2 = engine2.init_state();
        let mut sinks2 = RunSinks {
            summary: PosteriorSummary::new(2, 2, vec![], vec![], vec![0, 1]),
            likelihood: None,
        };
        engine2.run(&mut state2, &mut sinks2, None).unwrap();

        let y0 = dataset.outcomes.get(0, subject);
        let y1 = dataset.outcomes.get(1, subject);
        let t_len = sinks2.summary.count() as usize;
        let stride = 2 * 2; // sites x coefficients
        let mut log_means = Vec::new();
        for k in 1..=2 {
            let lls: Vec<f64> = (0..t_len)
                .map(|t| {
                    let beta = &sinks2.summary.monitored_trace[t * stride..(t + 1) * stride];
                    loglik(beta, k, y0, y1)
                })
                .collect();
            log_means.push(prior[k - 1].ln() + logsumexp(&lls));
        }
        let norm = logsumexp(&log_means);
        let refit: Vec<f64> = log_means.iter().map(|s| (s - norm).exp()).collect();

        let tv = 0.5 * (is_post[0] - refit[0]).abs() + 0.5 * (is_post[1] - refit[1]).abs();
        tv_sum += tv;
    }
    let avg_tv = tv_sum / n as f64;
    assert!(avg_tv < 0.05, "average total variation {avg_tv}");
}

#[test]
fn keeping_own_likelihood_is_more_confident_on_average() {
    let lesions = toy_lesions();
    let (lattice, dataset) = two_group_cohort(2, 1, &SUBTYPES, &lesions);
    let prior = [0.5, 0.5];
    let engine = GibbsEngine::new(&lattice, &dataset, config(7200), 0).unwrap();
    let mut state = engine.init_state();
    let mut sinks = RunSinks {
        summary: PosteriorSummary::new(2, 2, vec![], vec![], vec![]),
        likelihood: Some(LikelihoodTrace::new(&dataset)),
    };
    engine.run(&mut state, &mut sinks, None).unwrap();
    let trace = sinks.likelihood.unwrap();

    let mut cheat_mean = 0.0;
    let mut loo_mean = 0.0;
    for (subject, &truth) in SUBTYPES.iter().enumerate() {
        cheat_mean += in_sample_posterior(&trace, subject, &prior)[truth - 1];
        loo_mean += loo_posterior(&trace, subject, &prior).unwrap().probabilities[truth - 1];
    }
    assert!(
        cheat_mean >= loo_mean,
        "cheating should not be less confident: {cheat_mean} vs {loo_mean}"
    );
}
