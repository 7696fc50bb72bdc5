//! Streaming posterior summaries and map products.
//!
//! Chains for the full coefficient field are never stored: per-site means
//! and variances accumulate in one pass (Welford), probability maps average
//! Phi(eta) online, and only small traces (alpha, gamma, precision entries,
//! monitored sites, likelihood rows) are kept per retained draw.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::model::lesion_probability;

/// One-pass mean/variance accumulators over a flat array of channels.
#[derive(Clone, Debug, Default)]
pub struct WelfordVec {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl WelfordVec {
    pub fn new(len: usize) -> Self {
        WelfordVec { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    /// Fold in one observation vector.
    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.mean.len());
        self.count += 1;
        let count = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = x - *m;
            *m += delta / count;
            *s += delta * (x - *m);
        }
    }

    /// Sample variance of one channel.
    pub fn variance(&self, idx: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2[idx] / (self.count - 1) as f64
        }
    }

    pub fn sd(&self, idx: usize) -> f64 {
        self.variance(idx).sqrt()
    }

    /// Merge a parallel partial into `self` (Chan/Golub/LeVeque), so chunked
    /// accumulation is associative.
    pub fn merge(&mut self, other: &WelfordVec) {
        assert_eq!(self.mean.len(), other.mean.len());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }
}

/// Reference covariate profile for an online probability map: a full design
/// row (one-hot subtype plus covariate values on the design scale).
#[derive(Clone, Debug)]
pub struct ProbProfile {
    pub name: String,
    pub x_ref: Vec<f64>,
}

/// Pairwise subtype-intercept contrast, tracked as its own Welford channel
/// so standardized difference maps have exact posterior moments.
#[derive(Clone, Copy, Debug)]
pub struct Contrast {
    pub a: usize,
    pub b: usize,
}

/// Everything accumulated across retained draws.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub m: usize,
    pub p: usize,
    /// M x P coefficient moments.
    pub coef: WelfordVec,
    pub contrasts: Vec<Contrast>,
    /// M x contrasts moments.
    pub contrast_acc: WelfordVec,
    pub profiles: Vec<ProbProfile>,
    /// profiles x M running sums of Phi(eta).
    pub prob_sums: Vec<f64>,
    /// Retained iteration numbers.
    pub retained_iterations: Vec<u64>,
    /// P per retained draw: spatial average of the coefficient field.
    pub alpha_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    /// Upper triangle of the precision per retained draw.
    pub precision_trace: Vec<f64>,
    pub monitored_sites: Vec<u32>,
    /// sites x P per retained draw.
    pub monitored_trace: Vec<f64>,
}

impl PosteriorSummary {
    pub fn new(
        m: usize,
        p: usize,
        contrasts: Vec<Contrast>,
        profiles: Vec<ProbProfile>,
        monitored_sites: Vec<u32>,
    ) -> Self {
        for pr in &profiles {
            assert_eq!(pr.x_ref.len(), p, "profile {} row length", pr.name);
        }
        let n_contr = contrasts.len();
        let n_prof = profiles.len();
        PosteriorSummary {
            m,
            p,
            coef: WelfordVec::new(m * p),
            contrasts,
            contrast_acc: WelfordVec::new(m * n_contr),
            profiles,
            prob_sums: vec![0.0; n_prof * m],
            retained_iterations: Vec::new(),
            alpha_trace: Vec::new(),
            gamma_trace: Vec::new(),
            precision_trace: Vec::new(),
            monitored_sites,
            monitored_trace: Vec::new(),
        }
    }

    pub fn count(&self) -> u64 {
        self.coef.count
    }

    /// Fold in one retained draw of the effective coefficient field.
    pub fn accumulate(
        &mut self,
        dataset: &Dataset,
        beta_star: &[f64],
        gamma: f64,
        precision: &DMatrix<f64>,
        iteration: u64,
    ) {
        let m = self.m;
        let p = self.p;
        assert_eq!(beta_star.len(), m * p);

        self.coef.count += 1;
        let count = self.coef.count as f64;
        let mean = &mut self.coef.mean;
        let m2 = &mut self.coef.m2;
        mean.par_chunks_mut(p)
            .zip(m2.par_chunks_mut(p))
            .zip(beta_star.par_chunks(p))
            .for_each(|((mean_c, m2_c), b)| {
                for pp in 0..p {
                    let delta = b[pp] - mean_c[pp];
                    mean_c[pp] += delta / count;
                    m2_c[pp] += delta * (b[pp] - mean_c[pp]);
                }
            });

        if !self.contrasts.is_empty() {
            let contrasts = &self.contrasts;
            self.contrast_acc.count += 1;
            let c = self.contrast_acc.count as f64;
            let nc = contrasts.len();
            self.contrast_acc
                .mean
                .par_chunks_mut(nc)
                .zip(self.contrast_acc.m2.par_chunks_mut(nc))
                .enumerate()
                .for_each(|(site, (mean_c, m2_c))| {
                    for (ci, contr) in contrasts.iter().enumerate() {
                        let x = beta_star[site * p + contr.a] - beta_star[site * p + contr.b];
                        let delta = x - mean_c[ci];
                        mean_c[ci] += delta / c;
                        m2_c[ci] += delta * (x - mean_c[ci]);
                    }
                });
        }

        if !self.profiles.is_empty() {
            let profiles = &self.profiles;
            self.prob_sums.par_chunks_mut(m).enumerate().for_each(|(pi, sums)| {
                let x_ref = &profiles[pi].x_ref;
                for (site, s) in sums.iter_mut().enumerate() {
                    let mut eta = dataset.w(site) * gamma;
                    for pp in 0..p {
                        eta += x_ref[pp] * beta_star[site * p + pp];
                    }
                    *s += lesion_probability(eta);
                }
            });
        }

        self.retained_iterations.push(iteration);
        self.alpha_trace.extend_from_slice(&recover_alpha(beta_star, m, p));
        self.gamma_trace.push(gamma);
        for a in 0..p {
            for b in a..p {
                self.precision_trace.push(precision[(a, b)]);
            }
        }
        for &site in &self.monitored_sites {
            let base = site as usize * p;
            self.monitored_trace.extend_from_slice(&beta_star[base..base + p]);
        }
    }

    /// Posterior-mean probability map for one profile.
    pub fn probability_map(&self, profile: usize) -> Vec<f64> {
        assert!(profile < self.profiles.len(), "unknown probability profile");
        let count = self.count().max(1) as f64;
        self.prob_sums[profile * self.m..(profile + 1) * self.m]
            .iter()
            .map(|s| s / count)
            .collect()
    }

    /// Standardized map (mean / sd) of one coefficient column.
    pub fn standardized_coefficient_map(&self, coef: usize, threshold: f64) -> StandardizedMap {
        standardized_map(&self.coef, self.m, self.p, coef, threshold)
    }

    /// Standardized map of one stored contrast.
    pub fn standardized_contrast_map(&self, idx: usize, threshold: f64) -> StandardizedMap {
        standardized_map(&self.contrast_acc, self.m, self.contrasts.len(), idx, threshold)
    }

    /// Monitored trace of (site index within the monitored list, coefficient).
    pub fn monitored_series(&self, site_idx: usize, coef: usize) -> Vec<f64> {
        let stride = self.monitored_sites.len() * self.p;
        self.monitored_trace
            .iter()
            .skip(site_idx * self.p + coef)
            .step_by(stride)
            .copied()
            .collect()
    }

    /// Alpha trace of one coefficient.
    pub fn alpha_series(&self, coef: usize) -> Vec<f64> {
        self.alpha_trace.iter().skip(coef).step_by(self.p).copied().collect()
    }
}

/// Spatial average of each coefficient column: the fixed-effect recovery
/// alpha_p = mean_j beta*_p(s_j), computed per retained draw.
pub fn recover_alpha(beta_star: &[f64], m: usize, p: usize) -> Vec<f64> {
    assert_eq!(beta_star.len(), m * p);
    let mut alpha = vec![0.0; p];
    for site in 0..m {
        for pp in 0..p {
            alpha[pp] += beta_star[site * p + pp];
        }
    }
    for a in &mut alpha {
        *a /= m as f64;
    }
    alpha
}

/// Signed mean/sd map plus its thresholded version.
#[derive(Clone, Debug)]
pub struct StandardizedMap {
    pub values: Vec<f64>,
    pub thresholded: Vec<f64>,
    pub threshold: f64,
    /// Fraction of sites with |value| >= threshold.
    pub suprathreshold_proportion: f64,
    /// Sites where the posterior sd was zero (value emitted as 0).
    pub zero_sd_sites: Vec<u32>,
}

fn standardized_map(
    acc: &WelfordVec,
    m: usize,
    width: usize,
    channel: usize,
    threshold: f64,
) -> StandardizedMap {
    assert!(channel < width);
    assert!(acc.count >= 2, "standardized map needs at least two retained draws");
    let mut values = Vec::with_capacity(m);
    let mut thresholded = Vec::with_capacity(m);
    let mut zero_sd_sites = Vec::new();
    let mut supra = 0usize;
    for site in 0..m {
        let idx = site * width + channel;
        let sd = acc.sd(idx);
        let v = if sd > 0.0 {
            acc.mean[idx] / sd
        } else {
            zero_sd_sites.push(site as u32);
            0.0
        };
        values.push(v);
        if v.abs() >= threshold {
            supra += 1;
            thresholded.push(v);
        } else {
            thresholded.push(0.0);
        }
    }
    StandardizedMap {
        values,
        thresholded,
        threshold,
        suprathreshold_proportion: supra as f64 / m as f64,
        zero_sd_sites,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BitMatrix, Dataset};
    use crate::lattice::{Lattice, Mask};
    use crate::model::{build_design, CenteringPolicy, SubjectRecord};

    fn tiny_dataset(m: usize) -> (Lattice, Dataset) {
        let lattice = Lattice::from_mask(&Mask::full_2d(m, 1)).unwrap();
        let records = vec![SubjectRecord { id: "a".into(), subtype: 1, covariates: vec![] }];
        let design = build_design(&records, &[], &CenteringPolicy::AutoBinary).unwrap();
        let outcomes = BitMatrix::zeros(m, 1);
        let ids = vec!["a".into()];
        let dataset = Dataset::new(&lattice, design, outcomes, None, ids).unwrap();
        (lattice, dataset)
    }

    #[test]
    fn welford_matches_closed_form() {
        let mut acc = WelfordVec::new(1);
        acc.push(&[1.0]);
        acc.push(&[3.0]);
        assert_eq!(acc.mean[0], 2.0);
        assert_eq!(acc.variance(0), 2.0);

        let mut constant = WelfordVec::new(1);
        for _ in 0..10 {
            constant.push(&[4.2]);
        }
        assert_eq!(constant.variance(0), 0.0);
    }

    #[test]
    fn welford_merge_equals_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.77).sin() * 3.0 + 1.0).collect();
        let mut whole = WelfordVec::new(1);
        for &x in &xs {
            whole.push(&[x]);
        }
        let mut left = WelfordVec::new(1);
        let mut right = WelfordVec::new(1);
        for &x in &xs[..37] {
            left.push(&[x]);
        }
        for &x in &xs[37..] {
            right.push(&[x]);
        }
        left.merge(&right);
        assert!((left.mean[0] - whole.mean[0]).abs() < 1e-12);
        assert!((left.variance(0) - whole.variance(0)).abs() < 1e-12);
        assert_eq!(left.count, whole.count);
    }

    #[test]
    fn recover_alpha_examples() {
        // constant field
        let field = vec![0.7; 5 * 2];
        assert_eq!(recover_alpha(&field, 5, 2), vec![0.7, 0.7]);
        // two sites, one coefficient, opposite signs
        assert_eq!(recover_alpha(&[-1.0, 1.0], 2, 1), vec![0.0]);
        // random field equals independent column mean
        let field: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let alpha = recover_alpha(&field, 10, 3);
        for pp in 0..3 {
            let want: f64 = (0..10).map(|s| field[s * 3 + pp]).sum::<f64>() / 10.0;
            assert!((alpha[pp] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_map_threshold_rules() {
        let (_, dataset) = tiny_dataset(2);
        let mut summary = PosteriorSummary::new(2, 1, vec![], vec![], vec![]);
        let precision = DMatrix::identity(1, 1);
        // site 0: values 2, 6 -> mean 4, sd 2.828 -> z = 1.414... make it
        // cleaner: targets mean 4 sd 2 -> draws 2, 4, 6 -> sd 2.
        for (it, vals) in [[2.0, 1.9], [4.0, 1.9], [6.0, 1.9]].iter().enumerate() {
            summary.accumulate(&dataset, vals, 0.0, &precision, it as u64);
        }
        let map = summary.standardized_coefficient_map(0, 2.0);
        assert!((map.values[0] - 2.0).abs() < 1e-12);
        assert_eq!(map.thresholded[0], map.values[0]);
        // constant channel: sd = 0 -> flagged, emitted as 0
        assert_eq!(map.values[1], 0.0);
        assert_eq!(map.zero_sd_sites, vec![1]);
        assert!((map.suprathreshold_proportion - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probability_map_degenerate_chain() {
        let (_, dataset) = tiny_dataset(3);
        let profiles = vec![ProbProfile { name: "ref".into(), x_ref: vec![1.0] }];
        let mut summary = PosteriorSummary::new(3, 1, vec![], profiles, vec![]);
        let precision = DMatrix::identity(1, 1);
        // chain pinned at zero -> map identically 0.5
        for it in 0..4 {
            summary.accumulate(&dataset, &[0.0, 0.0, 0.0], 0.0, &precision, it);
        }
        for v in summary.probability_map(0) {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn probability_map_single_draw_is_phi_of_eta() {
        let (_, dataset) = tiny_dataset(2);
        let profiles = vec![ProbProfile { name: "ref".into(), x_ref: vec![1.0] }];
        let mut summary = PosteriorSummary::new(2, 1, vec![], profiles, vec![]);
        let precision = DMatrix::identity(1, 1);
        summary.accumulate(&dataset, &[0.3, -1.1], 0.0, &precision, 1);
        let map = summary.probability_map(0);
        assert!((map[0] - lesion_probability(0.3)).abs() < 1e-15);
        assert!((map[1] - lesion_probability(-1.1)).abs() < 1e-15);
    }

    #[test]
    fn averaging_phi_beats_phi_of_average_below_zero() {
        // Jensen direction: for eta draws symmetric around eta0 < 0, the
        // mean of Phi exceeds Phi of the mean (convex region).
        let (_, dataset) = tiny_dataset(1);
        let profiles = vec![ProbProfile { name: "ref".into(), x_ref: vec![1.0] }];
        let mut summary = PosteriorSummary::new(1, 1, vec![], profiles, vec![]);
        let precision = DMatrix::identity(1, 1);
        let eta0 = -2.0;
        for (it, d) in [-1.0, 1.0, -0.5, 0.5].iter().enumerate() {
            summary.accumulate(&dataset, &[eta0 + d], 0.0, &precision, it as u64);
        }
        let map = summary.probability_map(0);
        assert!(map[0] > lesion_probability(eta0));
    }

    #[test]
    fn streaming_moments_equal_two_pass() {
        let xs: Vec<f64> = (0..500).map(|i| ((i * 31 % 97) as f64 - 48.0) * 0.21).collect();
        let mut acc = WelfordVec::new(1);
        for &x in &xs {
            acc.push(&[x]);
        }
        let mean = crate::stats::mean(&xs);
        let var = crate::stats::sample_variance(&xs);
        assert!((acc.mean[0] - mean).abs() <= 1e-10 * mean.abs().max(1.0));
        assert!((acc.variance(0) - var).abs() <= 1e-10 * var.abs().max(1.0));
    }

    #[test]
    fn alpha_trace_mean_equals_grand_mean() {
        let (_, dataset) = tiny_dataset(4);
        let mut summary = PosteriorSummary::new(4, 1, vec![], vec![], vec![]);
        let precision = DMatrix::identity(1, 1);
        let draws = [[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, -0.5], [0.0, 0.0, 2.0, -2.0]];
        for (it, d) in draws.iter().enumerate() {
            summary.accumulate(&dataset, d, 0.0, &precision, it as u64);
        }
        let alpha_mean = crate::stats::mean(&summary.alpha_series(0));
        let grand: f64 = draws.iter().flatten().sum::<f64>() / 12.0;
        assert!((alpha_mean - grand).abs() < 1e-10);
    }
}
