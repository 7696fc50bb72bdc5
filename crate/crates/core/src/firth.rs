//! Mass-univariate Firth-penalized logistic regression.
//!
//! Newton iteration on the Jeffreys-penalized likelihood with the modified
//! score
//!
//! ```text
//! U*_r(beta) = sum_i (y_i - p_i + h_i (1/2 - p_i)) x_ir
//! ```
//!
//! where `h_i` are the hat diagonals of W^(1/2) X (X'WX)^-1 X' W^(1/2).
//! Estimates stay finite under complete separation, which is exactly why
//! per-voxel fits on sparse binary maps use it.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{numerical_err, Result};
use crate::inference::ProbProfile;

#[derive(Clone, Debug)]
pub struct FirthOptions {
    /// Convergence threshold on the largest modified-score component.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for FirthOptions {
    fn default() -> Self {
        FirthOptions { tol: 1e-6, max_iter: 50, max_halvings: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct FirthFit {
    pub coefficients: Vec<f64>,
    /// Inverse Fisher information at the optimum.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FirthFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.covariance.nrows()).map(|i| self.covariance[(i, i)].sqrt()).collect()
    }
}

#[inline]
fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Penalized log-likelihood: logistic log-likelihood + 0.5 log det X'WX.
fn penalized_loglik(eta: &[f64], y: &[bool], skip: Option<usize>, half_logdet: f64) -> f64 {
    let mut ll = 0.0;
    for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
        if skip == Some(i) {
            continue;
        }
        // log p = -log(1 + exp(-eta)), log(1-p) = -log(1 + exp(eta))
        ll -= if yi { (-e).exp().ln_1p() } else { e.exp().ln_1p() };
    }
    ll + half_logdet
}

/// Firth fit over column-major design `columns`, optionally skipping one
/// subject (leave-one-out refits) and warm-starting from `init`.
pub fn firth_fit_masked(
    columns: &[&[f64]],
    y: &[bool],
    skip: Option<usize>,
    init: Option<&[f64]>,
    opts: &FirthOptions,
) -> Result<FirthFit> {
    let p = columns.len();
    let n = y.len();
    assert!(columns.iter().all(|c| c.len() == n));

    let mut beta = DVector::from_column_slice(init.unwrap_or(&vec![0.0; p]));
    let mut eta = vec![0.0; n];
    let mut prob = vec![0.0; n];
    let mut weight = vec![0.0; n];
    let mut best_pll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        for i in 0..n {
            let mut e = 0.0;
            for (pp, col) in columns.iter().enumerate() {
                e += col[i] * beta[pp];
            }
            eta[i] = e;
            prob[i] = logistic(e);
            weight[i] = prob[i] * (1.0 - prob[i]);
        }

        let mut info = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let mut acc = 0.0;
                for i in 0..n {
                    if skip == Some(i) {
                        continue;
                    }
                    acc += weight[i] * columns[a][i] * columns[b][i];
                }
                info[(a, b)] = acc;
                info[(b, a)] = acc;
            }
        }
        let chol = Cholesky::new(info.clone()).ok_or_else(|| {
            crate::Error::Numerical("Firth information matrix is rank deficient".into())
        })?;
        let inv = chol.inverse();
        let half_logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();

        // modified score
        let mut score = DVector::zeros(p);
        for i in 0..n {
            if skip == Some(i) {
                continue;
            }
            // h_i = w_i x_i' (X'WX)^-1 x_i
            let mut quad = 0.0;
            for a in 0..p {
                let mut row = 0.0;
                for b in 0..p {
                    row += inv[(a, b)] * columns[b][i];
                }
                quad += columns[a][i] * row;
            }
            let h = weight[i] * quad;
            let resid = (if y[i] { 1.0 } else { 0.0 }) - prob[i] + h * (0.5 - prob[i]);
            for a in 0..p {
                score[a] += resid * columns[a][i];
            }
        }

        let max_score = score.iter().fold(0.0f64, |m, s: &f64| m.max(s.abs()));
        let pll = penalized_loglik(&eta, y, skip, half_logdet);
        if max_score < opts.tol {
            converged = true;
            best_pll = pll;
            break;
        }

        let mut delta = score.clone();
        chol.solve_mut(&mut delta);

        // step-halving: accept the first step that does not decrease the
        // penalized likelihood, up to the halving budget
        let mut accepted = false;
        let mut candidate = DVector::zeros(p);
        for halving in 0..=opts.max_halvings {
            let scale = 0.5f64.powi(halving as i32);
            candidate = &beta + &delta * scale;
            let cand_pll = eval_pll(columns, y, skip, &candidate)?;
            if cand_pll >= pll - 1e-12 || halving == opts.max_halvings {
                accepted = cand_pll >= pll - 1e-12;
                best_pll = cand_pll;
                break;
            }
        }
        let _ = accepted;
        beta = candidate;
    }
    let _ = best_pll;

    // covariance at the final iterate
    for i in 0..n {
        let mut e = 0.0;
        for (pp, col) in columns.iter().enumerate() {
            e += col[i] * beta[pp];
        }
        let pr = logistic(e);
        weight[i] = pr * (1.0 - pr);
    }
    let mut info = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let mut acc = 0.0;
            for i in 0..n {
                if skip == Some(i) {
                    continue;
                }
                acc += weight[i] * columns[a][i] * columns[b][i];
            }
            info[(a, b)] = acc;
            info[(b, a)] = acc;
        }
    }
    let chol = Cholesky::new(info)
        .ok_or_else(|| crate::Error::Numerical("Firth information matrix is rank deficient".into()))?;

    Ok(FirthFit {
        coefficients: beta.iter().copied().collect(),
        covariance: chol.inverse(),
        converged,
        iterations,
    })
}

fn eval_pll(columns: &[&[f64]], y: &[bool], skip: Option<usize>, beta: &DVector<f64>) -> Result<f64> {
    let p = columns.len();
    let n = y.len();
    let mut eta = vec![0.0; n];
    let mut info = DMatrix::zeros(p, p);
    for i in 0..n {
        let mut e = 0.0;
        for (pp, col) in columns.iter().enumerate() {
            e += col[i] * beta[pp];
        }
        eta[i] = e;
    }
    for a in 0..p {
        for b in a..p {
            let mut acc = 0.0;
            for i in 0..n {
                if skip == Some(i) {
                    continue;
                }
                let pr = logistic(eta[i]);
                acc += pr * (1.0 - pr) * columns[a][i] * columns[b][i];
            }
            info[(a, b)] = acc;
            info[(b, a)] = acc;
        }
    }
    let chol = Cholesky::new(info)
        .ok_or_else(|| crate::Error::Numerical("Firth information matrix is rank deficient".into()))?;
    let half_logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    Ok(penalized_loglik(&eta, y, skip, half_logdet))
}

/// Convenience wrapper over the full sample.
pub fn firth_fit(columns: &[&[f64]], y: &[bool], opts: &FirthOptions) -> Result<FirthFit> {
    firth_fit_masked(columns, y, None, None, opts)
}

/// Per-voxel Firth maps over every in-mask voxel (optionally filtered by a
/// minimum lesion count).
#[derive(Clone, Debug)]
pub struct FirthMaps {
    pub m: usize,
    pub p: usize,
    /// M x P estimates (0 at failed/filtered voxels).
    pub coefficients: Vec<f64>,
    /// M x P standard errors (0 at failed/filtered voxels).
    pub standard_errors: Vec<f64>,
    /// M x P standardized values beta / SE.
    pub standardized: Vec<f64>,
    /// Voxels where the fit failed or was filtered out.
    pub flagged: Vec<u32>,
    /// Whether each voxel was actually fit.
    pub fitted: Vec<bool>,
    /// Suprathreshold |z| >= 2 proportion per coefficient over fitted voxels.
    pub suprathreshold_proportions: Vec<f64>,
}

impl FirthMaps {
    /// Fitted probability map at a reference covariate row.
    pub fn probability_map(&self, x_ref: &[f64]) -> Vec<f64> {
        assert_eq!(x_ref.len(), self.p);
        (0..self.m)
            .map(|site| {
                let mut eta = 0.0;
                for pp in 0..self.p {
                    eta += x_ref[pp] * self.coefficients[site * self.p + pp];
                }
                logistic(eta)
            })
            .collect()
    }
}

/// Fit every voxel with total lesion count >= `min_lesions` (0 fits all).
pub fn firth_map(dataset: &Dataset, min_lesions: usize, opts: &FirthOptions) -> Result<FirthMaps> {
    let design = &dataset.design;
    let p = design.num_coefficients();
    let m = dataset.num_sites();
    let n = dataset.num_subjects();
    let columns: Vec<&[f64]> = (0..p).map(|pp| design.column(pp)).collect();

    struct VoxelFit {
        coef: Vec<f64>,
        se: Vec<f64>,
        ok: bool,
        fitted: bool,
    }

    let fits: Vec<VoxelFit> = (0..m)
        .into_par_iter()
        .map(|site| {
            if dataset.site_lesion_count(site) < min_lesions {
                return VoxelFit { coef: vec![0.0; p], se: vec![0.0; p], ok: true, fitted: false };
            }
            let y: Vec<bool> = (0..n).map(|i| dataset.outcomes.get(site, i)).collect();
            match firth_fit(&columns, &y, opts) {
                Ok(fit) => VoxelFit {
                    se: fit.standard_errors(),
                    coef: fit.coefficients,
                    ok: true,
                    fitted: true,
                },
                Err(_) => VoxelFit { coef: vec![0.0; p], se: vec![0.0; p], ok: false, fitted: false },
            }
        })
        .collect();

    let mut coefficients = vec![0.0; m * p];
    let mut standard_errors = vec![0.0; m * p];
    let mut standardized = vec![0.0; m * p];
    let mut flagged = Vec::new();
    let mut fitted = vec![false; m];
    let mut supra = vec![0usize; p];
    let mut n_fitted = 0usize;
    for (site, fit) in fits.iter().enumerate() {
        if !fit.ok {
            flagged.push(site as u32);
        }
        fitted[site] = fit.fitted;
        if !fit.fitted {
            continue;
        }
        n_fitted += 1;
        for pp in 0..p {
            let idx = site * p + pp;
            coefficients[idx] = fit.coef[pp];
            standard_errors[idx] = fit.se[pp];
            if fit.se[pp] > 0.0 {
                standardized[idx] = fit.coef[pp] / fit.se[pp];
                if standardized[idx].abs() >= 2.0 {
                    supra[pp] += 1;
                }
            }
        }
    }
    if n_fitted == 0 {
        return numerical_err("no voxel produced a Firth fit");
    }
    let suprathreshold_proportions =
        supra.iter().map(|&c| c as f64 / n_fitted as f64).collect();

    Ok(FirthMaps {
        m,
        p,
        coefficients,
        standard_errors,
        standardized,
        flagged,
        fitted,
        suprathreshold_proportions,
    })
}

/// Probability maps for a set of reference profiles.
pub fn firth_probability_maps(maps: &FirthMaps, profiles: &[ProbProfile]) -> Vec<(String, Vec<f64>)> {
    profiles.iter().map(|pr| (pr.name.clone(), maps.probability_map(&pr.x_ref))).collect()
}
