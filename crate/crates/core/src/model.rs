//! Covariate design construction and the deterministic model algebra.
//!
//! The design matrix puts one-hot subtype intercepts in the first K columns
//! and the remaining covariates after them, mean-centered where the policy
//! says so. The number of subtype groups is data driven. The linear
//! predictor and the probit probability are the only pieces of model algebra
//! the sampler and the predictors share.

use crate::error::{data_err, Result};
use crate::normal::norm_cdf;

/// One subject: identifier, subtype label in 1..=K, extra covariates, and
/// (elsewhere) an outcome map aligned to the lattice site order.
#[derive(Clone, Debug)]
pub struct SubjectRecord {
    pub id: String,
    pub subtype: usize,
    pub covariates: Vec<f64>,
}

/// Which non-subtype columns get mean-centered.
///
/// The default policy centers a column exactly when it takes a value outside
/// {0, 1}: continuous scores are centered, binary indicators are left alone.
#[derive(Clone, Debug, Default)]
pub enum CenteringPolicy {
    #[default]
    AutoBinary,
    /// Explicit per-column choice, aligned to the covariate columns.
    Explicit(Vec<bool>),
}

/// N x P design with column roles; stored column-major so the per-site
/// updates stream down contiguous columns.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    k: usize,
    /// column-major N x P
    data: Vec<f64>,
    /// centering offset per non-subtype column (0 when not centered)
    offsets: Vec<f64>,
    centered: Vec<bool>,
    column_names: Vec<String>,
    subtypes: Vec<usize>,
}

impl DesignMatrix {
    pub fn num_subjects(&self) -> usize {
        self.n
    }

    /// Number of columns P = K + number of extra covariates.
    pub fn num_coefficients(&self) -> usize {
        self.p
    }

    /// Number of subtype groups K.
    pub fn num_subtypes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn column(&self, p: usize) -> &[f64] {
        &self.data[p * self.n..(p + 1) * self.n]
    }

    #[inline]
    pub fn value(&self, subject: usize, p: usize) -> f64 {
        self.data[p * self.n + subject]
    }

    /// Copy of a subject's covariate row.
    pub fn row(&self, subject: usize) -> Vec<f64> {
        (0..self.p).map(|p| self.value(subject, p)).collect()
    }

    /// The same row with the subtype block forced to `subtype` (1-based).
    pub fn row_with_subtype(&self, subject: usize, subtype: usize) -> Vec<f64> {
        let mut row = self.row(subject);
        for kk in 0..self.k {
            row[kk] = if kk + 1 == subtype { 1.0 } else { 0.0 };
        }
        row
    }

    /// Subtype label (1-based) of each subject.
    pub fn subtypes(&self) -> &[usize] {
        &self.subtypes
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn centering_offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn centered_columns(&self) -> &[bool] {
        &self.centered
    }

    /// Reference row for map products: one-hot `subtype`, every other column
    /// at `values` (post-centering scale), defaulting to zero.
    pub fn reference_row(&self, subtype: usize, values: &[(usize, f64)]) -> Result<Vec<f64>> {
        if subtype == 0 || subtype > self.k {
            return data_err(format!("unknown subtype index {subtype} (K = {})", self.k));
        }
        let mut row = vec![0.0; self.p];
        row[subtype - 1] = 1.0;
        for &(col, v) in values {
            if col < self.k || col >= self.p {
                return data_err(format!("reference value targets non-covariate column {col}"));
            }
            row[col] = v;
        }
        Ok(row)
    }
}

/// Build the design matrix from subject records.
///
/// K is the number of distinct subtype labels; labels must form 1..=K.
/// Continuous columns are centered to sample mean zero under the policy.
pub fn build_design(
    records: &[SubjectRecord],
    covariate_names: &[String],
    policy: &CenteringPolicy,
) -> Result<DesignMatrix> {
    if records.is_empty() {
        return data_err("no subjects");
    }
    let n = records.len();
    let n_cov = covariate_names.len();
    for rec in records {
        if rec.covariates.len() != n_cov {
            return data_err(format!(
                "subject {} has {} covariates, header declares {}",
                rec.id,
                rec.covariates.len(),
                n_cov
            ));
        }
        for (c, &v) in rec.covariates.iter().enumerate() {
            if !v.is_finite() {
                return data_err(format!(
                    "non-finite covariate: subject {}, column {}",
                    rec.id, covariate_names[c]
                ));
            }
        }
    }

    let k = records.iter().map(|r| r.subtype).max().unwrap_or(0);
    if k == 0 {
        return data_err("subtype labels must be positive integers");
    }
    for rec in records {
        if rec.subtype == 0 || rec.subtype > k {
            return data_err(format!("subject {} subtype {} outside 1..={k}", rec.id, rec.subtype));
        }
    }

    let centered: Vec<bool> = match policy {
        CenteringPolicy::AutoBinary => (0..n_cov)
            .map(|c| records.iter().any(|r| r.covariates[c] != 0.0 && r.covariates[c] != 1.0))
            .collect(),
        CenteringPolicy::Explicit(flags) => {
            if flags.len() != n_cov {
                return data_err(format!(
                    "centering policy covers {} columns, design has {n_cov}",
                    flags.len()
                ));
            }
            flags.clone()
        }
    };

    let p = k + n_cov;
    let mut data = vec![0.0; n * p];
    for (i, rec) in records.iter().enumerate() {
        data[(rec.subtype - 1) * n + i] = 1.0;
    }
    let mut offsets = vec![0.0; n_cov];
    for c in 0..n_cov {
        if centered[c] {
            offsets[c] = records.iter().map(|r| r.covariates[c]).sum::<f64>() / n as f64;
        }
        for (i, rec) in records.iter().enumerate() {
            data[(k + c) * n + i] = rec.covariates[c] - offsets[c];
        }
    }

    let mut column_names: Vec<String> = (1..=k).map(|g| format!("subtype_{g}")).collect();
    column_names.extend(covariate_names.iter().cloned());

    Ok(DesignMatrix {
        n,
        p,
        k,
        data,
        offsets,
        centered,
        column_names,
        subtypes: records.iter().map(|r| r.subtype).collect(),
    })
}

/// A spatially varying covariate shared by all subjects, aligned to the
/// lattice site order.
#[derive(Clone, Debug)]
pub struct SpatialCovariate {
    pub values: Vec<f64>,
}

impl SpatialCovariate {
    pub fn new(values: Vec<f64>, num_sites: usize) -> Result<Self> {
        if values.len() != num_sites {
            return data_err(format!(
                "spatial covariate has {} values, lattice has {num_sites} sites",
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return data_err(format!("spatial covariate contains non-finite value {v}"));
        }
        Ok(SpatialCovariate { values })
    }
}

/// eta = x' beta_star + w * gamma.
#[inline]
pub fn linear_predictor(x: &[f64], beta_star: &[f64], w: f64, gamma: f64) -> f64 {
    debug_assert_eq!(x.len(), beta_star.len());
    let mut eta = w * gamma;
    for (xi, bi) in x.iter().zip(beta_star) {
        eta += xi * bi;
    }
    eta
}

/// Probit success probability Phi(eta).
#[inline]
pub fn lesion_probability(eta: f64) -> f64 {
    norm_cdf(eta)
}
