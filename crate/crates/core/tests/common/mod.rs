//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each suite uses a subset

use blm_core::data::{BitMatrix, Dataset};
use blm_core::lattice::{Lattice, Mask};
use blm_core::model::{build_design, CenteringPolicy, SubjectRecord};

/// Single-subtype cohort on an nx x ny grid: design is a column of ones.
pub fn intercept_cohort(
    nx: usize,
    ny: usize,
    n: usize,
    lesions: &[(usize, usize)],
) -> (Lattice, Dataset) {
    let lattice = Lattice::from_mask(&Mask::full_2d(nx, ny)).unwrap();
    let records: Vec<SubjectRecord> = (0..n)
        .map(|i| SubjectRecord { id: format!("s{i}"), subtype: 1, covariates: vec![] })
        .collect();
    let design = build_design(&records, &[], &CenteringPolicy::AutoBinary).unwrap();
    let mut outcomes = BitMatrix::zeros(lattice.num_sites(), n);
    for &(site, subject) in lesions {
        outcomes.set(site, subject, true);
    }
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let dataset = Dataset::new(&lattice, design, outcomes, None, ids).unwrap();
    (lattice, dataset)
}

/// Two-subtype cohort (K one-hot intercepts, no extra covariates).
pub fn two_group_cohort(
    nx: usize,
    ny: usize,
    subtypes: &[usize],
    lesions: &[(usize, usize)],
) -> (Lattice, Dataset) {
    let lattice = Lattice::from_mask(&Mask::full_2d(nx, ny)).unwrap();
    let records: Vec<SubjectRecord> = subtypes
        .iter()
        .enumerate()
        .map(|(i, &s)| SubjectRecord { id: format!("s{i}"), subtype: s, covariates: vec![] })
        .collect();
    let design = build_design(&records, &[], &CenteringPolicy::AutoBinary).unwrap();
    let mut outcomes = BitMatrix::zeros(lattice.num_sites(), subtypes.len());
    for &(site, subject) in lesions {
        outcomes.set(site, subject, true);
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let dataset = Dataset::new(&lattice, design, outcomes, None, ids).unwrap();
    (lattice, dataset)
}

/// Monte Carlo standard error of a chain mean (autocorrelation adjusted).
pub fn mcse(xs: &[f64]) -> f64 {
    blm_core::stats::mc_standard_error(xs)
}
