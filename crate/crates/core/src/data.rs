//! Outcome storage and the assembled dataset the sampler consumes.

use crate::error::{data_err, Result};
use crate::lattice::Lattice;
use crate::model::{DesignMatrix, SpatialCovariate};

/// Dense bit matrix, one row per lattice site (site-major), one column per
/// subject. Site-major keeps the per-site conditional updates on a
/// contiguous word run.
#[derive(Clone, Debug)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix { rows, cols, words_per_row, words: vec![0; rows * words_per_row] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        w >> (col % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        if value {
            *w |= 1 << (col % 64);
        } else {
            *w &= !(1 << (col % 64));
        }
    }

    /// Number of set bits in a row.
    pub fn count_row(&self, row: usize) -> usize {
        self.row_words(row).iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.words[row * self.words_per_row..(row + 1) * self.words_per_row]
    }
}

/// Everything the engine needs about one cohort.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub design: DesignMatrix,
    /// site-major M x N outcome bits
    pub outcomes: BitMatrix,
    pub spatial_covariate: Option<SpatialCovariate>,
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        lattice: &Lattice,
        design: DesignMatrix,
        outcomes: BitMatrix,
        spatial_covariate: Option<SpatialCovariate>,
        ids: Vec<String>,
    ) -> Result<Self> {
        if outcomes.rows() != lattice.num_sites() {
            return data_err(format!(
                "outcome matrix has {} sites, lattice has {}",
                outcomes.rows(),
                lattice.num_sites()
            ));
        }
        if outcomes.cols() != design.num_subjects() {
            return data_err(format!(
                "outcome matrix has {} subjects, design has {}",
                outcomes.cols(),
                design.num_subjects()
            ));
        }
        if ids.len() != design.num_subjects() {
            return data_err("subject id list does not match design".to_string());
        }
        Ok(Dataset { design, outcomes, spatial_covariate, ids })
    }

    pub fn num_subjects(&self) -> usize {
        self.design.num_subjects()
    }

    pub fn num_sites(&self) -> usize {
        self.outcomes.rows()
    }

    /// Spatial covariate value at a site, 0 when none is attached.
    #[inline]
    pub fn w(&self, site: usize) -> f64 {
        match &self.spatial_covariate {
            Some(sc) => sc.values[site],
            None => 0.0,
        }
    }

    /// Lesion count at a site across all subjects.
    pub fn site_lesion_count(&self, site: usize) -> usize {
        self.outcomes.count_row(site)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_roundtrip_and_counts() {
        let mut m = BitMatrix::zeros(3, 70);
        m.set(1, 0, true);
        m.set(1, 63, true);
        m.set(1, 64, true);
        m.set(2, 69, true);
        assert!(m.get(1, 0) && m.get(1, 63) && m.get(1, 64));
        assert!(!m.get(0, 0) && !m.get(1, 1));
        assert_eq!(m.count_row(1), 3);
        assert_eq!(m.count_row(0), 0);
        m.set(1, 63, false);
        assert_eq!(m.count_row(1), 2);
    }
}
