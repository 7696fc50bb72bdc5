//! Synthetic cohort generator with a ground-truth oracle.
//!
//! Subjects are 2-D binary images split into four quadrants. Per quadrant a
//! Poisson number of square lesions (side 1, 3 or 5, uniformly) is stamped
//! at uniform anchor positions; lesions merge freely and are clipped only at
//! the image boundary. Two binary factors shift the intensities: females
//! gain lesions on the right quadrants, group 1 gains on the bottom ones.
//!
//! Base intensities 10 (left) / 8 (right) are calibrated so the interior
//! coverage 1 - exp(-lambda (35/3) / 2500) lands on the published quadrant
//! rates for group-1 males; they are not stated by the original study.

use rand_distr::{Distribution, Poisson};

use crate::data::BitMatrix;
use crate::error::{config_err, Result};
use crate::model::SubjectRecord;
use crate::rng::{CounterRng, Streams, UpdateKind};

/// Stream namespace for oracle subjects, distinct from cohort subjects so
/// the truth estimate never reuses a cohort image.
const ORACLE_NAMESPACE: u64 = 1;

#[derive(Clone, Debug)]
pub struct SimDesign {
    pub image_side: usize,
    pub quadrant_side: usize,
    /// Base Poisson intensity of the left quadrants.
    pub lambda_left: f64,
    /// Base Poisson intensity of the right quadrants.
    pub lambda_right: f64,
    /// Added on the right quadrants for females.
    pub gender_effect: f64,
    /// Added on the bottom quadrants for group 1.
    pub group_effect: f64,
    /// Lesion side lengths, drawn uniformly.
    pub lesion_sides: Vec<usize>,
    /// Edge pixels excluded when estimating quadrant rates.
    pub margin: usize,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            image_side: 100,
            quadrant_side: 50,
            lambda_left: 10.0,
            lambda_right: 8.0,
            gender_effect: 4.0,
            group_effect: 4.0,
            lesion_sides: vec![1, 3, 5],
            margin: 2,
        }
    }
}

/// Cohort cell: group is the subtype label (1 or 2), male is the gender
/// indicator (females are coded 0, males 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub group: usize,
    pub male: bool,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("g{}_{}", self.group, if self.male { "male" } else { "female" })
    }
}

/// Fixed cell order used for subject numbering and reports.
pub const CELLS: [Cell; 4] = [
    Cell { group: 1, male: false },
    Cell { group: 1, male: true },
    Cell { group: 2, male: false },
    Cell { group: 2, male: true },
];

/// Quadrants in report order: UL, UR, LR, LL (clockwise from upper left).
pub const QUADRANT_LABELS: [&str; 4] = ["UL", "UR", "LR", "LL"];

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.quadrant_side == 0 || self.image_side != 2 * self.quadrant_side {
            return config_err("image side must be twice the quadrant side");
        }
        if self.lambda_left < 0.0 || self.lambda_right < 0.0 {
            return config_err("intensities must be nonnegative");
        }
        if self.lesion_sides.is_empty() || self.lesion_sides.iter().any(|&s| s == 0 || s % 2 == 0) {
            return config_err("lesion side set must be nonempty odd positives");
        }
        Ok(())
    }

    /// Quadrant origin (x0, y0) in report order.
    fn quadrant_origin(&self, q: usize) -> (usize, usize) {
        let s = self.quadrant_side;
        match q {
            0 => (0, 0),     // UL
            1 => (s, 0),     // UR
            2 => (s, s),     // LR
            _ => (0, s),     // LL
        }
    }

    /// Poisson intensity of a quadrant for one cell.
    pub fn intensity(&self, quadrant: usize, cell: Cell) -> f64 {
        let (x0, y0) = self.quadrant_origin(quadrant);
        let right = x0 >= self.quadrant_side;
        let bottom = y0 >= self.quadrant_side;
        let mut lambda = if right { self.lambda_right } else { self.lambda_left };
        if right && !cell.male {
            lambda += self.gender_effect;
        }
        if bottom && cell.group == 1 {
            lambda += self.group_effect;
        }
        lambda
    }

    /// Expected interior pixel coverage of a quadrant (Boolean model):
    /// 1 - exp(-lambda * mean lesion area / quadrant area).
    pub fn interior_coverage(&self, lambda: f64) -> f64 {
        let mean_area: f64 = self.lesion_sides.iter().map(|&s| (s * s) as f64).sum::<f64>()
            / self.lesion_sides.len() as f64;
        let quad_area = (self.quadrant_side * self.quadrant_side) as f64;
        1.0 - (-lambda * mean_area / quad_area).exp()
    }

    /// Generate one subject's binary image.
    pub fn generate_subject(&self, cell: Cell, rng: &mut CounterRng) -> Vec<bool> {
        let side = self.image_side;
        let mut image = vec![false; side * side];
        for q in 0..4 {
            let lambda = self.intensity(q, cell);
            let count = if lambda > 0.0 {
                let pois = Poisson::new(lambda).expect("positive intensity");
                pois.sample(rng) as u64
            } else {
                0
            };
            let (x0, y0) = self.quadrant_origin(q);
            for _ in 0..count {
                let lesion = self.lesion_sides[rng.below(self.lesion_sides.len() as u64) as usize];
                let ax = x0 + rng.below(self.quadrant_side as u64) as usize;
                let ay = y0 + rng.below(self.quadrant_side as u64) as usize;
                // stamp, clipped at the image bounds (lesions may merge and
                // spill across quadrant borders)
                for y in ay..(ay + lesion).min(side) {
                    for x in ax..(ax + lesion).min(side) {
                        image[y * side + x] = true;
                    }
                }
            }
        }
        image
    }

    /// Balanced cohort: `per_cell` subjects for each of the four cells,
    /// bit-identical for a fixed seed.
    pub fn generate_cohort(&self, per_cell: usize, seed: u64) -> Result<SimCohort> {
        self.validate()?;
        if per_cell == 0 {
            return config_err("per-cell subject count must be positive");
        }
        let streams = Streams::new(seed, 0);
        let mut records = Vec::new();
        let mut images = Vec::new();
        for (ci, &cell) in CELLS.iter().enumerate() {
            for idx in 0..per_cell {
                let subject_index = (ci * per_cell + idx) as u64;
                let mut rng = streams.stream(UpdateKind::SimSubject, 0, 0, subject_index);
                images.push(self.generate_subject(cell, &mut rng));
                records.push(SubjectRecord {
                    id: format!("{}_{idx:04}", cell.label()),
                    subtype: cell.group,
                    covariates: vec![if cell.male { 1.0 } else { 0.0 }],
                });
            }
        }
        Ok(SimCohort { design: self.clone(), records, images })
    }

    /// Pixels inside the margin-trimmed quadrant interiors.
    pub fn interior_mask(&self) -> Vec<bool> {
        let side = self.image_side;
        let mut mask = vec![false; side * side];
        for q in 0..4 {
            let (x0, y0) = self.quadrant_origin(q);
            for y in y0 + self.margin..y0 + self.quadrant_side - self.margin {
                for x in x0 + self.margin..x0 + self.quadrant_side - self.margin {
                    mask[y * side + x] = true;
                }
            }
        }
        mask
    }

    /// Empirical ground-truth lesion rates: `n_per_cell` fresh subjects per
    /// cell, per-pixel rates averaged over the trimmed quadrant interiors.
    pub fn true_rates(&self, n_per_cell: usize, seed: u64) -> Result<RateTable> {
        self.validate()?;
        if n_per_cell == 0 {
            return config_err("oracle subject count must be positive");
        }
        let streams = Streams::new(seed, ORACLE_NAMESPACE);
        let side = self.image_side;
        let mut per_cell_quadrant = [[0.0f64; 4]; 4];
        let mut per_cell_pixels: Vec<Vec<f64>> = Vec::with_capacity(4);

        for (ci, &cell) in CELLS.iter().enumerate() {
            let mut counts = vec![0u32; side * side];
            for idx in 0..n_per_cell {
                let subject_index = (ci * n_per_cell + idx) as u64;
                let mut rng = streams.stream(UpdateKind::SimSubject, 0, 0, subject_index);
                let image = self.generate_subject(cell, &mut rng);
                for (c, &hit) in counts.iter_mut().zip(&image) {
                    *c += hit as u32;
                }
            }
            let rates: Vec<f64> =
                counts.iter().map(|&c| c as f64 / n_per_cell as f64).collect();
            for q in 0..4 {
                let (x0, y0) = self.quadrant_origin(q);
                let mut acc = 0.0;
                let mut n_px = 0usize;
                for y in y0 + self.margin..y0 + self.quadrant_side - self.margin {
                    for x in x0 + self.margin..x0 + self.quadrant_side - self.margin {
                        acc += rates[y * side + x];
                        n_px += 1;
                    }
                }
                per_cell_quadrant[ci][q] = acc / n_px as f64;
            }
            per_cell_pixels.push(rates);
        }
        Ok(RateTable { design: self.clone(), per_cell_quadrant, per_cell_pixels })
    }
}

/// Generated cohort: covariate records plus one image per subject.
#[derive(Clone, Debug)]
pub struct SimCohort {
    pub design: SimDesign,
    pub records: Vec<SubjectRecord>,
    pub images: Vec<Vec<bool>>,
}

impl SimCohort {
    /// Outcome bit matrix aligned to a full-image lattice (site order equals
    /// pixel order for a full mask).
    pub fn outcome_matrix(&self) -> BitMatrix {
        let m = self.design.image_side * self.design.image_side;
        let mut bits = BitMatrix::zeros(m, self.records.len());
        for (subject, image) in self.images.iter().enumerate() {
            for (site, &hit) in image.iter().enumerate() {
                if hit {
                    bits.set(site, subject, true);
                }
            }
        }
        bits
    }
}

/// Ground-truth rates per cell, both as quadrant summaries and full pixel
/// maps (used to paint truth rasters).
#[derive(Clone, Debug)]
pub struct RateTable {
    pub design: SimDesign,
    /// cell x quadrant (report order) trimmed-interior mean rates.
    pub per_cell_quadrant: [[f64; 4]; 4],
    /// cell -> per-pixel empirical rates.
    pub per_cell_pixels: Vec<Vec<f64>>,
}

impl RateTable {
    /// Quadrant-constant truth raster for one cell: every pixel of a
    /// quadrant carries the quadrant's trimmed-interior mean rate.
    pub fn truth_raster(&self, cell_idx: usize) -> Vec<f64> {
        let side = self.design.image_side;
        let mut out = vec![0.0; side * side];
        for q in 0..4 {
            let (x0, y0) = self.design.quadrant_origin(q);
            for y in y0..y0 + self.design.quadrant_side {
                for x in x0..x0 + self.design.quadrant_side {
                    out[y * side + x] = self.per_cell_quadrant[cell_idx][q];
                }
            }
        }
        out
    }
}
