//! Cohort directory layout and loading.
//!
//! A dataset directory holds:
//!
//! ```text
//! cohort.csv     id,subtype,<covariate columns...>
//! rasters.csv    id,path          (outcome raster per subject)
//! mask.blm       optional binary mask; default is the union of outcomes
//! spatial_covariate.blm  optional float raster (e.g. tissue probability)
//! outcomes/      the per-subject binary rasters
//! ```
//!
//! Identity and dimension checks run before any outcome payload is decoded,
//! so id/raster mismatches fail fast.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{BitMatrix, Dataset};
use crate::error::{data_err, Result};
use crate::lattice::{Lattice, Mask};
use crate::model::{build_design, CenteringPolicy, SpatialCovariate, SubjectRecord};

use super::raster;

pub const COHORT_FILE: &str = "cohort.csv";
pub const RASTER_INDEX_FILE: &str = "rasters.csv";
pub const MASK_FILE: &str = "mask.blm";
pub const SPATIAL_COVARIATE_FILE: &str = "spatial_covariate.blm";

/// A loaded cohort: spatial index plus the assembled dataset.
#[derive(Debug)]
pub struct LoadedCohort {
    pub lattice: Lattice,
    pub dataset: Dataset,
    /// Original subtype labels in remapped order (dense 1..K).
    pub subtype_labels: Vec<i64>,
    pub covariate_names: Vec<String>,
}

/// Write a cohort directory (used by the simulator and by tests).
pub fn write_cohort(
    dir: &Path,
    records: &[SubjectRecord],
    covariate_names: &[String],
    dims: [u32; 3],
    outcomes: impl Fn(usize) -> Vec<bool>,
    mask: Option<&[bool]>,
    spatial_covariate: Option<&[f64]>,
) -> Result<()> {
    fs::create_dir_all(dir.join("outcomes"))?;

    let mut cohort = csv::Writer::from_path(dir.join(COHORT_FILE))
        .map_err(|e| crate::Error::Data(format!("cohort.csv: {e}")))?;
    let mut header = vec!["id".to_string(), "subtype".to_string()];
    header.extend(covariate_names.iter().cloned());
    cohort.write_record(&header).map_err(csv_err)?;
    for rec in records {
        let mut row = vec![rec.id.clone(), rec.subtype.to_string()];
        row.extend(rec.covariates.iter().map(|v| v.to_string()));
        cohort.write_record(&row).map_err(csv_err)?;
    }
    cohort.flush()?;

    let mut index = csv::Writer::from_path(dir.join(RASTER_INDEX_FILE)).map_err(csv_err)?;
    index.write_record(["id", "path"]).map_err(csv_err)?;
    for (i, rec) in records.iter().enumerate() {
        let rel = format!("outcomes/{}.blm", rec.id);
        index.write_record([rec.id.as_str(), rel.as_str()]).map_err(csv_err)?;
        raster::write_bits(&dir.join(&rel), dims, &outcomes(i))?;
    }
    index.flush()?;

    if let Some(mask) = mask {
        raster::write_bits(&dir.join(MASK_FILE), dims, mask)?;
    }
    if let Some(w) = spatial_covariate {
        raster::write_f64_as_f32(&dir.join(SPATIAL_COVARIATE_FILE), dims, w)?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Data(format!("csv: {e}"))
}

struct RawRecord {
    id: String,
    subtype: i64,
    covariates: Vec<f64>,
}

fn read_cohort_csv(path: &Path) -> Result<(Vec<String>, Vec<RawRecord>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "subtype" {
        return data_err(format!("{}: header must start with id,subtype", path.display()));
    }
    let covariate_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        if row.len() != headers.len() {
            return data_err(format!("{}: ragged row for id {:?}", path.display(), row.get(0)));
        }
        let id = row[0].to_string();
        let subtype: i64 = row[1]
            .parse()
            .map_err(|_| crate::Error::Data(format!("subject {id}: subtype {:?} is not an integer", &row[1])))?;
        if subtype <= 0 {
            return data_err(format!("subject {id}: subtype must be positive"));
        }
        let mut covariates = Vec::with_capacity(covariate_names.len());
        for (c, field) in row.iter().skip(2).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                crate::Error::Data(format!(
                    "subject {id}: covariate {} is not numeric: {field:?}",
                    covariate_names[c]
                ))
            })?;
            covariates.push(v);
        }
        records.push(RawRecord { id, subtype, covariates });
    }
    if records.is_empty() {
        return data_err(format!("{}: no subjects", path.display()));
    }
    Ok((covariate_names, records))
}

fn read_raster_index(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(csv_err)?;
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "path" {
        return data_err(format!("{}: header must be id,path", path.display()));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        out.push((row[0].to_string(), PathBuf::from(&row[1])));
    }
    Ok(out)
}

/// Load and validate a cohort directory.
pub fn load_cohort(dir: &Path, policy: &CenteringPolicy) -> Result<LoadedCohort> {
    let (covariate_names, raw) = read_cohort_csv(&dir.join(COHORT_FILE))?;
    let index = read_raster_index(&dir.join(RASTER_INDEX_FILE))?;

    // identity checks before any payload work
    let mut seen = BTreeMap::new();
    for (i, rec) in raw.iter().enumerate() {
        if seen.insert(rec.id.clone(), i).is_some() {
            return data_err(format!("duplicate subject id {}", rec.id));
        }
    }
    let mut paths: BTreeMap<&str, &PathBuf> = BTreeMap::new();
    for (id, path) in &index {
        if paths.insert(id.as_str(), path).is_some() {
            return data_err(format!("duplicate raster entry for id {id}"));
        }
    }
    for rec in &raw {
        match paths.get(rec.id.as_str()) {
            None => return data_err(format!("subject {} has no outcome raster listed", rec.id)),
            Some(rel) => {
                if !dir.join(rel).is_file() {
                    return data_err(format!(
                        "outcome raster for {} missing: {}",
                        rec.id,
                        dir.join(rel).display()
                    ));
                }
            }
        }
    }
    if paths.len() != raw.len() {
        return data_err(format!(
            "rasters.csv lists {} subjects, cohort.csv has {}",
            paths.len(),
            raw.len()
        ));
    }

    // dense subtype remap in ascending label order
    let mut labels: Vec<i64> = raw.iter().map(|r| r.subtype).collect();
    labels.sort_unstable();
    labels.dedup();
    let rank = |s: i64| labels.binary_search(&s).unwrap() + 1;

    let records: Vec<SubjectRecord> = raw
        .iter()
        .map(|r| SubjectRecord {
            id: r.id.clone(),
            subtype: rank(r.subtype),
            covariates: r.covariates.clone(),
        })
        .collect();

    // mask: explicit file or the union of outcome voxels
    let mask_path = dir.join(MASK_FILE);
    let (mask, outcome_rasters) = if mask_path.is_file() {
        let r = raster::read(&mask_path)?;
        let dims = r.dims();
        let mask = Mask::new(
            [dims[0] as usize, dims[1] as usize, dims[2] as usize],
            r.as_bits()?.to_vec(),
        )?;
        (mask, None)
    } else {
        // one pass to union; rasters kept to avoid re-reading
        let mut rasters = Vec::with_capacity(raw.len());
        let mut union: Option<([u32; 3], Vec<bool>)> = None;
        for rec in &raw {
            let r = raster::read(&dir.join(paths[rec.id.as_str()]))?;
            let bits = r.as_bits()?;
            match &mut union {
                None => union = Some((r.dims(), bits.to_vec())),
                Some((dims, acc)) => {
                    if *dims != r.dims() {
                        return data_err(format!(
                            "raster dims mismatch for {}: {:?} vs {:?}",
                            rec.id,
                            r.dims(),
                            dims
                        ));
                    }
                    for (a, &b) in acc.iter_mut().zip(bits) {
                        *a |= b;
                    }
                }
            }
            rasters.push(r);
        }
        let (dims, cells) = union.unwrap();
        (Mask::new([dims[0] as usize, dims[1] as usize, dims[2] as usize], cells)?, Some(rasters))
    };

    let lattice = Lattice::from_mask(&mask)?;
    let m = lattice.num_sites();
    let n = records.len();
    let want_dims = [mask.dims[0] as u32, mask.dims[1] as u32, mask.dims[2] as u32];

    let mut outcomes = BitMatrix::zeros(m, n);
    let mut fill = |subject: usize, r: &raster::Raster, id: &str| -> Result<()> {
        if r.dims() != want_dims {
            return data_err(format!(
                "outcome raster for {id} has dims {:?}, mask has {want_dims:?}",
                r.dims()
            ));
        }
        let bits = r.as_bits()?;
        for site in 0..m {
            if bits[lattice.cell_of_site(site)] {
                outcomes.set(site, subject, true);
            }
        }
        Ok(())
    };
    match outcome_rasters {
        Some(rasters) => {
            for (subject, (rec, r)) in raw.iter().zip(&rasters).enumerate() {
                fill(subject, r, &rec.id)?;
            }
        }
        None => {
            for (subject, rec) in raw.iter().enumerate() {
                let r = raster::read(&dir.join(paths[rec.id.as_str()]))?;
                fill(subject, &r, &rec.id)?;
            }
        }
    }

    let spatial_covariate = {
        let p = dir.join(SPATIAL_COVARIATE_FILE);
        if p.is_file() {
            let r = raster::read(&p)?;
            if r.dims() != want_dims {
                return data_err(format!(
                    "spatial covariate dims {:?} do not match mask {want_dims:?}",
                    r.dims()
                ));
            }
            let vals = r.as_f32()?;
            let per_site: Vec<f64> =
                (0..m).map(|site| vals[lattice.cell_of_site(site)] as f64).collect();
            Some(SpatialCovariate::new(per_site, m)?)
        } else {
            None
        }
    };

    let design = build_design(&records, &covariate_names, policy)?;
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let dataset = Dataset::new(&lattice, design, outcomes, spatial_covariate, ids)?;
    Ok(LoadedCohort { lattice, dataset, subtype_labels: labels, covariate_names })
}
