//! CSV trace files.
//!
//! Scalar traces (alpha, gamma, precision entries) are wide CSVs indexed by
//! iteration; monitored-site traces use the long layout
//! `label,chain,iteration,value` consumed by the diagnose command.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{data_err, Result};
use crate::inference::PosteriorSummary;
use crate::lattice::Lattice;

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Data(format!("csv: {e}"))
}

/// Stable label for a monitored (site, coefficient) pair; coordinates keep
/// labels comparable across chains.
pub fn monitored_label(lattice: &Lattice, site: u32, coef_name: &str) -> String {
    let [x, y, z] = lattice.coords(site as usize);
    format!("x{x}y{y}z{z}.{coef_name}")
}

pub fn write_alpha_trace(path: &Path, summary: &PosteriorSummary, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (t, &iter) in summary.retained_iterations.iter().enumerate() {
        let mut row = vec![iter.to_string()];
        for p in 0..summary.p {
            row.push(summary.alpha_trace[t * summary.p + p].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gamma_trace(path: &Path, summary: &PosteriorSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "gamma"]).map_err(csv_err)?;
    for (t, &iter) in summary.retained_iterations.iter().enumerate() {
        w.write_record([iter.to_string(), summary.gamma_trace[t].to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_precision_trace(
    path: &Path,
    summary: &PosteriorSummary,
    names: &[String],
) -> Result<()> {
    let p = summary.p;
    let width = p * (p + 1) / 2;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["iteration".to_string()];
    for a in 0..p {
        for b in a..p {
            header.push(format!("prec.{}.{}", names[a], names[b]));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for (t, &iter) in summary.retained_iterations.iter().enumerate() {
        let mut row = vec![iter.to_string()];
        for i in 0..width {
            row.push(summary.precision_trace[t * width + i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_monitored_traces(
    path: &Path,
    summary: &PosteriorSummary,
    lattice: &Lattice,
    names: &[String],
    chain: u64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["label", "chain", "iteration", "value"]).map_err(csv_err)?;
    let stride = summary.monitored_sites.len() * summary.p;
    for (t, &iter) in summary.retained_iterations.iter().enumerate() {
        for (si, &site) in summary.monitored_sites.iter().enumerate() {
            for (pi, name) in names.iter().enumerate() {
                let value = summary.monitored_trace[t * stride + si * summary.p + pi];
                w.write_record([
                    monitored_label(lattice, site, name),
                    chain.to_string(),
                    iter.to_string(),
                    value.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_monitored_sites(path: &Path, lattice: &Lattice, sites: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["site", "x", "y", "z"]).map_err(csv_err)?;
    for &s in sites {
        let [x, y, z] = lattice.coords(s as usize);
        w.write_record([s.to_string(), x.to_string(), y.to_string(), z.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a long-format monitored trace file: label -> values in file order.
pub fn read_monitored_traces(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(csv_err)?;
    if headers.len() != 4 || &headers[0] != "label" {
        return data_err(format!("{}: expected label,chain,iteration,value", path.display()));
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let value: f64 = row[3]
            .parse()
            .map_err(|_| crate::Error::Data(format!("bad trace value {:?}", &row[3])))?;
        out.entry(row[0].to_string()).or_default().push(value);
    }
    if out.is_empty() {
        return data_err(format!("{}: no trace rows", path.display()));
    }
    Ok(out)
}

/// Read x,y,z monitored-site coordinates (one line per site, header x,y,z or
/// site,x,y,z).
pub fn read_monitored_sites(path: &Path, lattice: &Lattice) -> Result<Vec<u32>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let offset = match headers.len() {
        3 if &headers[0] == "x" => 0,
        4 if &headers[1] == "x" => 1,
        _ => return data_err(format!("{}: expected header x,y,z or site,x,y,z", path.display())),
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let coord = |i: usize| -> Result<usize> {
            row[offset + i]
                .parse()
                .map_err(|_| crate::Error::Data(format!("bad coordinate {:?}", &row[offset + i])))
        };
        let (x, y, z) = (coord(0)?, coord(1)?, coord(2)?);
        match lattice.site_at(x, y, z) {
            Some(site) => out.push(site as u32),
            None => return data_err(format!("monitored voxel ({x},{y},{z}) is outside the mask")),
        }
    }
    if out.is_empty() {
        return data_err(format!("{}: no monitored sites", path.display()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Mask;
    use tempfile::tempdir;

    #[test]
    fn monitored_roundtrip() {
        let dir = tempdir().unwrap();
        let lattice = Lattice::from_mask(&Mask::full_2d(3, 2)).unwrap();
        let mut summary =
            PosteriorSummary::new(6, 1, vec![], vec![], vec![0, 4]);
        summary.monitored_trace = vec![1.0, 2.0, 3.0, 4.0];
        summary.retained_iterations = vec![10, 11];
        let path = dir.path().join("monitored_traces.csv");
        write_monitored_traces(&path, &summary, &lattice, &["subtype_1".into()], 0).unwrap();
        let back = read_monitored_traces(&path).unwrap();
        assert_eq!(back["x0y0z0.subtype_1"], vec![1.0, 3.0]);
        assert_eq!(back["x1y1z0.subtype_1"], vec![2.0, 4.0]);
    }

    #[test]
    fn sites_file_roundtrip() {
        let dir = tempdir().unwrap();
        let lattice = Lattice::from_mask(&Mask::full_2d(4, 4)).unwrap();
        let path = dir.path().join("sites.csv");
        write_monitored_sites(&path, &lattice, &[3, 9]).unwrap();
        let back = read_monitored_sites(&path, &lattice).unwrap();
        assert_eq!(back, vec![3, 9]);
    }
}
