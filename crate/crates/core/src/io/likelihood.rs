//! Binary container for the retained-draw likelihood table used by the
//! leave-one-out classifier.

use std::fs;
use std::path::Path;

use super::bin::{Reader, Writer};
use crate::error::{data_err, Result};
use crate::predict::LikelihoodTrace;

const MAGIC: &[u8; 4] = b"BLMT";
const VERSION: u16 = 1;

pub fn write(path: &Path, trace: &LikelihoodTrace) -> Result<()> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.put_u64(trace.n as u64);
    w.put_u64(trace.k as u64);
    w.put_u64_slice(&trace.iterations);
    w.put_f64_slice(&trace.values);
    w.put_u64_slice(&trace.true_subtypes.iter().map(|&s| s as u64).collect::<Vec<_>>());
    fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<LikelihoodTrace> {
    let bytes =
        fs::read(path).map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = Reader::new(&bytes, MAGIC, VERSION, "likelihood trace")?;
    let n = r.get_u64()? as usize;
    let k = r.get_u64()? as usize;
    let iterations = r.get_u64_vec()?;
    let values = r.get_f64_vec()?;
    let true_subtypes: Vec<usize> = r.get_u64_vec()?.into_iter().map(|v| v as usize).collect();
    r.finish()?;
    if values.len() != iterations.len() * n * k || true_subtypes.len() != n {
        return data_err("likelihood trace dimensions are inconsistent");
    }
    Ok(LikelihoodTrace { n, k, iterations, values, true_subtypes })
}
