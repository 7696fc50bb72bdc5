//! File formats: rasters, cohort manifests, trace CSVs, likelihood traces
//! and resumable checkpoints.

pub(crate) mod bin;
pub mod checkpoint;
pub mod likelihood;
pub mod manifest;
pub mod raster;
pub mod traces;
