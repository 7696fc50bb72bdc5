//! Resumable chain checkpoints.
//!
//! A checkpoint is a versioned binary dump of the full chain state plus all
//! accumulated sinks, so a resumed run reproduces the uninterrupted one
//! bit for bit (random streams are addressed by iteration, never stateful).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::bin::{Reader, Writer};
use crate::error::{data_err, Result};
use crate::inference::{Contrast, PosteriorSummary, ProbProfile, WelfordVec};
use crate::predict::LikelihoodTrace;
use crate::sampler::{McmcConfig, ModelState, RunSinks};

const MAGIC: &[u8; 4] = b"BLMC";
const VERSION: u16 = 1;

pub const CHECKPOINT_FILE: &str = "checkpoint.blmck";

pub struct Checkpoint {
    pub seed: u64,
    pub chain: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub wishart_df: f64,
    pub state: ModelState,
    pub sinks: RunSinks,
}

fn put_welford(w: &mut Writer, acc: &WelfordVec) {
    w.put_u64(acc.count);
    w.put_f64_slice(&acc.mean);
    w.put_f64_slice(&acc.m2);
}

fn get_welford(r: &mut Reader) -> Result<WelfordVec> {
    let count = r.get_u64()?;
    let mean = r.get_f64_vec()?;
    let m2 = r.get_f64_vec()?;
    if mean.len() != m2.len() {
        return data_err("checkpoint: accumulator shape mismatch");
    }
    Ok(WelfordVec { count, mean, m2 })
}

pub fn save(
    path: &Path,
    config: &McmcConfig,
    chain: u64,
    state: &ModelState,
    sinks: &RunSinks,
) -> Result<()> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.put_u64(config.seed);
    w.put_u64(chain);
    w.put_u64(config.iterations);
    w.put_u64(config.burn_in);
    w.put_u64(config.thin);
    w.put_f64(config.wishart_df);

    // model state
    w.put_u64(state.m as u64);
    w.put_u64(state.p as u64);
    w.put_u64(state.n as u64);
    w.put_u64(state.iteration);
    w.put_f64(state.gamma);
    w.put_f64_slice(&state.beta_star);
    match &state.alpha_split {
        Some(a) => {
            w.put_u8(1);
            w.put_f64_slice(a);
        }
        None => w.put_u8(0),
    }
    w.put_f64_slice(state.precision.as_slice());
    w.put_f64_slice(&state.latent);

    // summary sinks
    let s = &sinks.summary;
    put_welford(&mut w, &s.coef);
    w.put_u64(s.contrasts.len() as u64);
    for c in &s.contrasts {
        w.put_u64(c.a as u64);
        w.put_u64(c.b as u64);
    }
    put_welford(&mut w, &s.contrast_acc);
    w.put_u64(s.profiles.len() as u64);
    for p in &s.profiles {
        w.put_str(&p.name);
        w.put_f64_slice(&p.x_ref);
    }
    w.put_f64_slice(&s.prob_sums);
    w.put_u64_slice(&s.retained_iterations);
    w.put_f64_slice(&s.alpha_trace);
    w.put_f64_slice(&s.gamma_trace);
    w.put_f64_slice(&s.precision_trace);
    w.put_u64_slice(&s.monitored_sites.iter().map(|&v| v as u64).collect::<Vec<_>>());
    w.put_f64_slice(&s.monitored_trace);

    match &sinks.likelihood {
        Some(t) => {
            w.put_u8(1);
            w.put_u64(t.n as u64);
            w.put_u64(t.k as u64);
            w.put_u64_slice(&t.iterations);
            w.put_f64_slice(&t.values);
            w.put_u64_slice(&t.true_subtypes.iter().map(|&v| v as u64).collect::<Vec<_>>());
        }
        None => w.put_u8(0),
    }

    // atomic-enough: write then rename so a crash never leaves a torn file
    let tmp = path.with_extension("blmck.tmp");
    fs::write(&tmp, &w.buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes =
        fs::read(path).map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = Reader::new(&bytes, MAGIC, VERSION, "checkpoint")?;
    let seed = r.get_u64()?;
    let chain = r.get_u64()?;
    let iterations = r.get_u64()?;
    let burn_in = r.get_u64()?;
    let thin = r.get_u64()?;
    let wishart_df = r.get_f64()?;

    let m = r.get_u64()? as usize;
    let p = r.get_u64()? as usize;
    let n = r.get_u64()? as usize;
    let iteration = r.get_u64()?;
    let gamma = r.get_f64()?;
    let beta_star = r.get_f64_vec()?;
    let alpha_split = if r.get_u8()? == 1 { Some(r.get_f64_vec()?) } else { None };
    let prec_raw = r.get_f64_vec()?;
    let latent = r.get_f64_vec()?;
    if beta_star.len() != m * p || prec_raw.len() != p * p || latent.len() != m * n {
        return data_err("checkpoint: state dimensions are inconsistent");
    }
    let state = ModelState {
        m,
        p,
        n,
        beta_star,
        alpha_split,
        gamma,
        precision: DMatrix::from_column_slice(p, p, &prec_raw),
        latent,
        iteration,
    };

    let coef = get_welford(&mut r)?;
    let n_contrasts = r.get_u64()? as usize;
    let mut contrasts = Vec::with_capacity(n_contrasts);
    for _ in 0..n_contrasts {
        let a = r.get_u64()? as usize;
        let b = r.get_u64()? as usize;
        contrasts.push(Contrast { a, b });
    }
    let contrast_acc = get_welford(&mut r)?;
    let n_profiles = r.get_u64()? as usize;
    let mut profiles = Vec::with_capacity(n_profiles);
    for _ in 0..n_profiles {
        let name = r.get_str()?;
        let x_ref = r.get_f64_vec()?;
        profiles.push(ProbProfile { name, x_ref });
    }
    let prob_sums = r.get_f64_vec()?;
    let retained_iterations = r.get_u64_vec()?;
    let alpha_trace = r.get_f64_vec()?;
    let gamma_trace = r.get_f64_vec()?;
    let precision_trace = r.get_f64_vec()?;
    let monitored_sites: Vec<u32> = r.get_u64_vec()?.into_iter().map(|v| v as u32).collect();
    let monitored_trace = r.get_f64_vec()?;

    let summary = PosteriorSummary {
        m,
        p,
        coef,
        contrasts,
        contrast_acc,
        profiles,
        prob_sums,
        retained_iterations,
        alpha_trace,
        gamma_trace,
        precision_trace,
        monitored_sites,
        monitored_trace,
    };

    let likelihood = if r.get_u8()? == 1 {
        let tn = r.get_u64()? as usize;
        let tk = r.get_u64()? as usize;
        let iterations = r.get_u64_vec()?;
        let values = r.get_f64_vec()?;
        let true_subtypes: Vec<usize> = r.get_u64_vec()?.into_iter().map(|v| v as usize).collect();
        if values.len() != iterations.len() * tn * tk || true_subtypes.len() != tn {
            return data_err("checkpoint: likelihood trace dimensions are inconsistent");
        }
        Some(LikelihoodTrace { n: tn, k: tk, iterations, values, true_subtypes })
    } else {
        None
    };
    r.finish()?;

    Ok(Checkpoint {
        seed,
        chain,
        iterations,
        burn_in,
        thin,
        wishart_df,
        state,
        sinks: RunSinks { summary, likelihood },
    })
}
