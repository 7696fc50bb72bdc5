//! Manual throughput probe for the sampler hot path (run with --ignored).

use blm_core::data::{BitMatrix, Dataset};
use blm_core::lattice::{Lattice, Mask};
use blm_core::model::{build_design, CenteringPolicy, SubjectRecord};
use blm_core::sampler::{GibbsEngine, McmcConfig};
use std::time::Instant;

#[test]
#[ignore]
fn sweep_throughput_probe() {
    let nx = 100;
    let n = 400;
    let lattice = Lattice::from_mask(&Mask::full_2d(nx, nx)).unwrap();
    let records: Vec<SubjectRecord> = (0..n)
        .map(|i| SubjectRecord {
            id: format!("s{i}"),
            subtype: 1 + (i / (n / 2)).min(1),
            covariates: vec![(i % 2) as f64],
        })
        .collect();
    let design = build_design(&records, &["gender".into()], &CenteringPolicy::AutoBinary).unwrap();
    let mut outcomes = BitMatrix::zeros(lattice.num_sites(), n);
    for s in 0..lattice.num_sites() {
        for i in 0..n {
            if (s * 31 + i * 17) % 20 == 0 {
                outcomes.set(s, i, true);
            }
        }
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let dataset = Dataset::new(&lattice, design, outcomes, None, ids).unwrap();

    let config = McmcConfig { iterations: 1000, burn_in: 10, seed: 3, threads: 1, ..Default::default() };
    let eng = GibbsEngine::new(&lattice, &dataset, config, 0).unwrap();
    let mut state = eng.init_state();

    let n_iters = 20;
    let t0 = Instant::now();
    for _ in 0..n_iters {
        eng.step(&mut state).unwrap();
    }
    let per_iter = t0.elapsed().as_secs_f64() / n_iters as f64;
    eprintln!("per-iteration: {:.1} ms -> 12k iters ~ {:.1} min", per_iter * 1e3, per_iter * 12_000.0 / 60.0);

    let t0 = Instant::now();
    for _ in 0..n_iters {
        eng.update_latents(&mut state);
    }
    eprintln!("latents only: {:.1} ms", t0.elapsed().as_secs_f64() / n_iters as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..n_iters {
        eng.sweep_coefficients(&mut state).unwrap();
    }
    eprintln!("sweep only: {:.1} ms", t0.elapsed().as_secs_f64() / n_iters as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..n_iters {
        eng.update_precision(&mut state).unwrap();
    }
    eprintln!("precision only: {:.1} ms", t0.elapsed().as_secs_f64() / n_iters as f64 * 1e3);
}

