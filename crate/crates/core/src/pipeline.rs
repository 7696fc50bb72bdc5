//! End-to-end command pipelines: simulate, fit, predict, diagnose, firth.
//!
//! Everything the CLI does lives here so tests can drive the exact same
//! code paths. All products are deterministic functions of the inputs and
//! the seed: rasters store 32-bit floats, traces are plain CSV, and every
//! fit leaves a resumable checkpoint behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::diagnostics::{autocorrelation, gelman_rubin};
use crate::error::{config_err, data_err, Error, Result};
use crate::firth::{firth_map, firth_probability_maps, FirthOptions};
use crate::inference::{Contrast, PosteriorSummary, ProbProfile};
use crate::io::checkpoint::{self, CHECKPOINT_FILE};
use crate::io::{likelihood, manifest, raster, traces};
use crate::lattice::Lattice;
use crate::model::CenteringPolicy;
use crate::predict::{
    classify_all, firth_classify_loo, nbc_classify_loo, subtype_prior, ClassificationResult,
    LikelihoodTrace,
};
use crate::rng::{Streams, UpdateKind};
use crate::sampler::{GibbsEngine, McmcConfig, RunSinks};
use crate::simgen::{SimDesign, CELLS, QUADRANT_LABELS};

pub const LIKELIHOOD_TRACE_FILE: &str = "likelihood_trace.blmt";
pub const MONITORED_TRACES_FILE: &str = "monitored_traces.csv";
pub const MONITORED_SITES_FILE: &str = "monitored_sites.csv";
pub const RUN_CONFIG_FILE: &str = "run_config.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MSE_FILE: &str = "mse.csv";
pub const TRUTH_DIR: &str = "truth";

/// Size the global worker pool (predict/firth parallelism); 0 means all
/// available cores. No-op if a pool already exists.
pub fn install_global_pool(threads: usize) {
    let n = if threads == 0 {
        std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
    } else {
        threads
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}
pub const INTERIOR_MASK_FILE: &str = "interior_mask.blm";
/// Standardized maps are thresholded at |z| >= 2.
pub const STD_THRESHOLD: f64 = 2.0;

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SimulateOpts {
    pub out: PathBuf,
    pub per_cell: usize,
    pub seed: u64,
    pub design: SimDesign,
    /// When positive, also writes ground-truth rates (this many oracle
    /// subjects per cell), truth rasters and the interior evaluation mask.
    pub oracle_subjects: usize,
}

pub fn run_simulate(opts: &SimulateOpts) -> Result<()> {
    opts.design.validate()?;
    let cohort = opts.design.generate_cohort(opts.per_cell, opts.seed)?;
    let side = opts.design.image_side as u32;
    let dims = [side, side, 1u32];
    fs::create_dir_all(&opts.out)?;

    let mask = vec![true; (side * side) as usize];
    manifest::write_cohort(
        &opts.out,
        &cohort.records,
        &["gender".to_string()],
        dims,
        |i| cohort.images[i].clone(),
        Some(&mask),
        None,
    )?;

    if opts.oracle_subjects > 0 {
        let rates = opts.design.true_rates(opts.oracle_subjects, opts.seed)?;
        let truth_dir = opts.out.join(TRUTH_DIR);
        fs::create_dir_all(&truth_dir)?;

        let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
        let mut w = csv::Writer::from_path(truth_dir.join("rates.csv")).map_err(csv_err)?;
        w.write_record(["cell", "quadrant", "rate"]).map_err(csv_err)?;
        for (ci, cell) in CELLS.iter().enumerate() {
            for (qi, q) in QUADRANT_LABELS.iter().enumerate() {
                w.write_record([
                    cell.label(),
                    q.to_string(),
                    rates.per_cell_quadrant[ci][qi].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;

        for (ci, cell) in CELLS.iter().enumerate() {
            let painted = rates.truth_raster(ci);
            raster::write_f64_as_f32(
                &truth_dir.join(format!("truth_{}.blm", cell.label())),
                dims,
                &painted,
            )?;
        }
        raster::write_bits(
            &truth_dir.join(INTERIOR_MASK_FILE),
            dims,
            &opts.design.interior_mask(),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FitOpts {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: McmcConfig,
    pub monitor_sites_file: Option<PathBuf>,
    pub save_likelihood_trace: bool,
    /// Probability-map profiles as `name:subtype=K[,covariate=value,...]`.
    pub prob_profiles: Vec<String>,
    pub truth_dir: Option<PathBuf>,
    /// Extra checkpoints every this many iterations (a final one is always
    /// written).
    pub checkpoint_every: Option<u64>,
    pub resume: bool,
    pub center_cols: Vec<String>,
    pub no_center_cols: Vec<String>,
}

impl FitOpts {
    pub fn new(data: PathBuf, out: PathBuf, config: McmcConfig) -> Self {
        FitOpts {
            data,
            out,
            config,
            monitor_sites_file: None,
            save_likelihood_trace: false,
            prob_profiles: Vec::new(),
            truth_dir: None,
            checkpoint_every: None,
            resume: false,
            center_cols: Vec::new(),
            no_center_cols: Vec::new(),
        }
    }
}

/// Default monitored sites: the 5 highest-prevalence sites plus 5 random
/// in-mask sites, seeded but chain independent so every chain monitors the
/// same voxels.
pub fn default_monitored_sites(dataset: &Dataset, seed: u64) -> Vec<u32> {
    let m = dataset.num_sites();
    if m <= 10 {
        return (0..m as u32).collect();
    }
    let mut by_count: Vec<u32> = (0..m as u32).collect();
    by_count.sort_by_key(|&s| (std::cmp::Reverse(dataset.site_lesion_count(s as usize)), s));
    let mut sites: Vec<u32> = by_count[..5].to_vec();
    let mut rng = Streams::new(seed, 0).scalar_stream(UpdateKind::Monitor, 0);
    while sites.len() < 10 {
        let s = rng.below(m as u64) as u32;
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    sites
}

/// Parse `name:subtype=K[,covariate=value,...]` into a profile row.
/// Covariate values are on the design scale (post-centering).
pub fn parse_prob_profile(
    spec: &str,
    dataset: &Dataset,
    covariate_names: &[String],
) -> Result<ProbProfile> {
    let design = &dataset.design;
    let (name, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("profile {spec:?} must look like name:subtype=K")))?;
    let mut subtype: Option<usize> = None;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for part in rest.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("profile field {part:?} must be key=value")))?;
        if key == "subtype" {
            subtype =
                Some(value.parse().map_err(|_| Error::Config(format!("profile subtype {value:?}")))?);
        } else {
            let col = covariate_names
                .iter()
                .position(|n| n == key)
                .ok_or_else(|| Error::Config(format!("profile references unknown column {key}")))?;
            let v: f64 =
                value.parse().map_err(|_| Error::Config(format!("profile value {value:?} for {key}")))?;
            values.push((design.num_subtypes() + col, v));
        }
    }
    let subtype = subtype.ok_or_else(|| Error::Config(format!("profile {name} needs subtype=K")))?;
    let x_ref = design.reference_row(subtype, &values)?;
    Ok(ProbProfile { name: name.to_string(), x_ref })
}

/// Default profiles: one per subtype at reference (zero) covariates.
pub fn default_profiles(dataset: &Dataset, subtype_labels: &[i64]) -> Vec<ProbProfile> {
    (1..=dataset.design.num_subtypes())
        .map(|k| ProbProfile {
            name: format!("subtype_{}", subtype_labels[k - 1]),
            x_ref: dataset.design.reference_row(k, &[]).expect("valid subtype"),
        })
        .collect()
}

/// All unordered subtype-intercept pairs, tracked as contrast channels.
fn subtype_contrasts(k: usize) -> Vec<Contrast> {
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            out.push(Contrast { a, b });
        }
    }
    out
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

pub struct FitProducts {
    /// One directory per chain (equal to `out` for a single chain).
    pub chain_dirs: Vec<PathBuf>,
}

pub fn run_fit(opts: &FitOpts) -> Result<FitProducts> {
    opts.config.validate()?;
    let policy = centering_policy_from(opts)?;
    let loaded = manifest::load_cohort(&opts.data, &policy)?;
    let dataset = &loaded.dataset;

    let monitored = match &opts.monitor_sites_file {
        Some(path) => traces::read_monitored_sites(path, &loaded.lattice)?,
        None => default_monitored_sites(dataset, opts.config.seed),
    };
    let profiles = if opts.prob_profiles.is_empty() {
        default_profiles(dataset, &loaded.subtype_labels)
    } else {
        opts.prob_profiles
            .iter()
            .map(|s| parse_prob_profile(s, dataset, &loaded.covariate_names))
            .collect::<Result<Vec<_>>>()?
    };
    let contrasts = subtype_contrasts(dataset.design.num_subtypes());

    fs::create_dir_all(&opts.out)?;
    let mut chain_dirs = Vec::new();
    for chain in 0..opts.config.chains {
        let chain_dir = if opts.config.chains == 1 {
            opts.out.clone()
        } else {
            opts.out.join(format!("chain_{chain}"))
        };
        fs::create_dir_all(&chain_dir)?;
        run_one_chain(opts, &loaded, chain, &chain_dir, &monitored, &profiles, &contrasts)?;
        chain_dirs.push(chain_dir);
    }
    Ok(FitProducts { chain_dirs })
}

fn centering_policy_from(opts: &FitOpts) -> Result<CenteringPolicy> {
    if opts.center_cols.is_empty() && opts.no_center_cols.is_empty() {
        return Ok(CenteringPolicy::AutoBinary);
    }
    // detect binary columns with an auto pass, then apply the overrides
    let auto = manifest::load_cohort(&opts.data, &CenteringPolicy::AutoBinary)?;
    let mut flags: Vec<bool> = auto.dataset.design.centered_columns().to_vec();
    let index_of = |name: &String| -> Result<usize> {
        auto.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown covariate column {name}")))
    };
    for name in &opts.center_cols {
        flags[index_of(name)?] = true;
    }
    for name in &opts.no_center_cols {
        flags[index_of(name)?] = false;
    }
    Ok(CenteringPolicy::Explicit(flags))
}

#[allow(clippy::too_many_arguments)]
fn run_one_chain(
    opts: &FitOpts,
    loaded: &manifest::LoadedCohort,
    chain: u64,
    chain_dir: &Path,
    monitored: &[u32],
    profiles: &[ProbProfile],
    contrasts: &[Contrast],
) -> Result<()> {
    let lattice = &loaded.lattice;
    let dataset = &loaded.dataset;
    let m = lattice.num_sites();
    let p = dataset.design.num_coefficients();
    let engine = GibbsEngine::new(lattice, dataset, opts.config.clone(), chain)?;
    let ckpt_path = chain_dir.join(CHECKPOINT_FILE);

    let (mut state, mut sinks) = if opts.resume {
        let ck = checkpoint::load(&ckpt_path)?;
        if ck.seed != opts.config.seed
            || ck.chain != chain
            || ck.burn_in != opts.config.burn_in
            || ck.thin != opts.config.thin
            || ck.wishart_df != opts.config.wishart_df
        {
            return config_err(format!(
                "checkpoint in {} was written under a different configuration",
                chain_dir.display()
            ));
        }
        if ck.state.m != m || ck.state.n != dataset.num_subjects() || ck.state.p != p {
            return data_err("checkpoint does not match the dataset dimensions");
        }
        (ck.state, ck.sinks)
    } else {
        let summary =
            PosteriorSummary::new(m, p, contrasts.to_vec(), profiles.to_vec(), monitored.to_vec());
        let trace = opts.save_likelihood_trace.then(|| LikelihoodTrace::new(dataset));
        (engine.init_state(), RunSinks { summary, likelihood: trace })
    };

    let hook_fn = |state: &crate::sampler::ModelState, sinks: &RunSinks| -> Result<()> {
        checkpoint::save(&ckpt_path, &opts.config, chain, state, sinks)
    };
    let hook = opts.checkpoint_every.map(|every| {
        (every, &hook_fn as &dyn Fn(&crate::sampler::ModelState, &RunSinks) -> Result<()>)
    });

    engine.run(&mut state, &mut sinks, hook)?;

    // The final checkpoint goes down before any product write, so a failed
    // or interrupted emit stays resumable.
    checkpoint::save(&ckpt_path, &opts.config, chain, &state, &sinks)?;
    write_fit_products(opts, loaded, chain, chain_dir, &sinks)
}

fn write_fit_products(
    opts: &FitOpts,
    loaded: &manifest::LoadedCohort,
    chain: u64,
    chain_dir: &Path,
    sinks: &RunSinks,
) -> Result<()> {
    let lattice = &loaded.lattice;
    let summary = &sinks.summary;
    let [nx, ny, nz] = lattice.dims();
    let dims = [nx as u32, ny as u32, nz as u32];
    let names = loaded.dataset.design.column_names().to_vec();
    let p = summary.p;
    let m = summary.m;

    let emit = |path: PathBuf, values: &[f64]| -> Result<()> {
        raster::write_f64_as_f32(&path, dims, &lattice.scatter(values, 0.0))
    };

    // standardized products need at least two retained draws
    let have_sd = summary.count() >= 2;
    let mut summary_rows: Vec<(String, f64, usize)> = Vec::new();
    for (pi, name) in names.iter().enumerate() {
        let tag = sanitize(name);
        let mean: Vec<f64> = (0..m).map(|s| summary.coef.mean[s * p + pi]).collect();
        emit(chain_dir.join(format!("mean_{tag}.blm")), &mean)?;
        if have_sd {
            let sd: Vec<f64> = (0..m).map(|s| summary.coef.sd(s * p + pi)).collect();
            emit(chain_dir.join(format!("sd_{tag}.blm")), &sd)?;
            let std = summary.standardized_coefficient_map(pi, STD_THRESHOLD);
            emit(chain_dir.join(format!("std_{tag}.blm")), &std.values)?;
            emit(chain_dir.join(format!("std_thresh_{tag}.blm")), &std.thresholded)?;
            summary_rows.push((tag, std.suprathreshold_proportion, std.zero_sd_sites.len()));
        }
    }
    for (ci, contrast) in summary.contrasts.iter().enumerate() {
        let tag = format!(
            "contrast_{}_minus_{}",
            sanitize(&names[contrast.a]),
            sanitize(&names[contrast.b])
        );
        let nc = summary.contrasts.len();
        let mean: Vec<f64> = (0..m).map(|s| summary.contrast_acc.mean[s * nc + ci]).collect();
        emit(chain_dir.join(format!("mean_{tag}.blm")), &mean)?;
        if have_sd {
            let std = summary.standardized_contrast_map(ci, STD_THRESHOLD);
            emit(chain_dir.join(format!("std_{tag}.blm")), &std.values)?;
            emit(chain_dir.join(format!("std_thresh_{tag}.blm")), &std.thresholded)?;
            summary_rows.push((tag, std.suprathreshold_proportion, std.zero_sd_sites.len()));
        }
    }
    for (qi, profile) in summary.profiles.iter().enumerate() {
        emit(
            chain_dir.join(format!("prob_{}.blm", sanitize(&profile.name))),
            &summary.probability_map(qi),
        )?;
    }

    let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(chain_dir.join(SUMMARY_FILE)).map_err(csv_err)?;
    w.write_record(["map", "suprathreshold_proportion", "zero_sd_sites"]).map_err(csv_err)?;
    for (tag, prop, zeros) in &summary_rows {
        w.write_record([tag.clone(), prop.to_string(), zeros.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    traces::write_alpha_trace(&chain_dir.join("alpha_trace.csv"), summary, &names)?;
    traces::write_gamma_trace(&chain_dir.join("gamma_trace.csv"), summary)?;
    traces::write_precision_trace(&chain_dir.join("precision_trace.csv"), summary, &names)?;
    traces::write_monitored_traces(
        &chain_dir.join(MONITORED_TRACES_FILE),
        summary,
        lattice,
        &names,
        chain,
    )?;
    traces::write_monitored_sites(
        &chain_dir.join(MONITORED_SITES_FILE),
        lattice,
        &summary.monitored_sites,
    )?;

    if let Some(trace) = &sinks.likelihood {
        likelihood::write(&chain_dir.join(LIKELIHOOD_TRACE_FILE), trace)?;
    }

    let mut w = csv::Writer::from_path(chain_dir.join(RUN_CONFIG_FILE)).map_err(csv_err)?;
    w.write_record(["key", "value"]).map_err(csv_err)?;
    let cfg = &opts.config;
    let rows = [
        ("iterations", cfg.iterations.to_string()),
        ("burn_in", cfg.burn_in.to_string()),
        ("thin", cfg.thin.to_string()),
        ("seed", cfg.seed.to_string()),
        ("chains", cfg.chains.to_string()),
        ("chain", chain.to_string()),
        ("wishart_df", cfg.wishart_df.to_string()),
        ("reparameterize", cfg.reparameterize.to_string()),
        ("sites", summary.m.to_string()),
        ("subjects", loaded.dataset.num_subjects().to_string()),
        ("coefficients", summary.p.to_string()),
        ("subtypes", loaded.dataset.design.num_subtypes().to_string()),
        ("retained", summary.count().to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()]).map_err(csv_err)?;
    }
    w.flush()?;

    if let Some(truth_dir) = &opts.truth_dir {
        let pairs: Vec<(String, Vec<f64>)> = summary
            .profiles
            .iter()
            .enumerate()
            .map(|(qi, pr)| (pr.name.clone(), summary.probability_map(qi)))
            .collect();
        write_mse_report(&chain_dir.join(MSE_FILE), truth_dir, lattice, &pairs)?;
    }
    Ok(())
}

/// Compare estimated probability maps against per-cell truth rasters over
/// the interior evaluation mask; one CSV row per map plus a pooled row.
pub fn write_mse_report(
    out_path: &Path,
    truth_dir: &Path,
    lattice: &Lattice,
    maps: &[(String, Vec<f64>)],
) -> Result<()> {
    let [nx, ny, nz] = lattice.dims();
    let dims = [nx as u32, ny as u32, nz as u32];
    let interior = raster::read(&truth_dir.join(INTERIOR_MASK_FILE))?;
    if interior.dims() != dims {
        return data_err("interior mask dims do not match the lattice");
    }
    let interior = interior.as_bits()?.to_vec();

    let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(out_path).map_err(csv_err)?;
    w.write_record(["map", "pixels", "mse"]).map_err(csv_err)?;
    let mut pooled_se = 0.0;
    let mut pooled_n = 0usize;
    let mut compared = 0usize;
    for (name, est) in maps {
        let truth_path = truth_dir.join(format!("truth_{}.blm", sanitize(name)));
        if !truth_path.is_file() {
            continue;
        }
        compared += 1;
        let truth = raster::read(&truth_path)?;
        if truth.dims() != dims {
            return data_err(format!("truth raster {name} dims mismatch"));
        }
        let truth = truth.as_f32()?;
        let mut se = 0.0;
        let mut count = 0usize;
        for site in 0..lattice.num_sites() {
            let cell = lattice.cell_of_site(site);
            if interior[cell] {
                let d = est[site] - truth[cell] as f64;
                se += d * d;
                count += 1;
            }
        }
        pooled_se += se;
        pooled_n += count;
        w.write_record([name.clone(), count.to_string(), (se / count.max(1) as f64).to_string()])
            .map_err(csv_err)?;
    }
    if compared == 0 {
        return data_err(format!("no truth rasters matched any map in {}", truth_dir.display()));
    }
    w.write_record([
        "all".to_string(),
        pooled_n.to_string(),
        (pooled_se / pooled_n.max(1) as f64).to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

/// Read an MSE report back: map name -> mse (the pooled row is "all").
pub fn read_mse(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Data(format!("csv: {e}")))?;
        out.insert(
            row[0].to_string(),
            row[2].parse().map_err(|_| Error::Data(format!("bad mse {:?}", &row[2])))?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictMethod {
    Bayes,
    Nbc,
    Firth,
}

#[derive(Clone, Debug)]
pub struct PredictOpts {
    pub data: PathBuf,
    pub fit: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: PredictMethod,
    pub empirical_prior: bool,
    pub min_lesions: usize,
}

pub fn run_predict(opts: &PredictOpts) -> Result<ClassificationResult> {
    let loaded = manifest::load_cohort(&opts.data, &CenteringPolicy::AutoBinary)?;
    let dataset = &loaded.dataset;
    let prior = subtype_prior(dataset, opts.empirical_prior);

    let result = match opts.method {
        PredictMethod::Bayes => {
            let fit_dir = opts
                .fit
                .as_ref()
                .ok_or_else(|| Error::Config("--method bayes needs --fit DIR".into()))?;
            let trace_path = fit_dir.join(LIKELIHOOD_TRACE_FILE);
            if !trace_path.is_file() {
                return data_err(format!(
                    "{} not found; re-run fit with --save-likelihood-trace",
                    trace_path.display()
                ));
            }
            let trace = likelihood::read(&trace_path)?;
            if trace.n != dataset.num_subjects() || trace.k != dataset.design.num_subtypes() {
                return data_err("likelihood trace does not match the cohort");
            }
            classify_all(&trace, &prior)?
        }
        PredictMethod::Nbc => nbc_classify_loo(dataset, opts.min_lesions, &prior)?,
        PredictMethod::Firth => {
            firth_classify_loo(dataset, opts.min_lesions, &prior, &FirthOptions::default())?
        }
    };

    let report = classification_report(&result, &loaded.subtype_labels);
    println!("{report}");
    if let Some(out) = &opts.out {
        fs::create_dir_all(out)?;
        write_classification(out, &result, &loaded.subtype_labels, &dataset.ids, &prior)?;
        fs::write(out.join("report.txt"), report)?;
    }
    Ok(result)
}

fn classification_report(result: &ClassificationResult, labels: &[i64]) -> String {
    use std::fmt::Write;
    let k = result.k;
    let mut s = String::new();
    writeln!(s, "confusion matrix (rows true, columns predicted, row-normalized):").unwrap();
    write!(s, "{:>10}", "").unwrap();
    for label in labels {
        write!(s, "{:>10}", label).unwrap();
    }
    writeln!(s).unwrap();
    for row in 0..k {
        write!(s, "{:>10}", labels[row]).unwrap();
        for col in 0..k {
            write!(s, "{:>10.3}", result.confusion_rows[row * k + col]).unwrap();
        }
        writeln!(s).unwrap();
    }
    writeln!(s, "overall rate: {:.3} +/- {:.3}", result.overall_rate, result.overall_ci_half_width)
        .unwrap();
    writeln!(s, "average rate: {:.3} +/- {:.3}", result.average_rate, result.average_ci_half_width)
        .unwrap();
    let flagged = result.low_confidence.iter().filter(|&&f| f).count();
    if flagged > 0 {
        writeln!(s, "low-confidence importance-sampling posteriors: {flagged}").unwrap();
    }
    s
}

fn write_classification(
    out: &Path,
    result: &ClassificationResult,
    labels: &[i64],
    ids: &[String],
    prior: &[f64],
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    let k = result.k;

    let mut w = csv::Writer::from_path(out.join("posteriors.csv")).map_err(csv_err)?;
    let mut header = vec![
        "id".to_string(),
        "true".into(),
        "predicted".into(),
        "prior".into(),
        "low_confidence".into(),
    ];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ids.len() {
        let mut row = vec![
            ids[i].clone(),
            labels[result.true_subtypes[i] - 1].to_string(),
            labels[result.predicted[i] - 1].to_string(),
            prior[result.true_subtypes[i] - 1].to_string(),
            result.low_confidence[i].to_string(),
        ];
        row.extend((0..k).map(|kk| result.posteriors[i * k + kk].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("confusion.csv")).map_err(csv_err)?;
    let mut header = vec!["true".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    header.push("count".into());
    w.write_record(&header).map_err(csv_err)?;
    for row in 0..k {
        let count: u64 = result.confusion_counts[row * k..(row + 1) * k].iter().sum();
        let mut rec = vec![labels[row].to_string()];
        rec.extend((0..k).map(|col| result.confusion_rows[row * k + col].to_string()));
        rec.push(count.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("rates.csv")).map_err(csv_err)?;
    w.write_record(["metric", "value", "ci_half_width"]).map_err(csv_err)?;
    w.write_record([
        "overall".to_string(),
        result.overall_rate.to_string(),
        result.overall_ci_half_width.to_string(),
    ])
    .map_err(csv_err)?;
    w.write_record([
        "average".to_string(),
        result.average_rate.to_string(),
        result.average_ci_half_width.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DiagnoseOpts {
    pub fits: Vec<PathBuf>,
    pub labels: Option<Vec<String>>,
    pub max_lag: usize,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct DiagnoseReport {
    pub psrf: BTreeMap<String, f64>,
    pub degenerate: Vec<String>,
    pub worst_psrf: f64,
    /// (map name, run a, run b, max |mean difference| over voxels)
    pub map_differences: Vec<(String, usize, usize, f64)>,
}

pub fn run_diagnose(opts: &DiagnoseOpts) -> Result<DiagnoseReport> {
    if opts.fits.len() < 2 {
        return config_err("diagnose needs at least two fit directories");
    }
    let mut per_dir: Vec<BTreeMap<String, Vec<f64>>> = Vec::new();
    for dir in &opts.fits {
        per_dir.push(traces::read_monitored_traces(&dir.join(MONITORED_TRACES_FILE))?);
    }

    let labels: Vec<String> = match &opts.labels {
        Some(ls) => ls.clone(),
        // default: labels monitored by every run
        None => per_dir[0]
            .keys()
            .filter(|l| per_dir.iter().all(|d| d.contains_key(*l)))
            .cloned()
            .collect(),
    };
    if labels.is_empty() {
        return data_err("the fits share no monitored labels; pass --labels or refit with a common monitor list");
    }

    let mut psrf = BTreeMap::new();
    let mut degenerate = Vec::new();
    let mut worst: f64 = 0.0;
    let mut acf_rows: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for label in &labels {
        let mut chains: Vec<&[f64]> = Vec::new();
        let mut min_len = usize::MAX;
        for (d, dir) in per_dir.iter().enumerate() {
            let trace = dir.get(label).ok_or_else(|| {
                Error::Data(format!("{} missing label {label}", opts.fits[d].display()))
            })?;
            min_len = min_len.min(trace.len());
            chains.push(trace);
        }
        // chains of unequal retained length are trimmed to the shortest
        let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..min_len]).collect();
        let r = gelman_rubin(&trimmed)?;
        if r.degenerate {
            degenerate.push(label.clone());
        }
        worst = worst.max(r.value);
        psrf.insert(label.clone(), r.value);

        let lag = opts.max_lag.min(min_len.saturating_sub(1));
        for (d, chain) in trimmed.iter().enumerate() {
            let (acf, _) = autocorrelation(chain, lag)?;
            acf_rows.push((label.clone(), d, acf));
        }
    }

    // largest |mean map difference| per coefficient raster across run pairs
    let mut map_differences = Vec::new();
    let mut mean_maps: Vec<String> = fs::read_dir(&opts.fits[0])?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("mean_") && n.ends_with(".blm"))
        .collect();
    mean_maps.sort();
    for map_name in mean_maps {
        let rasters: Vec<Option<Vec<f32>>> = opts
            .fits
            .iter()
            .map(|d| {
                let p = d.join(&map_name);
                if p.is_file() {
                    raster::read(&p).and_then(|r| r.as_f32().map(|v| v.to_vec())).ok()
                } else {
                    None
                }
            })
            .collect();
        for a in 0..rasters.len() {
            for b in a + 1..rasters.len() {
                if let (Some(ra), Some(rb)) = (&rasters[a], &rasters[b]) {
                    if ra.len() == rb.len() {
                        let max_diff = ra
                            .iter()
                            .zip(rb)
                            .map(|(x, y)| (x - y).abs() as f64)
                            .fold(0.0f64, f64::max);
                        map_differences.push((map_name.clone(), a, b, max_diff));
                    }
                }
            }
        }
    }

    for (label, value) in &psrf {
        println!("psrf {label}: {value:.4}");
    }
    println!("largest scale reduction factor: {worst:.4}");
    for (map, a, b, d) in &map_differences {
        println!("max |mean diff| {map} runs {a}/{b}: {d:.6}");
    }

    if let Some(out) = &opts.out {
        fs::create_dir_all(out)?;
        let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
        let mut w = csv::Writer::from_path(out.join("psrf.csv")).map_err(csv_err)?;
        w.write_record(["label", "psrf", "degenerate"]).map_err(csv_err)?;
        for (label, value) in &psrf {
            w.write_record([
                label.clone(),
                value.to_string(),
                degenerate.contains(label).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(out.join("acf.csv")).map_err(csv_err)?;
        w.write_record(["label", "chain", "lag", "acf"]).map_err(csv_err)?;
        for (label, chain, acf) in &acf_rows {
            for (lag, v) in acf.iter().enumerate() {
                w.write_record([label.clone(), chain.to_string(), lag.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(out.join("map_differences.csv")).map_err(csv_err)?;
        w.write_record(["map", "run_a", "run_b", "max_abs_diff"]).map_err(csv_err)?;
        for (map, a, b, d) in &map_differences {
            w.write_record([map.clone(), a.to_string(), b.to_string(), d.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
    }

    Ok(DiagnoseReport { psrf, degenerate, worst_psrf: worst, map_differences })
}

// ---------------------------------------------------------------------------
// firth maps command
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FirthCmdOpts {
    pub data: PathBuf,
    pub out: PathBuf,
    pub min_lesions: usize,
    pub prob_profiles: Vec<String>,
    pub truth_dir: Option<PathBuf>,
}

pub fn run_firth(opts: &FirthCmdOpts) -> Result<()> {
    let loaded = manifest::load_cohort(&opts.data, &CenteringPolicy::AutoBinary)?;
    let lattice = &loaded.lattice;
    let dataset = &loaded.dataset;
    let maps = firth_map(dataset, opts.min_lesions, &FirthOptions::default())?;

    fs::create_dir_all(&opts.out)?;
    let [nx, ny, nz] = lattice.dims();
    let dims = [nx as u32, ny as u32, nz as u32];
    let names = dataset.design.column_names();
    let m = maps.m;
    let p = maps.p;

    let emit = |path: PathBuf, values: &[f64]| -> Result<()> {
        raster::write_f64_as_f32(&path, dims, &lattice.scatter(values, 0.0))
    };
    for (pi, name) in names.iter().enumerate() {
        let tag = sanitize(name);
        emit(
            opts.out.join(format!("firth_coef_{tag}.blm")),
            &(0..m).map(|s| maps.coefficients[s * p + pi]).collect::<Vec<_>>(),
        )?;
        emit(
            opts.out.join(format!("firth_se_{tag}.blm")),
            &(0..m).map(|s| maps.standard_errors[s * p + pi]).collect::<Vec<_>>(),
        )?;
        emit(
            opts.out.join(format!("firth_std_{tag}.blm")),
            &(0..m).map(|s| maps.standardized[s * p + pi]).collect::<Vec<_>>(),
        )?;
    }

    let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(opts.out.join(SUMMARY_FILE)).map_err(csv_err)?;
    w.write_record(["map", "suprathreshold_proportion", "flagged_voxels"]).map_err(csv_err)?;
    for (pi, name) in names.iter().enumerate() {
        w.write_record([
            format!("firth_{}", sanitize(name)),
            maps.suprathreshold_proportions[pi].to_string(),
            maps.flagged.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let profiles = if opts.prob_profiles.is_empty() {
        default_profiles(dataset, &loaded.subtype_labels)
    } else {
        opts.prob_profiles
            .iter()
            .map(|s| parse_prob_profile(s, dataset, &loaded.covariate_names))
            .collect::<Result<Vec<_>>>()?
    };
    let prob_maps = firth_probability_maps(&maps, &profiles);
    for (name, values) in &prob_maps {
        emit(opts.out.join(format!("firth_prob_{}.blm", sanitize(name))), values)?;
    }

    if let Some(truth_dir) = &opts.truth_dir {
        write_mse_report(&opts.out.join(MSE_FILE), truth_dir, lattice, &prob_maps)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BitMatrix;
    use crate::lattice::{Lattice, Mask};
    use crate::model::{build_design, SubjectRecord};

    fn toy_dataset() -> Dataset {
        let lattice = Lattice::from_mask(&Mask::full_2d(10, 10)).unwrap();
        let records = vec![
            SubjectRecord { id: "a".into(), subtype: 1, covariates: vec![1.0] },
            SubjectRecord { id: "b".into(), subtype: 2, covariates: vec![0.0] },
        ];
        let design =
            build_design(&records, &["gender".into()], &CenteringPolicy::AutoBinary).unwrap();
        let mut outcomes = BitMatrix::zeros(100, 2);
        for site in [3, 30, 31, 77] {
            outcomes.set(site, 0, true);
        }
        outcomes.set(30, 1, true);
        Dataset::new(&lattice, design, outcomes, None, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn default_monitoring_mixes_prevalent_and_random_sites() {
        let dataset = toy_dataset();
        let sites = default_monitored_sites(&dataset, 1);
        assert_eq!(sites.len(), 10);
        // highest-prevalence site first (site 30 has two lesions)
        assert_eq!(sites[0], 30);
        // remaining prevalent sites in index order
        assert_eq!(&sites[1..4], &[3, 31, 77]);
        // no duplicates
        let mut uniq = sites.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 10);
        // seeded: stable across calls, chain independent
        assert_eq!(sites, default_monitored_sites(&dataset, 1));
        assert_ne!(sites, default_monitored_sites(&dataset, 2));
    }

    #[test]
    fn profile_parsing_builds_reference_rows() {
        let dataset = toy_dataset();
        let names = vec!["gender".to_string()];
        let p = parse_prob_profile("g1_male:subtype=1,gender=1", &dataset, &names).unwrap();
        assert_eq!(p.name, "g1_male");
        assert_eq!(p.x_ref, vec![1.0, 0.0, 1.0]);
        assert!(parse_prob_profile("broken", &dataset, &names).is_err());
        assert!(parse_prob_profile("x:subtype=7", &dataset, &names).is_err());
        assert!(parse_prob_profile("x:subtype=1,age=3", &dataset, &names).is_err());
    }
}
