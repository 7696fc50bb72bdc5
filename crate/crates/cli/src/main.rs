//! blm: Bayesian spatial probit regression on binary lesion maps.
//!
//! Subcommands cover the full pipeline: `simulate` writes a synthetic
//! four-quadrant cohort, `fit` runs the checkerboard-parallel Gibbs sampler
//! and emits posterior map products, `predict` classifies subjects by
//! leave-one-out subtype posteriors (Bayes, naive-Bayes or Firth), `firth`
//! produces the mass-univariate baseline maps, and `diagnose` computes
//! Gelman-Rubin factors and autocorrelations across fits.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use blm_core::pipeline::{
    run_diagnose, run_firth, run_fit, run_predict, run_simulate, DiagnoseOpts, FirthCmdOpts,
    FitOpts, PredictMethod, PredictOpts, SimulateOpts,
};
use blm_core::sampler::McmcConfig;
use blm_core::simgen::SimDesign;
use blm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "blm")]
#[command(about = "Bayesian spatial probit regression for binary lesion maps")]
#[command(version)]
struct Cli {
    /// Optional key=value config file; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Bayes,
    Nbc,
    Firth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Prior {
    Uniform,
    Empirical,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic four-quadrant lesion cohort (plus an optional
    /// ground-truth oracle).
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Subjects per gender-by-group cell (total 4x this).
        #[arg(long, default_value_t = 100)]
        per_cell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side length (two quadrants per axis).
        #[arg(long, default_value_t = 100)]
        side: usize,
        /// Base lesion intensity of the left quadrants.
        #[arg(long, default_value_t = 10.0)]
        lambda0_left: f64,
        /// Base lesion intensity of the right quadrants.
        #[arg(long, default_value_t = 8.0)]
        lambda0_right: f64,
        /// Extra lesions for females on the right quadrants.
        #[arg(long, default_value_t = 4.0)]
        gender_effect: f64,
        /// Extra lesions for group 1 on the bottom quadrants.
        #[arg(long, default_value_t = 4.0)]
        group_effect: f64,
        /// Oracle subjects per cell for ground-truth rates (0 = skip).
        #[arg(long, default_value_t = 0)]
        oracle_subjects: usize,
    },
    /// Fit the spatial probit model by Gibbs sampling.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12_000)]
        iters: u64,
        #[arg(long, default_value_t = 2_000)]
        burnin: u64,
        #[arg(long, default_value_t = 1)]
        thin: u64,
        #[arg(long, default_value_t = 1)]
        chains: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = all available cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Wishart prior degrees of freedom.
        #[arg(long, default_value_t = 0.0)]
        wishart_df: f64,
        /// CSV of monitored voxels (x,y,z); default picks 10 automatically.
        #[arg(long, value_name = "FILE")]
        monitor_sites: Option<PathBuf>,
        /// Keep per-subject per-subtype log-likelihoods for `predict`.
        #[arg(long)]
        save_likelihood_trace: bool,
        /// Probability-map profile `name:subtype=K[,covariate=value,...]`
        /// (repeatable; default: one per subtype at reference covariates).
        #[arg(long = "prob-profile")]
        prob_profile: Vec<String>,
        /// Directory with truth rasters; writes an MSE report when given.
        #[arg(long)]
        truth_dir: Option<PathBuf>,
        /// Extra checkpoints every N iterations.
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Resume from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Comma-separated covariate columns to force-center.
        #[arg(long, value_delimiter = ',')]
        center_cols: Vec<String>,
        /// Comma-separated covariate columns to leave uncentered.
        #[arg(long, value_delimiter = ',')]
        no_center_cols: Vec<String>,
        /// Debug: sample the fixed effects separately (slow mixing).
        #[arg(long, hide = true)]
        no_reparam: bool,
        /// Debug: update the second color class first.
        #[arg(long, hide = true)]
        swap_phases: bool,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Leave-one-out subtype classification.
    Predict {
        #[arg(long)]
        data: PathBuf,
        /// Fit directory (required for --method bayes).
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, value_enum, default_value_t = Prior::Uniform)]
        prior: Prior,
        /// Voxel filter: minimum lesion count across subjects (nbc/firth).
        #[arg(long, default_value_t = 2)]
        min_lesions: usize,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Convergence diagnostics across two or more fits.
    Diagnose {
        /// Fit directories (at least two).
        #[arg(long = "fit", num_args = 1.., value_name = "DIR")]
        fits: Vec<PathBuf>,
        /// Restrict to these monitored labels.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mass-univariate Firth logistic baseline maps.
    Firth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Voxel filter: minimum lesion count across subjects (0 = fit all).
        #[arg(long, default_value_t = 0)]
        min_lesions: usize,
        #[arg(long = "prob-profile")]
        prob_profile: Vec<String>,
        #[arg(long)]
        truth_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn global_pool(threads: usize) {
    blm_core::pipeline::install_global_pool(threads);
}

/// Expand `--config FILE` (key=value lines) into argv entries. Explicit
/// command-line flags win: file keys already present on the command line
/// are ignored.
fn merge_config_file(args: Vec<String>) -> Result<Vec<String>> {
    let mut config_path: Option<PathBuf> = None;
    let mut explicit: Vec<String> = Vec::new();
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config_path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(PathBuf::from(p));
        } else if let Some(flag) = a.strip_prefix("--") {
            explicit.push(flag.split('=').next().unwrap_or(flag).to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config file line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if explicit.iter().any(|e| e == key) {
            continue;
        }
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value.to_string());
            }
        }
    }
    // argv = [bin, subcommand, <config args>, <explicit args>]
    if args.len() < 2 {
        return Ok(args);
    }
    let mut merged = Vec::with_capacity(args.len() + injected.len());
    merged.extend(args[..2].iter().cloned());
    merged.extend(injected);
    merged.extend(args[2..].iter().cloned());
    Ok(merged)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            out,
            per_cell,
            seed,
            side,
            lambda0_left,
            lambda0_right,
            gender_effect,
            group_effect,
            oracle_subjects,
        } => {
            if side == 0 || side % 2 != 0 {
                return Err(Error::Config(format!("--side must be a positive even number, got {side}")));
            }
            let design = SimDesign {
                image_side: side,
                quadrant_side: side / 2,
                lambda_left: lambda0_left,
                lambda_right: lambda0_right,
                gender_effect,
                group_effect,
                ..Default::default()
            };
            run_simulate(&SimulateOpts { out, per_cell, seed, design, oracle_subjects })
        }
        Command::Fit {
            data,
            out,
            iters,
            burnin,
            thin,
            chains,
            seed,
            threads,
            wishart_df,
            monitor_sites,
            save_likelihood_trace,
            prob_profile,
            truth_dir,
            checkpoint_every,
            resume,
            center_cols,
            no_center_cols,
            no_reparam,
            swap_phases,
            quiet,
        } => {
            let threads = if threads == 0 { available_threads() } else { threads };
            let config = McmcConfig {
                iterations: iters,
                burn_in: burnin,
                thin,
                seed,
                chains,
                wishart_df,
                threads,
                reparameterize: !no_reparam,
                swap_phases,
                log_every: if quiet { None } else { Some(1000.max(iters / 10)) },
            };
            let opts = FitOpts {
                monitor_sites_file: monitor_sites,
                save_likelihood_trace,
                prob_profiles: prob_profile,
                truth_dir,
                checkpoint_every,
                resume,
                center_cols,
                no_center_cols,
                ..FitOpts::new(data, out, config)
            };
            run_fit(&opts).map(|_| ())
        }
        Command::Predict { data, fit, out, method, prior, min_lesions, threads } => {
            global_pool(threads);
            let method = match method {
                Method::Bayes => PredictMethod::Bayes,
                Method::Nbc => PredictMethod::Nbc,
                Method::Firth => PredictMethod::Firth,
            };
            let opts = PredictOpts {
                data,
                fit,
                out,
                method,
                empirical_prior: prior == Prior::Empirical,
                min_lesions,
            };
            run_predict(&opts).map(|_| ())
        }
        Command::Diagnose { fits, labels, max_lag, out } => {
            let labels = if labels.is_empty() { None } else { Some(labels) };
            run_diagnose(&DiagnoseOpts { fits, labels, max_lag, out }).map(|_| ())
        }
        Command::Firth { data, out, min_lesions, prob_profile, truth_dir, threads } => {
            global_pool(threads);
            run_firth(&FirthCmdOpts {
                data,
                out,
                min_lesions,
                prob_profiles: prob_profile,
                truth_dir,
            })
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match merge_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
