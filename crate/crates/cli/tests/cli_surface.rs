//! Command-line surface checks: determinism, config handling, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn blm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blm"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn dir_hashes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

fn simulate(out: &Path, per_cell: usize, seed: u64, extra: &[&str]) {
    let status = blm()
        .args([
            "simulate",
            "--out",
            out.to_str().unwrap(),
            "--per-cell",
            &per_cell.to_string(),
            "--seed",
            &seed.to_string(),
            "--side",
            "16",
        ])
        .args(extra)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn simulate_is_byte_deterministic() {
    let root = tmp("sim_det");
    simulate(&root.join("a"), 1, 7, &[]);
    simulate(&root.join("b"), 1, 7, &[]);
    assert_eq!(dir_hashes(&root.join("a")), dir_hashes(&root.join("b")));
    assert_eq!(
        dir_hashes(&root.join("a/outcomes")),
        dir_hashes(&root.join("b/outcomes"))
    );
    // 4 subjects for per-cell 1
    assert_eq!(fs::read_dir(root.join("a/outcomes")).unwrap().count(), 4);
}

#[test]
fn simulate_zero_intensity_writes_blank_rasters() {
    let root = tmp("sim_zero");
    simulate(
        &root.join("z"),
        1,
        1,
        &[
            "--lambda0-left",
            "0",
            "--lambda0-right",
            "0",
            "--gender-effect",
            "0",
            "--group-effect",
            "0",
        ],
    );
    for entry in fs::read_dir(root.join("z/outcomes")).unwrap() {
        let raster = blm_core::io::raster::read(&entry.unwrap().path()).unwrap();
        assert!(raster.as_bits().unwrap().iter().all(|&b| !b));
    }
}

#[test]
fn fit_is_idempotent_given_seed() {
    let root = tmp("fit_idem");
    simulate(&root.join("data"), 2, 5, &[]);
    for out in ["f1", "f2"] {
        let status = blm()
            .args([
                "fit",
                "--data",
                root.join("data").to_str().unwrap(),
                "--out",
                root.join(out).to_str().unwrap(),
                "--iters",
                "120",
                "--burnin",
                "40",
                "--seed",
                "9",
                "--quiet",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(dir_hashes(&root.join("f1")), dir_hashes(&root.join("f2")));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let root = tmp("cfg");
    simulate(&root.join("data"), 1, 2, &[]);
    let cfg = root.join("fit.cfg");
    fs::write(&cfg, "iters=100\nburnin=25\nseed=3\nquiet=true\n").unwrap();
    // flag --seed 4 must override the file's seed=3
    let status = blm()
        .args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let run_config = fs::read_to_string(root.join("out/run_config.csv")).unwrap();
    assert!(run_config.contains("iterations,100"), "{run_config}");
    assert!(run_config.contains("seed,4"), "{run_config}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let root = tmp("exit_codes");
    simulate(&root.join("data"), 1, 2, &[]);

    // config error: burn-in swallows all iterations
    let code = blm()
        .args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            root.join("x").to_str().unwrap(),
            "--iters",
            "100",
            "--burnin",
            "100",
            "--quiet",
        ])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(2));

    // data error: dataset directory does not exist
    let code = blm()
        .args([
            "fit",
            "--data",
            root.join("missing").to_str().unwrap(),
            "--out",
            root.join("y").to_str().unwrap(),
            "--quiet",
        ])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(3));

    // data error: bayes prediction without a saved likelihood trace
    let code = blm()
        .args([
            "predict",
            "--data",
            root.join("data").to_str().unwrap(),
            "--fit",
            root.join("data").to_str().unwrap(),
            "--method",
            "bayes",
        ])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(3));

    // config error: diagnose with a single directory
    let code = blm()
        .args(["diagnose", "--fit", root.join("data").to_str().unwrap()])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(2));

    // config error: malformed probability profile
    let code = blm()
        .args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            root.join("z").to_str().unwrap(),
            "--iters",
            "50",
            "--burnin",
            "10",
            "--prob-profile",
            "broken",
            "--quiet",
        ])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(2));
}

#[test]
fn manifest_mismatch_is_rejected_before_compute() {
    let root = tmp("manifest_reject");
    simulate(&root.join("data"), 1, 2, &[]);
    // corrupt: drop one outcome raster
    let victims: Vec<_> = fs::read_dir(root.join("data/outcomes")).unwrap().collect();
    fs::remove_file(victims[0].as_ref().unwrap().path()).unwrap();
    let out = blm()
        .args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
            "--quiet",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("missing"), "{msg}");
}

#[test]
fn predict_nbc_writes_reports() {
    let root = tmp("predict_nbc");
    simulate(&root.join("data"), 3, 11, &[]);
    let status = blm()
        .args([
            "predict",
            "--data",
            root.join("data").to_str().unwrap(),
            "--method",
            "nbc",
            "--prior",
            "uniform",
            "--out",
            root.join("rep").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["posteriors.csv", "confusion.csv", "rates.csv", "report.txt"] {
        assert!(root.join("rep").join(f).is_file(), "missing {f}");
    }
    let posteriors = fs::read_to_string(root.join("rep/posteriors.csv")).unwrap();
    // uniform prior over K=2 groups
    assert!(posteriors.lines().nth(1).unwrap().contains("0.5"), "{posteriors}");
}

#[test]
fn monitor_sites_file_is_honored() {
    let root = tmp("monitor_file");
    simulate(&root.join("data"), 1, 3, &[]);
    fs::write(root.join("sites.csv"), "x,y,z\n1,1,0\n4,2,0\n").unwrap();
    let status = blm()
        .args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
            "--iters",
            "60",
            "--burnin",
            "20",
            "--monitor-sites",
            root.join("sites.csv").to_str().unwrap(),
            "--quiet",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let traces = fs::read_to_string(root.join("out/monitored_traces.csv")).unwrap();
    assert!(traces.contains("x1y1z0.subtype_1"));
    assert!(traces.contains("x4y2z0.gender"));
    assert!(!traces.contains("x0y0z0"));
}

#[test]
fn resumed_fit_reproduces_uninterrupted_run() {
    let root = tmp("resume");
    simulate(&root.join("data"), 2, 8, &[]);
    let fit = |out: &Path, iters: &str, resume: bool| {
        let mut cmd = blm();
        cmd.args([
            "fit",
            "--data",
            root.join("data").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--iters",
            iters,
            "--burnin",
            "60",
            "--seed",
            "13",
            "--quiet",
        ]);
        if resume {
            cmd.arg("--resume");
        }
        assert!(cmd.status().unwrap().success());
    };
    fit(&root.join("full"), "200", false);
    fit(&root.join("part"), "120", false);
    fit(&root.join("part"), "200", true);
    assert_eq!(dir_hashes(&root.join("full")), dir_hashes(&root.join("part")));
}
