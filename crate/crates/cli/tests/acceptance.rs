//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use deepgp_core::inference::{contraction_curve, generate_data, run_mcmc_with, structure_masses, Design, FnRegressor};
use deepgp_core::prior::PriorTable;
use deepgp_core::stats::{median, ols_slope};
use deepgp_core::verify::{self, CheckResult, NullTest};
use deepgp_core::{CompositionGraph, CompositionStructure, GpFamily, PosteriorConfig, RateProfile, StructurePriorSpec};
use serde_json::json;

const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

impl From<CheckResult> for Outcome {
    fn from(c: CheckResult) -> Self {
        Outcome { passed: c.passed, detail: c.detail }
    }
}

fn criterion(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let start = Instant::now();
    let res = f();
    let took = start.elapsed();
    let (passed, detail) = match res {
        Ok(o) => (o.passed && took <= limit, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let over = if took > limit { format!(" [over the {}s limit]", limit.as_secs()) } else { String::new() };
    println!("{} {id:>2} {name}: {detail} ({:.2}s){over}", if passed { "PASS" } else { "FAIL" }, took.as_secs_f64());
    passed
}

fn check(r: deepgp_core::Result<CheckResult>) -> Result<Outcome, String> {
    r.map(Outcome::from).map_err(|e| e.to_string())
}

fn single(d: usize, active: Vec<usize>) -> CompositionStructure {
    CompositionStructure::new(CompositionGraph::single_layer(d, active).unwrap(), vec![1.0], (1.0, 1.0)).unwrap()
}

fn truth(d: usize) -> FnRegressor<impl Fn(&[f64]) -> f64 + Sync> {
    FnRegressor { dim: d, f: |x: &[f64]| 0.6 * (1.5 * x[0]).sin() }
}

fn contraction() -> Result<Outcome, String> {
    let eta = single(1, vec![1]);
    let spec_for_n = |n: u64| StructurePriorSpec::from_structures(vec![eta.clone()], RateProfile::new(GpFamily::TruncatedWavelet), n);
    let mut config = PosteriorConfig::new(1200, SEED);
    config.structure_move_prob = 0.0;
    config.thin = 4;
    let seeds: Vec<u64> = (1..=5).collect();
    let ns = [200u64, 800, 3200];
    let rows = contraction_curve(&truth(1), &eta, &spec_for_n, &config, &ns, &seeds, &Design::Uniform).map_err(|e| e.to_string())?;
    let errs: Vec<f64> = rows.iter().map(|r| r.median_error).collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let slope = ols_slope(&lx, &ly);
    Ok(Outcome {
        passed: monotone && (slope + 1.0 / 3.0).abs() <= 0.25,
        detail: format!("median L2 errors {errs:.4?} at n = {ns:?}, log-log slope {slope:.3}"),
    })
}

fn model_selection() -> Result<Outcome, String> {
    let simple = single(2, vec![1]);
    let complex = single(2, vec![1, 2]);
    let mut config = PosteriorConfig::new(600, SEED);
    config.structure_move_prob = 0.2;
    let mut medians = Vec::new();
    let mut priors = Vec::new();
    for n in [200u64, 3200] {
        let spec = StructurePriorSpec::from_structures(vec![simple.clone(), complex.clone()], RateProfile::new(GpFamily::TruncatedWavelet), n);
        let table = PriorTable::build(&spec).map_err(|e| e.to_string())?;
        let idx = table.entries.iter().position(|e| e.structure == complex).ok_or("complex structure missing")?;
        priors.push(table.entries[idx].prob);
        let mut masses = Vec::new();
        for seed in 1..=5u64 {
            let data = generate_data(&truth(2), n as usize, &Design::Uniform, seed).map_err(|e| e.to_string())?;
            let cfg = PosteriorConfig { seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n, ..config.clone() };
            let trace = run_mcmc_with(&data, &spec, &table, &cfg).map_err(|e| e.to_string())?;
            masses.push(structure_masses(&trace)[idx]);
        }
        medians.push(median(&masses));
    }
    // the rate penalty alone can zero the complex structure's prior mass; say so rather than hide it
    let note = if priors.iter().all(|p| *p == 0.0) { "; prior-dominated, the complex structure has zero prior mass" } else { "" };
    Ok(Outcome {
        passed: medians[1] <= medians[0],
        detail: format!(
            "complex-structure posterior mass {:.4} -> {:.4} (n = 200 -> 3200), prior mass {:.3e} -> {:.3e}{note}",
            medians[0], medians[1], priors[0], priors[1]
        ),
    })
}

fn write_config(dir: &Path, doc: &serde_json::Value) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_vec_pretty(doc).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_deepgp-lab")).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(())
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let eta = json!({"q": 0, "dims": [1, 1], "eff_dims": [1, 1], "active_sets": [[[1]]], "betas": [1.0], "beta_bounds": [1.0, 1.0]});
    let deep = json!({"q": 1, "dims": [2, 2, 1], "eff_dims": [1, 2, 1], "active_sets": [[[1], [2]], [[1, 2]]], "betas": [0.7, 1.4], "beta_bounds": [0.5, 2.0]});
    let space_prior = json!({"space": {"input_dim": 1, "max_q": 1, "max_width": 1, "max_nodes": 3, "beta_bounds": [0.8, 1.2]},
                             "profile": {"family": "truncated_wavelet"}, "n": 300, "beta_cells": 2});
    let config = json!({
        "schema_version": 1,
        "seed": 17,
        "rates": {"structure": deep, "profile": {"family": "truncated_wavelet"}, "n": [100, 10000, 1000000]},
        "sample": {"family": "levy_fbm", "beta": 0.5, "r": 1, "n": 500, "count": 50, "grid": 65},
        "prior": {"prior": space_prior, "draws": 20},
        "fit": {
            "prior": space_prior,
            "posterior": {"iterations": 300, "chains": 3, "structure_move_prob": 0.2},
            "data": {"kind": "synthetic", "n": 300, "truth": {"kind": "prior_draw", "structure": eta}}
        }
    });
    let cfg = write_config(root, &config);
    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    for cmd in ["rates", "sample", "prior", "fit", "diagnose", "verify"] {
        let mut outs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "3")] {
            let out = root.join(format!("{cmd}-{run}"));
            let out_s = out.to_string_lossy().into_owned();
            let mut args = vec!["--threads", threads, "--out", out_s.as_str()];
            let diag_cfg;
            match cmd {
                "diagnose" => {
                    let fit_dir = root.join(format!("fit-{run}"));
                    let doc = json!({"schema_version": 1, "diagnose": {"fit_dirs": [fit_dir], "c": [1.0, 4.0]}});
                    let dir = root.join(format!("diag-cfg-{run}"));
                    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                    diag_cfg = write_config(&dir, &doc);
                    args.extend(["--config", diag_cfg.as_str(), "diagnose"]);
                }
                "verify" => args.extend(["--seed", "17", "verify", "--suite", "rates"]),
                other => args.extend(["--config", cfg.as_str(), other]),
            }
            run_cli(&args)?;
            outs.push(csv_files(&out));
        }
        if outs[0].is_empty() {
            return Err(format!("{cmd} wrote no CSV"));
        }
        if outs[0].iter().map(|f| &f.0).ne(outs[1].iter().map(|f| &f.0)) {
            mismatches.push(format!("{cmd}: different file sets"));
        }
        for ((name, a), (_, b)) in outs[0].iter().zip(&outs[1]) {
            compared += 1;
            if a != b {
                mismatches.push(format!("{cmd}/{name}"));
            }
        }
    }
    Ok(Outcome {
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{compared} CSV files byte-identical across two runs (1 vs 3 threads) of all 6 subcommands")
        } else {
            format!("differing: {}", mismatches.join(", "))
        },
    })
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "besov acceptance bound", s(10), || check(verify::besov_acceptance(10_000, 2.0, 1, SEED))),
        criterion(2, "redundancy rate equality", s(1), || check(verify::redundancy_rate_equality(200, SEED))),
        criterion(3, "rate comparison", s(1), || check(verify::rate_comparison(1000, SEED))),
        criterion(4, "entropy-bound sandwich", s(60), || check(verify::entropy_sandwich(&[1.0, 0.5]))),
        criterion(5, "composition bound", s(30), || check(verify::composition_bound(1000, SEED))),
        criterion(6, "information-geometry identities", s(1), || check(verify::info_geometry(100, SEED))),
        criterion(7, "fbm covariance fidelity", s(60), || check(verify::fbm_covariance(10_000, &[0.3, 0.5, 0.8], 0.05, SEED))),
        criterion(8, "sampler null test", s(120), || {
            check(verify::sampler_null_test(&NullTest { chains: 4, kept_per_chain: 500, thin: 4, prior_draws: 2000, n: 1000 }, SEED))
        }),
        criterion(9, "empirical contraction", s(900), contraction),
        criterion(10, "model-selection trend", s(900), model_selection),
        criterion(11, "cli determinism", s(300), determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
