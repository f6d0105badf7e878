//! Subcommand implementations. Each one validates its config section, runs
//! the core routines, writes its artifacts into the output directory and
//! finishes with the manifest.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use deepgp_core::funcspace::{besov_norm, holder_norm_empirical, ConditioningMode, ConditioningSpec};
use deepgp_core::gp::{besov_ball_radius, draw_conditioned, LatentSampler};
use deepgp_core::inference::{
    generate_data_with_noise, model_mass, run_mcmc_with, structure_masses, FnRegressor, PosteriorTrace, TraceDraw,
};
use deepgp_core::io::{read_tensor, write_tensor};
use deepgp_core::prior::{sample_dgp, sample_prior_from, PriorTable};
use deepgp_core::rates::minimax_rate;
use deepgp_core::rng::{keyed_rng, sub_seed, tags};
use deepgp_core::stats::{mean, median};
use deepgp_core::verify::{run_suite, Suite};
use deepgp_core::{
    CompositionStructure, DgpDraw, GpFamily, GpSpec, PathFunction, PathRepr, PosteriorConfig, RateProfile, RegressionSample,
    StructurePriorSpec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataConfig, ExperimentConfig, LoadedConfig, TruthConfig};
use crate::error::{CliError, CliResult};
use crate::output::{active_sets, ints, opt_real, real, reals, Manifest, OutDir};

pub struct Context {
    pub command: &'static str,
    /// Seed from `--seed` or the config's top-level `seed`.
    pub seed: Option<u64>,
    pub threads: usize,
    pub out: PathBuf,
    pub config: Option<LoadedConfig>,
    pub started: f64,
}

impl Context {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn section<T: Clone>(&self, name: &str, pick: impl Fn(&ExperimentConfig) -> &Option<T>) -> CliResult<T> {
        let cfg = self.config.as_ref().ok_or_else(|| CliError::invalid(format!("`{}` needs --config", self.command), None))?;
        pick(&cfg.config)
            .clone()
            .ok_or_else(|| CliError::invalid(format!("config has no `{name}` section"), Some(&format!("/{name}"))))
    }

    fn finish(&self, out: OutDir, seed: u64) -> CliResult<()> {
        out.finish(Manifest {
            command: self.command.to_string(),
            config_sha256: self.config.as_ref().map(|c| c.sha256.clone()),
            seed,
            threads: self.threads,
            started: self.started,
        })
    }
}

fn structure_cells(eta: &CompositionStructure) -> Vec<String> {
    vec![eta.q().to_string(), ints(&eta.graph.dims), ints(&eta.graph.eff_dims), active_sets(&eta.graph.active_sets), reals(&eta.betas)]
}

pub fn rates(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.section("rates", |c| &c.rates)?;
    cfg.profile.check().map_err(CliError::at("/rates/profile"))?;
    if cfg.n.is_empty() || cfg.n.iter().any(|&n| n < 3) {
        return Err(CliError::invalid("rates.n must be a nonempty list of sample sizes >= 3", Some("/rates/n")));
    }
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let r = minimax_rate(&cfg.structure, n)?;
        let eps = cfg.profile.eps_structure(&cfg.structure, n)?;
        let psi = cfg.profile.psi_n(&cfg.structure, n)?;
        rows.push(vec![n.to_string(), real(r.value), real(eps), opt_real(psi.into()), ints(&r.argmax)]);
    }
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("rates.csv", &["n", "r_n", "eps_n", "log_prior_weight", "argmax_layer"], &rows)?;
    ctx.finish(out, ctx.seed())
}

/// Grid used for the empirical Hölder column; `None` when too large to evaluate.
fn holder_grid(family: GpFamily, spec: &GpSpec) -> Option<usize> {
    match (family, spec.r) {
        (GpFamily::TruncatedWavelet, 1) => Some(129),
        (GpFamily::TruncatedWavelet, 2) => Some(33),
        (GpFamily::TruncatedWavelet, _) => None,
        _ => Some(spec.grid_points_per_axis()),
    }
}

pub fn sample(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.section("sample", |c| &c.sample)?;
    let seed = ctx.seed();
    let profile = cfg.profile.clone().unwrap_or_else(|| RateProfile::new(cfg.family));
    profile.check().map_err(CliError::at("/sample/profile"))?;
    if profile.family != cfg.family {
        return Err(CliError::invalid("sample.profile.family differs from sample.family", Some("/sample/profile/family")));
    }
    if cfg.count == 0 {
        return Err(CliError::invalid("sample.count must be >= 1", Some("/sample/count")));
    }
    let spec = GpSpec { family: cfg.family, beta: cfg.beta, r: cfg.r, n: cfg.n, seed, grid: cfg.grid };
    spec.check().map_err(CliError::at("/sample"))?;
    let sampler = LatentSampler::new(&spec)?;
    let c = &cfg.conditioning;
    let (mode, k) = match cfg.family {
        GpFamily::TruncatedWavelet => (ConditioningMode::BesovCoeffBall, besov_ball_radius(c.besov_k_prime)),
        _ => (ConditioningMode::EmpiricalHolder, c.holder_radius.unwrap_or(profile.holder_radius)),
    };
    let slack = 2.0 * profile.eps_alpha(1.0, cfg.beta, cfg.r, cfg.n)?;
    let cond = ConditioningSpec { beta: cfg.beta, r: cfg.r, k, slack, mode, sup_bound: c.sup_bound };
    cond.check().map_err(CliError::at("/sample/conditioning"))?;
    let hgrid = holder_grid(cfg.family, &spec);

    let results: Vec<deepgp_core::Result<(usize, PathFunction)>> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let key = [tags::CLI_SAMPLE, i as u64];
            if cfg.conditioned {
                let d = draw_conditioned(&sampler, &cond, c.max_attempts, seed, &key)?;
                Ok((d.stats.attempts, d.path))
            } else {
                // same stream as the first conditioned attempt
                let z = sampler.draw_latent(&mut keyed_rng(seed, &[tags::CLI_SAMPLE, i as u64, 1]));
                Ok((1, sampler.path(&z)))
            }
        })
        .collect();
    let mut draws = Vec::with_capacity(cfg.count);
    for r in results {
        draws.push(r?);
    }
    let norms: Vec<deepgp_core::Result<(Option<f64>, Option<f64>)>> = draws
        .par_iter()
        .map(|(_, p)| {
            let besov = p.wavelet_coeffs().map(|w| besov_norm(w, cfg.beta));
            let holder = match hgrid {
                Some(m) => Some(holder_norm_empirical(p, cfg.beta.min(2.0), m)?.value),
                None => None,
            };
            Ok((besov, holder))
        })
        .collect();
    let mut rows = Vec::with_capacity(cfg.count);
    let mut total_attempts = 0usize;
    for (i, ((attempts, path), norm)) in draws.iter().zip(norms).enumerate() {
        let (besov, holder) = norm?;
        total_attempts += attempts;
        rows.push(vec![
            i.to_string(),
            attempts.to_string(),
            real(1.0 / *attempts as f64),
            opt_real(besov),
            opt_real(holder),
            real(path.sup_norm()),
        ]);
    }

    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("samples.csv", &["index", "attempts", "acceptance_rate", "besov_norm", "holder_norm", "sup_norm"], &rows)?;
    let paths: Vec<PathFunction> = draws.into_iter().map(|(_, p)| p).collect();
    if cfg.family == GpFamily::TruncatedWavelet {
        out.write_json("paths.json", &paths)?;
    } else {
        let m = spec.grid_points_per_axis();
        let mut data = Vec::new();
        for p in &paths {
            if let PathRepr::Grid(g) = &p.repr {
                data.extend_from_slice(&g.values);
            }
        }
        let header = json!({
            "family": cfg.family, "beta": cfg.beta, "r": cfg.r, "m": m, "count": paths.len(),
            "shape": [paths.len(), m.pow(cfg.r as u32)],
            "layout": "one row per path; grid points u_k = -1 + 2k/(m-1), last axis fastest",
        });
        let mut buf = Vec::new();
        write_tensor(&mut buf, &header, &data)?;
        out.write("paths.dgpt", &buf)?;
    }
    out.write_json(
        "sample_summary.json",
        &json!({
            "count": cfg.count,
            "conditioned": cfg.conditioned,
            "total_attempts": total_attempts,
            "acceptance_rate": cfg.count as f64 / total_attempts as f64,
            "conditioning": cond,
        }),
    )?;
    ctx.finish(out, seed)
}

pub fn prior(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.section("prior", |c| &c.prior)?;
    let seed = ctx.seed();
    let spec = cfg.prior;
    spec.check().map_err(CliError::at("/prior/prior"))?;
    let table = PriorTable::build(&spec).map_err(CliError::at("/prior/prior"))?;
    for note in &table.notes {
        eprintln!("{}", json!({"warning": note}));
    }
    let rows: Vec<Vec<String>> = table
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut row = vec![i.to_string()];
            row.extend(structure_cells(&e.structure));
            row.extend([
                e.structure.node_count().to_string(),
                real(e.log_gamma),
                opt_real(e.log_penalty.into()),
                opt_real(e.log_weight.into()),
                real(e.prob),
            ]);
            row
        })
        .collect();

    let draws: Vec<deepgp_core::Result<(usize, DgpDraw)>> = (0..cfg.draws)
        .into_par_iter()
        .map(|i| {
            let s = sub_seed(seed, &[tags::CLI_PRIOR_DRAW, i as u64]);
            let (idx, eta) = table.sample(&mut keyed_rng(s, &[tags::STRUCTURE]));
            Ok((idx, sample_dgp(&eta, &spec, s)?))
        })
        .collect();
    let mut draw_rows = Vec::new();
    let mut kept = Vec::new();
    for (i, d) in draws.into_iter().enumerate() {
        let (idx, draw) = d?;
        let (besov, sup) = node_norms(&draw);
        let attempts: Vec<usize> = draw.stats.iter().flatten().map(|s| s.attempts).collect();
        draw_rows.push(vec![i.to_string(), idx.to_string(), reals(&draw.structure.betas), ints(&attempts), reals(&besov), reals(&sup)]);
        kept.push(draw);
    }

    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv(
        "weights.csv",
        &["index", "q", "dims", "eff_dims", "active_sets", "betas", "node_count", "log_gamma", "log_penalty", "log_weight", "prob"],
        &rows,
    )?;
    if cfg.draws > 0 {
        out.write_csv("draws.csv", &["index", "structure_index", "betas", "attempts", "node_besov", "node_sup"], &draw_rows)?;
        out.write_json("draws.json", &kept)?;
    }
    ctx.finish(out, seed)
}

fn node_norms(draw: &DgpDraw) -> (Vec<f64>, Vec<f64>) {
    let mut besov = Vec::new();
    let mut sup = Vec::new();
    for (i, layer) in draw.layers.iter().enumerate() {
        for c in &layer.components {
            besov.push(c.path.wavelet_coeffs().map_or(f64::NAN, |w| besov_norm(w, draw.structure.betas[i])));
            sup.push(c.path.sup_norm());
        }
    }
    (besov, sup)
}

/// What `diagnose` needs from a `fit` run.
#[derive(Debug, Serialize, Deserialize)]
struct FitRecord {
    n: usize,
    input_dim: usize,
    seed: u64,
    prior: StructurePriorSpec,
    posterior: PosteriorConfig,
    truth_structure: Option<CompositionStructure>,
    has_truth: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct StructureList {
    structures: Vec<CompositionStructure>,
    prior_probs: Vec<f64>,
}

fn read_csv_data(path: &Path) -> CliResult<RegressionSample> {
    let bad = |msg: String| CliError::invalid(format!("{}: {msg}", path.display()), Some("/fit/data/path"));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let d = header.len().checked_sub(1).filter(|&d| d >= 1).ok_or_else(|| bad("need columns x1..xd,y".into()))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if vals.len() != d + 1 {
            return Err(bad(format!("row {} has {} fields, expected {}", line + 1, vals.len(), d + 1)));
        }
        y.push(vals[d]);
        x.push(vals[..d].to_vec());
    }
    RegressionSample::observed(x, y).map_err(CliError::at("/fit/data/path"))
}

fn build_data(data: &DataConfig, spec: &StructurePriorSpec, table: &PriorTable, seed: u64) -> CliResult<RegressionSample> {
    let (n, design, noise_sd, truth) = match data {
        DataConfig::Csv { path } => return read_csv_data(path),
        DataConfig::Synthetic { truth, n, design, noise_sd } => (*n, design, *noise_sd, truth),
    };
    let data_seed = sub_seed(seed, &[tags::CLI_DATA]);
    let (mut sample, eta) = match truth {
        TruthConfig::Sine { amplitude, frequency, input_dim, coordinate, phase, structure } => {
            if *coordinate == 0 || coordinate > input_dim {
                return Err(CliError::invalid("truth.coordinate must lie in 1..=input_dim", Some("/fit/data/truth/coordinate")));
            }
            let (a, w, c, p) = (*amplitude, *frequency, *coordinate - 1, *phase);
            let f = FnRegressor { dim: *input_dim, f: move |x: &[f64]| a * (w * x[c] + p).sin() };
            let s = generate_data_with_noise(&f, n, design, data_seed, noise_sd).map_err(CliError::at("/fit/data"))?;
            (s, structure.clone())
        }
        TruthConfig::PriorDraw { structure } => {
            let truth_seed = sub_seed(seed, &[tags::CLI_TRUTH]);
            let draw = match structure {
                Some(eta) => sample_dgp(eta, spec, truth_seed)?,
                None => sample_prior_from(table, spec, truth_seed)?,
            };
            let s = generate_data_with_noise(&draw, n, design, data_seed, noise_sd).map_err(CliError::at("/fit/data"))?;
            (s, Some(draw.structure))
        }
    };
    if let Some(t) = sample.truth.as_mut() {
        t.structure = eta;
    }
    Ok(sample)
}

fn components(eta: &CompositionStructure) -> usize {
    eta.graph.active_sets.iter().map(Vec::len).sum()
}

const FIXED_COLUMNS: [&str; 6] = ["chain", "iter", "structure_index", "loglik", "llr", "l2_error"];

fn trace_tensor(trace: &PosteriorTrace) -> (serde_json::Value, Vec<f64>) {
    let layers = trace.structures.iter().map(|s| s.q() + 1).max().unwrap_or(1);
    let nodes = trace.structures.iter().map(components).max().unwrap_or(1);
    let mut columns: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    columns.extend((0..layers).map(|i| format!("beta_{i}")));
    columns.extend((0..nodes).map(|i| format!("besov_{i}")));
    columns.extend((0..nodes).map(|i| format!("sup_{i}")));
    let width = columns.len();
    let mut data = Vec::with_capacity(trace.draws.len() * width);
    let pad = |v: &[f64], len: usize, data: &mut Vec<f64>| {
        data.extend_from_slice(v);
        data.extend(std::iter::repeat_n(f64::NAN, len - v.len()));
    };
    for d in &trace.draws {
        data.extend([
            d.chain as f64,
            d.iter as f64,
            d.structure_index as f64,
            d.loglik,
            d.llr.unwrap_or(f64::NAN),
            d.l2_error.unwrap_or(f64::NAN),
        ]);
        pad(&d.betas, layers, &mut data);
        pad(&d.node_besov, nodes, &mut data);
        pad(&d.node_sup, nodes, &mut data);
    }
    let header = json!({
        "columns": columns,
        "shape": [trace.draws.len(), width],
        "layout": "row-major; NaN marks a missing value or padding",
    });
    (header, data)
}

pub fn fit(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.section("fit", |c| &c.fit)?;
    let spec = cfg.prior;
    let mut posterior = cfg.posterior;
    if let Some(s) = ctx.seed {
        posterior.seed = s;
    }
    spec.check().map_err(CliError::at("/fit/prior"))?;
    posterior.check().map_err(CliError::at("/fit/posterior"))?;
    let table = PriorTable::build(&spec).map_err(CliError::at("/fit/prior"))?;
    for note in &table.notes {
        eprintln!("{}", json!({"warning": note}));
    }
    let data = build_data(&cfg.data, &spec, &table, posterior.seed)?;
    let trace = run_mcmc_with(&data, &spec, &table, &posterior).map_err(CliError::at("/fit"))?;

    let mut out = OutDir::create(&ctx.out)?;
    let d = data.input_dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend(["y".to_string(), "f_true".to_string()]);
    let rows: Vec<Vec<String>> = (0..data.n())
        .map(|i| {
            let mut row: Vec<String> = data.x[i].iter().map(|v| real(*v)).collect();
            row.push(real(data.y[i]));
            row.push(opt_real(data.truth.as_ref().map(|t| t.at_x[i])));
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("data.csv", &header_refs, &rows)?;

    let trace_rows: Vec<Vec<String>> = trace
        .draws
        .iter()
        .map(|t| {
            vec![
                t.chain.to_string(),
                t.iter.to_string(),
                t.structure_index.to_string(),
                reals(&t.betas),
                real(t.loglik),
                opt_real(t.llr),
                opt_real(t.l2_error),
                reals(&t.node_besov),
                reals(&t.node_sup),
            ]
        })
        .collect();
    out.write_csv(
        "trace.csv",
        &["chain", "iter", "structure_index", "betas", "loglik", "llr", "l2_error", "node_besov", "node_sup"],
        &trace_rows,
    )?;
    let chain_rows: Vec<Vec<String>> = trace
        .chains
        .iter()
        .enumerate()
        .map(|(c, s)| {
            vec![
                c.to_string(),
                s.pcn_proposals.to_string(),
                s.pcn_accepted.to_string(),
                real(s.pcn_rate()),
                s.pcn_outside.to_string(),
                s.structure_proposals.to_string(),
                s.structure_accepted.to_string(),
                s.structure_failed.to_string(),
                real(s.structure_rate()),
                real(s.final_pcn_step),
            ]
        })
        .collect();
    out.write_csv(
        "chains.csv",
        &[
            "chain",
            "pcn_proposals",
            "pcn_accepted",
            "pcn_rate",
            "pcn_outside",
            "structure_proposals",
            "structure_accepted",
            "structure_failed",
            "structure_rate",
            "final_pcn_step",
        ],
        &chain_rows,
    )?;
    out.write_json("structures.json", &StructureList { structures: trace.structures.clone(), prior_probs: trace.prior_probs.clone() })?;
    let (theader, tdata) = trace_tensor(&trace);
    let mut buf = Vec::new();
    write_tensor(&mut buf, &theader, &tdata)?;
    out.write("trace.dgpt", &buf)?;

    let record = FitRecord {
        n: data.n(),
        input_dim: d,
        seed: posterior.seed,
        prior: spec,
        posterior: posterior.clone(),
        truth_structure: data.truth.as_ref().and_then(|t| t.structure.clone()),
        has_truth: data.truth.is_some(),
    };
    out.write_json("fit.json", &record)?;
    let errs: Vec<f64> = trace.draws.iter().filter_map(|t| t.l2_error).collect();
    out.write_json(
        "summary.json",
        &json!({
            "draws": trace.draws.len(),
            "structure_mass": structure_masses(&trace),
            "prior_probs": trace.prior_probs,
            "pcn_rate": trace.chains.iter().map(|c| c.pcn_rate()).collect::<Vec<_>>(),
            "structure_rate": trace.chains.iter().map(|c| c.structure_rate()).collect::<Vec<_>>(),
            "median_l2_error": (!errs.is_empty()).then(|| median(&errs)),
        }),
    )?;
    ctx.finish(out, posterior.seed)
}

struct LoadedFit {
    record: FitRecord,
    trace: PosteriorTrace,
}

fn load_fit(dir: &Path, ptr: &str) -> CliResult<LoadedFit> {
    let bad = |msg: String| CliError::invalid(format!("{}: {msg}", dir.display()), Some(ptr));
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| bad(format!("{name}: {e}")));
    let record: FitRecord = serde_json::from_slice(&read("fit.json")?).map_err(|e| bad(format!("fit.json: {e}")))?;
    let list: StructureList = serde_json::from_slice(&read("structures.json")?).map_err(|e| bad(format!("structures.json: {e}")))?;
    let (header, data) = read_tensor(read("trace.dgpt")?.as_slice()).map_err(|e| bad(format!("trace.dgpt: {e}")))?;
    let columns: Vec<String> = serde_json::from_value(header["columns"].clone()).map_err(|e| bad(format!("trace.dgpt header: {e}")))?;
    let width = columns.len();
    if width < FIXED_COLUMNS.len() || data.len() % width != 0 || columns[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(bad("trace.dgpt has an unexpected layout".into()));
    }
    let layers = columns.iter().filter(|c| c.starts_with("beta_")).count();
    let nodes = columns.iter().filter(|c| c.starts_with("besov_")).count();
    let opt = |v: f64| (!v.is_nan()).then_some(v);
    let mut draws = Vec::with_capacity(data.len() / width);
    for row in data.chunks_exact(width) {
        let structure_index = row[2] as usize;
        let eta = list.structures.get(structure_index).ok_or_else(|| bad(format!("structure index {structure_index} out of range")))?;
        let (q1, k) = (eta.q() + 1, components(eta));
        let b0 = FIXED_COLUMNS.len();
        draws.push(TraceDraw {
            chain: row[0] as usize,
            iter: row[1] as usize,
            structure_index,
            betas: row[b0..b0 + q1].to_vec(),
            loglik: row[3],
            llr: opt(row[4]),
            l2_error: opt(row[5]),
            node_besov: row[b0 + layers..b0 + layers + k].to_vec(),
            node_sup: row[b0 + layers + nodes..b0 + layers + nodes + k].to_vec(),
            draw: None,
        });
    }
    let trace = PosteriorTrace { draws, chains: Vec::new(), structures: list.structures, prior_probs: list.prior_probs };
    Ok(LoadedFit { record, trace })
}

pub fn diagnose(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.section("diagnose", |c| &c.diagnose)?;
    if cfg.fit_dirs.is_empty() {
        return Err(CliError::invalid("diagnose.fit_dirs must not be empty", Some("/diagnose/fit_dirs")));
    }
    if !cfg.c.iter().all(|c| *c > 0.0 && c.is_finite()) {
        return Err(CliError::invalid("diagnose.c entries must be positive", Some("/diagnose/c")));
    }
    let mut mass_rows = Vec::new();
    let mut structure_rows = Vec::new();
    let mut curve_rows = Vec::new();
    for (f, dir) in cfg.fit_dirs.iter().enumerate() {
        let ptr = format!("/diagnose/fit_dirs/{f}");
        let LoadedFit { record, trace } = load_fit(dir, &ptr)?;
        let n = record.n as u64;
        let profile = &record.prior.profile;
        let eta_star = cfg.truth_structure.clone().or(record.truth_structure.clone());
        for (i, (m, p)) in structure_masses(&trace).iter().zip(&trace.prior_probs).enumerate() {
            let eta = &trace.structures[i];
            structure_rows.push(vec![f.to_string(), n.to_string(), i.to_string(), eta.node_count().to_string(), reals(&eta.betas), real(*p), real(*m)]);
        }
        let errs: Vec<f64> = trace.draws.iter().filter_map(|d| d.l2_error).collect();
        let (med, avg) = if errs.is_empty() { (None, None) } else { (Some(median(&errs)), Some(mean(&errs))) };
        let Some(eta_star) = eta_star else {
            eprintln!("{}", json!({"warning": format!("{}: no truth structure, model mass and rate columns skipped", dir.display())}));
            curve_rows.push(vec![f.to_string(), n.to_string(), trace.draws.len().to_string(), opt_real(med), opt_real(avg), String::new(), String::new(), String::new()]);
            continue;
        };
        for (k, &c) in cfg.c.iter().enumerate() {
            let mm = model_mass(&trace, &eta_star, profile, n, c, cfg.cap)?;
            if let (0, Some(w)) = (k, &mm.warning) {
                eprintln!("{}", json!({"warning": w}));
            }
            mass_rows.push(vec![f.to_string(), n.to_string(), real(c), cfg.cap.to_string(), real(mm.mass)]);
        }
        let eps = profile.eps_structure(&eta_star, n)?;
        let inflated = eps * (n as f64).ln().powf(1.0 + profile.holder_radius.ln());
        curve_rows.push(vec![
            f.to_string(),
            n.to_string(),
            trace.draws.len().to_string(),
            opt_real(med),
            opt_real(avg),
            real(eps),
            real(minimax_rate(&eta_star, n)?.value),
            real(inflated),
        ]);
    }
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("model_mass.csv", &["fit", "n", "c", "cap", "mass"], &mass_rows)?;
    out.write_csv("structure_mass.csv", &["fit", "n", "structure_index", "node_count", "betas", "prior_prob", "posterior_mass"], &structure_rows)?;
    out.write_csv(
        "contraction.csv",
        &["fit", "n", "draws", "median_l2_error", "mean_l2_error", "eps_n", "r_n", "eps_n_log_inflated"],
        &curve_rows,
    )?;
    ctx.finish(out, ctx.seed())
}

pub fn verify(ctx: &Context, suite_flag: Option<&str>) -> CliResult<()> {
    let from_config = ctx.config.as_ref().and_then(|c| c.config.verify.as_ref()).and_then(|v| v.suite.clone());
    let (name, ptr) = match (suite_flag, &from_config) {
        (Some(s), _) => (s.to_string(), None),
        (None, Some(s)) => (s.clone(), Some("/verify/suite")),
        (None, None) => ("all".to_string(), None),
    };
    let suite = Suite::from_str(&name).map_err(|e| CliError::invalid(e.to_string(), ptr))?;
    let seed = ctx.seed();
    let results = run_suite(suite, seed)?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for r in &results {
        println!("{} {}/{}: {}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.name, r.detail);
        failed += usize::from(!r.passed);
        rows.push(vec![r.suite.to_string(), r.name.clone(), r.passed.to_string(), r.detail.clone()]);
    }
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("verify.csv", &["suite", "check", "passed", "detail"], &rows)?;
    ctx.finish(out, seed)?;
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
