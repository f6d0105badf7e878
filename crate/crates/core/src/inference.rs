//! Regression data, likelihood functionals and posterior sampling.
//!
//! The sampler alternates per-node preconditioned Crank–Nicolson moves on the
//! Gaussian latents with independence proposals of a whole new `(η, paths)`
//! from the prior. A pCN proposal that leaves the node's conditioning set is
//! rejected outright, which keeps the conditioned prior invariant; structure
//! proposals come from the prior itself, so only the likelihood ratio enters
//! their acceptance probability.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{besov_norm, check_chain, eval_chain, in_conditioning_set, LayerFunction, PathFunction};
use crate::prior::{assemble_layers, node_models, sample_dgp_with, DgpDraw, NodeModel, PriorTable, StructurePriorSpec};
use crate::rates::{minimax_rate, RateProfile};
use crate::rng::{keyed_rng, tags, KeyedRng};
use crate::stats::median;
use crate::structure::CompositionStructure;

/// A regression function `[-1,1]^d → [-1,1]`.
pub trait Regressor: Sync {
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl Regressor for DgpDraw {
    fn input_dim(&self) -> usize {
        DgpDraw::input_dim(self)
    }
    fn eval(&self, x: &[f64]) -> f64 {
        DgpDraw::eval(self, x)
    }
}

/// A checked chain of layers.
#[derive(Debug, Clone)]
pub struct LayerChain(Vec<LayerFunction>);

impl LayerChain {
    pub fn new(layers: Vec<LayerFunction>) -> Result<Self> {
        check_chain(&layers)?;
        Ok(LayerChain(layers))
    }
}

impl Regressor for LayerChain {
    fn input_dim(&self) -> usize {
        self.0[0].in_dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        eval_chain(&self.0, x)
    }
}

/// A closure-backed regression function.
pub struct FnRegressor<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Regressor for FnRegressor<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Design {
    /// Uniform on `[-1,1]^d`.
    #[default]
    Uniform,
    /// Discrete design on the tensor grid of `m` points per axis with the given weights.
    GridWeights { m: usize, weights: Vec<f64> },
}

/// Quadrature rule for `L²(μ)` on a held-out grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quadrature {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Design {
    fn check(&self, d: usize) -> Result<()> {
        if let Design::GridWeights { m, weights } = self {
            let total = m.checked_pow(d as u32).unwrap_or(usize::MAX);
            if *m < 2 || weights.len() != total || weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!("grid design needs m >= 2 and {total} nonnegative weights with positive sum")));
            }
        }
        Ok(())
    }

    pub fn quadrature(&self, d: usize) -> Result<Quadrature> {
        self.check(d)?;
        match self {
            Design::Uniform => {
                let m: usize = match d {
                    1 => 512,
                    2 => 64,
                    3 => 16,
                    _ => 6,
                };
                let total = m.pow(d as u32);
                let points = (0..total)
                    .map(|mut flat| {
                        let mut p = vec![0.0; d];
                        for a in (0..d).rev() {
                            p[a] = -1.0 + (2.0 * (flat % m) as f64 + 1.0) / m as f64;
                            flat /= m;
                        }
                        p
                    })
                    .collect();
                Ok(Quadrature { points, weights: vec![1.0 / total as f64; total] })
            }
            Design::GridWeights { m, weights } => {
                let s: f64 = weights.iter().sum();
                Ok(Quadrature { points: crate::funcspace::grid_points(d, *m), weights: weights.iter().map(|w| w / s).collect() })
            }
        }
    }

    fn sample(&self, d: usize, n: usize, rng: &mut KeyedRng) -> Vec<Vec<f64>> {
        match self {
            Design::Uniform => (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect(),
            Design::GridWeights { m, weights } => {
                let pts = crate::funcspace::grid_points(d, *m);
                let s: f64 = weights.iter().sum();
                (0..n)
                    .map(|_| {
                        let u = rng.random::<f64>() * s;
                        let mut acc = 0.0;
                        let mut pick = pts.len() - 1;
                        for (i, w) in weights.iter().enumerate() {
                            acc += w;
                            if u < acc {
                                pick = i;
                                break;
                            }
                        }
                        pts[pick].clone()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    pub structure: Option<CompositionStructure>,
    /// `f*(X_i)`.
    pub at_x: Vec<f64>,
    /// `f*` on the design's quadrature points.
    pub at_quadrature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSample {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub design: Design,
    pub truth: Option<Truth>,
}

impl RegressionSample {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn input_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Data without a known truth (e.g. read from CSV).
    pub fn observed(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Config(format!("{} inputs but {} responses", x.len(), y.len())));
        }
        let d = x[0].len();
        if x.iter().any(|p| p.len() != d || p.iter().any(|v| !(v.abs() <= 1.0))) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("inputs must lie in [-1,1]^d with a common d and responses must be finite".into()));
        }
        Ok(RegressionSample { x, y, design: Design::Uniform, truth: None })
    }
}

/// `Y_i = f*(X_i) + ε_i` with standard normal noise.
pub fn generate_data(f: &dyn Regressor, n: usize, design: &Design, seed: u64) -> Result<RegressionSample> {
    generate_data_with_noise(f, n, design, seed, 1.0)
}

pub fn generate_data_with_noise(f: &dyn Regressor, n: usize, design: &Design, seed: u64, noise_sd: f64) -> Result<RegressionSample> {
    let d = f.input_dim();
    design.check(d)?;
    if n == 0 || !(noise_sd >= 0.0) {
        return Err(Error::Config("need n >= 1 and noise_sd >= 0".into()));
    }
    let x = design.sample(d, n, &mut keyed_rng(seed, &[tags::DATA_DESIGN]));
    let at_x: Vec<f64> = x.iter().map(|p| f.eval(p)).collect();
    if let Some((i, v)) = at_x.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0 + 1e-12)) {
        return Err(Error::Domain(format!("truth takes value {v} at X_{i}, outside [-1,1]")));
    }
    let mut noise = keyed_rng(seed, &[tags::DATA_NOISE]);
    let y = at_x.iter().map(|v| v + noise_sd * noise.sample::<f64, _>(StandardNormal)).collect();
    let quad = design.quadrature(d)?;
    let at_quadrature = quad.points.iter().map(|p| f.eval(p)).collect();
    Ok(RegressionSample { x, y, design: design.clone(), truth: Some(Truth { structure: None, at_x, at_quadrature }) })
}

/// `Σ_i Y_i (f - g)(X_i) - ½ f(X_i)² + ½ g(X_i)²`, the log-likelihood ratio of `f` against `g`.
pub fn log_likelihood_ratio(f: &[f64], g: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(g).zip(y).map(|((a, b), yi)| yi * (a - b) - 0.5 * a * a + 0.5 * b * b).sum()
}

/// `Σ_i Y_i f(X_i) - ½ f(X_i)²`, i.e. the ratio against the zero function.
fn log_lik(f: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(a, yi)| yi * a - 0.5 * a * a).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoGeometry {
    pub kl: f64,
    pub v2_upper: f64,
    pub hellinger: f64,
}

/// `KL = ∫(f-g)²`, `V₂ ≤ ∫(f-g)² + ¼(f-g)⁴`, `d_H = 1 - ∫ e^{-(f-g)²/8}` under the quadrature.
pub fn kl_v2_hellinger(f: &[f64], g: &[f64], weights: &[f64]) -> Result<InfoGeometry> {
    if f.len() != g.len() || f.len() != weights.len() {
        return Err(Error::domain("value and weight vectors differ in length"));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Domain(format!("quadrature weights must be nonnegative and sum to 1, got {s}")));
    }
    let (mut kl, mut v4, mut h) = (0.0, 0.0, 0.0);
    for ((a, b), w) in f.iter().zip(g).zip(weights) {
        let d2 = (a - b) * (a - b);
        kl += w * d2;
        v4 += w * d2 * d2;
        h += w * (-d2 / 8.0).exp_m1();
    }
    Ok(InfoGeometry { kl, v2_upper: kl + 0.25 * v4, hellinger: -h })
}

pub fn l2_error(f: &[f64], g: &[f64], weights: &[f64]) -> f64 {
    f.iter().zip(g).zip(weights).map(|((a, b), w)| w * (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub iterations: usize,
    /// pCN autocorrelation `ρ`: proposals are `ρ z + √(1-ρ²) w`.
    #[serde(default = "default_rho")]
    pub pcn_step: f64,
    #[serde(default = "default_structure_prob")]
    pub structure_move_prob: f64,
    #[serde(default = "default_burn")]
    pub burn_in: f64,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    /// Tune `ρ` during burn-in towards 30% pCN acceptance.
    #[serde(default = "yes")]
    pub adapt: bool,
    /// Set to false to sample the prior (likelihood ≡ 1).
    #[serde(default = "yes")]
    pub likelihood: bool,
    /// Keep the full draw (paths) in the trace.
    #[serde(default)]
    pub store_draws: bool,
}

fn default_chains() -> usize {
    2
}
fn default_rho() -> f64 {
    0.5
}
fn default_structure_prob() -> f64 {
    0.1
}
fn default_burn() -> f64 {
    0.5
}
fn default_thin() -> usize {
    1
}
fn yes() -> bool {
    true
}

impl PosteriorConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        PosteriorConfig {
            chains: default_chains(),
            iterations,
            pcn_step: default_rho(),
            structure_move_prob: default_structure_prob(),
            burn_in: default_burn(),
            thin: default_thin(),
            seed,
            adapt: true,
            likelihood: true,
            store_draws: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.chains >= 1
            && self.iterations >= 1
            && self.pcn_step > 0.0
            && self.pcn_step < 1.0
            && (0.0..=1.0).contains(&self.structure_move_prob)
            && (0.0..1.0).contains(&self.burn_in)
            && self.thin >= 1;
        if !ok {
            return Err(Error::Config(
                "posterior config needs chains >= 1, iterations >= 1, pcn_step in (0,1), structure_move_prob in [0,1], burn_in in [0,1), thin >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceDraw {
    pub chain: usize,
    pub iter: usize,
    pub structure_index: usize,
    pub betas: Vec<f64>,
    /// `Σ Y_i f(X_i) - ½ f(X_i)²`.
    pub loglik: f64,
    /// Log-likelihood ratio against the truth, when known.
    pub llr: Option<f64>,
    /// `L²(μ)` error on the held-out quadrature, when the truth is known.
    pub l2_error: Option<f64>,
    /// Per node (layer-major): Besov norm for wavelet paths, `NaN` otherwise.
    pub node_besov: Vec<f64>,
    pub node_sup: Vec<f64>,
    #[serde(skip)]
    pub draw: Option<Arc<DgpDraw>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChainStats {
    pub pcn_proposals: usize,
    pub pcn_accepted: usize,
    /// pCN proposals rejected because they left the conditioning set.
    pub pcn_outside: usize,
    pub structure_proposals: usize,
    pub structure_accepted: usize,
    /// Structure proposals whose conditioning budget ran out (counted as rejected).
    pub structure_failed: usize,
    pub final_pcn_step: f64,
}

impl ChainStats {
    pub fn pcn_rate(&self) -> f64 {
        self.pcn_accepted as f64 / self.pcn_proposals.max(1) as f64
    }
    pub fn structure_rate(&self) -> f64 {
        self.structure_accepted as f64 / self.structure_proposals.max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorTrace {
    pub draws: Vec<TraceDraw>,
    pub chains: Vec<ChainStats>,
    pub structures: Vec<CompositionStructure>,
    pub prior_probs: Vec<f64>,
}

struct ChainState {
    index: usize,
    eta: CompositionStructure,
    models: Vec<Vec<NodeModel>>,
    latents: Vec<Vec<Vec<f64>>>,
    layers: Vec<LayerFunction>,
    fx: Vec<f64>,
    loglik: f64,
}

fn eval_at(layers: &[LayerFunction], x: &[Vec<f64>], out: &mut Vec<f64>) {
    out.clear();
    out.extend(x.iter().map(|p| eval_chain(layers, p)));
}

struct Sampler<'a> {
    data: &'a RegressionSample,
    spec: &'a StructurePriorSpec,
    table: &'a PriorTable,
    config: &'a PosteriorConfig,
    quad: Option<crate::inference::Quadrature>,
}

impl Sampler<'_> {
    fn fresh_state(&self, rng: &mut KeyedRng) -> Result<ChainState> {
        let (index, eta) = self.table.sample(rng);
        let models = node_models(&eta, self.spec)?;
        let draw = sample_dgp_with(&models, &eta, self.spec.conditioning.max_attempts, rng.random())?;
        let mut fx = Vec::new();
        let loglik = if self.config.likelihood {
            eval_at(&draw.layers, &self.data.x, &mut fx);
            log_lik(&fx, &self.data.y)
        } else {
            0.0
        };
        Ok(ChainState { index, eta, models, latents: draw.latents, layers: draw.layers, fx, loglik })
    }

    fn record(&self, chain: usize, iter: usize, s: &ChainState) -> TraceDraw {
        let mut node_besov = Vec::new();
        let mut node_sup = Vec::new();
        for (i, layer) in s.layers.iter().enumerate() {
            for (j, c) in layer.components.iter().enumerate() {
                node_besov.push(c.path.wavelet_coeffs().map_or(f64::NAN, |w| besov_norm(w, s.eta.betas[i])));
                node_sup.push(c.path.sup_norm());
                let _ = j;
            }
        }
        let (llr, l2) = match &self.data.truth {
            Some(t) if self.config.likelihood => {
                let q = self.quad.as_ref().expect("quadrature with truth");
                let fq: Vec<f64> = q.points.iter().map(|p| eval_chain(&s.layers, p)).collect();
                (Some(log_likelihood_ratio(&s.fx, &t.at_x, &self.data.y)), Some(l2_error(&fq, &t.at_quadrature, &q.weights)))
            }
            Some(t) => {
                let q = self.quad.as_ref().expect("quadrature with truth");
                let fq: Vec<f64> = q.points.iter().map(|p| eval_chain(&s.layers, p)).collect();
                (None, Some(l2_error(&fq, &t.at_quadrature, &q.weights)))
            }
            None => (None, None),
        };
        let draw = self.config.store_draws.then(|| {
            Arc::new(DgpDraw {
                structure: s.eta.clone(),
                layers: s.layers.clone(),
                latents: s.latents.clone(),
                stats: Vec::new(),
            })
        });
        TraceDraw {
            chain,
            iter,
            structure_index: s.index,
            betas: s.eta.betas.clone(),
            loglik: s.loglik,
            llr,
            l2_error: l2,
            node_besov,
            node_sup,
            draw,
        }
    }

    fn run_chain(&self, chain: usize) -> Result<(Vec<TraceDraw>, ChainStats)> {
        let cfg = self.config;
        let mut rng = keyed_rng(cfg.seed, &[tags::MCMC, chain as u64]);
        let mut init_rng = keyed_rng(cfg.seed, &[tags::MCMC_INIT, chain as u64]);
        let mut struct_rng = keyed_rng(cfg.seed, &[tags::MCMC_STRUCTURE, chain as u64]);
        let mut s = self.fresh_state(&mut init_rng)?;
        let mut stats = ChainStats::default();
        let burn = (cfg.burn_in * cfg.iterations as f64).floor() as usize;
        let mut step = (1.0 - cfg.pcn_step * cfg.pcn_step).sqrt();
        let (mut win_prop, mut win_acc) = (0usize, 0usize);
        let mut draws = Vec::new();
        let mut fx_new = Vec::with_capacity(self.data.n());

        for iter in 0..cfg.iterations {
            let rho = (1.0 - step * step).max(0.0).sqrt();
            for i in 0..s.models.len() {
                for j in 0..s.models[i].len() {
                    let node = &s.models[i][j];
                    let z = &s.latents[i][j];
                    let z_new: Vec<f64> = z.iter().map(|v| rho * v + step * rng.sample::<f64, _>(StandardNormal)).collect();
                    stats.pcn_proposals += 1;
                    win_prop += 1;
                    let path = node.sampler.path(&z_new);
                    if !in_conditioning_set(&path, &node.cond)?.inside {
                        stats.pcn_outside += 1;
                        // still consume the uniform so streams stay aligned
                        let _: f64 = rng.random();
                        continue;
                    }
                    let old = std::mem::replace(&mut s.layers[i].components[j].path, path);
                    let accept = if cfg.likelihood {
                        eval_at(&s.layers, &self.data.x, &mut fx_new);
                        let ll = log_lik(&fx_new, &self.data.y);
                        let u: f64 = rng.random();
                        if u.ln() < ll - s.loglik {
                            s.loglik = ll;
                            std::mem::swap(&mut s.fx, &mut fx_new);
                            true
                        } else {
                            false
                        }
                    } else {
                        let _: f64 = rng.random();
                        true
                    };
                    if accept {
                        s.latents[i][j] = z_new;
                        stats.pcn_accepted += 1;
                        win_acc += 1;
                    } else {
                        s.layers[i].components[j].path = old;
                    }
                }
            }

            if cfg.structure_move_prob > 0.0 && struct_rng.random::<f64>() < cfg.structure_move_prob {
                stats.structure_proposals += 1;
                match self.fresh_state(&mut struct_rng) {
                    Ok(prop) => {
                        let u: f64 = struct_rng.random();
                        if u.ln() < prop.loglik - s.loglik {
                            s = prop;
                            stats.structure_accepted += 1;
                        }
                    }
                    Err(Error::ConditioningTooTight { .. }) => stats.structure_failed += 1,
                    Err(e) => return Err(e),
                }
            }

            if cfg.adapt && iter < burn && win_prop >= 50 {
                let rate = win_acc as f64 / win_prop as f64;
                step = (step * (rate - 0.3).exp()).clamp(1e-3, 1.0);
                win_prop = 0;
                win_acc = 0;
            }
            if iter >= burn && (iter - burn).is_multiple_of(cfg.thin) {
                draws.push(self.record(chain, iter, &s));
            }
        }
        stats.final_pcn_step = (1.0 - step * step).max(0.0).sqrt();
        if stats.pcn_accepted == 0 && stats.structure_accepted == 0 {
            return Err(Error::Mixing(format!(
                "chain {chain}: no accepted move in {} pCN proposals ({} outside the conditioning set) and {} structure proposals",
                stats.pcn_proposals, stats.pcn_outside, stats.structure_proposals
            )));
        }
        Ok((draws, stats))
    }
}

/// Run `config.chains` chains in parallel and concatenate their post-burn-in draws in chain order.
pub fn run_mcmc(data: &RegressionSample, spec: &StructurePriorSpec, config: &PosteriorConfig) -> Result<PosteriorTrace> {
    config.check()?;
    let table = PriorTable::build(spec)?;
    run_mcmc_with(data, spec, &table, config)
}

pub fn run_mcmc_with(data: &RegressionSample, spec: &StructurePriorSpec, table: &PriorTable, config: &PosteriorConfig) -> Result<PosteriorTrace> {
    config.check()?;
    let d = table.entries[0].structure.graph.input_dim();
    if data.input_dim() != d {
        return Err(Error::Config(format!("data has d = {} but the structures read d = {d}", data.input_dim())));
    }
    let quad = match &data.truth {
        Some(_) => Some(data.design.quadrature(d)?),
        None => None,
    };
    let sampler = Sampler { data, spec, table, config, quad };
    let results: Vec<Result<(Vec<TraceDraw>, ChainStats)>> = (0..config.chains).into_par_iter().map(|c| sampler.run_chain(c)).collect();
    let mut draws = Vec::new();
    let mut chains = Vec::new();
    for r in results {
        let (d, s) = r?;
        draws.extend(d);
        chains.push(s);
    }
    Ok(PosteriorTrace {
        draws,
        chains,
        structures: table.structures(),
        prior_probs: table.entries.iter().map(|e| e.prob).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMass {
    pub mass: f64,
    pub warning: Option<String>,
}

/// Fraction of draws with `ε_n(η) ≤ C ε_n(η*)` and, if `cap`, `|d|₁ ≤ log(2 log n)`.
pub fn model_mass(
    trace: &PosteriorTrace,
    eta_star: &CompositionStructure,
    profile: &RateProfile,
    n: u64,
    c: f64,
    cap: bool,
) -> Result<ModelMass> {
    if trace.draws.is_empty() {
        return Err(Error::Config("trace has no draws".into()));
    }
    let threshold = c * profile.eps_structure(eta_star, n)?;
    let node_cap = (2.0 * (n as f64).ln()).ln();
    let mut cache: HashMap<(usize, Vec<u64>), bool> = HashMap::new();
    let mut hits = 0usize;
    for d in &trace.draws {
        let key = (d.structure_index, d.betas.iter().map(|b| b.to_bits()).collect::<Vec<_>>());
        let good = match cache.get(&key) {
            Some(&g) => g,
            None => {
                let mut eta = trace.structures[d.structure_index].clone();
                eta.betas = d.betas.clone();
                let g = profile.eps_structure(&eta, n)? <= threshold && (!cap || eta.node_count() as f64 <= node_cap);
                cache.insert(key, g);
                g
            }
        };
        hits += usize::from(good);
    }
    let warning = (!cap).then(|| {
        format!("node cap |d|_1 <= log(2 log n) = {node_cap:.3} not applied at n = {n}: the condition is asymptotic")
    });
    Ok(ModelMass { mass: hits as f64 / trace.draws.len() as f64, warning })
}

/// Posterior mass per structure index.
pub fn structure_masses(trace: &PosteriorTrace) -> Vec<f64> {
    let mut m = vec![0.0; trace.structures.len()];
    for d in &trace.draws {
        m[d.structure_index] += 1.0;
    }
    let total = trace.draws.len().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= total);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub n: u64,
    pub median_error: f64,
    /// Per-seed medians of the draw errors.
    pub seed_errors: Vec<f64>,
    pub eps_n: f64,
    pub r_n: f64,
    /// `ε_n(η*) (log n)^{1 + log K}`.
    pub eps_n_log_inflated: f64,
}

/// For each `n`: simulate data per seed, run the sampler, take the median
/// `L²(μ)` error over draws, then the median over seeds.
pub fn contraction_curve(
    f_star: &dyn Regressor,
    eta_star: &CompositionStructure,
    spec_for_n: &dyn Fn(u64) -> StructurePriorSpec,
    config: &PosteriorConfig,
    n_list: &[u64],
    seeds: &[u64],
    design: &Design,
) -> Result<Vec<CurveRow>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) || seeds.is_empty() {
        return Err(Error::Config("n_list must be increasing and seeds nonempty".into()));
    }
    let mut rows = Vec::new();
    for &n in n_list {
        let spec = spec_for_n(n);
        let table = PriorTable::build(&spec)?;
        let mut seed_errors = Vec::new();
        for &seed in seeds {
            let data = generate_data(f_star, n as usize, design, seed)?;
            let cfg = PosteriorConfig { seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n, ..config.clone() };
            let trace = run_mcmc_with(&data, &spec, &table, &cfg)?;
            let errs: Vec<f64> = trace.draws.iter().filter_map(|d| d.l2_error).collect();
            seed_errors.push(median(&errs));
        }
        let eps_n = spec.profile.eps_structure(eta_star, n)?;
        let k = spec.profile.holder_radius;
        rows.push(CurveRow {
            n,
            median_error: median(&seed_errors),
            seed_errors,
            eps_n,
            r_n: minimax_rate(eta_star, n)?.value,
            eps_n_log_inflated: eps_n * (n as f64).ln().powf(1.0 + k.ln()),
        });
    }
    Ok(rows)
}

/// Layers of a trace draw rebuilt from its latents (for draws stored without paths).
pub fn rebuild_layers(eta: &CompositionStructure, spec: &StructurePriorSpec, latents: &[Vec<Vec<f64>>]) -> Result<Vec<LayerFunction>> {
    let models = node_models(eta, spec)?;
    let paths: Vec<Vec<PathFunction>> = models
        .iter()
        .zip(latents)
        .map(|(layer, zs)| layer.iter().zip(zs).map(|(m, z)| m.sampler.path(z)).collect())
        .collect();
    assemble_layers(eta, paths)
}
