//! Structure prior and deep GP prior draws.
//!
//! The structure prior reweights a factorized base density `γ` by the rate
//! penalty `e^{-Ψ_n(η)}` and normalizes over a finite space. Smoothness is
//! handled by splitting `[β₋, β₊]` into equal cells: each enumerated
//! structure carries the cell midpoints, and draws jitter `β` uniformly
//! inside the cell (midpoint quadrature of the uniform `γ(β|λ)`).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{eval_chain, Component, ConditioningMode, ConditioningSpec, LayerFunction};
use crate::gp::{besov_ball_radius, draw_conditioned, ConditionedSampleStats, GpSpec, LatentSampler};
use crate::rates::{alpha_exponents, normalize, GpFamily, LogWeight, RateProfile};
use crate::rng::{keyed_rng, tags, KeyedRng};
use crate::structure::{enumerate_structures, CompositionStructure, StructureSpace};

/// Base density parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    /// `γ(q) ∝ ratio^q`.
    #[serde(default = "half")]
    pub q_ratio: f64,
    /// `γ(d_i) ∝ ratio^{d_i}` for each hidden width.
    #[serde(default = "half")]
    pub width_ratio: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec { q_ratio: 0.5, width_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningConfig {
    /// `K'` of the wavelet Besov ball `(1+K')√(2 log 2)`.
    #[serde(default = "default_k_prime")]
    pub besov_k_prime: f64,
    /// Hölder radius for grid families; defaults to the profile's `K`.
    #[serde(default)]
    pub holder_radius: Option<f64>,
    #[serde(default = "one")]
    pub sup_bound: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_k_prime() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn default_attempts() -> usize {
    1000
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig { besov_k_prime: 2.0, holder_radius: None, sup_bound: 1.0, max_attempts: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructurePriorSpec {
    /// Enumerated space; exclusive with `structures`.
    #[serde(default)]
    pub space: Option<StructureSpace>,
    /// Explicit list of structures with fixed `β` and uniform `γ`.
    #[serde(default)]
    pub structures: Option<Vec<CompositionStructure>>,
    #[serde(default)]
    pub gamma: GammaSpec,
    pub profile: RateProfile,
    pub n: u64,
    /// Number of `β` cells per layer for enumerated spaces.
    #[serde(default = "default_cells")]
    pub beta_cells: usize,
    #[serde(default)]
    pub conditioning: ConditioningConfig,
    /// Points per axis for grid families (0 = default).
    #[serde(default)]
    pub grid: usize,
}

fn default_cells() -> usize {
    4
}

impl StructurePriorSpec {
    pub fn from_space(space: StructureSpace, profile: RateProfile, n: u64) -> Self {
        StructurePriorSpec {
            space: Some(space),
            structures: None,
            gamma: GammaSpec::default(),
            profile,
            n,
            beta_cells: default_cells(),
            conditioning: ConditioningConfig::default(),
            grid: 0,
        }
    }

    pub fn from_structures(structures: Vec<CompositionStructure>, profile: RateProfile, n: u64) -> Self {
        StructurePriorSpec { space: None, structures: Some(structures), ..Self::from_space(StructureSpace::new(1, 0, 1, 2, (1.0, 1.0)), profile, n) }
    }

    pub fn check(&self) -> Result<()> {
        self.profile.check()?;
        if self.space.is_some() == self.structures.is_some() {
            return Err(Error::Config("exactly one of `space` and `structures` must be given".into()));
        }
        if self.n < 3 {
            return Err(Error::Config(format!("n must be >= 3, got {}", self.n)));
        }
        if self.beta_cells == 0 {
            return Err(Error::Config("beta_cells must be >= 1".into()));
        }
        let g = &self.gamma;
        if !(g.q_ratio > 0.0 && g.q_ratio < 1.0) || !(g.width_ratio > 0.0 && g.width_ratio < 1.0) {
            return Err(Error::Config("gamma ratios must lie in (0, 1)".into()));
        }
        let c = &self.conditioning;
        if c.max_attempts == 0 || !(c.besov_k_prime > 0.0) || !(c.sup_bound >= 0.0) || c.holder_radius.is_some_and(|k| !(k > 0.0)) {
            return Err(Error::Config("invalid conditioning settings".into()));
        }
        if let Some(list) = &self.structures {
            if list.is_empty() {
                return Err(Error::Config("`structures` is empty".into()));
            }
            for s in list {
                s.check()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorEntry {
    pub structure: CompositionStructure,
    pub log_gamma: f64,
    /// `-Ψ_n(η)`.
    pub log_penalty: LogWeight,
    /// Normalized `log π(η)`.
    pub log_weight: LogWeight,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorTable {
    pub entries: Vec<PriorEntry>,
    /// Width of the `β` cells (0 when `β` is fixed).
    pub cell_width: f64,
    pub notes: Vec<String>,
}

fn ln_binom(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `log γ(q, d, t, S)` up to a constant shared by every structure of the space.
fn log_gamma_graph(eta: &CompositionStructure, g: &GammaSpec) -> f64 {
    let graph = &eta.graph;
    let q = graph.q;
    let mut lg = q as f64 * g.q_ratio.ln();
    for &d in &graph.dims[1..=q] {
        lg += d as f64 * g.width_ratio.ln();
    }
    for i in 0..=q {
        let di = graph.dims[i];
        // t uniform on 1..=d_i
        lg -= (di as f64).ln();
        // S uniform among layer configurations with max_j |S_ij| = t_i
        let t = graph.eff_dims[i];
        let a = |t: usize| (1..=t).map(|s| ln_binom(di, s).exp()).sum::<f64>();
        let width = graph.dims[i + 1] as i32;
        let count = a(t).powi(width) - if t > 1 { a(t - 1).powi(width) } else { 0.0 };
        lg -= count.ln();
    }
    lg
}

impl PriorTable {
    pub fn build(spec: &StructurePriorSpec) -> Result<Self> {
        spec.check()?;
        let mut notes = Vec::new();
        let (structures, cell_width, cells) = match (&spec.space, &spec.structures) {
            (Some(space), _) => {
                let (lo, hi) = space.beta_bounds;
                let cells = if hi > lo { spec.beta_cells } else { 1 };
                let width = (hi - lo) / cells as f64;
                let grid: Vec<f64> = (0..cells).map(|c| lo + (c as f64 + 0.5) * width).collect();
                let en = enumerate_structures(space, &grid)?;
                notes.extend(en.notes);
                (en.structures, width, cells)
            }
            (_, Some(list)) => (list.clone(), 0.0, 1),
            _ => unreachable!("checked"),
        };
        if structures.is_empty() {
            return Err(Error::Config(format!("structure space is empty: {}", notes.join("; "))));
        }
        let explicit = spec.structures.is_some();
        let rows: Vec<Result<(f64, LogWeight)>> = structures
            .par_iter()
            .map(|eta| {
                let lg = if explicit {
                    0.0
                } else {
                    log_gamma_graph(eta, &spec.gamma) - (eta.q() + 1) as f64 * (cells as f64).ln()
                };
                Ok((lg, spec.profile.psi_n(eta, spec.n)?))
            })
            .collect();
        let rows: Vec<(f64, LogWeight)> = rows.into_iter().collect::<Result<_>>()?;
        let unnorm: Vec<LogWeight> = rows.iter().map(|&(lg, p)| LogWeight::new(lg).expect("finite") + p).collect();
        let probs = normalize(&unnorm).map_err(|_| {
            Error::Config("every structure has zero prior weight (the |d|_1 penalty overflows); shrink the space".into())
        })?;
        let max = unnorm.iter().map(|w| w.log_value()).fold(f64::NEG_INFINITY, f64::max);
        let ln_sum = unnorm.iter().map(|w| (w.log_value() - max).exp()).sum::<f64>().ln();
        let entries = structures
            .into_iter()
            .zip(rows)
            .zip(unnorm)
            .zip(probs)
            .map(|(((structure, (log_gamma, log_penalty)), u), prob)| PriorEntry {
                structure,
                log_gamma,
                log_penalty,
                log_weight: if u.is_zero() { LogWeight::ZERO } else { LogWeight::new((u.log_value() - max) - ln_sum).expect("finite") },
                prob,
            })
            .collect();
        Ok(PriorTable { entries, cell_width, notes })
    }

    pub fn structures(&self) -> Vec<CompositionStructure> {
        self.entries.iter().map(|e| e.structure.clone()).collect()
    }

    /// Inverse-CDF draw of a cell, then `β` uniform within the cell.
    pub fn sample(&self, rng: &mut KeyedRng) -> (usize, CompositionStructure) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = None;
        for (i, e) in self.entries.iter().enumerate() {
            if e.prob <= 0.0 {
                continue;
            }
            acc += e.prob;
            idx = Some(i);
            if u < acc {
                break;
            }
        }
        let idx = idx.expect("normalized table has positive mass");
        let mut eta = self.entries[idx].structure.clone();
        if self.cell_width > 0.0 {
            let (lo, hi) = eta.beta_bounds;
            for b in eta.betas.iter_mut() {
                let jitter: f64 = rng.random::<f64>() - 0.5;
                *b = (*b + jitter * self.cell_width).clamp(lo, hi);
            }
        }
        (idx, eta)
    }
}

/// Normalized `(η, log π(η))` over the space.
pub fn structure_prior_weights(spec: &StructurePriorSpec) -> Result<Vec<(CompositionStructure, LogWeight)>> {
    Ok(PriorTable::build(spec)?.entries.into_iter().map(|e| (e.structure, e.log_weight)).collect())
}

pub fn sample_structure(spec: &StructurePriorSpec, seed: u64) -> Result<CompositionStructure> {
    let table = PriorTable::build(spec)?;
    Ok(table.sample(&mut keyed_rng(seed, &[tags::STRUCTURE])).1)
}

/// Sampler and conditioning set of one `(layer, component)` node.
#[derive(Debug, Clone)]
pub struct NodeModel {
    pub layer: usize,
    pub component: usize,
    pub active: Vec<usize>,
    pub sampler: LatentSampler,
    pub cond: ConditioningSpec,
}

/// Build the node samplers of `η`. Node `(i, j)` is an `|S_ij|`-variate process
/// whose slack is `2 ε_n(α_i, β_i, t_i)^{1/α_i}`.
pub fn node_models(eta: &CompositionStructure, spec: &StructurePriorSpec) -> Result<Vec<Vec<NodeModel>>> {
    let alphas = alpha_exponents(&eta.betas)?;
    let t = eta.layer_eff_dims();
    let family = spec.profile.family;
    let c = &spec.conditioning;
    (0..=eta.q())
        .map(|i| {
            let beta = eta.betas[i];
            let slack = 2.0 * spec.profile.eps_alpha(alphas[i], beta, t[i], spec.n)?.powf(1.0 / alphas[i]);
            eta.graph.active_sets[i]
                .iter()
                .enumerate()
                .map(|(j, set)| {
                    let r = set.len();
                    let gp = GpSpec { family, beta, r, n: spec.n, seed: 0, grid: spec.grid };
                    let sampler = LatentSampler::new(&gp)?;
                    let (mode, k) = match family {
                        GpFamily::TruncatedWavelet => (ConditioningMode::BesovCoeffBall, besov_ball_radius(c.besov_k_prime)),
                        _ => (ConditioningMode::EmpiricalHolder, c.holder_radius.unwrap_or(spec.profile.holder_radius)),
                    };
                    let cond = ConditioningSpec { beta, r, k, slack, mode, sup_bound: c.sup_bound };
                    Ok(NodeModel { layer: i, component: j, active: set.clone(), sampler, cond })
                })
                .collect()
        })
        .collect()
}

/// One draw `f = h_q ∘ … ∘ h_0` together with its Gaussian latents.
#[derive(Debug, Clone, Serialize)]
pub struct DgpDraw {
    pub structure: CompositionStructure,
    pub layers: Vec<LayerFunction>,
    /// `latents[i][j]`: standard normal vector behind node `(i, j)`.
    pub latents: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<Vec<ConditionedSampleStats>>,
}

impl DgpDraw {
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_chain(&self.layers, x)
    }

    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().map(|p| self.eval(p)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(LayerFunction::out_dim).sum()
    }
}

/// Assemble layers from per-node paths.
pub fn assemble_layers(eta: &CompositionStructure, paths: Vec<Vec<crate::funcspace::PathFunction>>) -> Result<Vec<LayerFunction>> {
    paths
        .into_iter()
        .enumerate()
        .map(|(i, layer)| {
            let comps = layer
                .into_iter()
                .zip(&eta.graph.active_sets[i])
                .map(|(path, set)| Component { path, active: set.clone() })
                .collect();
            LayerFunction::new(eta.graph.dims[i], comps)
        })
        .collect()
}

/// Draw one conditioned path per node, independently keyed by `(seed, i, j, attempt)`.
pub fn sample_dgp_with(models: &[Vec<NodeModel>], eta: &CompositionStructure, max_attempts: usize, seed: u64) -> Result<DgpDraw> {
    let mut latents = Vec::with_capacity(models.len());
    let mut stats = Vec::with_capacity(models.len());
    let mut paths = Vec::with_capacity(models.len());
    for layer in models {
        let (mut lz, mut ls, mut lp) = (Vec::new(), Vec::new(), Vec::new());
        for node in layer {
            let key = [tags::DGP_NODE, node.layer as u64, node.component as u64];
            let d = draw_conditioned(&node.sampler, &node.cond, max_attempts, seed, &key).map_err(|e| match e {
                Error::ConditioningTooTight { attempts, rate, .. } => Error::ConditioningTooTight {
                    node: Some(format!("layer {} component {}", node.layer, node.component + 1)),
                    attempts,
                    rate,
                },
                other => other,
            })?;
            lz.push(d.latent);
            ls.push(d.stats);
            lp.push(d.path);
        }
        latents.push(lz);
        stats.push(ls);
        paths.push(lp);
    }
    let layers = assemble_layers(eta, paths)?;
    Ok(DgpDraw { structure: eta.clone(), layers, latents, stats })
}

pub fn sample_dgp(eta: &CompositionStructure, spec: &StructurePriorSpec, seed: u64) -> Result<DgpDraw> {
    let models = node_models(eta, spec)?;
    sample_dgp_with(&models, eta, spec.conditioning.max_attempts, seed)
}

/// `sample_structure` followed by `sample_dgp`.
pub fn sample_prior(spec: &StructurePriorSpec, seed: u64) -> Result<DgpDraw> {
    let table = PriorTable::build(spec)?;
    sample_prior_from(&table, spec, seed)
}

pub fn sample_prior_from(table: &PriorTable, spec: &StructurePriorSpec, seed: u64) -> Result<DgpDraw> {
    let (_, eta) = table.sample(&mut keyed_rng(seed, &[tags::STRUCTURE]));
    sample_dgp(&eta, spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::CompositionGraph;

    fn q0(beta: f64) -> CompositionStructure {
        CompositionStructure::new(CompositionGraph::single_layer(1, vec![1]).unwrap(), vec![beta], (0.5, 1.0)).unwrap()
    }

    #[test]
    fn single_structure_weight_one() {
        let spec = StructurePriorSpec::from_structures(vec![q0(1.0)], RateProfile::new(GpFamily::TruncatedWavelet), 1000);
        let w = structure_prior_weights(&spec).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].1.log_value(), 0.0);
        assert_eq!(sample_structure(&spec, 4).unwrap(), q0(1.0));
    }

    #[test]
    fn penalty_ratio_between_equal_graphs() {
        let p = RateProfile::new(GpFamily::LevyFbm);
        let (a, b) = (q0(0.9), q0(0.6));
        let n = 500;
        let spec = StructurePriorSpec::from_structures(vec![a.clone(), b.clone()], p.clone(), n);
        let w = structure_prior_weights(&spec).unwrap();
        let (ea, eb) = (p.eps_structure(&a, n).unwrap(), p.eps_structure(&b, n).unwrap());
        let expect = n as f64 * (eb * eb - ea * ea);
        let got = w[0].1.log_value() - w[1].1.log_value();
        assert!(ea < eb && (got - expect).abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn large_graph_gets_zero_weight() {
        let p = RateProfile::new(GpFamily::TruncatedWavelet);
        let big = CompositionStructure::new(
            CompositionGraph::new(vec![9, 1], vec![vec![(1..=9).collect()]]).unwrap(),
            vec![1.0],
            (0.5, 1.0),
        )
        .unwrap();
        let small = CompositionStructure::new(
            CompositionGraph::new(vec![2, 1], vec![vec![vec![1]]]).unwrap(),
            vec![1.0],
            (0.5, 1.0),
        )
        .unwrap();
        assert_eq!((big.node_count(), small.node_count()), (10, 3));
        let spec = StructurePriorSpec::from_structures(vec![big.clone(), small], p.clone(), 1000);
        let w = structure_prior_weights(&spec).unwrap();
        assert!(w[0].1.is_zero());
        assert_eq!(w[1].1.log_value(), 0.0);
        let only_big = StructurePriorSpec::from_structures(vec![big], p, 1000);
        assert!(matches!(structure_prior_weights(&only_big), Err(Error::Config(_))));
    }

    #[test]
    fn enumerated_weights_normalize() {
        let space = StructureSpace::new(1, 1, 1, 4, (0.5, 1.0));
        let spec = StructurePriorSpec::from_space(space, RateProfile::new(GpFamily::LevyFbm), 1000);
        let table = PriorTable::build(&spec).unwrap();
        assert_eq!(table.entries.len(), 4 + 16);
        let s: f64 = table.entries.iter().map(|e| e.prob).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((table.cell_width - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gamma_counts_active_set_configurations() {
        // d = (2, 1): S ∈ {{1}}, {{2}} with t = 1 and {{1,2}} with t = 2
        let g = GammaSpec::default();
        let mk = |s: Vec<usize>| {
            CompositionStructure::new(CompositionGraph::new(vec![2, 1], vec![vec![s]]).unwrap(), vec![1.0], (1.0, 1.0)).unwrap()
        };
        let t1 = log_gamma_graph(&mk(vec![1]), &g);
        let t2 = log_gamma_graph(&mk(vec![1, 2]), &g);
        assert!((t1 - (-(2f64.ln()) - 2f64.ln())).abs() < 1e-12);
        assert!((t2 - (-(2f64.ln()))).abs() < 1e-12);
        // γ(t=1) = γ(t=2) = 1/2 in total
        assert!((2.0 * t1.exp() - t2.exp()).abs() < 1e-12);
    }

    #[test]
    fn figure2_draw_has_four_nodes_and_bounded_range() {
        let g = CompositionGraph::new(vec![5, 3, 1], vec![vec![vec![1, 3, 4], vec![1, 4, 5], vec![2]], vec![vec![1, 2, 3]]]).unwrap();
        let eta = CompositionStructure::new(g, vec![1.0, 1.0], (0.5, 1.0)).unwrap();
        let spec = StructurePriorSpec::from_structures(vec![eta.clone()], RateProfile::new(GpFamily::TruncatedWavelet), 200);
        let d = sample_dgp(&eta, &spec, 11).unwrap();
        assert_eq!(d.node_count(), 4);
        assert_eq!(d.layers[0].components[0].path.r(), 3);
        assert_eq!(d.layers[0].components[2].path.r(), 1);
        let mut rng = keyed_rng(2, &[]);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
            assert!(d.eval(&x).abs() <= 1.0);
        }
        let again = sample_dgp(&eta, &spec, 11).unwrap();
        assert_eq!(again.latents, d.latents);
    }

    #[test]
    fn single_structure_prior_equals_dgp() {
        let spec = StructurePriorSpec::from_structures(vec![q0(1.0)], RateProfile::new(GpFamily::TruncatedWavelet), 1000);
        let a = sample_prior(&spec, 77).unwrap();
        let b = sample_dgp(&q0(1.0), &spec, 77).unwrap();
        assert_eq!(a.latents, b.latents);
    }
}
