//! Numerical checks of the closed-form bounds, grouped into suites.
//!
//! Each check is sized by its arguments so the same code serves the quick
//! `verify` subcommand and the full-size acceptance runs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::funcspace::{
    besov_norm, composition_gap_bound, covering_number_oracle, grid_points, measured_gap, LayerFunction, PathFunction,
};
use crate::gp::{acceptance_lower_bound, besov_ball_radius, GpSpec, LatentSampler};
use crate::inference::{kl_v2_hellinger, run_mcmc, PosteriorConfig, RegressionSample};
use crate::prior::{sample_dgp, StructurePriorSpec};
use crate::rates::{entropy_constant_q1, minimax_rate, GpFamily, RateProfile};
use crate::rng::{keyed_rng, KeyedRng};
use crate::stats::{binomial_sd, ks_two_sample};
use crate::structure::{reduce_redundant, CompositionGraph, CompositionStructure};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(suite: &'static str, name: &str, passed: bool, detail: String) -> Self {
        CheckResult { suite, name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Rates,
    Funcspace,
    Gp,
    Inference,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rates" => Suite::Rates,
            "funcspace" => Suite::Funcspace,
            "gp" => Suite::Gp,
            "inference" => Suite::Inference,
            "all" => Suite::All,
            other => return Err(Error::Config(format!("unknown suite {other:?} (rates, funcspace, gp, inference, all)"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Rates => "rates",
            Suite::Funcspace => "funcspace",
            Suite::Gp => "gp",
            Suite::Inference => "inference",
            Suite::All => "all",
        })
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Rates | Suite::All) {
        out.push(redundancy_rate_equality(200, seed)?);
        out.push(rate_comparison(1000, seed)?);
        out.push(floor_property(1000, seed)?);
    }
    if matches!(suite, Suite::Funcspace | Suite::All) {
        out.push(entropy_sandwich(&[1.0, 0.5])?);
        out.push(composition_bound(300, seed)?);
    }
    if matches!(suite, Suite::Gp | Suite::All) {
        out.push(besov_acceptance(10_000, 2.0, 1, seed)?);
        out.push(acceptance_rate_bounds(2000, seed)?);
        out.push(fbm_covariance(4000, &[0.3, 0.5, 0.8], 0.10, seed)?);
    }
    if matches!(suite, Suite::Inference | Suite::All) {
        out.push(info_geometry(100, seed)?);
        out.push(sampler_null_test(&NullTest { chains: 2, kept_per_chain: 300, thin: 4, prior_draws: 600, n: 1000 }, seed)?);
    }
    Ok(out)
}

/// Random graph with layer widths `dims` (ending in 1) and `t_i = ts[i]`;
/// the first component of each layer attains `t_i`.
pub fn random_graph(rng: &mut KeyedRng, dims: &[usize], ts: &[usize]) -> Result<CompositionGraph> {
    let sets = (0..ts.len())
        .map(|i| {
            (0..dims[i + 1])
                .map(|j| {
                    let size = if j == 0 { ts[i] } else { rng.random_range(1..=ts[i]) };
                    let mut s: Vec<usize> = sample_indices(rng, dims[i], size).into_iter().map(|v| v + 1).collect();
                    s.sort_unstable();
                    s
                })
                .collect()
        })
        .collect();
    CompositionGraph::new(dims.to_vec(), sets)
}

fn random_betas(rng: &mut KeyedRng, q: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=q).map(|_| rng.random_range(lo..=hi)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Collapsing redundant layers leaves the minimax rate unchanged.
pub fn redundancy_rate_equality(count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = keyed_rng(seed, &[100]);
    let mut worst = 0.0f64;
    let mut collapsed = 0usize;
    let mut failures = Vec::new();
    for case in 0..count {
        let q = rng.random_range(1..=4usize);
        let mut ts: Vec<usize> = (0..=q).map(|_| if rng.random::<f64>() < 0.6 { 1 } else { 2 }).collect();
        let j = rng.random_range(1..=q);
        ts[j] = 1;
        ts[j - 1] = 1;
        let mut dims: Vec<usize> = ts.iter().map(|&t| rng.random_range(t..=t + 1)).collect();
        dims.push(1);
        let graph = random_graph(&mut rng, &dims, &ts)?;
        let lo = rng.random_range(0.1..0.9);
        let betas = random_betas(&mut rng, q, lo, 1.0);
        let eta = CompositionStructure::new(graph, betas, (lo, 1.0))?;
        let red = reduce_redundant(&eta, 1.0);
        if !red.applicable || red.removed.is_empty() {
            failures.push(format!("case {case}: nothing collapsed"));
            continue;
        }
        collapsed += red.removed.len();
        let again = reduce_redundant(&red.structure, 1.0);
        if again.structure != red.structure {
            failures.push(format!("case {case}: reduction not idempotent"));
        }
        for n in [1_000u64, 1_000_000] {
            let e = rel(minimax_rate(&red.structure, n)?.value, minimax_rate(&eta, n)?.value);
            worst = worst.max(e);
            if e >= 1e-12 {
                failures.push(format!("case {case}, n={n}: relative error {e:e}"));
            }
        }
    }
    Ok(CheckResult::new(
        "rates",
        "redundant layers keep the minimax rate",
        failures.is_empty(),
        format!("{count} structures, {collapsed} layers collapsed, worst relative error {worst:.2e}{}", first_failures(&failures)),
    ))
}

fn first_failures(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; {} failures, first: {}", f.len(), f[..f.len().min(3)].join("; "))
    }
}

/// `ε_n(λ,β) ≤ ε_n(λ,β') ≤ e^{β₊} ε_n(λ,β)` for `β' ≤ β ≤ β' + 1/log² n`.
pub fn rate_comparison(count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = keyed_rng(seed, &[101]);
    let families = [GpFamily::TruncatedWavelet, GpFamily::LevyFbm, GpFamily::RescaledStationary];
    let mut failures = Vec::new();
    let mut max_ratio_frac = 0.0f64;
    for case in 0..count {
        let family = families[rng.random_range(0..3)];
        let profile = RateProfile::new(family);
        let n = 10u64.pow(rng.random_range(3..=6));
        let gap = 1.0 / (n as f64).ln().powi(2);
        // |d|₁ = 1 + Σ d_i ≤ 12
        let (dims, ts) = loop {
            let q = rng.random_range(0..=3usize);
            let ts: Vec<usize> = (0..=q).map(|_| rng.random_range(1..=3)).collect();
            let mut dims: Vec<usize> = ts.iter().map(|&t| rng.random_range(t..=t + 1)).collect();
            dims.push(1);
            if 1 + dims[..=q].iter().sum::<usize>() <= 12 {
                break (dims, ts);
            }
        };
        let graph = random_graph(&mut rng, &dims, &ts)?;
        let q = ts.len() - 1;
        let hi_cap = if family == GpFamily::LevyFbm { 1.0 } else { 2.5 };
        let lo = rng.random_range(0.2..0.9);
        let hi = rng.random_range((lo + gap).min(hi_cap)..=hi_cap);
        let beta_p: Vec<f64> = (0..=q).map(|_| rng.random_range(lo..=(hi - gap).max(lo))).collect();
        let beta: Vec<f64> = beta_p.iter().map(|b| (b + rng.random_range(0.0..=gap)).min(hi)).collect();
        let a = profile.eps_structure(&CompositionStructure::new(graph.clone(), beta, (lo, hi))?, n)?;
        let b = profile.eps_structure(&CompositionStructure::new(graph, beta_p, (lo, hi))?, n)?;
        let cap = hi.exp();
        max_ratio_frac = max_ratio_frac.max(b / a / cap);
        if !(a <= b * (1.0 + 1e-12) && b <= cap * a) {
            failures.push(format!("case {case} ({family}, n={n}): eps(beta)={a:e}, eps(beta')={b:e}, e^beta+={cap:.4}"));
        }
    }
    Ok(CheckResult::new(
        "rates",
        "rate comparison under small smoothness shifts",
        failures.is_empty(),
        format!("{count} triples, max eps(beta')/(e^beta+ eps(beta)) = {max_ratio_frac:.4}{}", first_failures(&failures)),
    ))
}

/// Every `ε_n(α,β,r)` is at least the entropy floor.
pub fn floor_property(count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = keyed_rng(seed, &[102]);
    let families = [GpFamily::TruncatedWavelet, GpFamily::LevyFbm, GpFamily::RescaledStationary];
    let mut failures = Vec::new();
    let mut active = 0usize;
    for case in 0..count {
        let family = families[rng.random_range(0..3)];
        let profile = RateProfile::new(family).with_holder_radius(rng.random_range(0.5..3.0));
        let beta = rng.random_range(0.1..=if family == GpFamily::LevyFbm { 1.0 } else { 2.5 });
        let alpha = rng.random_range(0.05..=1.0);
        let r = rng.random_range(1..=4usize);
        let n = rng.random_range(3u64..=10_000_000);
        let eps = profile.eps_alpha(alpha, beta, r, n)?;
        let floor = profile.floor(alpha, beta, r, n);
        if eps == floor {
            active += 1;
        }
        if !(eps >= floor) {
            failures.push(format!("case {case}: eps {eps:e} < floor {floor:e}"));
        }
    }
    Ok(CheckResult::new(
        "rates",
        "rate solutions respect the entropy floor",
        failures.is_empty(),
        format!("{count} cases, floor active in {active}{}", first_failures(&failures)),
    ))
}

/// Brute-force covering counts of the Lipschitz proxy class against `Q₁ δ^{-1}`.
pub fn entropy_sandwich(deltas: &[f64]) -> Result<CheckResult> {
    let q1 = entropy_constant_q1(1.0, 1, 1.0);
    let mut parts = Vec::new();
    let mut ok = true;
    for &delta in deltas {
        let rep = covering_number_oracle(1.0, 1.0, delta, 8, 5_000_000)?;
        let log_n = (rep.cover as f64).ln();
        ok &= log_n <= rep.log_bound && (rep.log_bound - q1 / delta).abs() <= 1e-9 * rep.log_bound;
        parts.push(format!("delta={delta}: N={} (class {}), log N={log_n:.4} <= {:.4e}", rep.cover, rep.class_size, rep.log_bound));
    }
    Ok(CheckResult::new("funcspace", "covering numbers below the entropy bound", ok, format!("Q1(1,1,1)={q1:.6e}; {}", parts.join("; "))))
}

/// The two-layer composition bound dominates the measured composite gap.
pub fn composition_bound(count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = keyed_rng(seed, &[103]);
    let m = 257;
    let cell = 2.0 / (m - 1) as f64;
    let pts = grid_points(1, 1025);
    let mut failures = Vec::new();
    let mut tightest = f64::INFINITY;
    for case in 0..count {
        let layer = |rng: &mut KeyedRng| -> Result<(LayerFunction, LayerFunction, f64, f64)> {
            let (a, b, c) = (rng.random_range(0.1..0.8), rng.random_range(0.2..3.0), rng.random_range(-3.0..3.0));
            let (da, db, dc) = (rng.random_range(0.0..0.15), rng.random_range(0.5..6.0), rng.random_range(-3.0..3.0));
            let h = PathFunction::from_fn(1, m, |u| a * (b * u[0] + c).sin())?;
            let ht = PathFunction::from_fn(1, m, |u| a * (b * u[0] + c).sin() + da * (db * u[0] + dc).cos())?;
            // Lipschitz constants of h and of h - h̃
            Ok((LayerFunction::scalar(h), LayerFunction::scalar(ht), a * b, da * db))
        };
        let (h0, ht0, _, ld0) = layer(&mut rng)?;
        let (h1, ht1, l1, ld1) = layer(&mut rng)?;
        let betas = vec![rng.random_range(0.3..=1.0), rng.random_range(0.3..=1.0)];
        // Hölder-β₁ constant of h₁ on [-1,1]: L 2^{1-β₁}; the bound needs K ≥ 1
        let k = (l1 * 2f64.powf(1.0 - betas[1])).max(1.0);
        let h = [h0, h1];
        let ht = [ht0, ht1];
        let bound = composition_gap_bound(&h, &ht, &betas, k, &[0.0, 0.0], m)?;
        let gap = measured_gap(&h, &ht, &pts)?;
        // layer gaps are grid estimates: allow two cells of interpolation error in each
        let alpha0 = betas[1].min(1.0);
        let tol = k * ((bound.layer_gaps[0] + 2.0 * cell * ld0).powf(alpha0) - bound.layer_gaps[0].powf(alpha0)) + k * 2.0 * cell * ld1;
        tightest = tightest.min((bound.bound + tol) / gap.max(f64::MIN_POSITIVE));
        if gap > bound.bound + tol {
            failures.push(format!("case {case}: gap {gap:.6} > bound {:.6} + tol {tol:.2e}", bound.bound));
        }
    }
    Ok(CheckResult::new(
        "funcspace",
        "composition bound dominates the measured gap",
        failures.is_empty(),
        format!("{count} two-layer instances, min (bound+tol)/gap = {tightest:.4}{}", first_failures(&failures)),
    ))
}

/// Frequency of `‖X^β‖_{∞,∞,β} ≤ (1+K')√(2 log 2)` for the truncated wavelet process.
pub fn besov_acceptance(draws: usize, k_prime: f64, r: usize, seed: u64) -> Result<CheckResult> {
    let (freq, bound, sd) = besov_frequency(draws, k_prime, r, seed)?;
    Ok(CheckResult::new(
        "gp",
        &format!("wavelet Besov acceptance K'={k_prime} r={r}"),
        freq >= bound - 3.0 * sd,
        format!("{draws} draws: frequency {freq:.4} vs bound {bound:.4} - 3 sd ({sd:.4})"),
    ))
}

fn besov_frequency(draws: usize, k_prime: f64, r: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let sampler = LatentSampler::new(&GpSpec::new(GpFamily::TruncatedWavelet, 1.0, r, 1024))?;
    let radius = besov_ball_radius(k_prime);
    let mut rng = keyed_rng(seed, &[104, r as u64, k_prime.to_bits()]);
    let mut inside = 0usize;
    for _ in 0..draws {
        let path = sampler.path(&sampler.draw_latent(&mut rng));
        let w = path.wavelet_coeffs().expect("wavelet path");
        inside += usize::from(besov_norm(w, 1.0) <= radius);
    }
    let bound = acceptance_lower_bound(k_prime, r)?;
    Ok((inside as f64 / draws as f64, bound, binomial_sd(bound, draws)))
}

pub fn acceptance_rate_bounds(draws: usize, seed: u64) -> Result<CheckResult> {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [1usize, 2] {
        for kp in [2.0, 2.5, 3.0] {
            let (freq, bound, sd) = besov_frequency(draws, kp, r, seed)?;
            ok &= freq >= bound - 3.0 * sd;
            parts.push(format!("K'={kp},r={r}: {freq:.4}>={bound:.4}"));
        }
    }
    Ok(CheckResult::new("gp", "acceptance frequencies above the lower bound", ok, format!("{draws} draws each; {}", parts.join(", "))))
}

/// `Ê[(X(u)-X(u'))²]` of Lévy fBM against `|u-u'|^{2β}` on three grid pairs per `β`.
pub fn fbm_covariance(draws: usize, betas: &[f64], tol: f64, seed: u64) -> Result<CheckResult> {
    let m = 129;
    let u = |k: usize| -1.0 + 2.0 * k as f64 / (m - 1) as f64;
    let pairs = [(64usize, 80usize), (10, 100), (30, 31)];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for &beta in betas {
        let sampler = LatentSampler::new(&GpSpec::new(GpFamily::LevyFbm, beta, 1, 1000).with_grid(m))?;
        let mut rng = keyed_rng(seed, &[105, beta.to_bits()]);
        let mut acc = [0.0f64; 3];
        for _ in 0..draws {
            let (vals, _) = sampler.fbm_components(&sampler.draw_latent(&mut rng)).expect("fbm");
            for (a, &(i, j)) in acc.iter_mut().zip(&pairs) {
                *a += (vals[i] - vals[j]).powi(2);
            }
        }
        for (a, &(i, j)) in acc.iter().zip(&pairs) {
            let expect = (u(i) - u(j)).abs().powf(2.0 * beta);
            let e = rel(a / draws as f64, expect);
            worst = worst.max(e);
            parts.push(format!("b={beta} ({i},{j}): {:.4}/{expect:.4}", a / draws as f64));
        }
    }
    Ok(CheckResult::new(
        "gp",
        "fBM increment variances",
        worst <= tol,
        format!("{draws} draws, worst relative error {worst:.4} (tol {tol}); {}", parts.join(", ")),
    ))
}

/// Constant-offset identities, the Hellinger sandwich and the B₂ inclusion.
pub fn info_geometry(pairs: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = keyed_rng(seed, &[106]);
    let mut failures = Vec::new();
    let k = 64;
    let w = vec![1.0 / k as f64; k];
    let mut worst_const = 0.0f64;
    for c in [0.01, 0.3, -0.7, 1.5] {
        let f: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| v + c).collect();
        let ig = kl_v2_hellinger(&f, &g, &w)?;
        let e = rel(ig.kl, c * c).max(rel(ig.hellinger, -(-c * c / 8.0f64).exp_m1()));
        worst_const = worst_const.max(e);
        if e >= 1e-12 || ig.v2_upper > c * c + c.powi(4) / 4.0 + 1e-15 {
            failures.push(format!("offset {c}: relative error {e:e}"));
        }
    }
    let lower = (-0.5f64).exp() / 8.0;
    for case in 0..pairs {
        let f: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let g: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let ig = kl_v2_hellinger(&f, &g, &w)?;
        if !(lower * ig.kl <= ig.hellinger && ig.hellinger <= ig.kl / 8.0) {
            failures.push(format!("pair {case}: KL {} d_H {}", ig.kl, ig.hellinger));
        }
        // ‖f - g̃‖_∞ ≤ ε/2 keeps KL and the V₂ bound below ε²
        let eps = rng.random_range(0.01..1.0);
        let close: Vec<f64> = f.iter().map(|v| v + rng.random_range(-eps / 2.0..=eps / 2.0)).collect();
        let b2 = kl_v2_hellinger(&f, &close, &w)?;
        if !(b2.kl < eps * eps && b2.v2_upper < eps * eps) {
            failures.push(format!("pair {case}: B2 inclusion fails at eps {eps}"));
        }
    }
    Ok(CheckResult::new(
        "inference",
        "information-geometry identities",
        failures.is_empty(),
        format!("worst constant-offset relative error {worst_const:.2e}; {pairs} random pairs{}", first_failures(&failures)),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct NullTest {
    pub chains: usize,
    pub kept_per_chain: usize,
    pub thin: usize,
    pub prior_draws: usize,
    /// Sample size driving `J_β` and the slacks.
    pub n: u64,
}

/// With the likelihood switched off the sampler must reproduce the conditioned prior.
pub fn sampler_null_test(t: &NullTest, seed: u64) -> Result<CheckResult> {
    let eta = CompositionStructure::new(CompositionGraph::single_layer(1, vec![1])?, vec![1.0], (1.0, 1.0))?;
    let spec = StructurePriorSpec::from_structures(vec![eta.clone()], RateProfile::new(GpFamily::TruncatedWavelet), t.n);
    let data = RegressionSample::observed(vec![vec![0.0]; 4], vec![0.0; 4])?;
    let burn = 200;
    let config = PosteriorConfig {
        chains: t.chains,
        iterations: burn + t.kept_per_chain * t.thin,
        pcn_step: 0.5,
        structure_move_prob: 0.0,
        burn_in: burn as f64 / (burn + t.kept_per_chain * t.thin) as f64,
        thin: t.thin,
        seed,
        adapt: false,
        likelihood: false,
        store_draws: false,
    };
    let trace = run_mcmc(&data, &spec, &config)?;
    let chain_besov: Vec<f64> = trace.draws.iter().map(|d| d.node_besov[0]).collect();
    let chain_sup: Vec<f64> = trace.draws.iter().map(|d| d.node_sup[0]).collect();
    let mut prior_besov = Vec::with_capacity(t.prior_draws);
    let mut prior_sup = Vec::with_capacity(t.prior_draws);
    for s in 0..t.prior_draws {
        let d = sample_dgp(&eta, &spec, seed ^ (0xA5A5_0000_0000 + s as u64))?;
        let p = &d.layers[0].components[0].path;
        prior_besov.push(besov_norm(p.wavelet_coeffs().expect("wavelet"), 1.0));
        prior_sup.push(p.sup_norm());
    }
    let kb = ks_two_sample(&chain_besov, &prior_besov)?;
    let ks = ks_two_sample(&chain_sup, &prior_sup)?;
    let rate = trace.chains.iter().map(|c| c.pcn_rate()).sum::<f64>() / trace.chains.len() as f64;
    Ok(CheckResult::new(
        "inference",
        "null-likelihood sampler matches the prior",
        kb.p_value > 0.01 && ks.p_value > 0.01,
        format!(
            "{} chain draws vs {} prior draws: Besov KS D={:.4} p={:.4}; sup KS D={:.4} p={:.4}; pCN acceptance {rate:.3}",
            trace.draws.len(),
            t.prior_draws,
            kb.statistic,
            kb.p_value,
            ks.statistic,
            ks.p_value
        ),
    ))
}
