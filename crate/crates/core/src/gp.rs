//! Samplers for the three process families and accept/reject conditioning.
//!
//! Every sampler is a deterministic map from a vector of i.i.d. standard
//! normal latents to a path. That keeps draws reproducible from the keyed
//! streams and lets the MCMC layer run pCN directly on the latents.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{grid_points, in_conditioning_set, ConditioningSpec, GridValues, PathFunction, WaveletCoeffs, WaveletBasis};
use crate::rates::{wavelet_resolution, GpFamily};
use crate::rng::{keyed_rng, tags};

const MAX_GRID_POINTS_1D: usize = 1024;
const MAX_GRID_AXIS_2D: usize = 64;
const MAX_WAVELET_COEFFS: usize = 1 << 20;
const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSpec {
    pub family: GpFamily,
    pub beta: f64,
    pub r: usize,
    /// Sample size driving `J_β` and the stationary scaling.
    pub n: u64,
    #[serde(default)]
    pub seed: u64,
    /// Points per axis for grid families; 0 picks a default.
    #[serde(default)]
    pub grid: usize,
}

impl GpSpec {
    pub fn new(family: GpFamily, beta: f64, r: usize, n: u64) -> Self {
        GpSpec { family, beta, r, n, seed: 0, grid: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn grid_points_per_axis(&self) -> usize {
        match (self.grid, self.r) {
            (0, 1) => 129,
            (0, _) => 33,
            (m, _) => m,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() || self.r == 0 || self.n < 2 {
            return Err(Error::Domain(format!(
                "gp spec needs beta > 0, r >= 1, n >= 2 (got {}, {}, {})",
                self.beta, self.r, self.n
            )));
        }
        if self.family == GpFamily::TruncatedWavelet {
            return Ok(());
        }
        if self.family == GpFamily::LevyFbm && self.beta >= 1.0 {
            return Err(Error::Domain(format!("fBM needs beta in (0,1), got {}", self.beta)));
        }
        let m = self.grid_points_per_axis();
        let ok = match self.r {
            1 => (16..=MAX_GRID_POINTS_1D).contains(&m),
            2 => (16..=MAX_GRID_AXIS_2D).contains(&m),
            _ => false,
        };
        if !ok {
            return Err(Error::Domain(format!(
                "grid families support r=1 with 16..={MAX_GRID_POINTS_1D} points or r=2 with 16..={MAX_GRID_AXIS_2D} per axis (got r={}, m={m})",
                self.r
            )));
        }
        Ok(())
    }
}

/// Stationary rescaling `a = n^{1/(2β+r)} (log n)^{-(1+r)/(2β+r)}`.
pub fn scaling_a(n: u64, beta: f64, r: usize) -> f64 {
    let (nf, rf) = (n as f64, r as f64);
    let denom = 2.0 * beta + rf;
    nf.powf(1.0 / denom) * nf.ln().powf(-(1.0 + rf) / denom)
}

/// `1 - 4/(2^{rK'^2} - 4)`, valid for `K' > √3`.
pub fn acceptance_lower_bound(k_prime: f64, r: usize) -> Result<f64> {
    if !(k_prime > 3f64.sqrt()) || r == 0 {
        return Err(Error::Domain(format!("the acceptance bound needs K' > sqrt(3) and r >= 1, got K'={k_prime}")));
    }
    Ok(1.0 - 4.0 / ((r as f64 * k_prime * k_prime).exp2() - 4.0))
}

/// Besov radius `(1+K')√(2 log 2)` of the wavelet conditioning ball.
pub fn besov_ball_radius(k_prime: f64) -> f64 {
    (1.0 + k_prime) * (2.0 * std::f64::consts::LN_2).sqrt()
}

#[derive(Debug, Clone)]
enum Kind {
    Wavelet {
        /// `2^{-j(β+r/2)}/√(jr)` per level.
        scales: Vec<f64>,
    },
    Dense {
        m: usize,
        chol: Arc<DMatrix<f64>>,
        /// Grid index pinned to zero (fBM origin), excluded from `chol`.
        zero_index: Option<usize>,
        release: bool,
    },
}

/// Map from i.i.d. standard normal latents to paths of one process.
#[derive(Debug, Clone)]
pub struct LatentSampler {
    pub family: GpFamily,
    pub beta: f64,
    pub r: usize,
    kind: Kind,
    dim: usize,
}

type CacheKey = (u8, u64, usize, usize, u64);

fn chol_cache() -> &'static Mutex<HashMap<CacheKey, Arc<DMatrix<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<DMatrix<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cholesky_with_jitter(mut cov: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut added = 0.0;
    for jitter in JITTER_LADDER {
        let step = jitter * scale - added;
        for i in 0..cov.nrows() {
            cov[(i, i)] += step;
        }
        added = jitter * scale;
        if let Some(c) = cov.clone().cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::Numeric(format!(
        "Cholesky of the {what} covariance ({0}x{0}) failed after jitter up to {1:e} of the diagonal",
        cov.nrows(),
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

impl LatentSampler {
    pub fn new(spec: &GpSpec) -> Result<Self> {
        spec.check()?;
        let (beta, r) = (spec.beta, spec.r);
        let (kind, dim) = match spec.family {
            GpFamily::TruncatedWavelet => {
                let levels = wavelet_resolution(spec.n, beta, r);
                let total: usize = (1..=levels).map(|j| 1usize.checked_shl((j * r) as u32).unwrap_or(usize::MAX)).sum();
                if levels * r >= 40 || total > MAX_WAVELET_COEFFS {
                    return Err(Error::Budget(format!("{levels} wavelet levels in r={r} exceed {MAX_WAVELET_COEFFS} coefficients")));
                }
                let scales = (1..=levels)
                    .map(|j| {
                        let jf = j as f64;
                        (-jf * (beta + r as f64 / 2.0)).exp2() / (jf * r as f64).sqrt()
                    })
                    .collect();
                (Kind::Wavelet { scales }, total)
            }
            GpFamily::LevyFbm | GpFamily::RescaledStationary => {
                let m = spec.grid_points_per_axis();
                let fbm = spec.family == GpFamily::LevyFbm;
                let a = if fbm { 0.0 } else { scaling_a(spec.n, beta, r) };
                let pts = grid_points(r, m);
                let zero_index = if fbm { pts.iter().position(|p| p.iter().all(|&v| v == 0.0)) } else { None };
                let key = (u8::from(fbm), beta.to_bits(), r, m, a.to_bits());
                let cached = chol_cache().lock().expect("cache poisoned").get(&key).cloned();
                let chol = match cached {
                    Some(c) => c,
                    None => {
                        let free: Vec<&Vec<f64>> = pts.iter().enumerate().filter(|(i, _)| Some(*i) != zero_index).map(|(_, p)| p).collect();
                        let n = free.len();
                        let norm = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dist2 = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                        let cov = DMatrix::from_fn(n, n, |i, j| {
                            if fbm {
                                let e = 2.0 * beta;
                                0.5 * (norm(free[i]).powf(e) + norm(free[j]).powf(e) - dist2(free[i], free[j]).sqrt().powf(e))
                            } else {
                                (-a * a * dist2(free[i], free[j])).exp()
                            }
                        });
                        let l = Arc::new(cholesky_with_jitter(cov, if fbm { "fBM" } else { "stationary" })?);
                        chol_cache().lock().expect("cache poisoned").insert(key, l.clone());
                        l
                    }
                };
                let dim = chol.nrows() + usize::from(fbm);
                (Kind::Dense { m, chol, zero_index, release: fbm }, dim)
            }
        };
        Ok(LatentSampler { family: spec.family, beta, r, kind, dim })
    }

    pub fn latent_dim(&self) -> usize {
        self.dim
    }

    pub fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Grid values of the unreleased component and the release constant (fBM only).
    pub fn fbm_components(&self, z: &[f64]) -> Option<(Vec<f64>, f64)> {
        match &self.kind {
            Kind::Dense { chol, zero_index, release: true, .. } => {
                let n = chol.nrows();
                let x = chol.as_ref() * DVector::from_column_slice(&z[..n]);
                let mut vals = x.as_slice().to_vec();
                if let Some(i) = zero_index {
                    vals.insert(*i, 0.0);
                }
                Some((vals, z[n]))
            }
            _ => None,
        }
    }

    pub fn path(&self, z: &[f64]) -> PathFunction {
        assert_eq!(z.len(), self.dim, "latent dimension mismatch");
        let repr = match &self.kind {
            Kind::Wavelet { scales } => {
                let mut off = 0;
                let levels = scales
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        let len = 1usize << ((i + 1) * self.r);
                        let lvl = z[off..off + len].iter().map(|v| s * v).collect();
                        off += len;
                        lvl
                    })
                    .collect();
                crate::funcspace::PathRepr::Wavelet(WaveletCoeffs { r: self.r, levels, basis: WaveletBasis::HatFrame })
            }
            Kind::Dense { m, chol, zero_index, release } => {
                let n = chol.nrows();
                let x = chol.as_ref() * DVector::from_column_slice(&z[..n]);
                let mut vals = x.as_slice().to_vec();
                if let Some(i) = zero_index {
                    vals.insert(*i, 0.0);
                }
                if *release {
                    vals.iter_mut().for_each(|v| *v += z[n]);
                }
                crate::funcspace::PathRepr::Grid(GridValues { r: self.r, m: *m, values: vals })
            }
        };
        PathFunction { repr, range_clip: true }
    }
}

fn family_tag(f: GpFamily) -> u64 {
    match f {
        GpFamily::TruncatedWavelet => tags::WAVELET,
        GpFamily::LevyFbm => tags::FBM,
        GpFamily::RescaledStationary => tags::STATIONARY,
    }
}

fn sample_family(spec: &GpSpec, family: GpFamily) -> Result<PathFunction> {
    if spec.family != family {
        return Err(Error::Domain(format!("spec family {} is not {family}", spec.family)));
    }
    let s = LatentSampler::new(spec)?;
    let z = s.draw_latent(&mut keyed_rng(spec.seed, &[family_tag(family)]));
    Ok(s.path(&z))
}

/// Truncated wavelet series with `λ_{j,k} = 2^{-j(β+r/2)} Z_{j,k}/√(jr)`.
pub fn sample_wavelet(spec: &GpSpec) -> Result<PathFunction> {
    sample_family(spec, GpFamily::TruncatedWavelet)
}

/// Lévy fBM on the grid, released at zero by an independent N(0,1) constant.
pub fn sample_fbm(spec: &GpSpec) -> Result<PathFunction> {
    sample_family(spec, GpFamily::LevyFbm)
}

/// Squared-exponential process `e^{-a²|u-u'|²}` on the grid.
pub fn sample_stationary(spec: &GpSpec) -> Result<PathFunction> {
    sample_family(spec, GpFamily::RescaledStationary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSampleStats {
    pub attempts: usize,
    pub accepted: bool,
    pub empirical_rate: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionedDraw {
    pub latent: Vec<f64>,
    pub path: PathFunction,
    pub stats: ConditionedSampleStats,
}

/// Rejection sampling into the conditioning set; attempt `a` draws from the
/// stream keyed by `(seed, key_path.., a)`.
pub fn draw_conditioned(
    sampler: &LatentSampler,
    cond: &ConditioningSpec,
    max_attempts: usize,
    seed: u64,
    key_path: &[u64],
) -> Result<ConditionedDraw> {
    if max_attempts == 0 {
        return Err(Error::domain("max_attempts must be >= 1"));
    }
    let mut key = key_path.to_vec();
    key.push(0);
    for attempt in 1..=max_attempts {
        *key.last_mut().expect("nonempty") = attempt as u64;
        let z = sampler.draw_latent(&mut keyed_rng(seed, &key));
        let path = sampler.path(&z);
        if in_conditioning_set(&path, cond)?.inside {
            let stats = ConditionedSampleStats { attempts: attempt, accepted: true, empirical_rate: 1.0 / attempt as f64 };
            return Ok(ConditionedDraw { latent: z, path, stats });
        }
    }
    Err(Error::ConditioningTooTight { node: None, attempts: max_attempts, rate: 0.0 })
}

pub fn sample_conditioned(spec: &GpSpec, cond: &ConditioningSpec, max_attempts: usize) -> Result<(PathFunction, ConditionedSampleStats)> {
    let s = LatentSampler::new(spec)?;
    let d = draw_conditioned(&s, cond, max_attempts, spec.seed, &[family_tag(spec.family), 1])?;
    Ok((d.path, d.stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{besov_norm, ConditioningMode, PathRepr};

    #[test]
    fn scaling_example() {
        assert!((scaling_a(1_000_000, 1.0, 1) - 17.37).abs() < 0.01);
    }

    #[test]
    fn acceptance_bound_examples() {
        assert!((acceptance_lower_bound(2.0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((acceptance_lower_bound(2.0, 2).unwrap() - (1.0 - 4.0 / 252.0)).abs() < 1e-15);
        let mut prev = 0.0;
        for k in [1.8, 2.0, 3.0, 5.0] {
            let b = acceptance_lower_bound(k, 1).unwrap();
            assert!(b > prev && b < 1.0);
            prev = b;
        }
        assert!(acceptance_lower_bound(1.7, 1).is_err());
    }

    #[test]
    fn wavelet_determinism_and_norm() {
        let spec = GpSpec::new(GpFamily::TruncatedWavelet, 1.0, 1, 1024).with_seed(9);
        let a = sample_wavelet(&spec).unwrap();
        assert_eq!(a, sample_wavelet(&spec).unwrap());
        let w = a.wavelet_coeffs().unwrap();
        assert_eq!(w.max_level(), 3);
        let s = LatentSampler::new(&spec).unwrap();
        let z = s.draw_latent(&mut keyed_rng(9, &[tags::WAVELET]));
        let mut expect = 0.0f64;
        let mut off = 0;
        for j in 1..=3usize {
            for k in 0..(1 << j) {
                expect = expect.max(z[off + k].abs() / (j as f64).sqrt());
            }
            off += 1 << j;
        }
        assert!((besov_norm(w, 1.0) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn fbm_pins_origin() {
        let spec = GpSpec::new(GpFamily::LevyFbm, 0.5, 1, 100).with_grid(33);
        let s = LatentSampler::new(&spec).unwrap();
        let z = s.draw_latent(&mut keyed_rng(3, &[]));
        let (x, z0) = s.fbm_components(&z).unwrap();
        assert_eq!(x[16], 0.0);
        let PathRepr::Grid(g) = s.path(&z).repr else { panic!() };
        assert_eq!(g.values[16], z0);
    }

    #[test]
    fn grid_limits() {
        assert!(GpSpec::new(GpFamily::LevyFbm, 1.0, 1, 100).check().is_err());
        assert!(GpSpec::new(GpFamily::LevyFbm, 0.5, 1, 100).with_grid(8).check().is_err());
        assert!(GpSpec::new(GpFamily::RescaledStationary, 0.5, 2, 100).with_grid(65).check().is_err());
        assert!(GpSpec::new(GpFamily::RescaledStationary, 0.5, 3, 100).check().is_err());
    }

    #[test]
    fn conditioning_trivial_and_impossible() {
        let spec = GpSpec::new(GpFamily::TruncatedWavelet, 1.0, 1, 1000).with_seed(1);
        let all = ConditioningSpec { beta: 1.0, r: 1, k: 1e9, slack: 1.0, mode: ConditioningMode::BesovCoeffBall, sup_bound: 10.0 };
        for seed in 0..20 {
            let (_, st) = sample_conditioned(&spec.clone().with_seed(seed), &all, 5).unwrap();
            assert_eq!(st.attempts, 1);
        }
        let none = ConditioningSpec { sup_bound: 0.0, ..all };
        match sample_conditioned(&spec, &none, 25) {
            Err(Error::ConditioningTooTight { attempts: 25, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
