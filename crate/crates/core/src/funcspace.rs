//! Function representations and function-space diagnostics.
//!
//! Two path representations exist. Wavelet-backed paths hold hierarchical
//! coefficients `λ_{j,k}`; level `j` is the multilinear interpolant of its
//! `2^{jr}` coefficients placed at the cell midpoints `(k+½)2^{-j}` of
//! `x = (u+1)/2`, with constant extension to the boundary. Each level is a
//! partition of unity, so `‖f‖_∞ ≤ Σ_j max_k |λ_{j,k}|`, and the sum is
//! multilinear between points of the dyadic grid `2^{-(J+1)}ℤ`, which makes
//! the sup norm exactly computable. Grid-backed paths hold values on a
//! uniform tensor grid of `[-1,1]^r` and interpolate multilinearly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::alpha_exponents;

/// Largest tensor grid that the pairwise Hölder quotient will scan.
pub const HOLDER_MAX_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletBasis {
    HatFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletCoeffs {
    pub r: usize,
    /// `levels[j-1]` holds the `2^{jr}` coefficients of level `j`, last axis fastest.
    pub levels: Vec<Vec<f64>>,
    pub basis: WaveletBasis,
}

impl WaveletCoeffs {
    pub fn zeros(r: usize, max_level: usize) -> Self {
        let levels = (1..=max_level).map(|j| vec![0.0; 1 << (j * r)]).collect();
        WaveletCoeffs { r, levels, basis: WaveletBasis::HatFrame }
    }

    pub fn max_level(&self) -> usize {
        self.levels.len()
    }

    fn check(&self) -> Result<()> {
        if self.r == 0 || self.levels.is_empty() {
            return Err(Error::domain("wavelet path needs r >= 1 and at least one level"));
        }
        for (i, lvl) in self.levels.iter().enumerate() {
            let j = i + 1;
            if lvl.len() != 1 << (j * self.r) {
                return Err(Error::Domain(format!("level {j} has {} coefficients, expected {}", lvl.len(), 1usize << (j * self.r))));
            }
            if lvl.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("level {j} has non-finite coefficients")));
            }
        }
        Ok(())
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let mut pos = [(0usize, 0.0f64); 8];
        let pos = &mut pos[..self.r];
        let mut total = 0.0;
        for (i, lvl) in self.levels.iter().enumerate() {
            let cells = 1usize << (i + 1);
            for (p, &ua) in pos.iter_mut().zip(u) {
                let x = (ua.clamp(-1.0, 1.0) + 1.0) * 0.5;
                *p = locate(x * cells as f64 - 0.5, cells);
            }
            total += multilinear(lvl, cells, pos);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridValues {
    pub r: usize,
    /// Points per axis, `u_k = -1 + 2k/(m-1)`.
    pub m: usize,
    /// `m^r` values, last axis fastest.
    pub values: Vec<f64>,
}

impl GridValues {
    pub fn from_fn(r: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid_points(r, m).iter().map(|p| f(p)).collect();
        GridValues { r, m, values }
    }

    fn check(&self) -> Result<()> {
        if self.r == 0 || self.m < 2 {
            return Err(Error::domain("grid path needs r >= 1 and m >= 2"));
        }
        let len = self.m.checked_pow(self.r as u32).ok_or_else(|| Error::domain("grid too large"))?;
        if self.values.len() != len {
            return Err(Error::Domain(format!("grid holds {} values, expected {len}", self.values.len())));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid holds non-finite values"));
        }
        Ok(())
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let mut pos = [(0usize, 0.0f64); 8];
        let pos = &mut pos[..self.r];
        let scale = (self.m - 1) as f64 * 0.5;
        for (p, &ua) in pos.iter_mut().zip(u) {
            *p = locate((ua.clamp(-1.0, 1.0) + 1.0) * scale, self.m);
        }
        multilinear(&self.values, self.m, pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PathRepr {
    Wavelet(WaveletCoeffs),
    Grid(GridValues),
}

/// A sampled layer component `[-1,1]^r → ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFunction {
    pub repr: PathRepr,
    pub range_clip: bool,
}

impl PathFunction {
    pub fn new(repr: PathRepr, range_clip: bool) -> Result<Self> {
        match &repr {
            PathRepr::Wavelet(w) => w.check()?,
            PathRepr::Grid(g) => g.check()?,
        }
        if repr_r(&repr) > 8 {
            return Err(Error::domain("paths support at most 8 input variables"));
        }
        Ok(PathFunction { repr, range_clip })
    }

    pub fn wavelet(coeffs: WaveletCoeffs) -> Result<Self> {
        Self::new(PathRepr::Wavelet(coeffs), true)
    }

    pub fn grid(values: GridValues) -> Result<Self> {
        Self::new(PathRepr::Grid(values), true)
    }

    pub fn from_fn(r: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::grid(GridValues::from_fn(r, m, f))
    }

    pub fn constant(r: usize, c: f64) -> Result<Self> {
        Self::from_fn(r, 2, |_| c)
    }

    pub fn r(&self) -> usize {
        repr_r(&self.repr)
    }

    /// Value before range clipping. Inputs are clamped to `[-1,1]^r`.
    #[inline]
    pub fn eval_raw(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.r());
        match &self.repr {
            PathRepr::Wavelet(w) => w.eval(u),
            PathRepr::Grid(g) => g.eval(u),
        }
    }

    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        let v = self.eval_raw(u);
        if self.range_clip {
            v.clamp(-1.0, 1.0)
        } else {
            v
        }
    }

    /// Exact `sup |f|` of the unclipped path.
    pub fn sup_norm(&self) -> f64 {
        match &self.repr {
            PathRepr::Grid(g) => g.values.iter().fold(0.0, |a, v| a.max(v.abs())),
            PathRepr::Wavelet(w) => {
                let m = (1usize << (w.max_level() + 1)) + 1;
                grid_points(w.r, m).iter().fold(0.0, |a, p| a.max(w.eval(p).abs()))
            }
        }
    }

    pub fn wavelet_coeffs(&self) -> Option<&WaveletCoeffs> {
        match &self.repr {
            PathRepr::Wavelet(w) => Some(w),
            PathRepr::Grid(_) => None,
        }
    }
}

fn repr_r(repr: &PathRepr) -> usize {
    match repr {
        PathRepr::Wavelet(w) => w.r,
        PathRepr::Grid(g) => g.r,
    }
}

/// Bracket a fractional position in `[0, nodes-1]`.
#[inline]
fn locate(p: f64, nodes: usize) -> (usize, f64) {
    let p = p.clamp(0.0, (nodes - 1) as f64);
    let i = (p.floor() as usize).min(nodes - 2);
    (i, p - i as f64)
}

#[inline]
fn multilinear(values: &[f64], m: usize, pos: &[(usize, f64)]) -> f64 {
    let r = pos.len();
    let mut acc = 0.0;
    for corner in 0..(1usize << r) {
        let mut w = 1.0;
        let mut idx = 0;
        for (a, &(i, f)) in pos.iter().enumerate() {
            let bit = (corner >> (r - 1 - a)) & 1;
            w *= if bit == 1 { f } else { 1.0 - f };
            idx = idx * m + i + bit;
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

/// Tensor grid of `m` points per axis on `[-1,1]^r`, last axis fastest.
pub fn grid_points(r: usize, m: usize) -> Vec<Vec<f64>> {
    let total = m.pow(r as u32);
    let node = |k: usize| if m == 1 { 0.0 } else { -1.0 + 2.0 * k as f64 / (m - 1) as f64 };
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; r];
            for a in (0..r).rev() {
                p[a] = node(flat % m);
                flat /= m;
            }
            p
        })
        .collect()
}

/// `‖λ‖_{∞,∞,β} = sup_j 2^{j(β+r/2)} max_k |λ_{j,k}|`.
pub fn besov_norm(w: &WaveletCoeffs, beta: f64) -> f64 {
    let s = beta + w.r as f64 / 2.0;
    w.levels
        .iter()
        .enumerate()
        .map(|(i, lvl)| {
            let j = (i + 1) as f64;
            (j * s).exp2() * lvl.iter().fold(0.0f64, |a, v| a.max(v.abs()))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub value: f64,
    /// The grid spacing is too coarse to resolve the derivative terms reliably.
    pub coarse_grid: bool,
    /// β lies within 0.05 of an integer, where the weighting jumps.
    pub near_integer: bool,
}

/// Finite-difference surrogate of the Hölder norm
/// `2r Σ_{|a|<⌊β⌋} ‖∂^a f‖_∞ + 2^{β-⌊β⌋} Σ_{|a|=⌊β⌋} sup |∂^a f(x)-∂^a f(y)| / |x-y|_∞^{β-⌊β⌋}`
/// on a tensor grid of `grid_m` points per axis.
pub fn holder_norm_empirical(f: &PathFunction, beta: f64, grid_m: usize) -> Result<HolderEstimate> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::Domain(format!("grid Hölder surrogate needs 0 < beta <= 2, got {beta}")));
    }
    if grid_m < 8 {
        return Err(Error::Domain(format!("grid_m must be >= 8, got {grid_m}")));
    }
    let r = f.r();
    let total = grid_m.checked_pow(r as u32).filter(|&t| t <= HOLDER_MAX_POINTS);
    let Some(total) = total else {
        return Err(Error::Budget(format!("Hölder grid {grid_m}^{r} exceeds {HOLDER_MAX_POINTS} points")));
    };
    let pts = grid_points(r, grid_m);
    let vals: Vec<f64> = pts.iter().map(|p| f.eval_raw(p)).collect();
    debug_assert_eq!(vals.len(), total);
    let h = 2.0 / (grid_m - 1) as f64;
    let fl = beta.floor();
    let order = fl as usize;
    let frac = beta - fl;

    // multi-indices of order < ⌊β⌋ and = ⌊β⌋, as derivative tensors
    let mut lower: Vec<Vec<f64>> = Vec::new();
    let mut top: Vec<Vec<f64>> = Vec::new();
    match order {
        0 => top.push(vals),
        1 => {
            lower.push(vals.clone());
            for a in 0..r {
                top.push(diff_axis(&vals, grid_m, r, a, h));
            }
        }
        _ => {
            let first: Vec<Vec<f64>> = (0..r).map(|a| diff_axis(&vals, grid_m, r, a, h)).collect();
            lower.push(vals);
            for a in 0..r {
                for b in a..r {
                    top.push(diff_axis(&first[a], grid_m, r, b, h));
                }
            }
            lower.extend(first);
        }
    }
    let lower_sum: f64 = lower.iter().map(|d| d.iter().fold(0.0f64, |a, v| a.max(v.abs()))).sum();
    let top_sum: f64 = top.iter().map(|d| sup_quotient(d, grid_m, r, h, frac)).sum();
    let value = 2.0 * r as f64 * lower_sum + frac.exp2() * top_sum;
    Ok(HolderEstimate {
        value,
        coarse_grid: grid_m < 16 * (order + 1),
        near_integer: (beta - beta.round()).abs() < 0.05,
    })
}

/// Derivative along `axis`: central differences inside, second-order one-sided at the edges.
fn diff_axis(vals: &[f64], m: usize, r: usize, axis: usize, h: f64) -> Vec<f64> {
    let stride = m.pow((r - 1 - axis) as u32);
    let mut out = vec![0.0; vals.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let k = (flat / stride) % m;
        let at = |d: isize| vals[(flat as isize + d * stride as isize) as usize];
        *o = if m < 3 {
            if k == 0 { (at(1) - at(0)) / h } else { (at(0) - at(-1)) / h }
        } else if k == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if k == m - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        } else {
            (at(1) - at(-1)) / (2.0 * h)
        };
    }
    out
}

fn sup_quotient(vals: &[f64], m: usize, r: usize, h: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        return hi - lo;
    }
    let idx = |mut flat: usize| {
        let mut k = [0usize; 8];
        for a in (0..r).rev() {
            k[a] = flat % m;
            flat /= m;
        }
        k
    };
    let coords: Vec<[usize; 8]> = (0..vals.len()).map(idx).collect();
    let mut best = 0.0f64;
    for i in 0..vals.len() {
        for j in (i + 1)..vals.len() {
            let dist = (0..r).map(|a| coords[i][a].abs_diff(coords[j][a])).max().unwrap_or(0);
            let q = (vals[i] - vals[j]).abs() / (dist as f64 * h).powf(frac);
            best = best.max(q);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    BesovCoeffBall,
    EmpiricalHolder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSpec {
    pub beta: f64,
    pub r: usize,
    /// Radius of the smoothness ball (Besov radius or Hölder radius, by mode).
    pub k: f64,
    /// `2 ε_n(α_i, β_i, t_i)^{1/α_i}`.
    pub slack: f64,
    pub mode: ConditioningMode,
    #[serde(default = "default_sup_bound")]
    pub sup_bound: f64,
}

fn default_sup_bound() -> f64 {
    1.0
}

impl ConditioningSpec {
    pub fn check(&self) -> Result<()> {
        if !(self.slack > 0.0) || !(self.k > 0.0) || !(self.sup_bound >= 0.0) || !(self.beta > 0.0) {
            return Err(Error::Domain(format!(
                "conditioning needs slack > 0, k > 0, sup_bound >= 0 and beta > 0 (got {}, {}, {}, {})",
                self.slack, self.k, self.sup_bound, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub inside: bool,
    pub sup: f64,
    /// `sup_bound - sup`; negative when violated.
    pub sup_margin: f64,
    pub norm: f64,
    /// Allowed norm minus measured norm.
    pub norm_margin: f64,
    pub notes: Vec<String>,
}

/// Membership in the surrogate conditioning set: the sup ball intersected
/// with a Besov coefficient ball (wavelet paths) or an empirical Hölder ball
/// enlarged by the slack (grid paths).
pub fn in_conditioning_set(f: &PathFunction, spec: &ConditioningSpec) -> Result<ConditioningReport> {
    spec.check()?;
    if f.r() != spec.r {
        return Err(Error::Domain(format!("path has r = {}, spec has r = {}", f.r(), spec.r)));
    }
    let sup = f.sup_norm();
    let (norm, allowed, mut notes) = match (&f.repr, spec.mode) {
        (PathRepr::Wavelet(w), ConditioningMode::BesovCoeffBall) => (besov_norm(w, spec.beta), spec.k, Vec::new()),
        (PathRepr::Grid(g), ConditioningMode::EmpiricalHolder) => {
            let est = holder_norm_empirical(f, spec.beta.min(2.0), g.m)?;
            let mut notes = Vec::new();
            if est.coarse_grid {
                notes.push("grid coarse relative to beta".to_string());
            }
            if est.near_integer {
                notes.push("beta within 0.05 of an integer".to_string());
            }
            (est.value, spec.k + spec.slack, notes)
        }
        (_, mode) => return Err(Error::Domain(format!("conditioning mode {mode:?} does not match the path representation"))),
    };
    let sup_margin = spec.sup_bound - sup;
    let norm_margin = allowed - norm;
    if sup_margin < 0.0 {
        notes.push(format!("sup exceeds {} by {:.4}", spec.sup_bound, -sup_margin));
    }
    if norm_margin < 0.0 {
        notes.push(format!("norm exceeds {allowed:.4} by {:.4}", -norm_margin));
    }
    Ok(ConditioningReport { inside: sup_margin >= 0.0 && norm_margin >= 0.0, sup, sup_margin, norm, norm_margin, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub path: PathFunction,
    /// 1-based coordinates read by this component.
    pub active: Vec<usize>,
}

/// One layer `h_i = (h_{i1}, …, h_{i d_{i+1}})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFunction {
    pub in_dim: usize,
    pub components: Vec<Component>,
}

impl LayerFunction {
    pub fn new(in_dim: usize, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("layer needs at least one component"));
        }
        for (j, c) in components.iter().enumerate() {
            if c.active.is_empty() || c.active.iter().any(|&s| s == 0 || s > in_dim) {
                return Err(Error::Domain(format!("component {} reads coordinates {:?} outside 1..={in_dim}", j + 1, c.active)));
            }
            if c.path.r() != c.active.len() {
                return Err(Error::Domain(format!(
                    "component {} is {}-variate but reads {} coordinates",
                    j + 1,
                    c.path.r(),
                    c.active.len()
                )));
            }
        }
        Ok(LayerFunction { in_dim, components })
    }

    /// Layer of one path reading all coordinates.
    pub fn scalar(path: PathFunction) -> Self {
        let r = path.r();
        LayerFunction { in_dim: r, components: vec![Component { path, active: (1..=r).collect() }] }
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut sub = [0.0f64; 8];
        for c in &self.components {
            for (s, &a) in sub.iter_mut().zip(&c.active) {
                *s = x[a - 1];
            }
            out.push(c.path.eval(&sub[..c.active.len()]));
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.out_dim());
        self.eval_into(x, &mut out);
        out
    }
}

pub fn check_chain(layers: &[LayerFunction]) -> Result<()> {
    let last = layers.last().ok_or_else(|| Error::domain("empty layer chain"))?;
    for (i, w) in layers.windows(2).enumerate() {
        if w[0].out_dim() != w[1].in_dim {
            return Err(Error::Domain(format!(
                "layer {i} outputs {} values but layer {} reads {}",
                w[0].out_dim(),
                i + 1,
                w[1].in_dim
            )));
        }
    }
    if last.out_dim() != 1 {
        return Err(Error::Domain(format!("last layer outputs {} values, expected 1", last.out_dim())));
    }
    Ok(())
}

/// Evaluate `h_q ∘ … ∘ h_0` at one point; the chain must already be checked.
pub fn eval_chain(layers: &[LayerFunction], x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for l in layers {
        l.eval_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur[0]
}

/// Evaluate a chain whose last layer may have several outputs.
fn eval_partial(layers: &[LayerFunction], x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for l in layers {
        l.eval_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

pub fn compose(layers: &[LayerFunction], points: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_chain(layers)?;
    let d0 = layers[0].in_dim;
    points
        .iter()
        .map(|p| {
            if p.len() != d0 {
                return Err(Error::Domain(format!("point has {} coordinates, expected {d0}", p.len())));
            }
            if p.iter().any(|v| !(v.abs() <= 1.0)) {
                return Err(Error::Domain(format!("point {p:?} outside [-1,1]^{d0}")));
            }
            Ok(eval_chain(layers, p))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapBound {
    pub bound: f64,
    /// Grid estimates of `‖ |h_i - h̃_i|_∞ ‖_∞` per layer.
    pub layer_gaps: Vec<f64>,
}

/// Right-hand side `K^q Σ_i (η_i^{α_i} + ‖|h_i - h̃_i|_∞‖_∞^{α_i})`, with the per-layer
/// sup distances estimated on a tensor grid of `grid_m` points per axis.
pub fn composition_gap_bound(
    h: &[LayerFunction],
    h_tilde: &[LayerFunction],
    betas: &[f64],
    k: f64,
    slacks: &[f64],
    grid_m: usize,
) -> Result<GapBound> {
    check_chain(h)?;
    check_chain(h_tilde)?;
    if h.len() != h_tilde.len() || betas.len() != h.len() || slacks.len() != h.len() {
        return Err(Error::domain("layer, smoothness and slack counts differ"));
    }
    let alphas = alpha_exponents(betas)?;
    let q = h.len() - 1;
    let mut layer_gaps = Vec::with_capacity(h.len());
    let mut sum = 0.0;
    for i in 0..=q {
        if h[i].in_dim != h_tilde[i].in_dim || h[i].out_dim() != h_tilde[i].out_dim() {
            return Err(Error::Domain(format!("layer {i} shapes differ")));
        }
        let total = grid_m.checked_pow(h[i].in_dim as u32).filter(|&t| t <= 1 << 22);
        if total.is_none() {
            return Err(Error::Budget(format!("gap grid {grid_m}^{} too large", h[i].in_dim)));
        }
        let gap = grid_points(h[i].in_dim, grid_m)
            .iter()
            .map(|p| {
                h[i].eval(p).iter().zip(h_tilde[i].eval(p)).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            })
            .fold(0.0f64, f64::max);
        layer_gaps.push(gap);
        sum += slacks[i].powf(alphas[i]) + gap.powf(alphas[i]);
    }
    Ok(GapBound { bound: k.powi(q as i32) * sum, layer_gaps })
}

/// `max_x |h(x) - h̃(x)|` over the given points.
pub fn measured_gap(h: &[LayerFunction], h_tilde: &[LayerFunction], points: &[Vec<f64>]) -> Result<f64> {
    let a = compose(h, points)?;
    let b = compose(h_tilde, points)?;
    Ok(a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

/// Evaluate the first `upto` layers (a partial composite).
pub fn eval_prefix(layers: &[LayerFunction], upto: usize, x: &[f64]) -> Vec<f64> {
    eval_partial(&layers[..upto], x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveringReport {
    /// Size of the greedy δ-cover; an upper bound on `N(δ)` for the proxy class
    /// and, since its centers are δ-separated, a lower bound on `N(δ/2)`.
    pub cover: usize,
    pub class_size: usize,
    /// `Q₁(β,1,K) δ^{-1/β}`.
    pub log_bound: f64,
}

/// Brute-force covering number of a discretized Hölder proxy class on `[-1,1]`:
/// piecewise-linear functions on `discretization` uniform intervals whose knot
/// values are multiples of `δ/2` in `[-1,1]` and whose increments obey
/// `|v_{k+1} - v_k| ≤ K h^β`. Centers are chosen greedily in lexicographic order.
pub fn covering_number_oracle(beta: f64, k: f64, delta: f64, discretization: usize, budget: usize) -> Result<CoveringReport> {
    if !(beta > 0.0 && beta <= 1.0) || !(k > 0.0) || !(delta > 0.0) || discretization == 0 {
        return Err(Error::Domain(format!(
            "covering oracle needs 0 < beta <= 1, K > 0, delta > 0, discretization >= 1 (got {beta}, {k}, {delta}, {discretization})"
        )));
    }
    let quantum = delta / 2.0;
    let levels = (2.0 / quantum + 1e-9).floor() as usize + 1;
    if levels > 255 {
        return Err(Error::Budget(format!("delta {delta} gives {levels} value levels (max 255)")));
    }
    let h = 2.0 / discretization as f64;
    let max_step = (k * h.powf(beta) / quantum + 1e-9).floor() as usize;
    let knots = discretization + 1;

    // count first so the budget is enforced before enumerating
    let mut counts = vec![1u128; levels];
    for _ in 1..knots {
        counts = (0..levels)
            .map(|v| {
                let lo = v.saturating_sub(max_step);
                let hi = (v + max_step).min(levels - 1);
                counts[lo..=hi].iter().sum()
            })
            .collect();
    }
    let class_size: u128 = counts.iter().sum();
    if class_size > budget as u128 {
        return Err(Error::Budget(format!("proxy class has {class_size} members, budget {budget}")));
    }

    let mut centers: Vec<Vec<u8>> = Vec::new();
    let mut cur = vec![0u8; knots];
    // δ in units of the quantum is exactly 2
    fn visit(pos: usize, cur: &mut Vec<u8>, levels: usize, max_step: usize, centers: &mut Vec<Vec<u8>>) {
        if pos == cur.len() {
            let covered = centers.iter().any(|c| c.iter().zip(cur.iter()).all(|(&a, &b)| a.abs_diff(b) <= 2));
            if !covered {
                centers.push(cur.clone());
            }
            return;
        }
        let (lo, hi) = if pos == 0 {
            (0, levels - 1)
        } else {
            let prev = cur[pos - 1] as usize;
            (prev.saturating_sub(max_step), (prev + max_step).min(levels - 1))
        };
        for v in lo..=hi {
            cur[pos] = v as u8;
            visit(pos + 1, cur, levels, max_step, centers);
        }
    }
    visit(0, &mut cur, levels, max_step, &mut centers);
    Ok(CoveringReport {
        cover: centers.len(),
        class_size: class_size as usize,
        log_bound: crate::rates::entropy_constant_q1(beta, 1, k) * delta.powf(-1.0 / beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(a: f64) -> PathFunction {
        PathFunction::from_fn(1, 257, |u| a * u[0]).unwrap()
    }

    #[test]
    fn grid_interpolation_is_exact_on_linear() {
        let f = linear(0.5);
        for &u in &[-1.0, -0.33, 0.0, 0.71, 1.0] {
            assert!((f.eval(&[u]) - 0.5 * u).abs() < 1e-15);
        }
        let g = PathFunction::from_fn(2, 3, |u| u[0] - 2.0 * u[1] + 0.5 * u[0] * u[1]).unwrap();
        let (x, y) = (0.3, -0.8);
        assert!((g.eval_raw(&[x, y]) - (x - 2.0 * y + 0.5 * x * y)).abs() < 1e-14);
    }

    #[test]
    fn clipping() {
        let f = PathFunction::from_fn(1, 9, |u| 3.0 * u[0]).unwrap();
        assert_eq!(f.eval(&[1.0]), 1.0);
        assert_eq!(f.eval_raw(&[1.0]), 3.0);
        assert_eq!(f.sup_norm(), 3.0);
    }

    #[test]
    fn hat_levels_partition_unity() {
        for r in 1..=2 {
            let mut w = WaveletCoeffs::zeros(r, 3);
            w.levels[1].iter_mut().for_each(|v| *v = 0.25);
            let f = PathFunction::wavelet(w).unwrap();
            for p in grid_points(r, 7) {
                assert!((f.eval(&p) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wavelet_sup_is_exact() {
        let mut w = WaveletCoeffs::zeros(1, 2);
        w.levels[0] = vec![0.5, -0.2];
        w.levels[1] = vec![0.1, -0.3, 0.05, 0.2];
        let f = PathFunction::wavelet(w).unwrap();
        let dense = (0..=100_000).map(|i| f.eval_raw(&[-1.0 + 2.0 * i as f64 / 100_000.0]).abs()).fold(0.0, f64::max);
        assert!((f.sup_norm() - dense).abs() < 1e-12);
        // at x = 1/8, level 1 gives 0.5 and level 2 gives 0.1
        assert!((f.sup_norm() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn holder_examples() {
        let h = holder_norm_empirical(&linear(0.5), 1.0, 65).unwrap();
        assert!((h.value - 1.0).abs() < 1e-12);
        assert!(h.near_integer);
        let zero = PathFunction::constant(1, 0.0).unwrap();
        assert_eq!(holder_norm_empirical(&zero, 0.7, 16).unwrap().value, 0.0);
        let sq = PathFunction::from_fn(1, 257, |u| u[0] * u[0]).unwrap();
        let v = holder_norm_empirical(&sq, 1.0, 129).unwrap().value;
        assert!((v - 6.0).abs() < 0.3, "{v}");
        assert!(holder_norm_empirical(&sq, 2.5, 64).is_err());
        assert!(holder_norm_empirical(&sq, 1.0, 4).is_err());
    }

    #[test]
    fn holder_fractional() {
        // 2^{1/2} sup |x-y|/2 / |x-y|^{1/2} = 2^{1/2} (2)^{1/2}/2 = 1
        let v = holder_norm_empirical(&linear(0.5), 0.5, 33).unwrap().value;
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn holder_second_order() {
        // f = x²/4: 2(‖f‖ + ‖f'‖) + sup|f''(x) - f''(y)| = 2(1/4 + 1/2) + 0
        let f = PathFunction::from_fn(1, 513, |u| u[0] * u[0] / 4.0).unwrap();
        let v = holder_norm_empirical(&f, 2.0, 65).unwrap().value;
        assert!((v - 1.5).abs() < 1e-3, "{v}");
    }

    #[test]
    fn besov_examples() {
        let mut w = WaveletCoeffs::zeros(1, 3);
        assert_eq!(besov_norm(&w, 1.0), 0.0);
        w.levels[1][0] = 0.1;
        assert!((besov_norm(&w, 1.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn conditioning_examples() {
        let zero = PathFunction::wavelet(WaveletCoeffs::zeros(1, 3)).unwrap();
        let spec = ConditioningSpec { beta: 1.0, r: 1, k: 1.0, slack: 0.1, mode: ConditioningMode::BesovCoeffBall, sup_bound: 1.0 };
        assert!(in_conditioning_set(&zero, &spec).unwrap().inside);

        let mut w = WaveletCoeffs::zeros(1, 2);
        w.levels[0] = vec![0.6, 0.6];
        w.levels[1] = vec![0.3, 0.3, 0.3, 0.3];
        let f = PathFunction::wavelet(w).unwrap();
        let rep = in_conditioning_set(&f, &spec).unwrap();
        assert!((rep.sup - 0.9).abs() < 1e-12);
        assert!(!rep.inside && rep.norm_margin < 0.0);
        let wide = ConditioningSpec { k: 2.0 * rep.norm, ..spec.clone() };
        assert!(in_conditioning_set(&f, &wide).unwrap().inside);

        let big = PathFunction::from_fn(1, 17, |_| 1.2).unwrap();
        let hs = ConditioningSpec { mode: ConditioningMode::EmpiricalHolder, k: 10.0, ..spec.clone() };
        let rep = in_conditioning_set(&big, &hs).unwrap();
        assert!(!rep.inside);
        assert!(rep.notes.iter().any(|n| n.starts_with("sup exceeds 1 by 0.2")), "{:?}", rep.notes);
        assert!(in_conditioning_set(&big, &spec).is_err());
    }

    #[test]
    fn compose_examples() {
        let id = LayerFunction::scalar(linear(1.0));
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        assert_eq!(compose(&[id], &pts).unwrap(), vec![-1.0, 0.0, 1.0]);

        let h0 = LayerFunction::scalar(linear(0.5));
        let h1 = LayerFunction::scalar(PathFunction::from_fn(1, 5, |u| u[0] * u[0]).unwrap());
        assert!((compose(&[h0, h1], &[vec![1.0]]).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn compose_constant_figure2() {
        let c = 0.37;
        let sets0 = [vec![1, 3, 4], vec![1, 4, 5], vec![2]];
        let comps0 = sets0
            .iter()
            .map(|s| Component { path: PathFunction::constant(s.len(), c).unwrap(), active: s.clone() })
            .collect();
        let l0 = LayerFunction::new(5, comps0).unwrap();
        let l1 = LayerFunction::new(3, vec![Component { path: PathFunction::constant(3, c).unwrap(), active: vec![1, 2, 3] }]).unwrap();
        let pts: Vec<Vec<f64>> = (0..20).map(|i| (0..5).map(|a| ((i * 7 + a * 3) % 11) as f64 / 5.5 - 1.0).collect()).collect();
        assert!(compose(&[l0, l1], &pts).unwrap().iter().all(|&v| v == c));
    }

    #[test]
    fn compose_dimension_errors() {
        let l = LayerFunction::scalar(linear(1.0));
        assert!(compose(std::slice::from_ref(&l), &[vec![0.0, 0.0]]).is_err());
        let two = LayerFunction::new(1, vec![Component { path: linear(1.0), active: vec![1] }; 2]).unwrap();
        assert!(compose(&[two], &[vec![0.0]]).is_err());
        assert!(LayerFunction::new(1, vec![Component { path: linear(1.0), active: vec![2] }]).is_err());
    }

    #[test]
    fn gap_single_layer() {
        let h = [LayerFunction::scalar(linear(0.5))];
        let ht = [LayerFunction::scalar(PathFunction::from_fn(1, 257, |u| 0.5 * u[0] + 0.1).unwrap())];
        let b = composition_gap_bound(&h, &ht, &[1.0], 1.0, &[0.0], 101).unwrap();
        assert!((b.bound - 0.1).abs() < 1e-12);
        let pts = grid_points(1, 101);
        assert!((measured_gap(&h, &ht, &pts).unwrap() - 0.1).abs() < 1e-12);
        let same = composition_gap_bound(&h, &h, &[1.0], 1.0, &[0.0], 11).unwrap();
        assert_eq!(same.bound, 0.0);
    }

    #[test]
    fn covering_examples() {
        let r = covering_number_oracle(1.0, 1.0, 1.0, 8, 1_000_000).unwrap();
        assert_eq!(r.class_size, 5);
        assert!(r.cover <= 9 && r.cover >= 1);
        assert_eq!(covering_number_oracle(1.0, 1.0, 4.0, 8, 1_000).unwrap().cover, 1);
        let r = covering_number_oracle(1.0, 1.0, 0.5, 8, 1_000_000).unwrap();
        assert!((r.cover as f64).ln() <= r.log_bound);
        assert!(covering_number_oracle(1.0, 1.0, 0.5, 8, 10).is_err());
    }
}
