//! Composition graphs `λ = (q, d, t, S)` and structures `η = (λ, β)`.
//!
//! Active sets use 1-based coordinate indices, as in the JSON interchange
//! format. A graph with `q` hidden compositions has `q + 1` layers; layer `i`
//! maps `[-1,1]^{d_i}` to `[-1,1]^{d_{i+1}}` and component `j` of layer `i`
//! reads only the coordinates in `S_ij`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionGraph {
    pub q: usize,
    /// `(d_0, ..., d_{q+1})`, with `d_{q+1} = 1`.
    pub dims: Vec<usize>,
    /// `(t_0, ..., t_q, 1)`.
    pub eff_dims: Vec<usize>,
    /// `active_sets[i][j]` is `S_{i,j+1}`, sorted and 1-based.
    pub active_sets: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthMismatch(String),
    OutputDimNotOne(usize),
    ZeroDim { layer: usize },
    ZeroEffDim { layer: usize },
    EffDimMismatch { layer: usize, stated: usize, max: usize },
    WrongComponentCount { layer: usize, expected: usize, found: usize },
    EmptySet { layer: usize, component: usize },
    UnsortedOrDuplicate { layer: usize, component: usize },
    IndexOutOfRange { layer: usize, component: usize, index: usize, dim: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch(m) => write!(f, "length mismatch: {m}"),
            Violation::OutputDimNotOne(d) => write!(f, "d_(q+1) = {d}, expected 1"),
            Violation::ZeroDim { layer } => write!(f, "d_{layer} = 0"),
            Violation::ZeroEffDim { layer } => write!(f, "t_{layer} = 0"),
            Violation::EffDimMismatch { layer, stated, max } => {
                write!(f, "t_{layer} != max_j |S_{layer}j| ({stated} vs {max})")
            }
            Violation::WrongComponentCount { layer, expected, found } => write!(
                f,
                "layer {layer} has {found} active sets, expected d_{} = {expected}",
                layer + 1
            ),
            Violation::EmptySet { layer, component } => {
                write!(f, "S_{layer},{} is empty", component + 1)
            }
            Violation::UnsortedOrDuplicate { layer, component } => {
                write!(f, "S_{layer},{} is not sorted and duplicate-free", component + 1)
            }
            Violation::IndexOutOfRange { layer, component, index, dim } => write!(
                f,
                "S_{layer},{} contains {index}, outside [1, {dim}]",
                component + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl CompositionGraph {
    /// Build a graph from hidden dimensions and active sets, deriving `t`.
    ///
    /// `active_sets` are sorted and deduplicated; the result is validated.
    pub fn new(dims: Vec<usize>, mut active_sets: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::domain("dims must contain at least d_0 and d_(q+1)"));
        }
        for layer in active_sets.iter_mut() {
            for set in layer.iter_mut() {
                set.sort_unstable();
                set.dedup();
            }
        }
        let q = dims.len() - 2;
        let mut eff_dims: Vec<usize> = active_sets
            .iter()
            .map(|layer| layer.iter().map(Vec::len).max().unwrap_or(0))
            .collect();
        eff_dims.push(1);
        let g = CompositionGraph { q, dims, eff_dims, active_sets };
        let report = validate_graph(&g);
        if !report.ok() {
            let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(Error::Domain(format!("invalid graph: {}", msgs.join("; "))));
        }
        Ok(g)
    }

    /// The single-layer graph reading coordinates `active` of a `d_0`-dimensional input.
    pub fn single_layer(input_dim: usize, active: Vec<usize>) -> Result<Self> {
        Self::new(vec![input_dim, 1], vec![vec![active]])
    }

    /// `|d|_1 = 1 + Σ_{i=0}^q d_i`.
    pub fn node_count(&self) -> usize {
        1 + self.dims.iter().take(self.q + 1).sum::<usize>()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> usize {
        self.q + 1
    }
}

/// Check every graph invariant; violations are reported, not raised.
pub fn validate_graph(g: &CompositionGraph) -> ValidationReport {
    let mut v = Vec::new();
    let q = g.q;
    if g.dims.len() != q + 2 {
        v.push(Violation::LengthMismatch(format!(
            "dims has {} entries, expected q+2 = {}",
            g.dims.len(),
            q + 2
        )));
    }
    if g.eff_dims.len() != q + 2 {
        v.push(Violation::LengthMismatch(format!(
            "eff_dims has {} entries, expected q+2 = {}",
            g.eff_dims.len(),
            q + 2
        )));
    }
    if g.active_sets.len() != q + 1 {
        v.push(Violation::LengthMismatch(format!(
            "active_sets has {} layers, expected q+1 = {}",
            g.active_sets.len(),
            q + 1
        )));
    }
    if !v.is_empty() {
        return ValidationReport { violations: v };
    }
    if g.dims[q + 1] != 1 {
        v.push(Violation::OutputDimNotOne(g.dims[q + 1]));
    }
    if g.eff_dims[q + 1] != 1 {
        v.push(Violation::LengthMismatch(format!(
            "t_(q+1) = {}, expected 1",
            g.eff_dims[q + 1]
        )));
    }
    for (i, &d) in g.dims.iter().enumerate() {
        if d == 0 {
            v.push(Violation::ZeroDim { layer: i });
        }
    }
    for (i, &t) in g.eff_dims.iter().enumerate() {
        if t == 0 {
            v.push(Violation::ZeroEffDim { layer: i });
        }
    }
    for (i, layer) in g.active_sets.iter().enumerate() {
        if layer.len() != g.dims[i + 1] {
            v.push(Violation::WrongComponentCount {
                layer: i,
                expected: g.dims[i + 1],
                found: layer.len(),
            });
        }
        for (j, set) in layer.iter().enumerate() {
            if set.is_empty() {
                v.push(Violation::EmptySet { layer: i, component: j });
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                v.push(Violation::UnsortedOrDuplicate { layer: i, component: j });
            }
            for &idx in set {
                if idx == 0 || idx > g.dims[i] {
                    v.push(Violation::IndexOutOfRange {
                        layer: i,
                        component: j,
                        index: idx,
                        dim: g.dims[i],
                    });
                }
            }
        }
        let max = layer.iter().map(Vec::len).max().unwrap_or(0);
        if g.eff_dims[i] != max {
            v.push(Violation::EffDimMismatch { layer: i, stated: g.eff_dims[i], max });
        }
    }
    ValidationReport { violations: v }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructureWire", into = "StructureWire")]
pub struct CompositionStructure {
    pub graph: CompositionGraph,
    pub betas: Vec<f64>,
    pub beta_bounds: (f64, f64),
}

/// Flat JSON layout: graph fields next to `betas` and `beta_bounds`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureWire {
    q: usize,
    dims: Vec<usize>,
    eff_dims: Vec<usize>,
    active_sets: Vec<Vec<Vec<usize>>>,
    betas: Vec<f64>,
    beta_bounds: (f64, f64),
}

impl TryFrom<StructureWire> for CompositionStructure {
    type Error = Error;

    fn try_from(w: StructureWire) -> Result<Self> {
        let graph = CompositionGraph { q: w.q, dims: w.dims, eff_dims: w.eff_dims, active_sets: w.active_sets };
        CompositionStructure::new(graph, w.betas, w.beta_bounds)
    }
}

impl From<CompositionStructure> for StructureWire {
    fn from(s: CompositionStructure) -> Self {
        let g = s.graph;
        StructureWire {
            q: g.q,
            dims: g.dims,
            eff_dims: g.eff_dims,
            active_sets: g.active_sets,
            betas: s.betas,
            beta_bounds: s.beta_bounds,
        }
    }
}

impl CompositionStructure {
    pub fn new(graph: CompositionGraph, betas: Vec<f64>, beta_bounds: (f64, f64)) -> Result<Self> {
        let s = CompositionStructure { graph, betas, beta_bounds };
        s.check()?;
        Ok(s)
    }

    /// Validate both the graph and the smoothness vector.
    pub fn check(&self) -> Result<()> {
        let report = validate_graph(&self.graph);
        if !report.ok() {
            let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(Error::Domain(format!("invalid graph: {}", msgs.join("; "))));
        }
        let (lo, hi) = self.beta_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("invalid beta bounds ({lo}, {hi})")));
        }
        if self.betas.len() != self.graph.q + 1 {
            return Err(Error::Domain(format!(
                "expected {} smoothness indices, got {}",
                self.graph.q + 1,
                self.betas.len()
            )));
        }
        if let Some(b) = self.betas.iter().find(|&&b| !(b >= lo && b <= hi)) {
            return Err(Error::Domain(format!("beta {b} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.graph.q
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// `(t_0, ..., t_q)` without the trailing output 1.
    pub fn layer_eff_dims(&self) -> &[usize] {
        &self.graph.eff_dims[..=self.graph.q]
    }
}

/// Truncation of the (countably infinite) graph space for enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpace {
    pub input_dim: usize,
    pub max_q: usize,
    pub max_width: usize,
    pub max_nodes: usize,
    pub beta_bounds: (f64, f64),
    #[serde(default = "default_count_limit")]
    pub count_limit: usize,
}

fn default_count_limit() -> usize {
    200_000
}

impl StructureSpace {
    pub fn new(input_dim: usize, max_q: usize, max_width: usize, max_nodes: usize, beta_bounds: (f64, f64)) -> Self {
        StructureSpace {
            input_dim,
            max_q,
            max_width,
            max_nodes,
            beta_bounds,
            count_limit: default_count_limit(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.input_dim == 0 || self.max_width == 0 || self.max_nodes == 0 {
            return Err(Error::domain("structure space caps must be positive"));
        }
        let (lo, hi) = self.beta_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("invalid beta bounds ({lo}, {hi})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub structures: Vec<CompositionStructure>,
    pub notes: Vec<String>,
}

/// Nonempty subsets of `{1..n}` as sorted vectors, in lexicographic order.
fn nonempty_subsets(n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for x in start..=n {
            cur.push(x);
            out.push(cur.clone());
            rec(x + 1, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, &mut Vec::new(), &mut out);
    out
}

/// Lexicographic odometer over `radices`, calling `f` on each tuple.
fn for_each_tuple(radices: &[usize], mut f: impl FnMut(&[usize])) {
    if radices.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; radices.len()];
    loop {
        f(&idx);
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radices[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Hidden dimension vectors `(d_1..d_q)` admissible under the caps, in lexicographic order.
fn hidden_dims(space: &StructureSpace, q: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_tuple(&vec![space.max_width; q], |t| {
        let mut dims = Vec::with_capacity(q + 2);
        dims.push(space.input_dim);
        dims.extend(t.iter().map(|&x| x + 1));
        dims.push(1);
        if 1 + dims[..=q].iter().sum::<usize>() <= space.max_nodes {
            out.push(dims);
        }
    });
    out
}

/// Enumerate all graphs within the caps (without smoothness).
pub fn enumerate_graphs(space: &StructureSpace) -> Result<Vec<CompositionGraph>> {
    space.check()?;
    let mut out = Vec::new();
    for q in 0..=space.max_q {
        for dims in hidden_dims(space, q) {
            // one slot per (layer, component); layer i draws from subsets of {1..d_i}
            let slot_subsets: Vec<Vec<Vec<usize>>> = (0..=q)
                .flat_map(|i| std::iter::repeat_n(nonempty_subsets(dims[i]), dims[i + 1]))
                .collect();
            let radices: Vec<usize> = slot_subsets.iter().map(Vec::len).collect();
            let count = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
            match count {
                Some(c) if out.len().saturating_add(c) <= space.count_limit => {}
                _ => return Err(Error::SpaceTooLarge { limit: space.count_limit }),
            }
            for_each_tuple(&radices, |choice| {
                let mut slot = 0;
                let mut sets = Vec::with_capacity(q + 1);
                for i in 0..=q {
                    let mut layer = Vec::with_capacity(dims[i + 1]);
                    for _ in 0..dims[i + 1] {
                        layer.push(slot_subsets[slot][choice[slot]].clone());
                        slot += 1;
                    }
                    sets.push(layer);
                }
                let g = CompositionGraph::new(dims.clone(), sets).expect("enumerated graph is valid");
                out.push(g);
            });
        }
    }
    Ok(out)
}

/// Enumerate every structure in the truncated space with `β` on the given grid.
///
/// The same grid is used for every layer. Output order is lexicographic in
/// `(q, d, S, β)`.
pub fn enumerate_structures(space: &StructureSpace, beta_grid: &[f64]) -> Result<Enumeration> {
    space.check()?;
    let (lo, hi) = space.beta_bounds;
    if beta_grid.is_empty() {
        return Err(Error::domain("beta grid is empty"));
    }
    if let Some(b) = beta_grid.iter().find(|&&b| !(b >= lo && b <= hi)) {
        return Err(Error::Domain(format!("beta grid value {b} outside [{lo}, {hi}]")));
    }
    let mut grid = beta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let graphs = enumerate_graphs(space)?;
    let mut structures = Vec::new();
    for g in graphs {
        let layers = g.q + 1;
        let count = grid.len().checked_pow(layers as u32);
        match count {
            Some(c) if structures.len() + c <= space.count_limit => {}
            _ => return Err(Error::SpaceTooLarge { limit: space.count_limit }),
        }
        for_each_tuple(&vec![grid.len(); layers], |choice| {
            let betas = choice.iter().map(|&k| grid[k]).collect();
            structures.push(CompositionStructure {
                graph: g.clone(),
                betas,
                beta_bounds: space.beta_bounds,
            });
        });
    }
    let mut notes = Vec::new();
    if structures.is_empty() {
        notes.push(format!(
            "no admissible graph: the smallest graph has |d|_1 = {} > max_nodes = {}",
            1 + space.input_dim,
            space.max_nodes
        ));
    }
    Ok(Enumeration { structures, notes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub structure: CompositionStructure,
    /// False when the merge preconditions (β₊ ≤ 1, K = 1) fail; the input is then returned unchanged.
    pub applicable: bool,
    /// Layers removed, in the order they were collapsed (indices in the graph at removal time).
    pub removed: Vec<usize>,
}

/// Collapse redundant layers: while some `j ≥ 1` has `t_j = t_{j-1} = 1`,
/// merge `h_j ∘ h_{j-1}` into one layer with smoothness `β_{j-1} β_j`.
pub fn reduce_redundant(eta: &CompositionStructure, holder_radius: f64) -> Reduction {
    let applicable = eta.beta_bounds.1 <= 1.0 && holder_radius == 1.0;
    if !applicable {
        return Reduction { structure: eta.clone(), applicable, removed: vec![] };
    }
    let mut cur = eta.clone();
    let mut removed = Vec::new();
    while let Some(j) = (1..=cur.graph.q)
        .rev()
        .find(|&j| cur.graph.eff_dims[j] == 1 && cur.graph.eff_dims[j - 1] == 1)
    {
        cur = collapse_layer(&cur, j);
        removed.push(j);
    }
    Reduction { structure: cur, applicable, removed }
}

fn collapse_layer(eta: &CompositionStructure, j: usize) -> CompositionStructure {
    let g = &eta.graph;
    // t_j = 1: component k of layer j reads the single coordinate m of layer j-1's output.
    let merged: Vec<Vec<usize>> = g.active_sets[j]
        .iter()
        .map(|s| g.active_sets[j - 1][s[0] - 1].clone())
        .collect();
    let mut dims = g.dims.clone();
    dims.remove(j);
    let mut eff = g.eff_dims.clone();
    eff.remove(j);
    let mut sets = g.active_sets.clone();
    sets[j - 1] = merged;
    sets.remove(j);
    let mut betas = eta.betas.clone();
    betas[j - 1] *= betas[j];
    betas.remove(j);
    let mut bounds = eta.beta_bounds;
    // β_{j-1}β_j may fall below β₋; widen the lower bound so the structure stays valid.
    bounds.0 = bounds.0.min(betas[j - 1]);
    CompositionStructure {
        graph: CompositionGraph { q: g.q - 1, dims, eff_dims: eff, active_sets: sets },
        betas,
        beta_bounds: bounds,
    }
}
