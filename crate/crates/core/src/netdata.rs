//! Dynamic-network data: adjacency sequences, the DNET v1 text format and
//! the block-structured segment model.
//!
//! DNET v1 is line oriented:
//!
//! ```text
//! dnet v1 n=<int> T=<int>
//! <t> <i> <j>
//! ```
//!
//! Each body line is an undirected edge between nodes `i` and `j` in layer
//! `t`, all 1-based. Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::spectral::{subspace_distance_sq, SubspaceBasis, SymMatrix};

#[derive(Debug, Error)]
pub enum NetDataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("line {line}: node {node} out of range 1..={n}")]
    NodeOutOfRange { line: usize, node: usize, n: usize },
    #[error("line {line}: layer {layer} out of range 1..={t_len}")]
    LayerOutOfRange {
        line: usize,
        layer: usize,
        t_len: usize,
    },
    #[error("invalid graph sequence: {0}")]
    Invalid(String),
    #[error("invalid segment model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl NetDataError {
    /// 1-based input line the error refers to, when it came from parsing.
    pub fn line(&self) -> Option<usize> {
        match self {
            NetDataError::Parse { line, .. }
            | NetDataError::SelfLoop { line, .. }
            | NetDataError::NodeOutOfRange { line, .. }
            | NetDataError::LayerOutOfRange { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One undirected, unweighted, hollow graph layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    /// Sorted, deduplicated `(i, j)` pairs with `i < j`.
    edges: Vec<(u32, u32)>,
    neighbors: Vec<Vec<u32>>,
}

impl Layer {
    fn from_sorted_edges(n: usize, edges: Vec<(u32, u32)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i as usize].push(j);
            neighbors[j as usize].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Self { edges, neighbors }
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.neighbors[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Ordered layers on a fixed node set. Layers are stored 0-based; `T >= 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSequence {
    n: usize,
    layers: Vec<Layer>,
}

impl GraphSequence {
    /// Builds a sequence from 0-based edge lists, one list per layer. Edges
    /// are symmetrized and deduplicated.
    pub fn new(n: usize, layers: Vec<Vec<(usize, usize)>>) -> Result<Self, NetDataError> {
        if n == 0 {
            return Err(NetDataError::Invalid("n must be at least 1".into()));
        }
        if layers.is_empty() {
            return Err(NetDataError::Invalid("T must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(layers.len());
        for (t, edges) in layers.into_iter().enumerate() {
            let mut canon = Vec::with_capacity(edges.len());
            for (i, j) in edges {
                if i >= n || j >= n {
                    return Err(NetDataError::Invalid(format!(
                        "layer {}: node index out of range in edge ({i}, {j})",
                        t + 1
                    )));
                }
                if i == j {
                    return Err(NetDataError::Invalid(format!(
                        "layer {}: self-loop on node {i}",
                        t + 1
                    )));
                }
                canon.push((i.min(j) as u32, i.max(j) as u32));
            }
            canon.sort_unstable();
            canon.dedup();
            out.push(Layer::from_sorted_edges(n, canon));
        }
        Ok(Self { n, layers: out })
    }

    /// Builds a sequence from dense 0/1 adjacency predicates.
    pub fn from_fn(
        n: usize,
        t_len: usize,
        mut edge: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self, NetDataError> {
        let layers = (0..t_len)
            .map(|t| {
                let mut e = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if edge(t, i, j) {
                            e.push((i, j));
                        }
                    }
                }
                e
            })
            .collect();
        Self::new(n, layers)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of layers `T`.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Layer by 0-based position.
    pub fn layer(&self, index: usize) -> &Layer {
        &self.layers[index]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_edges(&self) -> usize {
        self.layers.iter().map(Layer::edge_count).sum()
    }

    /// Dense 0/1 adjacency matrix of a layer (0-based position).
    pub fn adjacency(&self, index: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.layers[index].edges {
            m[(i as usize, j as usize)] = 1.0;
            m[(j as usize, i as usize)] = 1.0;
        }
        SymMatrix::from_symmetric_unchecked(m)
    }

    /// `A² − diag(A·1)` for one layer, from common-neighbor counts. The
    /// diagonal is exactly zero because `(A²)ᵢᵢ` equals the degree.
    pub fn debiased_square(&self, index: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        for nb in &self.layers[index].neighbors {
            for (a, &i) in nb.iter().enumerate() {
                for &j in &nb[a + 1..] {
                    m[(i as usize, j as usize)] += 1.0;
                    m[(j as usize, i as usize)] += 1.0;
                }
            }
        }
        SymMatrix::from_symmetric_unchecked(m)
    }

    /// Canonical DNET v1 text: edges sorted by `(t, i, j)` with `i < j`.
    pub fn to_dnet(&self) -> String {
        let mut s = format!("dnet v1 n={} T={}\n", self.n, self.len());
        for (t, layer) in self.layers.iter().enumerate() {
            for &(i, j) in &layer.edges {
                let _ = writeln!(s, "{} {} {}", t + 1, i + 1, j + 1);
            }
        }
        s
    }
}

fn parse_field(tok: &str, line: usize, what: &str) -> Result<usize, NetDataError> {
    tok.parse::<usize>().map_err(|_| NetDataError::Parse {
        line,
        message: format!("invalid {what} {tok:?}"),
    })
}

fn parse_header(text: &str, line: usize) -> Result<(usize, usize), NetDataError> {
    let bad = |message: String| NetDataError::Parse { line, message };
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "dnet" {
        return Err(bad(format!(
            "expected header `dnet v1 n=<int> T=<int>`, found {text:?}"
        )));
    }
    if toks[1] != "v1" {
        return Err(bad(format!("unsupported DNET version {:?}", toks[1])));
    }
    let n = toks[2]
        .strip_prefix("n=")
        .ok_or_else(|| bad(format!("expected `n=<int>`, found {:?}", toks[2])))?;
    let t = toks[3]
        .strip_prefix("T=")
        .ok_or_else(|| bad(format!("expected `T=<int>`, found {:?}", toks[3])))?;
    let n = parse_field(n, line, "node count")?;
    let t = parse_field(t, line, "layer count")?;
    if n == 0 {
        return Err(bad("node count must be at least 1".into()));
    }
    if t == 0 {
        return Err(bad("layer count must be at least 1".into()));
    }
    Ok((n, t))
}

/// Parses and validates a DNET v1 stream.
pub fn parse_graph_sequence<R: BufRead>(reader: R) -> Result<GraphSequence, NetDataError> {
    let mut header: Option<(usize, usize)> = None;
    let mut layers: Vec<Vec<(u32, u32)>> = Vec::new();
    for (idx, raw) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw?;
        let mut text = raw.strip_suffix('\r').unwrap_or(&raw);
        if line_no == 1 {
            text = text.strip_prefix('\u{feff}').unwrap_or(text);
        }
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((n, t_len)) = header else {
            let h = parse_header(trimmed, line_no)?;
            header = Some(h);
            layers = vec![Vec::new(); h.1];
            continue;
        };
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(NetDataError::Parse {
                line: line_no,
                message: format!("expected `<t> <i> <j>`, found {trimmed:?}"),
            });
        }
        let t = parse_field(toks[0], line_no, "layer index")?;
        let i = parse_field(toks[1], line_no, "node index")?;
        let j = parse_field(toks[2], line_no, "node index")?;
        if t == 0 || t > t_len {
            return Err(NetDataError::LayerOutOfRange {
                line: line_no,
                layer: t,
                t_len,
            });
        }
        for node in [i, j] {
            if node == 0 || node > n {
                return Err(NetDataError::NodeOutOfRange {
                    line: line_no,
                    node,
                    n,
                });
            }
        }
        if i == j {
            return Err(NetDataError::SelfLoop {
                line: line_no,
                node: i,
            });
        }
        let (a, b) = (i.min(j) - 1, i.max(j) - 1);
        layers[t - 1].push((a as u32, b as u32));
    }
    let (n, _) = header.ok_or(NetDataError::Parse {
        line: 1,
        message: "missing `dnet v1` header".into(),
    })?;
    let layers = layers
        .into_iter()
        .map(|mut e| {
            e.sort_unstable();
            e.dedup();
            Layer::from_sorted_edges(n, e)
        })
        .collect();
    Ok(GraphSequence { n, layers })
}

pub fn parse_graph_sequence_str(text: &str) -> Result<GraphSequence, NetDataError> {
    parse_graph_sequence(text.as_bytes())
}

/// `max_{i<j} Σ_t A_ijt / T`, the plug-in sparsity estimate.
pub fn sequence_sparsity_estimate(g: &GraphSequence) -> f64 {
    let n = g.n();
    let mut counts = vec![0u32; n * n];
    let mut best = 0u32;
    for layer in g.layers() {
        for &(i, j) in layer.edges() {
            let c = &mut counts[i as usize * n + j as usize];
            *c += 1;
            best = best.max(*c);
        }
    }
    f64::from(best) / g.len() as f64
}

/// Piecewise-subspace model `P_t = ρ V⁽ᵏ⁾ M_t V⁽ᵏ⁾ᵀ` for `t` in segment `k`.
#[derive(Clone, Debug)]
pub struct SegmentModel {
    change_points: Vec<usize>,
    bases: Vec<SubspaceBasis>,
    core_matrices: Vec<DMatrix<f64>>,
    sparsity: f64,
}

const PROBABILITY_SLACK: f64 = 1e-12;

impl SegmentModel {
    /// `change_points` are 1-based and strictly increasing in `(1, T)`;
    /// segment `k` covers `[τ_k, τ_{k+1})`. `core_matrices[t-1]` is `M_t`.
    pub fn new(
        change_points: Vec<usize>,
        bases: Vec<SubspaceBasis>,
        core_matrices: Vec<DMatrix<f64>>,
        sparsity: f64,
    ) -> Result<Self, NetDataError> {
        let invalid = |m: String| Err(NetDataError::InvalidModel(m));
        let t_len = core_matrices.len();
        if t_len == 0 {
            return invalid("at least one layer is required".into());
        }
        if !(sparsity > 0.0 && sparsity <= 1.0) {
            return invalid(format!("sparsity {sparsity} not in (0, 1]"));
        }
        if change_points.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("change points must be strictly increasing".into());
        }
        if change_points.iter().any(|&c| c <= 1 || c >= t_len) {
            return invalid(format!("change points must lie in (1, {t_len})"));
        }
        if bases.len() != change_points.len() + 1 {
            return invalid(format!(
                "expected {} segment bases, got {}",
                change_points.len() + 1,
                bases.len()
            ));
        }
        let n = bases[0].n();
        if bases.iter().any(|b| b.n() != n) {
            return invalid("segment bases have different ambient dimensions".into());
        }
        for w in bases.windows(2) {
            let d = subspace_distance_sq(&w[0], &w[1])
                .map_err(|e| NetDataError::InvalidModel(e.to_string()))?;
            if d <= 1e-12 {
                return invalid("consecutive segments share the same subspace".into());
            }
        }
        let model = Self {
            change_points,
            bases,
            core_matrices,
            sparsity,
        };
        for t in 1..=t_len {
            let k = model.segment_of(t);
            let m = &model.core_matrices[t - 1];
            let r = model.bases[k].rank();
            if m.nrows() != r || m.ncols() != r {
                return invalid(format!("M_{t} must be {r}x{r}"));
            }
            let p = model.probability(t);
            let (lo, hi) = p
                .as_matrix()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if lo < -PROBABILITY_SLACK || hi > 1.0 + PROBABILITY_SLACK {
                return invalid(format!("P_{t} has entries outside [0, 1]"));
            }
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.bases[0].n()
    }

    pub fn len(&self) -> usize {
        self.core_matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.core_matrices.is_empty()
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn bases(&self) -> &[SubspaceBasis] {
        &self.bases
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    /// Segment index (0-based) containing the 1-based time `t`.
    pub fn segment_of(&self, t: usize) -> usize {
        self.change_points.partition_point(|&c| c <= t)
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.bases.iter().map(SubspaceBasis::rank).collect()
    }

    pub fn core_matrix(&self, t: usize) -> &DMatrix<f64> {
        &self.core_matrices[t - 1]
    }

    /// `P_t` for 1-based `t`.
    pub fn probability(&self, t: usize) -> SymMatrix {
        let v = self.bases[self.segment_of(t)].columns();
        let m = &self.core_matrices[t - 1];
        SymMatrix::symmetrize(v * m * v.transpose() * self.sparsity)
    }
}
