//! Areal adjacency graphs, hop-count distances and pairwise fusion weights.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;

use crate::error::{Error, Result};

/// Undirected simple graph over areal units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<String>,
}

impl SpatialGraph {
    /// Builds a graph from unordered vertex pairs. Duplicates (in either
    /// orientation) collapse to one edge; self pairs are rejected.
    pub fn from_edge_list(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();
        let labels = (0..n).map(|i| format!("{i}")).collect();
        Ok(Self { n, edges, labels })
    }

    /// Edge between every pair of points whose Euclidean distance is at most
    /// `threshold`.
    pub fn from_centroids(points: &[(f64, f64)], threshold: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 centroids, got {}",
                points.len()
            )));
        }
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "centroid threshold must be positive, got {threshold}"
            )));
        }
        let mut pairs = Vec::new();
        for (i, a) in points.iter().enumerate() {
            for (j, b) in points.iter().enumerate().skip(i + 1) {
                let dist = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                if dist <= threshold {
                    pairs.push((i, j));
                }
            }
        }
        Self::from_edge_list(points.len(), &pairs)
    }

    /// Rook (4-neighbour) lattice; vertex `r * cols + c` sits at row `r`,
    /// column `c`.
    pub fn lattice(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "lattice dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    pairs.push((v, v + 1));
                }
                if r + 1 < rows {
                    pairs.push((v, v + cols));
                }
            }
        }
        let mut g = Self::from_edge_list(rows * cols, &pairs)?;
        g.labels = (0..rows * cols)
            .map(|v| format!("r{}c{}", v / cols, v % cols))
            .collect();
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "vertex labels",
                expected: self.n,
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| *a == v || *b == v)
            .count()
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "permutation",
                expected: self.n,
                found: perm.len(),
            });
        }
        let pairs: Vec<_> = self
            .edges
            .iter()
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect();
        let mut labels = vec![String::new(); self.n];
        for (v, l) in self.labels.iter().enumerate() {
            labels[perm[v]] = l.clone();
        }
        Self::from_edge_list(self.n, &pairs)?.with_labels(labels)
    }
}

/// Hop-count distance between two vertices with no connecting path.
pub const UNREACHABLE: u32 = u32::MAX;

/// All-pairs shortest-path hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hop count, or [`UNREACHABLE`].
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn is_connected(&self) -> bool {
        !self.d.contains(&UNREACHABLE)
    }

    pub fn max_finite(&self) -> u32 {
        self.d
            .iter()
            .copied()
            .filter(|v| *v != UNREACHABLE)
            .max()
            .unwrap_or(0)
    }
}

/// Breadth-first search from every vertex.
pub fn all_pairs_distance(g: &SpatialGraph) -> DistanceMatrix {
    let n = g.n();
    let adj = g.neighbors();
    let mut d = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut d[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let next = row[u] + 1;
            for &v in &adj[u] {
                if row[v] == UNREACHABLE {
                    row[v] = next;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceMatrix { n, d }
}

/// How pairwise fusion weights are derived from graph distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    /// Every pair weighted 1: the unweighted pairwise fusion model.
    Constant,
    /// 1 for adjacent units, 0 otherwise.
    Adjacency,
    /// `exp(-d / r)`.
    Exponential,
    /// 1 for adjacent units, `exp(-d / r)` beyond.
    Adjusted,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 4] = [
        WeightScheme::Constant,
        WeightScheme::Adjacency,
        WeightScheme::Exponential,
        WeightScheme::Adjusted,
    ];

    pub fn uses_decay(self) -> bool {
        matches!(self, WeightScheme::Exponential | WeightScheme::Adjusted)
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Constant => "constant",
            WeightScheme::Adjacency => "adjacency",
            WeightScheme::Exponential => "exponential",
            WeightScheme::Adjusted => "adjusted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.name() == s)
    }

    /// Weight at hop distance `d >= 1`.
    pub fn weight_at(self, d: u32, r: f64) -> f64 {
        match (self, d) {
            (_, 0) => 0.0,
            (WeightScheme::Constant, _) => 1.0,
            (_, UNREACHABLE) => 0.0,
            (WeightScheme::Adjacency, 1) | (WeightScheme::Adjusted, 1) => 1.0,
            (WeightScheme::Adjacency, _) => 0.0,
            (WeightScheme::Exponential, d) | (WeightScheme::Adjusted, d) => (-(d as f64) / r).exp(),
        }
    }
}

/// Symmetric `n x n` fusion weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>,
    scheme: WeightScheme,
    r: f64,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Zeroes every weight strictly below `floor`.
    pub fn with_floor(mut self, floor: f64) -> Self {
        for v in &mut self.w {
            if *v < floor {
                *v = 0.0;
            }
        }
        self
    }

    /// Uniform weights over `n` units regardless of any graph.
    pub fn constant(n: usize) -> Self {
        let mut w = vec![1.0; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        Self {
            n,
            w,
            scheme: WeightScheme::Constant,
            r: f64::INFINITY,
        }
    }
}

/// Pairwise weights under `scheme` with decay `r` (ignored by the constant
/// and adjacency schemes).
pub fn weights(d: &DistanceMatrix, scheme: WeightScheme, r: f64) -> Result<WeightMatrix> {
    if scheme.uses_decay() && !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay r must be positive for the {} scheme, got {r}",
            scheme.name()
        )));
    }
    let n = d.n();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = scheme.weight_at(d.get(i, j), r);
            }
        }
    }
    Ok(WeightMatrix { n, w, scheme, r })
}
