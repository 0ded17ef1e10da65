//! Cluster extraction from fused coefficient differences and the partition
//! and estimation metrics used to score fits against ground truth.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::solver::FitResult;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` when `a` and `b` were in different components.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Component labels numbered by first appearance.
    pub fn labels(&mut self) -> ClusterLabels {
        let roots: Vec<usize> = (0..self.parent.len()).map(|i| self.find(i)).collect();
        ClusterLabels::from_raw(&roots)
    }
}

/// Cluster assignment using exactly the labels `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    /// Relabels arbitrary ids so clusters are numbered in order of their
    /// smallest member.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            let id = match map.iter().find(|(k, _)| *k == r) {
                Some(&(_, id)) => id,
                None => {
                    map.push((r, map.len()));
                    map.len() - 1
                }
            };
            labels.push(id);
        }
        Self {
            labels,
            k: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Connected components of the fused-pair graph.
pub fn extract_clusters(fit: &FitResult, n: usize) -> ClusterLabels {
    clusters_from_pairs(n, &fit.fused_pairs)
}

pub fn clusters_from_pairs(n: usize, pairs: &[(usize, usize)]) -> ClusterLabels {
    let mut uf = UnionFind::new(n);
    for &(i, j) in pairs {
        uf.union(i, j);
    }
    uf.labels()
}

/// Default relative tolerance for [`clusters_from_coefficients`].
pub const COEFFICIENT_RTOL: f64 = 1e-4;

/// Groups rows of an externally supplied coefficient matrix whose
/// difference norm is within `rtol` of the larger row norm (transitively).
pub fn clusters_from_coefficients(beta: &DMatrix<f64>, rtol: f64) -> ClusterLabels {
    let n = beta.nrows();
    let norms: Vec<f64> = beta.row_iter().map(|r| r.norm()).collect();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let diff = (beta.row(i) - beta.row(j)).norm();
            if diff <= rtol * norms[i].max(norms[j]) {
                uf.union(i, j);
            }
        }
    }
    uf.labels()
}

fn check_same_n(truth: &ClusterLabels, est: &ClusterLabels) -> Result<()> {
    if truth.n() != est.n() {
        return Err(Error::DimensionMismatch {
            what: "cluster labelings",
            expected: truth.n(),
            found: est.n(),
        });
    }
    Ok(())
}

/// Fraction of unit pairs on which the two partitions agree (together in
/// both, or apart in both).
pub fn rand_index(truth: &ClusterLabels, est: &ClusterLabels) -> Result<f64> {
    check_same_n(truth, est)?;
    let n = truth.n();
    if n < 2 {
        return Err(Error::InvalidParameter("Rand index needs n >= 2".into()));
    }
    let (t, e) = (truth.labels(), est.labels());
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if (t[i] == t[j]) == (e[i] == e[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Fraction of units labelled correctly under the best one-to-one matching
/// of estimated clusters to true clusters.
pub fn clustering_accuracy(truth: &ClusterLabels, est: &ClusterLabels) -> Result<f64> {
    check_same_n(truth, est)?;
    if truth.n() == 0 {
        return Err(Error::Empty("cluster labelings"));
    }
    let mut overlap = vec![vec![0i64; est.k()]; truth.k()];
    for (&t, &e) in truth.labels().iter().zip(est.labels()) {
        overlap[t][e] += 1;
    }
    let (matched, _) = max_weight_assignment(&overlap);
    Ok(matched as f64 / truth.n() as f64)
}

/// Mean estimated cluster count divided by the true count.
pub fn relative_cluster_count(estimated_counts: &[usize], true_count: usize) -> Result<f64> {
    if estimated_counts.is_empty() {
        return Err(Error::Empty("estimated cluster counts"));
    }
    if true_count == 0 {
        return Err(Error::InvalidParameter(
            "true cluster count must be >= 1".into(),
        ));
    }
    let mean = estimated_counts.iter().sum::<usize>() as f64 / estimated_counts.len() as f64;
    Ok(mean / true_count as f64)
}

fn replicate_mean(estimates: &[DMatrix<f64>], truth: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if estimates.is_empty() {
        return Err(Error::Empty("replicate estimates"));
    }
    let mut mean = DMatrix::zeros(truth.nrows(), truth.ncols());
    for e in estimates {
        if e.shape() != truth.shape() {
            return Err(Error::DimensionMismatch {
                what: "replicate estimate rows",
                expected: truth.nrows(),
                found: e.nrows(),
            });
        }
        mean += e;
    }
    Ok(mean / estimates.len() as f64)
}

/// Average over units of `|| mean_r beta_i^(r) - beta_i ||`.
pub fn coefficient_bias(estimates: &[DMatrix<f64>], truth: &DMatrix<f64>) -> Result<f64> {
    let mean = replicate_mean(estimates, truth)?;
    let d = mean - truth;
    Ok(d.row_iter().map(|r| r.norm()).sum::<f64>() / truth.nrows() as f64)
}

/// Average over units of `|| mean_r beta_i^(r) - beta_i ||^2`, i.e. the
/// squared bias norm.
pub fn coefficient_mse(estimates: &[DMatrix<f64>], truth: &DMatrix<f64>) -> Result<f64> {
    let mean = replicate_mean(estimates, truth)?;
    let d = mean - truth;
    Ok(d.row_iter().map(|r| r.norm_squared()).sum::<f64>() / truth.nrows() as f64)
}

/// Average over units of `mean_r || beta_i^(r) - beta_i ||^2`, which also
/// carries the replicate-to-replicate variance.
pub fn coefficient_mse_full(estimates: &[DMatrix<f64>], truth: &DMatrix<f64>) -> Result<f64> {
    replicate_mean(estimates, truth)?;
    let total: f64 = estimates
        .iter()
        .map(|e| {
            (e - truth)
                .row_iter()
                .map(|r| r.norm_squared())
                .sum::<f64>()
        })
        .sum();
    Ok(total / (estimates.len() * truth.nrows()) as f64)
}

/// Treats a shared coefficient vector as a single-row matrix.
pub fn as_row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}
