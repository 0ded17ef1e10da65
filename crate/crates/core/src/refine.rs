//! Local search over partitions around a fused solution.
//!
//! Each candidate partition is scored by the objective at its constrained
//! least-squares fit (one coefficient vector per cluster, shared `eta`).
//! Moves are merging two clusters, moving one unit into another cluster and
//! splitting one unit off. Problems with at most [`EXACT_MAX_UNITS`] units
//! are also enumerated outright. Every cluster is reduced to a factorization of its
//! sufficient statistics; `eta` comes from a Schur complement over those, so
//! a candidate refactors only the clusters it touches and costs
//! `O((d + q)^3 + k d q + k^2 d)` regardless of `n`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float;

use crate::clustering::ClusterLabels;
use crate::compositional::TransformedDesign;
use crate::penalty::mcp_value;

const MAX_SWEEPS: usize = 100;
const PIVOT_RTOL: f64 = 1e-10;
/// Largest problem whose partitions are enumerated outright (Bell(8) = 4140).
pub(crate) const EXACT_MAX_UNITS: usize = 8;

#[derive(Debug, Clone)]
struct Stats {
    /// `sum x_i x_i'`
    s: DMatrix<f64>,
    /// `sum x_i x2_i'`
    c: DMatrix<f64>,
    /// `sum x_i y_i`
    b: DVector<f64>,
    size: usize,
}

impl Stats {
    fn empty(d: usize, q: usize) -> Self {
        Self {
            s: DMatrix::zeros(d, d),
            c: DMatrix::zeros(d, q),
            b: DVector::zeros(d),
            size: 0,
        }
    }

    fn add(&mut self, u: &Unit, sign: f64) {
        self.s += &u.xx * sign;
        self.c += &u.xz * sign;
        self.b += &u.xy * sign;
        if sign > 0.0 {
            self.size += 1;
        } else {
            self.size -= 1;
        }
    }

    fn merged(&self, other: &Stats) -> Stats {
        Stats {
            s: &self.s + &other.s,
            c: &self.c + &other.c,
            b: &self.b + &other.b,
            size: self.size + other.size,
        }
    }
}

/// Solves of one cluster's normal equations.
#[derive(Debug, Clone)]
struct Factor {
    /// `S^-1 C`
    pm: DMatrix<f64>,
    /// `S^-1 b`
    pv: DVector<f64>,
    /// `C' S^-1 C`
    tm: DMatrix<f64>,
    /// `C' S^-1 b`
    tv: DVector<f64>,
    /// `b' S^-1 b`
    r: f64,
}

/// Sums of [`Factor`] contractions over a partition.
#[derive(Debug, Clone)]
struct Totals {
    tm: DMatrix<f64>,
    tv: DVector<f64>,
    r: f64,
}

impl Totals {
    fn add(&mut self, f: &Factor, sign: f64) {
        self.tm += &f.tm * sign;
        self.tv += &f.tv * sign;
        self.r += sign * f.r;
    }
}

#[derive(Debug, Clone)]
struct Unit {
    xx: DMatrix<f64>,
    xz: DMatrix<f64>,
    xy: DVector<f64>,
}

fn checked_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let n = m.nrows();
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let min_pivot = (0..n)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    (min_pivot >= PIVOT_RTOL * scale).then_some(chol)
}

pub(crate) struct PartitionSearch<'a> {
    d: usize,
    q: usize,
    n: usize,
    lambda: f64,
    gamma: f64,
    units: Vec<Unit>,
    gram_x2: DMatrix<f64>,
    x2y: DVector<f64>,
    yy: f64,
    pairs: &'a [(usize, usize)],
    pair_weights: &'a [f64],
    max_clusters: usize,
}

impl<'a> PartitionSearch<'a> {
    pub(crate) fn new(
        design: &TransformedDesign,
        pairs: &'a [(usize, usize)],
        pair_weights: &'a [f64],
        lambda: f64,
        gamma: f64,
        max_clusters: usize,
    ) -> Self {
        let (n, d, q) = (design.n(), design.dim(), design.q());
        let units = (0..n)
            .map(|i| {
                let x = design.x1.row(i).transpose();
                let z = design.x2.row(i);
                Unit {
                    xx: &x * x.transpose(),
                    xz: &x * z,
                    xy: &x * design.y[i],
                }
            })
            .collect();
        Self {
            d,
            q,
            n,
            lambda,
            gamma,
            units,
            gram_x2: design.x2.transpose() * &design.x2,
            x2y: design.x2.transpose() * &design.y,
            yy: design.y.norm_squared(),
            pairs,
            pair_weights,
            max_clusters,
        }
    }

    /// Per-cluster solves `S^-1 C`, `S^-1 b` and their contractions, or
    /// `None` when `S` is singular.
    fn factor(&self, st: &Stats) -> Option<Factor> {
        let chol = checked_cholesky(st.s.clone())?;
        let pm = chol.solve(&st.c);
        let pv = chol.solve(&st.b);
        Some(Factor {
            tm: st.c.transpose() * &pm,
            tv: st.c.transpose() * &pv,
            r: st.b.dot(&pv),
            pm,
            pv,
        })
    }

    fn totals(&self, factors: &[Factor]) -> Totals {
        let mut t = Totals {
            tm: DMatrix::zeros(self.q, self.q),
            tv: DVector::zeros(self.q),
            r: 0.0,
        };
        for f in factors {
            t.add(f, 1.0);
        }
        t
    }

    /// Objective of the partition whose clusters are `clusters`, where
    /// `totals` already sums their contractions and `weight(a, b)` is the
    /// total pair weight between clusters `a` and `b`.
    fn evaluate(
        &self,
        clusters: &[&Factor],
        totals: &Totals,
        weight: impl Fn(usize, usize) -> f64,
    ) -> Option<f64> {
        let eta = if self.q > 0 {
            checked_cholesky(&self.gram_x2 - &totals.tm)?.solve(&(&self.x2y - &totals.tv))
        } else {
            DVector::zeros(0)
        };
        let rss = self.yy - self.x2y.dot(&eta) - totals.r + totals.tv.dot(&eta);
        let d = self.d;
        let mut betas = vec![0.0; clusters.len() * d];
        for (f, beta) in clusters.iter().zip(betas.chunks_exact_mut(d)) {
            beta.copy_from_slice(f.pv.as_slice());
            if self.q > 0 {
                for (b, pe) in beta.iter_mut().zip((&f.pm * &eta).iter()) {
                    *b -= pe;
                }
            }
        }
        let mut penalty = 0.0;
        for a in 0..clusters.len() {
            let ba = &betas[a * d..(a + 1) * d];
            for b in a + 1..clusters.len() {
                let wab = weight(a, b);
                if wab != 0.0 {
                    let bb = &betas[b * d..(b + 1) * d];
                    let dist = ba
                        .iter()
                        .zip(bb)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    penalty += mcp_value(dist, self.lambda, self.gamma, wab);
                }
            }
        }
        Some(0.5 * rss.max(0.0) + penalty)
    }

    /// Objective at the constrained least-squares fit, or `None` when the
    /// partition does not identify its coefficients.
    fn score(&self, stats: &[Stats], w: &DMatrix<f64>) -> Option<f64> {
        let factors: Vec<Factor> = stats
            .iter()
            .map(|s| self.factor(s))
            .collect::<Option<_>>()?;
        let refs: Vec<&Factor> = factors.iter().collect();
        self.evaluate(&refs, &self.totals(&factors), |a, b| w[(a, b)])
    }

    fn cluster_stats(&self, labels: &[usize], k: usize) -> Vec<Stats> {
        let mut stats = vec![Stats::empty(self.d, self.q); k];
        for (u, &c) in labels.iter().enumerate() {
            stats[c].add(&self.units[u], 1.0);
        }
        stats
    }

    /// Unit-to-cluster weight sums `U` (`n x k`) and cluster-pair sums `W`.
    fn weight_sums(&self, labels: &[usize], k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut u = DMatrix::zeros(self.n, k);
        let mut w = DMatrix::zeros(k, k);
        for (&(i, j), &wij) in self.pairs.iter().zip(self.pair_weights) {
            if wij == 0.0 {
                continue;
            }
            let (a, b) = (labels[i], labels[j]);
            u[(i, b)] += wij;
            u[(j, a)] += wij;
            if a != b {
                w[(a, b)] += wij;
                w[(b, a)] += wij;
            }
        }
        (u, w)
    }

    /// Best-improvement descent from `labels`. Returns the improved
    /// partition, or `None` when nothing improves or `labels` is not
    /// identified.
    pub(crate) fn run(&self, labels: &ClusterLabels) -> Option<ClusterLabels> {
        let k = labels.k();
        if k > self.max_clusters {
            return None;
        }
        let stats = self.cluster_stats(labels.labels(), k);
        let (_, w) = self.weight_sums(labels.labels(), k);
        let start = self.score(&stats, &w)?;
        self.descend(labels.labels().to_vec(), k, start)
            .map(|(l, _)| l)
    }

    /// Descent from the single-cluster partition. Returns it unchanged when
    /// no move improves it, or `None` when it is not identified.
    pub(crate) fn run_from_pooled(&self) -> Option<ClusterLabels> {
        let one = vec![0; self.n];
        let stats = self.cluster_stats(&one, 1);
        let start = self.score(&stats, &DMatrix::zeros(1, 1))?;
        Some(
            self.descend(one.clone(), 1, start)
                .map_or_else(|| ClusterLabels::from_raw(&one), |(l, _)| l),
        )
    }

    /// Scores every set partition and returns the best identified one.
    /// Only for `n <= EXACT_MAX_UNITS`, where local moves can still miss the
    /// optimum but the Bell number stays small.
    pub(crate) fn exhaustive(&self) -> Option<ClusterLabels> {
        if self.n > EXACT_MAX_UNITS || self.max_clusters == 0 {
            return None;
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        // Restricted growth strings: raw[i] <= 1 + max(raw[..i]).
        let mut raw = vec![0usize; self.n];
        loop {
            let k = raw.iter().max().map_or(0, |m| m + 1);
            if k <= self.max_clusters {
                let stats = self.cluster_stats(&raw, k);
                let (_, w) = self.weight_sums(&raw, k);
                if let Some(s) = self.score(&stats, &w) {
                    if best.as_ref().is_none_or(|(b, _)| s < *b) {
                        best = Some((s, raw.clone()));
                    }
                }
            }
            // Advance to the next string, rightmost position first.
            let mut i = self.n - 1;
            loop {
                if i == 0 {
                    return best.map(|(_, l)| ClusterLabels::from_raw(&l));
                }
                let cap = raw[..i].iter().max().map_or(0, |m| m + 1);
                if raw[i] < cap {
                    raw[i] += 1;
                    raw[i + 1..].iter_mut().for_each(|v| *v = 0);
                    break;
                }
                i -= 1;
            }
        }
    }

    /// Merges every cluster whose coefficients are not identified into the
    /// cluster with the nearest centre, smallest clusters first, so the
    /// result can be scored. `centers` holds one row per cluster of `labels`.
    pub(crate) fn absorb(&self, labels: &ClusterLabels, centers: &DMatrix<f64>) -> ClusterLabels {
        let mut raw = labels.labels().to_vec();
        let mut centers: Vec<DVector<f64>> = centers.row_iter().map(|r| r.transpose()).collect();
        let mut sizes = labels.sizes();
        loop {
            let k = centers.len();
            if k == 1 {
                break;
            }
            let stats = self.cluster_stats(&raw, k);
            let worst = (0..k)
                .filter(|&c| checked_cholesky(stats[c].s.clone()).is_none())
                .min_by_key(|&c| (sizes[c], c));
            let Some(c) = worst else { break };
            let target = (0..k)
                .filter(|&t| t != c)
                .min_by(|&a, &b| {
                    let da = (&centers[a] - &centers[c]).norm_squared();
                    let db = (&centers[b] - &centers[c]).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("at least two clusters");
            let (sc, st) = (sizes[c] as f64, sizes[target] as f64);
            centers[target] = (&centers[target] * st + &centers[c] * sc) / (sc + st);
            sizes[target] += sizes[c];
            centers.remove(c);
            sizes.remove(c);
            for l in raw.iter_mut() {
                if *l == c {
                    *l = if target > c { target - 1 } else { target };
                } else if *l > c {
                    *l -= 1;
                }
            }
        }
        ClusterLabels::from_raw(&raw)
    }

    /// Returns the final partition and its objective when any move was made.
    fn descend(
        &self,
        mut current: Vec<usize>,
        mut k: usize,
        start: f64,
    ) -> Option<(ClusterLabels, f64)> {
        let mut best_score = start;
        let mut improved = false;

        for _ in 0..MAX_SWEEPS {
            let stats = self.cluster_stats(&current, k);
            let factors: Vec<Factor> = stats
                .iter()
                .map(|s| self.factor(s))
                .collect::<Option<_>>()?;
            let totals = self.totals(&factors);
            let (u, w) = self.weight_sums(&current, k);
            let threshold = best_score - 1e-10 * (1.0 + best_score.abs());
            let mut best_move: Option<(f64, Move)> = None;
            let mut consider = |score: Option<f64>, mv: Move| {
                if let Some(s) = score {
                    if s < threshold && best_move.as_ref().is_none_or(|(b, _)| s < *b) {
                        best_move = Some((s, mv));
                    }
                }
            };

            // Merges: `b` folds into `a`; clusters after `b` shift down.
            for a in 0..k {
                for b in a + 1..k {
                    let Some(merged) = self.factor(&stats[a].merged(&stats[b])) else {
                        continue;
                    };
                    let old = |c: usize| if c < b { c } else { c + 1 };
                    let clusters: Vec<&Factor> = (0..k - 1)
                        .map(|c| if c == a { &merged } else { &factors[old(c)] })
                        .collect();
                    let mut t = totals.clone();
                    t.add(&factors[a], -1.0);
                    t.add(&factors[b], -1.0);
                    t.add(&merged, 1.0);
                    let weight = |x: usize, y: usize| {
                        let (x, y) = (old(x), old(y));
                        match (x == a, y == a) {
                            (true, _) => w[(a, y)] + w[(b, y)],
                            (_, true) => w[(x, a)] + w[(x, b)],
                            _ => w[(x, y)],
                        }
                    };
                    consider(self.evaluate(&clusters, &t, weight), Move::Merge(a, b));
                }
            }

            // Single-unit moves; `to == k` opens a new cluster.
            let open = k < self.max_clusters;
            for unit in 0..self.n {
                let from = current[unit];
                if stats[from].size == 1 {
                    continue;
                }
                let mut shrunk = stats[from].clone();
                shrunk.add(&self.units[unit], -1.0);
                let Some(f_from) = self.factor(&shrunk) else {
                    continue;
                };
                let targets = if open { k + 1 } else { k };
                for to in 0..targets {
                    if to == from {
                        continue;
                    }
                    let mut grown = if to < k {
                        stats[to].clone()
                    } else {
                        Stats::empty(self.d, self.q)
                    };
                    grown.add(&self.units[unit], 1.0);
                    let Some(f_to) = self.factor(&grown) else {
                        continue;
                    };
                    let kk = if to == k { k + 1 } else { k };
                    let clusters: Vec<&Factor> = (0..kk)
                        .map(|c| {
                            if c == from {
                                &f_from
                            } else if c == to {
                                &f_to
                            } else {
                                &factors[c]
                            }
                        })
                        .collect();
                    let mut t = totals.clone();
                    t.add(&factors[from], -1.0);
                    t.add(&f_from, 1.0);
                    if to < k {
                        t.add(&factors[to], -1.0);
                    }
                    t.add(&f_to, 1.0);
                    let uf = u[(unit, from)];
                    let ut = if to < k { u[(unit, to)] } else { 0.0 };
                    let base = |x: usize, y: usize| if x < k && y < k { w[(x, y)] } else { 0.0 };
                    let weight = |x: usize, y: usize| {
                        let (x, y) = (x.min(y), x.max(y));
                        if (x, y) == (from.min(to), from.max(to)) {
                            return base(x, y) + uf - ut;
                        }
                        // One side is `from` or `to`; the unit's weights to
                        // the other cluster move along with it.
                        let other = |c: usize| if c == x { y } else { x };
                        if x == from || y == from {
                            base(x, y) - u[(unit, other(from))]
                        } else if x == to || y == to {
                            base(x, y) + u[(unit, other(to))]
                        } else {
                            base(x, y)
                        }
                    };
                    consider(
                        self.evaluate(&clusters, &t, weight),
                        Move::Shift { unit, to },
                    );
                }
            }

            let Some((score, mv)) = best_move else { break };
            match mv {
                Move::Merge(a, b) => {
                    for c in current.iter_mut() {
                        if *c == b {
                            *c = a;
                        } else if *c > b {
                            *c -= 1;
                        }
                    }
                    k -= 1;
                }
                Move::Shift { unit, to } => {
                    current[unit] = to;
                    if to == k {
                        k += 1;
                    }
                }
            }
            best_score = score;
            improved = true;
        }
        improved.then(|| (ClusterLabels::from_raw(&current), best_score))
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Merge(usize, usize),
    Shift { unit: usize, to: usize },
}
