//! ADMM for the pairwise-fusion regression with weighted MCP.
//!
//! The objective is
//! `1/2 sum_i (y_i - x1_i beta_i - x2_i eta)^2 + sum_{i<j} mcp(||beta_i - beta_j||; lambda, gamma, w_ij)`
//! and the splitting introduces `delta_ij = beta_i - beta_j` with scaled duals
//! `alpha_ij`. `eta` is profiled out of the `beta` step through the
//! residual-maker of `X2`, so the `beta` system
//! `X1' Q X1 + vartheta A'A` depends only on the design and the pair set and
//! is factored once per [`FusionProblem`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;

use crate::clustering::{clusters_from_pairs, ClusterLabels};
use crate::compositional::TransformedDesign;
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::penalty::{mcp_prox, mcp_value};
use crate::refine::PartitionSearch;

/// Tuning and stopping parameters for one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub vartheta: f64,
    pub ridge_lambda0: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    /// Largest cluster count for which a fit is refined by local search
    /// over partitions; 0 disables the search.
    pub refine_max_clusters: usize,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    pub stopping: StoppingRule,
}

/// When an ADMM run counts as converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoppingRule {
    /// Primal residual below `tol_primal * sqrt(pairs * d)`.
    #[default]
    Primal,
    /// Additionally the dual residual below `tol_dual * sqrt(n * d)`.
    PrimalDual,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            gamma: 3.0,
            vartheta: 1.0,
            ridge_lambda0: 0.001,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            max_iter: 2000,
            refine_max_clusters: 12,
            relaxation: 1.0,
            stopping: StoppingRule::Primal,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.vartheta > 0.0) {
            return bad(format!("vartheta must be positive, got {}", self.vartheta));
        }
        if !(self.gamma * self.vartheta > 1.0) {
            return bad(format!(
                "gamma * vartheta must exceed 1, got {}",
                self.gamma * self.vartheta
            ));
        }
        if !(self.ridge_lambda0 > 0.0) {
            return bad(format!(
                "ridge level must be positive, got {}",
                self.ridge_lambda0
            ));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            ));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }
}

/// Unit pairs `(i, j)`, `i < j`, carrying a fusion constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
    complete: bool,
}

impl PairSet {
    /// All `n (n - 1) / 2` pairs in lexicographic order.
    pub fn complete(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        Self {
            n,
            pairs,
            complete: true,
        }
    }

    /// Pairs with a strictly positive weight.
    pub fn from_weights(w: &WeightMatrix) -> Self {
        let n = w.n();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if w.get(i, j) > 0.0 {
                    pairs.push((i, j));
                }
            }
        }
        let complete = pairs.len() == n * n.saturating_sub(1) / 2;
        Self { n, pairs, complete }
    }

    /// Arbitrary pair list; each pair is normalized to `i < j`.
    pub fn from_pairs(n: usize, raw: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(raw.len());
        for &(a, b) in raw {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange { index: a.max(b), n });
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            pairs.push((a.min(b), a.max(b)));
        }
        let complete = {
            let mut sorted = pairs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            sorted.len() == pairs.len() && sorted.len() == n * n.saturating_sub(1) / 2
        };
        Ok(Self { n, pairs, complete })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Per-pair weights aligned with [`Self::pairs`].
    pub fn weights_of(&self, w: &WeightMatrix) -> Result<Vec<f64>> {
        if w.n() != self.n {
            return Err(Error::DimensionMismatch {
                what: "weight matrix",
                expected: self.n,
                found: w.n(),
            });
        }
        Ok(self.pairs.iter().map(|&(i, j)| w.get(i, j)).collect())
    }

    /// `D'D` for the pair-difference operator `D` (the pair graph Laplacian).
    /// For the complete set this is `n I - 1 1'`.
    fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        if self.complete {
            return DMatrix::from_fn(n, n, |i, j| if i == j { n as f64 - 1.0 } else { -1.0 });
        }
        let mut l = DMatrix::zeros(n, n);
        for &(i, j) in &self.pairs {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
        l
    }
}

/// Design-dependent pieces shared by every fit over one design and pair set:
/// the factored `beta` systems for the ridge start and the ADMM iterations.
#[derive(Debug, Clone)]
pub struct FusionProblem {
    design: TransformedDesign,
    pairs: PairSet,
    vartheta: f64,
    ridge_lambda0: f64,
    gram_x2: Option<Cholesky<f64, Dyn>>,
    rhs_base: DVector<f64>,
    system: Cholesky<f64, Dyn>,
    ridge_system: Cholesky<f64, Dyn>,
}

impl FusionProblem {
    pub fn new(design: TransformedDesign, pairs: PairSet, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let n = design.n();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 units, got {n}"
            )));
        }
        if pairs.n() != n {
            return Err(Error::DimensionMismatch {
                what: "pair set units",
                expected: n,
                found: pairs.n(),
            });
        }
        let d = design.dim();
        let q = design.q();

        // Q = I - X2 (X2'X2)^{-1} X2' represented by the projection P.
        let (gram_x2, projection) = if q > 0 {
            let gram = design.x2.transpose() * &design.x2;
            let chol = Cholesky::new(gram).ok_or(Error::Singular(
                "X2'X2 is singular: non-compositional covariates are collinear",
            ))?;
            let solved = chol.solve(&design.x2.transpose());
            let p = &design.x2 * solved;
            (Some(chol), Some(p))
        } else {
            (None, None)
        };
        let q_entry = |i: usize, j: usize| -> f64 {
            let id = if i == j { 1.0 } else { 0.0 };
            projection.as_ref().map_or(id, |p| id - p[(i, j)])
        };

        let qy = match &projection {
            Some(p) => &design.y - p * &design.y,
            None => design.y.clone(),
        };
        let mut rhs_base = DVector::zeros(n * d);
        for i in 0..n {
            for k in 0..d {
                rhs_base[i * d + k] = design.x1[(i, k)] * qy[i];
            }
        }

        // X1'QX1 in unit blocks: block (i, j) = Q_ij x_i x_j'.
        let mut xqx = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let qij = q_entry(i, j);
                if qij == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let xa = design.x1[(i, a)] * qij;
                    for b in 0..d {
                        xqx[(i * d + a, j * d + b)] = xa * design.x1[(j, b)];
                    }
                }
            }
        }
        let lap = pairs.laplacian();
        let with_fusion = |scale: f64| -> DMatrix<f64> {
            let mut m = xqx.clone();
            for i in 0..n {
                for j in 0..n {
                    let l = lap[(i, j)];
                    if l != 0.0 {
                        for a in 0..d {
                            m[(i * d + a, j * d + a)] += scale * l;
                        }
                    }
                }
            }
            m
        };
        let system = Cholesky::new(with_fusion(config.vartheta))
            .ok_or(Error::Singular("ADMM beta system is not positive definite"))?;
        let ridge_system = Cholesky::new(with_fusion(config.ridge_lambda0)).ok_or(
            Error::Singular("ridge fusion system is not positive definite"),
        )?;

        Ok(Self {
            design,
            pairs,
            vartheta: config.vartheta,
            ridge_lambda0: config.ridge_lambda0,
            gram_x2,
            rhs_base,
            system,
            ridge_system,
        })
    }

    /// Problem over every unit pair.
    pub fn complete(design: TransformedDesign, config: &SolverConfig) -> Result<Self> {
        let n = design.n();
        Self::new(design, PairSet::complete(n), config)
    }

    pub fn design(&self) -> &TransformedDesign {
        &self.design
    }

    pub fn pairs(&self) -> &PairSet {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn vartheta(&self) -> f64 {
        self.vartheta
    }

    fn check_config(&self, config: &SolverConfig) -> Result<()> {
        config.validate()?;
        if config.vartheta != self.vartheta || config.ridge_lambda0 != self.ridge_lambda0 {
            return Err(Error::InvalidParameter(
                "vartheta and ridge level must match the ones the problem was factored with".into(),
            ));
        }
        Ok(())
    }

    fn unflatten(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.n(), d, |i, k| v[i * d + k])
    }

    /// Least-squares `eta` for the residual `y - X1 beta`.
    pub fn update_eta(&self, beta: &DMatrix<f64>) -> DVector<f64> {
        match &self.gram_x2 {
            None => DVector::zeros(0),
            Some(chol) => {
                let resid = residual_without_eta(&self.design, beta);
                chol.solve(&(self.design.x2.transpose() * resid))
            }
        }
    }

    /// Ridge-fusion starting point with zero duals.
    pub fn ridge_initialize(&self) -> SolverState {
        let beta = self.unflatten(&self.ridge_system.solve(&self.rhs_base));
        let eta = self.update_eta(&beta);
        let delta = pair_differences(&self.pairs, &beta);
        let alpha = vec![0.0; delta.len()];
        SolverState {
            beta,
            eta,
            delta,
            alpha,
            iterations: 0,
            history: Vec::new(),
        }
    }

    /// Exact minimizer over `beta` (with `eta` profiled) of the augmented
    /// Lagrangian at fixed `delta` and `alpha`.
    pub fn update_beta(&self, delta: &[f64], alpha: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut rhs = self.rhs_base.clone();
        for (p, &(i, j)) in self.pairs.pairs().iter().enumerate() {
            for k in 0..d {
                let v = self.vartheta * delta[p * d + k] - alpha[p * d + k];
                rhs[i * d + k] += v;
                rhs[j * d + k] -= v;
            }
        }
        self.system.solve_mut(&mut rhs);
        self.unflatten(&rhs)
    }

    /// Thresholded pair differences; see [`mcp_prox`].
    pub fn update_delta(
        &self,
        beta: &DMatrix<f64>,
        alpha: &[f64],
        pair_weights: &[f64],
        config: &SolverConfig,
    ) -> Vec<f64> {
        let d = self.dim();
        let mut delta = vec![0.0; self.pairs.len() * d];
        let mut zeta = vec![0.0; d];
        for (p, &(i, j)) in self.pairs.pairs().iter().enumerate() {
            for k in 0..d {
                zeta[k] = beta[(i, k)] - beta[(j, k)] + alpha[p * d + k] / self.vartheta;
            }
            mcp_prox(
                &zeta,
                &mut delta[p * d..(p + 1) * d],
                config.lambda,
                config.gamma,
                pair_weights[p],
                self.vartheta,
            );
        }
        delta
    }

    /// `alpha + vartheta (beta_i - beta_j - delta_ij)`.
    pub fn update_dual(&self, beta: &DMatrix<f64>, delta: &[f64], alpha: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = alpha.to_vec();
        for (p, &(i, j)) in self.pairs.pairs().iter().enumerate() {
            for k in 0..d {
                out[p * d + k] += self.vartheta * (beta[(i, k)] - beta[(j, k)] - delta[p * d + k]);
            }
        }
        out
    }

    /// Loss plus the weighted MCP over this problem's pair set.
    pub fn objective(
        &self,
        beta: &DMatrix<f64>,
        eta: &DVector<f64>,
        pair_weights: &[f64],
        config: &SolverConfig,
    ) -> f64 {
        let loss = 0.5 * full_residual(&self.design, beta, eta).norm_squared();
        let penalty: f64 = self
            .pairs
            .pairs()
            .iter()
            .zip(pair_weights)
            .map(|(&(i, j), &w)| {
                let t = (beta.row(i) - beta.row(j)).norm();
                mcp_value(t, config.lambda, config.gamma, w)
            })
            .sum();
        loss + penalty
    }

    /// Solves the `beta` system into `out` for the given `delta` and `alpha`.
    fn beta_step(&self, delta: &[f64], alpha: &[f64], out: &mut DVector<f64>) {
        out.copy_from(&self.rhs_base);
        let (pairs, theta) = (self.pairs.pairs(), self.vartheta);
        let rhs = out.as_mut_slice();
        // Literal dimensions let the inner loops unroll.
        match self.dim() {
            1 => scatter(1, pairs, theta, delta, alpha, rhs),
            2 => scatter(2, pairs, theta, delta, alpha, rhs),
            3 => scatter(3, pairs, theta, delta, alpha, rhs),
            4 => scatter(4, pairs, theta, delta, alpha, rhs),
            d => scatter(d, pairs, theta, delta, alpha, rhs),
        }
        self.system.solve_mut(out);
    }

    /// `delta` and dual updates in one pass over the pairs; returns the
    /// residuals of the step.
    fn pair_step(
        &self,
        beta: &DVector<f64>,
        state: &mut SolverState,
        pair_weights: &[f64],
        config: &SolverConfig,
        spread: &mut [f64],
    ) -> Residuals {
        spread.fill(0.0);
        let sweep = Sweep {
            pairs: self.pairs.pairs(),
            weights: pair_weights,
            beta: beta.as_slice(),
            theta: self.vartheta,
            config,
        };
        let (alpha, delta) = (&mut state.alpha[..], &mut state.delta[..]);
        let primal = match self.dim() {
            1 => sweep.run::<1>(alpha, delta, spread),
            2 => sweep.run::<2>(alpha, delta, spread),
            3 => sweep.run::<3>(alpha, delta, spread),
            4 => sweep.run::<4>(alpha, delta, spread),
            _ => sweep.run_dyn(self.dim(), alpha, delta, spread),
        };
        Residuals {
            primal: primal.sqrt(),
            dual: self.vartheta * spread.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Runs ADMM from the ridge start.
    pub fn fit(&self, weights: &WeightMatrix, config: &SolverConfig) -> Result<FitResult> {
        self.fit_from(weights, config, None)
    }

    /// Runs ADMM from `start` (a previous solution, e.g. at a nearby
    /// `lambda`) or from the ridge start when `None`.
    pub fn fit_from(
        &self,
        weights: &WeightMatrix,
        config: &SolverConfig,
        start: Option<&SolverState>,
    ) -> Result<FitResult> {
        let pw = self.pairs.weights_of(weights)?;
        self.fit_pair_weights(&pw, config, start)
    }

    /// As [`Self::fit_from`] with weights already aligned to the pair set.
    pub fn fit_pair_weights(
        &self,
        pair_weights: &[f64],
        config: &SolverConfig,
        start: Option<&SolverState>,
    ) -> Result<FitResult> {
        self.check_config(config)?;
        if pair_weights.len() != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                what: "pair weights",
                expected: self.pairs.len(),
                found: pair_weights.len(),
            });
        }
        let mut state = match start {
            Some(s) => {
                if s.beta.shape() != (self.n(), self.dim())
                    || s.delta.len() != self.pairs.len() * self.dim()
                {
                    return Err(Error::DimensionMismatch {
                        what: "warm start state",
                        expected: self.n(),
                        found: s.beta.nrows(),
                    });
                }
                SolverState {
                    iterations: 0,
                    history: Vec::new(),
                    ..s.clone()
                }
            }
            None => self.ridge_initialize(),
        };

        let d = self.dim() as f64;
        let primal_tol = config.tol_primal * (self.pairs.len() as f64 * d).sqrt();
        let dual_tol = config.tol_dual * (self.n() as f64 * d).sqrt();
        let mut converged = false;

        // Flat working copies; `beta` is unit-major (`i * d + k`), matching
        // the ordering of the factored system.
        let dim = self.dim();
        let mut beta = DVector::from_fn(self.n() * dim, |r, _| state.beta[(r / dim, r % dim)]);
        let mut rhs = DVector::zeros(self.n() * dim);
        let mut spread = vec![0.0; self.n() * dim];
        while state.iterations < config.max_iter {
            self.beta_step(&state.delta, &state.alpha, &mut rhs);
            core::mem::swap(&mut beta, &mut rhs);
            let res = self.pair_step(&beta, &mut state, pair_weights, config, &mut spread);
            state.iterations += 1;
            state.history.push(res);
            if !res.primal.is_finite() || !res.dual.is_finite() {
                log::warn!("ADMM diverged after {} iterations", state.iterations);
                break;
            }
            let dual_ok = config.stopping == StoppingRule::Primal || res.dual <= dual_tol;
            if res.primal <= primal_tol && dual_ok {
                converged = true;
                break;
            }
        }
        if state.iterations > 0 {
            state.beta = self.unflatten(&beta);
            state.eta = self.update_eta(&state.beta);
        }

        let zero_pairs: Vec<(usize, usize)> = self
            .pairs
            .pairs()
            .iter()
            .enumerate()
            .filter(|(p, _)| {
                state.delta[p * dim..(p + 1) * dim]
                    .iter()
                    .all(|v| *v == 0.0)
            })
            .map(|(_, &pair)| pair)
            .collect();
        let polished = self.polish(&state, &zero_pairs, pair_weights, config);
        let fused_pairs = self
            .pairs
            .pairs()
            .iter()
            .copied()
            .filter(|&(i, j)| polished.labels.labels()[i] == polished.labels.labels()[j])
            .collect();
        let Polished {
            beta,
            eta,
            objective,
            ..
        } = polished;
        let last = state.history.last().copied().unwrap_or_default();
        Ok(FitResult {
            beta,
            eta,
            fused_pairs,
            objective,
            converged,
            iterations: state.iterations,
            primal_residual: last.primal,
            dual_residual: last.dual,
            lambda: config.lambda,
            state,
        })
    }

    /// Collapses every fused component to one coefficient vector. Candidates
    /// are the component mean of the ADMM iterate, the least-squares refit
    /// under the component constraint and the refits of partitions found by
    /// local search; the one with the lowest objective is reported.
    fn polish(
        &self,
        state: &SolverState,
        fused: &[(usize, usize)],
        pair_weights: &[f64],
        config: &SolverConfig,
    ) -> Polished {
        let n = self.n();
        let d = self.dim();
        let labels = clusters_from_pairs(n, fused);
        let k = labels.k();
        let sizes = labels.sizes();

        let mut centers = DMatrix::zeros(k, d);
        for (i, &c) in labels.labels().iter().enumerate() {
            for a in 0..d {
                centers[(c, a)] += state.beta[(i, a)] / sizes[c] as f64;
            }
        }
        let beta = DMatrix::from_fn(n, d, |i, a| centers[(labels.labels()[i], a)]);
        let eta = self.update_eta(&beta);
        let objective = self.objective(&beta, &eta, pair_weights, config);
        let mut best = Polished {
            beta,
            eta,
            objective,
            labels: labels.clone(),
        };

        let consider = |best: &mut Polished, labels: &ClusterLabels| {
            if let Some((beta, eta)) =
                constrained_least_squares(&self.design, labels.labels(), labels.k())
            {
                let objective = self.objective(&beta, &eta, pair_weights, config);
                if objective.is_finite()
                    && (objective < best.objective || !best.objective.is_finite())
                {
                    *best = Polished {
                        beta,
                        eta,
                        objective,
                        labels: labels.clone(),
                    };
                }
            }
        };
        if k < n {
            consider(&mut best, &labels);
        }
        if config.refine_max_clusters > 0 && best.objective.is_finite() {
            let search = PartitionSearch::new(
                &self.design,
                self.pairs.pairs(),
                pair_weights,
                config.lambda,
                config.gamma,
                config.refine_max_clusters,
            );
            let absorbed = search.absorb(&labels, &centers);
            if absorbed.k() < k {
                consider(&mut best, &absorbed);
            }
            for start in [&labels, &absorbed] {
                if let Some(refined) = search.run(start) {
                    consider(&mut best, &refined);
                }
            }
            if let Some(refined) = search.run_from_pooled() {
                consider(&mut best, &refined);
            }
            if let Some(exact) = search.exhaustive() {
                consider(&mut best, &exact);
            }
        }
        best
    }
}

#[inline(always)]
fn scatter(
    d: usize,
    pairs: &[(usize, usize)],
    theta: f64,
    delta: &[f64],
    alpha: &[f64],
    rhs: &mut [f64],
) {
    for (&(i, j), (dp, ap)) in pairs
        .iter()
        .zip(delta.chunks_exact(d).zip(alpha.chunks_exact(d)))
    {
        let (lo, hi) = rhs.split_at_mut(j * d);
        let (ri, rj) = (&mut lo[i * d..(i + 1) * d], &mut hi[..d]);
        for k in 0..d {
            let v = theta * dp[k] - ap[k];
            ri[k] += v;
            rj[k] -= v;
        }
    }
}

/// Read-only inputs of one pass over the pairs.
struct Sweep<'a> {
    pairs: &'a [(usize, usize)],
    weights: &'a [f64],
    beta: &'a [f64],
    theta: f64,
    config: &'a SolverConfig,
}

impl Sweep<'_> {
    fn run<const D: usize>(&self, alpha: &mut [f64], delta: &mut [f64], spread: &mut [f64]) -> f64 {
        let mut zeta = [0.0; D];
        let mut next = [0.0; D];
        self.pass(D, &mut zeta, &mut next, alpha, delta, spread)
    }

    fn run_dyn(&self, d: usize, alpha: &mut [f64], delta: &mut [f64], spread: &mut [f64]) -> f64 {
        let (mut zeta, mut next) = (vec![0.0; d], vec![0.0; d]);
        self.pass(d, &mut zeta, &mut next, alpha, delta, spread)
    }

    /// Returns the squared primal residual.
    #[inline(always)]
    fn pass(
        &self,
        d: usize,
        zeta: &mut [f64],
        next: &mut [f64],
        alpha: &mut [f64],
        delta: &mut [f64],
        spread: &mut [f64],
    ) -> f64 {
        let (theta, relax) = (self.theta, self.config.relaxation);
        let (lambda, gamma) = (self.config.lambda, self.config.gamma);
        let b = self.beta;
        let mut primal = 0.0;
        let iterates = alpha.chunks_exact_mut(d).zip(delta.chunks_exact_mut(d));
        for ((&(i, j), &w), (alpha, delta)) in self.pairs.iter().zip(self.weights).zip(iterates) {
            let (bi, bj) = (&b[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]);
            for k in 0..d {
                let diff = relax * (bi[k] - bj[k]) + (1.0 - relax) * delta[k];
                zeta[k] = diff + alpha[k] / theta;
            }
            mcp_prox(zeta, next, lambda, gamma, w, theta);
            let (lo, hi) = spread.split_at_mut(j * d);
            let (si, sj) = (&mut lo[i * d..(i + 1) * d], &mut hi[..d]);
            for k in 0..d {
                let r = bi[k] - bj[k] - next[k];
                primal += r * r;
                let diff = relax * (bi[k] - bj[k]) + (1.0 - relax) * delta[k];
                alpha[k] += theta * (diff - next[k]);
                let change = next[k] - delta[k];
                si[k] += change;
                sj[k] -= change;
                delta[k] = next[k];
            }
        }
        primal
    }
}

struct Polished {
    beta: DMatrix<f64>,
    eta: DVector<f64>,
    objective: f64,
    labels: ClusterLabels,
}

/// One-shot fit over the complete pair set.
pub fn fit(
    design: &TransformedDesign,
    weights: &WeightMatrix,
    config: &SolverConfig,
) -> Result<FitResult> {
    FusionProblem::complete(design.clone(), config)?.fit(weights, config)
}

/// Squared loss plus the weighted MCP over every pair `i < j`.
pub fn objective_value(
    beta: &DMatrix<f64>,
    eta: &DVector<f64>,
    design: &TransformedDesign,
    weights: &WeightMatrix,
    config: &SolverConfig,
) -> Result<f64> {
    let n = design.n();
    if beta.shape() != (n, design.dim()) {
        return Err(Error::DimensionMismatch {
            what: "coefficient rows",
            expected: n,
            found: beta.nrows(),
        });
    }
    if eta.len() != design.q() {
        return Err(Error::DimensionMismatch {
            what: "shared coefficients",
            expected: design.q(),
            found: eta.len(),
        });
    }
    if weights.n() != n {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: n,
            found: weights.n(),
        });
    }
    let loss = 0.5 * full_residual(design, beta, eta).norm_squared();
    let mut penalty = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let t = (beta.row(i) - beta.row(j)).norm();
            penalty += mcp_value(t, config.lambda, config.gamma, weights.get(i, j));
        }
    }
    Ok(loss + penalty)
}

/// `y - x1_i beta_i` per unit.
fn residual_without_eta(design: &TransformedDesign, beta: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(design.n(), |i, _| {
        design.y[i] - (design.x1.row(i) * beta.row(i).transpose())[(0, 0)]
    })
}

/// `y - x1_i beta_i - x2_i eta` per unit.
pub fn full_residual(
    design: &TransformedDesign,
    beta: &DMatrix<f64>,
    eta: &DVector<f64>,
) -> DVector<f64> {
    let mut r = residual_without_eta(design, beta);
    if design.q() > 0 {
        r -= &design.x2 * eta;
    }
    r
}

fn pair_differences(pairs: &PairSet, beta: &DMatrix<f64>) -> Vec<f64> {
    let d = beta.ncols();
    let mut out = Vec::with_capacity(pairs.len() * d);
    for &(i, j) in pairs.pairs() {
        for k in 0..d {
            out.push(beta[(i, k)] - beta[(j, k)]);
        }
    }
    out
}

/// Least squares with one coefficient vector per cluster and shared `eta`.
/// `None` when the constrained design is rank deficient.
pub fn constrained_least_squares(
    design: &TransformedDesign,
    labels: &[usize],
    k: usize,
) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = design.n();
    let d = design.dim();
    let q = design.q();
    let cols = k * d + q;
    if cols > n {
        return None;
    }
    let z = DMatrix::from_fn(n, cols, |i, c| {
        if c < k * d {
            let (cl, a) = (c / d, c % d);
            if labels[i] == cl {
                design.x1[(i, a)]
            } else {
                0.0
            }
        } else {
            design.x2[(i, c - k * d)]
        }
    });
    let gram = z.transpose() * &z;
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(gram)?;
    // Reject numerically rank-deficient fits.
    let l = chol.l_dirty();
    let min_pivot = (0..cols)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-10 * scale {
        return None;
    }
    let coef = chol.solve(&(z.transpose() * &design.y));
    let beta = DMatrix::from_fn(n, d, |i, a| coef[labels[i] * d + a]);
    let eta = DVector::from_fn(q, |c, _| coef[k * d + c]);
    Some((beta, eta))
}

/// Primal and dual residual norms after one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

/// Full ADMM iterate; usable as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// `n x (p - 1)` per-unit coefficients.
    pub beta: DMatrix<f64>,
    pub eta: DVector<f64>,
    /// Pair differences, `p - 1` entries per pair in pair-set order.
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<Residuals>,
}

/// Outcome of one fit at a fixed `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Reported per-unit coefficients; equal within every fused component.
    pub beta: DMatrix<f64>,
    pub eta: DVector<f64>,
    /// Pairs whose reported coefficient difference is exactly zero.
    pub fused_pairs: Vec<(usize, usize)>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub lambda: f64,
    /// Raw final iterate.
    pub state: SolverState,
}

impl FitResult {
    pub fn residual_sum_of_squares(&self, design: &TransformedDesign) -> f64 {
        full_residual(design, &self.beta, &self.eta).norm_squared()
    }
}
