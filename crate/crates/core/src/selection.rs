//! Penalty-level selection: lambda grids, the modified BIC and warm-started
//! solution paths.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;

use crate::clustering::{extract_clusters, ClusterLabels};
use crate::compositional::TransformedDesign;
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::solver::{FitResult, FusionProblem, SolverConfig};

/// `count` log-spaced values from `lambda_min` to `lambda_max`, both
/// endpoints included exactly.
pub fn lambda_grid(lambda_min: f64, lambda_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(lambda_min > 0.0) || !(lambda_max > lambda_min) || !lambda_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda grid needs 0 < min < max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "lambda grid needs at least 2 points, got {count}"
        )));
    }
    let (lo, hi) = (lambda_min.ln(), lambda_max.ln());
    let step = (hi - lo) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|k| (lo + step * k as f64).exp()).collect();
    grid[0] = lambda_min;
    grid[count - 1] = lambda_max;
    Ok(grid)
}

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 50;
/// Default ratio `lambda_min / lambda_max`.
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;

/// Inflation factor `C_n` in front of the complexity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CnRule {
    /// `log(n p + q)`.
    LogNpq,
    Fixed(f64),
}

/// What `p` counts in the `K p + q` complexity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientDim {
    /// Dimension actually estimated per cluster, `p - 1`.
    Projected,
    /// Raw number of composition components.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicOptions {
    pub cn: CnRule,
    pub coefficient_dim: CoefficientDim,
}

impl Default for BicOptions {
    fn default() -> Self {
        Self {
            cn: CnRule::LogNpq,
            coefficient_dim: CoefficientDim::Projected,
        }
    }
}

/// `log(rss / n) + C_n (log n / n) (k p + q)`. Zero residuals give
/// negative infinity.
pub fn bic_value(rss: f64, n: usize, k_hat: usize, p: usize, q: usize, cn: CnRule) -> f64 {
    let nf = n as f64;
    let cn = match cn {
        CnRule::LogNpq => ((n * p + q) as f64).ln(),
        CnRule::Fixed(c) => c,
    };
    let fit_term = if rss > 0.0 {
        (rss / nf).ln()
    } else {
        log::warn!("zero residual sum of squares; BIC is -inf");
        f64::NEG_INFINITY
    };
    fit_term + cn * (nf.ln() / nf) * (k_hat * p + q) as f64
}

/// Modified BIC of `fit` with `cluster_count` estimated clusters.
pub fn modified_bic(
    fit: &FitResult,
    design: &TransformedDesign,
    cluster_count: usize,
    opts: &BicOptions,
) -> f64 {
    let p = match opts.coefficient_dim {
        CoefficientDim::Projected => design.dim(),
        CoefficientDim::Raw => design.dim() + 1,
    };
    bic_value(
        fit.residual_sum_of_squares(design),
        design.n(),
        cluster_count,
        p,
        design.q(),
        opts.cn,
    )
}

/// Result of the doubling search for a fully fusing `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoLambda {
    pub lambda: f64,
    /// `false` when even the cap left more than one cluster.
    pub reached: bool,
}

pub const AUTO_LAMBDA_START: f64 = 0.1;
pub const AUTO_LAMBDA_DOUBLINGS: u32 = 15;

/// Smallest `0.1 * 2^k`, `k <= 15`, whose fit is a single cluster. Each
/// trial is warm-started from the previous one.
pub fn auto_lambda_max(
    problem: &FusionProblem,
    weights: &WeightMatrix,
    config: &SolverConfig,
) -> Result<AutoLambda> {
    let pw = problem.pairs().weights_of(weights)?;
    let mut prev: Option<FitResult> = None;
    let mut lambda = AUTO_LAMBDA_START;
    for _ in 0..=AUTO_LAMBDA_DOUBLINGS {
        let cfg = config.with_lambda(lambda);
        let fit = problem.fit_pair_weights(&pw, &cfg, prev.as_ref().map(|f| &f.state))?;
        if extract_clusters(&fit, problem.n()).k() == 1 {
            return Ok(AutoLambda {
                lambda,
                reached: true,
            });
        }
        prev = Some(fit);
        lambda *= 2.0;
    }
    let cap = lambda / 2.0;
    log::warn!("no lambda up to {cap} fused all units; using the cap");
    Ok(AutoLambda {
        lambda: cap,
        reached: false,
    })
}

/// One grid point of a solution path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub fit: FitResult,
    pub clusters: ClusterLabels,
    /// `+inf` for fits that did not converge.
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub points: Vec<PathPoint>,
    pub selected: usize,
}

impl PathResult {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn bic(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bic).collect()
    }

    pub fn best(&self) -> &PathPoint {
        &self.points[self.selected]
    }
}

/// Index of the smallest BIC; ties go to the earlier (smaller) lambda.
/// `None` when no value is below `+inf`.
pub fn select_min(bic: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &b) in bic.iter().enumerate() {
        if b == f64::INFINITY || b.is_nan() {
            continue;
        }
        if best.is_none_or(|j| b < bic[j]) {
            best = Some(i);
        }
    }
    best
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter(
            "lambda values must be finite and >= 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Scores already computed fits and picks the BIC minimizer.
pub fn assemble_path(
    problem: &FusionProblem,
    fits: Vec<FitResult>,
    opts: &BicOptions,
) -> Result<PathResult> {
    let n = problem.n();
    let points: Vec<PathPoint> = fits
        .into_iter()
        .map(|fit| {
            let clusters = extract_clusters(&fit, n);
            let bic = if fit.converged {
                modified_bic(&fit, problem.design(), clusters.k(), opts)
            } else {
                f64::INFINITY
            };
            PathPoint {
                lambda: fit.lambda,
                fit,
                clusters,
                bic,
            }
        })
        .collect();
    let bic: Vec<f64> = points.iter().map(|p| p.bic).collect();
    let selected = select_min(&bic).ok_or(Error::NoConvergedFit)?;
    Ok(PathResult { points, selected })
}

/// Fits every `lambda` in increasing order, each warm-started from the
/// previous solution, and selects the BIC minimizer among converged fits.
pub fn solution_path(
    problem: &FusionProblem,
    weights: &WeightMatrix,
    grid: &[f64],
    config: &SolverConfig,
    opts: &BicOptions,
) -> Result<PathResult> {
    check_grid(grid)?;
    let pw = problem.pairs().weights_of(weights)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let start = fits.last().map(|f| &f.state);
        let fit = problem.fit_pair_weights(&pw, &config.with_lambda(lambda), start)?;
        fits.push(fit);
    }
    assemble_path(problem, fits, opts)
}

/// As [`solution_path`] but every fit starts from the ridge initializer.
pub fn solution_path_cold(
    problem: &FusionProblem,
    weights: &WeightMatrix,
    grid: &[f64],
    config: &SolverConfig,
    opts: &BicOptions,
) -> Result<PathResult> {
    check_grid(grid)?;
    let pw = problem.pairs().weights_of(weights)?;
    let fits = grid
        .iter()
        .map(|&l| problem.fit_pair_weights(&pw, &config.with_lambda(l), None))
        .collect::<Result<Vec<_>>>()?;
    assemble_path(problem, fits, opts)
}

/// How the path grid is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Log grid from `ratio * lambda_max` to an automatically found `lambda_max`.
    Auto {
        points: usize,
        ratio: f64,
    },
    Range {
        min: f64,
        max: f64,
        points: usize,
    },
    Explicit(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            points: DEFAULT_GRID_POINTS,
            ratio: DEFAULT_GRID_RATIO,
        }
    }
}

impl GridSpec {
    pub fn resolve(
        &self,
        problem: &FusionProblem,
        weights: &WeightMatrix,
        config: &SolverConfig,
    ) -> Result<Vec<f64>> {
        match self {
            GridSpec::Auto { points, ratio } => {
                let max = auto_lambda_max(problem, weights, config)?.lambda;
                if *points == 1 {
                    return Ok(alloc::vec![max]);
                }
                lambda_grid(max * ratio, max, *points)
            }
            GridSpec::Range { min, max, points } => lambda_grid(*min, *max, *points),
            GridSpec::Explicit(v) => {
                check_grid(v)?;
                Ok(v.clone())
            }
        }
    }
}

/// Resolves the grid and runs the warm-started path.
pub fn select_lambda(
    problem: &FusionProblem,
    weights: &WeightMatrix,
    grid: &GridSpec,
    config: &SolverConfig,
    opts: &BicOptions,
) -> Result<PathResult> {
    let g = grid.resolve(problem, weights, config)?;
    solution_path(problem, weights, &g, config, opts)
}
