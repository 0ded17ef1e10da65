//! Synthetic data generation over spatial cluster designs and replicated
//! method comparisons.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clustering::{
    as_row, clustering_accuracy, coefficient_bias, coefficient_mse, coefficient_mse_full,
    rand_index, relative_cluster_count, ClusterLabels,
};
use crate::compositional::{build_design, CompositionalMatrix, TransformedDesign};
use crate::error::{Error, Result};
use crate::graph::{
    all_pairs_distance, weights, DistanceMatrix, SpatialGraph, WeightMatrix, WeightScheme,
};
use crate::selection::{select_lambda, BicOptions, GridSpec};
use crate::solver::{FusionProblem, SolverConfig};

/// Ground truth for one simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub name: String,
    pub graph: SpatialGraph,
    pub partition: ClusterLabels,
    /// `K x (p - 1)` coefficients, one row per true cluster.
    pub beta_by_cluster: DMatrix<f64>,
    pub eta_true: DVector<f64>,
    pub noise_sd: f64,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
}

pub const DEFAULT_P: usize = 3;
pub const DEFAULT_Q: usize = 2;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.1;

impl SimulationDesign {
    /// Design with the default composition size, covariates
    /// (`eta = (1, 1)`) and noise variance 0.1.
    pub fn with_defaults(
        name: &str,
        graph: SpatialGraph,
        partition: ClusterLabels,
        beta_by_cluster: DMatrix<f64>,
        seed: u64,
    ) -> Result<Self> {
        Self {
            name: name.to_string(),
            graph,
            partition,
            beta_by_cluster,
            eta_true: DVector::from_element(DEFAULT_Q, 1.0),
            noise_sd: DEFAULT_NOISE_VARIANCE.sqrt(),
            p: DEFAULT_P,
            q: DEFAULT_Q,
            seed,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.partition.n() != self.graph.n() {
            return Err(Error::DimensionMismatch {
                what: "partition units",
                expected: self.graph.n(),
                found: self.partition.n(),
            });
        }
        if self.partition.k() != self.beta_by_cluster.nrows() {
            return Err(Error::DimensionMismatch {
                what: "cluster coefficient rows",
                expected: self.partition.k(),
                found: self.beta_by_cluster.nrows(),
            });
        }
        if self.p < 2 || self.beta_by_cluster.ncols() != self.p - 1 {
            return Err(Error::DimensionMismatch {
                what: "cluster coefficient columns",
                expected: self.p.saturating_sub(1),
                found: self.beta_by_cluster.ncols(),
            });
        }
        if self.eta_true.len() != self.q {
            return Err(Error::DimensionMismatch {
                what: "true eta",
                expected: self.q,
                found: self.eta_true.len(),
            });
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// `n x (p - 1)` per-unit true coefficients.
    pub fn true_beta(&self) -> DMatrix<f64> {
        let d = self.p - 1;
        DMatrix::from_fn(self.n(), d, |i, a| {
            self.beta_by_cluster[(self.partition.labels()[i], a)]
        })
    }
}

/// Seed for replicate `replicate` of a design seeded with `seed`
/// (SplitMix64 finalizer over both inputs).
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed
        ^ replicate
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One synthetic replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x: CompositionalMatrix,
    pub x2: DMatrix<f64>,
    pub y: DVector<f64>,
    pub design_name: String,
    pub replicate: u64,
}

impl SimulatedDataset {
    pub fn design(&self) -> Result<TransformedDesign> {
        build_design(&self.x, &self.x2, &self.y)
    }
}

/// Draws compositions as row-normalized uniforms, covariates as uniforms
/// and `y = X1 beta + X2 eta + e` with `e ~ N(0, sd^2)`. `X1` and `X2` are the
/// centered transformed blocks, so the model is exact after centering.
pub fn generate(design: &SimulationDesign, replicate: u64) -> Result<SimulatedDataset> {
    let n = design.n();
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(design.seed, replicate));
    let raw = DMatrix::from_fn(n, design.p, |_, _| 0.0);
    let mut raw = raw;
    for i in 0..n {
        for j in 0..design.p {
            // Open interval keeps every log finite.
            let mut u: f64 = rng.random();
            while u == 0.0 {
                u = rng.random();
            }
            raw[(i, j)] = u;
        }
    }
    let x = CompositionalMatrix::from_unnormalized(raw)?;
    let mut x2 = DMatrix::zeros(n, design.q);
    for i in 0..n {
        for j in 0..design.q {
            x2[(i, j)] = rng.random::<f64>();
        }
    }
    let placeholder = DVector::zeros(n);
    let centered = build_design(&x, &x2, &placeholder)?;
    let beta = design.true_beta();
    let normal = Normal::new(0.0, design.noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let signal = (centered.x1.row(i) * beta.row(i).transpose())[(0, 0)]
            + if design.q > 0 {
                (centered.x2.row(i) * &design.eta_true)[(0, 0)]
            } else {
                0.0
            };
        let noise = if design.noise_sd > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        y[i] = signal + noise;
    }
    Ok(SimulatedDataset {
        x,
        x2,
        y,
        design_name: design.name.clone(),
        replicate,
    })
}

/// Quadrant partition of a `rows x cols` lattice: top-left, top-right,
/// bottom-left, bottom-right.
pub fn quadrant_partition(rows: usize, cols: usize) -> ClusterLabels {
    let raw: Vec<usize> = (0..rows * cols)
        .map(|v| {
            let (r, c) = (v / cols, v % cols);
            2 * usize::from(r >= rows.div_ceil(2)) + usize::from(c >= cols.div_ceil(2))
        })
        .collect();
    ClusterLabels::from_raw(&raw)
}

/// Default cluster centres for the lattice design, one per quadrant.
pub const LATTICE_BETA: [[f64; 2]; 4] = [[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]];
pub const LATTICE_SEED: u64 = 20_240_917;

/// Rook lattice with the quadrant partition and default coefficients.
pub fn lattice_design(rows: usize, cols: usize) -> Result<SimulationDesign> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter(format!(
            "lattice design needs at least 2x2 units, got {rows}x{cols}"
        )));
    }
    let graph = SpatialGraph::lattice(rows, cols)?;
    let partition = quadrant_partition(rows, cols);
    let flat: Vec<f64> = LATTICE_BETA.iter().flatten().copied().collect();
    let beta = DMatrix::from_row_slice(4, 2, &flat);
    SimulationDesign::with_defaults(
        &format!("lattice-{rows}x{cols}"),
        graph,
        partition,
        beta,
        LATTICE_SEED,
    )
}

/// Competing fusion-weight specifications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Unweighted pairwise fusion.
    Constant,
    /// Fusion only between adjacent units.
    PureAdjacency,
    /// `exp(-d / r)` weights.
    SpatialPairwise { r: f64 },
    /// Adjacent pairs weighted 1, `exp(-d / r)` beyond.
    SpatialAdjacency { r: f64 },
}

impl Method {
    pub fn scheme(&self) -> WeightScheme {
        match self {
            Method::Constant => WeightScheme::Constant,
            Method::PureAdjacency => WeightScheme::Adjacency,
            Method::SpatialPairwise { .. } => WeightScheme::Exponential,
            Method::SpatialAdjacency { .. } => WeightScheme::Adjusted,
        }
    }

    pub fn r(&self) -> Option<f64> {
        match self {
            Method::SpatialPairwise { r } | Method::SpatialAdjacency { r } => Some(*r),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Constant => "constant",
            Method::PureAdjacency => "pure-adjacency",
            Method::SpatialPairwise { .. } => "spatial-pairwise",
            Method::SpatialAdjacency { .. } => "spatial-adjacency",
        }
    }

    /// Parses a method name; `r` is required by the two decaying methods.
    pub fn parse(name: &str, r: Option<f64>) -> Result<Self> {
        let need_r =
            || r.ok_or_else(|| Error::InvalidParameter(format!("method `{name}` needs a decay r")));
        match name {
            "constant" => Ok(Method::Constant),
            "pure-adjacency" | "adjacency" => Ok(Method::PureAdjacency),
            "spatial-pairwise" | "exponential" => Ok(Method::SpatialPairwise { r: need_r()? }),
            "spatial-adjacency" | "adjusted" => Ok(Method::SpatialAdjacency { r: need_r()? }),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }

    pub fn weights(&self, d: &DistanceMatrix) -> Result<WeightMatrix> {
        weights(d, self.scheme(), self.r().unwrap_or(1.0))
    }
}

/// Solver, grid and criterion settings shared by every replicate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonConfig {
    pub solver: SolverConfig,
    pub grid: GridSpec,
    pub bic: BicOptions,
}

/// What one method produced on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub method: Method,
    pub replicate: u64,
    /// `None` when no fit on the path converged.
    pub estimate: Option<ReplicateEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEstimate {
    pub lambda: f64,
    pub labels: ClusterLabels,
    pub beta: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub rand_index: f64,
    pub accuracy: f64,
    pub iterations: usize,
}

/// Generates replicate `replicate` and fits every method on it with BIC
/// selection along the path. The `beta` system is factored once and shared
/// across methods.
pub fn run_replicate(
    design: &SimulationDesign,
    methods: &[Method],
    config: &ComparisonConfig,
    replicate: u64,
) -> Result<Vec<ReplicateOutcome>> {
    let data = generate(design, replicate)?;
    let problem = FusionProblem::complete(data.design()?, &config.solver)?;
    let distances = all_pairs_distance(&design.graph);
    methods
        .iter()
        .map(|m| {
            let w = m.weights(&distances)?;
            let estimate =
                match select_lambda(&problem, &w, &config.grid, &config.solver, &config.bic) {
                    Ok(path) => {
                        let best = path.best();
                        Some(ReplicateEstimate {
                            lambda: best.lambda,
                            rand_index: rand_index(&design.partition, &best.clusters)?,
                            accuracy: clustering_accuracy(&design.partition, &best.clusters)?,
                            labels: best.clusters.clone(),
                            beta: best.fit.beta.clone(),
                            eta: best.fit.eta.clone(),
                            iterations: path.points.iter().map(|p| p.fit.iterations).sum(),
                        })
                    }
                    Err(Error::NoConvergedFit) => None,
                    Err(e) => return Err(e),
                };
            Ok(ReplicateOutcome {
                method: *m,
                replicate,
                estimate,
            })
        })
        .collect()
}

/// Aggregated performance of one method over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub design: String,
    pub method: Method,
    pub replications: usize,
    pub converged: usize,
    /// `None` when every replicate failed to converge.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rand_index: f64,
    pub accuracy: f64,
    pub rcc: f64,
    pub bias_beta: f64,
    pub mse_beta: f64,
    pub bias_eta: f64,
    pub mse_eta: f64,
    pub mse_beta_full: f64,
    pub mse_eta_full: f64,
    pub mean_clusters: f64,
}

/// Averages the per-replicate outcomes of `method`. Replicates that failed
/// to converge are counted but excluded from the metrics.
pub fn summarize(
    design: &SimulationDesign,
    method: Method,
    outcomes: &[ReplicateOutcome],
) -> Result<MetricsRow> {
    let mine: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
    let ok: Vec<&ReplicateEstimate> = mine.iter().filter_map(|o| o.estimate.as_ref()).collect();
    let metrics = if ok.is_empty() {
        None
    } else {
        let r = ok.len() as f64;
        let truth = design.true_beta();
        let betas: Vec<DMatrix<f64>> = ok.iter().map(|e| e.beta.clone()).collect();
        let eta_truth = as_row(&design.eta_true);
        let etas: Vec<DMatrix<f64>> = ok.iter().map(|e| as_row(&e.eta)).collect();
        let counts: Vec<usize> = ok.iter().map(|e| e.labels.k()).collect();
        let (bias_eta, mse_eta, mse_eta_full) = if design.q > 0 {
            (
                coefficient_bias(&etas, &eta_truth)?,
                coefficient_mse(&etas, &eta_truth)?,
                coefficient_mse_full(&etas, &eta_truth)?,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        Some(Metrics {
            rand_index: ok.iter().map(|e| e.rand_index).sum::<f64>() / r,
            accuracy: ok.iter().map(|e| e.accuracy).sum::<f64>() / r,
            rcc: relative_cluster_count(&counts, design.partition.k())?,
            bias_beta: coefficient_bias(&betas, &truth)?,
            mse_beta: coefficient_mse(&betas, &truth)?,
            bias_eta,
            mse_eta,
            mse_beta_full: coefficient_mse_full(&betas, &truth)?,
            mse_eta_full,
            mean_clusters: counts.iter().sum::<usize>() as f64 / r,
        })
    };
    Ok(MetricsRow {
        design: design.name.clone(),
        method,
        replications: mine.len(),
        converged: ok.len(),
        metrics,
    })
}

/// Runs `replications` replicates sequentially and summarizes each method.
pub fn run_comparison(
    design: &SimulationDesign,
    methods: &[Method],
    config: &ComparisonConfig,
    replications: u64,
) -> Result<Vec<MetricsRow>> {
    if replications == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replication".into(),
        ));
    }
    let mut outcomes = Vec::new();
    for rep in 0..replications {
        outcomes.extend(run_replicate(design, methods, config, rep)?);
    }
    methods
        .iter()
        .map(|m| summarize(design, *m, &outcomes))
        .collect()
}

/// Selected cluster count for each decay value on one replicate.
pub fn decay_sensitivity(
    design: &SimulationDesign,
    scheme: WeightScheme,
    decays: &[f64],
    config: &ComparisonConfig,
    replicate: u64,
) -> Result<Vec<Option<usize>>> {
    let data = generate(design, replicate)?;
    let problem = FusionProblem::complete(data.design()?, &config.solver)?;
    let distances = all_pairs_distance(&design.graph);
    decays
        .iter()
        .map(|&r| {
            let w = weights(&distances, scheme, r)?;
            match select_lambda(&problem, &w, &config.grid, &config.solver, &config.bic) {
                Ok(path) => Ok(Some(path.best().clusters.k())),
                Err(Error::NoConvergedFit) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{clusters_from_coefficients, COEFFICIENT_RTOL};

    fn small_design() -> SimulationDesign {
        let g = SpatialGraph::lattice(2, 3).unwrap();
        let part = ClusterLabels::from_raw(&[0, 0, 1, 0, 1, 1]);
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -1.0, 2.0]);
        SimulationDesign::with_defaults("tiny", g, part, beta, 11).unwrap()
    }

    #[test]
    fn defaults() {
        let d = small_design();
        assert_eq!((d.p, d.q), (3, 2));
        assert_eq!(d.eta_true.as_slice(), &[1.0, 1.0]);
        assert!((d.noise_sd * d.noise_sd - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one_and_seeded() {
        let d = small_design();
        let a = generate(&d, 3).unwrap();
        for row in a.x.values().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(a, generate(&d, 3).unwrap());
        assert_ne!(a.y, generate(&d, 4).unwrap().y);
    }

    #[test]
    fn noiseless_response_is_linear_predictor() {
        let mut d = small_design();
        d.noise_sd = 0.0;
        let data = generate(&d, 0).unwrap();
        let design = data.design().unwrap();
        let beta = d.true_beta();
        let pred: Vec<f64> = (0..d.n())
            .map(|i| {
                (design.x1.row(i) * beta.row(i).transpose())[(0, 0)]
                    + (design.x2.row(i) * &d.eta_true)[(0, 0)]
            })
            .collect();
        // Centering y removes the mean of the heterogeneous signal.
        let mean = pred.iter().sum::<f64>() / d.n() as f64;
        for (y, p) in design.y.iter().zip(&pred) {
            assert!((y - (p - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn design_validation() {
        let g = SpatialGraph::lattice(2, 2).unwrap();
        let part = ClusterLabels::from_raw(&[0, 0, 1, 1]);
        let beta = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.0, 0.0]);
        assert!(SimulationDesign::with_defaults("bad", g.clone(), part.clone(), beta, 1).is_err());
        let mut ok =
            SimulationDesign::with_defaults("ok", g, part, DMatrix::zeros(2, 2), 1).unwrap();
        ok.noise_sd = -1.0;
        assert!(ok.validated().is_err());
    }

    #[test]
    fn lattice_quadrants() {
        let d = lattice_design(10, 10).unwrap();
        assert_eq!(d.partition.k(), 4);
        assert_eq!(d.partition.sizes(), alloc::vec![25, 25, 25, 25]);
        let recovered = clusters_from_coefficients(&d.true_beta(), COEFFICIENT_RTOL);
        assert_eq!(recovered, d.partition);
    }

    #[test]
    fn seeds_mix_both_inputs() {
        assert_ne!(replicate_seed(1, 0), replicate_seed(1, 1));
        assert_ne!(replicate_seed(1, 0), replicate_seed(2, 0));
        assert_eq!(replicate_seed(5, 9), replicate_seed(5, 9));
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("constant", None).unwrap(), Method::Constant);
        assert_eq!(
            Method::parse("spatial-adjacency", Some(0.8)).unwrap(),
            Method::SpatialAdjacency { r: 0.8 }
        );
        assert!(Method::parse("spatial-pairwise", None).is_err());
        assert!(Method::parse("scad", None).is_err());
    }
}
