//! Command implementations. Each writes its outputs and a manifest into the
//! output directory.

use std::path::{Path, PathBuf};

use gwpcr_core::clustering::{
    clustering_accuracy, rand_index, relative_cluster_count, ClusterLabels,
};
use gwpcr_core::compositional::{recover_compositional_coefficients, HelmertProjection};
use gwpcr_core::graph::{all_pairs_distance, weights, SpatialGraph, WeightMatrix, WeightScheme};
use gwpcr_core::selection::{assemble_path, BicOptions, GridSpec, PathResult};
use gwpcr_core::simulation::{run_replicate, summarize, Method, MetricsRow, ReplicateOutcome};
use gwpcr_core::solver::{FitResult, FusionProblem, SolverConfig, StoppingRule};
use gwpcr_core::Error as CoreError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{
    Command, EvaluateArgs, FitArgs, GraphArgs, GridArgs, ModelArgs, PathArgs, ReplayArgs,
    SimulateArgs, SolverArgs,
};
use crate::designs::{self, parse_dims};
use crate::error::{CliError, Result};
use crate::io::{self, Dataset};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub run: Command,
}

impl RunManifest {
    pub fn new(run: Command) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            run,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Runs one parsed command.
pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Path(a) => cmd_path(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Designs => {
            for name in designs::builtin_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn finish(out: &Path, run: Command) -> Result<()> {
    io::write_json(&out.join(MANIFEST_FILE), &RunManifest::new(run))
}

fn absolute_opt(p: &mut Option<PathBuf>) {
    if let Some(x) = p.as_mut() {
        *x = io::absolute(x);
    }
}

fn absolute_graph(g: &mut GraphArgs) {
    absolute_opt(&mut g.edges);
    absolute_opt(&mut g.centroids);
}

pub(crate) fn solver_config(s: &SolverArgs) -> Result<SolverConfig> {
    let config = SolverConfig {
        gamma: s.gamma,
        vartheta: s.vartheta,
        tol_primal: s.tol,
        tol_dual: s.tol,
        max_iter: s.max_iter,
        stopping: if s.dual_stopping {
            StoppingRule::PrimalDual
        } else {
            StoppingRule::Primal
        },
        ..SolverConfig::default()
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn parse_scheme(m: &ModelArgs) -> Result<(WeightScheme, f64)> {
    let scheme = WeightScheme::parse(&m.scheme).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scheme `{}` (expected constant, adjacency, exponential or adjusted)",
            m.scheme
        ))
    })?;
    let r = match (scheme.uses_decay(), m.r) {
        (true, Some(r)) if r > 0.0 && r.is_finite() => r,
        (true, Some(r)) => return Err(CliError::Usage(format!("--r must be positive, got {r}"))),
        (true, None) => return Err(CliError::Usage(format!("scheme `{}` needs --r", m.scheme))),
        (false, _) => f64::INFINITY,
    };
    Ok((scheme, r))
}

fn load_graph(g: &GraphArgs, data: &Dataset) -> Result<SpatialGraph> {
    let given = [
        g.edges.is_some(),
        g.centroids.is_some(),
        g.lattice.is_some(),
    ];
    if given.iter().filter(|b| **b).count() != 1 {
        return Err(CliError::Usage(
            "give exactly one of --edges, --centroids with --threshold, or --lattice".into(),
        ));
    }
    if let Some(path) = &g.edges {
        return io::read_edges(path, &data.ids);
    }
    if let Some(path) = &g.centroids {
        let threshold = g
            .threshold
            .ok_or_else(|| CliError::Usage("--centroids needs --threshold".into()))?;
        let points = io::read_centroids(path, &data.ids)?;
        return Ok(SpatialGraph::from_centroids(&points, threshold)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .with_labels(data.ids.clone())?);
    }
    let dims = g.lattice.as_deref().unwrap_or_default();
    let (rows, cols) =
        parse_dims(dims).ok_or_else(|| CliError::Usage(format!("bad lattice size `{dims}`")))?;
    if rows * cols != data.n() {
        return Err(CliError::Usage(format!(
            "lattice {rows}x{cols} has {} units but the data has {}",
            rows * cols,
            data.n()
        )));
    }
    Ok(SpatialGraph::lattice(rows, cols)?.with_labels(data.ids.clone())?)
}

/// Data, graph distances and the factored problem shared by fit and path.
struct Prepared {
    data: Dataset,
    graph: SpatialGraph,
    problem: FusionProblem,
}

fn prepare(data: &Path, graph: &GraphArgs, config: &SolverConfig) -> Result<Prepared> {
    let data = io::read_dataset(data)?;
    let graph = load_graph(graph, &data)?;
    let problem = FusionProblem::complete(data.design()?, config)?;
    Ok(Prepared {
        data,
        graph,
        problem,
    })
}

fn weight_matrix(graph: &SpatialGraph, scheme: WeightScheme, r: f64) -> Result<WeightMatrix> {
    Ok(weights(&all_pairs_distance(graph), scheme, r)?)
}

#[derive(Debug, Serialize)]
struct UnitEstimate<'a> {
    id: &'a str,
    cluster: usize,
    beta: Vec<f64>,
    beta_composition: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ClusterEstimate {
    cluster: usize,
    size: usize,
    beta: Vec<f64>,
    beta_composition: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct FitArtifact<'a> {
    scheme: &'static str,
    r: Option<f64>,
    lambda: f64,
    objective: f64,
    residual_sum_of_squares: f64,
    converged: bool,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    clusters: usize,
    eta: Vec<f64>,
    cluster_coefficients: Vec<ClusterEstimate>,
    units: Vec<UnitEstimate<'a>>,
}

fn write_fit(
    out: &Path,
    prep: &Prepared,
    fit: &FitResult,
    labels: &ClusterLabels,
    scheme: WeightScheme,
    r: f64,
) -> Result<()> {
    let proj = HelmertProjection::new(prep.data.p())?;
    let coef = |i: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let b = fit.beta.row(i).transpose();
        let full = recover_compositional_coefficients(&b, &proj)?;
        Ok((b.iter().copied().collect(), full.iter().copied().collect()))
    };
    let mut units = Vec::with_capacity(prep.data.n());
    for (i, id) in prep.data.ids.iter().enumerate() {
        let (beta, beta_composition) = coef(i)?;
        units.push(UnitEstimate {
            id,
            cluster: labels.labels()[i],
            beta,
            beta_composition,
        });
    }
    let sizes = labels.sizes();
    let mut clusters = Vec::with_capacity(labels.k());
    for (c, size) in sizes.iter().enumerate() {
        let first = labels
            .labels()
            .iter()
            .position(|&l| l == c)
            .expect("nonempty cluster");
        let (beta, beta_composition) = coef(first)?;
        clusters.push(ClusterEstimate {
            cluster: c,
            size: *size,
            beta,
            beta_composition,
        });
    }
    let artifact = FitArtifact {
        scheme: scheme.name(),
        r: scheme.uses_decay().then_some(r),
        lambda: fit.lambda,
        objective: fit.objective,
        residual_sum_of_squares: fit.residual_sum_of_squares(prep.problem.design()),
        converged: fit.converged,
        iterations: fit.iterations,
        primal_residual: fit.primal_residual,
        dual_residual: fit.dual_residual,
        clusters: labels.k(),
        eta: fit.eta.iter().copied().collect(),
        cluster_coefficients: clusters,
        units,
    };
    io::write_json(&out.join("fit.json"), &artifact)?;
    let rows: Vec<Vec<String>> = prep
        .data
        .ids
        .iter()
        .zip(labels.labels())
        .map(|(id, l)| vec![id.clone(), l.to_string()])
        .collect();
    io::write_table(&out.join("clusters.csv"), &["id", "cluster"], &rows)
}

pub fn cmd_fit(mut a: FitArgs) -> Result<()> {
    a.data = io::absolute(&a.data);
    absolute_graph(&mut a.graph);
    let (scheme, r) = parse_scheme(&a.model)?;
    let config = solver_config(&a.model.solver)?.with_lambda(a.lambda);
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let prep = prepare(&a.data, &a.graph, &config)?;
    let w = weight_matrix(&prep.graph, scheme, r)?;
    let fit = prep.problem.fit(&w, &config)?;
    let labels = gwpcr_core::clustering::extract_clusters(&fit, prep.data.n());
    io::ensure_dir(&a.out)?;
    write_fit(&a.out, &prep, &fit, &labels, scheme, r)?;
    println!(
        "lambda={} clusters={} objective={} converged={} iterations={}",
        fit.lambda,
        labels.k(),
        fit.objective,
        fit.converged,
        fit.iterations
    );
    let out = a.out.clone();
    finish(&out, Command::Fit(a))?;
    if !fit.converged {
        log::warn!(
            "fit did not converge in {} iterations (primal residual {})",
            fit.iterations,
            fit.primal_residual
        );
    }
    Ok(())
}

fn grid_spec(g: &GridArgs) -> Result<GridSpec> {
    if let Some(l) = g.lambda {
        return Ok(GridSpec::Explicit(vec![l]));
    }
    if let Some(text) = &g.grid {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || CliError::Usage(format!("--grid expects min,max,count, got `{text}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        return Ok(GridSpec::Range {
            min: parts[0].parse().map_err(|_| bad())?,
            max: parts[1].parse().map_err(|_| bad())?,
            points: parts[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(GridSpec::default())
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{flag}: `{s}` is not a positive number")))
        })
        .collect()
}

/// Fits every grid point, warm-started in order or independently in
/// parallel.
pub fn path_fits(
    problem: &FusionProblem,
    w: &WeightMatrix,
    grid: &[f64],
    config: &SolverConfig,
    parallel: bool,
) -> Result<Vec<FitResult>> {
    let pw = problem.pairs().weights_of(w)?;
    if parallel {
        return Ok(grid
            .par_iter()
            .map(|&l| problem.fit_pair_weights(&pw, &config.with_lambda(l), None))
            .collect::<Result<Vec<_>, _>>()?);
    }
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &l in grid {
        let start = fits.last().map(|f| &f.state);
        fits.push(problem.fit_pair_weights(&pw, &config.with_lambda(l), start)?);
    }
    Ok(fits)
}

fn path_rows(fits: &[FitResult], path: Option<&PathResult>, n: usize) -> Vec<Vec<String>> {
    fits.iter()
        .enumerate()
        .map(|(i, f)| {
            let (bic, k) = match path {
                Some(p) => (p.points[i].bic, p.points[i].clusters.k()),
                None => (
                    f64::INFINITY,
                    gwpcr_core::clustering::extract_clusters(f, n).k(),
                ),
            };
            vec![
                f.lambda.to_string(),
                bic.to_string(),
                k.to_string(),
                f.converged.to_string(),
                f.iterations.to_string(),
                f.objective.to_string(),
                (path.map(|p| p.selected) == Some(i)).to_string(),
            ]
        })
        .collect()
}

const PATH_HEADER: [&str; 7] = [
    "lambda",
    "bic",
    "clusters",
    "converged",
    "iterations",
    "objective",
    "selected",
];

fn no_convergence(fits: &[FitResult]) -> CliError {
    let best = fits
        .iter()
        .map(|f| f.primal_residual)
        .fold(f64::INFINITY, f64::min);
    CliError::Numerical(format!(
        "none of the {} fits converged; smallest primal residual {best}; try a larger --max-iter or --tol",
        fits.len()
    ))
}

pub fn cmd_path(mut a: PathArgs) -> Result<()> {
    a.data = io::absolute(&a.data);
    absolute_graph(&mut a.graph);
    let config = solver_config(&a.model.solver)?;
    let scheme = WeightScheme::parse(&a.model.scheme)
        .ok_or_else(|| CliError::Usage(format!("unknown scheme `{}`", a.model.scheme)))?;
    let sweep = match &a.r_sweep {
        Some(text) if scheme.uses_decay() => Some(parse_list(text, "--r-sweep")?),
        Some(_) => {
            return Err(CliError::Usage(format!(
                "scheme `{}` has no decay to sweep",
                scheme.name()
            )))
        }
        None => None,
    };
    let prep = prepare(&a.data, &a.graph, &config)?;
    let spec = grid_spec(&a.grid)?;
    let opts = BicOptions::default();
    io::ensure_dir(&a.out)?;

    let run_one = |r: f64| -> Result<(Vec<FitResult>, std::result::Result<PathResult, CoreError>)> {
        let w = weight_matrix(&prep.graph, scheme, r)?;
        let grid = spec.resolve(&prep.problem, &w, &config)?;
        let fits = path_fits(&prep.problem, &w, &grid, &config, a.parallel)?;
        let path = assemble_path(&prep.problem, fits.clone(), &opts);
        Ok((fits, path))
    };

    let r = match &sweep {
        Some(values) => {
            let mut rows = Vec::new();
            let mut best: Option<(f64, f64)> = None;
            for &r in values {
                let (_, path) = run_one(r)?;
                let (lambda, bic, k) = match &path {
                    Ok(p) => (
                        p.best().lambda.to_string(),
                        p.best().bic,
                        p.best().clusters.k().to_string(),
                    ),
                    Err(_) => ("-".into(), f64::INFINITY, "-".into()),
                };
                if bic < best.map_or(f64::INFINITY, |b| b.1) {
                    best = Some((r, bic));
                }
                rows.push(vec![r.to_string(), lambda, bic.to_string(), k]);
            }
            io::write_table(
                &a.out.join("r_sweep.csv"),
                &["r", "lambda", "bic", "clusters"],
                &rows,
            )?;
            match best {
                Some((r, _)) => r,
                None => {
                    return Err(CliError::Numerical(
                        "no decay value produced a converged fit".into(),
                    ))
                }
            }
        }
        None => parse_scheme(&a.model)?.1,
    };

    let (fits, path) = run_one(r)?;
    let n = prep.data.n();
    io::write_table(
        &a.out.join("path.csv"),
        &PATH_HEADER,
        &path_rows(&fits, path.as_ref().ok(), n),
    )?;
    let out = a.out.clone();
    let path = match path {
        Ok(p) => p,
        Err(CoreError::NoConvergedFit) => {
            finish(&out, Command::Path(a))?;
            return Err(no_convergence(&fits));
        }
        Err(e) => return Err(e.into()),
    };
    let best = path.best();
    write_fit(&out, &prep, &best.fit, &best.clusters, scheme, r)?;
    println!(
        "selected lambda={} bic={} clusters={}{}",
        best.lambda,
        best.bic,
        best.clusters.k(),
        if scheme.uses_decay() {
            format!(" r={r}")
        } else {
            String::new()
        }
    );
    finish(&out, Command::Path(a))
}

/// Methods named on the command line, with decays from `--r` or the design.
pub fn simulation_methods(a: &SimulateArgs, design: &designs::NamedDesign) -> Result<Vec<Method>> {
    let names: Vec<String> = if a.methods.is_empty() {
        [
            "constant",
            "pure-adjacency",
            "spatial-pairwise",
            "spatial-adjacency",
        ]
        .map(String::from)
        .to_vec()
    } else {
        a.methods.clone()
    };
    names
        .iter()
        .map(|name| {
            let r = a.r.or(match name.as_str() {
                "spatial-pairwise" | "exponential" => Some(design.pairwise_r),
                "spatial-adjacency" | "adjusted" => Some(design.adjacency_r),
                _ => None,
            });
            Method::parse(name, r).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub const METRICS_HEADER: [&str; 15] = [
    "design",
    "method",
    "r",
    "replications",
    "converged",
    "RI",
    "CA",
    "RCC",
    "bias_beta",
    "mse_beta",
    "bias_eta",
    "mse_eta",
    "mse_beta_full",
    "mse_eta_full",
    "mean_clusters",
];

pub fn metrics_row(row: &MetricsRow) -> Vec<String> {
    let m = row.metrics.as_ref();
    vec![
        row.design.clone(),
        row.method.name().to_string(),
        fmt_opt(row.method.r()),
        row.replications.to_string(),
        row.converged.to_string(),
        fmt_opt(m.map(|m| m.rand_index)),
        fmt_opt(m.map(|m| m.accuracy)),
        fmt_opt(m.map(|m| m.rcc)),
        fmt_opt(m.map(|m| m.bias_beta)),
        fmt_opt(m.map(|m| m.mse_beta)),
        fmt_opt(m.map(|m| m.bias_eta)),
        fmt_opt(m.map(|m| m.mse_eta)),
        fmt_opt(m.map(|m| m.mse_beta_full)),
        fmt_opt(m.map(|m| m.mse_eta_full)),
        fmt_opt(m.map(|m| m.mean_clusters)),
    ]
}

/// Runs replicates in parallel. Each replicate seeds its own generator, so
/// the outcome does not depend on scheduling.
pub fn simulate_outcomes(
    design: &gwpcr_core::simulation::SimulationDesign,
    methods: &[Method],
    config: &gwpcr_core::simulation::ComparisonConfig,
    replications: u64,
) -> Result<Vec<ReplicateOutcome>> {
    let per_rep: Vec<Vec<ReplicateOutcome>> = (0..replications)
        .into_par_iter()
        .map(|rep| run_replicate(design, methods, config, rep))
        .collect::<Result<_, _>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

pub fn cmd_simulate(mut a: SimulateArgs) -> Result<()> {
    if a.replications == 0 {
        return Err(CliError::Usage("--R must be at least 1".into()));
    }
    if Path::new(&a.design).is_file() {
        a.design = io::absolute(Path::new(&a.design))
            .to_string_lossy()
            .into_owned();
    }
    let mut named = designs::resolve_design(&a.design)?;
    if let Some(seed) = a.seed {
        named.design.seed = seed;
    }
    let methods = simulation_methods(&a, &named)?;
    let config = gwpcr_core::simulation::ComparisonConfig {
        solver: solver_config(&a.solver)?,
        grid: grid_spec(&a.grid)?,
        bic: BicOptions::default(),
    };
    let design = &named.design;
    log::info!(
        "simulating {} ({} units, {} clusters): {} replications x {} methods",
        design.name,
        design.n(),
        design.partition.k(),
        a.replications,
        methods.len()
    );
    let outcomes = simulate_outcomes(design, &methods, &config, a.replications)?;
    let rows: Vec<MetricsRow> = methods
        .iter()
        .map(|m| summarize(design, *m, &outcomes))
        .collect::<Result<_, _>>()?;
    io::ensure_dir(&a.out)?;
    let table: Vec<Vec<String>> = rows.iter().map(metrics_row).collect();
    io::write_table(&a.out.join("metrics.csv"), &METRICS_HEADER, &table)?;
    let reps: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            let e = o.estimate.as_ref();
            vec![
                o.method.name().to_string(),
                fmt_opt(o.method.r()),
                o.replicate.to_string(),
                e.is_some().to_string(),
                fmt_opt(e.map(|e| e.lambda)),
                e.map_or("-".into(), |e| e.labels.k().to_string()),
                fmt_opt(e.map(|e| e.rand_index)),
                fmt_opt(e.map(|e| e.accuracy)),
            ]
        })
        .collect();
    io::write_table(
        &a.out.join("replicates.csv"),
        &[
            "method",
            "r",
            "replicate",
            "converged",
            "lambda",
            "clusters",
            "RI",
            "CA",
        ],
        &reps,
    )?;
    println!("{}", METRICS_HEADER[1..8].join("\t"));
    for row in &table {
        println!("{}", row[1..8].join("\t"));
    }
    let out = a.out.clone();
    finish(&out, Command::Simulate(a))
}

/// RI, CA and RCC of `estimate` against `truth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub rand_index: f64,
    pub accuracy: f64,
    pub rcc: f64,
}

pub fn evaluate_files(truth: &Path, estimate: &Path, true_k: Option<usize>) -> Result<Evaluation> {
    let t_raw = io::read_labels(truth)?;
    let ids: Vec<String> = t_raw.iter().map(|(id, _)| id.clone()).collect();
    let t = io::labels_for(truth, &t_raw, &ids)?;
    let e_raw = io::read_labels(estimate)?;
    let e = io::labels_for(estimate, &e_raw, &ids)?;
    let k = true_k.unwrap_or(t.k());
    Ok(Evaluation {
        rand_index: rand_index(&t, &e)?,
        accuracy: clustering_accuracy(&t, &e)?,
        rcc: relative_cluster_count(&[e.k()], k).map_err(|e| CliError::Usage(e.to_string()))?,
    })
}

pub fn cmd_evaluate(mut a: EvaluateArgs) -> Result<()> {
    a.truth = io::absolute(&a.truth);
    a.estimate = io::absolute(&a.estimate);
    let ev = evaluate_files(&a.truth, &a.estimate, a.true_k)?;
    println!("RI={}\nCA={}\nRCC={}", ev.rand_index, ev.accuracy, ev.rcc);
    io::ensure_dir(&a.out)?;
    io::write_table(
        &a.out.join("evaluation.csv"),
        &["metric", "value"],
        &[
            vec!["RI".into(), ev.rand_index.to_string()],
            vec!["CA".into(), ev.accuracy.to_string()],
            vec!["RCC".into(), ev.rcc.to_string()],
        ],
    )?;
    let out = a.out.clone();
    finish(&out, Command::Evaluate(a))
}

pub fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let mut run = manifest.run;
    if let Some(out) = a.out {
        match &mut run {
            Command::Fit(x) => x.out = out,
            Command::Path(x) => x.out = out,
            Command::Simulate(x) => x.out = out,
            Command::Evaluate(x) => x.out = out,
            Command::Replay(_) | Command::Designs => {}
        }
    }
    match run {
        Command::Replay(_) => Err(CliError::Usage("a manifest cannot record a replay".into())),
        other => self::run(other),
    }
}
