//! Bundled geography, partitions and the named simulation designs, plus the
//! JSON design-file format.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use gwpcr_core::clustering::ClusterLabels;
use gwpcr_core::graph::SpatialGraph;
use gwpcr_core::simulation::{lattice_design, SimulationDesign, DEFAULT_NOISE_VARIANCE};
use gwpcr_core::Error as CoreError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

const STATE_EDGES: &str = include_str!("../data/states_edges.csv");
const STATE_CENTROIDS: &str = include_str!("../data/states_centroids.csv");
const STATE_DESIGNS: [&str; 4] = [
    include_str!("../data/states_design1.csv"),
    include_str!("../data/states_design2.csv"),
    include_str!("../data/states_design3.csv"),
    include_str!("../data/states_design4.csv"),
];
const TEXAS_EDGES: &str = include_str!("../data/texas_edges.csv");
const TEXAS_CENTROIDS: &str = include_str!("../data/texas_centroids.csv");
const TEXAS_DESIGNS: [&str; 4] = [
    include_str!("../data/texas_design1.csv"),
    include_str!("../data/texas_design2.csv"),
    include_str!("../data/texas_design3.csv"),
    include_str!("../data/texas_design4.csv"),
];

/// Decay values reported alongside each bundled design, for the
/// spatial-pairwise and spatial-adjacency methods respectively.
const STATE_R: [(f64, f64); 4] = [(0.8, 0.8), (2.0, 3.5), (2.5, 3.5), (2.0, 2.5)];
const COUNTY_R: [(f64, f64); 4] = [(2.0, 2.0), (2.5, 2.5), (2.5, 3.0), (2.0, 1.0)];
const LATTICE_R: (f64, f64) = (1.5, 1.5);

const STATE_SEED: u64 = 51_000;
const COUNTY_SEED: u64 = 254_000;

/// Default cluster centres, pairwise at least 2 apart.
fn default_beta(k: usize) -> DMatrix<f64> {
    let rows: &[[f64; 2]] = match k {
        1 => &[[1.0, 1.0]],
        2 => &[[2.0, 2.0], [-2.0, -2.0]],
        3 => &[[2.0, 2.0], [-2.0, 2.0], [0.0, -2.0]],
        _ => &[[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]],
    };
    assert!(k <= 4, "no default coefficients for {k} clusters");
    DMatrix::from_fn(k, 2, |i, j| rows[i][j])
}

/// A simulation design plus the decay values to use when a run names none.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDesign {
    pub design: SimulationDesign,
    pub pairwise_r: f64,
    pub adjacency_r: f64,
}

/// Bundled geography: ids in file order, edges by index, centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Geography {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub graph: SpatialGraph,
    pub centroids: Vec<(f64, f64)>,
}

fn parse_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').collect())
}

fn bundled_geography(centroids: &str, edges: &str) -> Geography {
    let mut ids = Vec::new();
    let mut names = Vec::new();
    let mut points = Vec::new();
    for row in parse_rows(centroids) {
        ids.push(row[0].to_string());
        names.push(row[1].to_string());
        points.push((
            row[2].parse().expect("bundled x"),
            row[3].parse().expect("bundled y"),
        ));
    }
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = parse_rows(edges)
        .map(|r| (index[r[0]], index[r[1]]))
        .collect();
    let graph = SpatialGraph::from_edge_list(ids.len(), &pairs)
        .and_then(|g| g.with_labels(ids.clone()))
        .expect("bundled graph is valid");
    Geography {
        ids,
        names,
        graph,
        centroids: points,
    }
}

/// The 50 states plus DC with rook adjacency and the Hawaii-California and
/// Alaska-Washington links.
pub fn states() -> Geography {
    bundled_geography(STATE_CENTROIDS, STATE_EDGES)
}

/// The 254 Texas counties keyed by FIPS code.
pub fn texas() -> Geography {
    bundled_geography(TEXAS_CENTROIDS, TEXAS_EDGES)
}

fn bundled_partition(text: &str, ids: &[String]) -> ClusterLabels {
    let map: HashMap<&str, usize> = parse_rows(text)
        .map(|r| (r[0], r[1].parse().expect("bundled cluster index")))
        .collect();
    let raw: Vec<usize> = ids.iter().map(|id| map[id.as_str()]).collect();
    ClusterLabels::from_raw(&raw)
}

fn from_geography(
    name: &str,
    geo: Geography,
    partition: &str,
    seed: u64,
    r: (f64, f64),
) -> Result<NamedDesign> {
    let labels = bundled_partition(partition, &geo.ids);
    let beta = default_beta(labels.k());
    Ok(NamedDesign {
        design: SimulationDesign::with_defaults(name, geo.graph, labels, beta, seed)?,
        pairwise_r: r.0,
        adjacency_r: r.1,
    })
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> Vec<String> {
    let mut v: Vec<String> = (1..=4).map(|k| format!("state-{k}")).collect();
    v.extend((1..=4).map(|k| format!("county-{k}")));
    v.push("lattice".into());
    v.push("lattice-RxC".into());
    v
}

/// Looks up a bundled design: `state-1`..`state-4`, `county-1`..`county-4`,
/// `lattice` (10x10) or `lattice-RxC`.
pub fn builtin(name: &str) -> Result<NamedDesign> {
    let unknown = || CliError::Model(CoreError::UnknownDesign(name.to_string()));
    if let Some(k) = name.strip_prefix("state-") {
        let k: usize = k.parse().map_err(|_| unknown())?;
        if !(1..=4).contains(&k) {
            return Err(unknown());
        }
        return from_geography(
            name,
            states(),
            STATE_DESIGNS[k - 1],
            STATE_SEED + k as u64,
            STATE_R[k - 1],
        );
    }
    if let Some(k) = name.strip_prefix("county-") {
        let k: usize = k.parse().map_err(|_| unknown())?;
        if !(1..=4).contains(&k) {
            return Err(unknown());
        }
        return from_geography(
            name,
            texas(),
            TEXAS_DESIGNS[k - 1],
            COUNTY_SEED + k as u64,
            COUNTY_R[k - 1],
        );
    }
    let (rows, cols) = match name {
        "lattice" => (10, 10),
        other => match other.strip_prefix("lattice-").and_then(parse_dims) {
            Some(d) => d,
            None => return Err(unknown()),
        },
    };
    let mut design = lattice_design(rows, cols)?;
    design.name = name.to_string();
    Ok(NamedDesign {
        design,
        pairwise_r: LATTICE_R.0,
        adjacency_r: LATTICE_R.1,
    })
}

/// Parses `RxC`.
pub fn parse_dims(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once(['x', 'X'])?;
    Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
}

/// Graph reference inside a design file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRef {
    /// `states` or `texas`.
    Builtin(String),
    /// `from,to` CSV keyed by the partition's unit ids.
    Edges(PathBuf),
    /// `RxC`; units are `r{row}c{col}` in row-major order.
    Lattice(String),
}

/// JSON design file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub name: String,
    pub graph: GraphRef,
    /// `id,cluster` CSV, or `quadrant` for lattices.
    pub partition: String,
    /// One row of `p - 1` coefficients per cluster, in order of first
    /// appearance in the partition.
    pub beta: Vec<Vec<f64>>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_p")]
    pub p: usize,
    pub seed: u64,
    #[serde(default)]
    pub pairwise_r: Option<f64>,
    #[serde(default)]
    pub adjacency_r: Option<f64>,
}

fn default_eta() -> Vec<f64> {
    vec![1.0; gwpcr_core::simulation::DEFAULT_Q]
}

fn default_noise_sd() -> f64 {
    DEFAULT_NOISE_VARIANCE.sqrt()
}

fn default_p() -> usize {
    gwpcr_core::simulation::DEFAULT_P
}

/// Reads and validates a design file.
pub fn load_design_file(path: &Path) -> Result<NamedDesign> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: DesignFile = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let (graph, ids) = match &file.graph {
        GraphRef::Builtin(which) => {
            let geo = match which.as_str() {
                "states" => states(),
                "texas" => texas(),
                other => return Err(CliError::Usage(format!("unknown bundled graph `{other}`"))),
            };
            (geo.graph, geo.ids)
        }
        GraphRef::Lattice(dims) => {
            let (r, c) = parse_dims(dims)
                .ok_or_else(|| CliError::Usage(format!("bad lattice size `{dims}`")))?;
            let g = SpatialGraph::lattice(r, c)?;
            let ids = g.labels().to_vec();
            (g, ids)
        }
        GraphRef::Edges(edges) => {
            let labels = io::read_labels(&resolve(Path::new(&file.partition)))?;
            let ids: Vec<String> = labels.into_iter().map(|(id, _)| id).collect();
            (io::read_edges(&resolve(edges), &ids)?, ids)
        }
    };
    let partition = if file.partition == "quadrant" {
        match &file.graph {
            GraphRef::Lattice(dims) => {
                let (r, c) = parse_dims(dims).expect("checked above");
                gwpcr_core::simulation::quadrant_partition(r, c)
            }
            _ => {
                return Err(CliError::Usage(
                    "`quadrant` partition needs a lattice graph".into(),
                ))
            }
        }
    } else {
        let ppath = resolve(Path::new(&file.partition));
        let raw = io::read_labels(&ppath)?;
        io::labels_for(&ppath, &raw, &ids)?
    };
    let d = file.beta.first().map_or(0, Vec::len);
    if file.beta.iter().any(|row| row.len() != d) {
        return Err(CliError::Usage("beta rows must have equal length".into()));
    }
    let flat: Vec<f64> = file.beta.iter().flatten().copied().collect();
    let design = SimulationDesign {
        name: file.name.clone(),
        graph,
        partition,
        beta_by_cluster: DMatrix::from_row_slice(file.beta.len(), d, &flat),
        q: file.eta.len(),
        eta_true: DVector::from_vec(file.eta.clone()),
        noise_sd: file.noise_sd,
        p: file.p,
        seed: file.seed,
    }
    .validated()?;
    Ok(NamedDesign {
        design,
        pairwise_r: file.pairwise_r.unwrap_or(1.0),
        adjacency_r: file.adjacency_r.unwrap_or(1.0),
    })
}

/// A bundled name, or else a path to a design file.
pub fn resolve_design(spec: &str) -> Result<NamedDesign> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        return load_design_file(path);
    }
    builtin(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gwpcr_core::graph::all_pairs_distance;

    #[test]
    fn state_geography() {
        let g = states();
        assert_eq!(g.ids.len(), 51);
        let idx = |s: &str| g.ids.iter().position(|x| x == s).unwrap();
        assert!(g.graph.has_edge(idx("CA"), idx("HI")));
        assert!(g.graph.has_edge(idx("AK"), idx("WA")));
        assert!(all_pairs_distance(&g.graph).is_connected());
    }

    #[test]
    fn texas_geography() {
        let g = texas();
        assert_eq!(g.ids.len(), 254);
        assert!(all_pairs_distance(&g.graph).is_connected());
    }

    #[test]
    fn registry() {
        let d1 = builtin("state-1").unwrap();
        assert_eq!(d1.design.partition.k(), 3);
        assert_eq!(d1.design.n(), 51);
        for name in [
            "state-2", "state-3", "state-4", "county-1", "county-2", "county-3", "county-4",
        ] {
            let d = builtin(name).unwrap();
            assert_eq!(d.design.beta_by_cluster.nrows(), d.design.partition.k());
        }
        let lat = builtin("lattice").unwrap();
        assert_eq!(lat.design.partition.sizes(), vec![25; 4]);
        assert_eq!(builtin("lattice-4x6").unwrap().design.n(), 24);
        for bad in ["design5", "state-5", "county-0", "lattice-3"] {
            assert!(builtin(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_centres_are_separated() {
        for k in 1..=4 {
            let b = default_beta(k);
            for i in 0..k {
                for j in 0..i {
                    assert!((b.row(i) - b.row(j)).norm() >= 2.0);
                }
            }
        }
    }
}
