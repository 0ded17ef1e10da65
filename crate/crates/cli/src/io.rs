//! CSV readers for data, graph and label files, and the small writers shared
//! by every command.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use gwpcr_core::clustering::ClusterLabels;
use gwpcr_core::compositional::{build_design, CompositionalMatrix, TransformedDesign};
use gwpcr_core::graph::SpatialGraph;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Composition rows must sum to one within this before renormalization.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Parsed data CSV with rows in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub composition: CompositionalMatrix,
    pub covariates: DMatrix<f64>,
    pub response: DVector<f64>,
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn p(&self) -> usize {
        self.composition.p()
    }

    pub fn q(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn design(&self) -> Result<TransformedDesign> {
        let d = build_design(&self.composition, &self.covariates, &self.response)?;
        Ok(match &self.weights {
            Some(w) => d.with_observation_weights(w)?,
            None => d,
        })
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }
}

enum Column {
    Comp,
    Cov,
    Response,
    Weight,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn parse_number(path: &Path, line: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| {
        CliError::schema(
            path,
            line,
            format!("column `{column}`: `{raw}` is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(CliError::schema(
            path,
            line,
            format!("column `{column}` is not finite"),
        ));
    }
    Ok(v)
}

/// Reads `id, comp_1..comp_p, x_1..x_q, y` plus an optional `weight`
/// column. Composition rows within [`SUM_TOLERANCE`] of one are rescaled to
/// sum exactly to one; anything further off is rejected.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("id") {
        return Err(CliError::schema(path, 1, "first column must be `id`"));
    }
    let mut columns = Vec::with_capacity(header.len());
    for name in header.iter().skip(1) {
        let kind = if name.starts_with("comp_") {
            Column::Comp
        } else if name.starts_with("x_") {
            Column::Cov
        } else if name == "y" {
            Column::Response
        } else if name == "weight" {
            Column::Weight
        } else {
            return Err(CliError::schema(
                path,
                1,
                format!("unexpected column `{name}`"),
            ));
        };
        columns.push(kind);
    }
    let count = |want: fn(&Column) -> bool| columns.iter().filter(|c| want(c)).count();
    let p = count(|c| matches!(c, Column::Comp));
    let q = count(|c| matches!(c, Column::Cov));
    if p < 2 {
        return Err(CliError::schema(
            path,
            1,
            "need at least two `comp_` columns",
        ));
    }
    if count(|c| matches!(c, Column::Response)) != 1 {
        return Err(CliError::schema(path, 1, "need exactly one `y` column"));
    }
    let weighted = match count(|c| matches!(c, Column::Weight)) {
        0 => false,
        1 => true,
        _ => return Err(CliError::schema(path, 1, "duplicate `weight` column")),
    };

    let mut ids = Vec::new();
    let mut seen = HashMap::new();
    let (mut comp, mut cov, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        let id = rec.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(CliError::schema(path, line, "empty unit id"));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(CliError::schema(
                path,
                line,
                format!("unit `{id}` already defined on line {first}"),
            ));
        }
        let mut row = Vec::with_capacity(p);
        for (kind, (name, raw)) in columns.iter().zip(header.iter().zip(rec.iter()).skip(1)) {
            let v = parse_number(path, line, name, raw)?;
            match kind {
                Column::Comp => {
                    if v < 0.0 {
                        return Err(CliError::schema(
                            path,
                            line,
                            format!("column `{name}` is negative"),
                        ));
                    }
                    row.push(v);
                }
                Column::Cov => cov.push(v),
                Column::Response => y.push(v),
                Column::Weight => {
                    if v <= 0.0 {
                        return Err(CliError::schema(path, line, "weight must be positive"));
                    }
                    w.push(v)
                }
            }
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(CliError::schema(
                path,
                line,
                format!(
                    "composition of unit `{id}` sums to {total}, not 1 (tolerance {SUM_TOLERANCE})"
                ),
            ));
        }
        comp.extend(row.iter().map(|v| v / total));
        ids.push(id);
    }
    let n = ids.len();
    if n < 2 {
        return Err(CliError::schema(path, 1, "need at least two units"));
    }
    Ok(Dataset {
        ids,
        composition: CompositionalMatrix::new(DMatrix::from_row_slice(n, p, &comp))?,
        covariates: DMatrix::from_row_slice(n, q, &cov),
        response: DVector::from_vec(y),
        weights: weighted.then_some(w),
    })
}

fn lookup(index: &HashMap<&str, usize>, id: &str, path: &Path, line: usize) -> Result<usize> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| CliError::schema(path, line, format!("unit `{id}` is not in the data")))
}

/// Adjacency from a `from,to` edge list keyed by unit id. Every data unit
/// must appear in at least one edge.
pub fn read_edges(path: &Path, ids: &[String]) -> Result<SpatialGraph> {
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rdr = reader(path)?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(CliError::schema(
                path,
                line,
                "expected two columns `from,to`",
            ));
        }
        let a = lookup(&index, &rec[0], path, line)?;
        let b = lookup(&index, &rec[1], path, line)?;
        if a == b {
            return Err(CliError::schema(
                path,
                line,
                format!("self loop on unit `{}`", &rec[0]),
            ));
        }
        pairs.push((a, b));
    }
    let mut touched = vec![false; ids.len()];
    for &(a, b) in &pairs {
        touched[a] = true;
        touched[b] = true;
    }
    if let Some(i) = touched.iter().position(|t| !t) {
        return Err(CliError::Usage(format!(
            "unit `{}` is missing from the graph {}",
            ids[i],
            path.display()
        )));
    }
    Ok(SpatialGraph::from_edge_list(ids.len(), &pairs)?.with_labels(ids.to_vec())?)
}

/// `id,x,y` centroids (extra columns ignored) reordered to match `ids`.
pub fn read_centroids(path: &Path, ids: &[String]) -> Result<Vec<(f64, f64)>> {
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::schema(path, 1, format!("missing column `{name}`")))
    };
    let (ci, cx, cy) = (col("id")?, col("x")?, col("y")?);
    let mut points = vec![None; ids.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        let i = lookup(&index, &rec[ci], path, line)?;
        let x = parse_number(path, line, "x", &rec[cx])?;
        let y = parse_number(path, line, "y", &rec[cy])?;
        points[i] = Some((x, y));
    }
    points
        .into_iter()
        .enumerate()
        .map(|(i, pt)| {
            pt.ok_or_else(|| {
                CliError::Usage(format!(
                    "unit `{}` has no centroid in {}",
                    ids[i],
                    path.display()
                ))
            })
        })
        .collect()
}

/// `id,cluster` label file. Cluster tokens are arbitrary strings.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "cluster" {
        return Err(CliError::schema(path, 1, "expected columns `id,cluster`"));
    }
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = record_line(&rec);
        if let Some(first) = seen.insert(rec[0].to_string(), line) {
            return Err(CliError::schema(
                path,
                line,
                format!("unit `{}` already labelled on line {first}", &rec[0]),
            ));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    if out.is_empty() {
        return Err(CliError::schema(path, 1, "no labels"));
    }
    Ok(out)
}

/// Aligns a label file to `ids`, failing on any unit missing on either side.
pub fn labels_for(path: &Path, raw: &[(String, String)], ids: &[String]) -> Result<ClusterLabels> {
    let map: HashMap<&str, &str> = raw.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    if map.len() != ids.len() {
        let known: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        if let Some((extra, _)) = raw.iter().find(|(id, _)| !known.contains(id.as_str())) {
            return Err(CliError::Usage(format!(
                "unit `{extra}` in {} is unknown",
                path.display()
            )));
        }
    }
    let mut codes: HashMap<&str, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let token = map.get(id.as_str()).ok_or_else(|| {
            CliError::Usage(format!("unit `{id}` has no label in {}", path.display()))
        })?;
        let next = codes.len();
        labels.push(*codes.entry(token).or_insert(next));
    }
    Ok(ClusterLabels::from_raw(&labels))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes rows of already formatted cells. Numbers are formatted with
/// `Display`, which never depends on the locale.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}
