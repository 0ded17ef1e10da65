//! Log-contrast preprocessing for compositional predictors.
//!
//! Compositions are log transformed, projected onto the orthonormal Helmert
//! basis of the sum-to-zero subspace and centered together with the
//! non-compositional covariates and the response.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// An `n x p` matrix of nonnegative proportions whose rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionalMatrix {
    values: DMatrix<f64>,
}

impl CompositionalMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty("composition"));
        }
        for (i, row) in values.row_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidComposition {
                    row: i,
                    reason: format!("entry {v} is negative or not finite"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidComposition {
                    row: i,
                    reason: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self { values })
    }

    /// Normalizes each row by its sum. Rows must be nonnegative with a
    /// positive sum.
    pub fn from_unnormalized(mut values: DMatrix<f64>) -> Result<Self> {
        for (i, mut row) in values.row_iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::ZeroRow(i));
            }
            row /= sum;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// Elementwise logarithm. Zero cells are replaced by half of the smallest
/// strictly positive entry of the whole matrix before taking the log.
pub fn log_transform(x: &CompositionalMatrix) -> Result<DMatrix<f64>> {
    let v = x.values();
    for (i, row) in v.row_iter().enumerate() {
        if row.iter().all(|e| *e == 0.0) {
            return Err(Error::ZeroRow(i));
        }
    }
    let min_positive = v
        .iter()
        .copied()
        .filter(|e| *e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let fill = min_positive / 2.0;
    Ok(v.map(|e| if e > 0.0 { e.ln() } else { fill.ln() }))
}

/// Helmert sub-matrix `H` ((p-1) x p) and its inverse map `M1` (p x (p-1)).
///
/// Row `k` (1-based) is `(1, .., 1, -k, 0, .., 0) / sqrt(k (k + 1))`: positive
/// over the first `k` components, negative at component `k + 1`. The rows are
/// orthonormal and orthogonal to the ones vector, so `M1 = H^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelmertProjection {
    h: DMatrix<f64>,
    m1: DMatrix<f64>,
}

impl HelmertProjection {
    pub fn new(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!(
                "Helmert projection needs p >= 2, got {p}"
            )));
        }
        let mut h = DMatrix::zeros(p - 1, p);
        for k in 1..p {
            let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
            for j in 0..k {
                h[(k - 1, j)] = scale;
            }
            h[(k - 1, k)] = -(k as f64) * scale;
        }
        let m1 = h.transpose();
        Ok(Self { h, m1 })
    }

    pub fn p(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn m1(&self) -> &DMatrix<f64> {
        &self.m1
    }

    /// Maps sum-to-zero coefficients to the unconstrained (p-1)-space.
    pub fn project(&self, beta_tilde: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("compositional coefficients", self.p(), beta_tilde.len())?;
        Ok(&self.h * beta_tilde)
    }
}

/// Shorthand for [`HelmertProjection::new`].
pub fn helmert_projection(p: usize) -> Result<HelmertProjection> {
    HelmertProjection::new(p)
}

/// `beta_tilde = M1 beta`: back to the sum-to-zero compositional scale.
pub fn recover_compositional_coefficients(
    beta: &DVector<f64>,
    proj: &HelmertProjection,
) -> Result<DVector<f64>> {
    check_len("projected coefficients", proj.p() - 1, beta.len())?;
    Ok(proj.m1() * beta)
}

/// Column means removed from each block during centering.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub x1_means: DVector<f64>,
    pub x2_means: DVector<f64>,
    pub y_mean: f64,
}

/// Unconstrained regression design: `y = X1 beta_i + X2 eta + e` row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedDesign {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub y: DVector<f64>,
    pub centering: Centering,
}

impl TransformedDesign {
    /// Wraps already prepared blocks without any centering.
    pub fn from_parts(x1: DMatrix<f64>, x2: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("response"));
        }
        check_len("rows of X1", n, x1.nrows())?;
        check_len("rows of X2", n, x2.nrows())?;
        if x1.ncols() == 0 {
            return Err(Error::Empty("compositional design"));
        }
        let centering = Centering {
            x1_means: DVector::zeros(x1.ncols()),
            x2_means: DVector::zeros(x2.ncols()),
            y_mean: 0.0,
        };
        Ok(Self {
            x1,
            x2,
            y,
            centering,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Dimension of each unit's coefficient vector (p - 1).
    pub fn dim(&self) -> usize {
        self.x1.ncols()
    }

    pub fn q(&self) -> usize {
        self.x2.ncols()
    }

    /// Rescales every row by `sqrt(w_i)` so the squared loss becomes
    /// `sum_i w_i r_i^2`.
    pub fn with_observation_weights(mut self, weights: &[f64]) -> Result<Self> {
        check_len("observation weights", self.n(), weights.len())?;
        for (i, w) in weights.iter().enumerate() {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "observation weight {w} at row {i} must be positive"
                )));
            }
            let s = w.sqrt();
            self.x1.row_mut(i).scale_mut(s);
            self.x2.row_mut(i).scale_mut(s);
            self.y[i] *= s;
        }
        Ok(self)
    }
}

/// Log transform, Helmert projection, then centering of every block. No
/// intercept column is ever added; a covariate that is constant across units
/// is rejected.
pub fn build_design(
    x: &CompositionalMatrix,
    x2: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<TransformedDesign> {
    let n = x.n();
    check_len("rows of X2", n, x2.nrows())?;
    check_len("response length", n, y.len())?;
    let proj = HelmertProjection::new(x.p())?;
    let z = log_transform(x)?;
    let mut x1 = z * proj.m1();
    let mut x2 = x2.clone();
    let mut y = y.clone();

    let x1_means = center_columns(&mut x1, "X1")?;
    let x2_means = center_columns(&mut x2, "X2")?;
    let y_mean = y.mean();
    y.add_scalar_mut(-y_mean);

    Ok(TransformedDesign {
        x1,
        x2,
        y,
        centering: Centering {
            x1_means,
            x2_means,
            y_mean,
        },
    })
}

fn center_columns(m: &mut DMatrix<f64>, block: &'static str) -> Result<DVector<f64>> {
    let n = m.nrows();
    let mut means = Vec::with_capacity(m.ncols());
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let reference = mean.abs().max(1.0);
        if n > 1 && scale <= 1e-12 * reference {
            return Err(Error::DegenerateColumn { block, column: j });
        }
        means.push(mean);
    }
    Ok(DVector::from_vec(means))
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
