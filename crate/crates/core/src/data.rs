//! Core domain types: datasets, the empirical Gram matrix, hypothesis
//! specifications, and tuning configuration.
//!
//! A [`Dataset`] is an n x p design matrix together with an n-vector response.
//! No intercept column is added implicitly; callers supply columns as-is.
//! Centering and standardization are explicit, opt-in transforms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regression problem: design matrix `X` (n x p) and response `Y` (length n).
///
/// Immutable after construction; all solver and inference routines borrow it.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    /// Validates dimensions and finiteness. Requires n >= 2, p >= 1.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::invalid("design matrix has no columns"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "response length {} does not match {} rows of X",
                y.len(),
                n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite entries"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response contains non-finite entries"));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Column `j` of the design as a contiguous slice.
    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// `X'v / n` for an n-vector `v`.
    pub fn xt_dot(&self, v: &[f64]) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(
            self.p(),
            (0..self.p()).map(|j| crate::linalg::dot(self.col(j), v) / n),
        )
    }

    /// Residual `Y - X beta`.
    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut r = self.y.clone();
        for j in 0..self.p() {
            let b = beta[j];
            if b != 0.0 {
                crate::linalg::axpy(-b, self.col(j), r.as_mut_slice());
            }
        }
        r
    }

    /// Replaces the response, keeping the design. Used by nodewise regressions.
    pub(crate) fn with_response(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Dataset::new(x, y)
    }

    /// The design without column `j`, paired with column `j` as response.
    pub fn nodewise_problem(&self, j: usize) -> Result<Dataset> {
        if self.p() < 2 {
            return Err(Error::invalid("nodewise regression needs p >= 2"));
        }
        if j >= self.p() {
            return Err(Error::invalid(format!("column {j} out of range for p = {}", self.p())));
        }
        let n = self.n();
        let mut xm = DMatrix::zeros(n, self.p() - 1);
        let mut out = 0;
        for k in 0..self.p() {
            if k == j {
                continue;
            }
            xm.column_mut(out).copy_from_slice(self.col(k));
            out += 1;
        }
        let yj = DVector::from_column_slice(self.col(j));
        Dataset::with_response(xm, yj)
    }

    /// Subtracts column means of `X` and the mean of `Y`.
    ///
    /// Inference on the result concerns the centered model.
    pub fn centered(&self) -> Dataset {
        let n = self.n() as f64;
        let mut x = self.x.clone();
        for mut c in x.column_iter_mut() {
            let m = c.iter().sum::<f64>() / n;
            c.iter_mut().for_each(|v| *v -= m);
        }
        let ym = self.y.iter().sum::<f64>() / n;
        let y = self.y.map(|v| v - ym);
        Dataset { x, y }
    }
}

/// Empirical Gram matrix `X'X / n` (p x p, symmetric).
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }
}

/// Computes `X'X / n`. Symmetry is exact by construction: entry (j, k) with
/// j <= k is computed once and mirrored.
pub fn gram(dataset: &Dataset) -> GramMatrix {
    let p = dataset.p();
    let n = dataset.n() as f64;
    let mut values = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let v = crate::linalg::dot(dataset.col(j), dataset.col(k)) / n;
            values[(j, k)] = v;
            values[(k, j)] = v;
        }
    }
    GramMatrix { values }
}

/// Per-column scales produced by [`column_standardize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleVector(pub Vec<f64>);

impl ScaleVector {
    /// Identity scaling for p columns.
    pub fn ones(p: usize) -> Self {
        ScaleVector(vec![1.0; p])
    }
}

/// Rescales every column of `X` to unit empirical root-mean-square,
/// `(1/n) sum_i x_ij^2 = 1`, returning the transformed dataset and the
/// per-column scales `s_j = ||X_j||_n` so fits can be mapped back:
/// a coefficient `b` on the scaled column corresponds to `b / s_j` on the raw one.
pub fn column_standardize(dataset: &Dataset) -> Result<(Dataset, ScaleVector)> {
    let n = dataset.n() as f64;
    let p = dataset.p();
    let mut scales = Vec::with_capacity(p);
    let mut x = dataset.x().clone();
    for j in 0..p {
        let col = dataset.col(j);
        let msq = crate::linalg::dot(col, col) / n;
        let mean = col.iter().sum::<f64>() / n;
        let var = msq - mean * mean;
        if var <= 0.0 || msq == 0.0 {
            return Err(Error::ZeroVarianceColumn { column: j });
        }
        let s = msq.sqrt();
        scales.push(s);
        x.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    Ok((Dataset { x, y: dataset.y().clone() }, ScaleVector(scales)))
}

/// An ordered set of coefficient indices under test, with optional contrast
/// direction and null values.
///
/// Indices are 0-based internally; command-line and report formats use
/// 1-based coordinates.
#[derive(Debug, Clone)]
pub struct HypothesisSpec {
    /// Ordered, distinct coefficient indices (0-based).
    pub indices: Vec<usize>,
    /// Optional unit-norm contrast over all p coordinates; support must lie in `indices`.
    pub alpha: Option<DVector<f64>>,
    /// Hypothesized values, one per index.
    pub null_values: Vec<f64>,
}

impl HypothesisSpec {
    pub fn new(indices: Vec<usize>, null_values: Vec<f64>, p: usize) -> Result<Self> {
        Self::with_alpha(indices, null_values, None, p)
    }

    pub fn with_alpha(
        indices: Vec<usize>,
        null_values: Vec<f64>,
        alpha: Option<DVector<f64>>,
        p: usize,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("hypothesis index set is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for &j in &indices {
            if j >= p {
                return Err(Error::invalid(format!("index {} out of range for p = {p}", j + 1)));
            }
            if !seen.insert(j) {
                return Err(Error::invalid(format!("duplicate index {} in hypothesis", j + 1)));
            }
        }
        if null_values.len() != indices.len() {
            return Err(Error::invalid(format!(
                "{} null values for {} indices",
                null_values.len(),
                indices.len()
            )));
        }
        if let Some(a) = &alpha {
            if a.len() != p {
                return Err(Error::invalid("contrast vector length must equal p"));
            }
            let norm = a.norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("contrast must have unit norm, got {norm}")));
            }
            for (j, &v) in a.iter().enumerate() {
                if v != 0.0 && !indices.contains(&j) {
                    return Err(Error::invalid(format!(
                        "contrast support includes coordinate {} outside the hypothesis set",
                        j + 1
                    )));
                }
            }
        }
        Ok(HypothesisSpec { indices, alpha, null_values })
    }

    pub fn h(&self) -> usize {
        self.indices.len()
    }
}

/// Penalty grids and solver controls.
///
/// The main and nodewise lambda grids may be left unset, in which case they
/// are resolved per dataset as `n_lambda` log-spaced points from the smallest
/// penalty producing an all-zero fit down to `lambda_min_ratio` times it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Explicit main penalty grid; `None` resolves a default path per dataset.
    pub lambda_grid: Option<Vec<f64>>,
    /// Weight clamp grid for the second-stage penalty adjustment.
    pub lambda_prec_grid: Vec<f64>,
    /// Explicit nodewise penalty grid; `None` resolves a default path.
    pub lambda_node_grid: Option<Vec<f64>>,
    /// Coordinate-descent sweep tolerance (max coefficient change).
    pub tolerance: f64,
    /// Maximum number of full coordinate sweeps per fit.
    pub max_iterations: usize,
    /// Number of points in auto-resolved lambda paths.
    pub n_lambda: usize,
    /// Ratio of smallest to largest lambda in auto-resolved paths.
    pub lambda_min_ratio: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            lambda_grid: None,
            lambda_prec_grid: vec![0.01, 0.05, 0.1, 0.5, 1.0],
            lambda_node_grid: None,
            tolerance: 1e-7,
            max_iterations: 10_000,
            n_lambda: 50,
            lambda_min_ratio: 0.01,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("lambda_grid", &self.lambda_grid),
            ("lambda_node_grid", &self.lambda_node_grid),
        ] {
            if let Some(g) = grid {
                if g.is_empty() {
                    return Err(Error::invalid(format!("{name} is empty")));
                }
                if g.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(format!("{name} entries must be strictly positive")));
                }
            }
        }
        if self.lambda_prec_grid.is_empty() {
            return Err(Error::invalid("lambda_prec_grid is empty"));
        }
        if self.lambda_prec_grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("lambda_prec_grid entries must be strictly positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        if self.n_lambda == 0 {
            return Err(Error::invalid("n_lambda must be positive"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio <= 1.0) {
            return Err(Error::invalid("lambda_min_ratio must be in (0, 1]"));
        }
        Ok(())
    }

    /// Log-spaced descending path from `lambda_max` down to
    /// `lambda_min_ratio * lambda_max`.
    pub fn log_path(&self, lambda_max: f64) -> Vec<f64> {
        let k = self.n_lambda;
        if k == 1 {
            return vec![lambda_max];
        }
        let lmax = lambda_max.max(f64::MIN_POSITIVE);
        let lmin = lmax * self.lambda_min_ratio;
        let (la, lb) = (lmax.ln(), lmin.ln());
        (0..k)
            .map(|i| (la + (lb - la) * i as f64 / (k - 1) as f64).exp())
            .collect()
    }

    /// The main-path grid for `dataset`: explicit if set, otherwise resolved
    /// from `max_j |X_j'Y| / n`.
    pub fn resolve_lambda_grid(&self, dataset: &Dataset) -> Vec<f64> {
        if let Some(g) = &self.lambda_grid {
            let mut g = g.clone();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g.dedup();
            return g;
        }
        let corr = dataset.xt_dot(dataset.y().as_slice());
        let lambda_max = corr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.log_path(if lambda_max > 0.0 { lambda_max } else { 1.0 })
    }
}
