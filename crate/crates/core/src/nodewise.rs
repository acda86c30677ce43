//! Approximate inverse rows of the empirical Gram matrix via penalized
//! nodewise regressions.
//!
//! For each target column j, X_j is regressed on the remaining columns with
//! a (possibly two-stage, weighted) Lasso. Row j of the approximate inverse
//! is assembled as Theta_j = (1, -gamma_j') / tau_j^2 in the appropriate
//! coordinate embedding, where
//!
//! ```text
//!   tau_j^2 = (X_j - X_{-j} gamma_j)' X_j / n.
//! ```
//!
//! Storing tau_j^2 through this inner-product form makes the diagonal
//! identity (Theta_j' Sigma_hat)_j = 1 hold by construction, for any
//! stage-2 solution; at an exact minimizer it coincides with the penalized
//! objective value ||X_j - X_{-j}gamma||_n^2 + lambda ||G gamma||_1 by the
//! stationarity conditions. Off the diagonal, those same conditions bound
//! |(Theta_j' Sigma_hat)_k| by lambda_node/tau_j^2 plus a slack proportional
//! to the certificate's max violation.
//!
//! The penalty level lambda_node is shared across all regressions and chosen
//! by summed first-stage BIC; the clamp level for conservative weights is
//! then shared as well and chosen by summed second-stage BIC.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::{Dataset, TuningConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::conservative_weights;
use crate::solver::{fit_weighted_lasso, kkt_check, LassoFit, WeightVector};
use crate::tuning::bic_score;

/// Smallest tau^2 accepted before declaring the regression singular.
pub const TAU_SQ_FLOOR: f64 = 1e-12;

/// Which estimator drives the nodewise regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodewiseMethod {
    /// Single-stage plain Lasso (weights = 1).
    Plain,
    /// Two-stage conservative Lasso with clamp weights from stage 1.
    Conservative,
}

impl NodewiseMethod {
    pub fn label(&self) -> &'static str {
        match self {
            NodewiseMethod::Plain => "plain",
            NodewiseMethod::Conservative => "conservative",
        }
    }
}

/// One solved nodewise regression for target column `j`.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    /// Target column index (0-based).
    pub j: usize,
    /// Stage-1 plain-Lasso coefficients, length p - 1.
    pub gamma_lasso: DVector<f64>,
    /// Final coefficients, length p - 1 (equals `gamma_lasso` for the plain method).
    pub gamma: DVector<f64>,
    /// Clamp weights applied in stage 2, length p - 1 (all ones for plain).
    pub weight_diag: Vec<f64>,
    /// Penalized residual "variance" in inner-product form; scales row j.
    pub tau_sq: f64,
    pub lambda_node: f64,
    /// Clamp level used for stage 2; absent for the plain method.
    pub lambda_prec: Option<f64>,
    /// Active-set size of the final fit.
    pub support_size: usize,
    /// Stationarity violation of the final fit's certificate.
    pub kkt_max_violation: f64,
    pub converged: bool,
}

impl NodewiseFit {
    /// The penalized-objective form of tau^2; agrees with the stored
    /// inner-product form up to solver slack.
    pub fn tau_sq_penalized(&self, dataset: &Dataset) -> Result<f64> {
        let problem = dataset.nodewise_problem(self.j)?;
        let residual = problem.residual(&self.gamma);
        let mut weighted_l1 = 0.0;
        for k in 0..self.gamma.len() {
            weighted_l1 += self.weight_diag[k] * self.gamma[k].abs();
        }
        Ok(linalg::mean_square(residual.as_slice()) + self.lambda_node * weighted_l1)
    }
}

/// Rows of the approximate Gram inverse for the coordinates in `h`.
#[derive(Debug, Clone)]
pub struct ThetaRows {
    /// Target coordinates, ascending.
    pub h: Vec<usize>,
    /// Row vectors of length p, aligned with `h`.
    pub rows: Vec<DVector<f64>>,
    /// Shared nodewise penalty level.
    pub lambda_node: f64,
    /// Per-row tau_j^2.
    pub tau_sq: Vec<f64>,
    /// Per-row slack term `lambda_node * max_violation / tau_sq` entering the
    /// off-diagonal bound.
    pub kkt_slack: Vec<f64>,
    /// Full per-row diagnostics.
    pub fits: Vec<NodewiseFit>,
    pub method: NodewiseMethod,
}

impl ThetaRows {
    /// Position of coordinate `j` within `h`, if present.
    pub fn index_of(&self, j: usize) -> Option<usize> {
        self.h.iter().position(|&k| k == j)
    }

    /// The row for coordinate `j`, if present.
    pub fn row_for(&self, j: usize) -> Option<&DVector<f64>> {
        self.index_of(j).map(|i| &self.rows[i])
    }

    /// l1 norm of row `idx`.
    pub fn row_l1(&self, idx: usize) -> f64 {
        self.rows[idx].iter().map(|v| v.abs()).sum()
    }
}

/// Embeds a (p-1)-vector of nodewise coefficients into p coordinates,
/// skipping position `j`.
pub fn embed_gamma(j: usize, gamma: &DVector<f64>, p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    let mut idx = 0;
    for k in 0..p {
        if k == j {
            continue;
        }
        out[k] = gamma[idx];
        idx += 1;
    }
    out
}

fn validate_h(h: &[usize], p: usize) -> Result<Vec<usize>> {
    if h.is_empty() {
        return Err(Error::invalid("target index set is empty"));
    }
    let mut sorted = h.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != h.len() {
        return Err(Error::invalid("target index set has duplicates"));
    }
    if *sorted.last().unwrap() >= p {
        return Err(Error::invalid(format!(
            "target index {} out of range for p = {p}",
            sorted.last().unwrap() + 1
        )));
    }
    Ok(sorted)
}

/// The candidate grid for the shared nodewise penalty: explicit if configured,
/// otherwise a log-spaced path from the largest cross moment over `h`.
fn resolve_node_grid(dataset: &Dataset, h: &[usize], config: &TuningConfig) -> Vec<f64> {
    if let Some(g) = &config.lambda_node_grid {
        let mut g = g.clone();
        g.sort_by(|a, b| b.partial_cmp(a).unwrap());
        g.dedup();
        return g;
    }
    let mut lambda_max = 0.0_f64;
    for &j in h {
        let col = dataset.col(j);
        for k in 0..dataset.p() {
            if k == j {
                continue;
            }
            let m = (linalg::dot(dataset.col(k), col) / dataset.n() as f64).abs();
            lambda_max = lambda_max.max(m);
        }
    }
    config.log_path(if lambda_max > 0.0 { lambda_max } else { 1.0 })
}

/// Selects the shared nodewise penalty: the grid candidate minimizing the sum
/// of first-stage BIC scores over the regressions in `h` (ties broken by the
/// smaller penalty).
pub fn select_lambda_node(dataset: &Dataset, h: &[usize], config: &TuningConfig) -> Result<f64> {
    config.validate()?;
    let h = validate_h(h, dataset.p())?;
    let grid = resolve_node_grid(dataset, &h, config);

    #[derive(Clone)]
    struct Candidate {
        sum: f64,
        degenerate: bool,
        all_converged: bool,
    }
    let mut candidates =
        vec![Candidate { sum: 0.0, degenerate: false, all_converged: true }; grid.len()];

    for &j in &h {
        let problem = dataset.nodewise_problem(j)?;
        let weights = WeightVector::ones(problem.p());
        let mut warm: Option<DVector<f64>> = None;
        for (gi, &lambda) in grid.iter().enumerate() {
            let fit = fit_weighted_lasso(&problem, lambda, &weights, config, warm.as_ref())?;
            let score = bic_score(&problem, &fit);
            let c = &mut candidates[gi];
            if score == f64::NEG_INFINITY {
                c.degenerate = true;
            } else {
                c.sum += score;
            }
            if !fit.converged {
                c.all_converged = false;
            }
            warm = Some(fit.beta.clone());
        }
    }

    let usable: Vec<usize> = (0..grid.len()).filter(|&i| candidates[i].all_converged).collect();
    if usable.is_empty() {
        return Err(Error::NoConvergedFit(
            "no shared nodewise penalty converged across all target regressions".to_string(),
        ));
    }
    let nondegenerate: Vec<usize> =
        usable.iter().copied().filter(|&i| !candidates[i].degenerate).collect();
    let pool = if nondegenerate.is_empty() { usable } else { nondegenerate };
    let best = pool
        .into_iter()
        .min_by(|&a, &b| {
            candidates[a]
                .sum
                .partial_cmp(&candidates[b].sum)
                .unwrap()
                .then(grid[a].partial_cmp(&grid[b]).unwrap())
        })
        .unwrap();
    Ok(grid[best])
}

/// Stage-1 and (for the conservative method) stage-2 fits of one nodewise
/// regression at fixed penalty levels.
fn solve_nodewise(
    problem: &Dataset,
    j: usize,
    config: &TuningConfig,
    lambda_node: f64,
    method: NodewiseMethod,
    lambda_prec: Option<f64>,
    stage1: Option<&LassoFit>,
) -> Result<(LassoFit, LassoFit, Vec<f64>)> {
    let stage1 = match stage1 {
        Some(f) => f.clone(),
        None => {
            let w = WeightVector::ones(problem.p());
            fit_weighted_lasso(problem, lambda_node, &w, config, None)?
        }
    };
    match method {
        NodewiseMethod::Plain => {
            let weights = vec![1.0; problem.p()];
            Ok((stage1.clone(), stage1, weights))
        }
        NodewiseMethod::Conservative => {
            let lp = lambda_prec.ok_or_else(|| {
                Error::invalid(format!(
                    "conservative nodewise regression {} needs a clamp level",
                    j + 1
                ))
            })?;
            let weights = conservative_weights(&stage1.beta, lp)?;
            let stage2 =
                fit_weighted_lasso(problem, lambda_node, &weights, config, Some(&stage1.beta))?;
            let wd = weights.as_slice().to_vec();
            Ok((stage1, stage2, wd))
        }
    }
}

fn assemble_fit(
    dataset: &Dataset,
    problem: &Dataset,
    j: usize,
    lambda_node: f64,
    lambda_prec: Option<f64>,
    stage1: LassoFit,
    stage2: LassoFit,
    weight_diag: Vec<f64>,
) -> Result<NodewiseFit> {
    let residual = problem.residual(&stage2.beta);
    let tau_sq = linalg::dot(residual.as_slice(), dataset.col(j)) / dataset.n() as f64;
    if !(tau_sq > TAU_SQ_FLOOR) {
        return Err(Error::SingularNodewise { column: j, tau_sq });
    }
    let cert = kkt_check(problem, &stage2)?;
    Ok(NodewiseFit {
        j,
        gamma_lasso: stage1.beta,
        support_size: stage2.active_set.len(),
        converged: stage2.converged,
        gamma: stage2.beta,
        weight_diag,
        tau_sq,
        lambda_node,
        lambda_prec,
        kkt_max_violation: cert.max_violation,
    })
}

/// Solves the nodewise regression for one target column at a given shared
/// penalty, tuning the clamp level for this single regression by BIC when
/// the method is conservative.
pub fn fit_nodewise(
    dataset: &Dataset,
    j: usize,
    config: &TuningConfig,
    lambda_node: f64,
) -> Result<NodewiseFit> {
    config.validate()?;
    if !(lambda_node > 0.0) || !lambda_node.is_finite() {
        return Err(Error::invalid(format!(
            "lambda_node must be positive, got {lambda_node}"
        )));
    }
    let problem = dataset.nodewise_problem(j)?;
    let w1 = WeightVector::ones(problem.p());
    let stage1 = fit_weighted_lasso(&problem, lambda_node, &w1, config, None)?;

    // Clamp level by BIC over the configured grid, for this regression alone.
    let mut prec_grid = config.lambda_prec_grid.clone();
    prec_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    prec_grid.dedup();
    let mut best: Option<(f64, f64, LassoFit, Vec<f64>)> = None;
    for &lp in &prec_grid {
        let (_, stage2, wd) = solve_nodewise(
            &problem,
            j,
            config,
            lambda_node,
            NodewiseMethod::Conservative,
            Some(lp),
            Some(&stage1),
        )?;
        if !stage2.converged {
            continue;
        }
        let score = bic_score(&problem, &stage2);
        let better = match &best {
            None => true,
            Some((s, plp, _, _)) => score < *s || (score == *s && lp < *plp),
        };
        if better {
            best = Some((score, lp, stage2, wd));
        }
    }
    let (_, lambda_prec, stage2, weight_diag) = best.ok_or_else(|| {
        Error::NoConvergedFit(format!("no clamp level converged for nodewise regression {}", j + 1))
    })?;
    assemble_fit(dataset, &problem, j, lambda_node, Some(lambda_prec), stage1, stage2, weight_diag)
}

/// Builds the approximate-inverse rows for the coordinates in `h` with the
/// conservative nodewise estimator.
pub fn build_theta_rows(dataset: &Dataset, h: &[usize], config: &TuningConfig) -> Result<ThetaRows> {
    build_theta_rows_with(dataset, h, config, NodewiseMethod::Conservative)
}

/// As [`build_theta_rows`] with an explicit choice of nodewise estimator.
///
/// The shared penalty is selected by summed first-stage BIC; for the
/// conservative method a shared clamp level is then selected by summed
/// second-stage BIC at that penalty.
pub fn build_theta_rows_with(
    dataset: &Dataset,
    h: &[usize],
    config: &TuningConfig,
    method: NodewiseMethod,
) -> Result<ThetaRows> {
    let h = validate_h(h, dataset.p())?;
    let lambda_node = select_lambda_node(dataset, &h, config)?;

    // Stage-1 fits at the shared penalty, one per target.
    let mut problems = Vec::with_capacity(h.len());
    let mut stage1_fits = Vec::with_capacity(h.len());
    for &j in &h {
        let problem = dataset.nodewise_problem(j)?;
        let w = WeightVector::ones(problem.p());
        let fit = fit_weighted_lasso(&problem, lambda_node, &w, config, None)?;
        problems.push(problem);
        stage1_fits.push(fit);
    }

    let mut fits = Vec::with_capacity(h.len());
    match method {
        NodewiseMethod::Plain => {
            for (i, &j) in h.iter().enumerate() {
                let stage1 = stage1_fits[i].clone();
                let weights = vec![1.0; problems[i].p()];
                fits.push(assemble_fit(
                    dataset,
                    &problems[i],
                    j,
                    lambda_node,
                    None,
                    stage1.clone(),
                    stage1,
                    weights,
                )?);
            }
        }
        NodewiseMethod::Conservative => {
            // Shared clamp level: summed stage-2 BIC over the targets.
            let mut prec_grid = config.lambda_prec_grid.clone();
            prec_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prec_grid.dedup();
            let mut best: Option<(f64, f64, Vec<(LassoFit, Vec<f64>)>)> = None;
            for &lp in &prec_grid {
                let mut sum = 0.0;
                let mut degenerate = false;
                let mut all_converged = true;
                let mut stage2s = Vec::with_capacity(h.len());
                for (i, &j) in h.iter().enumerate() {
                    let (_, stage2, wd) = solve_nodewise(
                        &problems[i],
                        j,
                        config,
                        lambda_node,
                        NodewiseMethod::Conservative,
                        Some(lp),
                        Some(&stage1_fits[i]),
                    )?;
                    let score = bic_score(&problems[i], &stage2);
                    if score == f64::NEG_INFINITY {
                        degenerate = true;
                    } else {
                        sum += score;
                    }
                    all_converged &= stage2.converged;
                    stage2s.push((stage2, wd));
                }
                if !all_converged {
                    continue;
                }
                // Degenerate candidates lose to any finite one; among
                // themselves the smallest clamp wins (grid is ascending).
                let key = if degenerate { f64::INFINITY } else { sum };
                let better = match &best {
                    None => true,
                    Some((s, _, _)) => key < *s,
                };
                if better {
                    best = Some((key, lp, stage2s));
                }
            }
            let (_, lambda_prec, stage2s) = best.ok_or_else(|| {
                Error::NoConvergedFit(
                    "no shared clamp level converged across the nodewise regressions".to_string(),
                )
            })?;
            for ((i, &j), (stage2, wd)) in h.iter().enumerate().zip(stage2s) {
                fits.push(assemble_fit(
                    dataset,
                    &problems[i],
                    j,
                    lambda_node,
                    Some(lambda_prec),
                    stage1_fits[i].clone(),
                    stage2,
                    wd,
                )?);
            }
        }
    }

    let p = dataset.p();
    let mut rows = Vec::with_capacity(h.len());
    let mut tau_sq = Vec::with_capacity(h.len());
    let mut kkt_slack = Vec::with_capacity(h.len());
    for fit in &fits {
        let mut row = embed_gamma(fit.j, &fit.gamma, p);
        row.iter_mut().for_each(|v| *v = -*v / fit.tau_sq);
        row[fit.j] = 1.0 / fit.tau_sq;
        tau_sq.push(fit.tau_sq);
        kkt_slack.push(fit.lambda_node * fit.kkt_max_violation / fit.tau_sq);
        rows.push(row);
    }

    let theta = ThetaRows { h, rows, lambda_node, tau_sq, kkt_slack, fits, method };
    verify_theta_invariants(dataset, &theta)?;
    Ok(theta)
}

/// Checks the two defining guarantees of the rows: exact diagonal and the
/// penalty-bounded off-diagonal of Theta_j' Sigma_hat.
fn verify_theta_invariants(dataset: &Dataset, theta: &ThetaRows) -> Result<()> {
    for (i, &j) in theta.h.iter().enumerate() {
        let product = theta_sigma_row(dataset, &theta.rows[i]);
        let diag = product[j];
        if (diag - 1.0).abs() > 1e-10 {
            return Err(Error::numeric(format!(
                "inverse-row diagonal identity failed for column {}: {diag}",
                j + 1
            )));
        }
        let bound = theta.lambda_node / theta.tau_sq[i] + theta.kkt_slack[i] + 1e-10;
        for k in 0..dataset.p() {
            if k != j && product[k].abs() > bound {
                return Err(Error::numeric(format!(
                    "inverse-row off-diagonal bound failed for column {} at {}: |{}| > {bound}",
                    j + 1,
                    k + 1,
                    product[k]
                )));
            }
        }
    }
    Ok(())
}

/// `row' Sigma_hat` computed as X'(X row)/n without forming Sigma_hat.
pub fn theta_sigma_row(dataset: &Dataset, row: &DVector<f64>) -> DVector<f64> {
    let mut xr = vec![0.0; dataset.n()];
    for j in 0..dataset.p() {
        if row[j] != 0.0 {
            linalg::axpy(row[j], dataset.col(j), &mut xr);
        }
    }
    dataset.xt_dot(&xr)
}

/// Exact population inverse rows for a known covariance matrix
/// (simulation diagnostics).
#[derive(Debug, Clone)]
pub struct PopulationTheta {
    pub h: Vec<usize>,
    /// Rows of the exact inverse, aligned with `h`.
    pub rows: Vec<DVector<f64>>,
    /// tau_j^2 = 1 / (Sigma^{-1})_{jj}.
    pub tau_sq: Vec<f64>,
    /// Population nodewise coefficients gamma_j, length p - 1 each.
    pub gamma: Vec<DVector<f64>>,
}

/// Computes exact inverse rows, tau_j^2, and population nodewise coefficients
/// from a symmetric positive-definite covariance matrix.
pub fn theta_population_reference(sigma: &DMatrix<f64>, h: &[usize]) -> Result<PopulationTheta> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::invalid("covariance matrix must be square"));
    }
    for j in 0..p {
        for k in (j + 1)..p {
            if (sigma[(j, k)] - sigma[(k, j)]).abs() > 1e-12 {
                return Err(Error::invalid("covariance matrix must be symmetric"));
            }
        }
    }
    let h = validate_h(h, p)?;
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::numeric("covariance matrix is not positive definite"))?;
    let inverse = chol.inverse();
    let mut rows = Vec::with_capacity(h.len());
    let mut tau_sq = Vec::with_capacity(h.len());
    let mut gamma = Vec::with_capacity(h.len());
    for &j in &h {
        let row: DVector<f64> = inverse.row(j).transpose();
        let djj = row[j];
        if !(djj > 0.0) {
            return Err(Error::numeric(format!(
                "inverse diagonal nonpositive at column {}",
                j + 1
            )));
        }
        // Theta_{j,k} = -gamma_{j,k} * Theta_{j,j} for k != j.
        let mut g = DVector::zeros(p - 1);
        let mut idx = 0;
        for k in 0..p {
            if k == j {
                continue;
            }
            g[idx] = -row[k] / djj;
            idx += 1;
        }
        tau_sq.push(1.0 / djj);
        gamma.push(g);
        rows.push(row);
    }
    Ok(PopulationTheta { h, rows, tau_sq, gamma })
}
