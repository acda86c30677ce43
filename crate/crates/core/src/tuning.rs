//! BIC-based penalty selection over user grids.
//!
//! The score is the gaussian-likelihood form `n * ln(||Y - X beta||_n^2) +
//! df * ln(n)` with `df = |active set|`. Grids are swept with warm starts
//! along descending lambda paths; selection is by score value with ties
//! broken by smaller lambda, then smaller lambda_prec, so the outcome is
//! independent of grid ordering.

use nalgebra::DVector;

use crate::data::{Dataset, TuningConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::conservative_weights;
use crate::solver::{fit_weighted_lasso, LassoFit, WeightVector};

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct BicEntry {
    pub lambda: f64,
    pub lambda_prec: Option<f64>,
    pub bic: f64,
    /// Residual was exactly zero: the score is a negative-infinity sentinel
    /// and the point wins only if every converged point is degenerate.
    pub degenerate: bool,
    /// Active-set size of the fit.
    pub df: usize,
    pub objective: f64,
    pub converged: bool,
}

/// Every grid point evaluated during a selection, plus the winner's index.
#[derive(Debug, Clone)]
pub struct BicTrace {
    pub entries: Vec<BicEntry>,
    pub selected: usize,
}

impl BicTrace {
    pub fn selected_entry(&self) -> &BicEntry {
        &self.entries[self.selected]
    }
}

/// BIC score of a fit: `n * ln(SSR_n) + df * ln(n)`.
///
/// Returns negative infinity when the residual is exactly zero; selection
/// treats that as a degenerate sentinel rather than an automatic winner.
pub fn bic_score(dataset: &Dataset, fit: &LassoFit) -> f64 {
    let residual = dataset.residual(&fit.beta);
    let ssr_n = linalg::mean_square(residual.as_slice());
    let n = dataset.n() as f64;
    if ssr_n == 0.0 {
        return f64::NEG_INFINITY;
    }
    n * ssr_n.ln() + fit.active_set.len() as f64 * n.ln()
}

/// Picks the winning entry: converged points only; nondegenerate points
/// beat degenerate ones; then smallest score, smallest lambda, smallest
/// lambda_prec. Returns `None` when no point converged.
pub(crate) fn choose_entry(entries: &[BicEntry]) -> Option<usize> {
    let candidates: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].converged).collect();
    if candidates.is_empty() {
        return None;
    }
    let nondegenerate: Vec<usize> =
        candidates.iter().copied().filter(|&i| !entries[i].degenerate).collect();
    let pool = if nondegenerate.is_empty() { candidates } else { nondegenerate };
    pool.into_iter().min_by(|&a, &b| {
        let (ea, eb) = (&entries[a], &entries[b]);
        ea.bic
            .partial_cmp(&eb.bic)
            .unwrap()
            .then(ea.lambda.partial_cmp(&eb.lambda).unwrap())
            .then(
                ea.lambda_prec
                    .unwrap_or(0.0)
                    .partial_cmp(&eb.lambda_prec.unwrap_or(0.0))
                    .unwrap(),
            )
    })
}

fn entry_for(dataset: &Dataset, fit: &LassoFit, lambda_prec: Option<f64>) -> BicEntry {
    let bic = bic_score(dataset, fit);
    BicEntry {
        lambda: fit.lambda,
        lambda_prec,
        bic,
        degenerate: bic == f64::NEG_INFINITY,
        df: fit.active_set.len(),
        objective: fit.objective,
        converged: fit.converged,
    }
}

/// Fits the plain Lasso (weights = 1) along the lambda grid with warm starts
/// and returns the BIC-selected fit with the full trace.
pub fn select_lasso(dataset: &Dataset, config: &TuningConfig) -> Result<(LassoFit, BicTrace)> {
    config.validate()?;
    let grid = config.resolve_lambda_grid(dataset);
    let weights = WeightVector::ones(dataset.p());
    let (fits, entries) = fit_path(dataset, &grid, &weights, config, None)?;
    finish_selection(fits, entries, "no plain-Lasso grid point converged")
}

/// Fits the second-stage weighted Lasso over the product grid
/// (lambda, lambda_prec), with weights derived from the given stage-1
/// coefficients, and returns the BIC-selected fit, its weights, and the trace.
pub fn select_conservative(
    dataset: &Dataset,
    config: &TuningConfig,
) -> Result<(LassoFit, WeightVector, BicTrace)> {
    let (stage1, _) = select_lasso(dataset, config)?;
    select_conservative_from(dataset, config, &stage1.beta)
}

/// As [`select_conservative`] but reusing an already-selected stage-1
/// coefficient vector instead of refitting it.
pub fn select_conservative_from(
    dataset: &Dataset,
    config: &TuningConfig,
    beta_stage1: &DVector<f64>,
) -> Result<(LassoFit, WeightVector, BicTrace)> {
    config.validate()?;
    let grid = config.resolve_lambda_grid(dataset);
    let mut prec_grid = config.lambda_prec_grid.clone();
    prec_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    prec_grid.dedup();

    let mut all_fits = Vec::new();
    let mut all_entries = Vec::new();
    let mut all_weights = Vec::new();
    for &lambda_prec in &prec_grid {
        let weights = conservative_weights(beta_stage1, lambda_prec)?;
        let (fits, entries) = fit_path(dataset, &grid, &weights, config, Some(lambda_prec))?;
        for _ in 0..fits.len() {
            all_weights.push(weights.clone());
        }
        all_fits.extend(fits);
        all_entries.extend(entries);
    }

    let selected = choose_entry(&all_entries).ok_or_else(|| {
        Error::NoConvergedFit("no weighted grid point converged".to_string())
    })?;
    let fit = all_fits.swap_remove(selected);
    let weights = all_weights.swap_remove(selected);
    Ok((fit, weights, BicTrace { entries: all_entries, selected }))
}

/// Warm-started sweep of one weight vector along a descending lambda grid.
fn fit_path(
    dataset: &Dataset,
    grid: &[f64],
    weights: &WeightVector,
    config: &TuningConfig,
    lambda_prec: Option<f64>,
) -> Result<(Vec<LassoFit>, Vec<BicEntry>)> {
    let mut fits = Vec::with_capacity(grid.len());
    let mut entries = Vec::with_capacity(grid.len());
    let mut warm: Option<DVector<f64>> = None;
    for &lambda in grid {
        let fit = fit_weighted_lasso(dataset, lambda, weights, config, warm.as_ref())?;
        entries.push(entry_for(dataset, &fit, lambda_prec));
        warm = Some(fit.beta.clone());
        fits.push(fit);
    }
    Ok((fits, entries))
}

fn finish_selection(
    mut fits: Vec<LassoFit>,
    entries: Vec<BicEntry>,
    fail_msg: &str,
) -> Result<(LassoFit, BicTrace)> {
    let selected =
        choose_entry(&entries).ok_or_else(|| Error::NoConvergedFit(fail_msg.to_string()))?;
    let fit = fits.swap_remove(selected);
    Ok((fit, BicTrace { entries, selected }))
}
