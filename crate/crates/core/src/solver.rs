//! Cyclic coordinate-descent solver for the weighted Lasso objective
//!
//! ```text
//!   ||Y - X beta||_n^2 + 2 lambda sum_j w_j |beta_j|,    ||v||_n^2 = (1/n) sum_i v_i^2,
//! ```
//!
//! with per-coordinate penalty weights `w_j` in (0, 1]. This single kernel
//! serves the plain Lasso (w = 1), the conservative refit, and every nodewise
//! regression. Solutions are certified through the stationarity system
//! `X'(Y - X beta)/n = lambda W kappa` with `|kappa_j| <= 1` and
//! `kappa_j = sign(beta_j)` on the active set.

use nalgebra::DVector;

use crate::data::{Dataset, TuningConfig};
use crate::error::{Error, Result};
use crate::linalg;

/// Default acceptance threshold for the stationarity certificate.
pub const KKT_TOLERANCE: f64 = 1e-5;

/// Soft-thresholding operator `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Per-coordinate penalty weights, each in (0, 1].
///
/// The upper bound keeps every weighted penalty no larger than the plain
/// Lasso penalty at the same lambda; the lower bound keeps the stationarity
/// certificate well defined.
#[derive(Debug, Clone)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        for (j, &v) in w.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!(
                    "weight {} = {v} outside (0, 1]",
                    j + 1
                )));
            }
        }
        Ok(WeightVector(w))
    }

    /// The plain-Lasso weighting: all ones.
    pub fn ones(p: usize) -> Self {
        WeightVector(vec![1.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// A solved weighted-Lasso instance.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub weights: WeightVector,
    /// Indices with nonzero coefficients, ascending.
    pub active_set: Vec<usize>,
    /// Objective value at `beta`.
    pub objective: f64,
    /// Number of coordinate sweeps performed (full and active-set combined).
    pub iterations: usize,
    /// Whether a full sweep moved no coefficient by more than the tolerance.
    pub converged: bool,
}

impl LassoFit {
    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// Stationarity certificate: the implied subgradient `kappa` and the largest
/// deviation from the optimality conditions.
#[derive(Debug, Clone)]
pub struct KktCertificate {
    /// `kappa_j = (X_j'(Y - X beta)/n) / (lambda w_j)`.
    pub kappa: DVector<f64>,
    /// Largest of: `|kappa_j - sign(beta_j)|` over the active set and
    /// `max(|kappa_j| - 1, 0)` off it.
    pub max_violation: f64,
}

impl KktCertificate {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }
}

/// The weighted-Lasso objective at `beta`.
pub fn objective(dataset: &Dataset, beta: &DVector<f64>, lambda: f64, weights: &WeightVector) -> f64 {
    let r = dataset.residual(beta);
    let mut penalty = 0.0;
    for j in 0..beta.len() {
        penalty += weights[j] * beta[j].abs();
    }
    linalg::mean_square(r.as_slice()) + 2.0 * lambda * penalty
}

/// Solves the weighted Lasso by cyclic coordinate descent.
///
/// Coordinates are visited in fixed ascending order for determinism. Each
/// update is `beta_j <- soft_threshold(X_j' r_(-j) / n, lambda w_j) / ||X_j||_n^2`
/// with the residual maintained incrementally. Sweeps alternate between the
/// full coordinate range and the current active set; convergence is declared
/// only when a full sweep moves no coefficient by more than
/// `config.tolerance`. Columns with zero norm keep coefficient 0, the only
/// stationary choice.
///
/// Non-convergence within `config.max_iterations` sweeps is not an error: the
/// fit is returned with `converged = false` so grid searches can skip it.
pub fn fit_weighted_lasso(
    dataset: &Dataset,
    lambda: f64,
    weights: &WeightVector,
    config: &TuningConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    let (n, p) = (dataset.n(), dataset.p());
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if weights.len() != p {
        return Err(Error::invalid(format!(
            "weight vector length {} does not match p = {p}",
            weights.len()
        )));
    }
    if let Some(b0) = warm_start {
        if b0.len() != p {
            return Err(Error::invalid(format!(
                "warm start length {} does not match p = {p}",
                b0.len()
            )));
        }
    }

    let col_msq: Vec<f64> = (0..p).map(|j| linalg::mean_square(dataset.col(j))).collect();

    let mut beta = warm_start.cloned().unwrap_or_else(|| DVector::zeros(p));
    for j in 0..p {
        if col_msq[j] == 0.0 {
            beta[j] = 0.0;
        }
    }
    let mut residual = dataset.residual(&beta);

    let nf = n as f64;
    let mut sweep = |beta: &mut DVector<f64>, residual: &mut DVector<f64>, coords: &[usize]| -> Result<f64> {
        let mut max_change = 0.0_f64;
        for &j in coords {
            let msq = col_msq[j];
            if msq == 0.0 {
                continue;
            }
            let col = dataset.col(j);
            let old = beta[j];
            // X_j' r_(-j) / n with r_(-j) = r + X_j * old.
            let z = linalg::dot(col, residual.as_slice()) / nf + msq * old;
            let new = soft_threshold(z, lambda * weights[j]) / msq;
            if !new.is_finite() {
                return Err(Error::numeric(format!(
                    "coordinate {} became non-finite during descent",
                    j + 1
                )));
            }
            if new != old {
                linalg::axpy(old - new, col, residual.as_mut_slice());
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        Ok(max_change)
    };

    let all: Vec<usize> = (0..p).collect();
    let mut iterations = 0usize;
    let mut converged = false;
    let mut last_objective = f64::INFINITY;

    'outer: while iterations < config.max_iterations {
        iterations += 1;
        let change = sweep(&mut beta, &mut residual, &all)?;
        if cfg!(debug_assertions) {
            let obj = objective(dataset, &beta, lambda, weights);
            debug_assert!(
                obj <= last_objective + 1e-10 * (1.0 + last_objective.abs()),
                "objective increased across a sweep: {last_objective} -> {obj}"
            );
            last_objective = obj;
        }
        if change <= config.tolerance {
            converged = true;
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        loop {
            if iterations >= config.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let change = sweep(&mut beta, &mut residual, &active)?;
            if cfg!(debug_assertions) {
                let obj = objective(dataset, &beta, lambda, weights);
                debug_assert!(
                    obj <= last_objective + 1e-10 * (1.0 + last_objective.abs()),
                    "objective increased across a sweep: {last_objective} -> {obj}"
                );
                last_objective = obj;
            }
            if change <= config.tolerance {
                break;
            }
        }
    }

    let active_set: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
    let objective = objective(dataset, &beta, lambda, weights);
    Ok(LassoFit {
        beta,
        lambda,
        weights: weights.clone(),
        active_set,
        objective,
        iterations,
        converged,
    })
}

/// Evaluates the stationarity certificate for `fit` on `dataset`.
pub fn kkt_check(dataset: &Dataset, fit: &LassoFit) -> Result<KktCertificate> {
    if !(fit.lambda > 0.0) {
        return Err(Error::invalid("stationarity certificate undefined at lambda = 0"));
    }
    if fit.p() != dataset.p() {
        return Err(Error::invalid(format!(
            "fit has {} coefficients but dataset has p = {}",
            fit.p(),
            dataset.p()
        )));
    }
    let residual = dataset.residual(&fit.beta);
    let gradient = dataset.xt_dot(residual.as_slice());
    let p = dataset.p();
    let mut kappa = DVector::zeros(p);
    let mut max_violation = 0.0_f64;
    for j in 0..p {
        let k = gradient[j] / (fit.lambda * fit.weights[j]);
        kappa[j] = k;
        let violation = if fit.beta[j] != 0.0 {
            (k - fit.beta[j].signum()).abs()
        } else {
            (k.abs() - 1.0).max(0.0)
        };
        max_violation = max_violation.max(violation);
    }
    Ok(KktCertificate { kappa, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dataset(xs: &[&[f64]], y: &[f64]) -> Dataset {
        let n = xs[0].len();
        let x = DMatrix::from_fn(n, xs.len(), |i, j| xs[j][i]);
        Dataset::new(x, DVector::from_column_slice(y)).unwrap()
    }

    /// n = 4 design whose three columns are mutually orthogonal with
    /// ||X_j||_n^2 = 1, so coordinates decouple exactly.
    fn orthonormal_design(y: &[f64; 4]) -> Dataset {
        dataset(
            &[
                &[1.0, 1.0, 1.0, 1.0],
                &[1.0, -1.0, 1.0, -1.0],
                &[1.0, 1.0, -1.0, -1.0],
            ],
            y,
        )
    }

    fn small_random(n: usize, p: usize, seed: u64) -> (Dataset, WeightVector) {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x = DMatrix::from_fn(n, p, |_, _| next() * 2.0);
        let y = DVector::from_fn(n, |_, _| next() * 2.0);
        let w = WeightVector::new((0..p).map(|_| 0.05 + 0.95 * (next() + 0.5)).collect()).unwrap();
        (Dataset::new(x, y).unwrap(), w)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.5, 1.0), 0.5);
        assert_eq!(soft_threshold(-0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
        assert_eq!(soft_threshold(2.0, 0.0), 2.0);
    }

    #[test]
    fn weight_vector_bounds_enforced() {
        assert!(WeightVector::new(vec![0.5, 1.0]).is_ok());
        assert!(WeightVector::new(vec![0.0]).is_err());
        assert!(WeightVector::new(vec![1.1]).is_err());
        assert!(WeightVector::new(vec![-0.2]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn large_lambda_gives_zero_fit() {
        let (d, _) = small_random(20, 5, 3);
        let corr = d.xt_dot(d.y().as_slice());
        let lambda_max = corr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let w = WeightVector::ones(5);
        let fit = fit_weighted_lasso(&d, lambda_max * 1.0001, &w, &TuningConfig::default(), None).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.active_set.is_empty());
        assert!(fit.converged);
        let cert = kkt_check(&d, &fit).unwrap();
        assert!(cert.passes(KKT_TOLERANCE));
    }

    #[test]
    fn weighted_zero_threshold_uses_min_weight() {
        // lambda >= ||X'Y/n||_inf / min_j w_j forces beta = 0 even with small weights.
        let (d, _) = small_random(20, 5, 11);
        let w = WeightVector::new(vec![0.2, 1.0, 0.5, 0.9, 0.4]).unwrap();
        let corr = d.xt_dot(d.y().as_slice());
        let lambda_max = corr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lambda = lambda_max / 0.2 * 1.0001;
        let fit = fit_weighted_lasso(&d, lambda, &w, &TuningConfig::default(), None).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn orthonormal_design_closed_form() {
        let d = orthonormal_design(&[2.0, 0.4, -1.0, 0.6]);
        let corr = d.xt_dot(d.y().as_slice());
        let lambda = 0.3;
        let w = WeightVector::new(vec![1.0, 0.5, 0.8]).unwrap();
        let fit = fit_weighted_lasso(&d, lambda, &w, &TuningConfig::default(), None).unwrap();
        for j in 0..3 {
            let expected = soft_threshold(corr[j], lambda * w[j]);
            assert!(
                (fit.beta[j] - expected).abs() < 1e-8,
                "coordinate {j}: {} vs closed form {expected}",
                fit.beta[j]
            );
        }
    }

    #[test]
    fn objective_field_matches_recompute() {
        let (d, w) = small_random(32, 8, 7);
        let fit = fit_weighted_lasso(&d, 0.1, &w, &TuningConfig::default(), None).unwrap();
        let recomputed = objective(&d, &fit.beta, fit.lambda, &fit.weights);
        assert!((fit.objective - recomputed).abs() < 1e-10);
        let nonzero: Vec<usize> = (0..8).filter(|&j| fit.beta[j] != 0.0).collect();
        assert_eq!(fit.active_set, nonzero);
    }

    #[test]
    fn converged_fit_passes_kkt() {
        for seed in 0..20 {
            let (d, w) = small_random(24, 10, seed + 100);
            let fit = fit_weighted_lasso(&d, 0.05, &w, &TuningConfig::default(), None).unwrap();
            assert!(fit.converged, "seed {seed} did not converge");
            let cert = kkt_check(&d, &fit).unwrap();
            assert!(
                cert.passes(KKT_TOLERANCE),
                "seed {seed}: violation {}",
                cert.max_violation
            );
        }
    }

    #[test]
    fn kkt_kappa_is_signum_on_active_set() {
        let (d, w) = small_random(40, 6, 5);
        let fit = fit_weighted_lasso(&d, 0.02, &w, &TuningConfig::default(), None).unwrap();
        let cert = kkt_check(&d, &fit).unwrap();
        for &j in &fit.active_set {
            assert!((cert.kappa[j] - fit.beta[j].signum()).abs() <= KKT_TOLERANCE);
        }
        for j in 0..6 {
            if fit.beta[j] == 0.0 {
                assert!(cert.kappa[j].abs() <= 1.0 + KKT_TOLERANCE);
            }
        }
    }

    #[test]
    fn perturbed_fit_fails_kkt() {
        let (d, w) = small_random(32, 8, 9);
        let mut fit = fit_weighted_lasso(&d, 0.05, &w, &TuningConfig::default(), None).unwrap();
        let j = *fit.active_set.first().expect("expected a nonzero coordinate");
        fit.beta[j] += 0.1;
        let cert = kkt_check(&d, &fit).unwrap();
        assert!(cert.max_violation > KKT_TOLERANCE);
    }

    #[test]
    fn scaling_in_y_and_lambda() {
        let (d, w) = small_random(28, 6, 13);
        let c = 3.7;
        let fit1 = fit_weighted_lasso(&d, 0.08, &w, &TuningConfig::default(), None).unwrap();
        let scaled = Dataset::new(d.x().clone(), d.y() * c).unwrap();
        let fit2 = fit_weighted_lasso(&scaled, 0.08 * c, &w, &TuningConfig::default(), None).unwrap();
        for j in 0..6 {
            assert!(
                (fit2.beta[j] - c * fit1.beta[j]).abs() < 1e-8,
                "coordinate {j}: {} vs {}",
                fit2.beta[j],
                c * fit1.beta[j]
            );
        }
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let (d, w) = small_random(36, 9, 21);
        let cold = fit_weighted_lasso(&d, 0.06, &w, &TuningConfig::default(), None).unwrap();
        let rough = fit_weighted_lasso(&d, 0.12, &w, &TuningConfig::default(), None).unwrap();
        let warm = fit_weighted_lasso(&d, 0.06, &w, &TuningConfig::default(), Some(&rough.beta)).unwrap();
        for j in 0..9 {
            assert!((cold.beta[j] - warm.beta[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_norm_column_pinned_at_zero() {
        let d = dataset(
            &[&[0.0, 0.0, 0.0, 0.0], &[1.0, -1.0, 2.0, 0.5]],
            &[1.0, -0.5, 2.5, 0.0],
        );
        let w = WeightVector::ones(2);
        let fit = fit_weighted_lasso(&d, 0.01, &w, &TuningConfig::default(), None).unwrap();
        assert_eq!(fit.beta[0], 0.0);
        assert!(fit.beta[1] != 0.0);
        let cert = kkt_check(&d, &fit).unwrap();
        assert!(cert.passes(KKT_TOLERANCE));
    }

    #[test]
    fn kkt_rejects_zero_lambda() {
        let (d, w) = small_random(20, 4, 2);
        let mut fit = fit_weighted_lasso(&d, 0.1, &w, &TuningConfig::default(), None).unwrap();
        fit.lambda = 0.0;
        assert!(kkt_check(&d, &fit).is_err());
    }
}
