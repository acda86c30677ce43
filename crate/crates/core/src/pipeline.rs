//! The two-stage conservative Lasso: plain Lasso, clamp weights, weighted refit.
//!
//! Stage 1 selects a plain Lasso by BIC. Its coefficients define weights
//! `w_j = lambda_prec / max(|beta1_j|, lambda_prec)`, which never exceed 1,
//! so stage 2 penalizes every coordinate at most as hard as the plain
//! Lasso — and much less on coordinates stage 1 found large. Coordinates
//! stage 1 zeroed out keep weight exactly 1 and so get a second chance at
//! the full penalty rather than exclusion.

use nalgebra::DVector;

use crate::data::{Dataset, TuningConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{kkt_check, KktCertificate, LassoFit, WeightVector};
use crate::tuning::{select_conservative_from, select_lasso, BicTrace};

/// Clamp weights from stage-1 coefficients:
/// `w_j = lambda_prec / max(|beta_j|, lambda_prec)`.
///
/// Exactly 1 whenever `|beta_j| <= lambda_prec` (in particular for zeroed
/// coordinates), strictly smaller for large stage-1 coefficients.
pub fn conservative_weights(beta_lasso: &DVector<f64>, lambda_prec: f64) -> Result<WeightVector> {
    if !(lambda_prec > 0.0) || !lambda_prec.is_finite() {
        return Err(Error::invalid(format!(
            "lambda_prec must be positive, got {lambda_prec}"
        )));
    }
    WeightVector::new(
        beta_lasso
            .iter()
            .map(|b| lambda_prec / b.abs().max(lambda_prec))
            .collect(),
    )
}

/// Both stages of the conservative Lasso with their selections and
/// stationarity certificates.
#[derive(Debug, Clone)]
pub struct ConservativeFit {
    pub stage1: LassoFit,
    pub stage2: LassoFit,
    pub weights: WeightVector,
    /// Selected second-stage penalty level.
    pub lambda: f64,
    /// Selected clamp level for the weights.
    pub lambda_prec: f64,
    pub stage1_trace: BicTrace,
    pub stage2_trace: BicTrace,
    pub stage1_kkt: KktCertificate,
    pub stage2_kkt: KktCertificate,
}

impl ConservativeFit {
    /// The final coefficient vector (stage 2).
    pub fn beta(&self) -> &DVector<f64> {
        &self.stage2.beta
    }
}

/// Runs the full two-stage pipeline: BIC-selected plain Lasso, clamp weights
/// over the lambda_prec grid, BIC-selected weighted refit over the product
/// grid, stationarity certificates on both selected fits.
pub fn fit_conservative(dataset: &Dataset, config: &TuningConfig) -> Result<ConservativeFit> {
    let (stage1, stage1_trace) = select_lasso(dataset, config)?;
    let (stage2, weights, stage2_trace) =
        select_conservative_from(dataset, config, &stage1.beta)?;
    let lambda = stage2.lambda;
    let lambda_prec = stage2_trace
        .selected_entry()
        .lambda_prec
        .expect("conservative trace entries carry lambda_prec");
    let stage1_kkt = kkt_check(dataset, &stage1)?;
    let stage2_kkt = kkt_check(dataset, &stage2)?;
    debug_assert!(weights.as_slice().iter().all(|&w| w <= 1.0));
    Ok(ConservativeFit {
        stage1,
        stage2,
        weights,
        lambda,
        lambda_prec,
        stage1_trace,
        stage2_trace,
        stage1_kkt,
        stage2_kkt,
    })
}

/// Diagnostic comparison of realized estimation errors against the
/// finite-sample bounds `24 lambda s0 / phi_min` (l1) and
/// `18 lambda^2 s0 / phi_min` (in-sample prediction), valid with high
/// probability when `phi_min` lower-bounds the smallest restricted
/// eigenvalue. A failed flag is informational, not an error: the bounds are
/// probabilistic.
#[derive(Debug, Clone)]
pub struct OracleBoundReport {
    pub l1_error: f64,
    pub prediction_error: f64,
    pub l1_bound: f64,
    pub prediction_bound: f64,
    pub l1_within_bound: bool,
    pub prediction_within_bound: bool,
    pub s0: usize,
    pub lambda: f64,
}

/// Evaluates the oracle-inequality diagnostics for a conservative fit against
/// a known truth (simulation use only).
pub fn oracle_bound_check(
    dataset: &Dataset,
    fit: &ConservativeFit,
    truth: &DVector<f64>,
    sigma_min_lower: f64,
) -> Result<OracleBoundReport> {
    if truth.len() != fit.stage2.p() {
        return Err(Error::invalid(format!(
            "truth length {} does not match p = {}",
            truth.len(),
            fit.stage2.p()
        )));
    }
    if !(sigma_min_lower > 0.0) {
        return Err(Error::invalid("sigma_min_lower must be positive"));
    }
    let delta = fit.beta() - truth;
    let l1_error = delta.iter().map(|v| v.abs()).sum::<f64>();
    let fitted_delta = {
        let mut acc = vec![0.0; dataset.n()];
        for j in 0..dataset.p() {
            if delta[j] != 0.0 {
                linalg::axpy(delta[j], dataset.col(j), &mut acc);
            }
        }
        linalg::mean_square(&acc)
    };
    let s0 = truth.iter().filter(|&&b| b != 0.0).count();
    let lambda = fit.lambda;
    let l1_bound = 24.0 * lambda * s0 as f64 / sigma_min_lower;
    let prediction_bound = 18.0 * lambda * lambda * s0 as f64 / sigma_min_lower;
    Ok(OracleBoundReport {
        l1_error,
        prediction_error: fitted_delta,
        l1_bound,
        prediction_bound,
        l1_within_bound: l1_error <= l1_bound,
        prediction_within_bound: fitted_delta <= prediction_bound,
        s0,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{fit_weighted_lasso, KKT_TOLERANCE};
    use nalgebra::DMatrix;

    fn random_dataset(n: usize, p: usize, seed: u64, signal: &[(usize, f64)]) -> Dataset {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x = DMatrix::from_fn(n, p, |_, _| next() * 2.0);
        let mut y = DVector::from_fn(n, |_, _| next() * 0.4);
        for &(j, b) in signal {
            for i in 0..n {
                y[i] += b * x[(i, j)];
            }
        }
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn weight_formula_cases() {
        let beta = DVector::from_column_slice(&[0.0, 0.2, 0.05, -0.3]);
        let w = conservative_weights(&beta, 0.1).unwrap();
        assert_eq!(w[0], 1.0); // zero coefficient: full second chance
        assert!((w[1] - 0.5).abs() < 1e-15); // |beta| = 2 lambda_prec
        assert_eq!(w[2], 1.0); // |beta| = lambda_prec / 2: clamp
        assert!((w[3] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_reject_bad_lambda_prec() {
        let beta = DVector::zeros(3);
        assert!(conservative_weights(&beta, 0.0).is_err());
        assert!(conservative_weights(&beta, -1.0).is_err());
        assert!(conservative_weights(&beta, f64::INFINITY).is_err());
    }

    #[test]
    fn noise_free_fit_approaches_truth() {
        // Orthogonal columns with unit empirical norm, exact linear response,
        // a tiny penalty: stage-2 coefficients land within 1e-3 of the truth.
        let x = DMatrix::from_fn(8, 3, |i, j| match j {
            0 => 1.0,
            1 => if i % 2 == 0 { 1.0 } else { -1.0 },
            _ => if (i / 2) % 2 == 0 { 1.0 } else { -1.0 },
        });
        let truth = DVector::from_column_slice(&[1.5, -0.7, 0.3]);
        let y = &x * &truth;
        let d = Dataset::new(x, y).unwrap();
        let mut cfg = TuningConfig::default();
        cfg.lambda_grid = Some(vec![1e-4]);
        let fit = fit_conservative(&d, &cfg).unwrap();
        for j in 0..3 {
            assert!(
                (fit.beta()[j] - truth[j]).abs() < 1e-3,
                "coordinate {j}: {} vs {}",
                fit.beta()[j],
                truth[j]
            );
        }
        assert!(fit.stage1_kkt.passes(KKT_TOLERANCE));
        assert!(fit.stage2_kkt.passes(KKT_TOLERANCE));
    }

    #[test]
    fn dominant_lambda_prec_reduces_to_plain_lasso() {
        // lambda_prec far above every stage-1 coefficient: weights are all 1
        // and stage 2 must match a plain-Lasso fit at the same lambda.
        let d = random_dataset(50, 6, 11, &[(0, 1.0), (3, -0.6)]);
        let mut cfg = TuningConfig::default();
        cfg.n_lambda = 10;
        cfg.lambda_prec_grid = vec![1e6];
        let fit = fit_conservative(&d, &cfg).unwrap();
        assert!(fit.weights.as_slice().iter().all(|&w| w == 1.0));
        let plain = fit_weighted_lasso(
            &d,
            fit.lambda,
            &WeightVector::ones(6),
            &cfg,
            None,
        )
        .unwrap();
        for j in 0..6 {
            assert!((fit.beta()[j] - plain.beta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn selected_pair_recorded_consistently() {
        let d = random_dataset(60, 8, 23, &[(1, 1.1), (5, 0.8)]);
        let mut cfg = TuningConfig::default();
        cfg.n_lambda = 10;
        let fit = fit_conservative(&d, &cfg).unwrap();
        assert_eq!(fit.lambda, fit.stage2.lambda);
        assert!(cfg.lambda_prec_grid.contains(&fit.lambda_prec));
        // The recorded weights must reproduce from stage-1 beta and lambda_prec.
        let w = conservative_weights(&fit.stage1.beta, fit.lambda_prec).unwrap();
        assert_eq!(w.as_slice(), fit.weights.as_slice());
        assert!(fit.stage2_kkt.passes(KKT_TOLERANCE));
    }

    #[test]
    fn oracle_bounds_trivial_cases() {
        let d = random_dataset(30, 4, 5, &[(0, 1.0)]);
        let mut cfg = TuningConfig::default();
        cfg.n_lambda = 8;
        let fit = fit_conservative(&d, &cfg).unwrap();

        // Truth equal to the fit itself: zero errors, trivially within bounds.
        let truth = fit.beta().clone();
        let report = oracle_bound_check(&d, &fit, &truth, 0.5).unwrap();
        assert_eq!(report.l1_error, 0.0);
        assert_eq!(report.prediction_error, 0.0);
        if report.s0 > 0 {
            assert!(report.l1_within_bound);
            assert!(report.prediction_within_bound);
        }

        // Zero truth with a nonzero fit: s0 = 0 makes the bounds degenerate
        // but the report still carries the raw errors.
        let zero = DVector::zeros(4);
        let report = oracle_bound_check(&d, &fit, &zero, 0.5).unwrap();
        assert_eq!(report.s0, 0);
        assert_eq!(report.l1_bound, 0.0);
        let manual_l1: f64 = fit.beta().iter().map(|v| v.abs()).sum();
        assert!((report.l1_error - manual_l1).abs() < 1e-12);
    }

    #[test]
    fn oracle_bound_zero_truth_zero_fit_passes() {
        // A pure-noise response at a huge penalty: fit is zero, truth is zero.
        let d = random_dataset(20, 3, 31, &[]);
        let mut cfg = TuningConfig::default();
        cfg.lambda_grid = Some(vec![1e3]);
        let fit = fit_conservative(&d, &cfg).unwrap();
        assert!(fit.beta().iter().all(|&b| b == 0.0));
        let report = oracle_bound_check(&d, &fit, &DVector::zeros(3), 1.0).unwrap();
        assert!(report.l1_within_bound);
        assert!(report.prediction_within_bound);
    }
}
