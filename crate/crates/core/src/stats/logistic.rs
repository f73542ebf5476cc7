//! Fixed-effects logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::design::ScaledDesign;
use super::{Coefficient, FitResult, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tolerance: f64,
    /// Any coefficient beyond this magnitude (on the standardized scale) is
    /// reported as quasi-separation.
    pub separation_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            separation_limit: 15.0,
        }
    }
}

#[inline]
pub(crate) fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood `Σ y·η − log(1 + e^η)` with `η = Xβ`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(e, yi)| yi * e - softplus(*e))
        .sum()
}

/// Gradient of [`log_likelihood`]: `Xᵀ(y − p)`.
pub fn score(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter().zip(y.iter()).map(|(e, yi)| yi - sigmoid(*e)),
    );
    x.transpose() * resid
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut weighted = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = sigmoid(*e);
        let w = p * (1.0 - p);
        weighted.row_mut(i).scale_mut(w);
    }
    x.transpose() * weighted
}

pub(crate) struct ScaledFit {
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

pub(crate) fn irls(design: &ScaledDesign, options: &FitOptions) -> Result<ScaledFit> {
    let x = &design.x;
    let y = &design.y;
    let p = design.n_coef();
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];

    for iteration in 1..=options.max_iterations {
        let info = information(x, &beta);
        let grad = score(x, y, &beta);
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::NonConvergence {
                iterations: iteration,
                trace: format!("information matrix not positive definite; log-lik {trace:?}"),
            })?;

        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut ll_new = log_likelihood(x, y, &candidate);
        let mut halvings = 0;
        while (ll_new.is_nan() || ll_new < ll - 1e-12 * ll.abs()) && halvings < 30 {
            scale *= 0.5;
            candidate = &beta + scale * &step;
            ll_new = log_likelihood(x, y, &candidate);
            halvings += 1;
        }
        beta = candidate;
        trace.push(ll_new);

        if let Some(j) = (0..p).find(|&j| beta[j].abs() > options.separation_limit) {
            return Err(Error::Separation {
                covariate: design.names[j].clone(),
                limit: options.separation_limit,
            });
        }

        let rel_change = (ll_new - ll).abs() / (ll_new.abs() + 0.1);
        let step_size = (scale * &step).amax();
        ll = ll_new;
        if rel_change < options.tolerance && step_size < 1e-4 {
            let covariance = information(x, &beta)
                .try_inverse()
                .ok_or_else(|| Error::NonConvergence {
                    iterations: iteration,
                    trace: "singular information at the optimum".into(),
                })?;
            return Ok(ScaledFit {
                beta,
                covariance,
                log_likelihood: ll,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        trace: format!("log-likelihood trace {:?}", &trace[trace.len().saturating_sub(5)..]),
    })
}

pub(crate) fn coefficients(
    design: &ScaledDesign,
    beta: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Vec<Coefficient> {
    let (beta, cov) = design.unscale(beta, covariance);
    design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient::wald(name, beta[j], cov[(j, j)]))
        .collect()
}

/// Logistic regression of `response` on every covariate present in the
/// observations, plus an intercept.
pub fn fit_logistic(observations: &[Observation]) -> Result<FitResult> {
    fit_logistic_with(observations, &FitOptions::default())
}

pub fn fit_logistic_with(observations: &[Observation], options: &FitOptions) -> Result<FitResult> {
    let design = ScaledDesign::new(observations)?;
    let fit = irls(&design, options)?;
    Ok(FitResult {
        coefficients: coefficients(&design, &fit.beta, &fit.covariance),
        log_likelihood: fit.log_likelihood,
        n_observations: observations.len(),
        iterations: fit.iterations,
        converged: true,
        random_intercept: None,
    })
}
