//! Bernoulli-logit likelihood kernel.
//!
//! The minimized loss is the averaged negative log-likelihood
//! `-(1/n) sum_i [y_i eta_i - log(1 + exp(eta_i))]`, with `eta = X beta`.
//! With observation weights `R_i` every `1/n` becomes `R_i`.

use ndarray::{Array1, ArrayView1, Zip};

use crate::dataset::{Coefficients, Dataset};
use crate::error::{Error, Result};

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid_prob(eta: f64) -> f64 {
    if eta < 0.0 {
        let e = eta.exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (-eta).exp())
    }
}

/// `log(1 + exp(eta))` without overflow for large `|eta|`.
#[inline]
pub fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Loss from a precomputed linear predictor and row factors.
pub(crate) fn loss_from_eta(y: ArrayView1<f64>, factors: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
    Zip::from(y)
        .and(factors)
        .and(eta)
        .fold(0.0, |acc, &yi, &ci, &ei| acc + ci * (softplus(ei) - yi * ei))
}

/// Weighted residuals `c_i (pi_i - y_i)`; `X^T` of this is the loss gradient.
pub(crate) fn weighted_residuals(
    y: ArrayView1<f64>,
    factors: ArrayView1<f64>,
    eta: ArrayView1<f64>,
) -> Array1<f64> {
    Zip::from(y)
        .and(factors)
        .and(eta)
        .map_collect(|&yi, &ci, &ei| ci * (sigmoid_prob(ei) - yi))
}

pub fn neg_log_likelihood(data: &Dataset, coef: &Coefficients) -> Result<f64> {
    let eta = coef.linear_predictor(data.x())?;
    let factors = data.row_factors();
    Ok(loss_from_eta(data.y().view(), factors.view(), eta.view()))
}

/// Gradient of [`neg_log_likelihood`] with respect to `beta`:
/// `-(1/n) sum_i X_i (y_i - pi_i)`.
pub fn gradient(data: &Dataset, coef: &Coefficients) -> Result<Array1<f64>> {
    let eta = coef.linear_predictor(data.x())?;
    let factors = data.row_factors();
    let r = weighted_residuals(data.y().view(), factors.view(), eta.view());
    Ok(data.x().t().dot(&r))
}

/// The score `(1/n) sum_i X_ij (y_i - pi_i)`, i.e. the negated gradient.
pub fn score(data: &Dataset, coef: &Coefficients) -> Result<Array1<f64>> {
    gradient(data, coef).map(|g| -g)
}

pub fn predict_proba(data: &Dataset, coef: &Coefficients) -> Result<Array1<f64>> {
    Ok(coef.linear_predictor(data.x())?.mapv(sigmoid_prob))
}

/// Class labels with the tie rule `pi >= cutoff -> 1`.
pub fn predict_class(data: &Dataset, coef: &Coefficients, cutoff: f64) -> Result<Array1<u8>> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidInput(format!("cutoff {cutoff} outside (0, 1)")));
    }
    Ok(predict_proba(data, coef)?.mapv(|pi| u8::from(pi >= cutoff)))
}
