//! Penalty selection: lambda paths, stratified k-fold and leave-one-out
//! cross-validation, the theoretical lambda floor and coefficient
//! thresholding for model-size reporting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Coefficients, Dataset, SupportSet};
use crate::error::{invalid, Error, Result};
use crate::logistic::{sigmoid_prob, softplus};
use crate::solver::{fit_from, FitResult, SolverConfig};
use crate::weights::{compute_weights, normalize, WeightConfig, WeightScheme, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub values: Vec<f64>,
    pub n_lambda: usize,
    pub min_ratio: f64,
}

impl LambdaPath {
    pub const DEFAULT_N_LAMBDA: usize = 100;
    pub const DEFAULT_MIN_RATIO: f64 = 1e-4;

    /// `n_lambda` log-spaced values from `lambda_max` down to
    /// `lambda_max * min_ratio`.
    pub fn log_spaced(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Result<Self> {
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return Err(invalid(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if n_lambda < 2 {
            return Err(invalid("a lambda path needs at least two values"));
        }
        if !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(invalid(format!("min_ratio must lie in (0, 1), got {min_ratio}")));
        }
        let log_ratio = min_ratio.ln();
        let last = n_lambda - 1;
        let values = (0..n_lambda)
            .map(|i| match i {
                0 => lambda_max,
                i if i == last => lambda_max * min_ratio,
                i => lambda_max * (log_ratio * i as f64 / last as f64).exp(),
            })
            .collect();
        Ok(Self {
            values,
            n_lambda,
            min_ratio,
        })
    }

    /// Default grid for a dataset and weight vector.
    pub fn for_data(data: &Dataset, w: &WeightVector, fit_intercept: bool) -> Result<Self> {
        Self::log_spaced(
            lambda_max(data, w, fit_intercept)?,
            Self::DEFAULT_N_LAMBDA,
            Self::DEFAULT_MIN_RATIO,
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Smallest penalty at which `beta = 0` solves the weighted problem:
/// `max_j |(1/n) sum_i X_ij (y_i - pi_0)| / w_j`, with `pi_0 = 1/2` without an
/// intercept and the (weighted) mean response with one.
pub fn lambda_max(data: &Dataset, w: &WeightVector, fit_intercept: bool) -> Result<f64> {
    if w.len() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "weight vector length",
            expected: data.p(),
            got: w.len(),
        });
    }
    let c = data.row_factors();
    let pi0 = if fit_intercept {
        c.iter().zip(data.y()).map(|(ci, yi)| ci * yi).sum::<f64>() / c.sum()
    } else {
        0.5
    };
    let r = ndarray::Zip::from(&c).and(data.y()).map_collect(|&ci, &yi| ci * (yi - pi0));
    let score = data.x().t().dot(&r);
    let lmax = score
        .iter()
        .zip(w.w.iter())
        .fold(0.0_f64, |m, (s, wj)| m.max(s.abs() / wj));
    if lmax > 0.0 {
        Ok(lmax)
    } else {
        Err(Error::DegenerateLambdaMax)
    }
}

/// Warm-started fits along a path, in path order.
pub fn fit_path(data: &Dataset, w: &WeightVector, path: &LambdaPath, cfg: &SolverConfig) -> Result<Vec<FitResult>> {
    let mut out: Vec<FitResult> = Vec::with_capacity(path.len());
    for &lambda in &path.values {
        let init = out.last().map(|r| &r.coef);
        out.push(fit_from(data, w, lambda, cfg, init)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Deviance,
    Misclassification,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deviance" => Ok(LossKind::Deviance),
            "misclassification" | "class" => Ok(LossKind::Misclassification),
            other => Err(invalid(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambda_path: LambdaPath,
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    pub lambda_opt: f64,
    pub fold_assignment: Vec<usize>,
    pub loss_kind: LossKind,
    /// Inner fits that hit `max_iter` before certifying.
    pub nonconverged_fits: usize,
}

impl CvReport {
    pub fn opt_index(&self) -> usize {
        self.lambda_path
            .values
            .iter()
            .position(|&l| l == self.lambda_opt)
            .unwrap_or(0)
    }
}

/// Stratified fold labels in `0..k`: each class is shuffled and dealt
/// round-robin, the second class continuing where the first stopped.
pub fn stratified_folds(y: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = y.len();
    if k < 2 || k > n {
        return Err(invalid(format!("fold count {k} must satisfy 2 <= k <= n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; n];
    let mut next = 0;
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Per-observation held-out loss.
fn row_loss(kind: LossKind, y: f64, eta: f64) -> f64 {
    match kind {
        LossKind::Deviance => 2.0 * (softplus(eta) - y * eta),
        LossKind::Misclassification => {
            let pred = if sigmoid_prob(eta) >= 0.5 { 1.0 } else { 0.0 };
            f64::from(u8::from(pred != y))
        }
    }
}

pub fn cross_validate(
    data: &Dataset,
    w: &WeightVector,
    path: &LambdaPath,
    k: usize,
    loss_kind: LossKind,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvReport> {
    let folds = stratified_folds(data.y().as_slice().expect("contiguous response"), k, seed)?;
    cross_validate_with_folds(data, w, path, &folds, loss_kind, cfg)
}

/// Cross-validation with a caller-supplied fold assignment (labels `0..k`).
///
/// The reported loss at each lambda is the mean over all held-out rows; its
/// standard error comes from the spread of the per-fold means.
pub fn cross_validate_with_folds(
    data: &Dataset,
    w: &WeightVector,
    path: &LambdaPath,
    folds: &[usize],
    loss_kind: LossKind,
    cfg: &SolverConfig,
) -> Result<CvReport> {
    let n = data.n();
    if folds.len() != n {
        return Err(Error::DimensionMismatch {
            what: "fold assignment",
            expected: n,
            got: folds.len(),
        });
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    if k < 2 || k > n {
        return Err(invalid(format!("fold count {k} must satisfy 2 <= k <= n = {n}")));
    }

    // per fold: (held-out size, per-lambda summed loss, nonconverged count)
    let per_fold: Vec<Result<(usize, Vec<f64>, usize)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            if test.is_empty() || train.is_empty() {
                return Ok((0, vec![0.0; path.len()], 0));
            }
            let train_data = data.select_rows(&train);
            let test_data = data.select_rows(&test);
            let fits = fit_path(&train_data, w, path, cfg)?;
            let mut bad = 0;
            let losses = fits
                .iter()
                .map(|r| {
                    bad += usize::from(!r.converged);
                    let eta = r.coef.linear_predictor(test_data.x())?;
                    Ok(eta
                        .iter()
                        .zip(test_data.y())
                        .map(|(&e, &yi)| row_loss(loss_kind, yi, e))
                        .sum::<f64>())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((test.len(), losses, bad))
        })
        .collect();

    let mut sizes = Vec::with_capacity(k);
    let mut sums = Vec::with_capacity(k);
    let mut nonconverged = 0;
    for r in per_fold {
        let (size, losses, bad) = r?;
        if size > 0 {
            sizes.push(size);
            sums.push(losses);
            nonconverged += bad;
        }
    }
    if nonconverged > 0 {
        log::warn!("cross-validation: {nonconverged} inner fits did not certify convergence");
    }

    let total: usize = sizes.iter().sum();
    let used = sizes.len() as f64;
    let mut mean_loss = Vec::with_capacity(path.len());
    let mut se_loss = Vec::with_capacity(path.len());
    for l in 0..path.len() {
        let mean = sums.iter().map(|s| s[l]).sum::<f64>() / total as f64;
        let fold_means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &m)| s[l] / m as f64).collect();
        let var = if used > 1.0 {
            fold_means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (used - 1.0)
        } else {
            0.0
        };
        mean_loss.push(mean);
        se_loss.push((var / used).sqrt());
    }

    // ties go to the earlier (larger) lambda
    let mut best = 0;
    for (i, &m) in mean_loss.iter().enumerate() {
        if m < mean_loss[best] {
            best = i;
        }
    }

    Ok(CvReport {
        lambda_opt: path.values[best],
        lambda_path: path.clone(),
        mean_loss,
        se_loss,
        fold_assignment: folds.to_vec(),
        loss_kind,
        nonconverged_fits: nonconverged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvSummary {
    pub model_size_mean: f64,
    pub model_size_sd: f64,
    pub misclass_mean: f64,
    pub misclass_sd: f64,
    pub model_sizes: Vec<usize>,
    pub misclassified: Vec<bool>,
    /// Held-out rows whose fit did not certify; excluded from the aggregates.
    pub failed: Vec<usize>,
}

/// Leave-one-out evaluation at a fixed penalty and weight vector.
pub fn loocv(data: &Dataset, w: &WeightVector, lambda: f64, limit: f64, cfg: &SolverConfig) -> Result<LoocvSummary> {
    let n = data.n();
    if n < 2 {
        return Err(invalid("leave-one-out needs at least two observations"));
    }
    let per_row: Vec<Result<Option<(usize, bool)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let r = fit_from(&data.select_rows(&train), w, lambda, cfg, None)?;
            if !r.converged {
                return Ok(None);
            }
            Ok(Some(evaluate_held_out(data, i, &r.coef, limit)?))
        })
        .collect();
    summarize_loocv(per_row)
}

/// Leave-one-out where every held-out row re-derives its weights and
/// re-selects lambda by `inner_k`-fold cross-validation on the remaining rows.
#[allow(clippy::too_many_arguments)]
pub fn loocv_refit(
    data: &Dataset,
    scheme: WeightScheme,
    weight_cfg: &WeightConfig,
    inner_k: usize,
    limit: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<LoocvSummary> {
    let n = data.n();
    if n < 2 {
        return Err(invalid("leave-one-out needs at least two observations"));
    }
    let per_row: Vec<Result<Option<(usize, bool)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let train_data = data.select_rows(&train);
            let k = inner_k.min(train_data.n());
            let sel = select_weights_and_lambda(&train_data, scheme, weight_cfg, k, seed, cfg)?;
            let r = fit_from(&train_data, &sel.weights, sel.lambda, cfg, None)?;
            if !r.converged {
                return Ok(None);
            }
            Ok(Some(evaluate_held_out(data, i, &r.coef, limit)?))
        })
        .collect();
    summarize_loocv(per_row)
}

fn evaluate_held_out(data: &Dataset, i: usize, coef: &Coefficients, limit: f64) -> Result<(usize, bool)> {
    let (thresholded, support) = threshold_coefficients(coef, limit)?;
    let row = data.select_rows(&[i]);
    let eta = thresholded.linear_predictor(row.x())?[0];
    let pred = if sigmoid_prob(eta) >= 0.5 { 1.0 } else { 0.0 };
    Ok((support.len(), pred != data.y()[i]))
}

fn summarize_loocv(per_row: Vec<Result<Option<(usize, bool)>>>) -> Result<LoocvSummary> {
    let mut model_sizes = Vec::new();
    let mut misclassified = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in per_row.into_iter().enumerate() {
        match r? {
            Some((size, miss)) => {
                model_sizes.push(size);
                misclassified.push(miss);
            }
            None => failed.push(i),
        }
    }
    if !failed.is_empty() {
        log::warn!("leave-one-out: {} held-out fits did not certify and were excluded", failed.len());
    }
    let sizes: Vec<f64> = model_sizes.iter().map(|&s| s as f64).collect();
    let misses: Vec<f64> = misclassified.iter().map(|&m| f64::from(u8::from(m))).collect();
    let (model_size_mean, model_size_sd) = mean_sd(&sizes);
    let (misclass_mean, misclass_sd) = mean_sd(&misses);
    Ok(LoocvSummary {
        model_size_mean,
        model_size_sd,
        misclass_mean,
        misclass_sd,
        model_sizes,
        misclassified,
        failed,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Zeroes entries with `|beta_j| < limit` and reports the survivors.
pub fn threshold_coefficients(coef: &Coefficients, limit: f64) -> Result<(Coefficients, SupportSet)> {
    if !(limit >= 0.0) {
        return Err(invalid(format!("threshold limit must be non-negative, got {limit}")));
    }
    let beta = coef.beta.mapv(|b| if b.abs() < limit { 0.0 } else { b });
    let support = SupportSet::from_beta(beta.view(), 0.0);
    Ok((
        Coefficients {
            beta,
            intercept: coef.intercept,
        },
        support,
    ))
}

/// `(20 L A / w_min) sqrt(2 log(2p) / n)`: the smallest penalty covered by
/// the oracle inequalities.
pub fn theoretical_lambda_floor(l_bound: f64, a: f64, w_min: f64, n: usize, p: usize) -> f64 {
    20.0 * l_bound * a / w_min * (2.0 * (2.0 * p as f64).ln() / n as f64).sqrt()
}

/// Normalized weights and a CV-selected penalty for one scheme.
#[derive(Debug, Clone)]
pub struct Selection {
    pub weights: WeightVector,
    pub lambda: f64,
    pub pilot: Option<Coefficients>,
}

/// Plain-Lasso pilot for adaptive weights: a fixed penalty when configured,
/// otherwise the CV-selected one.
pub fn lasso_pilot(
    data: &Dataset,
    weight_cfg: &WeightConfig,
    k: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Coefficients> {
    let uniform = WeightVector::uniform(data.p());
    let lambda = match weight_cfg.lasso_pilot_lambda {
        Some(l) => l,
        None => {
            let path = LambdaPath::for_data(data, &uniform, cfg.fit_intercept)?;
            cross_validate(data, &uniform, &path, k, LossKind::Deviance, seed, cfg)?.lambda_opt
        }
    };
    Ok(fit_from(data, &uniform, lambda, cfg, None)?.coef)
}

/// Computes normalized weights for `scheme` and selects lambda for them by
/// deviance cross-validation.
pub fn select_weights_and_lambda(
    data: &Dataset,
    scheme: WeightScheme,
    weight_cfg: &WeightConfig,
    k: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Selection> {
    let pilot = match scheme {
        WeightScheme::TypeIV => Some(lasso_pilot(data, weight_cfg, k, seed, cfg)?),
        _ => None,
    };
    let weights = normalize(&compute_weights(scheme, data, weight_cfg, pilot.as_ref())?);
    let path = LambdaPath::for_data(data, &weights, cfg.fit_intercept)?;
    let cv = cross_validate(data, &weights, &path, k, LossKind::Deviance, seed, cfg)?;
    Ok(Selection {
        weights,
        lambda: cv.lambda_opt,
        pilot,
    })
}
