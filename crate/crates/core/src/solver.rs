//! Weighted-Lasso logistic regression solver.
//!
//! Minimizes `loss(beta) + lambda * sum_j w_j |beta_j|` with FISTA: proximal
//! gradient steps on the smooth loss, Nesterov momentum, backtracking on the
//! step size and a monotone restart whenever an extrapolated step would raise
//! the objective. Close to the optimum, where objective differences drown in
//! rounding, the line search and the restart switch to gradient-based tests.
//! Every result carries its KKT certificate.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::dataset::{Coefficients, Dataset};
use crate::error::{invalid, Error, Result};
use crate::logistic::{loss_from_eta, neg_log_likelihood, weighted_residuals};
use crate::weights::{WeightScheme, WeightVector};

/// Coefficients beyond this magnitude are treated as evidence of separation.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Smallest weight accepted by the column-rescaling route.
pub const TRANSFORM_WEIGHT_FLOOR: f64 = 1e-8;
/// Relative objective increase tolerated on an accepted step.
const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    ProxGradFista,
    TransformThenUnweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative objective change between accepted iterates.
    pub tol_obj: f64,
    pub tol_kkt: f64,
    pub algorithm: Algorithm,
    pub backtracking_shrink: f64,
    /// Unpenalized intercept; off by default.
    pub fit_intercept: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol_obj: 1e-9,
            tol_kkt: 1e-6,
            algorithm: Algorithm::ProxGradFista,
            backtracking_shrink: 0.5,
            fit_intercept: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if !(self.tol_obj > 0.0) || !(self.tol_kkt > 0.0) {
            return Err(invalid("solver tolerances must be positive"));
        }
        if !(self.backtracking_shrink > 0.0 && self.backtracking_shrink < 1.0) {
            return Err(invalid("backtracking_shrink must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coef: Coefficients,
    pub lambda: f64,
    pub weights: WeightVector,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_max_violation: f64,
    pub converged: bool,
}

/// Soft-threshold of a gradient step: `sign(z) max(|z| - step lambda w_j, 0)`
/// with `z = beta - step grad`.
pub fn prox_step(
    beta: ArrayView1<f64>,
    grad: ArrayView1<f64>,
    step: f64,
    w: &WeightVector,
    lambda: f64,
) -> Array1<f64> {
    Zip::from(beta)
        .and(grad)
        .and(&w.w)
        .map_collect(|&b, &g, &wj| soft_threshold(b - step * g, step * lambda * wj))
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `loss + lambda * sum_j w_j |beta_j|`.
pub fn objective(data: &Dataset, coef: &Coefficients, w: &WeightVector, lambda: f64) -> Result<f64> {
    check_weights(data, w)?;
    Ok(neg_log_likelihood(data, coef)? + lambda * weighted_l1(coef.beta.view(), w.w.view()))
}

fn weighted_l1(beta: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    Zip::from(beta).and(w).fold(0.0, |acc, &b, &wj| acc + wj * b.abs())
}

/// Per-coordinate violation of the optimality system
/// `score_j = lambda w_j sign(beta_j)` (active) and
/// `|score_j| <= lambda w_j` (inactive), with
/// `score_j = (1/n) sum_i X_ij (y_i - pi_i)`.
pub fn kkt_residuals(data: &Dataset, result: &FitResult) -> Result<Array1<f64>> {
    kkt_residuals_at(data, &result.coef, &result.weights, result.lambda)
}

pub fn kkt_residuals_at(
    data: &Dataset,
    coef: &Coefficients,
    w: &WeightVector,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_weights(data, w)?;
    let eta = coef.linear_predictor(data.x())?;
    let factors = data.row_factors();
    let r = weighted_residuals(data.y().view(), factors.view(), eta.view());
    let score = data.x().t().dot(&r).mapv(|g| -g);
    Ok(Zip::from(&score)
        .and(&coef.beta)
        .and(&w.w)
        .map_collect(|&s, &b, &wj| coordinate_violation(s, b, lambda * wj)))
}

#[inline]
fn coordinate_violation(score: f64, beta: f64, pen: f64) -> f64 {
    if beta != 0.0 {
        (score - pen * beta.signum()).abs()
    } else {
        (score.abs() - pen).max(0.0)
    }
}

fn max_violation(data: &Dataset, coef: &Coefficients, w: &WeightVector, lambda: f64) -> Result<f64> {
    let mut m = kkt_residuals_at(data, coef, w, lambda)?.fold(0.0_f64, |a, &v| a.max(v));
    if coef.intercept.is_some() {
        let eta = coef.linear_predictor(data.x())?;
        let factors = data.row_factors();
        m = m.max(weighted_residuals(data.y().view(), factors.view(), eta.view()).sum().abs());
    }
    Ok(m)
}

fn check_weights(data: &Dataset, w: &WeightVector) -> Result<()> {
    if w.len() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "weight vector length",
            expected: data.p(),
            got: w.len(),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    Ok(())
}

/// Solves the weighted problem with the algorithm selected in `cfg`,
/// starting from zero.
pub fn fit(data: &Dataset, w: &WeightVector, lambda: f64, cfg: &SolverConfig) -> Result<FitResult> {
    fit_from(data, w, lambda, cfg, None)
}

/// As [`fit`], starting from `init` (a warm start) when given.
pub fn fit_from(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
    init: Option<&Coefficients>,
) -> Result<FitResult> {
    match cfg.algorithm {
        Algorithm::ProxGradFista => fista(data, w, lambda, cfg, init),
        Algorithm::TransformThenUnweighted => transform_route(data, w, lambda, cfg, init),
    }
}

/// Rescales column `j` by `1/w_j`, solves the uniform-weight problem and maps
/// the solution back with `beta_j = beta~_j / w_j`. The returned certificate
/// refers to the original weighted problem.
pub fn fit_by_transform(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    transform_route(data, w, lambda, cfg, None)
}

fn transform_route(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
    init: Option<&Coefficients>,
) -> Result<FitResult> {
    cfg.validate()?;
    check_weights(data, w)?;
    if let Some(j) = w.w.iter().position(|&v| !(v >= TRANSFORM_WEIGHT_FLOOR)) {
        return Err(invalid(format!(
            "weight {j} = {:e} is below {TRANSFORM_WEIGHT_FLOOR:e}; column rescaling is ill-conditioned",
            w.w[j]
        )));
    }
    let mut xt = data.x().clone();
    for (mut col, &wj) in xt.axis_iter_mut(Axis(1)).zip(w.w.iter()) {
        col /= wj;
    }
    let transformed = data.with_design(xt)?;
    let uniform = WeightVector::uniform(data.p());
    // inner violations are scaled by 1/w_j relative to the original problem
    let inner_cfg = SolverConfig {
        tol_kkt: cfg.tol_kkt / w.max().max(1.0),
        algorithm: Algorithm::ProxGradFista,
        ..cfg.clone()
    };
    let init_t = init.map(|c| Coefficients {
        beta: &c.beta * &w.w,
        intercept: c.intercept,
    });
    let inner = fista(&transformed, &uniform, lambda, &inner_cfg, init_t.as_ref())?;
    let coef = Coefficients {
        beta: &inner.coef.beta / &w.w,
        intercept: inner.coef.intercept,
    };
    let objective = objective(data, &coef, w, lambda)?;
    let kkt = max_violation(data, &coef, w, lambda)?;
    Ok(FitResult {
        coef,
        lambda,
        weights: w.clone(),
        objective,
        iterations: inner.iterations,
        kkt_max_violation: kkt,
        converged: inner.converged && kkt <= cfg.tol_kkt,
    })
}

/// Iterate state: coefficients, intercept and the cached linear predictor.
#[derive(Clone)]
struct Point {
    beta: Array1<f64>,
    b0: f64,
    eta: Array1<f64>,
}

impl Point {
    fn new(x: &Array2<f64>, beta: Array1<f64>, b0: f64) -> Self {
        let eta = x.dot(&beta) + b0;
        Self { beta, b0, eta }
    }

    /// `self + m (self - prev)`, linear predictor included.
    fn extrapolate(&self, prev: &Point, m: f64) -> Point {
        Point {
            beta: &self.beta + &((&self.beta - &prev.beta) * m),
            b0: self.b0 + m * (self.b0 - prev.b0),
            eta: &self.eta + &((&self.eta - &prev.eta) * m),
        }
    }

    fn sup_norm(&self) -> f64 {
        self.beta.fold(self.b0.abs(), |a, &b| a.max(b.abs()))
    }
}

/// FISTA fit that also returns the objective at the starting point and after
/// every accepted step.
pub fn fit_with_trace(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(FitResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let r = fista_impl(data, w, lambda, cfg, None, Some(&mut trace))?;
    Ok((r, trace))
}

fn fista(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
    init: Option<&Coefficients>,
) -> Result<FitResult> {
    fista_impl(data, w, lambda, cfg, init, None)
}

fn fista_impl(
    data: &Dataset,
    w: &WeightVector,
    lambda: f64,
    cfg: &SolverConfig,
    init: Option<&Coefficients>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<FitResult> {
    cfg.validate()?;
    check_weights(data, w)?;
    check_lambda(lambda)?;
    if let Some(c) = init {
        c.check_against(data.p())?;
    }

    let x = data.x();
    let y = data.y().view();
    let factors = data.row_factors();
    let c = factors.view();
    let pen = &w.w * lambda;
    let intercept = cfg.fit_intercept;

    let smooth = |pt: &Point| loss_from_eta(y, c, pt.eta.view());
    let penalty = |beta: &Array1<f64>| weighted_l1(beta.view(), pen.view());

    // Curvature bound: trace of X^T C X / 4 dominates the largest eigenvalue.
    let mut lipschitz = Zip::from(x.rows()).and(c).fold(0.0, |acc, row, &ci| acc + ci * row.dot(&row)) / 4.0;
    if intercept {
        lipschitz += c.sum() / 4.0;
    }
    // 1/lipschitz guarantees descent, so backtracking never goes below it;
    // this also keeps the line search alive once rounding hides progress
    let safe_step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut step = safe_step;

    let (beta0, b00) = match init {
        Some(coef) => (coef.beta.clone(), if intercept { coef.intercept.unwrap_or(0.0) } else { 0.0 }),
        None => (Array1::zeros(data.p()), 0.0),
    };
    let mut cur = Point::new(x, beta0, b00);
    let mut cur_obj = smooth(&cur) + penalty(&cur.beta);
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(cur_obj);
    }

    // Null model: zero is optimal exactly when every score sits inside its
    // penalty band. Short-circuiting keeps fits at lambda >= lambda_max
    // exactly zero instead of leaving rounding-level coefficients.
    if !intercept && cur.beta.iter().all(|&b| b == 0.0) {
        let r = weighted_residuals(y, c, cur.eta.view());
        let g = x.t().dot(&r);
        if Zip::from(&g).and(&pen).all(|&gj, &pj| gj.abs() <= pj * (1.0 + 1e-12)) {
            let kkt = max_violation_fast(data, &cur, &pen, intercept);
            return Ok(FitResult {
                coef: Coefficients::zeros(data.p()),
                lambda,
                weights: w.clone(),
                objective: cur_obj,
                iterations: 0,
                kkt_max_violation: kkt,
                converged: kkt <= cfg.tol_kkt,
            });
        }
    }
    let mut ext = cur.clone();
    let mut t = 1.0_f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let grow = 1.0 / cfg.backtracking_shrink.sqrt();

    while iterations < cfg.max_iter {
        iterations += 1;

        let ext_f = smooth(&ext);
        let r = weighted_residuals(y, c, ext.eta.view());
        let grad = x.t().dot(&r);
        let grad0 = if intercept { r.sum() } else { 0.0 };

        // backtracking on the quadratic upper model around `ext`
        step *= grow;
        let noise = ROUNDING_SLACK * ext_f.abs().max(1.0);
        let (cand, cand_f) = loop {
            let beta = Zip::from(&ext.beta)
                .and(&grad)
                .and(&pen)
                .map_collect(|&b, &g, &pj| soft_threshold(b - step * g, step * pj));
            let b0 = if intercept { ext.b0 - step * grad0 } else { 0.0 };
            let cand = Point::new(x, beta, b0);
            let f = smooth(&cand);
            let d = &cand.beta - &ext.beta;
            let d0 = cand.b0 - ext.b0;
            let dd = d.dot(&d) + d0 * d0;
            let quad = dd / (2.0 * step);
            let accept = if dd == 0.0 || step <= safe_step {
                true
            } else if quad > 1e3 * noise {
                f <= ext_f + grad.dot(&d) + grad0 * d0 + quad
            } else {
                // the objective cannot resolve the curvature term here; test
                // the local Lipschitz estimate from gradients instead
                let rc = weighted_residuals(y, c, cand.eta.view());
                let gc = x.t().dot(&rc);
                let curv = (&gc - &grad).dot(&d) + (if intercept { rc.sum() - grad0 } else { 0.0 }) * d0;
                curv <= dd / step
            };
            if accept {
                break (cand, f);
            }
            step = (step * cfg.backtracking_shrink).max(safe_step);
        };
        let cand_obj = cand_f + penalty(&cand.beta);

        // rises within rounding noise of the objective sum still make progress
        // on the certificate, so they are accepted
        if cand_obj > cur_obj + ROUNDING_SLACK * cur_obj.abs().max(1.0) {
            if t > 1.0 {
                // momentum overshot: restart from the last accepted iterate
                t = 1.0;
                ext = cur.clone();
                continue;
            }
            // plain proximal step failed to descend: numerically stationary
            kkt = max_violation_fast(data, &cur, &pen, intercept);
            converged = kkt <= cfg.tol_kkt;
            break;
        }

        // gradient-based restart: drop momentum once it points uphill; unlike
        // objective comparisons this stays informative below rounding level
        let uphill = Zip::from(&ext.beta)
            .and(&cand.beta)
            .and(&cur.beta)
            .fold(0.0, |acc, &e, &c, &p| acc + (e - c) * (c - p))
            + (ext.b0 - cand.b0) * (cand.b0 - cur.b0);
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        ext = cand.extrapolate(&cur, momentum);
        t = t_next;
        let prev_obj = cur_obj;
        cur = cand;
        cur_obj = cand_obj;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(cur_obj);
        }

        if cur.sup_norm() > DIVERGENCE_GUARD {
            return Err(Error::Separation(cur.sup_norm()));
        }

        if (prev_obj - cur_obj).abs() <= cfg.tol_obj * cur_obj.abs().max(1.0) {
            kkt = max_violation_fast(data, &cur, &pen, intercept);
            if kkt <= cfg.tol_kkt {
                converged = true;
                break;
            }
        }
    }

    if lambda == 0.0 && separates(y, cur.eta.view()) {
        return Err(Error::Separation(cur.sup_norm()));
    }

    let coef = Coefficients {
        beta: cur.beta.clone(),
        intercept: intercept.then_some(cur.b0),
    };
    if !converged {
        kkt = max_violation_fast(data, &cur, &pen, intercept);
        log::debug!("fista stopped after {iterations} iterations, kkt violation {kkt:e}");
    }
    Ok(FitResult {
        coef,
        lambda,
        weights: w.clone(),
        objective: cur_obj,
        iterations,
        kkt_max_violation: kkt,
        converged,
    })
}

/// Every row on the correct side of the decision boundary: the unpenalized
/// likelihood has no finite maximizer.
fn separates(y: ArrayView1<f64>, eta: ArrayView1<f64>) -> bool {
    Zip::from(y).and(eta).all(|&yi, &ei| (2.0 * yi - 1.0) * ei > 0.0)
}

fn max_violation_fast(data: &Dataset, pt: &Point, pen: &Array1<f64>, intercept: bool) -> f64 {
    let factors = data.row_factors();
    let r = weighted_residuals(data.y().view(), factors.view(), pt.eta.view());
    let g = data.x().t().dot(&r);
    let m = Zip::from(&g)
        .and(&pt.beta)
        .and(pen)
        .fold(0.0_f64, |acc, &gj, &b, &pj| acc.max(coordinate_violation(-gj, b, pj)));
    if intercept {
        m.max(r.sum().abs())
    } else {
        m
    }
}

/// Fits uniform weights; convenience for the ordinary Lasso.
pub fn fit_lasso(data: &Dataset, lambda: f64, cfg: &SolverConfig) -> Result<FitResult> {
    fit(data, &WeightVector::uniform(data.p()), lambda, cfg)
}

impl FitResult {
    pub fn is_lasso(&self) -> bool {
        self.weights.scheme == WeightScheme::Uniform
    }
}
