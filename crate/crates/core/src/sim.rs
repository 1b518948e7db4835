//! Monte-Carlo comparison of the ordinary and weighted Lasso on AR(1)
//! Gaussian designs.
//!
//! Each replicate draws a training and a test design from the same
//! `N_p(0, Sigma)` with `Sigma_kl = rho^|k-l|`, picks `lambda_op` once by
//! 10-fold deviance CV of the plain Lasso, then fits every method at that
//! penalty with normalized weights computed on the training rows.

use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Coefficients, Dataset, SupportSet};
use crate::error::{invalid, Error, Result};
use crate::logistic::sigmoid_prob;
use crate::solver::{fit, SolverConfig};
use crate::tuning::{cross_validate, mean_sd, LambdaPath, LossKind};
use crate::weights::{compute_weights, normalize, WeightConfig, WeightScheme, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    /// Nine coefficients equal to 10, the rest zero.
    Pattern1,
    /// `(17 x3, -5 x3, 7 x3, 0 ...)`.
    Pattern2,
    Custom(Vec<f64>),
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Pattern1 => f.write_str("1"),
            Pattern::Pattern2 => f.write_str("2"),
            Pattern::Custom(_) => f.write_str("custom"),
        }
    }
}

pub fn beta_star(pattern: &Pattern, p: usize) -> Result<Coefficients> {
    let head: &[f64] = match pattern {
        Pattern::Pattern1 => &[10.0; 9],
        Pattern::Pattern2 => &[17.0, 17.0, 17.0, -5.0, -5.0, -5.0, 7.0, 7.0, 7.0],
        Pattern::Custom(b) => {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "custom beta_star",
                    expected: p,
                    got: b.len(),
                });
            }
            return Ok(Coefficients::new(Array1::from(b.clone())));
        }
    };
    if p < head.len() {
        return Err(invalid(format!("built-in patterns need p >= 9, got {p}")));
    }
    let mut beta = Array1::zeros(p);
    beta.slice_mut(ndarray::s![..head.len()]).assign(&Array1::from(head.to_vec()));
    Ok(Coefficients::new(beta))
}

/// Rows i.i.d. `N_p(0, Sigma)` with `Sigma_kl = rho^|k-l|`, via the AR(1)
/// recursion across columns.
pub fn gen_ar1_gaussian(n: usize, p: usize, rho: f64, seed: u64) -> Result<Array2<f64>> {
    ar1_design(&mut ChaCha8Rng::seed_from_u64(seed), n, p, rho)
}

pub fn ar1_design<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize, rho: f64) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for mut row in x.rows_mut() {
        let mut prev = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            prev = if j == 0 { z } else { rho * prev + innov * z };
            *v = prev;
        }
    }
    Ok(x)
}

/// `y_i ~ Bernoulli(sigmoid(X_i beta*))`.
pub fn gen_responses(x: &Array2<f64>, beta_star: &Coefficients, seed: u64) -> Result<Array1<f64>> {
    responses(&mut ChaCha8Rng::seed_from_u64(seed), x, beta_star)
}

pub fn responses<R: Rng + ?Sized>(rng: &mut R, x: &Array2<f64>, beta_star: &Coefficients) -> Result<Array1<f64>> {
    let eta = beta_star.linear_predictor(x)?;
    Ok(eta.mapv(|e| {
        let u: f64 = rng.random();
        if u < sigmoid_prob(e) {
            1.0
        } else {
            0.0
        }
    }))
}

/// `||X_test beta* - X_test beta_hat||_2` for one replicate.
pub fn prediction_error(x_test: &Array2<f64>, beta_star: &Coefficients, beta_hat: &Coefficients) -> Result<f64> {
    beta_hat.check_against(beta_star.p())?;
    let diff = &beta_star.beta - &beta_hat.beta;
    let d = Coefficients::new(diff).linear_predictor(x_test)?;
    Ok(d.dot(&d).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRecovery {
    pub contains_true: bool,
    pub exact: bool,
    pub size: usize,
}

pub fn support_recovery(beta_hat: &Coefficients, beta_star: &Coefficients, limit: f64) -> Result<SupportRecovery> {
    if !(limit >= 0.0) {
        return Err(invalid(format!("support limit must be non-negative, got {limit}")));
    }
    beta_hat.check_against(beta_star.p())?;
    let est = beta_hat.support(limit);
    let truth = SupportSet::from_beta(beta_star.beta.view(), 0.0);
    Ok(SupportRecovery {
        contains_true: truth.is_subset_of(&est),
        exact: truth == est,
        size: est.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub rho: f64,
    pub pattern: Pattern,
    pub n_replicates: usize,
    pub seed: u64,
    pub methods: Vec<WeightScheme>,
    pub cv_folds: usize,
    /// Coefficients below this magnitude count as zero for support recovery.
    pub support_limit: f64,
    pub weights: WeightConfig,
    pub solver: SolverConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test: 200,
            p: 50,
            rho: 0.3,
            pattern: Pattern::Pattern1,
            n_replicates: 100,
            seed: 1,
            methods: WeightScheme::ALL.to_vec(),
            cv_folds: 10,
            support_limit: 1e-4,
            weights: WeightConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(invalid("n_train and n_test must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n_replicates == 0 {
            return Err(invalid("n_replicates must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("at least one method is required"));
        }
        if self.cv_folds < 2 || self.cv_folds > self.n_train {
            return Err(invalid(format!("cv_folds must lie in [2, n_train], got {}", self.cv_folds)));
        }
        self.weights.validate()?;
        self.solver.validate()?;
        beta_star(&self.pattern, self.p)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: WeightScheme,
    pub lambda: f64,
    pub l1_error: f64,
    pub pred_error: f64,
    pub contains_true: bool,
    pub exact_support: bool,
    pub model_size: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: WeightScheme,
    pub l1_error_mean: f64,
    pub l1_error_sd: f64,
    /// `sqrt(mean over replicates of ||X_test (beta* - beta_hat)||^2)`.
    pub pred_error_rms: f64,
    /// Plain mean of the per-replicate norms.
    pub pred_error_mean_norm: f64,
    pub pred_error_sd: f64,
    pub support_recovery_rate: f64,
    pub exact_recovery_rate: f64,
    pub replicates_completed: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub per_method: Vec<MethodSummary>,
    pub per_replicate: Vec<ReplicateRecord>,
    /// `(replicate, method or None for the whole replicate, message)`.
    pub failures: Vec<(usize, Option<WeightScheme>, String)>,
}

impl SimReport {
    pub fn method(&self, m: WeightScheme) -> Option<&MethodSummary> {
        self.per_method.iter().find(|s| s.method == m)
    }
}

/// Independent stream for replicate `r`.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

type ReplicateOutcome = (Vec<ReplicateRecord>, Vec<(usize, Option<WeightScheme>, String)>);

pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let truth = beta_star(&cfg.pattern, cfg.p)?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|r| match run_replicate(cfg, &truth, r) {
            Ok(out) => out,
            Err(e) => (Vec::new(), vec![(r, None, e.to_string())]),
        })
        .collect();

    let mut per_replicate = Vec::new();
    let mut failures = Vec::new();
    for (recs, fails) in outcomes {
        per_replicate.extend(recs);
        failures.extend(fails);
    }
    for (r, m, msg) in &failures {
        log::warn!("replicate {r} ({}) failed: {msg}", m.map_or("all methods".to_string(), |m| m.to_string()));
    }

    let per_method = cfg
        .methods
        .iter()
        .map(|&m| summarize(m, per_replicate.iter().filter(|r| r.method == m)))
        .collect();
    Ok(SimReport {
        config: cfg.clone(),
        per_method,
        per_replicate,
        failures,
    })
}

fn run_replicate(cfg: &SimConfig, truth: &Coefficients, r: usize) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(cfg.seed, r);
    let x_train = ar1_design(&mut rng, cfg.n_train, cfg.p, cfg.rho)?;
    let y_train = responses(&mut rng, &x_train, truth)?;
    let x_test = ar1_design(&mut rng, cfg.n_test, cfg.p, cfg.rho)?;
    let fold_seed = rng.next_u64();
    let train = Dataset::new(x_train, y_train)?;

    let uniform = WeightVector::uniform(cfg.p);
    let path = LambdaPath::for_data(&train, &uniform, cfg.solver.fit_intercept)?;
    let cv = cross_validate(&train, &uniform, &path, cfg.cv_folds, LossKind::Deviance, fold_seed, &cfg.solver)?;
    let lambda = cv.lambda_opt;

    let lasso = fit(&train, &uniform, lambda, &cfg.solver)?;
    let pilot = match cfg.weights.lasso_pilot_lambda {
        Some(l) if cfg.methods.contains(&WeightScheme::TypeIV) => fit(&train, &uniform, l, &cfg.solver)?.coef,
        _ => lasso.coef.clone(),
    };

    let mut records = Vec::with_capacity(cfg.methods.len());
    let mut failures = Vec::new();
    for &method in &cfg.methods {
        let result = if method == WeightScheme::Uniform {
            Ok(lasso.clone())
        } else {
            compute_weights(method, &train, &cfg.weights, Some(&pilot))
                .and_then(|w| fit(&train, &normalize(&w), lambda, &cfg.solver))
        };
        match result {
            Ok(res) => {
                let support = support_recovery(&res.coef, truth, cfg.support_limit)?;
                records.push(ReplicateRecord {
                    replicate: r,
                    method,
                    lambda,
                    l1_error: res.coef.l1_distance(truth)?,
                    pred_error: prediction_error(&x_test, truth, &res.coef)?,
                    contains_true: support.contains_true,
                    exact_support: support.exact,
                    model_size: support.size,
                    converged: res.converged,
                    iterations: res.iterations,
                });
            }
            Err(e) => failures.push((r, Some(method), e.to_string())),
        }
    }
    Ok((records, failures))
}

fn summarize<'a>(method: WeightScheme, recs: impl Iterator<Item = &'a ReplicateRecord>) -> MethodSummary {
    let recs: Vec<&ReplicateRecord> = recs.collect();
    let l1: Vec<f64> = recs.iter().map(|r| r.l1_error).collect();
    let pred: Vec<f64> = recs.iter().map(|r| r.pred_error).collect();
    let (l1_error_mean, l1_error_sd) = mean_sd(&l1);
    let (pred_error_mean_norm, pred_error_sd) = mean_sd(&pred);
    let count = recs.len();
    let rate = |f: fn(&ReplicateRecord) -> bool| {
        if count == 0 {
            f64::NAN
        } else {
            recs.iter().filter(|r| f(r)).count() as f64 / count as f64
        }
    };
    MethodSummary {
        method,
        l1_error_mean,
        l1_error_sd,
        pred_error_rms: if count == 0 {
            f64::NAN
        } else {
            (pred.iter().map(|v| v * v).sum::<f64>() / count as f64).sqrt()
        },
        pred_error_mean_norm,
        pred_error_sd,
        support_recovery_rate: rate(|r| r.contains_true),
        exact_recovery_rate: rate(|r| r.exact_support),
        replicates_completed: count,
        nonconverged: recs.iter().filter(|r| !r.converged).count(),
    }
}

/// The full `p x rho x pattern` grid of the published tables.
pub fn paper_grid(base: &SimConfig) -> Vec<SimConfig> {
    let mut out = Vec::with_capacity(24);
    for pattern in [Pattern::Pattern1, Pattern::Pattern2] {
        for rho in [0.3, 0.5, 0.8] {
            for p in [50, 100, 150, 200] {
                out.push(SimConfig {
                    p,
                    rho,
                    pattern: pattern.clone(),
                    ..base.clone()
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn patterns() {
        let b1 = beta_star(&Pattern::Pattern1, 50).unwrap();
        assert!(b1.beta.iter().take(9).all(|&v| v == 10.0));
        assert!(b1.beta.iter().skip(9).all(|&v| v == 0.0));
        assert_eq!(b1.support(0.0).len(), 9);
        let b2 = beta_star(&Pattern::Pattern2, 50).unwrap();
        assert_eq!(&b2.beta.to_vec()[..10], &[17.0, 17.0, 17.0, -5.0, -5.0, -5.0, 7.0, 7.0, 7.0, 0.0]);
        assert_eq!(b2.beta.iter().map(|v| v.abs()).sum::<f64>(), 87.0);
        assert!(beta_star(&Pattern::Pattern1, 8).is_err());
        assert!(beta_star(&Pattern::Custom(vec![1.0]), 2).is_err());
    }

    #[test]
    fn design_is_seeded() {
        let a = gen_ar1_gaussian(20, 5, 0.5, 3).unwrap();
        let b = gen_ar1_gaussian(20, 5, 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert!(gen_ar1_gaussian(2, 2, 1.0, 0).is_err());
    }

    #[test]
    fn prediction_error_cases() {
        let x = Array2::eye(3);
        let b = Coefficients::new(array![1.0, 2.0, 3.0]);
        assert_eq!(prediction_error(&x, &b, &b).unwrap(), 0.0);
        let h = Coefficients::new(array![0.0, 2.0, 3.0]);
        assert_eq!(prediction_error(&x, &b, &h).unwrap(), 1.0);
    }

    #[test]
    fn support_recovery_cases() {
        let truth = Coefficients::new(array![1.0, 0.0, -2.0]);
        let s = support_recovery(&truth, &truth, 1e-4).unwrap();
        assert!(s.contains_true && s.exact && s.size == 2);
        let s = support_recovery(&Coefficients::zeros(3), &truth, 1e-4).unwrap();
        assert!(!s.contains_true && !s.exact && s.size == 0);
        let s = support_recovery(&Coefficients::new(array![1.0, 0.5, -2.0]), &truth, 1e-4).unwrap();
        assert!(s.contains_true && !s.exact);
    }

    #[test]
    fn grid_cardinality() {
        assert_eq!(paper_grid(&SimConfig::default()).len(), 24);
    }
}
