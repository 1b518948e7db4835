//! Oracle-inequality calculators and an empirical probe of the (weighted)
//! Stabil restricted-eigenvalue conditions.
//!
//! Conventions: `k` is the cone multiplier, `c` the curvature constant. The
//! bounds hold with probability at least `1 - (2p)^{-A^2}` once
//! `lambda >= (20 L A / w_min) sqrt(2 log(2p) / n)`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SupportSet;
use crate::error::{invalid, Error, Result};
use crate::tuning::theoretical_lambda_floor;
use crate::weights::WeightVector;

/// `e^{LB} / (2 (1 + e^{LB})^2)`, evaluated as `sigma(LB)(1 - sigma(LB)) / 2`.
pub fn s_constant(l_bound: f64, b_radius: f64) -> f64 {
    let t = l_bound * b_radius;
    let e = (-t.abs()).exp();
    0.5 * e / ((1.0 + e) * (1.0 + e))
}

/// Curvature constant of the earlier unweighted analysis, `(1 + e^{LB})^-4`.
pub fn bunea_s_constant(l_bound: f64, b_radius: f64) -> f64 {
    (1.0 + (l_bound * b_radius).exp()).powi(-4)
}

/// `(2p)^{-A^2}`: probability that the oracle inequalities fail.
pub fn failure_probability(p: usize, a: f64) -> f64 {
    (2.0 * p as f64).powf(-a * a)
}

/// Scalar summary of everything the bound formulas consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sup-norm bound on the design entries.
    pub l_bound: f64,
    /// Radius of the l1 ball holding the true coefficients.
    pub b_radius: f64,
    pub a: f64,
    pub lambda: f64,
    pub d_star: usize,
    /// Cone multiplier of the Stabil condition, in (0, 1).
    pub k: f64,
    pub eps_n: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// `sum_{j in H} w_j^2`.
    pub wh_sq: f64,
    pub n: usize,
    pub p: usize,
}

impl BoundInputs {
    /// Summarizes a weight vector on the true support `h`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_weights(
        l_bound: f64,
        b_radius: f64,
        a: f64,
        lambda: f64,
        k: f64,
        eps_n: f64,
        w: &WeightVector,
        h: &SupportSet,
        n: usize,
    ) -> Self {
        Self {
            l_bound,
            b_radius,
            a,
            lambda,
            d_star: h.len(),
            k,
            eps_n,
            w_min: w.min(),
            w_max: w.max(),
            wh_sq: h.indices.iter().map(|&j| w.w[j] * w.w[j]).sum(),
            n,
            p: w.len(),
        }
    }

    pub fn s(&self) -> f64 {
        s_constant(self.l_bound, self.b_radius)
    }

    pub fn lambda_floor(&self) -> f64 {
        theoretical_lambda_floor(self.l_bound, self.a, self.w_min, self.n, self.p)
    }

    /// Range checks plus a warning when lambda sits below the theoretical
    /// floor (the bounds still compute, but are not guaranteed).
    pub fn validate(&self) -> Result<()> {
        self.check()?;
        if self.below_floor() {
            log::warn!(
                "lambda = {} is below the theoretical floor {}; the bounds are not guaranteed",
                self.lambda,
                self.lambda_floor()
            );
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if !(self.l_bound > 0.0) || !(self.b_radius > 0.0) {
            return Err(invalid("L and B must be positive"));
        }
        if !(self.a >= 1.0) {
            return Err(invalid(format!("A must be at least 1, got {}", self.a)));
        }
        if !(self.lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.k > 0.0) {
            return Err(invalid(format!("k must be positive, got {}", self.k)));
        }
        if !(self.s() > 0.0) {
            return Err(invalid("s underflowed to zero; L*B is too large"));
        }
        if !(self.eps_n >= 0.0) {
            return Err(invalid("eps_n must be non-negative"));
        }
        if !(self.w_min > 0.0) || !(self.w_max >= self.w_min) || !(self.wh_sq >= 0.0) {
            return Err(invalid("weight summary must satisfy 0 < w_min <= w_max and wh_sq >= 0"));
        }
        Ok(())
    }

    pub fn below_floor(&self) -> bool {
        self.lambda < self.lambda_floor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    /// Bound under the Stabil condition (uses `sum_{j in H} w_j^2`).
    pub stabil_bound: f64,
    /// Bound under the Weighted Stabil condition (uses `d*`).
    pub weighted_stabil_bound: f64,
}

pub fn l1_error_bounds(inputs: &BoundInputs) -> Result<BoundPair> {
    inputs.check()?;
    let BoundInputs {
        lambda,
        k,
        eps_n,
        w_min,
        wh_sq,
        ..
    } = *inputs;
    let s = inputs.s();
    let d = inputs.d_star as f64;
    let noise = (lambda + 2.0 * s) / (lambda * w_min) * eps_n;
    Ok(BoundPair {
        stabil_bound: 2.0 * lambda * wh_sq / (s * k * w_min) + noise,
        weighted_stabil_bound: 2.0 * lambda * d / (s * k * w_min) + noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionBounds {
    pub stabil_bound: f64,
    pub weighted_stabil_bound: f64,
    /// Whether `B (4 w_max + w_min)/w_min + eps_n/w_min <= B*`; `None` when
    /// no `B*` was supplied.
    pub weight_condition: Option<bool>,
}

pub fn prediction_error_bounds(inputs: &BoundInputs, b_star: Option<f64>) -> Result<PredictionBounds> {
    inputs.check()?;
    let BoundInputs {
        lambda,
        k,
        eps_n,
        w_min,
        w_max,
        wh_sq,
        b_radius,
        ..
    } = *inputs;
    let s = inputs.s();
    let d = inputs.d_star as f64;
    let noise = (2.0 * lambda / s + 3.0) * eps_n;
    let lhs = b_radius * (4.0 * w_max + w_min) / w_min + eps_n / w_min;
    Ok(PredictionBounds {
        stabil_bound: 3.0 * lambda * lambda * wh_sq / (s * s * k) + noise,
        weighted_stabil_bound: 3.0 * lambda * lambda * d / (s * s * k) + noise,
        weight_condition: b_star.map(|bs| lhs <= bs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMin {
    /// Smallest true signal for which the support is covered.
    pub b0: f64,
    /// Dimension `p(delta, A) = exp(log(1/delta) / A^2) / 2` at which the
    /// coverage probability reaches `1 - delta`.
    pub p_delta: f64,
}

pub fn beta_min_threshold(inputs: &BoundInputs, delta: f64) -> Result<BetaMin> {
    inputs.check()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let s = inputs.s();
    let d = inputs.d_star as f64;
    let lambda = inputs.lambda;
    Ok(BetaMin {
        b0: 4.0 * lambda * d / (2.0 * s * inputs.k) + (lambda + 2.0 * s) / lambda * inputs.eps_n,
        p_delta: 0.5 * ((1.0 / delta).ln() / (inputs.a * inputs.a)).exp(),
    })
}

/// Membership slack of the weighted cone
/// `||W_{H^c} b_{H^c}||_1 <= k ||W_H b_H||_1 + eps`; non-negative inside.
pub fn cone_slack(b: &Array1<f64>, mask: &[bool], w: &WeightVector, k: f64, eps: f64) -> f64 {
    let (mut on, mut off) = (0.0, 0.0);
    for ((&bj, &wj), &inside) in b.iter().zip(w.w.iter()).zip(mask) {
        if inside {
            on += wj * bj.abs();
        } else {
            off += wj * bj.abs();
        }
    }
    k * on + eps - off
}

/// Draws vectors from the weighted cone: Gaussian on `H`, and a Gaussian
/// direction off `H` rescaled to weighted l1 mass `u (k ||W_H b_H||_1 + eps)`.
#[derive(Debug, Clone)]
pub struct ConeSampler {
    mask: Vec<bool>,
    w: WeightVector,
    k: f64,
    eps: f64,
}

impl ConeSampler {
    pub fn new(p: usize, h: &SupportSet, w: &WeightVector, k: f64, eps: f64) -> Result<Self> {
        if w.len() != p {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: p,
                got: w.len(),
            });
        }
        if h.indices.iter().any(|&j| j >= p) {
            return Err(invalid("support index out of range"));
        }
        if !(k >= 0.0) || !(eps >= 0.0) {
            return Err(invalid("cone parameters k and eps must be non-negative"));
        }
        if h.is_empty() && eps == 0.0 {
            log::warn!("empty support with eps = 0: only the zero vector lies in the cone");
        }
        Ok(Self {
            mask: h.mask(p),
            w: w.clone(),
            k,
            eps,
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let u: f64 = rng.random();
        self.sample_with_u(rng, u)
    }

    pub fn sample_with_u<R: Rng + ?Sized>(&self, rng: &mut R, u: f64) -> Array1<f64> {
        let p = self.mask.len();
        let mut b = Array1::zeros(p);
        let mut on = 0.0;
        for j in 0..p {
            if self.mask[j] {
                let z: f64 = rng.sample(StandardNormal);
                b[j] = z;
                on += self.w.w[j] * z.abs();
            }
        }
        let budget = u * (self.k * on + self.eps);
        let mut off = 0.0;
        for j in 0..p {
            if !self.mask[j] {
                let z: f64 = rng.sample(StandardNormal);
                b[j] = z;
                off += self.w.w[j] * z.abs();
            }
        }
        let scale = if off > 0.0 && budget > 0.0 { budget / off } else { 0.0 };
        for j in 0..p {
            if !self.mask[j] {
                b[j] *= scale;
            }
        }
        b
    }

    pub fn slack(&self, b: &Array1<f64>) -> f64 {
        cone_slack(b, &self.mask, &self.w, self.k, self.eps)
    }
}

const CONE_BATCH: usize = 4096;

/// Batches of [`CONE_BATCH`] samples, each from its own stream of `seed`, so
/// the first `m` samples do not depend on `n_samples`.
fn cone_batches<T: Send>(
    sampler: &ConeSampler,
    n_samples: usize,
    seed: u64,
    per_sample: impl Fn(Array1<f64>) -> T + Sync,
) -> Vec<T> {
    let batches = n_samples.div_ceil(CONE_BATCH);
    let out: Vec<Vec<T>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(bi as u64);
            let len = CONE_BATCH.min(n_samples - bi * CONE_BATCH);
            (0..len).map(|_| per_sample(sampler.sample(&mut rng))).collect()
        })
        .collect();
    out.into_iter().flatten().collect()
}

pub fn sample_weighted_cone(
    p: usize,
    h: &SupportSet,
    w: &WeightVector,
    k: f64,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    let sampler = ConeSampler::new(p, h, w, k, eps)?;
    Ok(cone_batches(&sampler, n_samples, seed, |b| b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSampleReport {
    pub n_samples: usize,
    /// Sampled minimum of `(b' Sigma b + eps) / ||b_H||^2`; an upper estimate
    /// of the Stabil constant.
    pub c1_hat: f64,
    /// Same with `||W_H b_H||^2` in the denominator.
    pub c2_hat: f64,
    pub violations: usize,
    /// Samples skipped because `||b_H||` vanished.
    pub skipped: usize,
}

pub fn estimate_stabil_constants(
    sigma: &Array2<f64>,
    h: &SupportSet,
    w: &WeightVector,
    k: f64,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ConeSampleReport> {
    let p = w.len();
    if sigma.dim() != (p, p) {
        return Err(Error::DimensionMismatch {
            what: "sigma dimension",
            expected: p,
            got: sigma.nrows(),
        });
    }
    let sym = symmetrize(sigma)?;
    check_psd(&sym)?;
    let sampler = ConeSampler::new(p, h, w, k, eps)?;
    let mask = sampler.mask().to_vec();

    let quotients = cone_batches(&sampler, n_samples, seed, |b| {
        let (mut nh, mut nwh) = (0.0, 0.0);
        for j in 0..p {
            if mask[j] {
                nh += b[j] * b[j];
                nwh += (w.w[j] * b[j]).powi(2);
            }
        }
        if nh.sqrt() < 1e-12 {
            return None;
        }
        let quad = b.dot(&sym.dot(&b)) + eps;
        Some((quad / nh, quad / nwh))
    });

    let mut report = ConeSampleReport {
        n_samples,
        c1_hat: f64::INFINITY,
        c2_hat: f64::INFINITY,
        violations: 0,
        skipped: 0,
    };
    for q in quotients {
        match q {
            None => report.skipped += 1,
            Some((q1, q2)) => {
                report.c1_hat = report.c1_hat.min(q1);
                report.c2_hat = report.c2_hat.min(q2);
                if q1 < 0.0 || q2 < 0.0 {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

fn symmetrize(sigma: &Array2<f64>) -> Result<Array2<f64>> {
    let scale = sigma.fold(1.0_f64, |m, v| m.max(v.abs()));
    let asym = (sigma - &sigma.t()).fold(0.0_f64, |m, v| m.max(v.abs()));
    if asym > 1e-8 * scale {
        return Err(invalid(format!("sigma is not symmetric (max asymmetry {asym:e})")));
    }
    Ok((sigma + &sigma.t()) * 0.5)
}

/// Cholesky of `sigma + tol I`; a non-positive pivot means an eigenvalue
/// below `-tol`.
fn check_psd(sigma: &Array2<f64>) -> Result<()> {
    let p = sigma.nrows();
    let tol = 1e-8 * sigma.diag().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = sigma[[i, j]] + if i == j { tol } else { 0.0 };
            for m in 0..j {
                s -= l[[i, m]] * l[[j, m]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPsd(s - tol));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(())
}

/// `Sigma_kl = rho^|k-l|`.
pub fn ar1_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}
