#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wlasso::solver::{kkt_residuals, FitResult, SolverConfig};
use wlasso::{Dataset, WeightScheme, WeightVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Gaussian design with Bernoulli responses from a moderate random
/// coefficient vector; both classes are guaranteed to appear.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let x = gaussian_matrix(rng, n, p);
    let beta: Array1<f64> = Array1::from_shape_fn(p, |j| if j < 3 { rng.random_range(-1.5..1.5) } else { 0.0 });
    let mut y: Array1<f64> = x.dot(&beta).mapv(|e| f64::from(u8::from(rng.random::<f64>() < sigmoid(e))));
    y[0] = 0.0;
    y[1] = 1.0;
    Dataset::new(x, y).unwrap()
}

pub fn random_weights<R: Rng>(rng: &mut R, p: usize) -> WeightVector {
    let w = Array1::from_shape_fn(p, |_| rng.random_range(0.5..2.0));
    WeightVector::from_raw(w, WeightScheme::TypeI).unwrap()
}

pub fn tight() -> SolverConfig {
    SolverConfig {
        tol_kkt: 1e-10,
        tol_obj: 1e-15,
        max_iter: 200_000,
        ..SolverConfig::default()
    }
}

/// Independent KKT check: recomputes the score from scratch.
pub fn independent_kkt(data: &Dataset, r: &FitResult) -> f64 {
    let (n, p) = (data.n(), data.p());
    let x = data.x();
    let mut worst = 0.0_f64;
    for j in 0..p {
        let mut score = 0.0;
        for i in 0..n {
            let eta: f64 = (0..p).map(|k| x[[i, k]] * r.coef.beta[k]).sum::<f64>() + r.coef.intercept.unwrap_or(0.0);
            score += x[[i, j]] * (data.y()[i] - sigmoid(eta));
        }
        score /= n as f64;
        let t = r.lambda * r.weights.w[j];
        let b = r.coef.beta[j];
        let v = if b != 0.0 { (score - t * b.signum()).abs() } else { (score.abs() - t).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Every converged fit must carry a valid certificate, checked both with the
/// library and with the independent recomputation.
pub fn assert_certified(data: &Dataset, r: &FitResult, tol: f64) {
    assert!(r.converged, "fit did not converge: {r:?}");
    let lib = kkt_residuals(data, r).unwrap().fold(0.0_f64, |a, &b| a.max(b));
    assert!(lib <= tol, "library KKT residual {lib:e} > {tol:e}");
    let ind = independent_kkt(data, r);
    assert!(ind <= tol * 1.0001 + 1e-13, "independent KKT residual {ind:e} > {tol:e}");
}

/// Plain log-loss by direct summation, no stabilization tricks.
pub fn naive_loss(x: &Array2<f64>, y: &Array1<f64>, beta: &[f64]) -> f64 {
    let n = x.nrows();
    let mut s = 0.0;
    for i in 0..n {
        let eta: f64 = (0..beta.len()).map(|j| x[[i, j]] * beta[j]).sum();
        s += (1.0 + eta.exp()).ln() - y[i] * eta;
    }
    s / n as f64
}
