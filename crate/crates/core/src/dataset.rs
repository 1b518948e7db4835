//! Domain types shared by every module: the design/response pair, coefficient
//! vectors and support sets.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Design matrix `x` (n × p), binary responses `y` and optional
/// per-observation likelihood weights.
///
/// Responses are stored as `f64` holding exactly `0.0` or `1.0` so the loss
/// kernels can use them directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    obs_weights: Option<Array1<f64>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::with_obs_weights(x, y, None)
    }

    /// Observation weights `R_i` enter the loss as `sum_i R_i * loss_i`, so
    /// uniform weights `1/n` reproduce the unweighted `(1/n) sum_i loss_i`.
    pub fn with_obs_weights(
        x: Array2<f64>,
        y: Array1<f64>,
        obs_weights: Option<Array1<f64>>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(invalid(format!("design must be non-empty, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: n,
                got: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(invalid(format!("response {i} is {} (expected 0 or 1)", y[i])));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design contains non-finite entries"));
        }
        if let Some(r) = &obs_weights {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "observation weights",
                    expected: n,
                    got: r.len(),
                });
            }
            if r.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(invalid("observation weights must be finite and non-negative"));
            }
            if !r.iter().any(|&v| v > 0.0) {
                return Err(invalid("at least one observation weight must be positive"));
            }
        }
        Ok(Self { x, y, obs_weights })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn obs_weights(&self) -> Option<&Array1<f64>> {
        self.obs_weights.as_ref()
    }

    /// Per-row multiplier `c_i` of the averaged loss: `R_i` when observation
    /// weights are present, `1/n` otherwise.
    pub fn row_factors(&self) -> Array1<f64> {
        match &self.obs_weights {
            Some(r) => r.clone(),
            None => Array1::from_elem(self.n(), 1.0 / self.n() as f64),
        }
    }

    /// Rows `idx` in the given order. Observation weights are rescaled so the
    /// subset keeps the same total mass as an unweighted average would.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select(Axis(0), idx);
        let y = self.y.select(Axis(0), idx);
        let obs_weights = self.obs_weights.as_ref().map(|r| {
            let sub = r.select(Axis(0), idx);
            let total = sub.sum();
            if total > 0.0 {
                sub / total
            } else {
                Array1::from_elem(idx.len(), 1.0 / idx.len() as f64)
            }
        });
        Dataset { x, y, obs_weights }
    }

    /// Same responses and observation weights with a different design.
    pub fn with_design(&self, x: Array2<f64>) -> Result<Dataset> {
        Self::with_obs_weights(x, self.y.clone(), self.obs_weights.clone())
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.y.iter().filter(|&&v| v == 1.0).count();
        (self.n() - ones, ones)
    }
}

/// Regression coefficients with an optional unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta: Array1<f64>,
    #[serde(default)]
    pub intercept: Option<f64>,
}

impl Coefficients {
    pub fn new(beta: Array1<f64>) -> Self {
        Self { beta, intercept: None }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(Array1::zeros(p))
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn check_against(&self, p: usize) -> Result<()> {
        if self.beta.len() != p {
            return Err(Error::DimensionMismatch {
                what: "coefficient length",
                expected: p,
                got: self.beta.len(),
            });
        }
        Ok(())
    }

    /// Linear predictor `X beta (+ intercept)`.
    pub fn linear_predictor(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_against(x.ncols())?;
        let mut eta = x.dot(&self.beta);
        if let Some(b0) = self.intercept {
            eta += b0;
        }
        Ok(eta)
    }

    pub fn l1_distance(&self, other: &Coefficients) -> Result<f64> {
        other.check_against(self.p())?;
        Ok(self
            .beta
            .iter()
            .zip(other.beta.iter())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    pub fn support(&self, limit: f64) -> SupportSet {
        SupportSet::from_beta(self.beta.view(), limit)
    }
}

/// Sorted 0-based column indices whose coefficient magnitude reaches a limit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SupportSet {
    pub indices: Vec<usize>,
}

impl SupportSet {
    /// With `limit == 0` the support is the set of exactly nonzero entries;
    /// otherwise it keeps `|beta_j| >= limit`.
    pub fn from_beta(beta: ArrayView1<f64>, limit: f64) -> Self {
        let indices = beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| if limit > 0.0 { b.abs() >= limit } else { b != 0.0 })
            .map(|(j, _)| j)
            .collect();
        Self { indices }
    }

    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.indices.iter().all(|&j| other.contains(j))
    }

    /// Indicator vector of length `p`.
    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut m = vec![false; p];
        for &j in &self.indices {
            if j < p {
                m[j] = true;
            }
        }
        m
    }
}
