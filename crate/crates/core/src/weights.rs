//! Data-dependent penalty weights.
//!
//! Types I and II come from a bounded-difference concentration argument: the
//! event `|score_j(beta*)| <= lambda w_j` fails with probability at most
//! `2 exp(-n (lambda w_j)^2 / (2 max_k |X_kj|^2))`, and choosing
//! `lambda w_j = max_k |X_kj| sqrt((2/n)(r log p + log 2))` pins that bound at
//! `p^-r`. Type II swaps the column maximum for the column RMS. Type III is the
//! reciprocal column variance and Type IV the adaptive-Lasso reciprocal of a
//! pilot fit.
//!
//! Raw weights carry proportionality constant 1. Estimation always goes
//! through [`normalize`], which rescales them to sum to `p`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Coefficients, Dataset};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeightScheme {
    Uniform,
    TypeI,
    TypeII,
    TypeIII,
    TypeIV,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 5] = [
        WeightScheme::Uniform,
        WeightScheme::TypeI,
        WeightScheme::TypeII,
        WeightScheme::TypeIII,
        WeightScheme::TypeIV,
    ];

    /// Label used in reports: the uniform scheme is the ordinary Lasso.
    pub fn label(self) -> &'static str {
        match self {
            WeightScheme::Uniform => "Lasso",
            WeightScheme::TypeI => "TypeI",
            WeightScheme::TypeII => "TypeII",
            WeightScheme::TypeIII => "TypeIII",
            WeightScheme::TypeIV => "TypeIV",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "lasso" => Ok(WeightScheme::Uniform),
            "type1" | "typei" | "i" => Ok(WeightScheme::TypeI),
            "type2" | "typeii" | "ii" => Ok(WeightScheme::TypeII),
            "type3" | "typeiii" | "iii" => Ok(WeightScheme::TypeIII),
            "type4" | "typeiv" | "iv" => Ok(WeightScheme::TypeIV),
            other => Err(invalid(format!("unknown weight scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Array1<f64>,
    pub scheme: WeightScheme,
    pub normalized: bool,
}

impl WeightVector {
    pub fn uniform(p: usize) -> Self {
        Self {
            w: Array1::ones(p),
            scheme: WeightScheme::Uniform,
            normalized: true,
        }
    }

    pub fn from_raw(w: Array1<f64>, scheme: WeightScheme) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("weight vector is empty"));
        }
        if let Some(j) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("weight {j} is {} (must be positive and finite)", w[j])));
        }
        Ok(Self { w, scheme, normalized: false })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.w.fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn max(&self) -> f64 {
        self.w.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Same direction, every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w: &self.w * c,
            scheme: self.scheme,
            normalized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// Concentration exponent; the tail bound is pinned at `p^-r`.
    pub r: f64,
    /// Fixed pilot penalty for Type IV. `None` selects it by cross-validation.
    pub lasso_pilot_lambda: Option<f64>,
    pub zero_floor: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            lasso_pilot_lambda: None,
            zero_floor: 1e-8,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(invalid(format!("r must be positive, got {}", self.r)));
        }
        if !(self.zero_floor > 0.0) {
            return Err(invalid(format!("zero_floor must be positive, got {}", self.zero_floor)));
        }
        if let Some(l) = self.lasso_pilot_lambda {
            if !(l >= 0.0) {
                return Err(invalid(format!("pilot lambda must be non-negative, got {l}")));
            }
        }
        Ok(())
    }
}

/// `sqrt((2/n)(r log p + log 2))`, the factor shared by Types I and II.
pub fn concentration_factor(n: usize, p: usize, r: f64) -> f64 {
    ((2.0 / n as f64) * (r * (p as f64).ln() + std::f64::consts::LN_2)).sqrt()
}

pub fn type1_weights(data: &Dataset, cfg: &WeightConfig) -> Result<WeightVector> {
    cfg.validate()?;
    let factor = concentration_factor(data.n(), data.p(), cfg.r);
    let w = data.x().map_axis(Axis(0), |col| {
        let m = col.fold(0.0_f64, |a, &v| a.max(v.abs()));
        floor_small(m * factor, cfg.zero_floor, "TypeI")
    });
    WeightVector::from_raw(w, WeightScheme::TypeI)
}

pub fn type2_weights(data: &Dataset, cfg: &WeightConfig) -> Result<WeightVector> {
    cfg.validate()?;
    let n = data.n() as f64;
    let factor = concentration_factor(data.n(), data.p(), cfg.r);
    let w = data.x().map_axis(Axis(0), |col| {
        let rms = (col.fold(0.0, |a, &v| a + v * v) / n).sqrt();
        floor_small(rms * factor, cfg.zero_floor, "TypeII")
    });
    WeightVector::from_raw(w, WeightScheme::TypeII)
}

/// Reciprocal of the (biased, `1/n`) column variance. Constant columns get
/// the cap `1 / zero_floor`.
pub fn type3_weights(data: &Dataset, cfg: &WeightConfig) -> Result<WeightVector> {
    cfg.validate()?;
    let n = data.n() as f64;
    let w = data.x().map_axis(Axis(0), |col| {
        let mean = col.sum() / n;
        let var = col.fold(0.0, |a, &v| a + (v - mean) * (v - mean)) / n;
        if var <= cfg.zero_floor {
            log::warn!("TypeIII: column variance {var:e} at or below floor; weight capped at 1/zero_floor");
            1.0 / cfg.zero_floor
        } else {
            1.0 / var
        }
    });
    WeightVector::from_raw(w, WeightScheme::TypeIII)
}

/// Adaptive-Lasso weights `1 / |pilot_j|`, with zero pilot entries lifted to
/// `zero_floor` first.
pub fn type4_weights(data: &Dataset, cfg: &WeightConfig, pilot: &Coefficients) -> Result<WeightVector> {
    cfg.validate()?;
    pilot.check_against(data.p())?;
    let w = pilot.beta.mapv(|b| 1.0 / b.abs().max(cfg.zero_floor));
    WeightVector::from_raw(w, WeightScheme::TypeIV)
}

/// `p w_j / sum_k w_k`.
pub fn normalize(w: &WeightVector) -> WeightVector {
    let p = w.len() as f64;
    let total = w.w.sum();
    WeightVector {
        w: w.w.mapv(|v| p * v / total),
        scheme: w.scheme,
        normalized: true,
    }
}

/// Tail bound `2 exp(-n lambda_w^2 / (2 col_max^2))`, clipped to 1.
pub fn mcdiarmid_tail_bound(n: usize, lambda_w: f64, col_max: f64) -> f64 {
    let n = n as f64;
    (2.0 * (-n * lambda_w * lambda_w / (2.0 * col_max * col_max)).exp()).min(1.0)
}

/// Raw weights for any scheme. Type IV needs a pilot fit.
pub fn compute_weights(
    scheme: WeightScheme,
    data: &Dataset,
    cfg: &WeightConfig,
    pilot: Option<&Coefficients>,
) -> Result<WeightVector> {
    match scheme {
        WeightScheme::Uniform => Ok(WeightVector::uniform(data.p())),
        WeightScheme::TypeI => type1_weights(data, cfg),
        WeightScheme::TypeII => type2_weights(data, cfg),
        WeightScheme::TypeIII => type3_weights(data, cfg),
        WeightScheme::TypeIV => {
            let pilot = pilot.ok_or_else(|| invalid("TypeIV weights need a pilot Lasso fit"))?;
            type4_weights(data, cfg, pilot)
        }
    }
}

fn floor_small(v: f64, floor: f64, scheme: &str) -> f64 {
    if v < floor {
        log::warn!("{scheme}: degenerate column, weight floored at {floor:e}");
        floor
    } else {
        v
    }
}
