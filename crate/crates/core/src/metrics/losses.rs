use serde::{Deserialize, Serialize};

use super::check_same_shape;
use crate::error::{Error, Result};
use crate::grid::DensityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 1.0,
        }
    }
}

impl LossConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
            return Err(Error::validation(format!(
                "loss weights must be >= 0, got {lambda1}, {lambda2}"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

/// Probability vector over count classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CountClassDistribution {
    probs: Vec<f64>,
}

impl CountClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::validation(
                "class probabilities must be finite and >= 0",
            ));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "class probabilities sum to {s}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(classes: usize, class: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::validation(format!("class {class} out of {classes}")));
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::validation("need at least one class"));
        }
        Ok(Self {
            probs: vec![1.0 / classes as f64; classes],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Squared density error.
pub fn loss_density(d: f64, dhat: f64) -> f64 {
    (d - dhat) * (d - dhat)
}

/// Cross entropy of the predicted class distribution against the target.
pub fn loss_aux(p: &CountClassDistribution, phat: &CountClassDistribution) -> Result<f64> {
    if p.probs.len() != phat.probs.len() {
        return Err(Error::validation(format!(
            "class counts differ: {} vs {}",
            p.probs.len(),
            phat.probs.len()
        )));
    }
    let mut loss = 0.0;
    for (i, (&t, &q)) in p.probs.iter().zip(&phat.probs).enumerate() {
        if t > 0.0 {
            if q <= 0.0 {
                return Err(Error::Overflow(format!(
                    "predicted probability of supported class {i} is zero"
                )));
            }
            loss -= t * q.ln();
        }
    }
    Ok(loss)
}

pub fn loss_combined(
    d: f64,
    dhat: f64,
    p: &CountClassDistribution,
    phat: &CountClassDistribution,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(cfg.lambda1 * loss_density(d, dhat) + cfg.lambda2 * loss_aux(p, phat)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelCountLoss {
    pub pixel: f64,
    pub count: f64,
}

/// Pixel-wise squared error and squared error of the totals.
pub fn loss_pixel_count(pred: &DensityMap, gt: &DensityMap) -> Result<PixelCountLoss> {
    check_same_shape(pred, gt)?;
    let pixel = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dc = gt.sum() - pred.sum();
    Ok(PixelCountLoss {
        pixel,
        count: dc * dc,
    })
}
