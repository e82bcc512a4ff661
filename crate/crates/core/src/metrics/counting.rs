use serde::Serialize;

use super::check_same_shape;
use crate::error::{Error, Result};
use crate::grid::{DensityMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountErrors {
    pub mae: f64,
    /// Mean of squared errors (not its root).
    pub mse_mean_sq: f64,
}

pub fn count_errors(pred: &[f64], gt: &[f64]) -> Result<CountErrors> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::validation(format!(
            "need equal nonempty count lists, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        abs += (p - g).abs();
        sq += (p - g) * (p - g);
    }
    Ok(CountErrors {
        mae: abs / n,
        mse_mean_sq: sq / n,
    })
}

/// Boundaries of `2^level` near-equal parts of `len`: part `k` spans
/// `floor(k*len/2^level) .. floor((k+1)*len/2^level)`. Each level refines
/// the previous one.
pub fn game_bounds(len: usize, level: u32) -> Vec<usize> {
    let parts = 1usize << level;
    (0..=parts).map(|k| k * len / parts).collect()
}

/// Grid absolute count error of one frame: the sum over `4^level` regions of
/// the absolute difference of region totals.
pub fn game(pred: &DensityMap, gt: &DensityMap, level: u32) -> Result<f64> {
    check_same_shape(pred, gt)?;
    if level > 30 {
        return Err(Error::validation(format!("GAME level {level} too large")));
    }
    let (w, h) = (pred.width(), pred.height());
    let xs = game_bounds(w, level);
    let ys = game_bounds(h, level);
    let mut total = 0.0;
    for rs in ys.windows(2) {
        for cs in xs.windows(2) {
            let mut diff = 0.0;
            for r in rs[0]..rs[1] {
                for c in cs[0]..cs[1] {
                    diff += pred.at(r, c) - gt.at(r, c);
                }
            }
            total += diff.abs();
        }
    }
    Ok(total)
}

/// Per-frame GAME averaged over a batch.
pub fn game_batch(pairs: &[(DensityMap, DensityMap)], level: u32) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("GAME needs at least one frame"));
    }
    let mut sum = 0.0;
    for (p, g) in pairs {
        sum += game(p, g, level)?;
    }
    Ok(sum / pairs.len() as f64)
}
