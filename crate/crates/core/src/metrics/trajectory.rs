use std::collections::BTreeMap;

use serde::Serialize;

use super::MatchResult;
use crate::error::{Error, Result};
use crate::grid::{AnnotatedFrame, Point2};

/// One frame of a matched sequence.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryFrame<'a> {
    pub detections: &'a [Point2],
    pub gt: &'a AnnotatedFrame,
    pub matches: &'a MatchResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryErrors {
    pub ed_mean: f64,
    pub ed_std: f64,
    pub edd_mean: f64,
    pub edd_std: f64,
    pub miss_rate: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Error distance (ED) of every matched pair, error-difference distance
/// (EDD) between consecutive frames of the same track, and the fraction of
/// ground-truth points left unmatched. Standard deviations are population
/// values; statistics over no samples are 0.
pub fn trajectory_errors(frames: &[TrajectoryFrame]) -> Result<TrajectoryErrors> {
    let mut ed = Vec::new();
    let mut edd = Vec::new();
    let mut missed = 0usize;
    let mut total_gt = 0usize;
    let mut prev: BTreeMap<u64, Point2> = BTreeMap::new();
    for f in frames {
        let tracks =
            f.gt.track_ids
                .as_ref()
                .ok_or_else(|| Error::validation(format!("frame {} has no track ids", f.gt.id)))?;
        let mut current = BTreeMap::new();
        for &(d, g, _) in &f.matches.pairs {
            let (det, truth) = match (f.detections.get(d), f.gt.points.get(g)) {
                (Some(det), Some(truth)) => (*det, *truth),
                _ => {
                    return Err(Error::validation(format!(
                        "frame {}: match ({d}, {g}) out of range",
                        f.gt.id
                    )))
                }
            };
            let e = det - truth;
            ed.push(e.x.hypot(e.y));
            current.insert(tracks[g], e);
        }
        for (track, e) in &current {
            if let Some(p) = prev.get(track) {
                edd.push((e.x - p.x).hypot(e.y - p.y));
            }
        }
        missed += f.matches.unmatched_gt.len();
        total_gt += f.gt.points.len();
        prev = current;
    }
    let (ed_mean, ed_std) = mean_std(&ed);
    let (edd_mean, edd_std) = mean_std(&edd);
    Ok(TrajectoryErrors {
        ed_mean,
        ed_std,
        edd_mean,
        edd_std,
        miss_rate: if total_gt == 0 {
            0.0
        } else {
            missed as f64 / total_gt as f64
        },
    })
}

/// Fraction of frames whose tracking error is within each threshold.
pub fn tracking_precision_curve(errors: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::validation(
            "precision curve needs at least one frame",
        ));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n))
        .collect())
}
