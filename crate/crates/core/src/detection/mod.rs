//! Object detection from density maps.
//!
//! All detectors clamp negative densities to zero before use and take the
//! target object count from the (raw) density sum over the map's ROI.

mod gmm;
mod intprog;
mod kmeans;
mod local_max;
mod segments;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gmm::{
    detect_gmm, fit_gmm, fit_gmm_from, initial_params, Cov2, GmmDetectOptions, GmmFit, GmmOptions,
    GmmParams, DEFAULT_QUANTIZATION,
};
pub use intprog::{
    detect_intprog, intprog_objective, padded_window_counts, solve_intprog, window_counts,
    GridCounts, IntProgConfig, IntProgProblem, IntProgSolution, Solver, EXACT_MAX_CANDIDATES,
    EXACT_MAX_OBJECTS,
};
pub use kmeans::{detect_kmeans, kmeans, KMeansOptions};
pub use local_max::{detect_local_max, LocalMaxOptions};
pub use segments::{threshold_segments, Segment};

use crate::error::{Error, Result};
use crate::grid::{DensityMap, Point2, RoiMask};
use crate::roi::map_count;
use crate::synthesis::gaussian_peak;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LocalMax,
    Kmeans,
    Gmm,
    GmmWeighted,
    Intprog,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::LocalMax => "local-max",
            Method::Kmeans => "kmeans",
            Method::Gmm => "gmm",
            Method::GmmWeighted => "gmm-weighted",
            Method::Intprog => "intprog",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "local-max" => Method::LocalMax,
            "kmeans" => Method::Kmeans,
            "gmm" => Method::Gmm,
            "gmm-weighted" => Method::GmmWeighted,
            "intprog" => Method::Intprog,
            _ => return Err(Error::validation(format!("unknown detection method {s:?}"))),
        })
    }
}

/// Detected object locations for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    #[serde(rename = "id")]
    pub frame_id: u64,
    pub points: Vec<Point2>,
    #[serde(skip)]
    pub method: Option<Method>,
    /// Density sum the object count was derived from.
    pub source_count: f64,
}

impl DetectionSet {
    pub fn new(method: Method, points: Vec<Point2>, source_count: f64) -> Self {
        Self {
            frame_id: 0,
            points,
            method: Some(method),
            source_count,
        }
    }

    pub fn with_frame(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default segmentation threshold for maps synthesized with `sigma`:
/// a thousandth of a lone kernel's peak.
pub fn default_tau(sigma: f64) -> f64 {
    1e-3 * gaussian_peak(sigma)
}

/// Object count implied by the map: the rounded density sum over its ROI.
pub(crate) fn target_count(map: &DensityMap) -> (f64, i64) {
    let total = map_count(map);
    (total, total.round() as i64)
}

/// Splits `target` clusters across segments. Each segment starts with
/// `round(mass)` (capped by its number of cells); the shortfall or excess is
/// then settled one unit at a time on the segment whose mass is furthest
/// from its allocation, lowest index first on ties.
pub(crate) fn allocate_clusters(masses: &[f64], capacities: &[usize], target: usize) -> Vec<usize> {
    let mut k: Vec<usize> = masses
        .iter()
        .zip(capacities)
        .map(|(m, &cap)| (m.round().max(0.0) as usize).min(cap))
        .collect();
    let mut total: usize = k.iter().sum();
    while total < target {
        let pick = (0..k.len())
            .filter(|&s| k[s] < capacities[s])
            .fold(None::<usize>, |best, s| match best {
                Some(b) if masses[b] - k[b] as f64 >= masses[s] - k[s] as f64 => Some(b),
                _ => Some(s),
            });
        match pick {
            Some(s) => {
                k[s] += 1;
                total += 1;
            }
            None => break,
        }
    }
    while total > target {
        let pick = (0..k.len())
            .filter(|&s| k[s] > 0)
            .fold(None::<usize>, |best, s| match best {
                Some(b) if k[b] as f64 - masses[b] >= k[s] as f64 - masses[s] => Some(b),
                _ => Some(s),
            });
        match pick {
            Some(s) => {
                k[s] -= 1;
                total -= 1;
            }
            None => break,
        }
    }
    k
}

/// Moves a point that fell outside the ROI onto the nearest of `fallback`
/// cell centers.
pub(crate) fn keep_in_roi(p: Point2, roi: &RoiMask, fallback: &[Point2]) -> Point2 {
    if roi.contains_point(&p) || fallback.is_empty() {
        return p;
    }
    *fallback
        .iter()
        .min_by(|a, b| a.distance(&p).total_cmp(&b.distance(&p)))
        .unwrap()
}

#[derive(Serialize, Deserialize)]
struct DetectionFile {
    width: usize,
    height: usize,
    method: Method,
    frames: Vec<DetectionSet>,
}

/// Serializes detections in the annotation layout plus `method` and
/// per-frame `source_count`.
pub fn detections_to_json(
    width: usize,
    height: usize,
    method: Method,
    sets: &[DetectionSet],
) -> Result<String> {
    let file = DetectionFile {
        width,
        height,
        method,
        frames: sets.to_vec(),
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parses a detection file; returns `(width, height, sets)` sorted by frame.
pub fn detections_from_json(text: &str) -> Result<(usize, usize, Vec<DetectionSet>)> {
    let file: DetectionFile = serde_json::from_str(text)?;
    let mut sets = file.frames;
    for s in &mut sets {
        s.method = Some(file.method);
        if let Some(p) = s
            .points
            .iter()
            .find(|p| !p.in_frame(file.width, file.height))
        {
            return Err(Error::validation(format!(
                "frame {}: detection ({}, {}) outside the frame",
                s.frame_id, p.x, p.y
            )));
        }
    }
    sets.sort_by_key(|s| s.frame_id);
    if sets.windows(2).any(|w| w[0].frame_id == w[1].frame_id) {
        return Err(Error::validation("duplicate frame id in detections"));
    }
    Ok((file.width, file.height, sets))
}

pub fn write_detections(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    method: Method,
    sets: &[DetectionSet],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, detections_to_json(width, height, method, sets)?)
        .map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<DetectionSet>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    detections_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_rounds_then_reconciles() {
        assert_eq!(allocate_clusters(&[1.2, 0.9], &[10, 10], 2), vec![1, 1]);
        // 0.6 + 0.6 + 0.6 -> 3 by rounding, target 2: drop the lowest index of the tied
        assert_eq!(
            allocate_clusters(&[0.6, 0.6, 0.6], &[5, 5, 5], 2),
            vec![0, 1, 1]
        );
        // 0.4 + 0.4 + 0.45 -> 0 by rounding, target 1: add where the deficit is largest
        assert_eq!(
            allocate_clusters(&[0.4, 0.4, 0.45], &[5, 5, 5], 1),
            vec![0, 0, 1]
        );
        // capacity limits
        assert_eq!(allocate_clusters(&[3.0], &[2], 3), vec![2]);
        assert_eq!(allocate_clusters(&[], &[], 3), Vec::<usize>::new());
    }

    #[test]
    fn json_round_trip() {
        let sets = vec![
            DetectionSet::new(Method::Intprog, vec![Point2::new(1.5, 2.5)], 1.02).with_frame(4),
            DetectionSet::new(Method::Intprog, vec![], 0.1).with_frame(1),
        ];
        let text = detections_to_json(8, 8, Method::Intprog, &sets).unwrap();
        assert!(text.contains("\"method\":\"intprog\""));
        assert!(text.contains("\"source_count\":1.02"));
        let (w, h, back) = detections_from_json(&text).unwrap();
        assert_eq!((w, h), (8, 8));
        assert_eq!(back[0].frame_id, 1);
        assert_eq!(back[1].points, sets[0].points);
        assert_eq!(back[1].method, Some(Method::Intprog));
    }

    #[test]
    fn method_names_parse() {
        for m in [
            Method::LocalMax,
            Method::Kmeans,
            Method::Gmm,
            Method::GmmWeighted,
            Method::Intprog,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nms".parse::<Method>().is_err());
    }
}
