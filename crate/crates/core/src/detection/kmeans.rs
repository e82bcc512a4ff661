use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    allocate_clusters, keep_in_roi, target_count, threshold_segments, DetectionSet, Method,
};
use crate::error::{Error, Result};
use crate::grid::{DensityMap, Point2, Raster};

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub tau: f64,
    pub seed: u64,
}

/// Farthest-point seeding: a seeded random first pick, then repeatedly the
/// sample farthest from all picks so far (lowest index on ties).
pub(crate) fn farthest_point_init(samples: &[Point2], k: usize, seed: u64) -> Vec<usize> {
    if k == 0 || samples.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..samples.len());
    let mut picks = vec![first];
    let mut nearest: Vec<f64> = samples
        .iter()
        .map(|s| s.distance(&samples[first]))
        .collect();
    while picks.len() < k {
        let mut best = 0;
        for i in 1..samples.len() {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        picks.push(best);
        for (d, s) in nearest.iter_mut().zip(samples) {
            *d = d.min(s.distance(&samples[best]));
        }
    }
    picks
}

/// Lloyd's algorithm from farthest-point seeds, run to an assignment
/// fixpoint or [`KMEANS_MAX_ITER`] iterations.
pub fn kmeans(samples: &[Point2], k: usize, seed: u64) -> Result<Vec<Point2>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if samples.len() < k {
        return Err(Error::validation(format!(
            "{k} clusters for {} samples",
            samples.len()
        )));
    }
    let mut centers: Vec<Point2> = farthest_point_init(samples, k, seed)
        .into_iter()
        .map(|i| samples[i])
        .collect();
    let mut assign = vec![usize::MAX; samples.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, s) in assign.iter_mut().zip(samples) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = (s.x - c.x).powi(2) + (s.y - c.y).powi(2);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (a, s) in assign.iter().zip(samples) {
            sums[*a].0 += s.x;
            sums[*a].1 += s.y;
            sums[*a].2 += 1;
        }
        for (c, (sx, sy, n)) in centers.iter_mut().zip(sums) {
            if n > 0 {
                *c = Point2::new(sx / n as f64, sy / n as f64);
            }
        }
    }
    Ok(centers)
}

/// K-means on the (unweighted) cell centers of each thresholded segment.
pub fn detect_kmeans(map: &DensityMap, opts: &KMeansOptions) -> Result<DetectionSet> {
    let (source_count, target) = target_count(map);
    let target = target.max(0) as usize;
    let segments = threshold_segments(map, opts.tau);
    if segments.is_empty() {
        if target > 0 {
            return Err(Error::Degenerate(format!(
                "no density above tau = {} but the map counts {target} objects",
                opts.tau
            )));
        }
        return Ok(DetectionSet::new(Method::Kmeans, Vec::new(), source_count));
    }
    let masses: Vec<f64> = segments.iter().map(|s| s.mass).collect();
    let caps: Vec<usize> = segments.iter().map(|s| s.cells.len()).collect();
    let ks = allocate_clusters(&masses, &caps, target);
    let roi = map.roi_or_full();
    let mut points = Vec::with_capacity(target);
    for (idx, (seg, &k)) in segments.iter().zip(&ks).enumerate() {
        if k == 0 {
            continue;
        }
        let samples = seg.centers(map.width());
        for c in kmeans(&samples, k, opts.seed.wrapping_add(idx as u64))? {
            points.push(keep_in_roi(c, &roi, &samples));
        }
    }
    Ok(DetectionSet::new(Method::Kmeans, points, source_count))
}
