use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Point2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// `(detection index, ground-truth index, distance)`, by detection index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub matching_distance: f64,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }

    /// Ground-truth index matched to each detection.
    pub fn gt_for_detection(&self, det: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == det).map(|p| p.1)
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major);
/// returns the column of each row.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // potentials formulation, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Pairs detections with ground truth one-to-one within `matching_distance`:
/// the largest possible number of pairs, and among those the smallest total
/// distance.
pub fn match_detections(
    dets: &[Point2],
    gt: &[Point2],
    matching_distance: f64,
) -> Result<MatchResult> {
    if !(matching_distance > 0.0 && matching_distance.is_finite()) {
        return Err(Error::validation(format!(
            "matching distance must be positive, got {matching_distance}"
        )));
    }
    let n = dets.len().max(gt.len());
    let mut allowed_total = 0.0;
    let mut dist = vec![f64::NAN; dets.len() * gt.len()];
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let e = d.distance(g);
            if e <= matching_distance {
                dist[i * gt.len() + j] = e;
                allowed_total += e;
            }
        }
    }
    // any unpaired slot costs more than every allowed edge together
    let big = allowed_total + 1.0;
    let mut cost = vec![big; n * n];
    for i in 0..dets.len() {
        for j in 0..gt.len() {
            let e = dist[i * gt.len() + j];
            if !e.is_nan() {
                cost[i * n + j] = e;
            }
        }
    }
    let assign = if n == 0 {
        Vec::new()
    } else {
        hungarian(&cost, n)
    };
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut unmatched_detections = Vec::new();
    for i in 0..dets.len() {
        let j = assign[i];
        if j < gt.len() && !dist[i * gt.len() + j].is_nan() {
            pairs.push((i, j, dist[i * gt.len() + j]));
            gt_used[j] = true;
        } else {
            unmatched_detections.push(i);
        }
    }
    let unmatched_gt = (0..gt.len()).filter(|&j| !gt_used[j]).collect();
    Ok(MatchResult {
        pairs,
        unmatched_detections,
        unmatched_gt,
        matching_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1, with every 0/0 taken as 0.
pub fn prf(m: &MatchResult, n_dets: usize, n_gt: usize) -> Prf {
    let tp = m.true_positives() as f64;
    let precision = if n_dets == 0 { 0.0 } else { tp / n_dets as f64 };
    let recall = if n_gt == 0 { 0.0 } else { tp / n_gt as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best (pairs, total distance) over all permutations of the padded
    /// square problem.
    fn brute_force(dets: &[Point2], gt: &[Point2], md: f64) -> (usize, f64) {
        fn rec(
            i: usize,
            n: usize,
            used: &mut [bool],
            dets: &[Point2],
            gt: &[Point2],
            md: f64,
            acc: (usize, f64),
            best: &mut (usize, f64),
        ) {
            if i == n {
                if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                    *best = acc;
                }
                return;
            }
            for j in 0..n {
                if used[j] {
                    continue;
                }
                used[j] = true;
                let mut next = acc;
                if i < dets.len() && j < gt.len() {
                    let d = dets[i].distance(&gt[j]);
                    if d <= md {
                        next = (acc.0 + 1, acc.1 + d);
                    }
                }
                rec(i + 1, n, used, dets, gt, md, next, best);
                used[j] = false;
            }
        }
        let n = dets.len().max(gt.len());
        let mut best = (0, f64::INFINITY);
        rec(0, n, &mut vec![false; n], dets, gt, md, (0, 0.0), &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    #[test]
    fn identical_sets() {
        let pts = vec![Point2::new(1.0, 1.0), Point2::new(5.0, 2.0)];
        let m = match_detections(&pts, &pts, 1.0).unwrap();
        assert_eq!(m.pairs, vec![(0, 0, 0.0), (1, 1, 0.0)]);
        assert_eq!(
            prf(&m, 2, 2),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn one_detection_two_truths() {
        let m = match_detections(
            &[Point2::new(2.0, 0.0)],
            &[Point2::new(1.0, 0.0), Point2::new(3.0, 0.0)],
            1.5,
        )
        .unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.unmatched_gt.len(), 1);
        let p = prf(&m, 1, 2);
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_and_zero_conventions() {
        let m = match_detections(&[], &[Point2::new(1.0, 1.0)], 4.0).unwrap();
        assert_eq!(
            prf(&m, 0, 1),
            Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
        let m = match_detections(&[], &[], 4.0).unwrap();
        assert!(m.pairs.is_empty());
        assert!(match_detections(&[], &[], 0.0).is_err());
    }

    #[test]
    fn cardinality_beats_distance() {
        // greedy nearest pairing of d0-g0 would strand g1
        let dets = [Point2::new(0.0, 0.0), Point2::new(-1.9, 0.0)];
        let gt = [Point2::new(-1.0, 0.0), Point2::new(1.9, 0.0)];
        let m = match_detections(&dets, &gt, 2.0).unwrap();
        assert_eq!(m.pairs.len(), 2);
    }

    #[test]
    fn brute_force_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let nd = rng.random_range(0..=6);
            let ng = rng.random_range(0..=6);
            let dets: Vec<Point2> = (0..nd)
                .map(|_| Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
                .collect();
            let gt: Vec<Point2> = (0..ng)
                .map(|_| Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
                .collect();
            let md = rng.random_range(0.5..5.0);
            let m = match_detections(&dets, &gt, md).unwrap();
            let (card, dist) = brute_force(&dets, &gt, md);
            assert_eq!(m.pairs.len(), card);
            assert!((m.total_distance() - dist).abs() < 1e-9);
            assert!(m.pairs.iter().all(|p| p.2 <= md));
            assert_eq!(m.pairs.len() + m.unmatched_detections.len(), nd);
            assert_eq!(m.pairs.len() + m.unmatched_gt.len(), ng);
        }
    }
}
