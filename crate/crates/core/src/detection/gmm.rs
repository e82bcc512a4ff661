//! Gaussian mixture clustering of thresholded density support.
//!
//! Integer sample weights act as replication counts: EM runs on weighted
//! sufficient statistics, which is algebraically identical to EM on the
//! sample list with every location repeated `weight` times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    allocate_clusters, keep_in_roi, target_count, threshold_segments, DetectionSet, Method,
};
use crate::error::{Error, Result};
use crate::grid::{DensityMap, Point2, Raster};

/// Default density-to-count factor for weighted samples.
pub const DEFAULT_QUANTIZATION: u64 = 10_000;

/// Symmetric 2x2 covariance `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn isotropic(var: f64) -> Self {
        Self {
            xx: var,
            xy: 0.0,
            yy: var,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.xx + self.yy);
        let rad = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mid + rad, mid - rad)
    }

    /// Raises every eigenvalue to at least `floor`.
    pub fn floored(&self, floor: f64) -> Self {
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        // unit eigenvector of l1
        let (vx, vy) = if self.xy.abs() > 1e-300 {
            let (x, y) = (l1 - self.yy, self.xy);
            let n = x.hypot(y);
            (x / n, y / n)
        } else if self.xx >= self.yy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let (a, b) = (l1.max(floor), l2.max(floor));
        Self {
            xx: a * vx * vx + b * vy * vy,
            xy: (a - b) * vx * vy,
            yy: a * vy * vy + b * vx * vx,
        }
    }

    fn log_pdf(&self, mean: &Point2, p: &Point2) -> f64 {
        let det = self.det();
        let (dx, dy) = (p.x - mean.x, p.y - mean.y);
        let maha = (self.yy * dx * dx - 2.0 * self.xy * dx * dy + self.xx * dy * dy) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * maha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub means: Vec<Point2>,
    pub covariances: Vec<Cov2>,
    pub mixing: Vec<f64>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.means.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    /// Standard deviation of the isotropic initial covariances.
    pub init_std: f64,
    /// Lower bound on covariance eigenvalues, in squared cells.
    pub covariance_floor: f64,
    pub max_iter: usize,
    /// Stop once the log-likelihood gains less than this.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            init_std: 4.0,
            covariance_floor: 0.25,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Components whose responsibility mass drops below this keep their previous
/// mean and covariance.
const DEAD_COMPONENT: f64 = 1e-10;
const MIN_MIXING: f64 = 1e-12;

fn distinct_locations(samples: &[Point2]) -> usize {
    let mut keys: Vec<(u64, u64)> = samples
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn validate(samples: &[Point2], weights: &[u64], k: usize) -> Result<()> {
    if samples.len() != weights.len() {
        return Err(Error::validation(format!(
            "{} samples but {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if weights.contains(&0) {
        return Err(Error::validation("sample weights must be positive"));
    }
    if samples.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation("non-finite sample"));
    }
    let total: u64 = weights.iter().sum();
    if k == 0 || total < k as u64 {
        return Err(Error::validation(format!(
            "need 1 <= K <= total weight, got K = {k}, total {total}"
        )));
    }
    let distinct = distinct_locations(samples);
    if k > distinct {
        return Err(Error::validation(format!(
            "K = {k} exceeds the {distinct} distinct sample locations"
        )));
    }
    Ok(())
}

fn sq_dist(a: &Point2, b: &Point2) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

/// Distinct sample locations in `(y, x)` order with their summed weights.
fn pooled_locations(samples: &[Point2], weights: &[u64]) -> Vec<(Point2, u64)> {
    let mut pooled: Vec<(Point2, u64)> = samples
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    pooled.sort_by(|a, b| a.0.y.total_cmp(&b.0.y).then(a.0.x.total_cmp(&b.0.x)));
    pooled.dedup_by(|next, kept| {
        let same =
            next.0.x.to_bits() == kept.0.x.to_bits() && next.0.y.to_bits() == kept.0.y.to_bits();
        if same {
            kept.1 += next.1;
        }
        same
    });
    pooled
}

/// Density-weighted farthest-point means with isotropic `init_std^2`
/// covariances and uniform mixing.
///
/// The first mean is drawn from the seed with probability proportional to
/// weight; each further mean is the location maximizing
/// `weight * d^2`, `d` being the distance to the nearest mean so far. With
/// equal weights this is plain farthest-point seeding. Locations are pooled
/// first, so replicating a sample is the same as raising its weight.
pub fn initial_params(
    samples: &[Point2],
    weights: &[u64],
    k: usize,
    seed: u64,
    opts: &GmmOptions,
) -> GmmParams {
    let pooled = pooled_locations(samples, weights);
    let mut means = Vec::with_capacity(k);
    if k > 0 && !pooled.is_empty() {
        let total: u64 = pooled.iter().map(|p| p.1).sum();
        let mut draw = ChaCha8Rng::seed_from_u64(seed).random_range(0..total.max(1));
        let mut first = pooled.len() - 1;
        for (i, p) in pooled.iter().enumerate() {
            if draw < p.1 {
                first = i;
                break;
            }
            draw -= p.1;
        }
        means.push(pooled[first].0);
        let mut nearest: Vec<f64> = pooled
            .iter()
            .map(|p| sq_dist(&p.0, &pooled[first].0))
            .collect();
        while means.len() < k {
            let score = |i: usize| pooled[i].1 as f64 * nearest[i];
            let mut best = 0;
            for i in 1..pooled.len() {
                if score(i) > score(best) {
                    best = i;
                }
            }
            let m = pooled[best].0;
            means.push(m);
            for (d, p) in nearest.iter_mut().zip(&pooled) {
                *d = d.min(sq_dist(&p.0, &m));
            }
        }
    }
    let var = (opts.init_std * opts.init_std).max(opts.covariance_floor);
    GmmParams {
        covariances: vec![Cov2::isotropic(var); means.len()],
        mixing: vec![1.0 / means.len() as f64; means.len()],
        means,
    }
}

/// E-step: fills `resp` (row per sample) and returns the weighted
/// log-likelihood.
fn expectation(samples: &[Point2], weights: &[u64], params: &GmmParams, resp: &mut [f64]) -> f64 {
    let k = params.k();
    let log_mix: Vec<f64> = params.mixing.iter().map(|m| m.ln()).collect();
    let mut ll = 0.0;
    for (i, (p, &w)) in samples.iter().zip(weights).enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            row[j] = log_mix[j] + params.covariances[j].log_pdf(&params.means[j], p);
            max = max.max(row[j]);
        }
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            total += *r;
        }
        for r in row.iter_mut() {
            *r /= total;
        }
        ll += w as f64 * (max + total.ln());
    }
    ll
}

fn maximization(
    samples: &[Point2],
    weights: &[u64],
    resp: &[f64],
    prev: &GmmParams,
    floor: f64,
) -> GmmParams {
    let k = prev.k();
    let total_w: f64 = weights.iter().map(|&w| w as f64).sum();
    let mut mass = vec![0.0; k];
    let mut sx = vec![0.0; k];
    let mut sy = vec![0.0; k];
    for (i, (p, &w)) in samples.iter().zip(weights).enumerate() {
        for j in 0..k {
            let r = w as f64 * resp[i * k + j];
            mass[j] += r;
            sx[j] += r * p.x;
            sy[j] += r * p.y;
        }
    }
    let mut means = prev.means.clone();
    for j in 0..k {
        if mass[j] > DEAD_COMPONENT {
            means[j] = Point2::new(sx[j] / mass[j], sy[j] / mass[j]);
        }
    }
    let mut cxx = vec![0.0; k];
    let mut cxy = vec![0.0; k];
    let mut cyy = vec![0.0; k];
    for (i, (p, &w)) in samples.iter().zip(weights).enumerate() {
        for j in 0..k {
            let r = w as f64 * resp[i * k + j];
            let (dx, dy) = (p.x - means[j].x, p.y - means[j].y);
            cxx[j] += r * dx * dx;
            cxy[j] += r * dx * dy;
            cyy[j] += r * dy * dy;
        }
    }
    let mut covariances = prev.covariances.clone();
    for j in 0..k {
        if mass[j] > DEAD_COMPONENT {
            covariances[j] = Cov2 {
                xx: cxx[j] / mass[j],
                xy: cxy[j] / mass[j],
                yy: cyy[j] / mass[j],
            }
            .floored(floor);
        }
    }
    let mut mixing: Vec<f64> = mass.iter().map(|m| (m / total_w).max(MIN_MIXING)).collect();
    let s: f64 = mixing.iter().sum();
    for m in &mut mixing {
        *m /= s;
    }
    GmmParams {
        means,
        covariances,
        mixing,
    }
}

/// EM from explicit initial parameters.
pub fn fit_gmm_from(
    samples: &[Point2],
    weights: &[u64],
    init: GmmParams,
    opts: &GmmOptions,
) -> Result<GmmFit> {
    validate(samples, weights, init.k())?;
    let k = init.k();
    let mut resp = vec![0.0; samples.len() * k];
    let mut params = init;
    let mut ll = expectation(samples, weights, &params, &mut resp);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        params = maximization(samples, weights, &resp, &params, opts.covariance_floor);
        let next = expectation(samples, weights, &params, &mut resp);
        let gain = next - ll;
        ll = next;
        if gain < opts.tol {
            break;
        }
    }
    Ok(GmmFit {
        params,
        log_likelihood: ll,
        iterations,
    })
}

/// Fits a `k`-component mixture to weighted samples, deterministically for a
/// given seed.
pub fn fit_gmm(
    samples: &[Point2],
    weights: &[u64],
    k: usize,
    seed: u64,
    opts: &GmmOptions,
) -> Result<GmmFit> {
    validate(samples, weights, k)?;
    let init = initial_params(samples, weights, k, seed, opts);
    fit_gmm_from(samples, weights, init, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmDetectOptions {
    pub tau: f64,
    /// Weight each cell by its discretized density instead of uniformly.
    pub weighted: bool,
    /// Density-to-replication-count factor for the weighted variant.
    pub quantization: u64,
    pub seed: u64,
    pub gmm: GmmOptions,
}

impl GmmDetectOptions {
    pub fn new(tau: f64, weighted: bool, seed: u64) -> Self {
        Self {
            tau,
            weighted,
            quantization: DEFAULT_QUANTIZATION,
            seed,
            gmm: GmmOptions::default(),
        }
    }
}

/// GMM clustering per thresholded segment; returns all component means.
pub fn detect_gmm(map: &DensityMap, opts: &GmmDetectOptions) -> Result<DetectionSet> {
    if opts.quantization == 0 {
        return Err(Error::validation("quantization must be >= 1"));
    }
    let method = if opts.weighted {
        Method::GmmWeighted
    } else {
        Method::Gmm
    };
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
        return Ok(DetectionSet::new(method, Vec::new(), source_count));
    }
    let masses: Vec<f64> = segments.iter().map(|s| s.mass).collect();
    let caps: Vec<usize> = segments.iter().map(|s| s.cells.len()).collect();
    let ks = allocate_clusters(&masses, &caps, target);
    let roi = map.roi_or_full();
    let values = map.values();
    let q = opts.quantization as f64;
    let mut points = Vec::with_capacity(target);
    for (idx, (seg, &k)) in segments.iter().zip(&ks).enumerate() {
        if k == 0 {
            continue;
        }
        let samples = seg.centers(map.width());
        let weights: Vec<u64> = if opts.weighted {
            seg.cells
                .iter()
                .map(|&i| ((values[i].max(0.0) * q).round() as u64).max(1))
                .collect()
        } else {
            vec![1; samples.len()]
        };
        let fit = fit_gmm(
            &samples,
            &weights,
            k,
            opts.seed.wrapping_add(idx as u64),
            &opts.gmm,
        )?;
        points.extend(
            fit.params
                .means
                .iter()
                .map(|m| keep_in_roi(*m, &roi, &samples)),
        );
    }
    Ok(DetectionSet::new(method, points, source_count))
}
