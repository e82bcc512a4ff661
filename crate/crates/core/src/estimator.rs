//! Pixel-wise ridge-regression density estimator.
//!
//! Each pixel's density is predicted linearly from the raw intensities of
//! the mirror-padded square patch centered on it, plus a bias. Training
//! accumulates the normal equations `(X^T X + lambda I') w = X^T y`, where
//! `I'` is the identity with a zero at the bias coordinate, and solves them
//! by Cholesky factorization with iterative refinement.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::mirror_index;
use crate::grid::{DensityMap, GrayImage, Point2, Raster, RoiMask};

/// Relative residual the solver must reach on the normal equations.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

fn check_patch_size(patch_size: usize) -> Result<()> {
    if patch_size == 0 || patch_size % 2 == 0 {
        return Err(Error::validation(format!(
            "patch size must be odd and positive, got {patch_size}"
        )));
    }
    Ok(())
}

fn check_fits(image: &GrayImage, patch_size: usize) -> Result<()> {
    let half = patch_size / 2;
    if half >= image.width() || half >= image.height() {
        return Err(Error::validation(format!(
            "patch {patch_size} does not fit a {}x{} image after mirror padding",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

fn patch_into(image: &GrayImage, row: usize, col: usize, patch_size: usize, out: &mut Vec<f64>) {
    let half = (patch_size / 2) as i64;
    out.clear();
    for dr in -half..=half {
        let r = mirror_index(row as i64 + dr, image.height());
        for dc in -half..=half {
            let c = mirror_index(col as i64 + dc, image.width());
            out.push(image.at(r, c));
        }
    }
    out.push(1.0);
}

/// Row-major patch intensities around the cell containing `center`, with a
/// trailing constant 1 for the bias.
pub fn extract_patch(image: &GrayImage, center: &Point2, patch_size: usize) -> Result<Vec<f64>> {
    check_patch_size(patch_size)?;
    check_fits(image, patch_size)?;
    let (row, col) = center.cell(image.width(), image.height()).ok_or_else(|| {
        Error::validation(format!(
            "patch center ({}, {}) outside the image",
            center.x, center.y
        ))
    })?;
    let mut out = Vec::with_capacity(patch_size * patch_size + 1);
    patch_into(image, row, col, patch_size, &mut out);
    Ok(out)
}

/// Running sums for the normal equations. The last feature is the bias.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    dim: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    samples: usize,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn add(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::validation(format!(
                "feature vector of length {} (expected {})",
                x.len(),
                self.dim
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite training sample"));
        }
        // upper triangle only; mirrored at solve time
        for i in 0..self.dim {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &mut self.gram[i * self.dim..(i + 1) * self.dim];
            for j in i..self.dim {
                row[j] += xi * x[j];
            }
            self.xty[i] += xi * y;
        }
        self.samples += 1;
        Ok(())
    }

    /// The regularized system matrix `X^T X + lambda I'`.
    pub fn system(&self, lambda: f64) -> DMatrix<f64> {
        let d = self.dim;
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.gram[i * d + j];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            if i + 1 < d {
                a[(i, i)] += lambda;
            }
        }
        a
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xty)
    }

    pub fn solve(&self, lambda: f64) -> Result<Vec<f64>> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::validation(format!(
                "ridge lambda must be >= 0, got {lambda}"
            )));
        }
        if self.samples == 0 {
            return Err(Error::validation("no training samples"));
        }
        let a = self.system(lambda);
        let b = self.rhs();
        let b_norm = b.norm();
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("normal equations are not positive definite".into()))?;
        let l = chol.l();
        let max_diag = (0..self.dim).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        let min_pivot = (0..self.dim)
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if max_diag <= 0.0 || min_pivot <= 1e-13 * max_diag {
            return Err(Error::Singular(format!(
                "design is rank deficient (pivot ratio {:.3e})",
                min_pivot / max_diag.max(f64::MIN_POSITIVE)
            )));
        }
        let mut w = chol.solve(&b);
        for _ in 0..3 {
            let r = &b - &a * &w;
            if r.norm() <= SOLVE_TOLERANCE * b_norm {
                break;
            }
            w += chol.solve(&r);
        }
        let residual = (&b - &a * &w).norm();
        if residual > SOLVE_TOLERANCE * b_norm {
            return Err(Error::Singular(format!(
                "normal-equation residual {:.3e} exceeds tolerance",
                residual / b_norm
            )));
        }
        Ok(w.iter().copied().collect())
    }
}

/// Closed-form ridge weights for explicit samples. The last feature of each
/// vector is the bias and is not penalized.
pub fn fit_ridge(features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::validation(
            "at least one training sample is required",
        ));
    }
    if features.len() != targets.len() {
        return Err(Error::validation(format!(
            "{} feature vectors but {} targets",
            features.len(),
            targets.len()
        )));
    }
    let mut ne = NormalEquations::new(features[0].len());
    for (x, &y) in features.iter().zip(targets) {
        ne.add(x, y)?;
    }
    ne.solve(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub patch_size: usize,
    /// `patch_size^2` patch weights followed by the bias.
    pub weights: Vec<f64>,
    pub ridge_lambda: f64,
}

impl RidgeModel {
    pub fn new(patch_size: usize, weights: Vec<f64>, ridge_lambda: f64) -> Result<Self> {
        check_patch_size(patch_size)?;
        if weights.len() != patch_size * patch_size + 1 {
            return Err(Error::validation(format!(
                "patch size {patch_size} needs {} weights, got {}",
                patch_size * patch_size + 1,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::validation("model weights must be finite"));
        }
        if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
            return Err(Error::validation("ridge lambda must be >= 0"));
        }
        Ok(Self {
            patch_size,
            weights,
            ridge_lambda,
        })
    }

    pub fn zero(patch_size: usize) -> Result<Self> {
        Self::new(patch_size, vec![0.0; patch_size * patch_size + 1], 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }

    /// Euclidean norm of the patch weights, bias excluded.
    pub fn weight_norm(&self) -> f64 {
        self.weights[..self.weights.len() - 1]
            .iter()
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt()
    }

    pub fn predict_features(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = b"RRM1".to_vec();
        out.extend((self.patch_size as u32).to_le_bytes());
        out.extend(self.ridge_lambda.to_le_bytes());
        for w in &self.weights {
            out.extend(w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format {
                offset: bytes.len(),
                message: "model header needs 16 bytes".into(),
            });
        }
        if &bytes[..4] != b"RRM1" {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected RRM1".into(),
            });
        }
        let patch_size = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let lambda = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let expected = (patch_size * patch_size + 1) * 8;
        let payload = &bytes[16..];
        if payload.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: payload.len(),
            });
        }
        let weights = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(patch_size, weights, lambda)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Trains from explicit feature vectors (bias last).
pub fn train_ridge(
    features: &[Vec<f64>],
    targets: &[f64],
    ridge_lambda: f64,
) -> Result<RidgeModel> {
    let weights = fit_ridge(features, targets, ridge_lambda)?;
    let dim = weights.len();
    let patch_size = ((dim - 1) as f64).sqrt().round() as usize;
    if patch_size * patch_size + 1 != dim {
        return Err(Error::validation(format!(
            "feature length {dim} is not patch_size^2 + 1"
        )));
    }
    RidgeModel::new(patch_size, weights, ridge_lambda)
}

/// Training options for image/density pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub patch_size: usize,
    pub ridge_lambda: f64,
    /// Use every `stride`-th ROI pixel along each axis.
    pub sample_stride: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            patch_size: 7,
            ridge_lambda: 1.0,
            sample_stride: 1,
        }
    }
}

/// Trains on every (subsampled) ROI pixel of the given frames, in frame
/// order then row-major order.
pub fn train_on_frames(
    frames: &[(GrayImage, DensityMap)],
    roi: Option<&RoiMask>,
    opts: &TrainOptions,
) -> Result<RidgeModel> {
    check_patch_size(opts.patch_size)?;
    if opts.sample_stride == 0 {
        return Err(Error::validation("sample stride must be >= 1"));
    }
    if frames.is_empty() {
        return Err(Error::validation("no training frames"));
    }
    let dim = opts.patch_size * opts.patch_size + 1;
    let mut ne = NormalEquations::new(dim);
    let mut patch = Vec::with_capacity(dim);
    for (image, density) in frames {
        check_fits(image, opts.patch_size)?;
        if !density.same_shape(image) {
            return Err(Error::validation(
                "training image and density map differ in size",
            ));
        }
        if let Some(r) = roi {
            if !r.same_shape(image) {
                return Err(Error::validation("ROI does not match training frames"));
            }
        }
        for row in (0..image.height()).step_by(opts.sample_stride) {
            for col in (0..image.width()).step_by(opts.sample_stride) {
                if roi.is_some_and(|r| !r.is_inside(row, col)) {
                    continue;
                }
                patch_into(image, row, col, opts.patch_size, &mut patch);
                ne.add(&patch, density.at(row, col))?;
            }
        }
    }
    let weights = ne.solve(opts.ridge_lambda)?;
    RidgeModel::new(opts.patch_size, weights, opts.ridge_lambda)
}

/// Runs the model at every ROI pixel; pixels outside the ROI are zero. The
/// result is a raw prediction and may hold negative values.
pub fn predict_density(model: &RidgeModel, image: &GrayImage, roi: &RoiMask) -> Result<DensityMap> {
    check_fits(image, model.patch_size)?;
    if !roi.same_shape(image) {
        return Err(Error::validation("ROI does not match image"));
    }
    let (w, h) = (image.width(), image.height());
    let mut values = vec![0.0; w * h];
    let mut patch = Vec::with_capacity(model.weights.len());
    for row in 0..h {
        for col in 0..w {
            if roi.is_inside(row, col) {
                patch_into(image, row, col, model.patch_size, &mut patch);
                values[row * w + col] = model.predict_features(&patch);
            }
        }
    }
    DensityMap::prediction(w, h, values)?.with_roi(roi.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Gaussian elimination with partial pivoting; test oracle only.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    fn ramp(w: usize, h: usize) -> GrayImage {
        let n = (w * h) as f64;
        GrayImage::new(w, h, (0..w * h).map(|i| i as f64 / n).collect()).unwrap()
    }

    #[test]
    fn zero_image_patch() {
        let img = GrayImage::filled(5, 5, 0.0);
        let p = extract_patch(&img, &Point2::new(2.5, 2.5), 3).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(extract_patch(&img, &Point2::new(2.5, 2.5), 4).is_err());
    }

    #[test]
    fn ramp_patch_row_major() {
        let img = ramp(6, 5);
        let p = extract_patch(&img, &Point2::new(2.5, 1.5), 3).unwrap();
        let expected: Vec<f64> = [
            (0, 1),
            (0, 2),
            (0, 3),
            (1, 1),
            (1, 2),
            (1, 3),
            (2, 1),
            (2, 2),
            (2, 3),
        ]
        .iter()
        .map(|&(r, c)| img.at(r, c))
        .chain([1.0])
        .collect();
        assert_eq!(p, expected);
    }

    #[test]
    fn corner_patch_matches_explicit_mirror() {
        let img = ramp(5, 4);
        let p = extract_patch(&img, &Point2::new(0.2, 0.9), 3).unwrap();
        // explicitly mirrored neighborhood of (0, 0): index -1 reflects to 1
        let rows = [1usize, 0, 1];
        let cols = [1usize, 0, 1];
        let mut expected = Vec::new();
        for r in rows {
            for c in cols {
                expected.push(img.at(r, c));
            }
        }
        expected.push(1.0);
        assert_eq!(p, expected);
    }

    #[test]
    fn single_sample_bias_fit() {
        let w = fit_ridge(&[vec![1.0]], &[2.0], 0.0).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_zero_weights() {
        let feats = vec![
            vec![0.3, 0.1, 1.0],
            vec![0.9, 0.4, 1.0],
            vec![0.2, 0.8, 1.0],
        ];
        let w = fit_ridge(&feats, &[0.0, 0.0, 0.0], 0.5).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_deficient_is_singular() {
        let feats = vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]];
        let dup: Vec<Vec<f64>> = feats.iter().map(|f| vec![f[0], f[0], f[1]]).collect();
        assert!(matches!(
            fit_ridge(&dup, &[1.0, 2.0, 3.0], 0.0),
            Err(Error::Singular(_))
        ));
        assert!(fit_ridge(&dup, &[1.0, 2.0, 3.0], 0.1).is_ok());
        assert!(fit_ridge(&feats, &[1.0], 0.1).is_err());
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, d) = (50, 10);
        let feats: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut x: Vec<f64> = (0..d - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                x.push(1.0);
                x
            })
            .collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda = 0.1;
        let w = fit_ridge(&feats, &targets, lambda).unwrap();

        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for (x, y) in feats.iter().zip(&targets) {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += x[i] * x[j];
                }
                b[i] += x[i] * y;
            }
        }
        for (i, row) in a.iter_mut().enumerate().take(d - 1) {
            row[i] += lambda;
        }
        let oracle = dense_solve(a, b);
        for (u, v) in w.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let img = ramp(8, 8);
        let m = RidgeModel::zero(3).unwrap();
        let pred = predict_density(&m, &img, &RoiMask::full(8, 8)).unwrap();
        assert!(pred.values().iter().all(|&v| v == 0.0));
        assert!(pred.is_prediction());
    }

    #[test]
    fn overfit_single_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::new(12, 10, (0..120).map(|_| rng.random::<f64>()).collect()).unwrap();
        // a target the linear model can represent exactly
        let truth =
            RidgeModel::new(3, (0..10).map(|i| (i as f64 - 4.0) * 0.01).collect(), 0.0).unwrap();
        let gt = predict_density(&truth, &img, &RoiMask::full(12, 10)).unwrap();
        let gt = DensityMap::prediction(12, 10, gt.values().to_vec()).unwrap();
        let opts = TrainOptions {
            patch_size: 3,
            ridge_lambda: 0.0,
            sample_stride: 1,
        };
        let model = train_on_frames(&[(img.clone(), gt.clone())], None, &opts).unwrap();
        let pred = predict_density(&model, &img, &RoiMask::full(12, 10)).unwrap();
        let mse: f64 = pred
            .values()
            .iter()
            .zip(gt.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 120.0;
        assert!(mse < 1e-20, "{mse}");
    }

    #[test]
    fn model_file_round_trip() {
        let m = RidgeModel::new(3, (0..10).map(|i| i as f64 * 0.5 - 1.0).collect(), 0.25).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"RRM1");
        assert_eq!(bytes.len(), 16 + 80);
        assert_eq!(RidgeModel::from_bytes(&bytes).unwrap(), m);
        assert!(RidgeModel::from_bytes(&bytes[..40]).is_err());
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = (0..n)
            .map(|_| {
                let mut x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                x.push(1.0);
                x
            })
            .collect();
        let targets = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (feats, targets)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn normal_equations_hold(seed in 0u64..1000, lambda in 0.01f64..10.0) {
            let (feats, targets) = random_problem(seed, 30, 6);
            let mut ne = NormalEquations::new(7);
            for (x, y) in feats.iter().zip(&targets) {
                ne.add(x, *y).unwrap();
            }
            let w = DVector::from_vec(ne.solve(lambda).unwrap());
            let r = ne.system(lambda) * &w - ne.rhs();
            prop_assert!(r.norm() <= 1e-6 * ne.rhs().norm());
        }

        #[test]
        fn weight_norm_shrinks_with_lambda(seed in 0u64..1000, l1 in 0.0f64..5.0, extra in 0.0f64..5.0) {
            let (feats, targets) = random_problem(seed, 40, 5);
            let a = fit_ridge(&feats, &targets, l1).unwrap();
            let b = fit_ridge(&feats, &targets, l1 + extra).unwrap();
            let norm = |w: &[f64]| w[..w.len() - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm(&b) <= norm(&a) * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn prediction_linear_in_model(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::new(9, 7, (0..63).map(|_| rng.random::<f64>()).collect()).unwrap();
            let m = RidgeModel::new(3, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.0).unwrap();
            let roi = RoiMask::full(9, 7);
            let base = predict_density(&m, &img, &roi).unwrap();
            let scaled = predict_density(&m.scaled(alpha), &img, &roi).unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()) {
                prop_assert!((a * alpha - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
