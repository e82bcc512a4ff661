use std::path::{Path, PathBuf};

use clap::Args;
use densemap::estimator::{predict_density, train_on_frames, RidgeModel, TrainOptions};
use densemap::io::{frame_stem, list_frames, read_density, read_pgm, write_raster};
use densemap::{Raster, Result, RoiMask};
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::{required, Command};
use crate::util::{frames_in, load_images, load_roi, pair_frames, par_map};

pub const MODEL_FILE: &str = "model.rrm";

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOpts {
    /// Directory of frame_*.pgm training images
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Directory of frame_*.dmf target density maps
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Region of interest (JSON polygon or DMF1 mask) [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Side of the square image patch, odd [default: 7]
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Ridge regularization weight [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sample every n-th pixel along each axis [default: 1]
    #[arg(long)]
    pub sample_stride: Option<usize>,
}

impl Command for TrainOpts {
    const NAME: &'static str = "train-rr";

    fn defaults() -> Self {
        let t = TrainOptions::default();
        Self {
            patch_size: Some(t.patch_size),
            lambda: Some(t.ridge_lambda),
            sample_stride: Some(t.sample_stride),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.frames
            .iter()
            .chain(&self.density)
            .chain(&self.roi)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let images = frames_in(required(&self.frames, "frames")?, "pgm")?;
        let maps = list_frames(required(&self.density, "density")?, "dmf")?;
        let pairs = pair_frames(&images, &maps)?;
        let data = par_map(jobs, &pairs, |(_, img, map)| {
            Ok((read_pgm(img)?, read_density(map)?))
        })?;
        let roi = load_roi(self.roi.as_deref(), &data[0].0)?;
        let opts = TrainOptions {
            patch_size: d(&self.patch_size),
            ridge_lambda: d(&self.lambda),
            sample_stride: d(&self.sample_stride),
        };
        let model = train_on_frames(&data, roi.as_ref(), &opts)?;
        let path = d(&self.out).join(MODEL_FILE);
        model.save(&path)?;
        println!(
            "trained ridge model on {} frames ({} weights, norm {:.4}) -> {}",
            data.len(),
            opts.patch_size * opts.patch_size + 1,
            model.weight_norm(),
            path.display()
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictOpts {
    /// Trained model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory of frame_*.pgm images
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Region of interest (JSON polygon or DMF1 mask) [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
}

impl Command for PredictOpts {
    const NAME: &'static str = "predict";

    fn defaults() -> Self {
        Self::default()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.model
            .iter()
            .chain(&self.frames)
            .chain(&self.roi)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let model = RidgeModel::load(required(&self.model, "model")?)?;
        let images = load_images(jobs, required(&self.frames, "frames")?)?;
        let first = &images[0].1;
        let roi = load_roi(self.roi.as_deref(), first)?
            .unwrap_or_else(|| RoiMask::full(first.width(), first.height()));
        let out = d(&self.out);
        let counts = par_map(jobs, &images, |(id, img)| {
            let map = predict_density(&model, img, &roi)?;
            write_raster(&map, out.join(format!("{}.dmf", frame_stem(*id))))?;
            Ok(map.sum())
        })?;
        println!(
            "predicted {} density maps into {} (mean count {:.3})",
            counts.len(),
            out.display(),
            counts.iter().sum::<f64>() / counts.len() as f64
        );
        Ok(())
    }
}
