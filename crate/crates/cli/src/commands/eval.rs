use std::path::{Path, PathBuf};

use clap::Args;
use densemap::detection::read_detections;
use densemap::io::{parse_annotations, read_perspective, read_roi};
use densemap::metrics::{
    bbdr, bbmae, count_errors, game, loss_pixel_count, match_detections, prf, scatter_stats,
    temporal_mad, trajectory_errors, BoxSpec, MatchResult, TrajectoryFrame,
};
use densemap::roi::map_count;
use densemap::{DensityMap, Error, Point2, Raster, Result};
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::{invalid, required, Command};
use crate::util::{finite_mean, fmt, load_maps, par_map, parse_levels, Table};

pub const COUNTS_FILE: &str = "counts.csv";
pub const GAME_FILE: &str = "game.csv";
pub const QUALITY_FILE: &str = "quality.csv";
pub const DET_FILE: &str = "det.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Predicted and ground-truth maps paired by frame id.
fn load_pairs(
    jobs: usize,
    pred: &Path,
    gt: &Path,
    roi: Option<&Path>,
) -> Result<Vec<(u64, DensityMap, DensityMap)>> {
    let p = load_maps(jobs, pred, roi)?;
    let g = load_maps(jobs, gt, roi)?;
    let ids_p: Vec<u64> = p.iter().map(|x| x.0).collect();
    let ids_g: Vec<u64> = g.iter().map(|x| x.0).collect();
    if ids_p != ids_g {
        return Err(invalid(
            "predicted and ground-truth directories hold different frame ids",
        ));
    }
    Ok(p.into_iter()
        .zip(g)
        .map(|((id, a), (_, b))| (id, a, b))
        .collect())
}

/// Copy of `map` with cells outside its ROI set to zero.
fn roi_only(map: &DensityMap) -> Result<DensityMap> {
    let Some(roi) = map.roi() else {
        return Ok(map.clone());
    };
    let vals = map
        .values()
        .iter()
        .zip(roi.mask())
        .map(|(&v, &inside)| if inside { v } else { 0.0 })
        .collect();
    if map.is_prediction() {
        DensityMap::prediction(map.width(), map.height(), vals)
    } else {
        DensityMap::new(map.width(), map.height(), vals)
    }
}

/// Degenerate inputs become NaN in a table instead of failing the run.
fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::Degenerate(_)) => Ok(f64::NAN),
        other => other,
    }
}

/// P/R/F1 over all frames together, with the same 0/0 conventions as
/// per-frame scores.
fn pooled_prf(tp: usize, n_dets: usize, n_gt: usize) -> densemap::metrics::Prf {
    let m = MatchResult {
        pairs: vec![(0, 0, 0.0); tp],
        unmatched_detections: Vec::new(),
        unmatched_gt: Vec::new(),
        matching_distance: 1.0,
    };
    prf(&m, n_dets, n_gt)
}

fn finish(table: &Table, path: &Path) -> Result<()> {
    table.write_csv(path)?;
    table.print();
    println!("-> {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCountOpts {
    /// Directory of predicted frame_*.dmf maps
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth frame_*.dmf maps
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Region of interest (JSON polygon or DMF1 mask) [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
}

impl Command for EvalCountOpts {
    const NAME: &'static str = "eval-count";

    fn defaults() -> Self {
        Self::default()
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.pred
            .iter()
            .chain(&self.gt)
            .chain(&self.roi)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let pairs = load_pairs(
            jobs,
            required(&self.pred, "pred")?,
            required(&self.gt, "gt")?,
            self.roi.as_deref(),
        )?;
        let pred: Vec<f64> = pairs.iter().map(|(_, p, _)| map_count(p)).collect();
        let gt: Vec<f64> = pairs.iter().map(|(_, _, g)| map_count(g)).collect();
        let mut t = Table::new(&["frame", "pred_count", "gt_count", "abs_error", "sq_error"]);
        for ((id, _, _), (p, g)) in pairs.iter().zip(pred.iter().zip(&gt)) {
            t.push(vec![
                id.to_string(),
                fmt(*p),
                fmt(*g),
                fmt((p - g).abs()),
                fmt((p - g) * (p - g)),
            ]);
        }
        let e = count_errors(&pred, &gt)?;
        let n = pred.len() as f64;
        t.push(vec![
            "mean".into(),
            fmt(pred.iter().sum::<f64>() / n),
            fmt(gt.iter().sum::<f64>() / n),
            fmt(e.mae),
            fmt(e.mse_mean_sq),
        ]);
        finish(&t, &d(&self.out).join(COUNTS_FILE))?;
        println!(
            "MAE {:.4}  MSE (mean of squares) {:.4}",
            e.mae, e.mse_mean_sq
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalGameOpts {
    /// Directory of predicted frame_*.dmf maps
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth frame_*.dmf maps
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid levels, inclusive range such as 0..3 [default: 0..3]
    #[arg(long)]
    pub levels: Option<String>,
    /// Region of interest; cells outside it are ignored [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
}

impl Command for EvalGameOpts {
    const NAME: &'static str = "eval-game";

    fn defaults() -> Self {
        Self {
            levels: Some("0..3".into()),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.pred
            .iter()
            .chain(&self.gt)
            .chain(&self.roi)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let levels = parse_levels(&d(&self.levels))?;
        let pairs = load_pairs(
            jobs,
            required(&self.pred, "pred")?,
            required(&self.gt, "gt")?,
            self.roi.as_deref(),
        )?;
        let rows = par_map(jobs, &pairs, |(_, p, g)| {
            let (p, g) = (roi_only(p)?, roi_only(g)?);
            levels
                .iter()
                .map(|&l| game(&p, &g, l))
                .collect::<Result<Vec<f64>>>()
        })?;
        let header: Vec<String> = std::iter::once("frame".to_string())
            .chain(levels.iter().map(|l| format!("game_{l}")))
            .collect();
        let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for ((id, _, _), r) in pairs.iter().zip(&rows) {
            t.push(
                std::iter::once(id.to_string())
                    .chain(r.iter().map(|x| fmt(*x)))
                    .collect(),
            );
        }
        let n = rows.len() as f64;
        let means = (0..levels.len()).map(|j| fmt(rows.iter().map(|r| r[j]).sum::<f64>() / n));
        t.push(std::iter::once("mean".to_string()).chain(means).collect());
        finish(&t, &d(&self.out).join(GAME_FILE))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalQualityOpts {
    /// Directory of predicted frame_*.dmf maps
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth frame_*.dmf maps
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Dot annotation JSON; enables BBDR and BBMAE
    #[arg(long)]
    pub ann: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Box width at reference scale in pixels [default: 16]
    #[arg(long)]
    pub box_width: Option<f64>,
    /// Box height at reference scale in pixels [default: 16]
    #[arg(long)]
    pub box_height: Option<f64>,
    /// Perspective map (DMF1) scaling the boxes [default: none]
    #[arg(long)]
    pub perspective: Option<PathBuf>,
    /// Perspective value at which boxes have their base size [default: 1]
    #[arg(long)]
    pub reference_scale: Option<f64>,
    /// Region of interest (JSON polygon or DMF1 mask) [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
}

impl Command for EvalQualityOpts {
    const NAME: &'static str = "eval-quality";

    fn defaults() -> Self {
        Self {
            box_width: Some(16.0),
            box_height: Some(16.0),
            reference_scale: Some(1.0),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        [
            &self.pred,
            &self.gt,
            &self.ann,
            &self.perspective,
            &self.roi,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let pairs = load_pairs(
            jobs,
            required(&self.pred, "pred")?,
            required(&self.gt, "gt")?,
            self.roi.as_deref(),
        )?;
        let ann = self.ann.as_deref().map(parse_annotations).transpose()?;
        let mut spec = BoxSpec::new(d(&self.box_width), d(&self.box_height))?;
        if let Some(p) = &self.perspective {
            spec = spec.with_perspective(read_perspective(p)?, d(&self.reference_scale))?;
        }
        let idx: Vec<usize> = (0..pairs.len()).collect();
        let rows = par_map(jobs, &idx, |&i| {
            let (id, p, g) = &pairs[i];
            let (pearson, slope, intercept) = match scatter_stats(p, g) {
                Ok(s) => (s.pearson, s.slope, s.intercept),
                Err(Error::Degenerate(_)) => (f64::NAN, f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let (bp, bg, bm) = match &ann {
                Some(a) => {
                    let pts: Vec<Point2> = a.frame(*id)?.points.clone();
                    let m = if pts.is_empty() {
                        f64::NAN
                    } else {
                        bbmae(p, g, &pts, &spec)?
                    };
                    (
                        or_nan(bbdr(p, &pts, &spec))?,
                        or_nan(bbdr(g, &pts, &spec))?,
                        m,
                    )
                }
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            let loss = loss_pixel_count(&roi_only(p)?, &roi_only(g)?)?;
            let mad = if i == 0 {
                f64::NAN
            } else {
                temporal_mad(&[pairs[i - 1].1.clone(), p.clone()])?
            };
            Ok(vec![
                pearson, slope, intercept, bp, bg, bm, loss.pixel, loss.count, mad,
            ])
        })?;
        let mut t = Table::new(&[
            "frame",
            "pearson",
            "slope",
            "intercept",
            "bbdr_pred",
            "bbdr_gt",
            "bbmae",
            "pixel_loss",
            "count_loss",
            "mad",
        ]);
        for ((id, _, _), r) in pairs.iter().zip(&rows) {
            t.push(
                std::iter::once(id.to_string())
                    .chain(r.iter().map(|x| fmt(*x)))
                    .collect(),
            );
        }
        let means = (0..9).map(|j| fmt(finite_mean(rows.iter().map(|r| r[j]))));
        t.push(std::iter::once("mean".to_string()).chain(means).collect());
        finish(&t, &d(&self.out).join(QUALITY_FILE))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDetOpts {
    /// Detections JSON
    #[arg(long)]
    pub det: Option<PathBuf>,
    /// Dot annotation JSON
    #[arg(long)]
    pub ann: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest detection-to-annotation distance that can match, in pixels [default: 4]
    #[arg(long)]
    pub match_distance: Option<f64>,
    /// Region of interest; points outside it are ignored [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
}

impl Command for EvalDetOpts {
    const NAME: &'static str = "eval-det";

    fn defaults() -> Self {
        Self {
            match_distance: Some(4.0),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.det
            .iter()
            .chain(&self.ann)
            .chain(&self.roi)
            .cloned()
            .collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let (w, h, sets) = read_detections(required(&self.det, "det")?)?;
        let ann = parse_annotations(required(&self.ann, "ann")?)?;
        if (w, h) != (ann.width, ann.height) {
            return Err(invalid(format!(
                "detections are for {w}x{h} frames, annotations for {}x{}",
                ann.width, ann.height
            )));
        }
        let roi = self.roi.as_deref().map(|p| read_roi(p, w, h)).transpose()?;
        let keep = |pts: &[Point2]| -> Vec<Point2> {
            pts.iter()
                .filter(|p| roi.as_ref().is_none_or(|r| r.contains_point(p)))
                .copied()
                .collect()
        };
        let md = d(&self.match_distance);
        let frames = sets
            .iter()
            .map(|s| {
                let gt = ann.frame(s.frame_id)?;
                let mut g = gt.clone();
                if let Some(r) = &roi {
                    let inside: Vec<bool> = gt.points.iter().map(|p| r.contains_point(p)).collect();
                    g.points = gt
                        .points
                        .iter()
                        .zip(&inside)
                        .filter(|x| *x.1)
                        .map(|x| *x.0)
                        .collect();
                    g.track_ids = gt.track_ids.as_ref().map(|t| {
                        t.iter()
                            .zip(&inside)
                            .filter(|x| *x.1)
                            .map(|x| *x.0)
                            .collect()
                    });
                }
                Ok((keep(&s.points), g))
            })
            .collect::<Result<Vec<_>>>()?;
        let matches: Vec<MatchResult> = par_map(jobs, &frames, |(dets, g)| {
            match_detections(dets, &g.points, md)
        })?;

        let mut t = Table::new(&["frame", "n_det", "n_gt", "tp", "precision", "recall", "f1"]);
        let (mut nd, mut ng, mut tp) = (0, 0, 0);
        for ((s, (dets, g)), m) in sets.iter().zip(&frames).zip(&matches) {
            let r = prf(m, dets.len(), g.points.len());
            nd += dets.len();
            ng += g.points.len();
            tp += m.true_positives();
            t.push(vec![
                s.frame_id.to_string(),
                dets.len().to_string(),
                g.points.len().to_string(),
                m.true_positives().to_string(),
                fmt(r.precision),
                fmt(r.recall),
                fmt(r.f1),
            ]);
        }
        let r = pooled_prf(tp, nd, ng);
        t.push(vec![
            "all".into(),
            nd.to_string(),
            ng.to_string(),
            tp.to_string(),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f1),
        ]);
        let out = d(&self.out);
        finish(&t, &out.join(DET_FILE))?;

        if ann.has_tracks() {
            let tf: Vec<TrajectoryFrame> = frames
                .iter()
                .zip(&matches)
                .map(|((dets, g), m)| TrajectoryFrame {
                    detections: dets,
                    gt: g,
                    matches: m,
                })
                .collect();
            let e = trajectory_errors(&tf)?;
            let mut tt = Table::new(&["ed_mean", "ed_std", "edd_mean", "edd_std", "miss_rate"]);
            tt.push(
                [e.ed_mean, e.ed_std, e.edd_mean, e.edd_std, e.miss_rate]
                    .map(fmt)
                    .to_vec(),
            );
            finish(&tt, &out.join(TRAJECTORY_FILE))?;
        }
        Ok(())
    }
}
