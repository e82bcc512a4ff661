use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use densemap::detection::{
    default_tau, detect_gmm, detect_intprog, detect_kmeans, detect_local_max, write_detections,
    DetectionSet, GmmDetectOptions, GmmOptions, IntProgConfig, KMeansOptions, LocalMaxOptions,
    Method, Solver,
};
use densemap::{DensityMap, Raster, Result};
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::{required, Command};
use crate::util::{load_maps, par_map};

pub const DETECTIONS_FILE: &str = "detections.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    /// Greedy non-maximum suppression on the (smoothed) map.
    LocalMax,
    /// k-means on the cells of each thresholded segment.
    Kmeans,
    /// Gaussian mixture on the cells of each segment.
    Gmm,
    /// Gaussian mixture with cells weighted by density.
    GmmWeighted,
    /// Integer program matching window counts.
    Intprog,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::LocalMax => Method::LocalMax,
            MethodArg::Kmeans => Method::Kmeans,
            MethodArg::Gmm => Method::Gmm,
            MethodArg::GmmWeighted => Method::GmmWeighted,
            MethodArg::Intprog => Method::Intprog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Greedy,
    Exact,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Greedy => Solver::Greedy,
            SolverArg::Exact => Solver::Exact,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectOpts {
    /// Directory of frame_*.dmf density maps
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Detection method [default: gmm-weighted]
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Kernel width the maps were made with; sets the tau, suppression radius and IntProg defaults [default: 4]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Segmentation threshold [default: 1e-3 times the kernel peak for --sigma]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Region of interest (JSON polygon or DMF1 mask) [default: full frame]
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Local-max suppression radius in pixels [default: 1.5 * sigma]
    #[arg(long)]
    pub nms_radius: Option<f64>,
    /// Local-max Gaussian pre-smoothing width, 0 disables [default: 0]
    #[arg(long)]
    pub presmooth: Option<f64>,
    /// IntProg window side in pixels [default: round(2 * sigma)]
    #[arg(long)]
    pub window: Option<usize>,
    /// IntProg window stride [default: window / 2]
    #[arg(long)]
    pub stride: Option<usize>,
    /// IntProg object kernel width, 0 counts each object whole in every window containing it [default: sigma]
    #[arg(long)]
    pub kernel_sigma: Option<f64>,
    /// IntProg candidate lattice spacing [default: 1]
    #[arg(long)]
    pub candidate_stride: Option<usize>,
    /// IntProg solver [default: greedy]
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Density-to-replication factor for gmm-weighted [default: 10000]
    #[arg(long)]
    pub quantization: Option<u64>,
    /// Initial component width for GMM [default: 4]
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Random seed for k-means and GMM initialization [default: $DENSEMAP_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl DetectOpts {
    fn tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| default_tau(d(&self.sigma)))
    }

    fn intprog(&self) -> IntProgConfig {
        let base = IntProgConfig::for_sigma(d(&self.sigma));
        IntProgConfig {
            window: self.window.unwrap_or(base.window),
            stride: self.stride.unwrap_or(base.stride),
            candidate_stride: d(&self.candidate_stride),
            solver: d(&self.solver).into(),
            kernel_sigma: self.kernel_sigma.unwrap_or(base.kernel_sigma),
        }
    }

    /// Detections for one map; frame-seeded so results do not depend on
    /// how frames are scheduled.
    pub fn detect(&self, map: &DensityMap, frame_id: u64) -> Result<DetectionSet> {
        let seed = d(&self.seed).wrapping_add(frame_id);
        let set = match d(&self.method) {
            MethodArg::LocalMax => detect_local_max(
                map,
                &LocalMaxOptions {
                    nms_radius: self.nms_radius.unwrap_or(1.5 * d(&self.sigma)),
                    presmooth_sigma: d(&self.presmooth),
                },
            ),
            MethodArg::Kmeans => detect_kmeans(
                map,
                &KMeansOptions {
                    tau: self.tau(),
                    seed,
                },
            )?,
            m @ (MethodArg::Gmm | MethodArg::GmmWeighted) => {
                let mut o = GmmDetectOptions::new(self.tau(), m == MethodArg::GmmWeighted, seed);
                o.quantization = d(&self.quantization);
                o.gmm = GmmOptions {
                    init_std: d(&self.init_std),
                    ..GmmOptions::default()
                };
                detect_gmm(map, &o)?
            }
            MethodArg::Intprog => detect_intprog(map, &self.intprog())?,
        };
        Ok(set.with_frame(frame_id))
    }
}

impl Command for DetectOpts {
    const NAME: &'static str = "detect";

    fn defaults() -> Self {
        let lm = LocalMaxOptions::default();
        let ip = IntProgConfig::default();
        Self {
            method: Some(MethodArg::GmmWeighted),
            sigma: Some(4.0),
            presmooth: Some(lm.presmooth_sigma),
            candidate_stride: Some(ip.candidate_stride),
            solver: Some(SolverArg::Greedy),
            quantization: Some(GmmDetectOptions::new(0.0, true, 0).quantization),
            init_std: Some(GmmOptions::default().init_std),
            ..Default::default()
        }
    }

    fn seeded() -> bool {
        true
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.density.iter().chain(&self.roi).cloned().collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let maps = load_maps(
            jobs,
            required(&self.density, "density")?,
            self.roi.as_deref(),
        )?;
        let sets = par_map(jobs, &maps, |(id, map)| self.detect(map, *id))?;
        let (w, h) = (maps[0].1.width(), maps[0].1.height());
        let method: Method = d(&self.method).into();
        let path = d(&self.out).join(DETECTIONS_FILE);
        write_detections(&path, w, h, method, &sets)?;
        let total: usize = sets.iter().map(DetectionSet::len).sum();
        println!(
            "{}: {} detections over {} frames -> {}",
            method.name(),
            total,
            sets.len(),
            path.display()
        );
        Ok(())
    }
}
