use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use densemap::io::{frame_stem, parse_annotations, read_perspective, write_raster};
use densemap::synthesis::{synthesize_density, Normalization, SynthesisConfig, DEFAULT_TRUNCATION};
use densemap::Result;
use serde::{Deserialize, Serialize};

use super::d;
use crate::config::{required, Command};
use crate::util::par_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationArg {
    /// Plain truncated kernel; mass near borders is lost.
    None,
    /// Each dot's in-frame kernel sums to exactly one.
    PerDotRenormalize,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::None => Normalization::None,
            NormalizationArg::PerDotRenormalize => Normalization::PerDotRenormalize,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOpts {
    /// Dot annotation JSON
    #[arg(long)]
    pub ann: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Kernel standard deviation in pixels [default: 4]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Kernel half-width in multiples of sigma [default: 4]
    #[arg(long)]
    pub truncation: Option<f64>,
    /// Kernel normalization [default: per-dot-renormalize]
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
    /// Perspective map (DMF1); scales sigma per dot when given [default: none]
    #[arg(long)]
    pub perspective: Option<PathBuf>,
    /// Perspective value at which sigma applies unscaled [default: 1]
    #[arg(long)]
    pub reference_scale: Option<f64>,
}

impl Command for SynthOpts {
    const NAME: &'static str = "synth";

    fn defaults() -> Self {
        Self {
            sigma: Some(4.0),
            truncation: Some(DEFAULT_TRUNCATION),
            normalization: Some(NormalizationArg::PerDotRenormalize),
            reference_scale: Some(1.0),
            ..Default::default()
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.ann.iter().chain(&self.perspective).cloned().collect()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, jobs: usize) -> Result<()> {
        let ann = parse_annotations(required(&self.ann, "ann")?)?;
        let out = d(&self.out);
        let sigma = d(&self.sigma);
        let cfg = match &self.perspective {
            Some(p) => SynthesisConfig::perspective_scaled(
                sigma,
                read_perspective(p)?,
                d(&self.reference_scale),
            ),
            None => SynthesisConfig::fixed(sigma),
        }
        .with_truncation(d(&self.truncation))
        .with_normalization(d(&self.normalization).into());
        cfg.validate()?;
        let ids: Vec<u64> = ann.frames.iter().map(|f| f.id).collect();
        let sums = par_map(jobs, &ids, |&id| {
            let map = synthesize_density(&ann, id, &cfg, ann.width, ann.height)?;
            write_raster(&map, out.join(format!("{}.dmf", frame_stem(id))))?;
            Ok(map.sum())
        })?;
        println!(
            "synthesized {} density maps into {} (total mass {})",
            ids.len(),
            out.display(),
            crate::util::fmt(sums.iter().sum())
        );
        Ok(())
    }
}
