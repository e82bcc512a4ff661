use std::path::{Path, PathBuf};

use densemap::io::{list_frames, read_density, read_pgm, read_roi};
use densemap::{DensityMap, GrayImage, Raster, Result, RoiMask};
use rayon::prelude::*;

use crate::config::{invalid, io_error};

/// Maps `f` over `items` on `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if jobs == 0 {
        return Err(invalid("--jobs must be >= 1"));
    }
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

pub fn frames_in(dir: &Path, ext: &str) -> Result<Vec<(u64, PathBuf)>> {
    let frames = list_frames(dir, ext)?;
    if frames.is_empty() {
        return Err(invalid(format!(
            "no frame_*.{ext} files in {}",
            dir.display()
        )));
    }
    Ok(frames)
}

/// Pairs two frame listings by id; both must hold the same ids.
pub fn pair_frames(
    a: &[(u64, PathBuf)],
    b: &[(u64, PathBuf)],
) -> Result<Vec<(u64, PathBuf, PathBuf)>> {
    let ids_a: Vec<u64> = a.iter().map(|f| f.0).collect();
    let ids_b: Vec<u64> = b.iter().map(|f| f.0).collect();
    if ids_a != ids_b {
        let missing = ids_a
            .iter()
            .find(|id| !ids_b.contains(id))
            .or_else(|| ids_b.iter().find(|id| !ids_a.contains(id)));
        return Err(invalid(match missing {
            Some(id) => format!("frame {id} is present in only one input"),
            None => "inputs hold different frames".to_string(),
        }));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x.0, x.1.clone(), y.1.clone()))
        .collect())
}

pub fn load_images(jobs: usize, dir: &Path) -> Result<Vec<(u64, GrayImage)>> {
    let frames = frames_in(dir, "pgm")?;
    par_map(jobs, &frames, |(id, p)| Ok((*id, read_pgm(p)?)))
}

/// Reads an optional ROI sized like `like`.
pub fn load_roi<R: Raster + ?Sized>(roi: Option<&Path>, like: &R) -> Result<Option<RoiMask>> {
    roi.map(|p| read_roi(p, like.width(), like.height()))
        .transpose()
}

pub fn attach_roi(map: DensityMap, roi: Option<&RoiMask>) -> Result<DensityMap> {
    match roi {
        Some(r) => map.with_roi(r.clone()),
        None => Ok(map),
    }
}

/// Reads every `frame_*.dmf` in `dir`, restricted to the ROI when given.
pub fn load_maps(jobs: usize, dir: &Path, roi: Option<&Path>) -> Result<Vec<(u64, DensityMap)>> {
    let frames = frames_in(dir, "dmf")?;
    let maps = par_map(jobs, &frames, |(id, p)| Ok((*id, read_density(p)?)))?;
    let roi = load_roi(roi, &maps[0].1)?;
    maps.into_iter()
        .map(|(id, m)| Ok((id, attach_roi(m, roi.as_ref())?)))
        .collect()
}

/// Inclusive level range such as `0..3`, or a single level.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || invalid(format!("bad level range {s:?}; expected e.g. 0..3"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim_start_matches('=')
                .trim()
                .parse()
                .map_err(|_| bad())?,
        ),
        None => {
            let l = s.trim().parse().map_err(|_| bad())?;
            (l, l)
        }
    };
    if lo > hi || hi > 12 {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// Threshold list `start:end:step`, both ends included.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    let bad = || {
        invalid(format!(
            "bad threshold range {s:?}; expected start:end:step"
        ))
    };
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && start.is_finite() && end.is_finite() && start <= end) {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// `x,y` point.
pub fn parse_point(s: &str) -> Result<densemap::Point2> {
    let bad = || invalid(format!("bad point {s:?}; expected x,y"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok(densemap::Point2::new(
        x.trim().parse().map_err(|_| bad())?,
        y.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}

/// A table written both as CSV and as aligned text on stdout.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_error(path, io),
            other => invalid(format!("CSV error: {other:?}")),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| io_error(path, e))
    }

    pub fn print(&self) {
        let short: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| shorten(c)).collect())
            .collect();
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for r in &short {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        println!("{}", line(&self.header));
        for r in &short {
            println!("{}", line(r));
        }
    }
}

fn shorten(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(x) if cell.contains('.') || cell.contains('e') => format!("{x:.4}"),
        _ => cell.to_string(),
    }
}

/// Mean of the finite values, NaN if there are none.
pub fn finite_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs.into_iter().filter(|x| x.is_finite()) {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
