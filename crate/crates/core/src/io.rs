//! File formats: DMF1 rasters, annotation JSON, ROI polygons and 8-bit PGM.
//!
//! DMF1 layout (little-endian):
//!
//! | bytes  | content                                  |
//! |--------|------------------------------------------|
//! | 0..4   | magic `DMF1`                             |
//! | 4..8   | width, `u32`                             |
//! | 8..12  | height, `u32`                            |
//! | 12..   | `width * height` `f32` values, row-major |
//!
//! Values are held as `f64` in memory and quantized to `f32` on write, so a
//! file read and written back is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    AnnotatedFrame, DensityMap, DotAnnotations, GrayImage, PerspectiveMap, Point2, Raster, RoiMask,
};
use crate::roi::rasterize_roi;

pub const RASTER_MAGIC: &[u8; 4] = b"DMF1";
pub const RASTER_HEADER_LEN: usize = 12;

/// A decoded DMF1 payload, not yet interpreted.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterData {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl RasterData {
    fn widened(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Interprets the payload as a density map. Any negative value marks the
    /// map as a raw prediction.
    pub fn into_density(self) -> Result<DensityMap> {
        let values = self.widened();
        if values.iter().any(|v| *v < 0.0) {
            DensityMap::prediction(self.width, self.height, values)
        } else {
            DensityMap::new(self.width, self.height, values)
        }
    }

    pub fn into_perspective(self) -> Result<PerspectiveMap> {
        PerspectiveMap::new(self.width, self.height, self.widened())
    }

    /// Cells with value > 0.5 are inside.
    pub fn into_roi(self) -> Result<RoiMask> {
        let inside = self.values.iter().map(|&v| v > 0.5).collect();
        RoiMask::new(self.width, self.height, inside)
    }
}

pub fn encode_raster<R: Raster + ?Sized>(grid: &R) -> Result<Vec<u8>> {
    let (w, h) = (grid.width(), grid.height());
    if w == 0 || h == 0 {
        return Err(Error::validation(format!("cannot encode a {w}x{h} raster")));
    }
    let w32 = u32::try_from(w).map_err(|_| Error::validation("raster width exceeds u32"))?;
    let h32 = u32::try_from(h).map_err(|_| Error::validation("raster height exceeds u32"))?;
    let mut out = Vec::with_capacity(RASTER_HEADER_LEN + 4 * w * h);
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&w32.to_le_bytes());
    out.extend_from_slice(&h32.to_le_bytes());
    for &v in grid.cells() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<RasterData> {
    if bytes.len() < RASTER_HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("header needs {RASTER_HEADER_LEN} bytes"),
        });
    }
    if let Some(off) = (0..4).find(|&i| bytes[i] != RASTER_MAGIC[i]) {
        return Err(Error::Format {
            offset: off,
            message: "bad magic, expected DMF1".into(),
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 {
        return Err(Error::Format {
            offset: 4,
            message: "zero width".into(),
        });
    }
    if height == 0 {
        return Err(Error::Format {
            offset: 8,
            message: "zero height".into(),
        });
    }
    let payload = &bytes[RASTER_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Format {
            offset: 4,
            message: "dimensions overflow".into(),
        })?;
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RasterData {
        width,
        height,
        values,
    })
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes)
}

pub fn write_raster<R: Raster + ?Sized>(grid: &R, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_raster(grid)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_density(path: impl AsRef<Path>) -> Result<DensityMap> {
    read_raster(path)?.into_density()
}

pub fn read_perspective(path: impl AsRef<Path>) -> Result<PerspectiveMap> {
    read_raster(path)?.into_perspective()
}

#[derive(Deserialize)]
struct AnnotationFile {
    width: usize,
    height: usize,
    frames: Vec<AnnotatedFrame>,
}

pub fn annotations_from_json(text: &str) -> Result<DotAnnotations> {
    let raw: AnnotationFile = serde_json::from_str(text)?;
    DotAnnotations::new(raw.width, raw.height, raw.frames)
}

pub fn annotations_to_json(ann: &DotAnnotations) -> Result<String> {
    Ok(serde_json::to_string(ann)?)
}

pub fn parse_annotations(path: impl AsRef<Path>) -> Result<DotAnnotations> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    annotations_from_json(&text)
}

pub fn write_annotations(ann: &DotAnnotations, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, annotations_to_json(ann)?).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct RoiFile {
    roi: Vec<Point2>,
}

/// Reads an ROI given either as a JSON polygon or as a DMF1 mask raster.
pub fn read_roi(path: impl AsRef<Path>, width: usize, height: usize) -> Result<RoiMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mask = if bytes.starts_with(RASTER_MAGIC) {
        decode_raster(&bytes)?.into_roi()?
    } else {
        let file: RoiFile = serde_json::from_slice(&bytes)?;
        rasterize_roi(&file.roi, width, height)?
    };
    if mask.width() != width || mask.height() != height {
        return Err(Error::validation(format!(
            "ROI is {}x{}, frames are {width}x{height}",
            mask.width(),
            mask.height()
        )));
    }
    Ok(mask)
}

pub fn write_roi_polygon(polygon: &[Point2], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&RoiFile {
        roi: polygon.to_vec(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Encodes an image as binary 8-bit PGM (`P5`).
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos,
                message: "truncated PGM header".into(),
            });
        }
        fields.push((start, &bytes[start..pos]));
    }
    if fields[0].1 != b"P5" {
        return Err(Error::Format {
            offset: 0,
            message: "only binary PGM (P5) is supported".into(),
        });
    }
    let mut nums = [0usize; 3];
    for (k, (off, raw)) in fields[1..].iter().enumerate() {
        nums[k] = std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Format {
                offset: *off,
                message: "bad PGM header number".into(),
            })?;
    }
    let [width, height, maxval] = nums;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format {
            offset: fields[3].0,
            message: format!("unsupported maxval {maxval}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != width * height {
        return Err(Error::SizeMismatch {
            expected: width * height,
            found: payload.len(),
        });
    }
    let scale = maxval as f64;
    GrayImage::new(
        width,
        height,
        payload
            .iter()
            .map(|&b| (b as f64 / scale).min(1.0))
            .collect(),
    )
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// File stem used for per-frame outputs, e.g. `frame_000123`.
pub fn frame_stem(id: u64) -> String {
    format!("frame_{id:06}")
}

/// Parses the frame id out of a `frame_000123.ext` file name.
pub fn frame_id_from_path(path: &Path) -> Option<u64> {
    path.file_stem()?
        .to_str()?
        .strip_prefix("frame_")?
        .parse()
        .ok()
}

/// Lists `frame_*.{ext}` files in a directory, sorted by frame id.
pub fn list_frames(dir: impl AsRef<Path>, ext: &str) -> Result<Vec<(u64, std::path::PathBuf)>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(id) = frame_id_from_path(&path) {
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_two_by_two_sum() {
        let mut bytes = b"DMF1".to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(2u32.to_le_bytes());
        for v in [0.0f32, 0.0, 0.0, 1.0] {
            bytes.extend(v.to_le_bytes());
        }
        let map = decode_raster(&bytes).unwrap().into_density().unwrap();
        assert_eq!(map.sum(), 1.0);
        assert_eq!(encode_raster(&map).unwrap(), bytes);
    }

    #[test]
    fn zero_map_layout() {
        let bytes = encode_raster(&DensityMap::zeros(3, 3)).unwrap();
        assert_eq!(bytes.len(), 12 + 9 * 4);
        assert_eq!(&bytes[..4], b"DMF1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert!(bytes[12..].iter().all(|&b| b == 0));
    }

    #[test]
    fn raster_errors() {
        let mut bytes = b"DMF1".to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(2u32.to_le_bytes());
        bytes.extend([0u8; 12]);
        assert!(matches!(
            decode_raster(&bytes),
            Err(Error::SizeMismatch {
                expected: 16,
                found: 12
            })
        ));
        assert!(matches!(decode_raster(b"DMF"), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[2] = b'X';
        assert!(matches!(
            decode_raster(&bad),
            Err(Error::Format { offset: 2, .. })
        ));
    }

    #[test]
    fn zero_width_rejected_on_write() {
        struct Empty;
        impl Raster for Empty {
            fn width(&self) -> usize {
                0
            }
            fn height(&self) -> usize {
                3
            }
            fn cells(&self) -> &[f64] {
                &[]
            }
        }
        assert!(encode_raster(&Empty).is_err());
    }

    #[test]
    fn annotations_json() {
        let ann =
            annotations_from_json(r#"{"width":10,"height":8,"frames":[{"id":0,"points":[]}]}"#)
                .unwrap();
        assert_eq!(ann.frames.len(), 1);
        assert!(ann.frames[0].points.is_empty());

        let ann = annotations_from_json(
            r#"{"width":10,"height":8,"frames":[{"id":7,"points":[[1,2]]},{"id":3,"points":[[4.5,1],[2,2]]}]}"#,
        )
        .unwrap();
        assert_eq!(ann.frames[0].id, 3);
        assert_eq!(ann.frames[0].points[0], Point2::new(4.5, 1.0));
        assert_eq!(ann.frames[1].id, 7);

        let err = annotations_from_json(
            r#"{"width":10,"height":8,"frames":[{"id":1,"points":[[1,2]],"track_ids":[1,2]}]}"#,
        );
        assert!(matches!(err, Err(Error::Validation(_))));

        let back = annotations_from_json(&annotations_to_json(&ann).unwrap()).unwrap();
        assert_eq!(back, ann);
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 2, vec![0.0, 1.0, 0.5, 0.2, 0.8, 1.0]).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back.width(), 3);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert_eq!(encode_pgm(&back), encode_pgm(&img));
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn frame_stems() {
        assert_eq!(frame_stem(123), "frame_000123");
        assert_eq!(
            frame_id_from_path(Path::new("x/frame_000123.dmf")),
            Some(123)
        );
        assert_eq!(frame_id_from_path(Path::new("x/other.dmf")), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn raster_round_trip_is_bit_exact(
                (w, h, vals) in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
                    (Just(w), Just(h), proptest::collection::vec(-1e6f32..1e6f32, w * h))
                })
            ) {
                let map = DensityMap::prediction(w, h, vals.iter().map(|&v| v as f64).collect()).unwrap();
                let bytes = encode_raster(&map).unwrap();
                let back = decode_raster(&bytes).unwrap().into_density().unwrap();
                prop_assert_eq!(back.values(), map.values());
                prop_assert_eq!(encode_raster(&back).unwrap(), bytes);
            }

            #[test]
            fn annotation_json_round_trip_is_exact(
                pts in proptest::collection::vec((0.0f64..200.0, 0.0f64..150.0), 0..20)
            ) {
                let points = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
                let ann = DotAnnotations::new(200, 150, vec![AnnotatedFrame::new(4, points)]).unwrap();
                let back = annotations_from_json(&annotations_to_json(&ann).unwrap()).unwrap();
                prop_assert_eq!(back, ann);
            }
        }
    }
}
