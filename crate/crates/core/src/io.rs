//! Reading and writing frame sequences, homography files, numeric dumps and reports.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::registration::Homography;
use crate::video::{Frame, MaskTensor, VideoTensor};

const EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];
const DUMP_MAGIC: &[u8; 8] = b"PRPCADMP";
const DUMP_VERSION: u32 = 1;
const DTYPE_F64_LE: u32 = 1;

/// How colour frames are reduced to intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Rec. 601 luma; one sequence.
    #[default]
    Luminance,
    /// One sequence per colour channel.
    PerChannel,
}

fn ingestion(path: &Path, reason: impl ToString) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Files named by a directory (all supported images inside) or a glob pattern,
/// in natural filename order.
pub fn list_frame_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let root = Path::new(pattern);
    let mut files: Vec<PathBuf> = if root.is_dir() {
        fs::read_dir(root)
            .map_err(|e| ingestion(root, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && supported(p))
            .collect()
    } else {
        glob::glob(pattern)
            .map_err(|e| ingestion(root, e))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect()
    };
    if files.is_empty() {
        return Err(ingestion(root, "no frames match"));
    }
    files.sort_by(|a, b| natord::compare(&a.to_string_lossy(), &b.to_string_lossy()));
    Ok(files)
}

/// Intensity planes of one image, scaled to `[0, 1]` by bit depth.
fn decode(path: &Path, mode: ColorMode) -> Result<Vec<DMatrix<f64>>> {
    let img = image::open(path).map_err(|e| ingestion(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    const FULL: f64 = 65535.0;
    if !img.color().has_color() {
        let g = img.to_luma16();
        return Ok(vec![DMatrix::from_fn(h, w, |i, j| {
            g.get_pixel(j as u32, i as u32)[0] as f64 / FULL
        })]);
    }
    let rgb = img.to_rgb16();
    let channel = |c: usize| {
        DMatrix::from_fn(h, w, |i, j| rgb.get_pixel(j as u32, i as u32)[c] as f64 / FULL)
    };
    Ok(match mode {
        ColorMode::Luminance => {
            let (r, g, b) = (channel(0), channel(1), channel(2));
            vec![(r * 0.299 + g * 0.587 + b * 0.114).map(|v| v.clamp(0.0, 1.0))]
        }
        ColorMode::PerChannel => (0..3).map(channel).collect(),
    })
}

/// Load a sequence; the outer vector holds one frame list per channel.
pub fn load_frames_with(pattern: &str, mode: ColorMode) -> Result<Vec<Vec<Frame>>> {
    let files = list_frame_files(pattern)?;
    let mut channels: Vec<Vec<Frame>> = Vec::new();
    let mut size = None;
    for path in &files {
        let planes = decode(path, mode)?;
        let shape = (planes[0].nrows(), planes[0].ncols(), planes.len());
        match size {
            None => {
                size = Some(shape);
                channels = vec![Vec::with_capacity(files.len()); planes.len()];
            }
            Some(s) if s != shape => {
                return Err(ingestion(
                    path,
                    format!(
                        "frame is {}x{} with {} channel(s), expected {}x{} with {}",
                        shape.0, shape.1, shape.2, s.0, s.1, s.2
                    ),
                ));
            }
            Some(_) => {}
        }
        for (c, plane) in planes.into_iter().enumerate() {
            channels[c].push(Frame::new(plane).map_err(|e| ingestion(path, e))?);
        }
    }
    Ok(channels)
}

/// Load a sequence as luminance frames.
pub fn load_frames(pattern: &str) -> Result<Vec<Frame>> {
    Ok(load_frames_with(pattern, ColorMode::Luminance)?.remove(0))
}

/// Load binary masks (intensity above one half counts as set), column-major per frame.
pub fn load_masks(pattern: &str) -> Result<(usize, usize, Vec<Vec<bool>>)> {
    let frames = load_frames(pattern)?;
    let (a, b) = (frames[0].height(), frames[0].width());
    let masks = frames
        .iter()
        .map(|f| f.as_matrix().iter().map(|&v| v > 0.5).collect())
        .collect();
    Ok((a, b, masks))
}

fn to_gray8(plane: &DMatrix<f64>, map: impl Fn(f64) -> f64) -> GrayImage {
    let (h, w) = plane.shape();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = map(plane[(y as usize, x as usize)]).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

/// How a component is mapped to `[0, 1]` for display.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Visual {
    /// Values already in `[0, 1]`; clamped.
    Intensity,
    /// Signed values: `0.5 + v / (2 max|v|)` with the maximum over the whole sequence.
    Signed,
}

/// Write every frame of a video as `<prefix>_<k>.png` (1-based, zero-padded).
pub fn write_png_sequence(dir: &Path, prefix: &str, v: &VideoTensor, visual: Visual) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let peak = v.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let digits = v.frames().to_string().len().max(4);
    (0..v.frames())
        .map(|k| {
            let plane = v.plane(k);
            let img = match visual {
                Visual::Intensity => to_gray8(&plane, |x| x),
                Visual::Signed if peak > 0.0 => to_gray8(&plane, |x| 0.5 + x / (2.0 * peak)),
                Visual::Signed => to_gray8(&plane, |_| 0.5),
            };
            let path = dir.join(format!("{prefix}_{:0digits$}.png", k + 1));
            img.save(&path).map_err(|e| ingestion(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Write every frame as a 16-bit PNG, clamped to `[0, 1]`.
pub fn write_png16_sequence(dir: &Path, prefix: &str, v: &VideoTensor) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let digits = v.frames().to_string().len().max(4);
    (0..v.frames())
        .map(|k| {
            let path = dir.join(format!("{prefix}_{:0digits$}.png", k + 1));
            write_png16(&path, &v.plane(k))?;
            Ok(path)
        })
        .collect()
}

/// Write a single plane as a 16-bit PNG, clamped to `[0, 1]`.
pub fn write_png16(path: &Path, plane: &DMatrix<f64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let (h, w) = plane.shape();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = plane[(y as usize, x as usize)].clamp(0.0, 1.0);
        Luma([(v * 65535.0).round() as u16])
    });
    img.save(path).map_err(|e| ingestion(path, e))
}

/// Write a single plane as an 8-bit PNG.
pub fn write_png(path: &Path, plane: &DMatrix<f64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    DynamicImage::ImageLuma8(to_gray8(plane, |x| x))
        .save(path)
        .map_err(|e| ingestion(path, e))
}

/// Write per-frame masks as black/white PNGs.
pub fn write_mask_sequence(dir: &Path, prefix: &str, mask: &MaskTensor) -> Result<Vec<PathBuf>> {
    let (m, n, p) = mask.shape();
    let planes: Vec<DMatrix<f64>> = (0..p)
        .map(|k| {
            let f = mask.frame(k);
            DMatrix::from_fn(m, n, |i, j| if f[i + m * j] { 1.0 } else { 0.0 })
        })
        .collect();
    write_png_sequence(dir, prefix, &VideoTensor::from_planes(&planes)?, Visual::Intensity)
}

/// Write homographies, one per line as 9 row-major reals.
pub fn write_homographies(path: &Path, hs: &[Homography]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for h in hs {
        let row: Vec<String> = h.to_row_major().iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_homographies(text: &str) -> Result<Vec<Homography>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", idx + 1)))?;
            let values: [f64; 9] = values.try_into().map_err(|v: Vec<f64>| {
                Error::Format(format!("line {}: expected 9 values, found {}", idx + 1, v.len()))
            })?;
            if values.iter().any(|v| !v.is_finite()) || (values[8] - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!(
                    "line {}: entries must be finite with H33 = 1",
                    idx + 1
                )));
            }
            Homography::from_row_major(&values)
        })
        .collect()
}

pub fn read_homographies(path: &Path) -> Result<Vec<Homography>> {
    let text = fs::read_to_string(path).map_err(|e| ingestion(path, e))?;
    parse_homographies(&text).map_err(|e| ingestion(path, e))
}

/// Write a flat little-endian `f64` array with its dimensions.
///
/// Layout: magic `PRPCADMP`, `u32` version, `u32` dtype, `u32` ndim, `u32` reserved,
/// `ndim` `u64` dimensions, then the data.
pub fn write_dump(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::Dimension(format!(
            "dims {dims:?} describe {count} values, got {}",
            data.len()
        )));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(DUMP_MAGIC)?;
    for word in [DUMP_VERSION, DTYPE_F64_LE, dims.len() as u32, 0] {
        out.write_all(&word.to_le_bytes())?;
    }
    for &d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ingestion(path, e))?;
    let bad = |reason: &str| ingestion(path, reason);
    if bytes.len() < 24 || &bytes[..8] != DUMP_MAGIC {
        return Err(bad("not a numeric dump"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(8) != DUMP_VERSION || word(12) != DTYPE_F64_LE {
        return Err(bad("unsupported dump version or dtype"));
    }
    let ndim = word(16) as usize;
    let header = 24 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(bytes[24 + 8 * i..32 + 8 * i].try_into().unwrap()) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if count.and_then(|c| c.checked_mul(8)).map(|b| b + header) != Some(bytes.len()) {
        return Err(bad("data length does not match dimensions"));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

/// Dump a video with dimensions `[m, n, p]`, frames column-major.
pub fn write_video_dump(path: &Path, v: &VideoTensor) -> Result<()> {
    let (m, n, p) = v.shape();
    write_dump(path, &[m, n, p], v.as_slice())
}

pub fn read_video_dump(path: &Path) -> Result<VideoTensor> {
    let (dims, data) = read_dump(path)?;
    let [m, n, p] = dims[..] else {
        return Err(ingestion(path, format!("expected 3 dimensions, found {}", dims.len())));
    };
    VideoTensor::from_matrix(m, n, DMatrix::from_vec(m * n, p, data))
}

/// Write `metrics.txt` (key = value) and `metrics.json` into `dir`.
pub fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.txt"), report.to_key_value())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("metrics.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn pgm_full_scale_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        GrayImage::from_fn(3, 2, |x, _| Luma([if x == 0 { 255 } else { 0 }]))
            .save(&path)
            .unwrap();
        let frames = load_frames(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].get(1, 0), 1.0);
        assert_eq!(frames[0].get(1, 2), 0.0);
    }

    #[test]
    fn png16_full_scale_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(2, 2, |x, y| Luma([if x + y == 0 { 65535 } else { 32768 }]))
            .save(&path)
            .unwrap();
        let f = &load_frames(path.to_str().unwrap()).unwrap()[0];
        assert_eq!(f.get(0, 0), 1.0);
        assert!((f.get(1, 1) - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn natural_order_and_size_check() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("f10.png", 10u8), ("f2.png", 2), ("f1.png", 1)] {
            GrayImage::from_pixel(2, 2, Luma([v])).save(dir.path().join(name)).unwrap();
        }
        let frames = load_frames(dir.path().to_str().unwrap()).unwrap();
        let first: Vec<f64> = frames.iter().map(|f| (f.get(0, 0) * 255.0).round()).collect();
        assert_eq!(first, vec![1.0, 2.0, 10.0]);
        GrayImage::from_pixel(3, 2, Luma([0])).save(dir.path().join("f11.png")).unwrap();
        let err = load_frames(dir.path().to_str().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { ref path, .. } if path.ends_with("f11.png")), "{err}");
    }

    #[test]
    fn colour_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        ImageBuffer::<Rgb<u8>, Vec<u8>>::from_pixel(2, 1, Rgb([255, 0, 0])).save(&path).unwrap();
        let lum = load_frames(path.to_str().unwrap()).unwrap();
        assert!((lum[0].get(0, 0) - 0.299).abs() < 1e-12);
        let per = load_frames_with(path.to_str().unwrap(), ColorMode::PerChannel).unwrap();
        assert_eq!(per.len(), 3);
        assert_eq!(per[0][0].get(0, 1), 1.0);
        assert_eq!(per[2][0].get(0, 1), 0.0);
    }

    #[test]
    fn missing_input_is_an_ingestion_error() {
        assert!(matches!(
            load_frames("/nonexistent/dir/*.png"),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn homography_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.txt");
        let hs = vec![
            Homography::identity(),
            Homography::translation(-2.5, 1.0 / 3.0),
            Homography::from_row_major(&[1.01, 0.02, 3.0, -0.01, 0.99, -4.0, 1e-4, -2e-4, 1.0]).unwrap(),
        ];
        write_homographies(&path, &hs).unwrap();
        assert_eq!(read_homographies(&path).unwrap(), hs);
        assert!(parse_homographies("1 0 0 0 1 0 0 0 2").is_err());
        assert!(parse_homographies("1 0 0 0 1 0 0 0").is_err());
    }

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.1).sin() - 0.3).collect();
        let v = VideoTensor::from_matrix(2, 3, DMatrix::from_vec(6, 4, data)).unwrap();
        write_video_dump(&path, &v).unwrap();
        let back = read_video_dump(&path).unwrap();
        assert_eq!(back.shape(), (2, 3, 4));
        for (a, b) in back.as_slice().iter().zip(v.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(read_dump(&path).is_err());
    }

    #[test]
    fn signed_visualization_is_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let v = VideoTensor::from_matrix(1, 3, DMatrix::from_vec(3, 1, vec![-2.0, 0.0, 2.0])).unwrap();
        let paths = write_png_sequence(dir.path(), "s", &v, Visual::Signed).unwrap();
        let img = image::open(&paths[0]).unwrap().to_luma8();
        let px: Vec<u8> = (0..3).map(|x| img.get_pixel(x, 0)[0]).collect();
        assert_eq!(px, vec![0, 128, 255]);
    }

    #[test]
    fn png16_sequence_round_trips_to_sixteen_bits() {
        let dir = tempfile::tempdir().unwrap();
        let v = VideoTensor::from_planes(&[DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 / 11.0)]).unwrap();
        write_png16_sequence(dir.path(), "f", &v).unwrap();
        let back = load_frames(dir.path().to_str().unwrap()).unwrap();
        for (a, b) in back[0].as_matrix().iter().zip(v.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}
