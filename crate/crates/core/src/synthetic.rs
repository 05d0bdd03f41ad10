//! Synthetic panning scenes with exact ground truth.
//!
//! A static textured panorama is viewed through a window that moves by an
//! integer number of pixels per frame, so the true registration is a pure
//! translation. A smooth disk moves across the panorama as the foreground.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ForegroundLabels;
use crate::registration::{anchor_index, Homography};
use crate::video::{Frame, MaskTensor, VideoTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Window motion per frame, in pixels (columns, rows).
    pub pan: (i64, i64),
    pub blob_radius: f64,
    /// Blob centre in panorama coordinates `(x, y)` at the first frame.
    pub blob_start: (f64, f64),
    /// Blob motion per frame in panorama coordinates.
    pub blob_velocity: (f64, f64),
    pub blob_intensity: f64,
    pub texture_seed: u64,
}

impl SceneConfig {
    /// A `height x width x frames` pan scene with a blob sweeping across the view
    /// in the pan direction, so it never lingers over one panorama location.
    pub fn panning(height: usize, width: usize, frames: usize, pan_x: i64, seed: u64) -> Self {
        let radius = (height.min(width) as f64 / 10.0).max(2.0);
        let (near, far) = (radius + 1.0, width as f64 - radius - 2.0);
        let steps = frames.saturating_sub(1).max(1) as f64;
        let (x0, x1) = if pan_x >= 0 { (near, far) } else { (far, near) };
        let start_offset = if pan_x >= 0 {
            0.0
        } else {
            (frames.saturating_sub(1) as i64 * -pan_x) as f64
        };
        SceneConfig {
            height,
            width,
            frames,
            pan: (pan_x, 0),
            blob_radius: radius,
            blob_start: (start_offset + x0, height as f64 * 0.45),
            blob_velocity: (pan_x as f64 + (x1 - x0) / steps, 0.2),
            blob_intensity: 0.95,
            texture_seed: seed,
        }
    }
}

/// Everything known about a synthetic clip.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Clean frames, blob included.
    pub clean: VideoTensor,
    pub foreground: ForegroundLabels,
    /// Exact maps from each frame into anchor-frame coordinates.
    pub homographies: Option<Vec<Homography>>,
    /// Clean frames without the blob.
    pub background: Option<VideoTensor>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
    pub panorama: DMatrix<f64>,
    pub anchor: usize,
    pub foreground_mask: MaskTensor,
}

/// Random rectangles of random shade, with a gentle shading ramp on top.
fn texture(height: usize, width: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts = |len: usize| {
        let mut edges = vec![0usize];
        while *edges.last().unwrap() < len {
            let step = rng.random_range(3..9);
            edges.push(edges.last().unwrap() + step);
        }
        edges
    };
    let rows = cuts(height);
    let cols = cuts(width);
    let shades: Vec<f64> = (0..rows.len() * cols.len())
        .map(|_| rng.random_range(0.3..0.5))
        .collect();
    DMatrix::from_fn(height, width, |i, j| {
        let ri = rows.partition_point(|&e| e <= i) - 1;
        let cj = cols.partition_point(|&e| e <= j) - 1;
        let ramp = 0.1 * (i as f64 / height as f64 + j as f64 / width as f64) / 2.0;
        shades[ri * cols.len() + cj] + ramp
    })
}

/// Window offsets `(x, y)` of every frame inside the panorama.
fn offsets(cfg: &SceneConfig) -> Vec<(usize, usize)> {
    let p = cfg.frames as i64;
    let axis = |pan: i64, k: i64| -> usize {
        if pan >= 0 {
            (k * pan) as usize
        } else {
            ((p - 1 - k) * -pan) as usize
        }
    };
    (0..p).map(|k| (axis(cfg.pan.0, k), axis(cfg.pan.1, k))).collect()
}

pub fn make_synthetic_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    let (a, b, p) = (cfg.height, cfg.width, cfg.frames);
    if a == 0 || b == 0 || p == 0 {
        return Err(Error::Configuration("scene must have positive size".into()));
    }
    if !(cfg.blob_radius > 0.0) || !(0.0..=1.0).contains(&cfg.blob_intensity) {
        return Err(Error::Configuration("blob radius must be positive and intensity in [0, 1]".into()));
    }
    let span = |pan: i64| (p - 1) * pan.unsigned_abs() as usize;
    let (pano_h, pano_w) = (a + span(cfg.pan.1), b + span(cfg.pan.0));
    let panorama = texture(pano_h, pano_w, cfg.texture_seed);
    let offs = offsets(cfg);
    let anchor = anchor_index(p);
    let r = cfg.blob_radius;

    let mut clean = Vec::with_capacity(p);
    let mut background = Vec::with_capacity(p);
    let mut labels = Vec::with_capacity(p);
    for (k, &(ox, oy)) in offs.iter().enumerate() {
        let cx = cfg.blob_start.0 + k as f64 * cfg.blob_velocity.0 - ox as f64;
        let cy = cfg.blob_start.1 + k as f64 * cfg.blob_velocity.1 - oy as f64;
        if cx - r < 0.0 || cy - r < 0.0 || cx + r > (b - 1) as f64 || cy + r > (a - 1) as f64 {
            return Err(Error::Configuration(format!(
                "blob leaves the view of frame {}",
                k + 1
            )));
        }
        let bg = DMatrix::from_fn(a, b, |i, j| panorama[(i + oy, j + ox)]);
        let mut fg_mask = vec![false; a * b];
        let mut frame = bg.clone();
        for j in 0..b {
            for i in 0..a {
                let d2 = ((j as f64 - cx).powi(2) + (i as f64 - cy).powi(2)) / (r * r);
                if d2 <= 1.0 {
                    frame[(i, j)] = cfg.blob_intensity * (0.85 + 0.15 * (1.0 - d2));
                    fg_mask[i + a * j] = true;
                }
            }
        }
        clean.push(frame);
        background.push(bg);
        labels.push(fg_mask);
    }
    let homographies = offs
        .iter()
        .map(|&(ox, oy)| {
            Homography::translation(
                ox as f64 - offs[anchor].0 as f64,
                oy as f64 - offs[anchor].1 as f64,
            )
        })
        .collect();
    let frames = clean
        .iter()
        .map(|f| Frame::new(f.clone()))
        .collect::<Result<Vec<_>>>()?;
    let foreground_mask = MaskTensor::from_frame_masks(a, b, &labels)?;
    Ok(SyntheticScene {
        frames,
        truth: GroundTruth {
            clean: VideoTensor::from_planes(&clean)?,
            foreground: ForegroundLabels::from_mask(&foreground_mask),
            homographies: Some(homographies),
            background: Some(VideoTensor::from_planes(&background)?),
        },
        panorama,
        anchor,
        foreground_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::{median_panorama, register_with_homographies, DEFAULT_CANVAS_BUDGET};

    #[test]
    fn zero_pan_is_static() {
        let cfg = SceneConfig::panning(24, 24, 5, 0, 1);
        let scene = make_synthetic_scene(&cfg).unwrap();
        for h in scene.truth.homographies.unwrap() {
            assert_eq!(h, Homography::identity());
        }
    }

    #[test]
    fn pan_geometry() {
        let cfg = SceneConfig::panning(32, 40, 20, 3, 2);
        let scene = make_synthetic_scene(&cfg).unwrap();
        assert_eq!(scene.panorama.ncols(), 40 + 57);
        assert_eq!(scene.panorama.nrows(), 32);
        let neg = make_synthetic_scene(&SceneConfig::panning(32, 40, 20, -3, 2)).unwrap();
        assert_eq!(neg.panorama.ncols(), 97);
    }

    #[test]
    fn escaping_blob_is_rejected() {
        let mut cfg = SceneConfig::panning(20, 20, 10, 2, 3);
        cfg.blob_velocity = (10.0, 0.0);
        assert!(matches!(make_synthetic_scene(&cfg), Err(Error::Configuration(_))));
    }

    #[test]
    fn deterministic() {
        let cfg = SceneConfig::panning(20, 30, 6, 1, 4);
        let a = make_synthetic_scene(&cfg).unwrap();
        let b = make_synthetic_scene(&cfg).unwrap();
        assert_eq!(a.truth.clean, b.truth.clean);
    }

    #[test]
    fn median_of_true_registration_recovers_background() {
        let cfg = SceneConfig::panning(24, 30, 8, 2, 5);
        let scene = make_synthetic_scene(&cfg).unwrap();
        let reg = register_with_homographies(
            &scene.frames,
            scene.truth.homographies.clone().unwrap(),
            scene.anchor,
            DEFAULT_CANVAS_BUDGET,
        )
        .unwrap();
        let pano = median_panorama(&reg.frames, &reg.mask).unwrap();
        assert_eq!(pano.shape(), scene.panorama.shape());
        // Panorama pixels the blob never touches.
        let (m, _) = pano.shape();
        let mut touched = vec![false; pano.len()];
        let offs = offsets(&cfg);
        for (k, &(ox, oy)) in offs.iter().enumerate() {
            let lab = scene.foreground_mask.frame(k);
            for (r, &fg) in lab.iter().enumerate() {
                if fg {
                    let (i, j) = (r % cfg.height + oy, r / cfg.height + ox);
                    touched[i + m * j] = true;
                }
            }
        }
        let mut checked = 0;
        for (idx, &t) in touched.iter().enumerate() {
            if !t {
                assert!((pano[(idx % m, idx / m)] - scene.panorama[(idx % m, idx / m)]).abs() <= 1e-6);
                checked += 1;
            }
        }
        assert!(checked > pano.len() / 2);
    }
}
