//! Frame registration onto a common panoramic canvas.
//!
//! Consecutive frames are matched, a homography is fitted robustly per pair,
//! the pairwise maps are chained into maps to the anchor frame, and every
//! frame is warped onto the bounding canvas. The canvas-sized frames and
//! their coverage masks form `Y` and `M`.

mod features;
mod homography;
mod warp;

pub use features::{detect_and_match, detect_corners, Corner};
pub use homography::{
    anchor_index, compose_to_anchor, estimate_homography_dlt, ransac_homography, symmetric_error,
    Correspondence, Homography, RansacConfig, RansacFit,
};
pub use warp::{compute_canvas, warp_frame, warp_plane, Canvas, DEFAULT_CANVAS_BUDGET};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::video::{Frame, MaskTensor, VideoTensor};

/// Settings for internal (feature-based) registration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub max_features: usize,
    pub ransac: RansacConfig,
    pub canvas_budget: usize,
    /// Tighter threshold for the final refit of each pairwise homography.
    pub refine_px: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            max_features: 500,
            ransac: RansacConfig::default(),
            canvas_budget: DEFAULT_CANVAS_BUDGET,
            refine_px: 0.5,
        }
    }
}

/// Frames warped onto the canvas with their coverage mask.
#[derive(Debug, Clone)]
pub struct RegisteredVideo {
    pub frames: VideoTensor,
    pub mask: MaskTensor,
    /// Per-frame maps into anchor coordinates, before the canvas offset.
    pub anchored: Vec<Homography>,
    /// Per-frame maps into canvas coordinates.
    pub composite: Vec<Homography>,
    pub anchor: usize,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl RegisteredVideo {
    pub fn canvas_shape(&self) -> (usize, usize) {
        (self.frames.height(), self.frames.width())
    }
}

fn common_size(frames: &[Frame]) -> Result<(usize, usize)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Argument("registration needs at least one frame".into()))?;
    let size = (first.height(), first.width());
    for (k, f) in frames.iter().enumerate() {
        if (f.height(), f.width()) != size {
            return Err(Error::Dimension(format!(
                "frame {} is {}x{}, frame 1 is {}x{}",
                k + 1,
                f.height(),
                f.width(),
                size.0,
                size.1
            )));
        }
    }
    Ok(size)
}

/// Drop the worst inlier and refit until all remaining agree to within `tight` pixels.
fn refine(corr: &[Correspondence], fit: RansacFit, tight: f64) -> Homography {
    let mut set: Vec<Correspondence> = fit.inliers.iter().map(|&i| corr[i]).collect();
    let floor = 4.max(set.len() / 2);
    let mut h = fit.homography;
    while set.len() > floor {
        let Ok(h_inv) = h.inverse() else { break };
        let (worst, err) = set
            .iter()
            .map(|c| symmetric_error(&h, &h_inv, c))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty set");
        if err <= tight {
            break;
        }
        set.swap_remove(worst);
        match estimate_homography_dlt(&set) {
            Ok(next) => h = next,
            Err(_) => break,
        }
    }
    h
}

/// Pairwise homographies `k → k+1` from features and RANSAC.
pub fn estimate_pairwise(frames: &[Frame], cfg: &RegistrationConfig) -> Result<Vec<Homography>> {
    let pairs: Vec<(usize, &[Frame])> = frames.windows(2).enumerate().collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .into_iter()
            .map(|(k, w)| {
                scope.spawn(move || {
                    let corr = detect_and_match(&w[0], &w[1], cfg.max_features)?;
                    let ransac = RansacConfig {
                        seed: cfg.ransac.seed.wrapping_add(k as u64),
                        ..cfg.ransac
                    };
                    let fit = ransac_homography(&corr, &ransac)?;
                    Ok(refine(&corr, fit, cfg.refine_px))
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(k, h)| {
                h.join()
                    .expect("registration worker panicked")
                    .map_err(|e: Error| e.with_pair(k + 1, k + 2))
            })
            .collect()
    })
}

/// Warp frames with known anchored homographies (frame → anchor coordinates).
pub fn register_with_homographies(
    frames: &[Frame],
    anchored: Vec<Homography>,
    anchor: usize,
    budget: usize,
) -> Result<RegisteredVideo> {
    let (a, b) = common_size(frames)?;
    if anchor >= frames.len() {
        return Err(Error::Argument(format!("anchor {anchor} out of range")));
    }
    let canvas = compute_canvas(frames, &anchored, budget)?;
    let (m, n) = (canvas.height, canvas.width);
    let mut planes = Vec::with_capacity(frames.len());
    let mut masks = Vec::with_capacity(frames.len());
    for (f, h) in frames.iter().zip(&canvas.composite) {
        let (plane, mask) = warp_frame(f, h, m, n)?;
        planes.push(plane);
        masks.push(mask);
    }
    Ok(RegisteredVideo {
        frames: VideoTensor::from_planes(&planes)?,
        mask: MaskTensor::from_frame_masks(m, n, &masks)?,
        anchored,
        composite: canvas.composite,
        anchor,
        frame_height: a,
        frame_width: b,
    })
}

/// Static camera: every frame already shares the anchor perspective.
pub fn register_static(frames: &[Frame]) -> Result<RegisteredVideo> {
    let anchored = vec![Homography::identity(); frames.len()];
    register_with_homographies(frames, anchored, anchor_index(frames.len()), DEFAULT_CANVAS_BUDGET)
}

/// Feature-based registration of consecutive frames to the middle anchor.
pub fn register_video(frames: &[Frame], cfg: &RegistrationConfig) -> Result<RegisteredVideo> {
    common_size(frames)?;
    let anchor = anchor_index(frames.len());
    let pairwise = estimate_pairwise(frames, cfg)?;
    let anchored = compose_to_anchor(&pairwise, anchor)?;
    register_with_homographies(frames, anchored, anchor, cfg.canvas_budget)
}

/// Map canvas-sized components back to each frame's original perspective.
pub fn unregister(components: &[&VideoTensor], reg: &RegisteredVideo) -> Result<Vec<VideoTensor>> {
    let (m, n) = reg.canvas_shape();
    let p = reg.composite.len();
    components
        .iter()
        .map(|c| {
            if c.shape() != (m, n, p) {
                return Err(Error::Dimension(format!(
                    "component is {:?}, canvas is {m}x{n}x{p}",
                    c.shape()
                )));
            }
            let planes: Vec<DMatrix<f64>> = (0..p)
                .map(|k| warp_plane(&c.plane(k), &reg.composite[k], reg.frame_height, reg.frame_width).0)
                .collect();
            VideoTensor::from_planes(&planes)
        })
        .collect()
}

/// Per-pixel median over the frames observing it; 0 where nothing does.
pub fn median_panorama(frames: &VideoTensor, mask: &MaskTensor) -> Result<DMatrix<f64>> {
    let (m, n, p) = frames.shape();
    if mask.shape() != (m, n, p) {
        return Err(Error::Dimension("mask and frames differ in shape".into()));
    }
    let data = frames.as_matrix();
    let mut out = DMatrix::zeros(m, n);
    let mut values = Vec::with_capacity(p);
    for r in 0..m * n {
        values.clear();
        values.extend((0..p).filter(|&k| mask.frame(k)[r]).map(|k| data[(r, k)]));
        if values.is_empty() {
            continue;
        }
        values.sort_by(f64::total_cmp);
        let mid = values.len() / 2;
        out[(r % m, r / m)] = if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        };
    }
    Ok(out)
}
