use nalgebra::DMatrix;

use super::homography::Homography;
use crate::error::{Error, Result};
use crate::video::Frame;

/// Default canvas budget in pixels.
pub const DEFAULT_CANVAS_BUDGET: usize = 50_000_000;

const SNAP: f64 = 1e-9;
/// Corners within this distance of an integer do not grow the canvas.
const EXTENT_SNAP: f64 = 1e-3;

fn snap_to(v: f64, tol: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= tol {
        r
    } else {
        v
    }
}

fn snap(v: f64) -> f64 {
    snap_to(v, SNAP)
}

/// Panoramic canvas extent and the translation taking anchor coordinates onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pub offset: Homography,
    /// `offset ∘ anchored[k]` for every frame.
    pub composite: Vec<Homography>,
}

/// Integer bounding box of all warped frame corners.
pub fn compute_canvas(frames: &[Frame], anchored: &[Homography], budget: usize) -> Result<Canvas> {
    if frames.len() != anchored.len() || frames.is_empty() {
        return Err(Error::Dimension(format!(
            "{} frames but {} homographies",
            frames.len(),
            anchored.len()
        )));
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (f, h) in frames.iter().zip(anchored) {
        if !h.is_invertible() {
            return Err(Error::Degenerate("anchored homography is not invertible".into()));
        }
        let (xm, ym) = ((f.width() - 1) as f64, (f.height() - 1) as f64);
        for (x, y) in [(0.0, 0.0), (xm, 0.0), (0.0, ym), (xm, ym)] {
            let (u, v) = h.apply(x, y);
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::CanvasTooLarge {
                    pixels: usize::MAX,
                    budget,
                });
            }
            min_x = min_x.min(snap_to(u, EXTENT_SNAP));
            max_x = max_x.max(snap_to(u, EXTENT_SNAP));
            min_y = min_y.min(snap_to(v, EXTENT_SNAP));
            max_y = max_y.max(snap_to(v, EXTENT_SNAP));
        }
    }
    let (ox, oy) = (min_x.floor(), min_y.floor());
    let width = (max_x - ox).ceil() + 1.0;
    let height = (max_y - oy).ceil() + 1.0;
    let pixels = width * height;
    if pixels > budget as f64 {
        return Err(Error::CanvasTooLarge {
            pixels: if pixels >= usize::MAX as f64 {
                usize::MAX
            } else {
                pixels as usize
            },
            budget,
        });
    }
    let offset = Homography::translation(-ox, -oy);
    let composite = anchored
        .iter()
        .map(|h| offset.after(h))
        .collect::<Result<Vec<_>>>()?;
    Ok(Canvas {
        height: height as usize,
        width: width as usize,
        offset,
        composite,
    })
}

/// Pull every output pixel back through `pullback` and bilinearly sample `src`.
///
/// A source neighbour is required only when its interpolation weight is
/// nonzero, so exact integer positions need just one pixel. Output pixels
/// with any required neighbour outside `src` are unobserved and set to 0.
pub fn warp_plane(
    src: &DMatrix<f64>,
    pullback: &Homography,
    height: usize,
    width: usize,
) -> (DMatrix<f64>, Vec<bool>) {
    let (a, b) = src.shape();
    let mut out = DMatrix::zeros(height, width);
    let mut mask = vec![false; height * width];
    for j in 0..width {
        for i in 0..height {
            let (x, y) = pullback.apply(j as f64, i as f64);
            let (x, y) = (snap(x), snap(y));
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let x_hi = if fx > 0.0 { x0 + 1.0 } else { x0 };
            let y_hi = if fy > 0.0 { y0 + 1.0 } else { y0 };
            if x0 < 0.0 || y0 < 0.0 || x_hi > (b - 1) as f64 || y_hi > (a - 1) as f64 {
                continue;
            }
            let (c0, r0) = (x0 as usize, y0 as usize);
            let mut v = (1.0 - fx) * (1.0 - fy) * src[(r0, c0)];
            if fx > 0.0 {
                v += fx * (1.0 - fy) * src[(r0, c0 + 1)];
            }
            if fy > 0.0 {
                v += (1.0 - fx) * fy * src[(r0 + 1, c0)];
            }
            if fx > 0.0 && fy > 0.0 {
                v += fx * fy * src[(r0 + 1, c0 + 1)];
            }
            out[(i, j)] = v;
            mask[i + height * j] = true;
        }
    }
    (out, mask)
}

/// Warp a frame into a `height x width` canvas through `h` (frame → canvas).
pub fn warp_frame(f: &Frame, h: &Homography, height: usize, width: usize) -> Result<(DMatrix<f64>, Vec<bool>)> {
    Ok(warp_plane(f.as_matrix(), &h.inverse()?, height, width))
}
