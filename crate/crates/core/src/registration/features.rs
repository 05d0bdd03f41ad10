//! Harris corners with normalized intensity-patch descriptors.

use nalgebra::DMatrix;

use super::homography::Correspondence;
use crate::error::{Error, Result};
use crate::video::Frame;

const HARRIS_K: f64 = 0.04;
const PATCH_RADIUS: usize = 5;
const NMS_RADIUS: usize = 2;
const RATIO: f64 = 0.8;

/// A detected corner at subpixel position `(x, y) = (column, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    row: usize,
    col: usize,
}

fn harris_response(img: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b) = img.shape();
    let mut gx = DMatrix::zeros(a, b);
    let mut gy = DMatrix::zeros(a, b);
    for j in 1..b.saturating_sub(1) {
        for i in 1..a.saturating_sub(1) {
            let p = |di: usize, dj: usize| img[(i + di - 1, j + dj - 1)];
            gx[(i, j)] = (p(0, 2) + 2.0 * p(1, 2) + p(2, 2) - p(0, 0) - 2.0 * p(1, 0) - p(2, 0)) / 8.0;
            gy[(i, j)] = (p(2, 0) + 2.0 * p(2, 1) + p(2, 2) - p(0, 0) - 2.0 * p(0, 1) - p(0, 2)) / 8.0;
        }
    }
    // Gaussian window, sigma 1, radius 2.
    let kernel: Vec<f64> = (-2i32..=2).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
    let mut out = DMatrix::zeros(a, b);
    for j in 2..b.saturating_sub(2) {
        for i in 2..a.saturating_sub(2) {
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for (dj, kj) in kernel.iter().enumerate() {
                for (di, ki) in kernel.iter().enumerate() {
                    let (ii, jj) = (i + di - 2, j + dj - 2);
                    let w = ki * kj;
                    let (x, y) = (gx[(ii, jj)], gy[(ii, jj)]);
                    sxx += w * x * x;
                    syy += w * y * y;
                    sxy += w * x * y;
                }
            }
            out[(i, j)] = sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy).powi(2);
        }
    }
    out
}

/// Quadratic peak offset from three samples, clamped to half a pixel.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// 3x3 median with edge replication; suppresses impulse noise before detection.
fn median3(img: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b) = img.shape();
    let mut window = [0.0; 9];
    DMatrix::from_fn(a, b, |i, j| {
        let mut n = 0;
        for dj in [-1i64, 0, 1] {
            for di in [-1i64, 0, 1] {
                let ii = (i as i64 + di).clamp(0, a as i64 - 1) as usize;
                let jj = (j as i64 + dj).clamp(0, b as i64 - 1) as usize;
                window[n] = img[(ii, jj)];
                n += 1;
            }
        }
        window.sort_by(f64::total_cmp);
        window[4]
    })
}

/// Up to `max_features` strongest non-maximum-suppressed Harris corners.
pub fn detect_corners(frame: &Frame, max_features: usize) -> Vec<Corner> {
    corners_in(&median3(frame.as_matrix()), max_features)
}

fn corners_in(img: &DMatrix<f64>, max_features: usize) -> Vec<Corner> {
    let (a, b) = img.shape();
    let border = PATCH_RADIUS.max(NMS_RADIUS + 2);
    if a <= 2 * border || b <= 2 * border {
        return Vec::new();
    }
    let r = harris_response(img);
    let peak = r.max();
    if !(peak > 1e-12) {
        return Vec::new();
    }
    let floor = 1e-4 * peak;
    let mut corners = Vec::new();
    for j in border..b - border {
        for i in border..a - border {
            let v = r[(i, j)];
            if v <= floor {
                continue;
            }
            let mut is_max = true;
            'nms: for jj in j - NMS_RADIUS..=j + NMS_RADIUS {
                for ii in i - NMS_RADIUS..=i + NMS_RADIUS {
                    let q = r[(ii, jj)];
                    if q > v || (q == v && (jj, ii) < (j, i)) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                let dx = parabolic_offset(r[(i, j - 1)], v, r[(i, j + 1)]);
                let dy = parabolic_offset(r[(i - 1, j)], v, r[(i + 1, j)]);
                corners.push(Corner {
                    x: j as f64 + dx,
                    y: i as f64 + dy,
                    response: v,
                    row: i,
                    col: j,
                });
            }
        }
    }
    corners.sort_by(|p, q| {
        q.response
            .total_cmp(&p.response)
            .then((p.col, p.row).cmp(&(q.col, q.row)))
    });
    corners.truncate(max_features);
    corners
}

/// Mean-subtracted, unit-norm patch around each corner; `None` for flat patches.
fn describe(img: &DMatrix<f64>, corners: &[Corner]) -> Vec<Option<Vec<f64>>> {
    let r = PATCH_RADIUS;
    corners
        .iter()
        .map(|c| {
            let mut patch: Vec<f64> = (c.col - r..=c.col + r)
                .flat_map(|j| (c.row - r..=c.row + r).map(move |i| (i, j)))
                .map(|(i, j)| img[(i, j)])
                .collect();
            let mean = patch.iter().sum::<f64>() / patch.len() as f64;
            patch.iter_mut().for_each(|v| *v -= mean);
            let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                return None;
            }
            patch.iter_mut().for_each(|v| *v /= norm);
            Some(patch)
        })
        .collect()
}

/// Best and second-best squared distances from `d` into `pool`.
fn nearest(d: &[f64], pool: &[Option<Vec<f64>>]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for (idx, cand) in pool.iter().enumerate() {
        let Some(c) = cand else { continue };
        let dist: f64 = d.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
        match best {
            Some((_, b)) if dist >= b => second = second.min(dist),
            _ => {
                if let Some((_, b)) = best {
                    second = second.min(b);
                }
                best = Some((idx, dist));
            }
        }
    }
    best.map(|(i, b)| (i, b, second))
}

/// Putative correspondences from `a` to `b` by mutual nearest neighbours with a ratio test.
pub fn detect_and_match(a: &Frame, b: &Frame, max_features: usize) -> Result<Vec<Correspondence>> {
    if a.height() == 0 || a.width() == 0 || b.height() == 0 || b.width() == 0 {
        return Err(Error::Dimension("frames must be nonempty".into()));
    }
    let (fa, fb) = (median3(a.as_matrix()), median3(b.as_matrix()));
    let ca = corners_in(&fa, max_features);
    let cb = corners_in(&fb, max_features);
    let da = describe(&fa, &ca);
    let db = describe(&fb, &cb);

    let mut out = Vec::new();
    for (ia, desc) in da.iter().enumerate() {
        let Some(desc) = desc else { continue };
        let Some((ib, best, second)) = nearest(desc, &db) else {
            continue;
        };
        // Squared distances, so the ratio is squared too.
        if second.is_finite() && best >= RATIO * RATIO * second {
            continue;
        }
        let back = db[ib].as_ref().and_then(|d| nearest(d, &da));
        if back.map(|(i, _, _)| i) != Some(ia) {
            continue;
        }
        out.push(Correspondence::new([ca[ia].x, ca[ia].y], [cb[ib].x, cb[ib].y]));
    }
    if out.len() < 4 {
        return Err(Error::InsufficientFeatures {
            found: out.len(),
            pair: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Checkerboard with random cell sizes so corners are locally distinct.
    fn irregular_checkerboard(a: usize, b: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cuts = |len: usize| {
            let mut edges = vec![0usize];
            while *edges.last().unwrap() < len {
                let step = rng.random_range(4..11);
                edges.push(edges.last().unwrap() + step);
            }
            edges
        };
        let rows = cuts(a);
        let cols = cuts(b);
        let shade: Vec<f64> = (0..rows.len() * cols.len())
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        DMatrix::from_fn(a, b, |i, j| {
            let ri = rows.iter().rposition(|&e| e <= i).unwrap();
            let cj = cols.iter().rposition(|&e| e <= j).unwrap();
            shade[ri * cols.len() + cj]
        })
    }

    #[test]
    fn identical_frames_match_in_place() {
        let img = Frame::new(irregular_checkerboard(60, 80, 1)).unwrap();
        let corr = detect_and_match(&img, &img, 300).unwrap();
        assert!(corr.len() >= 4);
        for c in corr {
            let d = ((c.src[0] - c.dst[0]).powi(2) + (c.src[1] - c.dst[1]).powi(2)).sqrt();
            assert!(d <= 0.5);
        }
    }

    #[test]
    fn shifted_checkerboard_median_displacement() {
        let big = irregular_checkerboard(60, 90, 2);
        let a = Frame::new(big.columns(0, 80).into_owned()).unwrap();
        // Content moves 5 px to the right in the second frame.
        let b = Frame::new(DMatrix::from_fn(60, 80, |i, j| {
            if j >= 5 {
                big[(i, j - 5)]
            } else {
                big[(i, 85 + j)]
            }
        }))
        .unwrap();
        let corr = detect_and_match(&a, &b, 300).unwrap();
        let mut dx: Vec<f64> = corr.iter().map(|c| c.dst[0] - c.src[0]).collect();
        dx.sort_by(f64::total_cmp);
        let median = dx[dx.len() / 2];
        assert!((median - 5.0).abs() <= 1.0, "median {median}");
    }

    #[test]
    fn flat_frames_have_no_features() {
        let f = Frame::constant(40, 40, 0.5).unwrap();
        assert!(matches!(
            detect_and_match(&f, &f, 100),
            Err(Error::InsufficientFeatures { found: 0, .. })
        ));
    }
}
