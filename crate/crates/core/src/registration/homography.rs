use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::shrinkage::SortedSvd;

/// Projective transform of the image plane.
///
/// Stored as the forward matrix acting on column vectors: a point `(x, y)`
/// maps to `(x', y')` with `[x', y', 1]ᵀ ∝ T [x, y, 1]ᵀ`. The bottom-right
/// entry is always exactly 1. Coordinates are `x = column`, `y = row`, with
/// pixel centres on integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    t: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            t: Matrix3::identity(),
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            t: Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0),
        }
    }

    /// Normalize a forward matrix so its bottom-right entry is 1.
    pub fn from_forward(t: Matrix3<f64>) -> Result<Self> {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("homography has non-finite entries".into()));
        }
        let scale = t.abs().max();
        let t33 = t[(2, 2)];
        if scale == 0.0 || t33.abs() <= 1e-12 * scale {
            return Err(Error::Degenerate(
                "homography has vanishing bottom-right entry".into(),
            ));
        }
        let mut t = t / t33;
        t[(2, 2)] = 1.0;
        Ok(Homography { t })
    }

    /// Build from the transposed convention `κ p̃ = Hᵀ p`, i.e. `T = Hᵀ`.
    pub fn from_transposed(h: Matrix3<f64>) -> Result<Self> {
        Self::from_forward(h.transpose())
    }

    pub fn forward(&self) -> &Matrix3<f64> {
        &self.t
    }

    /// The matrix `H` with `κ p̃ = Hᵀ p`.
    pub fn transposed(&self) -> Matrix3<f64> {
        self.t.transpose()
    }

    /// Map a point; the result is non-finite for points sent to infinity.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let q = self.t * Vector3::new(x, y, 1.0);
        (q.x / q.z, q.y / q.z)
    }

    pub fn is_invertible(&self) -> bool {
        // With t33 = 1 the determinant scales as the square of the first two columns.
        let det = self.t.determinant();
        let s = self.t.columns(0, 2).abs().max();
        det.is_finite() && det.abs() > 1e-12 * s * s
    }

    pub fn inverse(&self) -> Result<Homography> {
        if !self.is_invertible() {
            return Err(Error::Degenerate("homography is not invertible".into()));
        }
        let inv = self
            .t
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("homography is not invertible".into()))?;
        Homography::from_forward(inv)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Homography) -> Result<Homography> {
        Homography::from_forward(self.t * first.t)
    }

    /// Row-major entries of `H` (the transposed convention), as written to homography files.
    pub fn to_row_major(&self) -> [f64; 9] {
        let h = self.transposed();
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = h[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64; 9]) -> Result<Homography> {
        Homography::from_transposed(Matrix3::from_row_slice(values))
    }
}

/// A putative point match from a source frame to a target frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

impl Correspondence {
    pub fn new(src: [f64; 2], dst: [f64; 2]) -> Self {
        Correspondence { src, dst }
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizing_transform(points: impl Iterator<Item = [f64; 2]> + Clone) -> Matrix3<f64> {
    let count = points.clone().count() as f64;
    let (sx, sy) = points
        .clone()
        .fold((0.0, 0.0), |(ax, ay), [x, y]| (ax + x, ay + y));
    let (cx, cy) = (sx / count, sy / count);
    let mean_dist = points
        .map(|[x, y]| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / count;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform_point(t: &Matrix3<f64>, [x, y]: [f64; 2]) -> [f64; 2] {
    let q = t * Vector3::new(x, y, 1.0);
    [q.x / q.z, q.y / q.z]
}

/// Least-squares homography from the null vector of the stacked DLT system.
pub fn estimate_homography_dlt(corr: &[Correspondence]) -> Result<Homography> {
    if corr.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: corr.len(),
        });
    }
    if corr
        .iter()
        .any(|c| c.src.iter().chain(&c.dst).any(|v| !v.is_finite()))
    {
        return Err(Error::Numeric("non-finite correspondence".into()));
    }
    let ts = normalizing_transform(corr.iter().map(|c| c.src));
    let td = normalizing_transform(corr.iter().map(|c| c.dst));

    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (idx, c) in corr.iter().enumerate() {
        let [x, y] = transform_point(&ts, c.src);
        let [u, v] = transform_point(&td, c.dst);
        let r = 2 * idx;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }

    let svd = SortedSvd::new(&a)?;
    let sv = &svd.singular_values;
    if !(sv[7] > 1e-9 * sv[0]) {
        return Err(Error::Degenerate(
            "correspondences do not determine a unique homography".into(),
        ));
    }
    let h = svd.v_t.row(8);
    let tn = Matrix3::from_row_slice(h.transpose().as_slice());
    let inv_td = td
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular normalization".into()))?;
    Homography::from_forward(inv_td * tn * ts)
}

/// RANSAC settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub threshold_px: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            threshold_px: 2.0,
            max_iters: 2000,
            seed: 0,
        }
    }
}

/// A robust homography fit and the indices of its consensus set.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub homography: Homography,
    pub inliers: Vec<usize>,
}

/// Larger of the forward and backward reprojection errors.
pub fn symmetric_error(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let (fx, fy) = h.apply(c.src[0], c.src[1]);
    let (bx, by) = h_inv.apply(c.dst[0], c.dst[1]);
    let forward = ((fx - c.dst[0]).powi(2) + (fy - c.dst[1]).powi(2)).sqrt();
    let backward = ((bx - c.src[0]).powi(2) + (by - c.src[1]).powi(2)).sqrt();
    let e = forward.max(backward);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn consensus(h: &Homography, corr: &[Correspondence], threshold: f64) -> Option<Vec<usize>> {
    let h_inv = h.inverse().ok()?;
    Some(
        corr.iter()
            .enumerate()
            .filter(|(_, c)| symmetric_error(h, &h_inv, c) <= threshold)
            .map(|(i, _)| i)
            .collect(),
    )
}

fn subset(corr: &[Correspondence], idx: &[usize]) -> Vec<Correspondence> {
    idx.iter().map(|&i| corr[i]).collect()
}

/// Robust homography by random 4-point sampling and consensus refitting.
pub fn ransac_homography(corr: &[Correspondence], cfg: &RansacConfig) -> Result<RansacFit> {
    if corr.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: corr.len(),
        });
    }
    if !(cfg.threshold_px > 0.0) || cfg.max_iters == 0 {
        return Err(Error::Argument(
            "RANSAC needs a positive threshold and at least one iteration".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Homography, Vec<usize>)> = None;
    for _ in 0..cfg.max_iters {
        let picks = sample(&mut rng, corr.len(), 4).into_vec();
        let Ok(h) = estimate_homography_dlt(&subset(corr, &picks)) else {
            continue;
        };
        let Some(inliers) = consensus(&h, corr, cfg.threshold_px) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            let full = inliers.len() == corr.len();
            best = Some((h, inliers));
            if full {
                break;
            }
        }
    }
    let Some((mut h, mut inliers)) = best.filter(|(_, b)| b.len() >= 4) else {
        return Err(Error::RegistrationFailure {
            reason: "no consensus set of at least 4 correspondences".into(),
            pair: None,
        });
    };

    // Refit on the consensus set until it stops changing.
    for _ in 0..10 {
        let Ok(refit) = estimate_homography_dlt(&subset(corr, &inliers)) else {
            break;
        };
        let Some(next) = consensus(&refit, corr, cfg.threshold_px) else {
            break;
        };
        if next.len() < inliers.len() {
            break;
        }
        let stable = next == inliers;
        h = refit;
        inliers = next;
        if stable {
            break;
        }
    }
    // The last refit may have been fitted to a slightly different set; keep only points it explains.
    if let Some(kept) = consensus(&h, corr, cfg.threshold_px) {
        if kept.len() >= 4 {
            inliers = kept;
        }
    }
    Ok(RansacFit {
        homography: h,
        inliers,
    })
}

/// Anchor frame index (0-based) for a `p`-frame clip: frame `⌊p/2⌋` counted from 1.
pub fn anchor_index(p: usize) -> usize {
    (p / 2).saturating_sub(1)
}

/// Chain pairwise maps `k → k+1` into maps from every frame to the anchor frame.
pub fn compose_to_anchor(pairwise: &[Homography], anchor: usize) -> Result<Vec<Homography>> {
    let p = pairwise.len() + 1;
    if anchor >= p {
        return Err(Error::Argument(format!(
            "anchor {anchor} out of range for {p} frames"
        )));
    }
    let mut out = vec![Homography::identity(); p];
    for k in (0..anchor).rev() {
        out[k] = out[k + 1].after(&pairwise[k])?;
    }
    for k in anchor + 1..p {
        out[k] = out[k - 1].after(&pairwise[k - 1].inverse()?)?;
    }
    Ok(out)
}
