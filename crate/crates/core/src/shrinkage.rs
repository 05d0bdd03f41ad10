//! Matrix shrinkage operators: singular value thresholding, elementwise soft
//! thresholding and the OptShrink low-rank estimator.
//!
//! OptShrink replaces the constant shrinkage of SVT with a data-driven one.
//! The leading `r` singular values are treated as signal; the empirical
//! distribution of the remaining ones drives the D-transform, and signal
//! singular value `σ_i` is replaced by `-2 D(σ_i) / D'(σ_i)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    /// `a x q` left singular vectors.
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// `q x b` transposed right singular vectors.
    pub v_t: DMatrix<f64>,
}

impl SortedSvd {
    pub fn new(z: &DMatrix<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("SVD input contains non-finite entries".into()));
        }
        let zf = faer::Mat::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)]);
        let svd = zf
            .thin_svd()
            .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
        let (uf, vf) = (svd.U(), svd.V());
        let u = DMatrix::from_fn(uf.nrows(), uf.ncols(), |i, j| uf[(i, j)]);
        let v_t = DMatrix::from_fn(vf.ncols(), vf.nrows(), |i, j| vf[(j, i)]);
        let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();

        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Ok(SortedSvd {
                u,
                singular_values: sv,
                v_t,
            });
        }
        let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
        let v_sorted = DMatrix::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]);
        Ok(SortedSvd {
            u: u_sorted,
            singular_values: order.iter().map(|&o| sv[o]).collect(),
            v_t: v_sorted,
        })
    }

    /// `Σ_i weights[i] u_i v_iᵀ` over the first `weights.len()` components.
    pub fn reconstruct(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                out.ger(w, &self.u.column(i), &self.v_t.row(i).transpose(), 1.0);
            }
        }
        out
    }
}

/// Singular value thresholding: `Σ (σ_i - lam)_+ u_i v_iᵀ`.
pub fn svt(z: &DMatrix<f64>, lam: f64) -> Result<DMatrix<f64>> {
    if !(lam >= 0.0) {
        return Err(Error::Argument(format!("SVT threshold must be >= 0, got {lam}")));
    }
    let svd = SortedSvd::new(z)?;
    let weights: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| (s - lam).max(0.0))
        .take_while(|&w| w > 0.0)
        .collect();
    Ok(svd.reconstruct(&weights))
}

/// Sum of singular values.
pub fn nuclear_norm(z: &DMatrix<f64>) -> Result<f64> {
    Ok(SortedSvd::new(z)?.singular_values.iter().sum())
}

/// Scalar soft threshold `sign(x) (|x| - lam)_+`.
#[inline]
pub fn soft_scalar(x: f64, lam: f64) -> f64 {
    if x > lam {
        x - lam
    } else if x < -lam {
        x + lam
    } else {
        0.0
    }
}

/// Threshold for [`soft`]: one level for all entries or one level per entry.
#[derive(Debug, Clone, Copy)]
pub enum Threshold<'a> {
    Uniform(f64),
    PerEntry(&'a [f64]),
}

/// Elementwise soft thresholding.
pub fn soft(z: &[f64], lam: Threshold<'_>) -> Result<Vec<f64>> {
    match lam {
        Threshold::Uniform(t) => {
            check_threshold(t)?;
            Ok(z.iter().map(|&x| soft_scalar(x, t)).collect())
        }
        Threshold::PerEntry(ts) => {
            if ts.len() != z.len() {
                return Err(Error::Dimension(format!(
                    "{} thresholds for {} entries",
                    ts.len(),
                    z.len()
                )));
            }
            ts.iter().try_for_each(|&t| check_threshold(t))?;
            Ok(z.iter().zip(ts).map(|(&x, &t)| soft_scalar(x, t)).collect())
        }
    }
}

/// Uniform soft thresholding of a slice in place.
pub fn soft_in_place(z: &mut [f64], lam: f64) -> Result<()> {
    check_threshold(lam)?;
    z.iter_mut().for_each(|x| *x = soft_scalar(*x, lam));
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("soft threshold must be >= 0, got {t}")))
    }
}

/// Empirical distribution of the noise-only singular values.
#[derive(Debug, Clone)]
pub struct SpectralMass {
    noise: Vec<f64>,
    aspect: f64,
}

impl SpectralMass {
    /// `noise` are the singular values `σ_{r+1}..σ_q`; `aspect` is `min(a,b)/max(a,b)`.
    pub fn new(mut noise: Vec<f64>, aspect: f64) -> Result<Self> {
        if noise.is_empty() {
            return Err(Error::Argument("spectral mass needs at least one noise value".into()));
        }
        if noise.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::Argument("noise singular values must be finite and >= 0".into()));
        }
        if !(aspect > 0.0 && aspect <= 1.0) {
            return Err(Error::Argument(format!("aspect ratio {aspect} outside (0, 1]")));
        }
        noise.sort_by(|a, b| b.total_cmp(a));
        Ok(SpectralMass { noise, aspect })
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn aspect(&self) -> f64 {
        self.aspect
    }

    pub fn max_noise(&self) -> f64 {
        self.noise[0]
    }
}

/// D-transform of the empirical mass and its analytic derivative at `sigma`.
///
/// With `φ(σ) = mean_t σ/(σ²-t²)` and `g(σ) = cφ(σ) + (1-c)/σ`, `D = φ g`.
pub fn d_transform(sigma: f64, mass: &SpectralMass) -> Result<(f64, f64)> {
    if !(sigma > mass.max_noise()) {
        return Err(Error::Domain(format!(
            "sigma {sigma} must exceed the largest noise singular value {}",
            mass.max_noise()
        )));
    }
    let c = mass.aspect;
    let count = mass.noise.len() as f64;
    let s2 = sigma * sigma;
    let (mut phi, mut dphi) = (0.0, 0.0);
    for &t in &mass.noise {
        let t2 = t * t;
        let gap = s2 - t2;
        phi += sigma / gap;
        dphi -= (s2 + t2) / (gap * gap);
    }
    phi /= count;
    dphi /= count;
    let g = c * phi + (1.0 - c) / sigma;
    let dg = c * dphi - (1.0 - c) / s2;
    Ok((phi * g, dphi * g + phi * dg))
}

/// Result of [`optshrink`].
#[derive(Debug, Clone)]
pub struct OptShrinkOutput {
    /// Rank-`r` estimate.
    pub matrix: DMatrix<f64>,
    /// Shrunken singular values, one per signal component.
    pub weights: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Set when some signal singular value does not exceed the noise spectrum;
    /// such components receive weight 0 (the limit of the shrinkage at the edge).
    pub ill_separated: bool,
}

/// Relative gap below which a signal singular value counts as touching the noise bulk.
const SEPARATION_TOL: f64 = 1e-12;

/// OptShrink estimate of rank `r`.
pub fn optshrink(z: &DMatrix<f64>, r: usize) -> Result<OptShrinkOutput> {
    let (a, b) = z.shape();
    let q = a.min(b);
    if r == 0 || r >= q {
        return Err(Error::Rank { rank: r, min_dim: q });
    }
    let svd = SortedSvd::new(z)?;
    let (weights, ill_separated) = optshrink_weights(&svd.singular_values, r, a, b)?;
    Ok(OptShrinkOutput {
        matrix: svd.reconstruct(&weights),
        weights,
        singular_values: svd.singular_values,
        ill_separated,
    })
}

/// Shrinkage weights from a full descending singular value list of an `a x b` matrix.
pub fn optshrink_weights(sv: &[f64], r: usize, a: usize, b: usize) -> Result<(Vec<f64>, bool)> {
    let q = a.min(b);
    if r == 0 || r >= q || sv.len() != q {
        return Err(Error::Rank { rank: r, min_dim: q });
    }
    let aspect = q as f64 / a.max(b) as f64;
    let mass = SpectralMass::new(sv[r..].to_vec(), aspect)?;
    let edge = mass.max_noise();
    let scale = sv[0].max(f64::MIN_POSITIVE);
    let mut ill = false;
    let mut weights = Vec::with_capacity(r);
    for &sigma in &sv[..r] {
        if sigma - edge <= SEPARATION_TOL * scale {
            ill = true;
            weights.push(0.0);
            continue;
        }
        let (d, dd) = d_transform(sigma, &mass)?;
        weights.push(-2.0 * d / dd);
    }
    Ok((weights, ill))
}

/// Oracle weights `w_i = Σ_j θ_j (ũ_iᵀ u_j)(ṽ_iᵀ v_j)` that best combine the
/// observed singular vectors when the planted factors are known.
pub fn oracle_weights(
    theta: &[f64],
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    u_obs: &DMatrix<f64>,
    v_obs: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let r = theta.len();
    if u.ncols() != r || v.ncols() != r {
        return Err(Error::Dimension(format!(
            "planted factors have {} / {} columns for {r} singular values",
            u.ncols(),
            v.ncols()
        )));
    }
    if u_obs.nrows() != u.nrows() || v_obs.nrows() != v.nrows() || u_obs.ncols() != v_obs.ncols() {
        return Err(Error::Dimension(
            "observed singular vectors do not match the planted factors".into(),
        ));
    }
    let uu = u_obs.transpose() * u;
    let vv = v_obs.transpose() * v;
    Ok((0..u_obs.ncols())
        .map(|i| (0..r).map(|j| theta[j] * uu[(i, j)] * vv[(i, j)]).sum())
        .collect())
}
