//! Weighted anisotropic total variation and its denoising operator.
//!
//! The difference operator `C` stacks circulant first differences along the
//! three axes of an `m x n x p` volume (wrap-around differences included), so
//! `CᵀC` is diagonalized by the 3D DFT. Wrap-around and unobserved differences
//! are removed from the penalty by binary weights rather than from `C`.
//!
//! Denoising solves `min_s ½‖z - s‖² + λ‖W C s‖₁` by ADMM on the split
//! `v = C s`; each `s`-update is one FFT-diagonal solve of `(I + ρCᵀC)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shrinkage::soft_scalar;
use crate::video::{MaskTensor, VideoTensor};

/// Volume dimensions `m x n x p`, flattened with `i` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub m: usize,
    pub n: usize,
    pub p: usize,
}

impl Grid {
    pub fn new(m: usize, n: usize, p: usize) -> Self {
        Grid { m, n, p }
    }

    pub fn len(&self) -> usize {
        self.m * self.n * self.p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.m * (j + self.n * k)
    }
}

/// Whether temporal differences enter the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvMode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

/// Binary weights selecting which first differences are penalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TvWeights {
    grid: Grid,
    mode: TvMode,
    wx: Vec<bool>,
    wy: Vec<bool>,
    wz: Vec<bool>,
}

/// Weights that keep only differences between two observed pixels, never wrap-arounds.
pub fn build_tv_weights(mask: &MaskTensor, mode: TvMode) -> TvWeights {
    let (m, n, p) = mask.shape();
    let grid = Grid::new(m, n, p);
    let obs = mask.as_slice();
    let mut wx = vec![false; grid.len()];
    let mut wy = vec![false; grid.len()];
    let mut wz = vec![false; grid.len()];
    for k in 0..p {
        for j in 0..n {
            for i in 0..m {
                let idx = grid.index(i, j, k);
                if !obs[idx] {
                    continue;
                }
                if i + 1 < m {
                    wx[idx] = obs[grid.index(i + 1, j, k)];
                }
                if j + 1 < n {
                    wy[idx] = obs[grid.index(i, j + 1, k)];
                }
                if mode == TvMode::ThreeD && k + 1 < p {
                    wz[idx] = obs[grid.index(i, j, k + 1)];
                }
            }
        }
    }
    TvWeights {
        grid,
        mode,
        wx,
        wy,
        wz,
    }
}

impl TvWeights {
    /// Weights for a fully observed volume.
    pub fn unmasked(grid: Grid, mode: TvMode) -> Self {
        build_tv_weights(&MaskTensor::all_ones(grid.m, grid.n, grid.p), mode)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mode(&self) -> TvMode {
        self.mode
    }

    pub fn wx(&self) -> &[bool] {
        &self.wx
    }

    pub fn wy(&self) -> &[bool] {
        &self.wy
    }

    pub fn wz(&self) -> &[bool] {
        &self.wz
    }

    /// The diagonal of `W`, aligned with the output of [`apply_diff`].
    pub fn diagonal(&self) -> Vec<f64> {
        self.wx
            .iter()
            .chain(&self.wy)
            .chain(&self.wz)
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Circulant first differences `C x` along axes 1, 2, 3, concatenated.
pub fn apply_diff(x: &[f64], grid: Grid) -> Result<Vec<f64>> {
    check_len(x.len(), grid.len(), "apply_diff input")?;
    let mut out = vec![0.0; 3 * grid.len()];
    diff_into(x, grid, &mut out);
    Ok(out)
}

fn diff_into(x: &[f64], grid: Grid, out: &mut [f64]) {
    let Grid { m, n, p } = grid;
    let len = grid.len();
    let (dx, rest) = out.split_at_mut(len);
    let (dy, dz) = rest.split_at_mut(len);
    for k in 0..p {
        let k1 = if k + 1 == p { 0 } else { k + 1 };
        for j in 0..n {
            let j1 = if j + 1 == n { 0 } else { j + 1 };
            for i in 0..m {
                let i1 = if i + 1 == m { 0 } else { i + 1 };
                let idx = grid.index(i, j, k);
                let v = x[idx];
                dx[idx] = x[grid.index(i1, j, k)] - v;
                dy[idx] = x[grid.index(i, j1, k)] - v;
                dz[idx] = x[grid.index(i, j, k1)] - v;
            }
        }
    }
}

/// `Cᵀ y` for `y` laid out as the output of [`apply_diff`].
pub fn apply_diff_adjoint(y: &[f64], grid: Grid) -> Result<Vec<f64>> {
    check_len(y.len(), 3 * grid.len(), "apply_diff_adjoint input")?;
    let mut out = vec![0.0; grid.len()];
    adjoint_into(y, grid, &mut out);
    Ok(out)
}

fn adjoint_into(y: &[f64], grid: Grid, out: &mut [f64]) {
    let Grid { m, n, p } = grid;
    let len = grid.len();
    let (dx, rest) = y.split_at(len);
    let (dy, dz) = rest.split_at(len);
    for k in 0..p {
        let k0 = if k == 0 { p - 1 } else { k - 1 };
        for j in 0..n {
            let j0 = if j == 0 { n - 1 } else { j - 1 };
            for i in 0..m {
                let i0 = if i == 0 { m - 1 } else { i - 1 };
                let idx = grid.index(i, j, k);
                out[idx] = dx[grid.index(i0, j, k)] - dx[idx] + dy[grid.index(i, j0, k)] - dy[idx]
                    + dz[grid.index(i, j, k0)]
                    - dz[idx];
            }
        }
    }
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} has length {got}, expected {expected}")))
    }
}

/// Weighted anisotropic TV of a flattened volume.
pub fn tv_value_slice(x: &[f64], w: &TvWeights) -> Result<f64> {
    let grid = w.grid;
    check_len(x.len(), grid.len(), "tv_value input")?;
    let Grid { m, n, p } = grid;
    let mut total = 0.0;
    for k in 0..p {
        for j in 0..n {
            for i in 0..m {
                let idx = grid.index(i, j, k);
                let v = x[idx];
                if w.wx[idx] {
                    total += (x[grid.index(i + 1, j, k)] - v).abs();
                }
                if w.wy[idx] {
                    total += (x[grid.index(i, j + 1, k)] - v).abs();
                }
                if w.wz[idx] {
                    total += (x[grid.index(i, j, k + 1)] - v).abs();
                }
            }
        }
    }
    Ok(total)
}

/// Weighted anisotropic TV of a video.
pub fn tv_value(x: &VideoTensor, w: &TvWeights) -> Result<f64> {
    let (m, n, p) = x.shape();
    if Grid::new(m, n, p) != w.grid {
        return Err(Error::Dimension(format!(
            "video is {m}x{n}x{p}, weights are {:?}",
            w.grid
        )));
    }
    tv_value_slice(x.as_slice(), w)
}

/// The TVDN objective `½‖z - s‖² + λ TV_w(s)`.
pub fn tvdn_objective(z: &[f64], s: &[f64], lam: f64, w: &TvWeights) -> Result<f64> {
    check_len(s.len(), z.len(), "tvdn_objective iterate")?;
    let fit: f64 = z.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * fit + lam * tv_value_slice(s, w)?)
}

/// Eigenvalues of `CᵀC` on the 3D DFT grid, plus the ADMM penalty `ρ`.
#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    grid: Grid,
    rho: f64,
    eigenvalues: Vec<f64>,
}

/// `|F(d_len)|²` for the circulant difference column `d = [-1, 0, …, 0, 1]`.
fn difference_power(len: usize) -> Vec<f64> {
    (0..len)
        .map(|f| {
            let s = (PI * f as f64 / len as f64).sin();
            4.0 * s * s
        })
        .collect()
}

/// Precompute the tensor sum `T(i,j,k) = |F(d_m)|²_i + |F(d_n)|²_j + |F(d_p)|²_k`.
pub fn precompute_spectrum(m: usize, n: usize, p: usize, rho: f64) -> Result<CirculantSpectrum> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Argument(format!("rho must be finite and >= 0, got {rho}")));
    }
    let grid = Grid::new(m, n, p);
    if grid.is_empty() {
        return Err(Error::Dimension("spectrum grid must be nonempty".into()));
    }
    let (am, an, ap) = (difference_power(m), difference_power(n), difference_power(p));
    let mut eigenvalues = Vec::with_capacity(grid.len());
    for &ek in &ap {
        for &ej in &an {
            for &ei in &am {
                eigenvalues.push(ei + ej + ek);
            }
        }
    }
    Ok(CirculantSpectrum {
        grid,
        rho,
        eigenvalues,
    })
}

impl CirculantSpectrum {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Separable 3D FFT over a flattened `m x n x p` volume.
struct Fft3 {
    grid: Grid,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft_forward(grid.m),
            planner.plan_fft_forward(grid.n),
            planner.plan_fft_forward(grid.p),
        ];
        let inverse = [
            planner.plan_fft_inverse(grid.m),
            planner.plan_fft_inverse(grid.n),
            planner.plan_fft_inverse(grid.p),
        ];
        Fft3 {
            grid,
            forward,
            inverse,
        }
    }

    fn run(&self, data: &mut [Complex<f64>], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let Grid { m, n, p } = self.grid;
        if m > 1 {
            plans[0].process(data);
        }
        let mut lines = vec![Complex::default(); data.len()];
        if n > 1 {
            // Gather axis-2 lines contiguously: line (i, k) holds j = 0..n.
            for k in 0..p {
                for j in 0..n {
                    for i in 0..m {
                        lines[(i + m * k) * n + j] = data[self.grid.index(i, j, k)];
                    }
                }
            }
            plans[1].process(&mut lines);
            for k in 0..p {
                for j in 0..n {
                    for i in 0..m {
                        data[self.grid.index(i, j, k)] = lines[(i + m * k) * n + j];
                    }
                }
            }
        }
        if p > 1 {
            let mn = m * n;
            for k in 0..p {
                for r in 0..mn {
                    lines[r * p + k] = data[r + mn * k];
                }
            }
            plans[2].process(&mut lines);
            for k in 0..p {
                for r in 0..mn {
                    data[r + mn * k] = lines[r * p + k];
                }
            }
        }
    }

    fn forward(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.forward);
    }

    /// Normalized inverse transform.
    fn inverse(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Exact solver for `(I + ρCᵀC) s = rhs` and the ADMM TV denoiser built on it.
pub struct TvDenoiser {
    weights: TvWeights,
    spectrum: CirculantSpectrum,
    fft: Fft3,
}

impl TvDenoiser {
    pub fn new(weights: TvWeights, rho: f64) -> Result<Self> {
        let grid = weights.grid;
        let spectrum = precompute_spectrum(grid.m, grid.n, grid.p, rho)?;
        Ok(TvDenoiser {
            weights,
            spectrum,
            fft: Fft3::new(grid),
        })
    }

    pub fn weights(&self) -> &TvWeights {
        &self.weights
    }

    pub fn rho(&self) -> f64 {
        self.spectrum.rho
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        solve_with(&self.fft, &self.spectrum, rhs)
    }

    /// `K` ADMM iterations for `min_s ½‖z - s‖² + λ‖W C s‖₁`, from `v = Cz`, `u = 0`.
    pub fn denoise(&self, z: &[f64], lam: f64, iters: usize) -> Result<Vec<f64>> {
        let grid = self.weights.grid;
        check_len(z.len(), grid.len(), "tvdn input")?;
        if !(lam >= 0.0) {
            return Err(Error::Argument(format!("TV weight must be >= 0, got {lam}")));
        }
        if iters == 0 {
            return Err(Error::Argument("tvdn needs at least one iteration".into()));
        }
        let rho = self.spectrum.rho;
        if !(rho > 0.0) {
            return Err(Error::Argument(format!("ADMM rho must be > 0, got {rho}")));
        }
        let thresholds: Vec<f64> = self
            .weights
            .diagonal()
            .into_iter()
            .map(|w| w * lam / rho)
            .collect();

        let mut v = apply_diff(z, grid)?;
        let mut u = vec![0.0; v.len()];
        let mut gap = vec![0.0; v.len()];
        let mut back = vec![0.0; grid.len()];
        let mut cs = vec![0.0; v.len()];
        let mut s = z.to_vec();
        for _ in 0..iters {
            for ((g, vi), ui) in gap.iter_mut().zip(&v).zip(&u) {
                *g = vi - ui;
            }
            adjoint_into(&gap, grid, &mut back);
            for (b, zi) in back.iter_mut().zip(z) {
                *b = zi + rho * *b;
            }
            s = self.solve(&back);
            diff_into(&s, grid, &mut cs);
            for (((vi, ui), ci), &t) in v.iter_mut().zip(u.iter_mut()).zip(&cs).zip(&thresholds) {
                let a = ci + *ui;
                *vi = soft_scalar(a, t);
                *ui = a - *vi;
            }
        }
        Ok(s)
    }
}

fn solve_with(fft: &Fft3, spectrum: &CirculantSpectrum, rhs: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = rhs.iter().map(|&r| Complex::new(r, 0.0)).collect();
    fft.forward(&mut buf);
    let rho = spectrum.rho;
    for (c, &e) in buf.iter_mut().zip(&spectrum.eigenvalues) {
        *c /= 1.0 + rho * e;
    }
    fft.inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Solve `(I + ρCᵀC) s = rhs` through the 3D DFT.
pub fn circulant_solve(rhs: &[f64], spectrum: &CirculantSpectrum) -> Result<Vec<f64>> {
    check_len(rhs.len(), spectrum.grid.len(), "circulant_solve rhs")?;
    Ok(solve_with(&Fft3::new(spectrum.grid), spectrum, rhs))
}

/// Weighted TV denoising of a video by `iters` ADMM steps.
pub fn tvdn(
    z: &VideoTensor,
    lam: f64,
    w: &TvWeights,
    rho: f64,
    iters: usize,
) -> Result<VideoTensor> {
    let (m, n, p) = z.shape();
    if Grid::new(m, n, p) != w.grid {
        return Err(Error::Dimension(format!(
            "video is {m}x{n}x{p}, weights are {:?}",
            w.grid
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::Argument(format!("ADMM rho must be > 0, got {rho}")));
    }
    let denoiser = TvDenoiser::new(w.clone(), rho)?;
    let s = denoiser.denoise(z.as_slice(), lam, iters)?;
    VideoTensor::from_matrix(m, n, nalgebra::DMatrix::from_vec(m * n, p, s))
}
