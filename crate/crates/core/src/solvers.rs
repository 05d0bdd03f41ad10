//! Low-rank + TV + sparse decomposition solvers.
//!
//! All solvers work on `mn x p` matrices whose columns are (registered) frames
//! and a mask marking observed entries. The PRPCA loop takes a gradient step
//! on the masked data term and then updates each component with its own
//! shrinkage: OptShrink (or SVT) for `L`, TV denoising for `S`, and soft
//! thresholding for `E`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shrinkage::{nuclear_norm, optshrink, soft_in_place, soft_scalar, svt};
use crate::tv::{build_tv_weights, tv_value_slice, tvdn_objective, TvDenoiser, TvMode, TvWeights};
use crate::video::{MaskTensor, VideoTensor};

/// Low-rank update used by the PRPCA loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowRankUpdate {
    OptShrink,
    Svt,
}

/// PRPCA parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub lam_s: f64,
    pub lam_e: f64,
    /// Nuclear-norm weight, used by the SVT update only.
    pub lam_l: f64,
    pub tau: f64,
    pub rho: f64,
    pub inner_iters: usize,
    pub iters: usize,
    pub tv_mode: TvMode,
    pub update: LowRankUpdate,
    /// Stop once every relative change stays below 1e-5 for 5 iterations.
    pub early_exit: bool,
}

impl SolverConfig {
    /// Rule-of-thumb defaults for an `m x n` canvas.
    pub fn defaults(m: usize, n: usize, tv_mode: TvMode) -> Self {
        let scale = ((m * n) as f64).sqrt();
        SolverConfig {
            rank: 1,
            lam_s: 0.01 / scale,
            lam_e: 0.001 / scale,
            lam_l: 1.0,
            tau: 1.0 / 3.0,
            rho: 1.0,
            inner_iters: 10,
            iters: 150,
            tv_mode,
            update: LowRankUpdate::OptShrink,
            early_exit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Configuration(what.to_string()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau < 2.0 / 3.0) {
            return bad("step tau must lie in (0, 2/3)");
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad("ADMM rho must be positive");
        }
        for (name, v) in [("lam_s", self.lam_s), ("lam_e", self.lam_e), ("lam_l", self.lam_l)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Configuration(format!("{name} must be finite and >= 0")));
            }
        }
        if self.inner_iters == 0 || self.iters == 0 {
            return bad("iteration counts must be positive");
        }
        Ok(())
    }
}

/// One outer iteration's relative changes (and cost, when tracked).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rel_change_l: f64,
    pub rel_change_s: f64,
    pub rel_change_e: f64,
    pub cost: Option<f64>,
}

/// Background `L`, foreground `S` and sparse corruption `E`, each `mn x p`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub history: Vec<IterationRecord>,
    /// Iterations at which OptShrink reported an ill-separated spectrum.
    pub ill_separated: usize,
}

impl Decomposition {
    /// Observed-entry residual `P_M(Y - L - S - E)`.
    pub fn residual(&self, y: &VideoTensor, mask: &MaskTensor) -> DMatrix<f64> {
        let mut r = y.as_matrix() - &self.l - &self.s - &self.e;
        mask.apply_in_place(&mut r);
        r
    }

    pub fn component(&self, x: &DMatrix<f64>, m: usize, n: usize) -> Result<VideoTensor> {
        VideoTensor::from_matrix(m, n, x.clone())
    }
}

fn check_problem(y: &VideoTensor, mask: &MaskTensor) -> Result<()> {
    if y.shape() != mask.shape() {
        return Err(Error::Dimension(format!(
            "data is {:?}, mask is {:?}",
            y.shape(),
            mask.shape()
        )));
    }
    if y.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("data contains non-finite entries".into()));
    }
    Ok(())
}

/// `‖X⁺ - X‖ / ‖X‖`, with `0/0 = 0` and `d/0 = 1`.
pub fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    let delta = (new - old).norm();
    let base = old.norm();
    if base > 0.0 {
        delta / base
    } else if delta == 0.0 {
        0.0
    } else {
        1.0
    }
}

fn ensure_finite(x: &DMatrix<f64>, iteration: usize, component: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            component,
        })
    }
}

/// `½‖P_M(Y-L-S-E)‖² + λ_L‖L‖_* + λ_S TV_w(S) + λ_E‖E‖₁`.
#[allow(clippy::too_many_arguments)]
pub fn prpca_cost(
    y: &VideoTensor,
    mask: &MaskTensor,
    l: &DMatrix<f64>,
    s: &DMatrix<f64>,
    e: &DMatrix<f64>,
    w: &TvWeights,
    lam_l: f64,
    lam_s: f64,
    lam_e: f64,
) -> Result<f64> {
    check_problem(y, mask)?;
    let shape = y.as_matrix().shape();
    for x in [l, s, e] {
        if x.shape() != shape {
            return Err(Error::Dimension("component shape differs from data".into()));
        }
    }
    let mut r = y.as_matrix() - l - s - e;
    mask.apply_in_place(&mut r);
    let mut cost = 0.5 * r.norm_squared();
    if lam_l != 0.0 {
        cost += lam_l * nuclear_norm(l)?;
    }
    cost += lam_s * tv_value_slice(s.as_slice(), w)?;
    cost += lam_e * e.iter().map(|v| v.abs()).sum::<f64>();
    Ok(cost)
}

/// OptShrink on the rows observed at least once, scattered back with zeros elsewhere.
fn optshrink_observed(z: &DMatrix<f64>, rows: &[usize], r: usize) -> Result<(DMatrix<f64>, bool)> {
    let p = z.ncols();
    let compact = DMatrix::from_fn(rows.len(), p, |i, k| z[(rows[i], k)]);
    let out = optshrink(&compact, r)?;
    let mut full = DMatrix::zeros(z.nrows(), p);
    for (i, &row) in rows.iter().enumerate() {
        for k in 0..p {
            full[(row, k)] = out.matrix[(i, k)];
        }
    }
    Ok((full, out.ill_separated))
}

/// The PRPCA proximal loop with the configured low-rank update.
pub fn prpca_run(y: &VideoTensor, mask: &MaskTensor, cfg: &SolverConfig) -> Result<Decomposition> {
    cfg.validate()?;
    check_problem(y, mask)?;
    let weights = build_tv_weights(mask, cfg.tv_mode);
    let denoiser = TvDenoiser::new(weights.clone(), cfg.rho)?;
    let observed: Vec<usize> = mask
        .observed_rows()
        .iter()
        .enumerate()
        .filter_map(|(r, &b)| b.then_some(r))
        .collect();
    let track_cost = cfg.update == LowRankUpdate::Svt;
    let (rows, p) = y.as_matrix().shape();
    let tau = cfg.tau;

    let mut l = y.as_matrix().clone();
    mask.apply_in_place(&mut l);
    let mut s = DMatrix::zeros(rows, p);
    let mut e = DMatrix::zeros(rows, p);
    let mut history = Vec::with_capacity(cfg.iters);
    let mut ill_separated = 0;
    let mut quiet = 0;

    for it in 1..=cfg.iters {
        let mut u = &l + &s + &e - y.as_matrix();
        mask.apply_in_place(&mut u);

        let l_arg = &l - &u * tau;
        let l_new = match cfg.update {
            LowRankUpdate::OptShrink => {
                if observed.is_empty() {
                    DMatrix::zeros(rows, p)
                } else {
                    let (out, ill) = optshrink_observed(&l_arg, &observed, cfg.rank)?;
                    ill_separated += usize::from(ill);
                    out
                }
            }
            LowRankUpdate::Svt => svt(&l_arg, tau * cfg.lam_l)?,
        };

        let s_arg = &s - &u * tau;
        let lam = tau * cfg.lam_s;
        let mut s_new = DMatrix::from_vec(
            rows,
            p,
            denoiser.denoise(s_arg.as_slice(), lam, cfg.inner_iters)?,
        );
        mask.apply_in_place(&mut s_new);
        if track_cost {
            // Keep the previous S unless the inexact TV step improves its own prox objective.
            let candidate = tvdn_objective(s_arg.as_slice(), s_new.as_slice(), lam, &weights)?;
            let current = tvdn_objective(s_arg.as_slice(), s.as_slice(), lam, &weights)?;
            if !(candidate <= current) {
                s_new = s.clone();
            }
        }

        let mut e_new = &e - &u * tau;
        soft_in_place(e_new.as_mut_slice(), tau * cfg.lam_e)?;
        mask.apply_in_place(&mut e_new);

        ensure_finite(&l_new, it, "L")?;
        ensure_finite(&s_new, it, "S")?;
        ensure_finite(&e_new, it, "E")?;

        let record = IterationRecord {
            iteration: it,
            rel_change_l: relative_change(&l_new, &l),
            rel_change_s: relative_change(&s_new, &s),
            rel_change_e: relative_change(&e_new, &e),
            cost: None,
        };
        l = l_new;
        s = s_new;
        e = e_new;
        let cost = if track_cost {
            Some(prpca_cost(y, mask, &l, &s, &e, &weights, cfg.lam_l, cfg.lam_s, cfg.lam_e)?)
        } else {
            None
        };
        history.push(IterationRecord { cost, ..record });

        if cfg.early_exit {
            let small = [record.rel_change_l, record.rel_change_s, record.rel_change_e]
                .iter()
                .all(|&c| c < 1e-5);
            quiet = if small { quiet + 1 } else { 0 };
            if quiet >= 5 {
                break;
            }
        }
    }
    Ok(Decomposition {
        l,
        s,
        e,
        history,
        ill_separated,
    })
}

/// The same loop with singular value thresholding at weight `λ_L`.
pub fn prpca_svt_run(y: &VideoTensor, mask: &MaskTensor, cfg: &SolverConfig) -> Result<Decomposition> {
    let cfg = SolverConfig {
        update: LowRankUpdate::Svt,
        ..cfg.clone()
    };
    prpca_run(y, mask, &cfg)
}

/// Low-rank plus sparse output of the RPCA baseline.
#[derive(Debug, Clone)]
pub struct RpcaOutput {
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Proximal gradient RPCA on the observed entries, from `L = S = 0`.
pub fn rpca_missing_run(
    y: &VideoTensor,
    mask: &MaskTensor,
    lam_l: f64,
    lam_s: f64,
    tau: f64,
    iters: usize,
) -> Result<RpcaOutput> {
    check_problem(y, mask)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Configuration("RPCA step tau must lie in (0, 1)".into()));
    }
    if !(lam_l >= 0.0) || !(lam_s >= 0.0) {
        return Err(Error::Configuration("RPCA weights must be >= 0".into()));
    }
    let (rows, p) = y.as_matrix().shape();
    let mut l = DMatrix::zeros(rows, p);
    let mut s = DMatrix::zeros(rows, p);
    for it in 1..=iters {
        let mut z = &l + &s - y.as_matrix();
        mask.apply_in_place(&mut z);
        l = svt(&(&l - &z * tau), tau * lam_l)?;
        s -= &z * tau;
        soft_in_place(s.as_mut_slice(), tau * lam_s)?;
        ensure_finite(&l, it, "L")?;
        ensure_finite(&s, it, "S")?;
    }
    Ok(RpcaOutput { l, s })
}

/// TVRPCA parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvRpcaConfig {
    /// ℓ1 weight on the residual `G`.
    pub lam1: f64,
    /// ℓ1 weight on the sparse error `E`.
    pub lam2: f64,
    /// TV weight on the foreground `S`.
    pub lam3: f64,
    pub mu: f64,
    pub iters: usize,
    /// SOFT-IMPUTE sweeps per `L` update.
    pub inner_iters: usize,
    pub tv_mode: TvMode,
    pub rho: f64,
    pub tv_iters: usize,
}

impl TvRpcaConfig {
    pub fn defaults(rows: usize, p: usize, mu: f64) -> Self {
        let lam = 1.0 / (rows.max(p) as f64).sqrt();
        TvRpcaConfig {
            lam1: lam,
            lam2: lam,
            lam3: lam,
            mu,
            iters: 150,
            inner_iters: 2,
            tv_mode: TvMode::ThreeD,
            rho: 1.0,
            tv_iters: 10,
        }
    }
}

/// TVRPCA components and the constraint residual `‖P_M(Y-L-G)‖` per iteration.
#[derive(Debug, Clone)]
pub struct TvRpcaOutput {
    pub l: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

/// Alternating minimization of the masked TVRPCA augmented Lagrangian.
pub fn tvrpca_missing_run(y: &VideoTensor, mask: &MaskTensor, cfg: &TvRpcaConfig) -> Result<TvRpcaOutput> {
    check_problem(y, mask)?;
    if !(cfg.mu > 0.0) || !cfg.mu.is_finite() {
        return Err(Error::Configuration("mu must be positive".into()));
    }
    for v in [cfg.lam1, cfg.lam2, cfg.lam3] {
        if !(v >= 0.0) {
            return Err(Error::Configuration("TVRPCA weights must be >= 0".into()));
        }
    }
    if cfg.iters == 0 || cfg.inner_iters == 0 || cfg.tv_iters == 0 {
        return Err(Error::Configuration("iteration counts must be positive".into()));
    }
    let (m, n, p) = y.shape();
    let weights = build_tv_weights(&MaskTensor::all_ones(m, n, p), cfg.tv_mode);
    let denoiser = TvDenoiser::new(weights, cfg.rho)?;
    let obs = mask.as_slice();
    let yv = y.as_matrix();
    let mu = cfg.mu;
    let (rows, _) = yv.shape();

    let zeros = || DMatrix::<f64>::zeros(rows, p);
    let (mut l, mut g, mut e, mut s, mut x, mut z) = (zeros(), zeros(), zeros(), zeros(), zeros(), zeros());
    let mut residuals = Vec::with_capacity(cfg.iters);
    for it in 1..=cfg.iters {
        for _ in 0..cfg.inner_iters {
            let target = DMatrix::from_fn(rows, p, |i, k| {
                if obs[i + rows * k] {
                    yv[(i, k)] - g[(i, k)] + x[(i, k)] / mu
                } else {
                    l[(i, k)]
                }
            });
            l = svt(&target, 1.0 / mu)?;
        }
        g = DMatrix::from_fn(rows, p, |i, k| {
            if obs[i + rows * k] {
                let arg = 0.5 * (yv[(i, k)] - l[(i, k)] + e[(i, k)] + s[(i, k)])
                    + (x[(i, k)] - z[(i, k)]) / (2.0 * mu);
                soft_scalar(arg, cfg.lam1 / (2.0 * mu))
            } else {
                soft_scalar(e[(i, k)] + s[(i, k)] - z[(i, k)] / mu, cfg.lam1 / mu)
            }
        });
        e = &g - &s + &z / mu;
        soft_in_place(e.as_mut_slice(), cfg.lam2 / mu)?;
        let s_arg = &g - &e + &z / mu;
        s = DMatrix::from_vec(
            rows,
            p,
            denoiser.denoise(s_arg.as_slice(), cfg.lam3 / mu, cfg.tv_iters)?,
        );
        let mut gap = yv - &l - &g;
        mask.apply_in_place(&mut gap);
        x += &gap * mu;
        z += (&g - &e - &s) * mu;
        for (c, name) in [(&l, "L"), (&g, "G"), (&e, "E"), (&s, "S")] {
            ensure_finite(c, it, name)?;
        }
        residuals.push(gap.norm());
    }
    Ok(TvRpcaOutput {
        l,
        g,
        e,
        s,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planted(m: usize, n: usize, p: usize, seed: u64) -> VideoTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.2..0.8)).collect();
        let mut y = DMatrix::zeros(m * n, p);
        for k in 0..p {
            let gain = 0.9 + 0.02 * k as f64;
            for r in 0..m * n {
                y[(r, k)] = gain * bg[r];
            }
        }
        VideoTensor::from_matrix(m, n, y).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_decomposition() {
        let y = VideoTensor::zeros(5, 4, 6);
        let mask = MaskTensor::all_ones(5, 4, 6);
        let mut cfg = SolverConfig::defaults(5, 4, TvMode::ThreeD);
        cfg.iters = 5;
        let d = prpca_run(&y, &mask, &cfg).unwrap();
        assert!(d.l.iter().chain(d.s.iter()).chain(d.e.iter()).all(|&v| v == 0.0));
        let r = rpca_missing_run(&y, &mask, 1.0, 0.1, 0.5, 5).unwrap();
        assert!(r.l.iter().chain(r.s.iter()).all(|&v| v == 0.0));
        let t = tvrpca_missing_run(&y, &mask, &TvRpcaConfig::defaults(20, 6, 1.0)).unwrap();
        assert!(t.l.iter().chain(t.s.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn cost_at_zero_and_exact_fit() {
        let y = planted(4, 3, 5, 1);
        let mask = MaskTensor::all_ones(4, 3, 5);
        let w = build_tv_weights(&mask, TvMode::ThreeD);
        let z = DMatrix::zeros(12, 5);
        let c = prpca_cost(&y, &mask, &z, &z, &z, &w, 1.0, 1.0, 1.0).unwrap();
        assert!((c - 0.5 * y.as_matrix().norm_squared()).abs() < 1e-12);
        let c = prpca_cost(&y, &mask, y.as_matrix(), &z, &z, &w, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn support_and_rank_discipline_under_missing_rows() {
        let (m, n, p) = (6, 5, 8);
        let y = planted(m, n, p, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut data: Vec<bool> = (0..m * n * p).map(|_| rng.random_bool(0.8)).collect();
        // Row 0 is never observed.
        for k in 0..p {
            data[m * n * k] = false;
        }
        let mask = MaskTensor::from_vec(m, n, p, data).unwrap();
        let mut cfg = SolverConfig::defaults(m, n, TvMode::TwoD);
        cfg.iters = 20;
        let d = prpca_run(&y, &mask, &cfg).unwrap();
        for (idx, &b) in mask.as_slice().iter().enumerate() {
            if !b {
                assert_eq!(d.s.as_slice()[idx], 0.0);
                assert_eq!(d.e.as_slice()[idx], 0.0);
            }
        }
        assert!(d.l.row(0).iter().all(|&v| v == 0.0));
        let sv = d.l.singular_values();
        assert!(sv.iter().filter(|&&v| v > 1e-9 * sv.max()).count() <= 1);
        assert_eq!(d.history.len(), 20);
    }

    #[test]
    fn bad_config_is_rejected() {
        let y = planted(3, 3, 4, 5);
        let mask = MaskTensor::all_ones(3, 3, 4);
        let mut cfg = SolverConfig::defaults(3, 3, TvMode::ThreeD);
        cfg.tau = 0.7;
        assert!(matches!(prpca_run(&y, &mask, &cfg), Err(Error::Configuration(_))));
        assert!(rpca_missing_run(&y, &mask, 1.0, 1.0, 1.0, 3).is_err());
        cfg.tau = 0.3;
        cfg.rank = 4;
        assert!(matches!(prpca_run(&y, &mask, &cfg), Err(Error::Rank { .. })));
    }

    #[test]
    fn huge_nuclear_weight_kills_low_rank() {
        let y = planted(4, 4, 5, 6);
        let mask = MaskTensor::all_ones(4, 4, 5);
        let mut cfg = SolverConfig::defaults(4, 4, TvMode::ThreeD);
        cfg.lam_l = 1e9;
        cfg.iters = 10;
        let d = prpca_svt_run(&y, &mask, &cfg).unwrap();
        assert!(d.l.iter().all(|&v| v == 0.0));
        assert!(d.history.iter().all(|r| r.cost.is_some()));
    }

    #[test]
    fn relative_change_conventions() {
        let z = DMatrix::<f64>::zeros(2, 2);
        let o = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(relative_change(&z, &z), 0.0);
        assert_eq!(relative_change(&o, &z), 1.0);
        assert_eq!(relative_change(&o, &o), 0.0);
    }
}
