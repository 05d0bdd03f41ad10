//! Planted-model and recomputation checks across modules.

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use prpca_core::corruption::{corrupt, CorruptionKind, CorruptionSpec};
use prpca_core::registration::{
    compute_canvas, ransac_homography, register_with_homographies, unregister, Correspondence, Homography,
    RansacConfig, DEFAULT_CANVAS_BUDGET,
};
use prpca_core::solvers::{
    prpca_cost, prpca_run, prpca_svt_run, rpca_missing_run, tvrpca_missing_run, SolverConfig, TvRpcaConfig,
};
use prpca_core::synthetic::{make_synthetic_scene, SceneConfig};
use prpca_core::tv::{build_tv_weights, TvMode};
use prpca_core::{Frame, MaskTensor, VideoTensor};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn rotation_about(theta: f64, cx: f64, cy: f64, dx: f64, dy: f64) -> Homography {
    let (s, c) = theta.sin_cos();
    let t = Matrix3::new(
        c,
        -s,
        cx - c * cx + s * cy + dx,
        s,
        c,
        cy - s * cx - c * cy + dy,
        0.0,
        0.0,
        1.0,
    );
    Homography::from_forward(t).unwrap()
}

fn smooth_frame(a: usize, b: usize, phase: f64) -> Frame {
    Frame::new(DMatrix::from_fn(a, b, |i, j| {
        0.5 + 0.2 * ((i as f64) * 0.21 + phase).sin() + 0.2 * ((j as f64) * 0.17 - phase).cos()
    }))
    .unwrap()
}

#[test]
fn ransac_recovers_homography_from_contaminated_matches() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rotation_about(0.05 * gaussian(&mut rng), 160.0, 120.0, 5.0 * gaussian(&mut rng), 5.0 * gaussian(&mut rng));
        let corr: Vec<Correspondence> = (0..200)
            .map(|i| {
                let (x, y) = (rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                if i < 140 {
                    let (u, v) = h.apply(x, y);
                    Correspondence::new([x, y], [u, v])
                } else {
                    Correspondence::new([x, y], [rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)])
                }
            })
            .collect();
        let fit = ransac_homography(&corr, &RansacConfig { seed, ..RansacConfig::default() }).unwrap();
        let h_inv = fit.homography.inverse().unwrap();
        let mut worst: f64 = 0.0;
        for c in &corr[..140] {
            let (u, v) = fit.homography.apply(c.src[0], c.src[1]);
            worst = worst.max(((u - c.dst[0]).powi(2) + (v - c.dst[1]).powi(2)).sqrt());
            let (x, y) = h_inv.apply(c.dst[0], c.dst[1]);
            worst = worst.max(((x - c.src[0]).powi(2) + (y - c.src[1]).powi(2)).sqrt());
        }
        assert!(worst <= 1e-3, "seed {seed}: inlier reprojection error {worst}");
        // Random outliers can land near the true map by chance; count only those that do not.
        let bad = fit
            .inliers
            .iter()
            .filter(|&&i| {
                let c = &corr[i];
                let (u, v) = h.apply(c.src[0], c.src[1]);
                i >= 140 && ((u - c.dst[0]).powi(2) + (v - c.dst[1]).powi(2)).sqrt() > 2.0
            })
            .count();
        assert!(bad as f64 <= 0.05 * fit.inliers.len() as f64, "seed {seed}: {bad} outliers kept");
    }
}

#[test]
fn warped_corners_stay_inside_the_canvas() {
    let (a, b) = (30, 40);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = 6;
        let frames = vec![smooth_frame(a, b, 0.0); p];
        let anchored: Vec<Homography> = (0..p)
            .map(|k| {
                let step = k as f64 - 2.0;
                rotation_about(0.03 * step + 0.01 * gaussian(&mut rng), 20.0, 15.0, 4.0 * step, 1.5 * gaussian(&mut rng))
            })
            .collect();
        let canvas = compute_canvas(&frames, &anchored, DEFAULT_CANVAS_BUDGET).unwrap();
        for h in &canvas.composite {
            for (x, y) in [(0.0, 0.0), ((b - 1) as f64, 0.0), (0.0, (a - 1) as f64), ((b - 1) as f64, (a - 1) as f64)] {
                let (u, v) = h.apply(x, y);
                assert!(u >= -1e-9 && u <= (canvas.width - 1) as f64 + 1e-9, "u {u} width {}", canvas.width);
                assert!(v >= -1e-9 && v <= (canvas.height - 1) as f64 + 1e-9, "v {v} height {}", canvas.height);
            }
        }
    }
}

#[test]
fn unregister_of_register_recovers_smooth_frames() {
    let (a, b, p) = (32, 36, 5);
    let frames: Vec<Frame> = (0..p).map(|k| smooth_frame(a, b, 0.3 * k as f64)).collect();
    let anchored: Vec<Homography> = (0..p)
        .map(|k| {
            let step = k as f64 - 1.0;
            rotation_about(0.02 * step, 18.0, 16.0, 3.3 * step, -1.7 * step)
        })
        .collect();
    let reg = register_with_homographies(&frames, anchored, 1, DEFAULT_CANVAS_BUDGET).unwrap();
    let back = unregister(&[&reg.frames], &reg).unwrap();
    let mut worst: f64 = 0.0;
    for (k, f) in frames.iter().enumerate() {
        let plane = back[0].plane(k);
        for i in 2..a - 2 {
            for j in 2..b - 2 {
                worst = worst.max((plane[(i, j)] - f.get(i, j)).abs());
            }
        }
    }
    assert!(worst <= 0.02, "interior round-trip error {worst}");
}

/// `(i, j, k)` neighbour pairs that both lie inside the grid and are observed.
fn tv_by_definition(s: &DMatrix<f64>, mask: &MaskTensor, m: usize, n: usize, temporal: bool) -> f64 {
    let (_, _, p) = mask.shape();
    let at = |i: usize, j: usize, k: usize| s[(i + m * j, k)];
    let mut total = 0.0;
    for k in 0..p {
        for j in 0..n {
            for i in 0..m {
                if !mask.get(i, j, k) {
                    continue;
                }
                if i + 1 < m && mask.get(i + 1, j, k) {
                    total += (at(i + 1, j, k) - at(i, j, k)).abs();
                }
                if j + 1 < n && mask.get(i, j + 1, k) {
                    total += (at(i, j + 1, k) - at(i, j, k)).abs();
                }
                if temporal && k + 1 < p && mask.get(i, j, k + 1) {
                    total += (at(i, j, k + 1) - at(i, j, k)).abs();
                }
            }
        }
    }
    total
}

#[test]
fn cost_matches_recomputation_from_definitions() {
    let (m, n, p) = (5, 4, 6);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut mat = |_: ()| DMatrix::from_fn(m * n, p, |_, _| gaussian(&mut rng));
        let (y, l, s, e) = (mat(()), mat(()), mat(()), mat(()));
        let observed: Vec<bool> = (0..m * n * p).map(|_| rng.random_bool(0.75)).collect();
        let mask = MaskTensor::from_vec(m, n, p, observed.clone()).unwrap();
        let (lam_l, lam_s, lam_e) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        for mode in [TvMode::TwoD, TvMode::ThreeD] {
            let w = build_tv_weights(&mask, mode);
            let yt = VideoTensor::from_matrix(m, n, y.clone()).unwrap();
            let got = prpca_cost(&yt, &mask, &l, &s, &e, &w, lam_l, lam_s, lam_e).unwrap();

            let fit: f64 = (0..m * n * p)
                .filter(|&idx| observed[idx])
                .map(|idx| {
                    let (r, k) = (idx % (m * n), idx / (m * n));
                    (y[(r, k)] - l[(r, k)] - s[(r, k)] - e[(r, k)]).powi(2)
                })
                .sum();
            let nuclear: f64 = l.clone().svd(false, false).singular_values.iter().sum();
            let l1: f64 = e.iter().map(|v| v.abs()).sum();
            let tv = tv_by_definition(&s, &mask, m, n, mode == TvMode::ThreeD);
            let want = 0.5 * fit + lam_l * nuclear + lam_s * tv + lam_e * l1;
            assert!((got - want).abs() <= 1e-10 * want.abs(), "seed {seed} {mode:?}: {got} vs {want}");
        }
    }
}

/// Static rank-1 background `u vᵀ` with brightness varying over time.
fn rank_one_video(m: usize, n: usize, p: usize) -> VideoTensor {
    let u = DMatrix::from_fn(m * n, 1, |r, _| 0.4 + 0.3 * ((r % m) as f64 * 0.4).sin() * ((r / m) as f64 * 0.3).cos());
    let v = DMatrix::from_fn(1, p, |_, k| 0.8 + 0.2 * (k as f64 * 0.7).cos());
    VideoTensor::from_matrix(m, n, u * v).unwrap()
}

#[test]
fn planted_rank_one_background_is_recovered() {
    let (m, n, p) = (16, 12, 10);
    let y = rank_one_video(m, n, p);
    let mask = MaskTensor::all_ones(m, n, p);
    let mut cfg = SolverConfig::defaults(m, n, TvMode::ThreeD);
    cfg.lam_e = 10.0;
    let d = prpca_run(&y, &mask, &cfg).unwrap();
    let yn = y.as_matrix().norm();
    assert_eq!(d.history.len(), 150);
    assert!(rel(&d.l, y.as_matrix()) <= 1e-3);
    assert!(d.s.norm() <= 1e-3 * yn);
    assert!(d.e.norm() <= 1e-3 * yn);
}

#[test]
fn planted_outliers_land_in_e_and_blob_in_s() {
    let scene = make_synthetic_scene(&SceneConfig::panning(32, 32, 16, 0, 21)).unwrap();
    let (noisy, kept) = corrupt(&scene.truth.clean, &CorruptionSpec::new(CorruptionKind::SaltPepper, 0.1, 21)).unwrap();
    let (m, n, p) = noisy.shape();
    let mask = MaskTensor::all_ones(m, n, p);
    let mut cfg = SolverConfig::defaults(m, n, TvMode::ThreeD);
    cfg.lam_e = 0.1 / ((m * n) as f64).sqrt();
    let d = prpca_run(&noisy, &mask, &cfg).unwrap();

    // An outlier that happened to equal the clean value is not an outlier.
    let clean = scene.truth.clean.as_slice();
    let planted: Vec<usize> = (0..m * n * p)
        .filter(|&i| !kept.as_slice()[i] && noisy.as_slice()[i] != clean[i])
        .collect();
    let found = planted.iter().filter(|&&i| d.e.as_slice()[i] != 0.0).count();
    let recall = found as f64 / planted.len() as f64;
    assert!(recall >= 0.9, "E recall {recall}");

    let blob: Vec<usize> = (0..m * n * p)
        .filter(|&i| scene.foreground_mask.as_slice()[i] && kept.as_slice()[i])
        .collect();
    let energy = |x: &DMatrix<f64>| blob.iter().map(|&i| x.as_slice()[i].powi(2)).sum::<f64>();
    let (es, ee) = (energy(&d.s), energy(&d.e));
    assert!(es > ee, "blob energy in S {es} vs E {ee}");
}

#[test]
fn svt_and_optshrink_agree_on_clean_rank_one() {
    let (m, n, p) = (16, 12, 10);
    let y = rank_one_video(m, n, p);
    let mask = MaskTensor::all_ones(m, n, p);
    let mut cfg = SolverConfig::defaults(m, n, TvMode::ThreeD);
    let sv = y.as_matrix().clone().svd(false, false).singular_values;
    // Keeps exactly one component.
    cfg.lam_l = 1e-4 * sv.max();
    assert!(sv.iter().filter(|&&s| s > cfg.lam_l).count() == 1);
    let a = prpca_run(&y, &mask, &cfg).unwrap();
    let b = prpca_svt_run(&y, &mask, &cfg).unwrap();
    let gap = rel(&b.l, &a.l);
    assert!(gap <= 1e-3, "relative L gap {gap}");
}

#[test]
fn rpca_recovers_planted_sparse_support() {
    let (rows, p) = (120, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let low = DMatrix::from_fn(rows, 2, |_, _| gaussian(&mut rng)) * DMatrix::from_fn(2, p, |_, _| gaussian(&mut rng)) * 0.3;
    let mut sparse = DMatrix::zeros(rows, p);
    for v in sparse.iter_mut() {
        if rng.random_bool(0.05) {
            *v = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(2.0..4.0);
        }
    }
    let y = VideoTensor::from_matrix(rows, 1, &low + &sparse).unwrap();
    let mask = MaskTensor::all_ones(rows, 1, p);
    let lam_s = 1.0 / (rows.max(p) as f64).sqrt();
    let out = rpca_missing_run(&y, &mask, 1.0, lam_s, 0.5, 500).unwrap();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (est, truth) in out.s.iter().zip(sparse.iter()) {
        match (est.abs() > 0.1, *truth != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let f = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    assert!(f >= 0.95, "support F-measure {f} (tp {tp}, fp {fp}, fn {fn_})");
}

#[test]
fn tvrpca_reaches_feasibility() {
    let (m, n, p) = (10, 8, 12);
    let y = rank_one_video(m, n, p);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let observed: Vec<bool> = (0..m * n * p).map(|_| rng.random_bool(0.85)).collect();
    let mask = MaskTensor::from_vec(m, n, p, observed).unwrap();
    let mut cfg = TvRpcaConfig::defaults(m * n, p, 1.0);
    cfg.iters = 300;
    let out = tvrpca_missing_run(&y, &mask, &cfg).unwrap();
    let mut masked = y.as_matrix().clone();
    mask.apply_in_place(&mut masked);
    let target = 1e-3 * masked.norm();
    let reached = out.residuals.iter().position(|&r| r <= target);
    assert!(reached.is_some(), "final residual {} vs {target}", out.residuals.last().unwrap());
}
