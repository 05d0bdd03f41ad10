use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use prpca_bench::{corrupted_static_scene, random_matrix};
use prpca_core::registration::{warp_frame, Homography};
use prpca_core::shrinkage::{optshrink, svt};
use prpca_core::solvers::{prpca_run, SolverConfig};
use prpca_core::tv::{apply_diff, build_tv_weights, Grid, TvDenoiser, TvMode};
use prpca_core::{Frame, MaskTensor};

fn shrinkage(c: &mut Criterion) {
    let mut group = c.benchmark_group("shrinkage");
    for &(rows, cols) in &[(1024, 20), (4096, 40)] {
        let z = random_matrix(rows, cols, 1);
        group.bench_with_input(BenchmarkId::new("optshrink", format!("{rows}x{cols}")), &z, |b, z| {
            b.iter(|| optshrink(black_box(z), 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("svt", format!("{rows}x{cols}")), &z, |b, z| {
            b.iter(|| svt(black_box(z), 1.0).unwrap())
        });
    }
    group.finish();
}

fn total_variation(c: &mut Criterion) {
    let mut group = c.benchmark_group("tv");
    for &(m, n, p) in &[(32, 32, 10), (64, 64, 20)] {
        let grid = Grid::new(m, n, p);
        let x = random_matrix(m * n, p, 2);
        group.bench_function(BenchmarkId::new("apply_diff", format!("{m}x{n}x{p}")), |b| {
            b.iter(|| apply_diff(black_box(x.as_slice()), grid).unwrap())
        });
        let weights = build_tv_weights(&MaskTensor::all_ones(m, n, p), TvMode::ThreeD);
        let denoiser = TvDenoiser::new(weights, 1.0).unwrap();
        group.bench_function(BenchmarkId::new("tvdn_k10", format!("{m}x{n}x{p}")), |b| {
            b.iter(|| denoiser.denoise(black_box(x.as_slice()), 0.1, 10).unwrap())
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("prpca");
    group.sample_size(10);
    let (y, mask) = corrupted_static_scene(48, 20, 3);
    for update in ["optshrink", "svt"] {
        let mut cfg = SolverConfig::defaults(48, 48, TvMode::ThreeD);
        cfg.iters = 5;
        if update == "svt" {
            cfg.update = prpca_core::solvers::LowRankUpdate::Svt;
        }
        group.bench_function(BenchmarkId::new("five_iterations", update), |b| {
            b.iter(|| prpca_run(black_box(&y), &mask, &cfg).unwrap())
        });
    }
    group.finish();
}

fn warping(c: &mut Criterion) {
    let frame = Frame::new(random_matrix(240, 320, 4)).unwrap();
    let h = Homography::translation(12.5, -3.25);
    c.bench_function("warp_frame_240x320", |b| {
        b.iter(|| warp_frame(black_box(&frame), &h, 260, 360).unwrap())
    });
}

criterion_group!(benches, shrinkage, total_variation, solver, warping);
criterion_main!(benches);
