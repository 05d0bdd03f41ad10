//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prpca_core::corruption::{corrupt, CorruptionKind, CorruptionSpec};
use prpca_core::synthetic::{make_synthetic_scene, SceneConfig};
use prpca_core::{MaskTensor, VideoTensor};

/// Uniform random `rows x cols` matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Static synthetic clip with 20% salt-and-pepper outliers and a full mask.
pub fn corrupted_static_scene(size: usize, frames: usize, seed: u64) -> (VideoTensor, MaskTensor) {
    let scene = make_synthetic_scene(&SceneConfig::panning(size, size, frames, 0, seed)).expect("valid scene");
    let spec = CorruptionSpec::new(CorruptionKind::SaltPepper, 0.2, seed);
    let (noisy, _) = corrupt(&scene.truth.clean, &spec).expect("valid corruption");
    (noisy, MaskTensor::all_ones(size, size, frames))
}
