//! Seeded corruption generators.
//!
//! Each frame draws from its own ChaCha stream derived from the master seed,
//! so output does not depend on the order frames are processed in.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{MaskTensor, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Each pixel replaced by 0 or 1 with probability `level`.
    SaltPepper,
    /// Additive white Gaussian noise at `level` dB SNR.
    Gaussian,
    /// Shot noise at `level` dB SNR.
    Poisson,
    /// Each pixel dropped with probability `level`.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub level: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Self {
        CorruptionSpec { kind, level, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorruptionKind::SaltPepper | CorruptionKind::Missing => {
                if !(0.0..=1.0).contains(&self.level) {
                    return Err(Error::Argument(format!(
                        "probability must lie in [0, 1], got {}",
                        self.level
                    )));
                }
            }
            CorruptionKind::Gaussian | CorruptionKind::Poisson => {
                if !self.level.is_finite() {
                    return Err(Error::Argument(format!("SNR must be finite, got {}", self.level)));
                }
            }
        }
        Ok(())
    }
}

fn frame_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// `10 log10(‖clean‖² / ‖noisy - clean‖²)`.
pub fn snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    let noise: f64 = clean.iter().zip(noisy).map(|(c, y)| (y - c) * (y - c)).sum();
    10.0 * (signal / noise).log10()
}

/// Corrupt a video; the mask is 1 wherever a pixel was left in place.
pub fn corrupt(v: &VideoTensor, spec: &CorruptionSpec) -> Result<(VideoTensor, MaskTensor)> {
    spec.validate()?;
    let (m, n, p) = v.shape();
    let mn = m * n;
    let clean = v.as_slice();
    let mut out = clean.to_vec();
    let mut kept = vec![true; clean.len()];
    match spec.kind {
        CorruptionKind::SaltPepper | CorruptionKind::Missing => {
            for k in 0..p {
                let mut rng = frame_rng(spec.seed, k);
                for idx in k * mn..(k + 1) * mn {
                    if rng.random_bool(spec.level) {
                        kept[idx] = false;
                        out[idx] = match spec.kind {
                            CorruptionKind::Missing => 0.0,
                            _ => {
                                if rng.random_bool(0.5) {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                    }
                }
            }
        }
        CorruptionKind::Gaussian => {
            let mut noise = vec![0.0; clean.len()];
            for k in 0..p {
                let mut rng = frame_rng(spec.seed, k);
                for z in &mut noise[k * mn..(k + 1) * mn] {
                    *z = StandardNormal.sample(&mut rng);
                }
            }
            let signal: f64 = clean.iter().map(|c| c * c).sum();
            let raw: f64 = noise.iter().map(|z| z * z).sum();
            if signal > 0.0 && raw > 0.0 {
                let scale = (signal / 10f64.powf(spec.level / 10.0) / raw).sqrt();
                for (o, z) in out.iter_mut().zip(&noise) {
                    *o += scale * z;
                }
            }
        }
        CorruptionKind::Poisson => {
            out = poisson_at_snr(clean, mn, p, spec)?;
        }
    }
    let video = VideoTensor::from_matrix(m, n, nalgebra::DMatrix::from_vec(mn, p, out))?;
    Ok((video, MaskTensor::from_vec(m, n, p, kept)?))
}

fn poisson_sample(clean: &[f64], mn: usize, p: usize, budget: f64, seed: u64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; clean.len()];
    for k in 0..p {
        let mut rng = frame_rng(seed, k);
        for idx in k * mn..(k + 1) * mn {
            let rate = budget * clean[idx].max(0.0);
            if rate > 0.0 {
                let dist = Poisson::new(rate).map_err(|e| Error::Numeric(e.to_string()))?;
                out[idx] = dist.sample(&mut rng) / budget;
            }
        }
    }
    Ok(out)
}

/// Photon-count noise with the budget bisected (in log scale) to hit the target SNR.
fn poisson_at_snr(clean: &[f64], mn: usize, p: usize, spec: &CorruptionSpec) -> Result<Vec<f64>> {
    if clean.iter().all(|&c| c <= 0.0) {
        return Ok(clean.to_vec());
    }
    let (mut lo, mut hi) = (-12.0f64, 27.0f64);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let noisy = poisson_sample(clean, mn, p, mid.exp(), spec.seed)?;
        let snr = snr_db(clean, &noisy);
        let miss = (snr - spec.level).abs();
        if best.as_ref().is_none_or(|(b, _)| miss < *b) {
            best = Some((miss, noisy));
        }
        if miss <= 0.05 {
            break;
        }
        // More photons, higher SNR.
        if snr < spec.level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    match best {
        Some((miss, noisy)) if miss <= 0.2 => Ok(noisy),
        _ => Err(Error::Argument(format!(
            "cannot reach {} dB with shot noise",
            spec.level
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(m: usize, n: usize, p: usize) -> VideoTensor {
        let len = m * n * p;
        let data: Vec<f64> = (0..len).map(|i| 0.1 + 0.8 * ((i * 37) % 101) as f64 / 100.0).collect();
        VideoTensor::from_matrix(m, n, nalgebra::DMatrix::from_vec(m * n, p, data)).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let v = ramp(5, 6, 3);
        for kind in [CorruptionKind::SaltPepper, CorruptionKind::Missing] {
            let (out, mask) = corrupt(&v, &CorruptionSpec::new(kind, 0.0, 1)).unwrap();
            assert_eq!(out, v);
            assert!(mask.is_all_ones());
        }
    }

    #[test]
    fn salt_pepper_fraction_concentrates() {
        let v = ramp(100, 100, 10);
        let (out, mask) = corrupt(&v, &CorruptionSpec::new(CorruptionKind::SaltPepper, 0.2, 7)).unwrap();
        let frac = 1.0 - mask.count_ones() as f64 / 1e5;
        assert!((frac - 0.2).abs() <= 0.01, "{frac}");
        for (idx, &kept) in mask.as_slice().iter().enumerate() {
            if !kept {
                let o = out.as_slice()[idx];
                assert!(o == 0.0 || o == 1.0);
            }
        }
    }

    #[test]
    fn missing_fraction_concentrates() {
        let v = ramp(100, 100, 10);
        let (out, mask) = corrupt(&v, &CorruptionSpec::new(CorruptionKind::Missing, 0.7, 8)).unwrap();
        let frac = 1.0 - mask.count_ones() as f64 / 1e5;
        assert!((frac - 0.7).abs() <= 0.01);
        assert!(mask.as_slice().iter().zip(out.as_slice()).all(|(&k, &o)| k || o == 0.0));
    }

    #[test]
    fn gaussian_hits_target_snr() {
        let v = ramp(40, 40, 4);
        let (out, mask) = corrupt(&v, &CorruptionSpec::new(CorruptionKind::Gaussian, 30.0, 9)).unwrap();
        assert!((snr_db(v.as_slice(), out.as_slice()) - 30.0).abs() <= 0.2);
        assert!(mask.is_all_ones());
    }

    #[test]
    fn poisson_hits_target_snr() {
        let v = ramp(40, 40, 4);
        let (out, _) = corrupt(&v, &CorruptionSpec::new(CorruptionKind::Poisson, 10.0, 10)).unwrap();
        assert!((snr_db(v.as_slice(), out.as_slice()) - 10.0).abs() <= 0.2);
    }

    #[test]
    fn corruption_is_deterministic() {
        let v = ramp(10, 10, 3);
        for kind in [
            CorruptionKind::SaltPepper,
            CorruptionKind::Gaussian,
            CorruptionKind::Poisson,
            CorruptionKind::Missing,
        ] {
            let level = if matches!(kind, CorruptionKind::Gaussian | CorruptionKind::Poisson) { 20.0 } else { 0.3 };
            let spec = CorruptionSpec::new(kind, level, 11);
            assert_eq!(corrupt(&v, &spec).unwrap().0, corrupt(&v, &spec).unwrap().0);
        }
    }

    #[test]
    fn invalid_levels_are_rejected() {
        let v = ramp(3, 3, 1);
        assert!(corrupt(&v, &CorruptionSpec::new(CorruptionKind::SaltPepper, 1.5, 0)).is_err());
        assert!(corrupt(&v, &CorruptionSpec::new(CorruptionKind::Gaussian, f64::NAN, 0)).is_err());
    }
}
