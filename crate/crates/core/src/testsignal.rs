//! Seeded synthetic audio for tests, benchmarks and self-checks.
//!
//! Clips are a few decaying harmonic notes over a low noise bed, so that
//! every mel band carries some energy and the spectra are not flat.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::prelude::*;
use crate::signal::Waveform;

/// Deterministic clip of `len` samples with peak amplitude below 1.
pub fn clip(seed: u64, sample_rate: u32, len: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let mut samples = vec![0.0; len];
    let notes = rng.random_range(2..=4);
    for _ in 0..notes {
        let f0 = 80.0 * 2f64.powf(rng.random::<f64>() * 4.0);
        let start = rng.random_range(0..len.max(1));
        let decay = 2.0 + rng.random::<f64>() * 6.0;
        let amp = 0.05 + rng.random::<f64>() * 0.1;
        let harmonics = rng.random_range(3..=10);
        let phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.random::<f64>() * 2.0 * PI)
            .collect();
        for (n, s) in samples.iter_mut().enumerate().skip(start) {
            let t = (n - start) as f64 / sr;
            let env = (-decay * t).exp();
            for (h, phase) in phases.iter().enumerate() {
                let f = f0 * (h + 1) as f64;
                if f >= sr / 2.0 {
                    break;
                }
                *s += amp * env * (2.0 * PI * f * t + phase).sin() / (h + 1) as f64;
            }
        }
    }
    let bed = Normal::new(0.0, 0.003).expect("valid noise level");
    for s in samples.iter_mut() {
        *s += bed.sample(&mut rng);
    }
    let peak = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.9 {
        samples.iter_mut().for_each(|s| *s *= 0.9 / peak);
    }
    Waveform::new(samples, sample_rate).expect("finite synthetic samples")
}

/// `count` clips seeded `seed, seed + 1, ...`.
pub fn corpus(seed: u64, count: usize, sample_rate: u32, len: usize) -> Vec<Waveform> {
    (0..count as u64)
        .map(|i| clip(seed.wrapping_add(i), sample_rate, len))
        .collect()
}

/// Zero-mean Gaussian noise with standard deviation `sigma`.
pub fn gaussian_noise(seed: u64, len: usize, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect()
}

/// `x + noise` with the sample rate of `x`.
pub fn add_noise(x: &Waveform, seed: u64, sigma: f64) -> Waveform {
    let noise = gaussian_noise(seed, x.len(), sigma);
    let samples = x.samples().iter().zip(&noise).map(|(a, b)| a + b).collect();
    Waveform::new(samples, x.sample_rate()).expect("finite noisy samples")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = clip(7, 44_100, 10_000);
        assert_eq!(a, clip(7, 44_100, 10_000));
        assert_ne!(a, clip(8, 44_100, 10_000));
        assert!(a.samples().iter().all(|v| v.abs() < 1.0));
        assert!(a.samples().iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn noise_has_requested_scale() {
        let n = gaussian_noise(1, 50_000, 0.1);
        let var = n.iter().map(|v| v * v).sum::<f64>() / n.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005);
    }
}
