//! Numerical checks of the Lipschitz bounds behind the codec.
//!
//! The inverse STFT bound has two forms. The raw form `‖h‖∞·√(N·T)` assumes
//! a unitary DFT and plain overlap-add. The adjusted form is an upper bound
//! for the operator implemented in [`crate::signal::istft`]: a one-sided
//! spectrum, `1/N` inverse and squared-window normalization, giving
//! `‖h‖∞·√(2T/N) / ν_min` where `ν_min` is the smallest normalizer on the
//! retained samples.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::fnv1a64;
use crate::linalg::{distance2, norm2};
use crate::losses::{
    feature_matching_loss, magnitude_map, perceptual_loss_maps, FeatureStack, Reduction,
};
use crate::prelude::*;
use crate::signal::{
    check_cola, crop, make_window, overlap_add, LogMelSpectrogram, StftParams, WindowKind,
    COLA_THRESHOLD,
};
use crate::vocoder::{snake_unchecked, synthesize, MelInverse, VocoderMode, VocoderSpec};
use crate::vq::{decode, encode, patchify, quantization_delta, Codebook};
use crate::{Error, Result};

/// Relative slack for floating-point rounding in the bound comparisons.
pub const BOUND_SLACK: f64 = 1e-9;

/// Pairs closer than this are skipped by [`empirical_lipschitz`].
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstftBound {
    /// `‖h‖∞·√(N·T)`.
    pub coarse_form: f64,
    /// Upper bound for the implemented inverse.
    pub convention_adjusted: f64,
    /// Smallest squared-window normalizer over the retained samples.
    pub min_normalizer: f64,
}

/// Both forms of the inverse STFT Lipschitz constant for `frames` frames.
pub fn istft_lipschitz_bound(window: &[f64], hop: usize, frames: usize) -> Result<IstftBound> {
    let n = window.len();
    if n == 0 || hop == 0 || frames == 0 {
        return Err(Error::InvalidParameter(
            "window, hop and frames must be non-empty".into(),
        ));
    }
    if window.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("window"));
    }
    let h_inf = window.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let coarse_form = h_inf * ((n * frames) as f64).sqrt();
    let total = n + hop * (frames - 1);
    let mut norm = vec![0.0; total];
    for t in 0..frames {
        for (k, w) in window.iter().enumerate() {
            norm[t * hop + k] += w * w;
        }
    }
    let offset = n / 2;
    let len = hop * (frames - 1);
    let min_normalizer = if len == 0 {
        norm[offset.min(total - 1)]
    } else {
        norm[offset..offset + len]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    let convention_adjusted = if min_normalizer > COLA_THRESHOLD {
        h_inf * (2.0 * frames as f64 / n as f64).sqrt() / min_normalizer
    } else {
        f64::INFINITY
    };
    Ok(IstftBound {
        coarse_form,
        convention_adjusted,
        min_normalizer,
    })
}

/// Factors of the Lipschitz constant of the fixed-phase vocoder as a function
/// of the log-mel input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBudget {
    pub istft_bound: f64,
    pub mel_inverse_norm: f64,
    pub exp_bound: f64,
    pub composed: f64,
}

impl LipschitzBudget {
    pub fn new(istft_bound: f64, mel_inverse_norm: f64, exp_bound: f64) -> Result<Self> {
        let parts = [istft_bound, mel_inverse_norm, exp_bound];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::BudgetUnavailable(alloc::format!(
                "istft {istft_bound}, mel inverse {mel_inverse_norm}, exp {exp_bound}"
            )));
        }
        Ok(Self {
            istft_bound,
            mel_inverse_norm,
            exp_bound,
            composed: istft_bound * mel_inverse_norm * exp_bound,
        })
    }

    /// Budget for `frames`-frame inputs to the vocoder described by `spec`.
    pub fn for_vocoder(spec: &VocoderSpec, inverse: &MelInverse, frames: usize) -> Result<Self> {
        let istft = istft_lipschitz_bound(&spec.synthesis_window, spec.hop, frames)?;
        Self::new(
            istft.convention_adjusted,
            inverse.spectral_norm(),
            spec.v_max.exp(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub trials: usize,
    /// Pairs skipped because they were closer than [`MIN_PAIR_DISTANCE`].
    pub skipped: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub holds: bool,
    /// FNV-1a of the worst pair's input bytes.
    pub witness: u64,
}

/// Largest observed `‖map(u) − map(v)‖ / ‖u − v‖` over `trials` sampled pairs.
pub fn empirical_lipschitz<M, S>(
    mut map: M,
    mut sampler: S,
    trials: usize,
    seed: u64,
    bound: f64,
) -> Result<BoundReport>
where
    M: FnMut(&[f64]) -> Result<Vec<f64>>,
    S: FnMut(&mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>),
{
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "at least one trial is required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    let mut witness = 0;
    let mut skipped = 0;
    for trial in 0..trials {
        let (u, v) = sampler(&mut rng);
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "sampled pair",
                expected: u.len(),
                found: v.len(),
            });
        }
        let denom = distance2(&u, &v);
        if denom < MIN_PAIR_DISTANCE {
            skipped += 1;
            continue;
        }
        let wrap = |e| Error::TrialFailed {
            trial,
            source: Box::new(e),
        };
        let fu = map(&u).map_err(wrap)?;
        let fv = map(&v).map_err(wrap)?;
        if fu.len() != fv.len() {
            return Err(wrap(Error::DimensionMismatch {
                context: "map output",
                expected: fu.len(),
                found: fv.len(),
            }));
        }
        let ratio = distance2(&fu, &fv) / denom;
        if !ratio.is_finite() {
            return Err(wrap(Error::NonFinite("lipschitz ratio")));
        }
        if ratio > max_ratio || trial == 0 {
            max_ratio = ratio;
            witness = pair_fingerprint(&u, &v);
        }
    }
    Ok(BoundReport {
        trials,
        skipped,
        max_ratio,
        bound,
        holds: max_ratio <= bound,
        witness,
    })
}

fn pair_fingerprint(u: &[f64], v: &[f64]) -> u64 {
    let bytes: Vec<u8> = u.iter().chain(v).flat_map(|x| x.to_le_bytes()).collect();
    fnv1a64(&bytes)
}

/// The implemented inverse STFT on an interleaved `(re, im)` spectrogram.
pub fn istft_interleaved(
    values: &[f64],
    window: &[f64],
    hop: usize,
    frames: usize,
) -> Result<Vec<f64>> {
    let bins = window.len() / 2 + 1;
    if values.len() != 2 * bins * frames {
        return Err(Error::DimensionMismatch {
            context: "interleaved spectrogram",
            expected: 2 * bins * frames,
            found: values.len(),
        });
    }
    let spec: Vec<Complex64> = values
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    let (padded, norm) = overlap_add(&spec, frames, window, hop, COLA_THRESHOLD);
    let offset = window.len() / 2;
    let len = hop * frames.saturating_sub(1);
    check_cola(&norm, offset, len)?;
    Ok(crop(&padded, offset, len))
}

/// Random Gaussian spectrogram pairs through the inverse STFT, compared
/// against the adjusted bound.
pub fn check_istft_lipschitz(
    window: WindowKind,
    n_fft: usize,
    hop: usize,
    frames: usize,
    trials: usize,
    seed: u64,
) -> Result<(IstftBound, BoundReport)> {
    let params = StftParams::new(n_fft, hop, window)?;
    let h = make_window(params.window, n_fft)?;
    let bound = istft_lipschitz_bound(&h, hop, frames)?;
    let dim = 2 * params.bins() * frames;
    let report = empirical_lipschitz(
        |x| istft_interleaved(x, &h, hop, frames),
        |rng| (gaussian_vec(rng, dim), gaussian_vec(rng, dim)),
        trials,
        seed,
        bound.convention_adjusted,
    )?;
    Ok((bound, report))
}

/// Pointwise Snake on vectors in `[-10, 10]^dim`, with nearby and far pairs.
pub fn check_snake_lipschitz(a: f64, dim: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    crate::vocoder::snake(0.0, a)?;
    empirical_lipschitz(
        |x| Ok(x.iter().map(|&v| snake_unchecked(v, a)).collect()),
        |rng| {
            let u: Vec<f64> = (0..dim)
                .map(|_| rng.random::<f64>() * 20.0 - 10.0)
                .collect();
            let scale = if rng.random::<bool>() { 1e-4 } else { 5.0 };
            let v = u
                .iter()
                .map(|&x| x + (rng.random::<f64>() * 2.0 - 1.0) * scale)
                .collect();
            (u, v)
        },
        trials,
        seed,
        2.0 + 1e-6,
    )
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Per-clip links of `‖f(ŝ) − f(s)‖ ≤ L̂·‖ŝ − s‖ ≤ L̂·Δ_total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBound {
    /// `‖f(ŝ) − f(s)‖`.
    pub output_error: f64,
    /// `‖ŝ − s‖`.
    pub input_error: f64,
    /// Euclidean norm of the per-patch nearest-code distances.
    pub delta_total: f64,
    pub vocoder_link: bool,
    pub quantizer_link: bool,
    /// Codes are at least as far as the nearest one for every patch.
    pub ordering_holds: bool,
}

impl ClipBound {
    pub fn holds(&self) -> bool {
        self.vocoder_link && self.quantizer_link && self.ordering_holds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedErrorReport {
    pub budget: LipschitzBudget,
    pub clips: Vec<ClipBound>,
    /// Smallest `(L̂·Δ_total − output_error) / (L̂·Δ_total)` over clips
    /// with non-zero right-hand side.
    pub worst_margin: f64,
    pub worst_clip: usize,
}

impl BoundedErrorReport {
    pub fn holds(&self) -> bool {
        self.clips.iter().all(ClipBound::holds)
    }

    pub fn passing(&self) -> usize {
        self.clips.iter().filter(|c| c.holds()).count()
    }

    /// Summary with `max_ratio = max output_error / Δ_total` against `L̂`.
    pub fn summary(&self) -> BoundReport {
        let mut max_ratio = 0.0f64;
        let mut worst = 0;
        for (i, c) in self.clips.iter().enumerate() {
            let r = if c.output_error == 0.0 {
                0.0
            } else {
                c.output_error / c.delta_total
            };
            if r > max_ratio {
                max_ratio = r;
                worst = i;
            }
        }
        let bound = self.budget.composed * (1.0 + BOUND_SLACK);
        BoundReport {
            trials: self.clips.len(),
            skipped: 0,
            max_ratio,
            bound,
            holds: self.holds() && max_ratio <= bound,
            witness: worst as u64,
        }
    }
}

/// Quantizes every clip, synthesizes both versions with the fixed-phase
/// vocoder and checks each link of the error chain.
pub fn verify_bounded_error(
    clips: &[LogMelSpectrogram],
    codebook: &Codebook,
    inverse: &MelInverse,
    spec: &VocoderSpec,
) -> Result<BoundedErrorReport> {
    if !matches!(spec.mode, VocoderMode::LinearFixedPhase { .. }) {
        return Err(Error::InvalidParameter(
            "bounded-error check needs the linear fixed-phase vocoder".into(),
        ));
    }
    let first = clips
        .first()
        .ok_or(Error::EmptyInput("bounded-error corpus"))?;
    let shape = (first.frames(), first.mels());
    let budget = LipschitzBudget::for_vocoder(spec, inverse, shape.0)?;
    let mut out = Vec::with_capacity(clips.len());
    let mut worst_margin = f64::INFINITY;
    let mut worst_clip = 0;
    for (i, s) in clips.iter().enumerate() {
        if (s.frames(), s.mels()) != shape {
            return Err(Error::DimensionMismatch {
                context: "bounded-error clip frames",
                expected: shape.0 * shape.1,
                found: s.frames() * s.mels(),
            });
        }
        let tokens = encode(s, codebook)?;
        let s_hat = decode(&tokens, codebook, s.config())?;
        let grid = patchify(s, codebook.patch_h(), codebook.patch_w())?;
        let q = quantization_delta(codebook, &grid.patches)?;
        let delta_total = q.delta_total();
        let input_error = distance2(s.values(), s_hat.values());
        let y = synthesize(s, inverse, spec)?.waveform;
        let y_hat = synthesize(&s_hat, inverse, spec)?.waveform;
        let output_error = distance2(y.samples(), y_hat.samples());
        let scale = norm2(y.samples()).max(norm2(y_hat.samples()));
        let tiny = 1e-12 * scale.max(1.0);
        let vocoder_link =
            output_error <= budget.composed * input_error * (1.0 + BOUND_SLACK) + tiny;
        let quantizer_link = input_error <= delta_total * (1.0 + BOUND_SLACK) + 1e-12;
        let rhs = budget.composed * delta_total;
        if rhs > 0.0 {
            let margin = (rhs - output_error) / rhs;
            if margin < worst_margin {
                worst_margin = margin;
                worst_clip = i;
            }
        }
        out.push(ClipBound {
            output_error,
            input_error,
            delta_total,
            vocoder_link,
            quantizer_link,
            ordering_holds: q.ordering_holds(),
        });
    }
    Ok(BoundedErrorReport {
        budget,
        clips: out,
        worst_margin,
        worst_clip,
    })
}

/// `|feature_matching(x, x̂) − perceptual(|STFT x|, |STFT x̂|)|` with the
/// perceptual weights set to `L` and summed L1, which makes the two losses
/// the same computation.
pub fn loss_equivalence_check(
    reference: &[f64],
    estimate: &[f64],
    stack: &FeatureStack,
    params: &StftParams,
) -> Result<f64> {
    let fm = feature_matching_loss(
        reference,
        estimate,
        core::slice::from_ref(stack),
        core::slice::from_ref(params),
        1.0,
    )?;
    let l = stack.selected().len() as f64;
    let matched = stack.with_layer_weights(vec![l; stack.selected().len()])?;
    let a = magnitude_map(reference, params)?;
    let b = magnitude_map(estimate, params)?;
    let pl = perceptual_loss_maps(&a, &b, &matched, Reduction::Sum)?;
    Ok((fm - pl).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coarse_form_values() {
        let hann = make_window(WindowKind::Hann, 1024).unwrap();
        let b = istft_lipschitz_bound(&hann, 256, 96).unwrap();
        assert_relative_eq!(b.coarse_form, (1024.0f64 * 96.0).sqrt(), epsilon = 1e-9);
        assert!((b.coarse_form - 313.53).abs() < 0.01);
        let rect = make_window(WindowKind::Rectangular, 4).unwrap();
        assert_relative_eq!(
            istft_lipschitz_bound(&rect, 4, 1).unwrap().coarse_form,
            2.0,
            epsilon = 1e-12
        );
        let doubled: Vec<f64> = hann.iter().map(|w| 2.0 * w).collect();
        let d = istft_lipschitz_bound(&doubled, 256, 96).unwrap();
        assert_relative_eq!(d.coarse_form, 2.0 * b.coarse_form, epsilon = 1e-9);
    }

    #[test]
    fn adjusted_bound_for_hann_quarter_hop() {
        let hann = make_window(WindowKind::Hann, 1024).unwrap();
        let b = istft_lipschitz_bound(&hann, 256, 96).unwrap();
        assert!(b.min_normalizer > 1.0 && b.min_normalizer <= 1.5 + 1e-12);
        let expected = (2.0 * 96.0 / 1024.0f64).sqrt() / b.min_normalizer;
        assert_relative_eq!(b.convention_adjusted, expected, epsilon = 1e-12);
        assert!(b.convention_adjusted < b.coarse_form);
    }

    #[test]
    fn identity_and_scaling() {
        let sampler = |rng: &mut ChaCha8Rng| (gaussian_vec(rng, 16), gaussian_vec(rng, 16));
        let id = empirical_lipschitz(|x| Ok(x.to_vec()), sampler, 50, 1, 1.0 + 1e-12).unwrap();
        assert!((id.max_ratio - 1.0).abs() < 1e-12 && id.holds);
        let three = empirical_lipschitz(
            |x| Ok(x.iter().map(|v| 3.0 * v).collect()),
            sampler,
            50,
            1,
            3.0,
        )
        .unwrap();
        assert!((three.max_ratio - 3.0).abs() < 1e-9);
        let again = empirical_lipschitz(
            |x| Ok(x.iter().map(|v| 3.0 * v).collect()),
            sampler,
            50,
            1,
            3.0,
        )
        .unwrap();
        assert_eq!(three, again);
    }

    #[test]
    fn degenerate_pairs_are_skipped_and_failures_carry_the_trial() {
        let report =
            empirical_lipschitz(|x| Ok(x.to_vec()), |_| (vec![1.0], vec![1.0]), 5, 0, 1.0).unwrap();
        assert_eq!(report.skipped, 5);
        let mut calls = 0;
        let err = empirical_lipschitz(
            |x| {
                calls += 1;
                if calls > 4 {
                    Err(Error::NonFinite("boom"))
                } else {
                    Ok(x.to_vec())
                }
            },
            |rng| (gaussian_vec(rng, 3), gaussian_vec(rng, 3)),
            10,
            0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TrialFailed { trial: 2, .. }));
        assert!(
            empirical_lipschitz(|x| Ok(x.to_vec()), |_| (vec![0.0], vec![1.0]), 0, 0, 1.0).is_err()
        );
    }

    #[test]
    fn small_istft_respects_adjusted_bound() {
        let (bound, report) = check_istft_lipschitz(WindowKind::Hann, 64, 16, 12, 200, 5).unwrap();
        assert!(
            report.holds,
            "{} > {}",
            report.max_ratio, bound.convention_adjusted
        );
        let (_, rect) = check_istft_lipschitz(WindowKind::Rectangular, 8, 8, 6, 200, 5).unwrap();
        assert!(rect.holds);
    }

    #[test]
    fn snake_ratio_below_two() {
        for a in [0.5, 1.0, 5.0] {
            let r = check_snake_lipschitz(a, 32, 300, 9).unwrap();
            assert!(r.holds && r.max_ratio > 1.0, "{a}: {}", r.max_ratio);
        }
    }

    #[test]
    fn equivalence_is_exact_for_a_shared_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian_vec(&mut rng, 4096);
        let y = gaussian_vec(&mut rng, 4096);
        let params = StftParams::hann_quarter_hop(512).unwrap();
        let stack = FeatureStack::seeded(11);
        assert!(loss_equivalence_check(&x, &y, &stack, &params).unwrap() <= 1e-9);
        assert_eq!(
            loss_equivalence_check(&x, &x, &stack, &params).unwrap(),
            0.0
        );
    }
}
