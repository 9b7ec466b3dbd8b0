//! Deterministic waveform synthesis from log-mel spectrograms.
//!
//! Mel power is mapped back to linear bins with a ridge pseudo-inverse `P` of
//! the filterbank. The fixed-phase path is affine in the clamped mel power:
//! `x = ISTFT(P · exp(min(v, v_max)) ⊙ e^{iφ})`, which makes it Lipschitz with
//! an explicit constant. Griffin-Lim refines the phase from the same start.

use core::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::spectral_norm;
use crate::prelude::*;
use crate::signal::{
    analyze_frames, check_cola, crop, make_window, overlap_add, LogMelSpectrogram, MelFilterbank,
    Waveform, WindowKind, COLA_THRESHOLD,
};
use crate::{Error, Result};

/// Default log-domain clamp, `ln(1e3)`.
pub const DEFAULT_V_MAX: f64 = 6.907_755_278_982_137;

/// Default ridge regularization of the mel pseudo-inverse.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

const NORM_ITERS: usize = 5000;
const NORM_TOL: f64 = 1e-13;

/// Ridge pseudo-inverse of a mel filterbank, `bins × mels` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelInverse {
    n_bins: usize,
    n_mels: usize,
    matrix: Vec<f64>,
    ridge_lambda: f64,
    clamp_nonneg: bool,
    spectral_norm: f64,
}

impl MelInverse {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn clamp_nonneg(&self) -> bool {
        self.clamp_nonneg
    }

    /// Power-iteration estimate of `‖P‖₂`.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_norm
    }

    /// `out[k] = Σ_m P[k][m] · mel[m]`.
    pub fn apply(&self, mel: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.matrix[k * self.n_mels..(k + 1) * self.n_mels]
                .iter()
                .zip(mel)
                .map(|(p, v)| p * v)
                .sum();
        }
    }
}

/// `P = Hᵀ (H Hᵀ + λI)⁻¹`, optionally with negative entries set to zero.
pub fn make_mel_inverse(
    filterbank: &MelFilterbank,
    ridge_lambda: f64,
    clamp_nonneg: bool,
) -> Result<MelInverse> {
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::InvalidParameter(
            "ridge_lambda must be finite and non-negative".into(),
        ));
    }
    let m = filterbank.n_mels();
    let f = filterbank.n_bins();
    let h = DMatrix::from_row_slice(m, f, filterbank.weights());
    let gram = &h * h.transpose() + DMatrix::identity(m, m) * ridge_lambda;
    let chol = gram.cholesky().ok_or(Error::SingularMelInverse {
        lambda: ridge_lambda,
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d), hi.max(d))
    });
    if !(lo > 0.0) || (lo / hi) < 1e-7 {
        return Err(Error::SingularMelInverse {
            lambda: ridge_lambda,
        });
    }
    // (HHᵀ + λI) X = H  =>  P = Xᵀ
    let x = chol.solve(&h);
    let mut matrix = vec![0.0; f * m];
    for k in 0..f {
        for j in 0..m {
            let v = x[(j, k)];
            matrix[k * m + j] = if clamp_nonneg { v.max(0.0) } else { v };
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMelInverse {
            lambda: ridge_lambda,
        });
    }
    let norm = spectral_norm(&matrix, f, m, NORM_ITERS, NORM_TOL)?;
    Ok(MelInverse {
        n_bins: f,
        n_mels: m,
        matrix,
        ridge_lambda,
        clamp_nonneg,
        spectral_norm: norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocoderMode {
    LinearFixedPhase { seed: u64 },
    GriffinLim { iters: usize, seed: u64 },
}

impl VocoderMode {
    pub fn seed(self) -> u64 {
        match self {
            VocoderMode::LinearFixedPhase { seed } | VocoderMode::GriffinLim { seed, .. } => seed,
        }
    }

    pub fn iters(self) -> usize {
        match self {
            VocoderMode::LinearFixedPhase { .. } => 0,
            VocoderMode::GriffinLim { iters, .. } => iters,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VocoderMode::LinearFixedPhase { .. } => "linear_fixed_phase",
            VocoderMode::GriffinLim { .. } => "griffin_lim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderSpec {
    pub mode: VocoderMode,
    pub synthesis_window: Vec<f64>,
    pub hop: usize,
    pub v_max: f64,
}

impl VocoderSpec {
    pub fn new(mode: VocoderMode, window: WindowKind, n_fft: usize, hop: usize) -> Result<Self> {
        let spec = Self {
            mode,
            synthesis_window: make_window(window, n_fft)?,
            hop,
            v_max: DEFAULT_V_MAX,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.synthesis_window.len() {
            return Err(Error::InvalidParameter(
                "vocoder hop must satisfy 0 < hop <= n_fft".into(),
            ));
        }
        if !self.v_max.is_finite() {
            return Err(Error::InvalidParameter("v_max must be finite".into()));
        }
        Ok(())
    }

    pub fn n_fft(&self) -> usize {
        self.synthesis_window.len()
    }

    pub fn bins(&self) -> usize {
        self.n_fft() / 2 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub waveform: Waveform,
    /// Log-mel entries that exceeded `v_max` and were clamped.
    pub clamped: usize,
    /// Spectral-consistency residual after each Griffin-Lim projection
    /// (first entry: the fixed-phase start). Empty for the linear path.
    pub residuals: Vec<f64>,
}

/// Unit phasors with a seeded uniform phase per bin.
pub fn fixed_phase(seed: u64, bins: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..bins)
        .map(|_| {
            let phi = rng.random::<f64>() * 2.0 * PI;
            Complex64::new(phi.cos(), phi.sin())
        })
        .collect()
}

/// Linear-bin magnitudes `P · exp(min(v, v_max))` per frame; returns the
/// frame-major magnitudes and the number of clamped entries.
pub fn mel_to_magnitudes(
    logmel: &LogMelSpectrogram,
    inverse: &MelInverse,
    v_max: f64,
) -> Result<(Vec<f64>, usize)> {
    if inverse.n_mels() != logmel.mels() {
        return Err(Error::DimensionMismatch {
            context: "mel inverse columns vs log-mel bands",
            expected: logmel.mels(),
            found: inverse.n_mels(),
        });
    }
    let bins = inverse.n_bins();
    let mut clamped = 0;
    let mut mags = vec![0.0; logmel.frames() * bins];
    let mut power = vec![0.0; logmel.mels()];
    for t in 0..logmel.frames() {
        for (p, &v) in power.iter_mut().zip(logmel.frame(t)) {
            if v > v_max {
                clamped += 1;
            }
            *p = v.min(v_max).exp();
        }
        inverse.apply(&power, &mut mags[t * bins..(t + 1) * bins]);
    }
    Ok((mags, clamped))
}

pub fn synthesize(
    logmel: &LogMelSpectrogram,
    inverse: &MelInverse,
    spec: &VocoderSpec,
) -> Result<Synthesis> {
    spec.validate()?;
    if inverse.n_bins() != spec.bins() {
        return Err(Error::DimensionMismatch {
            context: "mel inverse rows vs vocoder bins",
            expected: spec.bins(),
            found: inverse.n_bins(),
        });
    }
    let (mags, clamped) = mel_to_magnitudes(logmel, inverse, spec.v_max)?;
    let frames = logmel.frames();
    let out_len = spec.hop * frames.saturating_sub(1);
    let offset = spec.n_fft() / 2;
    let (padded, residuals) = match spec.mode {
        VocoderMode::LinearFixedPhase { seed } => {
            let values = apply_phase(&mags, &fixed_phase(seed, spec.bins()));
            let (padded, norm) = overlap_add(
                &values,
                frames,
                &spec.synthesis_window,
                spec.hop,
                COLA_THRESHOLD,
            );
            check_cola(&norm, offset, out_len)?;
            (padded, Vec::new())
        }
        VocoderMode::GriffinLim { iters, seed } => {
            let gl = griffin_lim(&mags, frames, &spec.synthesis_window, spec.hop, iters, seed)?;
            (gl.padded, gl.residuals)
        }
    };
    let waveform = Waveform::new(crop(&padded, offset, out_len), logmel.config().sample_rate)?;
    Ok(Synthesis {
        waveform,
        clamped,
        residuals,
    })
}

fn apply_phase(mags: &[f64], phase: &[Complex64]) -> Vec<Complex64> {
    let bins = phase.len();
    mags.iter()
        .enumerate()
        .map(|(i, &m)| phase[i % bins] * m)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLimResult {
    /// Uncropped signal of length `n_fft + hop · (frames − 1)`.
    pub padded: Vec<f64>,
    /// `‖ |STFT(x_i)| − A ‖₂` for `i = 0..=iters`.
    pub residuals: Vec<f64>,
}

/// Griffin-Lim phase retrieval on the uncropped overlap-add buffer.
///
/// The analysis STFT is uncentered (frames at `t · hop`) so that it is the
/// exact adjoint pair of the overlap-add inverse; each iteration is then a
/// least-squares projection and the residual cannot grow.
pub fn griffin_lim(
    magnitudes: &[f64],
    frames: usize,
    window: &[f64],
    hop: usize,
    iters: usize,
    seed: u64,
) -> Result<GriffinLimResult> {
    let bins = window.len() / 2 + 1;
    if magnitudes.len() != frames * bins {
        return Err(Error::DimensionMismatch {
            context: "griffin-lim magnitudes",
            expected: frames * bins,
            found: magnitudes.len(),
        });
    }
    if frames == 0 {
        return Err(Error::EmptyInput("griffin-lim frames"));
    }
    let offset = window.len() / 2;
    let out_len = hop * (frames - 1);
    let start = apply_phase(magnitudes, &fixed_phase(seed, bins));
    // floor 0: an exact least-squares inverse wherever any window overlaps
    let (mut x, norm) = overlap_add(&start, frames, window, hop, 0.0);
    check_cola(&norm, offset, out_len)?;
    let mut residuals = Vec::with_capacity(iters + 1);
    for i in 0..=iters {
        let analysis = analyze_frames(&x, window, hop, frames);
        let residual = analysis
            .iter()
            .zip(magnitudes)
            .map(|(c, a)| (c.norm() - a) * (c.norm() - a))
            .sum::<f64>()
            .sqrt();
        residuals.push(residual);
        if i == iters {
            break;
        }
        let projected: Vec<Complex64> = analysis
            .iter()
            .zip(magnitudes)
            .enumerate()
            .map(|(j, (c, &a))| {
                let n = c.norm();
                if n > 0.0 {
                    c * (a / n)
                } else {
                    start[j] / magnitudes[j].max(f64::MIN_POSITIVE) * a
                }
            })
            .collect();
        x = overlap_add(&projected, frames, window, hop, 0.0).0;
    }
    Ok(GriffinLimResult {
        padded: x,
        residuals,
    })
}

/// `x + sin²(a·x) / a`.
pub fn snake(x: f64, a: f64) -> Result<f64> {
    check_snake_parameter(a)?;
    Ok(snake_unchecked(x, a))
}

/// `1 + sin(2·a·x)`, always within `[0, 2]`.
pub fn snake_derivative(x: f64, a: f64) -> Result<f64> {
    check_snake_parameter(a)?;
    Ok(1.0 + (2.0 * a * x).sin())
}

#[inline]
pub(crate) fn snake_unchecked(x: f64, a: f64) -> f64 {
    let s = (a * x).sin();
    x + s * s / a
}

fn check_snake_parameter(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "snake parameter {a} must be positive"
        )))
    }
}
