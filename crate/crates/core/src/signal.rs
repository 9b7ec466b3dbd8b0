//! Windowed STFT analysis, HTK mel filterbank, log-mel features and
//! overlap-add ISTFT synthesis.
//!
//! DFT convention: unnormalized forward, 1/N inverse. Frames are centered by
//! reflect-padding `n_fft / 2` samples at both ends, so a signal of `len`
//! samples yields `len / hop + 1` frames.

use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;

use crate::fft::RealDft;
use crate::hash::fnv1a64;
use crate::prelude::*;
use crate::{Error, Result};

/// Default silence floor applied before the logarithm.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-5;

/// Overlap-add normalizers below this value are treated as zero.
pub const COLA_THRESHOLD: f64 = 1e-10;

/// A mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter(
                "sample_rate must be positive".into(),
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn tag(self) -> u8 {
        match self {
            WindowKind::Hann => 0,
            WindowKind::Hamming => 1,
            WindowKind::Rectangular => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(WindowKind::Hann),
            1 => Ok(WindowKind::Hamming),
            2 => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unsupported window tag {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Hamming => "hamming",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unsupported window kind '{other}'"
            ))),
        }
    }
}

/// Periodic window of length `n_fft`.
pub fn make_window(kind: WindowKind, n_fft: usize) -> Result<Vec<f64>> {
    if n_fft < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "window length {n_fft} < 2"
        )));
    }
    let n = n_fft as f64;
    let w = (0..n_fft)
        .map(|i| {
            let phase = 2.0 * PI * i as f64 / n;
            match kind {
                WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                WindowKind::Rectangular => 1.0,
            }
        })
        .collect();
    Ok(w)
}

/// STFT geometry without the mel stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl StftParams {
    pub fn new(n_fft: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let params = Self { n_fft, hop, window };
        params.validate()?;
        Ok(params)
    }

    /// Hann window with a quarter-frame hop.
    pub fn hann_quarter_hop(n_fft: usize) -> Result<Self> {
        Self::new(n_fft, n_fft / 4, WindowKind::Hann)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "n_fft {} < 2",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidConfig(alloc::format!(
                "hop {} must satisfy 0 < hop <= n_fft ({})",
                self.hop,
                self.n_fft
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Parameters of the log-mel front end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            window: WindowKind::Hann,
            n_mels: 96,
            sample_rate: 44_100,
            f_min: 0.0,
            f_max: 22_050.0,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }
}

impl AnalysisConfig {
    /// Defaults with `f_max` at Nyquist for the given rate.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            f_max: sample_rate as f64 / 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft_params().validate()?;
        if self.n_mels == 0 {
            return Err(Error::InvalidConfig("n_mels must be at least 1".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidConfig(alloc::format!(
                "need 0 <= f_min < f_max <= {nyquist}, got f_min={} f_max={}",
                self.f_min,
                self.f_max
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(Error::InvalidConfig(
                "log_floor must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn stft_params(&self) -> StftParams {
        StftParams {
            n_fft: self.n_fft,
            hop: self.hop,
            window: self.window,
        }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Log-domain value of silence.
    pub fn log_floor_value(&self) -> f64 {
        self.log_floor.ln()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(45);
        out.extend_from_slice(&(self.n_fft as u32).to_le_bytes());
        out.extend_from_slice(&(self.hop as u32).to_le_bytes());
        out.push(self.window.tag());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.f_min.to_le_bytes());
        out.extend_from_slice(&self.f_max.to_le_bytes());
        out.extend_from_slice(&self.log_floor.to_le_bytes());
        out
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.canonical_bytes())
    }
}

/// Complex STFT, frame-major: `values[t * bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    values: Vec<Complex64>,
    config: AnalysisConfig,
}

impl ComplexSpectrogram {
    pub fn new(config: AnalysisConfig, frames: usize, values: Vec<Complex64>) -> Result<Self> {
        let bins = config.bins();
        if values.len() != frames * bins {
            return Err(Error::DimensionMismatch {
                context: "complex spectrogram",
                expected: frames * bins,
                found: values.len(),
            });
        }
        if values
            .iter()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::NonFinite("complex spectrogram"));
        }
        Ok(Self {
            frames,
            bins,
            values,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.values[t * self.bins + k]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }
}

/// Maps `i` into `[0, n)` by repeated mirror reflection without edge repeat.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub(crate) fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    (0..n + 2 * pad)
        .map(|i| samples[reflect_index(i as isize - pad as isize, n)])
        .collect()
}

pub(crate) fn centered_frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

/// Frames `padded` at offsets `t * hop` for `frames` frames.
pub(crate) fn analyze_frames(
    padded: &[f64],
    window: &[f64],
    hop: usize,
    frames: usize,
) -> Vec<Complex64> {
    let n_fft = window.len();
    let dft = RealDft::new(n_fft);
    let bins = dft.bins();
    let mut out = vec![Complex64::new(0.0, 0.0); frames * bins];
    let mut frame = vec![0.0; n_fft];
    let mut buf = Vec::with_capacity(n_fft);
    for t in 0..frames {
        let start = t * hop;
        for (n, slot) in frame.iter_mut().enumerate() {
            *slot = padded.get(start + n).copied().unwrap_or(0.0) * window[n];
        }
        dft.forward(&frame, &mut buf, &mut out[t * bins..(t + 1) * bins]);
    }
    out
}

/// Centered STFT of raw samples; returns `(frames, values)`.
pub(crate) fn centered_stft(
    samples: &[f64],
    window: &[f64],
    hop: usize,
) -> (usize, Vec<Complex64>) {
    let padded = reflect_pad(samples, window.len() / 2);
    let frames = centered_frame_count(samples.len(), hop);
    (frames, analyze_frames(&padded, window, hop, frames))
}

/// Centered magnitude spectrogram, frame-major; returns `(frames, bins, values)`.
pub fn magnitude_spectrogram(
    samples: &[f64],
    params: &StftParams,
) -> Result<(usize, usize, Vec<f64>)> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("waveform"));
    }
    let window = make_window(params.window, params.n_fft)?;
    let (frames, values) = centered_stft(samples, &window, params.hop);
    Ok((
        frames,
        params.bins(),
        values.iter().map(|c| c.norm()).collect(),
    ))
}

/// Centered STFT with the window, hop and size of `config`.
pub fn stft(waveform: &Waveform, config: &AnalysisConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    if waveform.sample_rate() != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate,
            found: waveform.sample_rate(),
        });
    }
    if waveform.is_empty() {
        return Err(Error::EmptyInput("waveform"));
    }
    let window = make_window(config.window, config.n_fft)?;
    let (frames, values) = centered_stft(waveform.samples(), &window, config.hop);
    ComplexSpectrogram::new(*config, frames, values)
}

/// Overlap-add of inverse frames. Returns the uncropped buffer of length
/// `n_fft + hop * (frames - 1)` and the squared-window normalizer.
/// Samples whose normalizer is at most `floor` are left unnormalized.
pub(crate) fn overlap_add(
    values: &[Complex64],
    frames: usize,
    window: &[f64],
    hop: usize,
    floor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n_fft = window.len();
    let dft = RealDft::new(n_fft);
    let bins = dft.bins();
    let total = if frames == 0 {
        0
    } else {
        n_fft + hop * (frames - 1)
    };
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut frame = vec![0.0; n_fft];
    let mut buf = Vec::with_capacity(n_fft);
    for t in 0..frames {
        dft.inverse(&values[t * bins..(t + 1) * bins], &mut buf, &mut frame);
        let start = t * hop;
        for n in 0..n_fft {
            out[start + n] += window[n] * frame[n];
            norm[start + n] += window[n] * window[n];
        }
    }
    for (o, &w) in out.iter_mut().zip(&norm) {
        if w > floor {
            *o /= w;
        }
    }
    (out, norm)
}

/// Checks the normalizer on the retained region `[offset, offset + len)`.
pub(crate) fn check_cola(norm: &[f64], offset: usize, len: usize) -> Result<()> {
    let end = (offset + len).min(norm.len());
    for (i, &w) in norm.iter().enumerate().take(end).skip(offset) {
        if w < COLA_THRESHOLD {
            return Err(Error::ColaViolation {
                sample: i - offset,
                value: w,
            });
        }
    }
    Ok(())
}

/// Copies `len` samples starting at `offset`, zero-filling past the end.
pub(crate) fn crop(padded: &[f64], offset: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| padded.get(offset + i).copied().unwrap_or(0.0))
        .collect()
}

/// Squared-window overlap-add inverse of a centered STFT.
///
/// The centering pad of `n_fft / 2` samples is removed; the output has
/// `length` samples when given and `hop * (frames - 1)` otherwise.
pub fn istft(
    spectrogram: &ComplexSpectrogram,
    synthesis_window: &[f64],
    hop: usize,
    length: Option<usize>,
) -> Result<Waveform> {
    let n_fft = synthesis_window.len();
    if n_fft / 2 + 1 != spectrogram.bins() {
        return Err(Error::DimensionMismatch {
            context: "istft window length vs spectrogram bins",
            expected: (spectrogram.bins() - 1) * 2,
            found: n_fft,
        });
    }
    if hop == 0 {
        return Err(Error::InvalidParameter("hop must be positive".into()));
    }
    let frames = spectrogram.frames();
    let (padded, norm) = overlap_add(
        spectrogram.values(),
        frames,
        synthesis_window,
        hop,
        COLA_THRESHOLD,
    );
    let offset = n_fft / 2;
    let len = length.unwrap_or(hop * frames.saturating_sub(1));
    check_cola(&norm, offset, len)?;
    Waveform::new(crop(&padded, offset, len), spectrogram.config().sample_rate)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK mel filters, `weights[m * bins + k]`, unnormalized (peak ≤ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    /// Wraps an explicit weight matrix after checking it is a valid bank.
    pub fn from_weights(n_mels: usize, n_bins: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_mels * n_bins {
            return Err(Error::DimensionMismatch {
                context: "mel filterbank weights",
                expected: n_mels * n_bins,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "filterbank weights must be finite and non-negative".into(),
            ));
        }
        for m in 0..n_mels {
            if !weights[m * n_bins..(m + 1) * n_bins]
                .iter()
                .any(|&w| w > 0.0)
            {
                return Err(Error::EmptyMelFilter { index: m });
            }
        }
        Ok(Self {
            n_mels,
            n_bins,
            weights,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Bin index of the largest weight in row `m` (lowest index on ties).
    pub fn peak_bin(&self, m: usize) -> usize {
        let row = self.row(m);
        let mut best = 0;
        for (k, &w) in row.iter().enumerate() {
            if w > row[best] {
                best = k;
            }
        }
        best
    }

    /// `out[m] = Σ_k H[m][k] · spectrum[k]`.
    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(spectrum).map(|(w, s)| w * s).sum();
        }
    }
}

pub fn make_mel_filterbank(config: &AnalysisConfig) -> Result<MelFilterbank> {
    config.validate()?;
    let n_mels = config.n_mels;
    let bins = config.bins();
    let mel_lo = hz_to_mel(config.f_min);
    let mel_hi = hz_to_mel(config.f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.n_fft as f64;
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (center - lo);
            let falling = (hi - f) / (hi - center);
            weights[m * bins + k] = rising.min(falling).max(0.0);
        }
    }
    MelFilterbank::from_weights(n_mels, bins, weights)
}

/// Natural-log mel power, frame-major: `values[t * mels + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    frames: usize,
    mels: usize,
    values: Vec<f64>,
    config: AnalysisConfig,
}

impl LogMelSpectrogram {
    /// Values must be finite and not below `ln(log_floor)` (f32 rounding slack allowed).
    pub fn new(
        config: AnalysisConfig,
        frames: usize,
        mels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != frames * mels {
            return Err(Error::DimensionMismatch {
                context: "log-mel spectrogram",
                expected: frames * mels,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-mel spectrogram"));
        }
        let floor = config.log_floor_value();
        let slack = 1e-6 * floor.abs().max(1.0);
        if values.iter().any(|&v| v < floor - slack) {
            return Err(Error::InvalidParameter(
                "log-mel value below ln(log_floor)".into(),
            ));
        }
        Ok(Self {
            frames,
            mels,
            values,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn mels(&self) -> usize {
        self.mels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.mels + m]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.mels..(t + 1) * self.mels]
    }

    /// Frames `[start, start + len)`, padding past the end with the floor value.
    pub fn crop_frames(&self, start: usize, len: usize) -> Self {
        let floor = self.config.log_floor_value();
        let mut values = Vec::with_capacity(len * self.mels);
        for t in start..start + len {
            if t < self.frames {
                values.extend_from_slice(self.frame(t));
            } else {
                values.extend(core::iter::repeat_n(floor, self.mels));
            }
        }
        Self {
            frames: len,
            mels: self.mels,
            values,
            config: self.config,
        }
    }
}

/// `value[t][m] = ln(max(log_floor, Σ_k H_m[k] |X_t[k]|²))`.
pub fn log_mel(
    spectrogram: &ComplexSpectrogram,
    filterbank: &MelFilterbank,
    log_floor: f64,
) -> Result<LogMelSpectrogram> {
    if filterbank.n_bins() != spectrogram.bins() {
        return Err(Error::DimensionMismatch {
            context: "filterbank columns vs spectrogram bins",
            expected: spectrogram.bins(),
            found: filterbank.n_bins(),
        });
    }
    if !(log_floor > 0.0) {
        return Err(Error::InvalidParameter("log_floor must be positive".into()));
    }
    let mels = filterbank.n_mels();
    let mut values = vec![0.0; spectrogram.frames() * mels];
    let mut power = vec![0.0; spectrogram.bins()];
    for t in 0..spectrogram.frames() {
        for (p, c) in power.iter_mut().zip(spectrogram.frame(t)) {
            *p = c.norm_sqr();
        }
        let row = &mut values[t * mels..(t + 1) * mels];
        filterbank.apply(&power, row);
        for v in row.iter_mut() {
            *v = v.max(log_floor).ln();
        }
    }
    let config = AnalysisConfig {
        log_floor,
        ..*spectrogram.config()
    };
    LogMelSpectrogram::new(config, spectrogram.frames(), mels, values)
}

/// STFT, filterbank and log in one call.
pub fn waveform_to_log_mel(
    waveform: &Waveform,
    config: &AnalysisConfig,
) -> Result<LogMelSpectrogram> {
    let spec = stft(waveform, config)?;
    let fb = make_mel_filterbank(config)?;
    log_mel(&spec, &fb, config.log_floor)
}
