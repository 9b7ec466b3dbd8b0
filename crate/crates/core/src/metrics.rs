//! Reference-based objective metrics.

use crate::losses::{l1_mel, multiscale_stft_distance, DEFAULT_STFT_SCALES};
use crate::prelude::*;
use crate::signal::{
    make_mel_filterbank, stft, waveform_to_log_mel, AnalysisConfig, MelFilterbank, Waveform,
};
use crate::{Error, Result};

/// Magnitude floor applied before `log10` in [`lsd`].
pub const LSD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub id: String,
    pub lsd: f64,
    pub mel_distance: f64,
    pub stft_distance: f64,
    pub mae_mel: f64,
    pub config_fingerprint: u64,
}

fn check_pair(reference: &Waveform, estimate: &Waveform, config: &AnalysisConfig) -> Result<()> {
    for w in [reference, estimate] {
        if w.sample_rate() != config.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: config.sample_rate,
                found: w.sample_rate(),
            });
        }
    }
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "metric waveform lengths",
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    Ok(())
}

/// Log-spectral distance: per frame the RMS over bins of the `log10`
/// magnitude difference, averaged over frames.
pub fn lsd(reference: &Waveform, estimate: &Waveform, config: &AnalysisConfig) -> Result<f64> {
    check_pair(reference, estimate, config)?;
    let a = stft(reference, config)?;
    let b = stft(estimate, config)?;
    let bins = a.bins();
    let mut total = 0.0;
    for t in 0..a.frames() {
        let sq: f64 = a
            .frame(t)
            .iter()
            .zip(b.frame(t))
            .map(|(x, y)| {
                let d = x.norm().max(LSD_FLOOR).log10() - y.norm().max(LSD_FLOOR).log10();
                d * d
            })
            .sum();
        total += (sq / bins as f64).sqrt();
    }
    Ok(total / a.frames() as f64)
}

/// Mean absolute difference of mel-filtered magnitudes `H·|X|`.
pub fn mel_distance(
    reference: &Waveform,
    estimate: &Waveform,
    config: &AnalysisConfig,
) -> Result<f64> {
    check_pair(reference, estimate, config)?;
    let fb = make_mel_filterbank(config)?;
    let a = stft(reference, config)?.magnitudes();
    let b = stft(estimate, config)?.magnitudes();
    mel_magnitude_distance(&a, &b, &fb)
}

/// [`mel_distance`] on precomputed frame-major magnitude spectrograms.
pub fn mel_magnitude_distance(
    reference: &[f64],
    estimate: &[f64],
    filterbank: &MelFilterbank,
) -> Result<f64> {
    let bins = filterbank.n_bins();
    if reference.len() != estimate.len()
        || !reference.len().is_multiple_of(bins)
        || reference.is_empty()
    {
        return Err(Error::DimensionMismatch {
            context: "mel distance magnitudes",
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    let mels = filterbank.n_mels();
    let mut ma = vec![0.0; mels];
    let mut mb = vec![0.0; mels];
    let mut total = 0.0;
    let frames = reference.len() / bins;
    for t in 0..frames {
        filterbank.apply(&reference[t * bins..(t + 1) * bins], &mut ma);
        filterbank.apply(&estimate[t * bins..(t + 1) * bins], &mut mb);
        total += ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(total / (frames * mels) as f64)
}

/// Multiscale STFT magnitude distance over 512, 1024 and 2048 point frames.
pub fn stft_distance(
    reference: &Waveform,
    estimate: &Waveform,
    config: &AnalysisConfig,
) -> Result<f64> {
    check_pair(reference, estimate, config)?;
    multiscale_stft_distance(
        reference.samples(),
        estimate.samples(),
        &DEFAULT_STFT_SCALES,
    )
}

/// Element-wise L1 between log-mel spectrograms.
pub fn mae_mel(reference: &Waveform, estimate: &Waveform, config: &AnalysisConfig) -> Result<f64> {
    check_pair(reference, estimate, config)?;
    l1_mel(
        &waveform_to_log_mel(reference, config)?,
        &waveform_to_log_mel(estimate, config)?,
    )
}

pub fn evaluate_pair(
    id: &str,
    reference: &Waveform,
    estimate: &Waveform,
    config: &AnalysisConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    let report = MetricsReport {
        id: id.to_string(),
        lsd: lsd(reference, estimate, config)?,
        mel_distance: mel_distance(reference, estimate, config)?,
        stft_distance: stft_distance(reference, estimate, config)?,
        mae_mel: mae_mel(reference, estimate, config)?,
        config_fingerprint: config.fingerprint(),
    };
    let values = [
        report.lsd,
        report.mel_distance,
        report.stft_distance,
        report.mae_mel,
    ];
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("metric value"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsignal;
    use approx::assert_relative_eq;

    fn config() -> AnalysisConfig {
        AnalysisConfig::default()
    }

    #[test]
    fn identical_inputs_score_zero() {
        let x = testsignal::clip(1, 44_100, 8192);
        let r = evaluate_pair("a", &x, &x, &config()).unwrap();
        assert_eq!(
            (r.lsd, r.mel_distance, r.stft_distance, r.mae_mel),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.config_fingerprint, config().fingerprint());
    }

    #[test]
    fn tenfold_magnitude_is_one_decade() {
        let x = testsignal::clip(2, 44_100, 8192);
        let y = Waveform::new(x.samples().iter().map(|v| 10.0 * v).collect(), 44_100).unwrap();
        // exact unless a bin sits under the floor
        assert_relative_eq!(lsd(&x, &y, &config()).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn mel_distance_against_silence_is_mean_mel_magnitude() {
        let c = config();
        let x = testsignal::clip(3, 44_100, 4096);
        let zero = Waveform::new(vec![0.0; 4096], 44_100).unwrap();
        let fb = make_mel_filterbank(&c).unwrap();
        let mags = stft(&x, &c).unwrap().magnitudes();
        let mut mel = vec![0.0; 96];
        let mut total = 0.0;
        for frame in mags.chunks(c.bins()) {
            fb.apply(frame, &mut mel);
            total += mel.iter().sum::<f64>();
        }
        let expected = total / (mags.len() / c.bins() * 96) as f64;
        assert_relative_eq!(
            mel_distance(&x, &zero, &c).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_bin_two_filter_by_hand() {
        let fb = MelFilterbank::from_weights(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        // H·[3, 2] = [4, 2], H·[1, 4] = [3, 4]
        let d = mel_magnitude_distance(&[3.0, 2.0], &[1.0, 4.0], &fb).unwrap();
        assert_relative_eq!(d, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn mismatches_are_rejected() {
        let c = config();
        let x = testsignal::clip(4, 44_100, 4096);
        let short = testsignal::clip(4, 44_100, 4000);
        let other_rate = testsignal::clip(4, 22_050, 4096);
        assert!(matches!(
            lsd(&x, &short, &c),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            lsd(&x, &other_rate, &c),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_metrics() {
        let c = config();
        let x = testsignal::clip(5, 44_100, 8192);
        let y = testsignal::clip(6, 44_100, 8192);
        assert_eq!(lsd(&x, &y, &c).unwrap(), lsd(&y, &x, &c).unwrap());
        assert_eq!(
            stft_distance(&x, &y, &c).unwrap(),
            stft_distance(&y, &x, &c).unwrap()
        );
        assert_eq!(
            mel_distance(&x, &y, &c).unwrap(),
            mel_distance(&y, &x, &c).unwrap()
        );
    }
}
