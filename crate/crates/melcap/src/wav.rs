//! WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use log::warn;
use melcap_core::signal::{AnalysisConfig, Waveform};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Float32,
    Pcm16,
}

/// Reads 16-bit PCM or 32-bit float audio. Multichannel files are averaged
/// down to mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wrap = |source| CliError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wrap)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wrap)?,
        (format, bits) => {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                kind: "WAV",
                message: format!("unsupported sample format {format:?} with {bits} bits"),
            })
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        warn!("{}: downmixing {channels} channels to mono", path.display());
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        kind: "WAV",
        message: e.to_string(),
    })
}

/// [`read_wav`] plus a sample-rate check against `config`.
pub fn read_wav_for(path: &Path, config: &AnalysisConfig) -> Result<Waveform> {
    let wave = read_wav(path)?;
    if wave.sample_rate() != config.sample_rate {
        return Err(melcap_core::Error::SampleRateMismatch {
            expected: config.sample_rate,
            found: wave.sample_rate(),
        }
        .into());
    }
    Ok(wave)
}

pub fn write_wav(path: &Path, wave: &Waveform, format: OutputFormat) -> Result<()> {
    let wrap = |source| CliError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: match format {
            OutputFormat::Float32 => 32,
            OutputFormat::Pcm16 => 16,
        },
        sample_format: match format {
            OutputFormat::Float32 => SampleFormat::Float,
            OutputFormat::Pcm16 => SampleFormat::Int,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    let mut clipped = 0usize;
    for &s in wave.samples() {
        match format {
            OutputFormat::Float32 => writer.write_sample(s as f32).map_err(wrap)?,
            OutputFormat::Pcm16 => {
                if s.abs() > 1.0 {
                    clipped += 1;
                }
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v).map_err(wrap)?
            }
        }
    }
    if clipped > 0 {
        warn!(
            "{}: {clipped} samples clipped to 16-bit range",
            path.display()
        );
    }
    writer.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..500)
            .map(|i| ((i as f64) * 0.01).sin() as f32 as f64)
            .collect();
        let wave = Waveform::new(samples, 22_050).unwrap();
        write_wav(&path, &wave, OutputFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), wave);
    }

    #[test]
    fn pcm16_roundtrip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let wave = Waveform::new(
            (0..300).map(|i| (i as f64 * 0.05).cos() * 0.8).collect(),
            16_000,
        )
        .unwrap();
        write_wav(&path, &wave, OutputFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in wave.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(1000i16, 3000i16), (-2000, 0)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples(), &[2000.0 / 32768.0, -1000.0 / 32768.0]);
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.wav");
        write_wav(
            &path,
            &Waveform::new(vec![0.0; 10], 16_000).unwrap(),
            OutputFormat::Float32,
        )
        .unwrap();
        let err = read_wav_for(&path, &AnalysisConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("16000"));
    }

    #[test]
    fn garbage_is_a_wav_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.wav");
        std::fs::write(&path, b"not a riff file").unwrap();
        assert!(matches!(read_wav(&path), Err(CliError::Wav { .. })));
        assert_eq!(
            read_wav(&dir.path().join("missing.wav"))
                .unwrap_err()
                .exit_code(),
            2
        );
    }
}
