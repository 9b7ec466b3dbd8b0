use melcap_core::signal::{
    istft, make_mel_filterbank, make_window, stft, waveform_to_log_mel, AnalysisConfig,
    ComplexSpectrogram, Waveform, WindowKind,
};
use melcap_core::Complex64;
use proptest::prelude::*;

fn config(n_fft: usize, hop: usize) -> AnalysisConfig {
    AnalysisConfig {
        n_fft,
        hop,
        f_max: 22_050.0,
        ..AnalysisConfig::default()
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn roundtrip(x: &Waveform, c: &AnalysisConfig) -> Vec<f64> {
    let spec = stft(x, c).unwrap();
    let h = make_window(c.window, c.n_fft).unwrap();
    istft(&spec, &h, c.hop, Some(x.len()))
        .unwrap()
        .into_samples()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hann_overlap_add_reconstructs(samples in prop::collection::vec(-1.0f64..1.0, 3000..6000), half in any::<bool>()) {
        let hop = if half { 128 } else { 64 };
        let c = config(256, hop);
        let x = Waveform::new(samples, 44_100).unwrap();
        let y = roundtrip(&x, &c);
        prop_assert!(rel_err(&y, x.samples()) <= 1e-9);
    }

    #[test]
    fn stft_is_linear(a in prop::collection::vec(-1.0f64..1.0, 2048), b in prop::collection::vec(-1.0f64..1.0, 2048), k in -4.0f64..4.0) {
        let c = config(256, 64);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| k * p + q).collect();
        let sa = stft(&Waveform::new(a, 44_100).unwrap(), &c).unwrap();
        let sb = stft(&Waveform::new(b, 44_100).unwrap(), &c).unwrap();
        let ss = stft(&Waveform::new(sum, 44_100).unwrap(), &c).unwrap();
        let scale: f64 = ss.values().iter().map(|z| z.norm()).fold(1.0, f64::max);
        for ((x, y), z) in sa.values().iter().zip(sb.values()).zip(ss.values()) {
            prop_assert!((x * k + y - z).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn istft_is_linear(frames in 2usize..10, seed in any::<u64>(), k in -3.0f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = config(128, 32);
        let bins = c.bins();
        let mut draw = || -> Vec<Complex64> {
            (0..frames * bins).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
        };
        let (va, vb) = (draw(), draw());
        let vs: Vec<Complex64> = va.iter().zip(&vb).map(|(a, b)| a * k + b).collect();
        let h = make_window(WindowKind::Hann, 128).unwrap();
        let run = |v: Vec<Complex64>| {
            istft(&ComplexSpectrogram::new(c, frames, v).unwrap(), &h, 32, None).unwrap().into_samples()
        };
        let (xa, xb, xs) = (run(va), run(vb), run(vs));
        let scale = xs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for ((a, b), s) in xa.iter().zip(&xb).zip(&xs) {
            prop_assert!((k * a + b - s).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn log_mel_respects_floor(samples in prop::collection::vec(-1.0f64..1.0, 1024..4096)) {
        let c = AnalysisConfig::default();
        let s = waveform_to_log_mel(&Waveform::new(samples, 44_100).unwrap(), &c).unwrap();
        prop_assert_eq!(s.mels(), 96);
        prop_assert!(s.values().iter().all(|v| v.is_finite() && *v >= c.log_floor_value() - 1e-12));
    }
}

#[test]
fn filter_peaks_move_upward() {
    for n_mels in [40, 80, 96, 128] {
        let c = AnalysisConfig {
            n_mels,
            n_fft: 2048,
            ..AnalysisConfig::default()
        };
        let fb = make_mel_filterbank(&c).unwrap();
        let peaks: Vec<usize> = (0..n_mels).map(|m| fb.peak_bin(m)).collect();
        assert!(
            peaks.windows(2).all(|w| w[0] <= w[1]),
            "{n_mels}: {peaks:?}"
        );
        assert!(fb.weights().iter().all(|w| (0.0..=1.0).contains(w)));
    }
}

#[test]
fn single_frame_parseval_under_one_over_n_inverse() {
    // one centered frame of a rectangular window: the frame is the padded signal
    let c = AnalysisConfig {
        n_fft: 16,
        hop: 16,
        window: WindowKind::Rectangular,
        n_mels: 4,
        ..AnalysisConfig::default()
    };
    let x = Waveform::new((0..8).map(|i| (i as f64 * 0.7).sin()).collect(), 44_100).unwrap();
    let spec = stft(&x, &c).unwrap();
    let frame = spec.frame(0);
    // full-spectrum energy from the one-sided half
    let full: f64 = frame
        .iter()
        .enumerate()
        .map(|(k, z)| {
            if k == 0 || k == 8 {
                z.norm_sqr()
            } else {
                2.0 * z.norm_sqr()
            }
        })
        .sum();
    let padded_energy: f64 = {
        // reflect padding by 8 on an 8-sample signal, frame 0 covers samples -8..8
        let s = x.samples();
        let reflect = |i: isize| -> f64 {
            let n = s.len() as isize;
            let p = 2 * (n - 1);
            let mut m = i.rem_euclid(p);
            if m >= n {
                m = p - m;
            }
            s[m as usize]
        };
        (-8..8).map(|i| reflect(i) * reflect(i)).sum()
    };
    // ‖IFFT(X)‖₂ = ‖X‖₂ / √N
    assert!(((full / 16.0) - padded_energy).abs() < 1e-9 * padded_energy.max(1.0));
}

#[test]
fn default_config_roundtrips_on_synthetic_clips() {
    use melcap_core::testsignal;
    let c = AnalysisConfig::default();
    for hop in [256, 512] {
        let c = AnalysisConfig { hop, ..c };
        for seed in 0..5 {
            let x = testsignal::clip(seed, 44_100, 44_100);
            let y = roundtrip(&x, &c);
            let interior = 1024..x.len() - 1024;
            assert!(rel_err(&y[interior.clone()], &x.samples()[interior]) <= 1e-6);
        }
    }
}
