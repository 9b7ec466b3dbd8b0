use melcap_core::signal::{AnalysisConfig, LogMelSpectrogram};
use melcap_core::vq::{
    decode, encode, patchify, quantization_delta, quantize, token_rate, train_codebook, Codebook,
    KMeansParams, PatchSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_patches(seed: u64, n: usize, dim_h: usize, dim_w: usize) -> PatchSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a few clusters so that Lloyd has something to do
    let centers: Vec<Vec<f64>> = (0..6)
        .map(|_| {
            (0..dim_h * dim_w)
                .map(|_| rng.random::<f64>() * 10.0 - 5.0)
                .collect()
        })
        .collect();
    let data = (0..n)
        .flat_map(|i| {
            let c = &centers[i % centers.len()];
            c.iter()
                .map(|v| v + rng.random::<f64>() - 0.5)
                .collect::<Vec<_>>()
        })
        .collect();
    PatchSet::from_flat(dim_h, dim_w, data).unwrap()
}

fn random_logmel(seed: u64, frames: usize, mels: usize) -> LogMelSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..frames * mels)
        .map(|_| rng.random::<f64>() * 6.0 - 4.0)
        .collect();
    LogMelSpectrogram::new(AnalysisConfig::default(), frames, mels, values).unwrap()
}

#[test]
fn distortion_never_increases() {
    for seed in 0..10 {
        let patches = random_patches(seed, 400, 2, 3);
        let params = KMeansParams {
            k: 12,
            max_iters: 40,
            tol: 0.0,
            seed,
        };
        let trained = train_codebook(&patches, &params, 0).unwrap();
        for w in trained.distortion.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {w:?}");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let patches = random_patches(3, 300, 2, 2);
    let params = KMeansParams {
        k: 20,
        seed: 5,
        ..KMeansParams::default()
    };
    let a = train_codebook(&patches, &params, 42).unwrap();
    let b = train_codebook(&patches, &params, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.codebook.fingerprint(), b.codebook.fingerprint());
    let other = train_codebook(&patches, &KMeansParams { seed: 6, ..params }, 42).unwrap();
    assert_ne!(a.codebook.fingerprint(), other.codebook.fingerprint());
}

#[test]
fn too_few_patches_names_both_numbers() {
    let patches = random_patches(0, 10, 2, 2);
    let err = train_codebook(
        &patches,
        &KMeansParams {
            k: 11,
            ..KMeansParams::default()
        },
        0,
    )
    .unwrap_err();
    let text = err.to_string();
    assert!(text.contains("11") && text.contains("10"), "{text}");
}

#[test]
fn token_rate_for_default_patches() {
    let rate = token_rate(&AnalysisConfig::default(), 8, 8);
    assert!((rate - 258.40).abs() < 0.01, "{rate}");
    assert!((rate - 260.0).abs() <= 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reconstruction_error_is_patch_distance(seed in any::<u64>(), frames in 1usize..30, mels in 1usize..30, k in 1usize..12) {
        let s = random_logmel(seed, frames, mels);
        let entries_src = random_logmel(seed ^ 0x55, 4 * k, 4);
        let cb = Codebook::new(4, 4, entries_src.values()[..k * 16].to_vec(), s.config().fingerprint()).unwrap();
        let tokens = encode(&s, &cb).unwrap();
        let back = decode(&tokens, &cb, s.config()).unwrap();
        prop_assert_eq!((back.frames(), back.mels()), (frames, mels));
        let err: f64 = s.values().iter().zip(back.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let grid = patchify(&s, 4, 4).unwrap();
        let report = quantization_delta(&cb, &grid.patches).unwrap();
        prop_assert!(report.ordering_holds());
        prop_assert!(err <= report.delta_total() * (1.0 + 1e-9) + 1e-12);
        if frames % 4 == 0 && mels % 4 == 0 {
            prop_assert!((err - report.delta_total()).abs() <= 1e-9 * report.delta_total().max(1.0));
        }
    }

    #[test]
    fn nearest_code_is_never_beaten(seed in any::<u64>(), k in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<f64> = (0..k * 6).map(|_| rng.random::<f64>()).collect();
        let cb = Codebook::new(2, 3, entries, 0).unwrap();
        let patch: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let (i, d) = quantize(&patch, &cb).unwrap();
        for c in 0..cb.size() {
            let dc: f64 = patch.iter().zip(cb.entry(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(d <= dc + 1e-12);
        }
        prop_assert!(i < cb.size());
    }
}

#[test]
fn full_codebook_reconstructs_exactly() {
    let s = random_logmel(9, 16, 16);
    let grid = patchify(&s, 8, 8).unwrap();
    // values are f32-exact so that the stored codebook matches the patches
    let entries: Vec<f64> = grid
        .patches
        .as_flat()
        .iter()
        .map(|v| *v as f32 as f64)
        .collect();
    let s32 = LogMelSpectrogram::new(
        *s.config(),
        16,
        16,
        s.values().iter().map(|v| *v as f32 as f64).collect(),
    )
    .unwrap();
    let cb = Codebook::new(8, 8, entries, s.config().fingerprint()).unwrap();
    let back = decode(&encode(&s32, &cb).unwrap(), &cb, s.config()).unwrap();
    assert_eq!(back.values(), s32.values());
}
