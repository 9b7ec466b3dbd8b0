//! Subcommand implementations. Each returns a summary; `main` prints it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use melcap_core::hash::fingerprint_hex;
use melcap_core::losses::FeatureStack;
use melcap_core::signal::{
    make_mel_filterbank, waveform_to_log_mel, LogMelSpectrogram, StftParams, WindowKind,
};
use melcap_core::theory::{
    check_istft_lipschitz, check_snake_lipschitz, loss_equivalence_check, verify_bounded_error,
    BoundReport, BoundedErrorReport, IstftBound,
};
use melcap_core::vocoder::{make_mel_inverse, synthesize, MelInverse, VocoderMode, VocoderSpec};
use melcap_core::vq::{
    check_codebook_config, check_pairing, decode as vq_decode, encode as vq_encode, token_rate,
    train_codebook, Codebook,
};
use melcap_core::{testsignal, Error};

use crate::config::RunConfig;
use crate::corpus::{collect_patches, load_tiles, scan_wavs};
use crate::eval::{evaluate_corpus, EvalOutcome};
use crate::formats::{self, ArtifactKind};
use crate::report::{write_report, ReportRow};
use crate::wav::{read_wav_for, write_wav, OutputFormat};
use crate::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub force_mismatch: bool,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            jobs: 1,
            output: None,
            force_mismatch: false,
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_hex(self.config.analysis.fingerprint())
    }

    fn output_or(&self, fallback: impl FnOnce() -> PathBuf) -> PathBuf {
        self.output
            .clone()
            .or_else(|| self.config.paths.output.clone())
            .unwrap_or_else(fallback)
    }

    fn codebook_path(&self, explicit: Option<&Path>) -> Result<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.config.paths.codebook.clone())
            .ok_or_else(|| {
                CliError::Validation(
                    "no codebook given (use --codebook or [paths] codebook)".into(),
                )
            })
    }

    /// Fingerprint mismatches fail unless `--force-mismatch` is set.
    fn pairing(&self, check: melcap_core::Result<()>) -> Result<()> {
        match check {
            Err(e @ Error::FingerprintMismatch { .. }) if self.force_mismatch => {
                warn!("{e} (continuing because of --force-mismatch)");
                Ok(())
            }
            other => other.map_err(CliError::from),
        }
    }

    fn mel_inverse(&self) -> Result<MelInverse> {
        let v = &self.config.vocoder;
        let fb = make_mel_filterbank(&self.config.analysis)?;
        Ok(make_mel_inverse(&fb, v.ridge_lambda, v.clamp_nonneg)?)
    }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub output: PathBuf,
    pub files: usize,
    pub skipped: usize,
    pub tiles: usize,
    pub patches: usize,
    pub codebook: Codebook,
    pub distortion: Vec<f64>,
}

pub fn train(ctx: &Context, corpus: Option<&Path>) -> Result<TrainSummary> {
    let cfg = &ctx.config;
    let dir = corpus
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| CliError::Validation("no corpus directory given".into()))?;
    let paths = scan_wavs(&dir)?;
    let loaded = load_tiles(&paths, &cfg.analysis, cfg.tile_frames, ctx.jobs)?;
    if loaded.files == 0 {
        return Err(CliError::Validation(format!(
            "{}: no usable WAV files",
            dir.display()
        )));
    }
    let patches = collect_patches(&loaded.tiles, cfg.patch_h, cfg.patch_w)?;
    info!(
        "training {} codes on {} patches",
        cfg.codebook_size,
        patches.len()
    );
    let trained = train_codebook(&patches, &cfg.kmeans(), cfg.analysis.fingerprint())?;
    let output = ctx.output_or(|| PathBuf::from("codebook.mcbk"));
    formats::write_codebook(&output, &trained.codebook)?;
    Ok(TrainSummary {
        output,
        files: loaded.files,
        skipped: loaded.skipped.len(),
        tiles: loaded.tiles.len(),
        patches: patches.len(),
        codebook: trained.codebook,
        distortion: trained.distortion,
    })
}

#[derive(Debug, Clone)]
pub struct EncodeSummary {
    pub output: PathBuf,
    pub rows: usize,
    pub cols: usize,
    pub tokens_per_second: f64,
}

pub fn encode(ctx: &Context, wav: &Path, codebook: Option<&Path>) -> Result<EncodeSummary> {
    let cfg = &ctx.config;
    let cb = formats::read_codebook(&ctx.codebook_path(codebook)?)?;
    ctx.pairing(check_codebook_config(&cb, &cfg.analysis))?;
    let wave = read_wav_for(wav, &cfg.analysis)?;
    let logmel = waveform_to_log_mel(&wave, &cfg.analysis)?;
    let tokens = vq_encode(&logmel, &cb)?;
    let output = ctx.output_or(|| with_extension(wav, "mcap"));
    formats::write_tokens(&output, &tokens)?;
    Ok(EncodeSummary {
        output,
        rows: tokens.rows,
        cols: tokens.cols,
        tokens_per_second: token_rate(&cfg.analysis, cb.patch_h(), cb.patch_w()),
    })
}

fn decode_tokens(
    ctx: &Context,
    tokens_path: &Path,
    codebook: Option<&Path>,
) -> Result<LogMelSpectrogram> {
    let cfg = &ctx.config;
    let cb = formats::read_codebook(&ctx.codebook_path(codebook)?)?;
    let mut tokens = formats::read_tokens(tokens_path)?;
    formats::resolve_shape(&mut tokens, &cb);
    ctx.pairing(check_pairing(&tokens, &cb, &cfg.analysis))?;
    Ok(vq_decode(&tokens, &cb, &cfg.analysis)?)
}

pub fn decode(ctx: &Context, tokens: &Path, codebook: Option<&Path>) -> Result<PathBuf> {
    let logmel = decode_tokens(ctx, tokens, codebook)?;
    let output = ctx.output_or(|| with_extension(tokens, "mlms"));
    formats::write_logmel(&output, &logmel)?;
    Ok(output)
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub output: PathBuf,
    pub samples: usize,
    pub clamped: usize,
    pub mode: VocoderMode,
}

/// Synthesizes audio from a token file, a log-mel file or a WAV (analysis
/// then resynthesis). Writes `<output>.meta` next to the audio.
pub fn synth(
    ctx: &Context,
    input: &Path,
    codebook: Option<&Path>,
    format: OutputFormat,
) -> Result<SynthSummary> {
    let cfg = &ctx.config;
    let logmel = match formats::sniff(input)? {
        ArtifactKind::Tokens => decode_tokens(ctx, input, codebook)?,
        ArtifactKind::LogMel => {
            let s = formats::read_logmel(input)?;
            ctx.pairing(if s.config().fingerprint() == cfg.analysis.fingerprint() {
                Ok(())
            } else {
                Err(Error::FingerprintMismatch {
                    what: "log-mel config",
                    expected: s.config().fingerprint(),
                    found: cfg.analysis.fingerprint(),
                })
            })?;
            s
        }
        ArtifactKind::Wav => {
            waveform_to_log_mel(&read_wav_for(input, &cfg.analysis)?, &cfg.analysis)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "{}: cannot synthesize from a {other:?} file",
                input.display()
            )))
        }
    };
    let spec = cfg.vocoder_spec()?;
    let out = synthesize(&logmel, &ctx.mel_inverse()?, &spec)?;
    if out.clamped > 0 {
        warn!(
            "{} log-mel values clamped at v_max = {}",
            out.clamped, spec.v_max
        );
    }
    let output = ctx.output_or(|| with_extension(input, "synth.wav"));
    write_wav(&output, &out.waveform, format)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "mode = {}", spec.mode.name());
    let _ = writeln!(meta, "seed = {}", spec.mode.seed());
    let _ = writeln!(meta, "iters = {}", spec.mode.iters());
    let _ = writeln!(meta, "clamped = {}", out.clamped);
    let _ = writeln!(meta, "v_max = {:?}", spec.v_max);
    let _ = writeln!(meta, "ridge_lambda = {:?}", cfg.vocoder.ridge_lambda);
    let _ = writeln!(meta, "config = {}", ctx.fingerprint());
    if let Some(last) = out.residuals.last() {
        let _ = writeln!(meta, "final_residual = {last:?}");
    }
    let meta_path = PathBuf::from(format!("{}.meta", output.display()));
    std::fs::write(&meta_path, meta).map_err(|e| CliError::io(&meta_path, e))?;
    Ok(SynthSummary {
        output,
        samples: out.waveform.len(),
        clamped: out.clamped,
        mode: spec.mode,
    })
}

/// Writes the CSV report. Fails when every file was skipped.
pub fn eval(ctx: &Context, reference: &Path, degraded: &Path) -> Result<(PathBuf, EvalOutcome)> {
    let outcome = evaluate_corpus(reference, degraded, &ctx.config.analysis, ctx.jobs)?;
    if outcome.reports.is_empty() {
        return Err(CliError::Validation(format!(
            "no file pairs could be evaluated ({} skipped)",
            outcome.skipped.len()
        )));
    }
    let output = ctx.output_or(|| PathBuf::from("metrics.csv"));
    let rows: Vec<ReportRow> = outcome.reports.iter().map(ReportRow::from).collect();
    let file = std::fs::File::create(&output).map_err(|e| CliError::io(&output, e))?;
    write_report(std::io::BufWriter::new(file), &rows)?;
    Ok((output, outcome))
}

#[derive(Debug, Clone)]
pub struct TheoryOutcome {
    pub istft: (IstftBound, BoundReport),
    pub snake: Vec<(f64, BoundReport)>,
    pub bounded: BoundedErrorReport,
    pub equivalence_max_residual: f64,
    pub report_path: Option<PathBuf>,
    pub elapsed_secs: f64,
}

impl TheoryOutcome {
    pub fn holds(&self) -> bool {
        self.istft.1.holds
            && self.snake.iter().all(|(_, r)| r.holds)
            && self.bounded.holds()
            && self.equivalence_max_residual <= 1e-9
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (b, r) = &self.istft;
        let _ = writeln!(
            s,
            "istft bound: coarse form {:.2}, adjusted {:.6e}, max ratio {:.6e} over {} pairs; holds: {}",
            b.coarse_form, b.convention_adjusted, r.max_ratio, r.trials, r.holds
        );
        for (a, r) in &self.snake {
            let _ = writeln!(
                s,
                "snake a={a}: max ratio {:.9} (bound 2); holds: {}",
                r.max_ratio, r.holds
            );
        }
        let t = &self.bounded;
        let _ = writeln!(
            s,
            "bounded error: budget {:.6e} = istft {:.6e} x mel inverse {:.6} x exp {:.3}; {}/{} clips, worst margin {:.6} (clip {}); holds: {}",
            t.budget.composed,
            t.budget.istft_bound,
            t.budget.mel_inverse_norm,
            t.budget.exp_bound,
            t.passing(),
            t.clips.len(),
            t.worst_margin,
            t.worst_clip,
            t.holds()
        );
        let _ = writeln!(
            s,
            "loss equivalence: max residual {:.3e}; holds: {}",
            self.equivalence_max_residual,
            self.equivalence_max_residual <= 1e-9
        );
        s
    }

    /// `check,bound,max_ratio,margin,holds,witness` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,bound,max_ratio,margin,holds,witness\n");
        let mut row = |name: &str, r: &BoundReport| {
            let margin = if r.bound > 0.0 {
                (r.bound - r.max_ratio) / r.bound
            } else {
                0.0
            };
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{:016x}",
                r.bound, r.max_ratio, margin, r.holds, r.witness
            );
        };
        row("istft", &self.istft.1);
        for (a, r) in &self.snake {
            row(&format!("snake_a{a}"), r);
        }
        row("bounded_error", &self.bounded.summary());
        s
    }
}

/// Theory checks on `clips` log-mel tiles from `corpus`, or on synthetic
/// clips when no corpus is given. Trains a codebook on the same tiles unless
/// one is supplied.
pub fn verify_theory(
    ctx: &Context,
    corpus: Option<&Path>,
    codebook: Option<&Path>,
) -> Result<TheoryOutcome> {
    let start = Instant::now();
    let cfg = &ctx.config;
    let a = &cfg.analysis;
    let seed = cfg.seeds.theory;
    let istft = check_istft_lipschitz(
        a.window,
        a.n_fft,
        a.hop,
        cfg.theory.istft_frames,
        cfg.theory.istft_trials,
        seed,
    )?;
    let snake = [0.5, 1.0, 5.0]
        .iter()
        .map(|&alpha| {
            check_snake_lipschitz(alpha, 64, cfg.theory.snake_trials, seed).map(|r| (alpha, r))
        })
        .collect::<melcap_core::Result<Vec<_>>>()?;

    let clips: Vec<LogMelSpectrogram> = match corpus
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.corpus.clone())
    {
        Some(dir) => {
            let loaded = load_tiles(&scan_wavs(&dir)?, a, cfg.tile_frames, ctx.jobs)?;
            loaded.tiles.into_iter().take(cfg.theory.clips).collect()
        }
        None => {
            let len = (cfg.tile_frames - 1) * a.hop;
            testsignal::corpus(seed, cfg.theory.clips, a.sample_rate, len)
                .iter()
                .map(|w| waveform_to_log_mel(w, a).map(|s| s.crop_frames(0, cfg.tile_frames)))
                .collect::<melcap_core::Result<_>>()?
        }
    };
    if clips.is_empty() {
        return Err(CliError::Validation(
            "no clips available for the theory check".into(),
        ));
    }
    let cb = match codebook
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.codebook.clone())
    {
        Some(path) => {
            let cb = formats::read_codebook(&path)?;
            ctx.pairing(check_codebook_config(&cb, a))?;
            cb
        }
        None => {
            let patches = collect_patches(&clips, cfg.patch_h, cfg.patch_w)?;
            train_codebook(&patches, &cfg.kmeans(), a.fingerprint())?.codebook
        }
    };
    let mut spec: VocoderSpec = VocoderSpec::new(
        VocoderMode::LinearFixedPhase {
            seed: cfg.seeds.vocoder,
        },
        a.window,
        a.n_fft,
        a.hop,
    )?;
    spec.v_max = cfg.vocoder.v_max;
    let bounded = verify_bounded_error(&clips, &cb, &ctx.mel_inverse()?, &spec)?;

    let params = StftParams::new(a.n_fft.min(1024), a.n_fft.min(1024) / 4, WindowKind::Hann)?;
    let stack = FeatureStack::seeded(seed);
    let mut equivalence_max_residual = 0.0f64;
    for i in 0..10u64 {
        let x = testsignal::clip(seed.wrapping_add(1000 + i), a.sample_rate, 8192);
        let y = testsignal::add_noise(&x, seed.wrapping_add(2000 + i), 0.01);
        equivalence_max_residual = equivalence_max_residual.max(loss_equivalence_check(
            x.samples(),
            y.samples(),
            &stack,
            &params,
        )?);
    }

    let mut outcome = TheoryOutcome {
        istft,
        snake,
        bounded,
        equivalence_max_residual,
        report_path: None,
        elapsed_secs: 0.0,
    };
    if let Some(path) = ctx.output.clone().or_else(|| cfg.paths.output.clone()) {
        std::fs::write(&path, outcome.to_csv()).map_err(|e| CliError::io(&path, e))?;
        outcome.report_path = Some(path);
    }
    outcome.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(outcome)
}
