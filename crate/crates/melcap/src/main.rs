use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use melcap::commands::{self, Context};
use melcap::config::RunConfig;
use melcap::wav::OutputFormat;
use melcap::{CliError, Result};

/// Single-codebook mel-spectrogram codec tools.
#[derive(Debug, Parser)]
#[command(name = "melcap", version)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-file work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output path.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Downgrade fingerprint mismatches to warnings.
    #[arg(long, global = true)]
    force_mismatch: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tile a WAV corpus into log-mel crops and fit a patch codebook.
    TrainCodebook { corpus: Option<PathBuf> },
    /// WAV to token file.
    Encode {
        wav: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Token file to log-mel file.
    Decode {
        tokens: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Token, log-mel or WAV file to audio.
    Synth {
        input: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Write 16-bit PCM instead of 32-bit float.
        #[arg(long)]
        pcm16: bool,
    },
    /// Score degraded audio against references with matching file names.
    Eval {
        reference: PathBuf,
        degraded: PathBuf,
    },
    /// Numerically check the Lipschitz bounds of the pipeline.
    VerifyTheory {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let ctx = Context {
        config,
        jobs: cli.jobs,
        output: cli.output,
        force_mismatch: cli.force_mismatch,
    };
    println!("config fingerprint: {}", ctx.fingerprint());
    match cli.command {
        Command::TrainCodebook { corpus } => {
            let s = commands::train(&ctx, corpus.as_deref())?;
            println!(
                "{} files ({} skipped), {} tiles, {} patches",
                s.files, s.skipped, s.tiles, s.patches
            );
            for (i, d) in s.distortion.iter().enumerate() {
                println!("iter {:>3}  distortion {d:.6}", i + 1);
            }
            println!(
                "codebook {} ({} codes) -> {}",
                melcap_core::hash::fingerprint_hex(s.codebook.fingerprint()),
                s.codebook.size(),
                s.output.display()
            );
        }
        Command::Encode { wav, codebook } => {
            let s = commands::encode(&ctx, &wav, codebook.as_deref())?;
            println!(
                "{}x{} tokens ({:.2} tokens/s) -> {}",
                s.rows,
                s.cols,
                s.tokens_per_second,
                s.output.display()
            );
        }
        Command::Decode { tokens, codebook } => {
            let out = commands::decode(&ctx, &tokens, codebook.as_deref())?;
            println!("log-mel -> {}", out.display());
        }
        Command::Synth {
            input,
            codebook,
            pcm16,
        } => {
            let format = if pcm16 {
                OutputFormat::Pcm16
            } else {
                OutputFormat::Float32
            };
            let s = commands::synth(&ctx, &input, codebook.as_deref(), format)?;
            println!(
                "{} samples ({}, {} clamped) -> {}",
                s.samples,
                s.mode.name(),
                s.clamped,
                s.output.display()
            );
        }
        Command::Eval {
            reference,
            degraded,
        } => {
            let (out, outcome) = commands::eval(&ctx, &reference, &degraded)?;
            for skip in &outcome.skipped {
                println!("skipped {}: {}", skip.path.display(), skip.reason);
            }
            println!(
                "{} files scored -> {}",
                outcome.reports.len(),
                out.display()
            );
        }
        Command::VerifyTheory { corpus, codebook } => {
            let outcome = commands::verify_theory(&ctx, corpus.as_deref(), codebook.as_deref())?;
            print!("{}", outcome.to_text());
            if let Some(path) = &outcome.report_path {
                println!("report -> {}", path.display());
            }
            if !outcome.holds() {
                return Err(CliError::Validation("a theory check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MELCAP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
