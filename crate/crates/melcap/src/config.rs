//! Run configuration in a small `[section]` / `key = value` text format.
//!
//! ```text
//! # comments start with '#' or ';'
//! [analysis]
//! n_fft = 1024
//! hop = 256
//! window = hann
//! fingerprint = 3b0c...   ; optional, checked on load
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use melcap_core::hash::fingerprint_hex;
use melcap_core::signal::{AnalysisConfig, WindowKind};
use melcap_core::vocoder::{VocoderMode, VocoderSpec, DEFAULT_RIDGE_LAMBDA, DEFAULT_V_MAX};
use melcap_core::vq::KMeansParams;

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocoderKind {
    LinearFixedPhase,
    GriffinLim,
}

impl FromStr for VocoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear_fixed_phase" | "linear" => Ok(VocoderKind::LinearFixedPhase),
            "griffin_lim" => Ok(VocoderKind::GriffinLim),
            other => Err(format!(
                "unknown vocoder mode {other:?} (linear_fixed_phase, griffin_lim)"
            )),
        }
    }
}

impl VocoderKind {
    pub fn name(self) -> &'static str {
        match self {
            VocoderKind::LinearFixedPhase => "linear_fixed_phase",
            VocoderKind::GriffinLim => "griffin_lim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderConfig {
    pub mode: VocoderKind,
    pub iters: usize,
    pub v_max: f64,
    pub ridge_lambda: f64,
    pub clamp_nonneg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub codebook: u64,
    pub vocoder: u64,
    pub theory: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConfig {
    pub clips: usize,
    pub istft_trials: usize,
    pub istft_frames: usize,
    pub snake_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub analysis: AnalysisConfig,
    pub patch_h: usize,
    pub patch_w: usize,
    /// Frames per training tile.
    pub tile_frames: usize,
    pub codebook_size: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub vocoder: VocoderConfig,
    pub seeds: Seeds,
    pub paths: Paths,
    pub theory: TheoryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let km = KMeansParams::default();
        Self {
            analysis: AnalysisConfig::default(),
            patch_h: 8,
            patch_w: 8,
            tile_frames: 96,
            codebook_size: km.k,
            max_iters: km.max_iters,
            tol: km.tol,
            vocoder: VocoderConfig {
                mode: VocoderKind::LinearFixedPhase,
                iters: 32,
                v_max: DEFAULT_V_MAX,
                ridge_lambda: DEFAULT_RIDGE_LAMBDA,
                clamp_nonneg: true,
            },
            seeds: Seeds {
                codebook: 0,
                vocoder: 0,
                theory: 0,
            },
            paths: Paths::default(),
            theory: TheoryConfig {
                clips: 100,
                istft_trials: 1000,
                istft_frames: 96,
                snake_trials: 1000,
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut fingerprint: Option<(u64, usize)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            let indent = line.len() - line.trim_start().len();
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(config_err(line_no, indent + trimmed.len(), "missing ']'"));
                };
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_err(
                        line_no,
                        indent + 2,
                        format!("unknown section [{name}]"),
                    ));
                }
                section = name.to_string();
                continue;
            }
            let Some(eq) = trimmed.find('=') else {
                return Err(config_err(line_no, indent + 1, "expected 'key = value'"));
            };
            let key = trimmed[..eq].trim();
            let value_part = &trimmed[eq + 1..];
            let value = value_part.trim();
            let value_col = indent + eq + 2 + (value_part.len() - value_part.trim_start().len());
            if key.is_empty() {
                return Err(config_err(line_no, indent + 1, "empty key"));
            }
            if section.is_empty() {
                return Err(config_err(
                    line_no,
                    indent + 1,
                    "key outside of any [section]",
                ));
            }
            if section == "analysis" && key == "fingerprint" {
                let parsed = u64::from_str_radix(value, 16).map_err(|_| {
                    config_err(line_no, value_col, format!("invalid fingerprint {value:?}"))
                })?;
                fingerprint = Some((parsed, line_no));
                continue;
            }
            cfg.set(&section, key, value).map_err(|(message, on_key)| {
                config_err(
                    line_no,
                    if on_key { indent + 1 } else { value_col },
                    message,
                )
            })?;
        }
        cfg.analysis
            .validate()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        if let Some((expected, line)) = fingerprint {
            let found = cfg.analysis.fingerprint();
            if expected != found {
                return Err(config_err(
                    line,
                    1,
                    format!(
                        "analysis fingerprint {} does not match the settings ({})",
                        fingerprint_hex(expected),
                        fingerprint_hex(found)
                    ),
                ));
            }
        }
        Ok(cfg)
    }

    /// `Err((message, points_at_key))`.
    fn set(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
    ) -> std::result::Result<(), (String, bool)> {
        let a = &mut self.analysis;
        let v = &mut self.vocoder;
        match (section, key) {
            ("analysis", "n_fft") => a.n_fft = num(value)?,
            ("analysis", "hop") => a.hop = num(value)?,
            ("analysis", "window") => {
                a.window = value
                    .parse::<WindowKind>()
                    .map_err(|e| (e.to_string(), false))?
            }
            ("analysis", "n_mels") => a.n_mels = num(value)?,
            ("analysis", "sample_rate") => a.sample_rate = num(value)?,
            ("analysis", "f_min") => a.f_min = num(value)?,
            ("analysis", "f_max") => a.f_max = num(value)?,
            ("analysis", "log_floor") => a.log_floor = num(value)?,
            ("patch", "h") => self.patch_h = num(value)?,
            ("patch", "w") => self.patch_w = num(value)?,
            ("patch", "tile_frames") => self.tile_frames = num(value)?,
            ("codebook", "size") => self.codebook_size = num(value)?,
            ("codebook", "max_iters") => self.max_iters = num(value)?,
            ("codebook", "tol") => self.tol = num(value)?,
            ("vocoder", "mode") => v.mode = value.parse().map_err(|e| (e, false))?,
            ("vocoder", "iters") => v.iters = num(value)?,
            ("vocoder", "v_max") => v.v_max = num(value)?,
            ("vocoder", "ridge_lambda") => v.ridge_lambda = num(value)?,
            ("vocoder", "clamp_nonneg") => v.clamp_nonneg = num(value)?,
            ("seeds", "codebook") => self.seeds.codebook = num(value)?,
            ("seeds", "vocoder") => self.seeds.vocoder = num(value)?,
            ("seeds", "theory") => self.seeds.theory = num(value)?,
            ("paths", "corpus") => self.paths.corpus = Some(PathBuf::from(value)),
            ("paths", "codebook") => self.paths.codebook = Some(PathBuf::from(value)),
            ("paths", "output") => self.paths.output = Some(PathBuf::from(value)),
            ("theory", "clips") => self.theory.clips = num(value)?,
            ("theory", "istft_trials") => self.theory.istft_trials = num(value)?,
            ("theory", "istft_frames") => self.theory.istft_frames = num(value)?,
            ("theory", "snake_trials") => self.theory.snake_trials = num(value)?,
            _ => return Err((format!("unknown key {key:?} in [{section}]"), true)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Validation(format!("config: {m}")));
        if self.patch_h == 0 || self.patch_w == 0 || self.tile_frames == 0 {
            return bad("patch sizes and tile_frames must be positive");
        }
        if self.codebook_size == 0 {
            return bad("codebook size must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("codebook tol must be non-negative");
        }
        if !self.vocoder.v_max.is_finite() {
            return bad("v_max must be finite");
        }
        if !(self.vocoder.ridge_lambda >= 0.0 && self.vocoder.ridge_lambda.is_finite()) {
            return bad("ridge_lambda must be finite and non-negative");
        }
        if self.theory.clips == 0 || self.theory.istft_trials == 0 || self.theory.istft_frames == 0
        {
            return bad("theory counts must be positive");
        }
        Ok(())
    }

    /// Applies `--seed` to every seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = Seeds {
            codebook: seed,
            vocoder: seed,
            theory: seed,
        };
    }

    pub fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.codebook_size,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seeds.codebook,
        }
    }

    pub fn vocoder_mode(&self) -> VocoderMode {
        let seed = self.seeds.vocoder;
        match self.vocoder.mode {
            VocoderKind::LinearFixedPhase => VocoderMode::LinearFixedPhase { seed },
            VocoderKind::GriffinLim => VocoderMode::GriffinLim {
                iters: self.vocoder.iters,
                seed,
            },
        }
    }

    pub fn vocoder_spec(&self) -> Result<VocoderSpec> {
        let mut spec = VocoderSpec::new(
            self.vocoder_mode(),
            self.analysis.window,
            self.analysis.n_fft,
            self.analysis.hop,
        )?;
        spec.v_max = self.vocoder.v_max;
        Ok(spec)
    }

    /// Serializes every setting, including the analysis fingerprint.
    pub fn to_text(&self) -> String {
        let a = &self.analysis;
        let mut s = String::new();
        let _ = writeln!(s, "[analysis]");
        let _ = writeln!(s, "n_fft = {}", a.n_fft);
        let _ = writeln!(s, "hop = {}", a.hop);
        let _ = writeln!(s, "window = {}", a.window);
        let _ = writeln!(s, "n_mels = {}", a.n_mels);
        let _ = writeln!(s, "sample_rate = {}", a.sample_rate);
        let _ = writeln!(s, "f_min = {:?}", a.f_min);
        let _ = writeln!(s, "f_max = {:?}", a.f_max);
        let _ = writeln!(s, "log_floor = {:?}", a.log_floor);
        let _ = writeln!(s, "fingerprint = {}", fingerprint_hex(a.fingerprint()));
        let _ = writeln!(
            s,
            "\n[patch]\nh = {}\nw = {}\ntile_frames = {}",
            self.patch_h, self.patch_w, self.tile_frames
        );
        let _ = writeln!(
            s,
            "\n[codebook]\nsize = {}\nmax_iters = {}\ntol = {:?}",
            self.codebook_size, self.max_iters, self.tol
        );
        let v = &self.vocoder;
        let _ = writeln!(
            s,
            "\n[vocoder]\nmode = {}\niters = {}\nv_max = {:?}\nridge_lambda = {:?}\nclamp_nonneg = {}",
            v.mode.name(),
            v.iters,
            v.v_max,
            v.ridge_lambda,
            v.clamp_nonneg
        );
        let _ = writeln!(
            s,
            "\n[seeds]\ncodebook = {}\nvocoder = {}\ntheory = {}",
            self.seeds.codebook, self.seeds.vocoder, self.seeds.theory
        );
        let _ = writeln!(s, "\n[paths]");
        for (key, p) in [
            ("corpus", &self.paths.corpus),
            ("codebook", &self.paths.codebook),
            ("output", &self.paths.output),
        ] {
            if let Some(p) = p {
                let _ = writeln!(s, "{key} = {}", p.display());
            }
        }
        let t = &self.theory;
        let _ = writeln!(
            s,
            "\n[theory]\nclips = {}\nistft_trials = {}\nistft_frames = {}\nsnake_trials = {}",
            t.clips, t.istft_trials, t.istft_frames, t.snake_trials
        );
        s
    }
}

const SECTIONS: [&str; 7] = [
    "analysis", "patch", "codebook", "vocoder", "seeds", "paths", "theory",
];

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    // inline comments need whitespace before the marker
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, (String, bool)> {
    value.parse().map_err(|_| {
        (
            format!("cannot parse {value:?} as {}", std::any::type_name::<T>()),
            false,
        )
    })
}

fn config_err(line: usize, column: usize, message: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        column,
        message: message.into(),
    }
}
