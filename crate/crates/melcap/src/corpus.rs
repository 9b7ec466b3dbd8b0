//! Corpus scanning and tiling.

use std::path::{Path, PathBuf};

use log::warn;
use melcap_core::signal::{waveform_to_log_mel, AnalysisConfig, LogMelSpectrogram};
use melcap_core::vq::{patchify, PatchSet};
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::wav::read_wav_for;
use crate::{CliError, Result};

/// WAV files under `dir`, recursively, sorted by path.
pub fn scan_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            CliError::io(path, e.into())
        })?;
        let is_wav = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            files.push(entry.into_path());
        }
    }
    files.sort();
    Ok(files)
}

/// Splits a spectrogram into consecutive `tile_frames`-frame tiles; the last
/// partial tile is padded with the floor value.
pub fn tiles(logmel: &LogMelSpectrogram, tile_frames: usize) -> Vec<LogMelSpectrogram> {
    (0..logmel.frames().div_ceil(tile_frames))
        .map(|i| logmel.crop_frames(i * tile_frames, tile_frames))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TiledCorpus {
    pub tiles: Vec<LogMelSpectrogram>,
    pub files: usize,
    pub skipped: Vec<Skipped>,
}

/// Loads every file, skipping (with a warning) those that fail to decode or
/// have the wrong sample rate. Results are in path order for any `jobs`.
pub fn load_tiles(
    paths: &[PathBuf],
    config: &AnalysisConfig,
    tile_frames: usize,
    jobs: usize,
) -> Result<TiledCorpus> {
    let load = |path: &PathBuf| -> std::result::Result<Vec<LogMelSpectrogram>, String> {
        let wave = read_wav_for(path, config).map_err(|e| e.to_string())?;
        let logmel = waveform_to_log_mel(&wave, config).map_err(|e| e.to_string())?;
        Ok(tiles(&logmel, tile_frames))
    };
    let results: Vec<_> = with_jobs(jobs, || paths.par_iter().map(load).collect())?;
    let mut out = TiledCorpus {
        tiles: Vec::new(),
        files: 0,
        skipped: Vec::new(),
    };
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(t) => {
                out.files += 1;
                out.tiles.extend(t);
            }
            Err(reason) => {
                warn!("skipping {}: {reason}", path.display());
                out.skipped.push(Skipped {
                    path: path.clone(),
                    reason,
                });
            }
        }
    }
    Ok(out)
}

pub fn collect_patches(
    tiles: &[LogMelSpectrogram],
    patch_h: usize,
    patch_w: usize,
) -> Result<PatchSet> {
    let mut all = PatchSet::new(patch_h, patch_w)?;
    for tile in tiles {
        all.extend_from(&patchify(tile, patch_h, patch_w)?.patches)?;
    }
    Ok(all)
}

/// Runs `f` on a pool with `jobs` threads (1 means the current thread only).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}
