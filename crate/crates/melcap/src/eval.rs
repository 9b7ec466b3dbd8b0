//! Paired-directory evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use melcap_core::metrics::{evaluate_pair, MetricsReport};
use melcap_core::signal::{AnalysisConfig, Waveform};
use rayon::prelude::*;

use crate::corpus::{scan_wavs, with_jobs, Skipped};
use crate::wav::read_wav_for;
use crate::Result;

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// One report per matched file, ordered by relative path.
    pub reports: Vec<MetricsReport>,
    pub skipped: Vec<Skipped>,
}

fn relative_names(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    Ok(scan_wavs(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .strip_prefix(dir)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            (name, p)
        })
        .collect())
}

/// Trims the longer waveform when the two differ by less than one analysis
/// frame, as a codec round trip shortens its input by up to one hop.
fn align(
    reference: Waveform,
    estimate: Waveform,
    config: &AnalysisConfig,
) -> std::result::Result<(Waveform, Waveform), String> {
    let (a, b) = (reference.len(), estimate.len());
    if a == b {
        return Ok((reference, estimate));
    }
    if a.abs_diff(b) >= config.n_fft {
        return Err(format!("length mismatch: {a} vs {b} samples"));
    }
    let n = a.min(b);
    let cut = |w: Waveform| {
        let rate = w.sample_rate();
        let mut s = w.into_samples();
        s.truncate(n);
        Waveform::new(s, rate).map_err(|e| e.to_string())
    };
    Ok((cut(reference)?, cut(estimate)?))
}

/// Scores every file of `reference_dir` against the same relative path in
/// `degraded_dir`.
pub fn evaluate_corpus(
    reference_dir: &Path,
    degraded_dir: &Path,
    config: &AnalysisConfig,
    jobs: usize,
) -> Result<EvalOutcome> {
    let refs = relative_names(reference_dir)?;
    let degs = relative_names(degraded_dir)?;
    let pairs: Vec<(&String, &PathBuf, Option<&PathBuf>)> =
        refs.iter().map(|(n, p)| (n, p, degs.get(n))).collect();
    let score = |(name, ref_path, deg_path): &(&String, &PathBuf, Option<&PathBuf>)| -> std::result::Result<MetricsReport, Skipped> {
        let skip = |path: &Path, reason: String| Skipped {
            path: path.to_path_buf(),
            reason,
        };
        let deg_path = deg_path.ok_or_else(|| skip(ref_path, "no matching degraded file".into()))?;
        let r = read_wav_for(ref_path, config).map_err(|e| skip(ref_path, e.to_string()))?;
        let d = read_wav_for(deg_path, config).map_err(|e| skip(deg_path, e.to_string()))?;
        let (r, d) = align(r, d, config).map_err(|e| skip(deg_path, e))?;
        evaluate_pair(name, &r, &d, config).map_err(|e| skip(deg_path, e.to_string()))
    };
    let results: Vec<_> = with_jobs(jobs, || pairs.par_iter().map(score).collect())?;
    let mut outcome = EvalOutcome {
        reports: Vec::new(),
        skipped: Vec::new(),
    };
    for result in results {
        match result {
            Ok(r) => outcome.reports.push(r),
            Err(s) => {
                warn!("skipping {}: {}", s.path.display(), s.reason);
                outcome.skipped.push(s);
            }
        }
    }
    for (name, path) in &degs {
        if !refs.contains_key(name) {
            warn!("skipping {}: no matching reference file", path.display());
            outcome.skipped.push(Skipped {
                path: path.clone(),
                reason: "no matching reference file".into(),
            });
        }
    }
    Ok(outcome)
}
