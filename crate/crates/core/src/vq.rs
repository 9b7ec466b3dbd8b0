//! Single-codebook vector quantization of log-mel patches.
//!
//! A log-mel spectrogram (time × mel) is cut into non-overlapping
//! `patch_h × patch_w` tiles, time-major, each flattened row-major. Partial
//! tiles at the bottom/right edges are padded with the silence value
//! `ln(log_floor)`. Each tile is replaced by the index of its nearest codeword.

use alloc::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::fnv1a64;
use crate::prelude::*;
use crate::signal::{AnalysisConfig, LogMelSpectrogram};
use crate::{Error, Result};

/// A pool of flattened patches of a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    patch_h: usize,
    patch_w: usize,
    data: Vec<f64>,
}

impl PatchSet {
    pub fn new(patch_h: usize, patch_w: usize) -> Result<Self> {
        if patch_h == 0 || patch_w == 0 {
            return Err(Error::InvalidParameter(
                "patch dimensions must be non-zero".into(),
            ));
        }
        Ok(Self {
            patch_h,
            patch_w,
            data: Vec::new(),
        })
    }

    pub fn from_flat(patch_h: usize, patch_w: usize, data: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(patch_h, patch_w)?;
        if !data.len().is_multiple_of(set.dim()) {
            return Err(Error::DimensionMismatch {
                context: "flat patch data",
                expected: (data.len() / set.dim() + 1) * set.dim(),
                found: data.len(),
            });
        }
        set.data = data;
        Ok(set)
    }

    pub fn patch_h(&self) -> usize {
        self.patch_h
    }

    pub fn patch_w(&self) -> usize {
        self.patch_w
    }

    pub fn dim(&self) -> usize {
        self.patch_h * self.patch_w
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, patch: &[f64]) -> Result<()> {
        if patch.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "patch length",
                expected: self.dim(),
                found: patch.len(),
            });
        }
        self.data.extend_from_slice(patch);
        Ok(())
    }

    pub fn extend_from(&mut self, other: &PatchSet) -> Result<()> {
        if (other.patch_h, other.patch_w) != (self.patch_h, self.patch_w) {
            return Err(Error::InvalidParameter("patch shapes differ".into()));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// Patches of one spectrogram plus their grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patches: PatchSet,
    pub rows: usize,
    pub cols: usize,
}

pub fn patchify(logmel: &LogMelSpectrogram, patch_h: usize, patch_w: usize) -> Result<PatchGrid> {
    let mut patches = PatchSet::new(patch_h, patch_w)?;
    let rows = logmel.frames().div_ceil(patch_h);
    let cols = logmel.mels().div_ceil(patch_w);
    let pad = logmel.config().log_floor_value();
    patches.data.reserve(rows * cols * patch_h * patch_w);
    for r in 0..rows {
        for c in 0..cols {
            for i in 0..patch_h {
                let t = r * patch_h + i;
                for j in 0..patch_w {
                    let m = c * patch_w + j;
                    let v = if t < logmel.frames() && m < logmel.mels() {
                        logmel.get(t, m)
                    } else {
                        pad
                    };
                    patches.data.push(v);
                }
            }
        }
    }
    Ok(PatchGrid {
        patches,
        rows,
        cols,
    })
}

/// Places patches back on a `rows × cols` grid and crops to `frames × mels`.
pub fn unpatchify(
    grid: &PatchGrid,
    frames: usize,
    mels: usize,
    config: AnalysisConfig,
) -> Result<LogMelSpectrogram> {
    let (ph, pw) = (grid.patches.patch_h(), grid.patches.patch_w());
    if grid.patches.len() != grid.rows * grid.cols {
        return Err(Error::DimensionMismatch {
            context: "patch count vs grid",
            expected: grid.rows * grid.cols,
            found: grid.patches.len(),
        });
    }
    if frames > grid.rows * ph || mels > grid.cols * pw {
        return Err(Error::InvalidParameter(
            "crop shape exceeds patch grid".into(),
        ));
    }
    let mut values = vec![0.0; frames * mels];
    for t in 0..frames {
        for m in 0..mels {
            let patch = grid.patches.get((t / ph) * grid.cols + m / pw);
            values[t * mels + m] = patch[(t % ph) * pw + m % pw];
        }
    }
    LogMelSpectrogram::new(config, frames, mels, values)
}

/// `K × D` codewords for `patch_h × patch_w` patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    patch_h: usize,
    patch_w: usize,
    entries: Vec<f64>,
    config_hash: u64,
}

impl Codebook {
    /// Validates that there is at least one entry, all values are finite and
    /// no two entries are identical.
    pub fn new(
        patch_h: usize,
        patch_w: usize,
        entries: Vec<f64>,
        config_hash: u64,
    ) -> Result<Self> {
        let dim = patch_h * patch_w;
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "patch dimensions must be non-zero".into(),
            ));
        }
        if entries.is_empty() || !entries.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                context: "codebook entries",
                expected: dim * (entries.len() / dim).max(1),
                found: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebook entries"));
        }
        let mut seen = BTreeSet::new();
        for entry in entries.chunks_exact(dim) {
            if !seen.insert(bit_key(entry)) {
                return Err(Error::InvalidParameter(
                    "codebook contains duplicate entries".into(),
                ));
            }
        }
        Ok(Self {
            patch_h,
            patch_w,
            entries,
            config_hash,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.len() / self.dim()
    }

    pub fn dim(&self) -> usize {
        self.patch_h * self.patch_w
    }

    pub fn patch_h(&self) -> usize {
        self.patch_h
    }

    pub fn patch_w(&self) -> usize {
        self.patch_w
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.entries[i * d..(i + 1) * d]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `K u32, D u32, patch_h u16, patch_w u16, config hash u64, K·D f32`, all LE.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.entries.len());
        out.extend_from_slice(&(self.size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.patch_h as u16).to_le_bytes());
        out.extend_from_slice(&(self.patch_w as u16).to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        for v in &self.entries {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.canonical_bytes())
    }
}

fn bit_key(v: &[f64]) -> Vec<u64> {
    // +0.0 folds -0.0 onto 0.0
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Squared distance, summed in the same blocks as [`sq_dist_below`] so the
/// two agree bit for bit.
#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.chunks(8)
        .zip(b.chunks(8))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .fold(0.0, |acc, block| acc + block)
}

/// Squared distance, abandoned once it reaches `bound`. Returns `None` then.
#[inline]
fn sq_dist_below(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
        acc += ca
            .iter()
            .zip(cb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        if acc >= bound {
            return None;
        }
    }
    Some(acc)
}

/// Index and squared distance of the nearest of `k` centroids (lowest index on ties).
fn nearest(patch: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        if let Some(d) = sq_dist_below(patch, c, best_d) {
            best = i;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Nearest codeword by Euclidean distance; ties go to the lowest index.
pub fn quantize(patch: &[f64], codebook: &Codebook) -> Result<(usize, f64)> {
    if patch.len() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            context: "quantize patch length",
            expected: codebook.dim(),
            found: patch.len(),
        });
    }
    let (index, d2) = nearest(patch, &codebook.entries, codebook.dim());
    Ok((index, d2.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 1024,
            max_iters: 50,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCodebook {
    pub codebook: Codebook,
    /// Mean squared patch-to-codeword distance after each assignment step.
    pub distortion: Vec<f64>,
}

/// Lloyd k-means with k-means++ seeding.
///
/// Empty clusters are reseeded to the points farthest from their assigned
/// centroid. Iteration stops once the relative distortion improvement falls
/// below `tol` or after `max_iters` assignment steps. Final codewords are
/// rounded to f32 so that a persisted codebook equals the trained one.
pub fn train_codebook(
    patches: &PatchSet,
    params: &KMeansParams,
    config_hash: u64,
) -> Result<TrainedCodebook> {
    let k = params.k;
    let dim = patches.dim();
    let n = patches.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if params.max_iters == 0 {
        return Err(Error::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    if patches.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training patches"));
    }
    if n < k {
        return Err(Error::TooFewPatches { k, found: n });
    }
    let distinct = patches.iter().map(bit_key).collect::<BTreeSet<_>>().len();
    if distinct < k {
        return Err(Error::TooFewPatches { k, found: distinct });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(patches, k, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();

    for iter in 0..params.max_iters {
        for (i, patch) in patches.iter().enumerate() {
            let (a, d) = nearest(patch, &centroids, dim);
            assignment[i] = a;
            dist[i] = d;
        }
        let distortion = dist.iter().sum::<f64>() / n as f64;
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| prev - distortion <= params.tol * prev);
        history.push(distortion);
        if converged || iter + 1 == params.max_iters {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, patch) in patches.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(patch) {
                *s += v;
            }
        }
        let mut taken = BTreeSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s * inv;
                }
            } else if let Some(p) = farthest_unused(&dist, &mut taken) {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(patches.get(p));
            }
        }
    }

    for v in centroids.iter_mut() {
        *v = *v as f32 as f64;
    }
    dedupe_centroids(&mut centroids, patches, dim);
    let codebook = Codebook::new(patches.patch_h(), patches.patch_w(), centroids, config_hash)?;
    Ok(TrainedCodebook {
        codebook,
        distortion: history,
    })
}

fn farthest_unused(dist: &[f64], taken: &mut BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &d) in dist.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        if best.is_none_or(|b| d > dist[b]) {
            best = Some(i);
        }
    }
    if let Some(b) = best {
        taken.insert(b);
    }
    best
}

fn kmeans_plus_plus(patches: &PatchSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = patches.len();
    let dim = patches.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(patches.get(first));
    let mut min_d: Vec<f64> = patches
        .iter()
        .map(|p| sq_dist(p, patches.get(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in min_d.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            chosen = Some(i);
            if acc > target {
                break;
            }
        }
        // distinct patch count >= k guarantees a positive-weight point exists
        let chosen = chosen.expect("no positive-weight patch during seeding");
        let start = centroids.len();
        centroids.extend_from_slice(patches.get(chosen));
        let c = centroids[start..].to_vec();
        for (i, p) in patches.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    centroids
}

/// Replaces later duplicates with the data points farthest from any codeword.
/// A duplicate never wins an assignment, so this cannot raise distortion.
fn dedupe_centroids(centroids: &mut [f64], patches: &PatchSet, dim: usize) {
    let k = centroids.len() / dim;
    loop {
        let mut seen = BTreeSet::new();
        let dup = (0..k).find(|&c| !seen.insert(bit_key(&centroids[c * dim..(c + 1) * dim])));
        let Some(c) = dup else { return };
        let existing: BTreeSet<Vec<u64>> = centroids.chunks_exact(dim).map(bit_key).collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in patches.iter().enumerate() {
            let rounded: Vec<f64> = p.iter().map(|v| *v as f32 as f64).collect();
            if existing.contains(&bit_key(&rounded)) {
                continue;
            }
            let (_, d) = nearest(&rounded, centroids, dim);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => {
                for (dst, v) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(patches.get(i))
                {
                    *dst = *v as f32 as f64;
                }
            }
            None => return,
        }
    }
}

/// Codebook indices for one spectrogram, with the source shape for cropping.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub rows: usize,
    pub cols: usize,
    pub indices: Vec<u32>,
    pub codebook_id: u64,
    pub config_hash: u64,
    pub frames: usize,
    pub mels: usize,
}

pub fn encode(logmel: &LogMelSpectrogram, codebook: &Codebook) -> Result<TokenGrid> {
    let grid = patchify(logmel, codebook.patch_h(), codebook.patch_w())?;
    let indices = grid
        .patches
        .iter()
        .map(|p| quantize(p, codebook).map(|(i, _)| i as u32))
        .collect::<Result<Vec<_>>>()?;
    Ok(TokenGrid {
        rows: grid.rows,
        cols: grid.cols,
        indices,
        codebook_id: codebook.fingerprint(),
        config_hash: logmel.config().fingerprint(),
        frames: logmel.frames(),
        mels: logmel.mels(),
    })
}

pub fn decode(
    tokens: &TokenGrid,
    codebook: &Codebook,
    config: &AnalysisConfig,
) -> Result<LogMelSpectrogram> {
    if tokens.indices.len() != tokens.rows * tokens.cols {
        return Err(Error::DimensionMismatch {
            context: "token count vs grid",
            expected: tokens.rows * tokens.cols,
            found: tokens.indices.len(),
        });
    }
    let mut patches = PatchSet::new(codebook.patch_h(), codebook.patch_w())?;
    for &idx in &tokens.indices {
        if idx as usize >= codebook.size() {
            return Err(Error::TokenOutOfRange {
                index: idx,
                size: codebook.size(),
            });
        }
        patches.push(codebook.entry(idx as usize))?;
    }
    let grid = PatchGrid {
        patches,
        rows: tokens.rows,
        cols: tokens.cols,
    };
    unpatchify(&grid, tokens.frames, tokens.mels, *config)
}

/// Checks that tokens, codebook and analysis config belong together.
pub fn check_pairing(
    tokens: &TokenGrid,
    codebook: &Codebook,
    config: &AnalysisConfig,
) -> Result<()> {
    let cb = codebook.fingerprint();
    if tokens.codebook_id != cb {
        return Err(Error::FingerprintMismatch {
            what: "codebook",
            expected: tokens.codebook_id,
            found: cb,
        });
    }
    check_codebook_config(codebook, config)?;
    let cfg = config.fingerprint();
    if tokens.config_hash != cfg {
        return Err(Error::FingerprintMismatch {
            what: "token config",
            expected: tokens.config_hash,
            found: cfg,
        });
    }
    Ok(())
}

pub fn check_codebook_config(codebook: &Codebook, config: &AnalysisConfig) -> Result<()> {
    let cfg = config.fingerprint();
    if codebook.config_hash() != cfg {
        return Err(Error::FingerprintMismatch {
            what: "codebook config",
            expected: codebook.config_hash(),
            found: cfg,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationReport {
    pub per_patch_nearest_dist: Vec<f64>,
    pub per_patch_farthest_dist: Vec<f64>,
    pub delta_max: f64,
    pub mean_dist: f64,
    /// Patches for which some code was closer than the reported nearest one,
    /// or farther than the reported farthest one.
    pub ordering_violations: usize,
}

impl QuantizationReport {
    /// Euclidean norm of the per-patch nearest distances.
    pub fn delta_total(&self) -> f64 {
        self.per_patch_nearest_dist
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    pub fn ordering_holds(&self) -> bool {
        self.ordering_violations == 0
    }
}

/// Nearest-code distances over a patch set, with an exhaustive check that
/// `‖c_n − s‖ ≤ ‖c − s‖ ≤ ‖c_f − s‖` for every code `c`.
pub fn quantization_delta(codebook: &Codebook, patches: &PatchSet) -> Result<QuantizationReport> {
    if patches.is_empty() {
        return Err(Error::EmptyInput("patch set"));
    }
    if patches.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            context: "patch length vs codebook",
            expected: codebook.dim(),
            found: patches.dim(),
        });
    }
    let mut nearest_d = Vec::with_capacity(patches.len());
    let mut farthest_d = Vec::with_capacity(patches.len());
    let mut violations = 0;
    for patch in patches.iter() {
        let (_, near) = quantize(patch, codebook)?;
        let all: Vec<f64> = (0..codebook.size())
            .map(|c| sq_dist(patch, codebook.entry(c)).sqrt())
            .collect();
        let far = all.iter().cloned().fold(0.0, f64::max);
        if all.iter().any(|&d| d < near || d > far) {
            violations += 1;
        }
        nearest_d.push(near);
        farthest_d.push(far);
    }
    let delta_max = nearest_d.iter().cloned().fold(0.0, f64::max);
    let mean_dist = (nearest_d.iter().sum::<f64>() / nearest_d.len() as f64).min(delta_max);
    Ok(QuantizationReport {
        per_patch_nearest_dist: nearest_d,
        per_patch_farthest_dist: farthest_d,
        delta_max,
        mean_dist,
        ordering_violations: violations,
    })
}

/// Steady-state tokens per second: `(sr / hop / patch_h) · (n_mels / patch_w)`.
pub fn token_rate(config: &AnalysisConfig, patch_h: usize, patch_w: usize) -> f64 {
    (config.sample_rate as f64 / config.hop as f64 / patch_h as f64)
        * (config.n_mels as f64 / patch_w as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn logmel(frames: usize, mels: usize, f: impl Fn(usize, usize) -> f64) -> LogMelSpectrogram {
        let values = (0..frames * mels).map(|i| f(i / mels, i % mels)).collect();
        LogMelSpectrogram::new(AnalysisConfig::default(), frames, mels, values).unwrap()
    }

    #[test]
    fn patch_grid_shapes() {
        let s = logmel(96, 96, |t, m| (t * 96 + m) as f64 * 1e-3);
        let grid = patchify(&s, 8, 8).unwrap();
        assert_eq!((grid.rows, grid.cols, grid.patches.len()), (12, 12, 144));
        // second patch in time-major order starts at mel 8
        assert_eq!(grid.patches.get(1)[0], s.get(0, 8));
        assert_eq!(grid.patches.get(12)[0], s.get(8, 0));

        let small = logmel(8, 8, |t, m| (t * 8 + m) as f64);
        let g = patchify(&small, 8, 8).unwrap();
        assert_eq!(g.patches.as_flat(), small.values());

        let tall = logmel(9, 8, |t, m| (t + m) as f64);
        let g = patchify(&tall, 8, 8).unwrap();
        assert_eq!((g.rows, g.cols), (2, 1));
        let second = g.patches.get(1);
        assert_eq!(&second[..8], tall.frame(8));
        let floor = AnalysisConfig::default().log_floor_value();
        assert!(second[8..].iter().all(|&v| v == floor));

        assert!(patchify(&s, 0, 8).is_err());
    }

    #[test]
    fn unpatchify_inverts_patchify() {
        let s = logmel(13, 11, |t, m| (t as f64).sin() + m as f64);
        let grid = patchify(&s, 4, 3).unwrap();
        let back = unpatchify(&grid, 13, 11, *s.config()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn quantize_examples() {
        let cb = Codebook::new(1, 2, vec![0.0, 0.0, 2.0, 2.0], 0).unwrap();
        let (i, d) = quantize(&[0.9, 0.9], &cb).unwrap();
        assert_eq!(i, 0);
        assert_relative_eq!(d, (2.0f64 * 0.81).sqrt(), epsilon = 1e-12);
        assert!((d - 1.2728).abs() < 1e-4);
        // equidistant goes to the lower index
        assert_eq!(quantize(&[1.0, 1.0], &cb).unwrap().0, 0);
        assert!(quantize(&[1.0], &cb).is_err());

        let entries: Vec<f64> = (0..10).flat_map(|i| [i as f64, -(i as f64)]).collect();
        let cb = Codebook::new(1, 2, entries, 0).unwrap();
        assert_eq!(quantize(&[7.0, -7.0], &cb).unwrap(), (7, 0.0));
    }

    #[test]
    fn codebook_validation() {
        assert!(Codebook::new(1, 2, vec![], 0).is_err());
        assert!(Codebook::new(1, 2, vec![1.0, 2.0, 1.0, 2.0], 0).is_err());
        assert!(Codebook::new(1, 2, vec![1.0, f64::NAN], 0).is_err());
        assert!(Codebook::new(1, 2, vec![1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn single_code_is_the_mean() {
        let data = vec![1.0, 2.0, 3.0, 5.0, -1.0, 0.5, 4.0, 4.0];
        let set = PatchSet::from_flat(1, 2, data).unwrap();
        let trained = train_codebook(
            &set,
            &KMeansParams {
                k: 1,
                max_iters: 10,
                tol: 1e-9,
                seed: 3,
            },
            0,
        )
        .unwrap();
        let entry = trained.codebook.entry(0);
        assert_relative_eq!(entry[0], 1.75, epsilon = 1e-6);
        assert_relative_eq!(entry[1], 2.875, epsilon = 1e-6);
    }

    #[test]
    fn train_rejects_small_or_bad_sets() {
        let set = PatchSet::from_flat(1, 1, vec![1.0, 2.0]).unwrap();
        let p = KMeansParams {
            k: 3,
            max_iters: 5,
            tol: 1e-6,
            seed: 0,
        };
        assert!(matches!(
            train_codebook(&set, &p, 0),
            Err(Error::TooFewPatches { k: 3, found: 2 })
        ));
        let dup = PatchSet::from_flat(1, 1, vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            train_codebook(&dup, &p, 0),
            Err(Error::TooFewPatches { k: 3, found: 2 })
        ));
        let bad = PatchSet::from_flat(1, 1, vec![1.0, f64::INFINITY, 3.0]).unwrap();
        assert!(matches!(
            train_codebook(&bad, &p, 0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn encode_decode_exact_when_patches_are_codewords() {
        let s = logmel(16, 8, |t, m| ((t / 8) * 3 + m / 4) as f64 * 0.5);
        let grid = patchify(&s, 8, 4).unwrap();
        let mut entries = Vec::new();
        for p in grid.patches.iter() {
            entries.extend_from_slice(p);
        }
        let cb = Codebook::new(8, 4, entries, s.config().fingerprint()).unwrap();
        let tokens = encode(&s, &cb).unwrap();
        assert_eq!(tokens.indices, vec![0, 1, 2, 3]);
        let back = decode(&tokens, &cb, s.config()).unwrap();
        assert_eq!(back, s);
        check_pairing(&tokens, &cb, s.config()).unwrap();

        let mut bad = tokens.clone();
        bad.indices[0] = 9;
        assert!(matches!(
            decode(&bad, &cb, s.config()),
            Err(Error::TokenOutOfRange { index: 9, .. })
        ));
        let other = AnalysisConfig {
            hop: 128,
            ..AnalysisConfig::default()
        };
        assert!(matches!(
            check_pairing(&tokens, &cb, &other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn decode_error_matches_patch_distances() {
        let s = logmel(20, 12, |t, m| {
            ((t * 7 + m * 3) % 5) as f64 - 2.0 + 0.01 * t as f64
        });
        let grid = patchify(&s, 4, 4).unwrap();
        let trained = train_codebook(
            &grid.patches,
            &KMeansParams {
                k: 4,
                max_iters: 20,
                tol: 1e-9,
                seed: 1,
            },
            0,
        )
        .unwrap();
        let cb = trained.codebook;
        let back = decode(&encode(&s, &cb).unwrap(), &cb, s.config()).unwrap();
        assert_eq!((back.frames(), back.mels()), (20, 12));
        let frob = s
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let report = quantization_delta(&cb, &grid.patches).unwrap();
        assert!((frob - report.delta_total()).abs() <= 1e-9 * report.delta_total().max(1.0));
    }

    #[test]
    fn delta_examples() {
        let cb = Codebook::new(1, 2, vec![0.0, 0.0, 3.0, 4.0], 0).unwrap();
        let inside = PatchSet::from_flat(1, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(quantization_delta(&cb, &inside).unwrap().delta_max, 0.0);
        let single = PatchSet::from_flat(1, 2, vec![1.0, 1.0]).unwrap();
        let r = quantization_delta(&cb, &single).unwrap();
        assert_relative_eq!(r.delta_max, 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.per_patch_farthest_dist[0], 13f64.sqrt(), epsilon = 1e-12);
        assert!(r.ordering_holds());
        assert!(quantization_delta(&cb, &PatchSet::new(1, 2).unwrap()).is_err());
    }

    #[test]
    fn token_rates() {
        let config = AnalysisConfig::default();
        assert!((token_rate(&config, 8, 8) - 258.40).abs() < 0.01);
        assert_relative_eq!(token_rate(&config, 1, 1), 16_537.5, epsilon = 1e-9);
        assert_relative_eq!(
            token_rate(&config, 16, 8),
            token_rate(&config, 8, 8) / 2.0,
            epsilon = 1e-12
        );
    }
}
