//! Binary artifact formats.

use std::fs;
use std::path::Path;

use melcap_core::losses::{Activation, ConvLayer, FeatureStack, StackSource};
use melcap_core::signal::{AnalysisConfig, LogMelSpectrogram, WindowKind};
use melcap_core::vq::{Codebook, TokenGrid};

use crate::{CliError, Result};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"MCBK";
pub const TOKENS_MAGIC: &[u8; 4] = b"MCAP";
pub const STACK_MAGIC: &[u8; 4] = b"MFST";
pub const LOGMEL_MAGIC: &[u8; 4] = b"MLMS";
pub const VERSION: u16 = 1;

type Parse<T> = std::result::Result<T, String>;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Parse<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            ));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Parse<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {} (wanted {n} more)", self.pos)),
        }
    }

    fn array<const N: usize>(&mut self) -> Parse<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Parse<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Parse<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Parse<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn usize32(&mut self) -> Parse<usize> {
        self.u32().map(|v| v as usize)
    }

    fn u64(&mut self) -> Parse<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Parse<f64> {
        self.array().map(|b| f32::from_le_bytes(b) as f64)
    }

    fn f64(&mut self) -> Parse<f64> {
        self.array().map(f64::from_le_bytes)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn finish(&self) -> Parse<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(format!("{n} trailing bytes")),
        }
    }

    /// Guards allocations against corrupted counts.
    fn expect_at_least(&self, count: usize, width: usize) -> Parse<()> {
        match count.checked_mul(width) {
            Some(n) if n <= self.remaining() => Ok(()),
            _ => Err(format!(
                "declared {count} items but only {} bytes remain",
                self.remaining()
            )),
        }
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    out
}

fn u32_of(v: usize, what: &str) -> Parse<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| format!("{what} {v} exceeds u32"))
}

fn u16_of(v: usize, what: &str) -> Parse<[u8; 2]> {
    u16::try_from(v)
        .map(u16::to_le_bytes)
        .map_err(|_| format!("{what} {v} exceeds u16"))
}

// codebook

pub fn codebook_to_bytes(codebook: &Codebook) -> Vec<u8> {
    let mut out = header(CODEBOOK_MAGIC);
    out.extend_from_slice(&codebook.canonical_bytes());
    out
}

pub fn codebook_from_bytes(bytes: &[u8]) -> Parse<Codebook> {
    let mut r = Reader::new(bytes, CODEBOOK_MAGIC)?;
    let k = r.usize32()?;
    let d = r.usize32()?;
    let ph = r.u16()? as usize;
    let pw = r.u16()? as usize;
    let config_hash = r.u64()?;
    if ph * pw != d {
        return Err(format!("patch {ph}x{pw} does not match dimension {d}"));
    }
    let n = k.checked_mul(d).ok_or("codebook size overflows")?;
    r.expect_at_least(n, 4)?;
    let entries = (0..n).map(|_| r.f32()).collect::<Parse<Vec<_>>>()?;
    r.finish()?;
    Codebook::new(ph, pw, entries, config_hash).map_err(|e| e.to_string())
}

// tokens

pub fn tokens_to_bytes(tokens: &TokenGrid) -> Parse<Vec<u8>> {
    let mut out = header(TOKENS_MAGIC);
    out.extend_from_slice(&tokens.config_hash.to_le_bytes());
    out.extend_from_slice(&tokens.codebook_id.to_le_bytes());
    out.extend_from_slice(&u32_of(tokens.rows, "rows")?);
    out.extend_from_slice(&u32_of(tokens.cols, "cols")?);
    if tokens.indices.len() != tokens.rows * tokens.cols {
        return Err(format!(
            "{} indices for a {}x{} grid",
            tokens.indices.len(),
            tokens.rows,
            tokens.cols
        ));
    }
    for i in &tokens.indices {
        out.extend_from_slice(&i.to_le_bytes());
    }
    // source shape, so decoding can crop the padded patch grid
    out.extend_from_slice(&u32_of(tokens.frames, "frames")?);
    out.extend_from_slice(&u32_of(tokens.mels, "mels")?);
    Ok(out)
}

/// Reads a token file. Files without the shape trailer report `frames` and
/// `mels` as 0; see [`resolve_shape`].
pub fn tokens_from_bytes(bytes: &[u8]) -> Parse<TokenGrid> {
    let mut r = Reader::new(bytes, TOKENS_MAGIC)?;
    let config_hash = r.u64()?;
    let codebook_id = r.u64()?;
    let rows = r.usize32()?;
    let cols = r.usize32()?;
    let n = rows.checked_mul(cols).ok_or("grid size overflows")?;
    r.expect_at_least(n, 4)?;
    let indices = (0..n).map(|_| r.u32()).collect::<Parse<Vec<_>>>()?;
    let (frames, mels) = if r.remaining() == 0 {
        (0, 0)
    } else {
        (r.usize32()?, r.usize32()?)
    };
    r.finish()?;
    Ok(TokenGrid {
        rows,
        cols,
        indices,
        codebook_id,
        config_hash,
        frames,
        mels,
    })
}

/// Fills in a missing source shape with the full patch grid.
pub fn resolve_shape(tokens: &mut TokenGrid, codebook: &Codebook) {
    if tokens.frames == 0 || tokens.mels == 0 {
        tokens.frames = tokens.rows * codebook.patch_h();
        tokens.mels = tokens.cols * codebook.patch_w();
    }
}

// feature stack

pub fn stack_to_bytes(stack: &FeatureStack) -> Parse<Vec<u8>> {
    let mut out = header(STACK_MAGIC);
    out.extend_from_slice(&u32_of(stack.layers().len(), "layer count")?);
    for layer in stack.layers() {
        for (v, what) in [
            (layer.out_channels, "out channels"),
            (layer.in_channels, "in channels"),
            (layer.kernel_h, "kernel height"),
            (layer.kernel_w, "kernel width"),
        ] {
            out.extend_from_slice(&u32_of(v, what)?);
        }
        out.extend_from_slice(&u16_of(layer.stride_h, "stride")?);
        out.extend_from_slice(&u16_of(layer.stride_w, "stride")?);
        out.push(layer.activation.tag());
        if let Activation::Snake(_) = layer.activation {
            out.extend_from_slice(&layer.activation.parameter().to_le_bytes());
        }
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&u32_of(stack.selected().len(), "selected count")?);
    for (&l, &a) in stack.selected().iter().zip(stack.layer_weights()) {
        out.extend_from_slice(&u32_of(l, "layer index")?);
        out.extend_from_slice(&a.to_le_bytes());
    }
    Ok(out)
}

pub fn stack_from_bytes(bytes: &[u8]) -> Parse<FeatureStack> {
    let mut r = Reader::new(bytes, STACK_MAGIC)?;
    let count = r.usize32()?;
    r.expect_at_least(count, 21)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let out_channels = r.usize32()?;
        let in_channels = r.usize32()?;
        let kernel_h = r.usize32()?;
        let kernel_w = r.usize32()?;
        let stride_h = r.u16()? as usize;
        let stride_w = r.u16()? as usize;
        let tag = r.u8()?;
        let parameter = if tag == 2 { r.f32()? as f32 } else { 0.0 };
        let activation = Activation::from_tag(tag, parameter).map_err(|e| e.to_string())?;
        let n = [out_channels, in_channels, kernel_h, kernel_w]
            .iter()
            .try_fold(1usize, |acc, &v| acc.checked_mul(v))
            .ok_or("layer size overflows")?;
        r.expect_at_least(n + out_channels, 4)?;
        let weights = (0..n).map(|_| r.f32()).collect::<Parse<Vec<_>>>()?;
        let bias = (0..out_channels)
            .map(|_| r.f32())
            .collect::<Parse<Vec<_>>>()?;
        layers.push(ConvLayer {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            stride_h,
            stride_w,
            weights,
            bias,
            activation,
        });
    }
    let selected_count = r.usize32()?;
    r.expect_at_least(selected_count, 12)?;
    let mut selected = Vec::with_capacity(selected_count);
    let mut alphas = Vec::with_capacity(selected_count);
    for _ in 0..selected_count {
        selected.push(r.usize32()?);
        alphas.push(r.f64()?);
    }
    r.finish()?;
    FeatureStack::new(layers, selected, alphas, StackSource::File).map_err(|e| e.to_string())
}

// log-mel

pub fn logmel_to_bytes(logmel: &LogMelSpectrogram) -> Parse<Vec<u8>> {
    let mut out = header(LOGMEL_MAGIC);
    out.extend_from_slice(&logmel.config().canonical_bytes());
    out.extend_from_slice(&u32_of(logmel.frames(), "frames")?);
    out.extend_from_slice(&u32_of(logmel.mels(), "mels")?);
    for v in logmel.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn logmel_from_bytes(bytes: &[u8]) -> Parse<LogMelSpectrogram> {
    let mut r = Reader::new(bytes, LOGMEL_MAGIC)?;
    let n_fft = r.usize32()?;
    let hop = r.usize32()?;
    let window = WindowKind::from_tag(r.u8()?).map_err(|e| e.to_string())?;
    let n_mels = r.usize32()?;
    let sample_rate = r.u32()?;
    let f_min = r.f64()?;
    let f_max = r.f64()?;
    let log_floor = r.f64()?;
    let config = AnalysisConfig {
        n_fft,
        hop,
        window,
        n_mels,
        sample_rate,
        f_min,
        f_max,
        log_floor,
    };
    config.validate().map_err(|e| e.to_string())?;
    let frames = r.usize32()?;
    let mels = r.usize32()?;
    let n = frames
        .checked_mul(mels)
        .ok_or("spectrogram size overflows")?;
    r.expect_at_least(n, 8)?;
    let values = (0..n).map(|_| r.f64()).collect::<Parse<Vec<_>>>()?;
    r.finish()?;
    LogMelSpectrogram::new(config, frames, mels, values).map_err(|e| e.to_string())
}

// files

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn malformed<'a>(path: &'a Path, kind: &'static str) -> impl FnOnce(String) -> CliError + 'a {
    move |message| CliError::Format {
        path: path.to_path_buf(),
        kind,
        message,
    }
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    codebook_from_bytes(&read_file(path)?).map_err(malformed(path, "codebook"))
}

pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    write_file(path, &codebook_to_bytes(codebook))
}

pub fn read_tokens(path: &Path) -> Result<TokenGrid> {
    tokens_from_bytes(&read_file(path)?).map_err(malformed(path, "token"))
}

pub fn write_tokens(path: &Path, tokens: &TokenGrid) -> Result<()> {
    let bytes = tokens_to_bytes(tokens).map_err(malformed(path, "token"))?;
    write_file(path, &bytes)
}

pub fn read_stack(path: &Path) -> Result<FeatureStack> {
    stack_from_bytes(&read_file(path)?).map_err(malformed(path, "feature stack"))
}

pub fn write_stack(path: &Path, stack: &FeatureStack) -> Result<()> {
    let bytes = stack_to_bytes(stack).map_err(malformed(path, "feature stack"))?;
    write_file(path, &bytes)
}

pub fn read_logmel(path: &Path) -> Result<LogMelSpectrogram> {
    logmel_from_bytes(&read_file(path)?).map_err(malformed(path, "log-mel"))
}

pub fn write_logmel(path: &Path, logmel: &LogMelSpectrogram) -> Result<()> {
    let bytes = logmel_to_bytes(logmel).map_err(malformed(path, "log-mel"))?;
    write_file(path, &bytes)
}

/// Artifact kind from the leading magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Codebook,
    Tokens,
    Stack,
    LogMel,
    Wav,
}

pub fn sniff(path: &Path) -> Result<ArtifactKind> {
    use std::io::Read;
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    f.read_exact(&mut magic)
        .map_err(|e| CliError::io(path, e))?;
    match &magic {
        m if m == CODEBOOK_MAGIC => Ok(ArtifactKind::Codebook),
        m if m == TOKENS_MAGIC => Ok(ArtifactKind::Tokens),
        m if m == STACK_MAGIC => Ok(ArtifactKind::Stack),
        m if m == LOGMEL_MAGIC => Ok(ArtifactKind::LogMel),
        b"RIFF" => Ok(ArtifactKind::Wav),
        other => Err(CliError::Format {
            path: path.to_path_buf(),
            kind: "artifact",
            message: format!("unrecognized magic {:?}", String::from_utf8_lossy(other)),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codebook() -> Codebook {
        let entries = (0..3 * 4).map(|i| (i as f32 * 0.37 - 1.0) as f64).collect();
        Codebook::new(2, 2, entries, 0xdead_beef_0102_0304).unwrap()
    }

    #[test]
    fn codebook_layout() {
        let bytes = codebook_to_bytes(&codebook());
        assert_eq!(&bytes[..4], b"MCBK");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &3u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &4u32.to_le_bytes());
        assert_eq!(&bytes[14..16], &2u16.to_le_bytes());
        assert_eq!(&bytes[16..18], &2u16.to_le_bytes());
        assert_eq!(&bytes[18..26], &0xdead_beef_0102_0304u64.to_le_bytes());
        assert_eq!(bytes.len(), 26 + 12 * 4);
        assert_eq!(codebook_from_bytes(&bytes).unwrap(), codebook());
    }

    #[test]
    fn token_trailer_is_optional() {
        let grid = TokenGrid {
            rows: 2,
            cols: 3,
            indices: vec![0, 1, 2, 2, 1, 0],
            codebook_id: 7,
            config_hash: 9,
            frames: 15,
            mels: 20,
        };
        let bytes = tokens_to_bytes(&grid).unwrap();
        assert_eq!(tokens_from_bytes(&bytes).unwrap(), grid);
        let mut short = tokens_from_bytes(&bytes[..bytes.len() - 8]).unwrap();
        assert_eq!((short.frames, short.mels), (0, 0));
        resolve_shape(&mut short, &codebook());
        assert_eq!((short.frames, short.mels), (4, 6));
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let bytes = codebook_to_bytes(&codebook());
        assert!(codebook_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(codebook_from_bytes(&wrong).unwrap_err().contains("magic"));
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(codebook_from_bytes(&version)
            .unwrap_err()
            .contains("version"));
        let mut huge = bytes;
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(codebook_from_bytes(&huge).is_err());
    }
}
