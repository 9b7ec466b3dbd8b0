//! Spectrogram losses evaluated as deterministic measurements.
//!
//! Feature losses run a small convolutional stack ([`FeatureStack`]) over a
//! single-channel 2D map (frames × bins or frames × mels). Convolutions are
//! "valid" cross-correlations with per-layer stride.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prelude::*;
use crate::signal::{magnitude_spectrogram, LogMelSpectrogram, StftParams, WindowKind};
use crate::vocoder::snake_unchecked;
use crate::{Error, Result};

/// Weight applied to the feature-matching term when training a vocoder.
pub const FEATURE_MATCHING_WEIGHT: f64 = 5.0;

/// Default scales of the multiscale STFT distance (hop = size / 4).
pub const DEFAULT_STFT_SCALES: [usize; 3] = [512, 1024, 2048];

/// Mean absolute difference `(1 / (T·M)) Σ |S − Ŝ|`.
pub fn l1_mel(reference: &LogMelSpectrogram, estimate: &LogMelSpectrogram) -> Result<f64> {
    if (reference.frames(), reference.mels()) != (estimate.frames(), estimate.mels()) {
        return Err(Error::DimensionMismatch {
            context: "l1_mel shapes",
            expected: reference.frames() * reference.mels(),
            found: estimate.frames() * estimate.mels(),
        });
    }
    mean_abs_diff(reference.values(), estimate.values())
}

pub(crate) fn mean_abs_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "element count",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("difference operands"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// `x + sin²(a·x) / a`, with `a > 0`.
    Snake(f64),
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Snake(_) => 2,
        }
    }

    pub fn parameter(self) -> f32 {
        match self {
            Activation::Snake(a) => a as f32,
            _ => 0.0,
        }
    }

    pub fn from_tag(tag: u8, parameter: f32) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 if parameter > 0.0 && parameter.is_finite() => {
                Ok(Activation::Snake(parameter as f64))
            }
            2 => Err(Error::InvalidParameter(alloc::format!(
                "snake parameter {parameter} must be positive"
            ))),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unknown activation tag {other}"
            ))),
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Snake(a) => snake_unchecked(x, a),
        }
    }
}

/// One convolution; weights are `[out][in][kh][kw]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn validate(&self) -> Result<()> {
        let n = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if n == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::InvalidParameter(
                "conv layer dimensions and strides must be non-zero".into(),
            ));
        }
        if self.weights.len() != n {
            return Err(Error::DimensionMismatch {
                context: "conv weights",
                expected: n,
                found: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::DimensionMismatch {
                context: "conv bias",
                expected: self.out_channels,
                found: self.bias.len(),
            });
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("conv parameters"));
        }
        if let Activation::Snake(a) = self.activation {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(
                    "snake parameter must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Single-channel 1×1 identity with no bias.
    pub fn identity() -> Self {
        Self {
            out_channels: 1,
            in_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            stride_h: 1,
            stride_w: 1,
            weights: vec![1.0],
            bias: vec![0.0],
            activation: Activation::Identity,
        }
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        if input.channels != self.in_channels {
            return Err(Error::DimensionMismatch {
                context: "conv input channels",
                expected: self.in_channels,
                found: input.channels,
            });
        }
        if input.height < self.kernel_h || input.width < self.kernel_w {
            return Err(Error::InvalidParameter(alloc::format!(
                "feature map {}x{} smaller than kernel {}x{}",
                input.height,
                input.width,
                self.kernel_h,
                self.kernel_w
            )));
        }
        let out_h = (input.height - self.kernel_h) / self.stride_h + 1;
        let out_w = (input.width - self.kernel_w) / self.stride_w + 1;
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        let mut data = vec![0.0; self.out_channels * out_h * out_w];
        for o in 0..self.out_channels {
            let plane = &mut data[o * out_h * out_w..(o + 1) * out_h * out_w];
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for c in 0..self.in_channels {
                let kernel = &self.weights[((o * self.in_channels) + c) * kh * kw
                    ..((o * self.in_channels) + c + 1) * kh * kw];
                let src = input.channel(c);
                for y in 0..out_h {
                    for x in 0..out_w {
                        let mut acc = 0.0;
                        for i in 0..kh {
                            let row =
                                &src[(y * self.stride_h + i) * input.width + x * self.stride_w..];
                            for j in 0..kw {
                                acc += kernel[i * kw + j] * row[j];
                            }
                        }
                        plane[y * out_w + x] += acc;
                    }
                }
            }
            for v in plane.iter_mut() {
                *v = self.activation.apply(*v);
            }
        }
        Ok(FeatureMap {
            channels: self.out_channels,
            height: out_h,
            width: out_w,
            data,
        })
    }
}

/// Channel-major feature map: `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn single(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                context: "feature map",
                expected: height * width,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map input"));
        }
        Ok(Self {
            channels: 1,
            height,
            width,
            data,
        })
    }

    pub fn from_log_mel(s: &LogMelSpectrogram) -> Result<Self> {
        Self::single(s.frames(), s.mels(), s.values().to_vec())
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.positions()..(c + 1) * self.positions()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackSource {
    File,
    Seeded(u64),
}

/// Layer geometry used to generate a seeded stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerShape {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

/// Ordered convolution layers, the layers whose outputs feed the losses and
/// their weights `α_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    layers: Vec<ConvLayer>,
    selected: Vec<usize>,
    layer_weights: Vec<f64>,
    source: StackSource,
}

impl FeatureStack {
    pub fn new(
        layers: Vec<ConvLayer>,
        selected: Vec<usize>,
        layer_weights: Vec<f64>,
        source: StackSource,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter(
                "feature stack needs at least one layer".into(),
            ));
        }
        for layer in &layers {
            layer.validate()?;
        }
        if layers[0].in_channels != 1 {
            return Err(Error::DimensionMismatch {
                context: "first layer input channels",
                expected: 1,
                found: layers[0].in_channels,
            });
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::DimensionMismatch {
                    context: "layer channel chain",
                    expected: pair[0].out_channels,
                    found: pair[1].in_channels,
                });
            }
        }
        if selected.is_empty() || selected.iter().any(|&i| i >= layers.len()) {
            return Err(Error::InvalidParameter(
                "selected layers must be non-empty and in range".into(),
            ));
        }
        if layer_weights.len() != selected.len() {
            return Err(Error::DimensionMismatch {
                context: "layer weights vs selected layers",
                expected: selected.len(),
                found: layer_weights.len(),
            });
        }
        if layer_weights.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(
                "layer weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            layers,
            selected,
            layer_weights,
            source,
        })
    }

    /// Every layer selected with uniform weights `1/L`.
    pub fn all_layers(layers: Vec<ConvLayer>, source: StackSource) -> Result<Self> {
        let l = layers.len();
        Self::new(layers, (0..l).collect(), vec![1.0 / l as f64; l], source)
    }

    /// Single-channel identity layer with weight 1.
    pub fn identity() -> Self {
        Self::new(
            vec![ConvLayer::identity()],
            vec![0],
            vec![1.0],
            StackSource::File,
        )
        .expect("valid identity stack")
    }

    /// Three-layer stack: 3×3 snake (8 ch), 3×3 stride-2 relu (16 ch), 3×3 relu (16 ch).
    pub fn seeded(seed: u64) -> Self {
        let shapes = [
            LayerShape {
                out_channels: 8,
                kernel: 3,
                stride: 1,
                activation: Activation::Snake(1.0),
            },
            LayerShape {
                out_channels: 16,
                kernel: 3,
                stride: 2,
                activation: Activation::Relu,
            },
            LayerShape {
                out_channels: 16,
                kernel: 3,
                stride: 1,
                activation: Activation::Relu,
            },
        ];
        Self::seeded_with(seed, &shapes).expect("valid default stack")
    }

    /// He-uniform kernels (bound `√(6 / fan_in)`) drawn as f32 from a seeded
    /// ChaCha8 stream; biases are zero.
    pub fn seeded_with(seed: u64, shapes: &[LayerShape]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_channels = 1;
        let mut layers = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let fan_in = in_channels * shape.kernel * shape.kernel;
            let bound = (6.0 / fan_in as f64).sqrt();
            let n = shape.out_channels * fan_in;
            let weights = (0..n)
                .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32 as f64)
                .collect();
            layers.push(ConvLayer {
                out_channels: shape.out_channels,
                in_channels,
                kernel_h: shape.kernel,
                kernel_w: shape.kernel,
                stride_h: shape.stride,
                stride_w: shape.stride,
                weights,
                bias: vec![0.0; shape.out_channels],
                activation: shape.activation,
            });
            in_channels = shape.out_channels;
        }
        Self::all_layers(layers, StackSource::Seeded(seed))
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn layer_weights(&self) -> &[f64] {
        &self.layer_weights
    }

    pub fn source(&self) -> StackSource {
        self.source
    }

    pub fn with_layer_weights(&self, layer_weights: Vec<f64>) -> Result<Self> {
        Self::new(
            self.layers.clone(),
            self.selected.clone(),
            layer_weights,
            self.source,
        )
    }
}

/// Output of every layer, in order.
pub fn feature_forward(input: &FeatureMap, stack: &FeatureStack) -> Result<Vec<FeatureMap>> {
    if input.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature input"));
    }
    let mut maps: Vec<FeatureMap> = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let next = layer.forward(maps.last().unwrap_or(input))?;
        maps.push(next);
    }
    Ok(maps)
}

/// Per-layer reduction of the feature difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Total L1 over the feature map.
    #[default]
    Sum,
    /// L1 divided by the number of feature values.
    Mean,
}

fn reduce(values: impl Iterator<Item = f64>, count: usize, reduction: Reduction) -> f64 {
    let total: f64 = values.sum();
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / count as f64,
    }
}

/// L1 distance between selected-layer features, one value per selected layer.
pub fn layer_feature_distances(
    a: &FeatureMap,
    b: &FeatureMap,
    stack: &FeatureStack,
    reduction: Reduction,
) -> Result<Vec<f64>> {
    check_same_shape(a, b)?;
    let fa = feature_forward(a, stack)?;
    let fb = feature_forward(b, stack)?;
    Ok(stack
        .selected
        .iter()
        .map(|&l| {
            let (x, y) = (&fa[l], &fb[l]);
            reduce(
                x.data.iter().zip(&y.data).map(|(p, q)| (p - q).abs()),
                x.data.len(),
                reduction,
            )
        })
        .collect())
}

fn check_same_shape(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::DimensionMismatch {
            context: "feature loss input shapes",
            expected: a.data.len(),
            found: b.data.len(),
        });
    }
    Ok(())
}

/// `(1/L) Σ_l α_l ‖F_l(Ŝ) − F_l(S)‖₁` over the selected layers.
pub fn perceptual_loss(
    reference: &LogMelSpectrogram,
    estimate: &LogMelSpectrogram,
    stack: &FeatureStack,
) -> Result<f64> {
    perceptual_loss_maps(
        &FeatureMap::from_log_mel(reference)?,
        &FeatureMap::from_log_mel(estimate)?,
        stack,
        Reduction::Sum,
    )
}

/// Perceptual loss on arbitrary single-channel maps with a chosen per-layer reduction.
pub fn perceptual_loss_maps(
    reference: &FeatureMap,
    estimate: &FeatureMap,
    stack: &FeatureStack,
    reduction: Reduction,
) -> Result<f64> {
    let per_layer = layer_feature_distances(reference, estimate, stack, reduction)?;
    let l = per_layer.len() as f64;
    Ok(per_layer
        .iter()
        .zip(&stack.layer_weights)
        .map(|(d, a)| a * d)
        .sum::<f64>()
        / l)
}

/// Channel Gram matrix `ΦᵀΦ / positions`, row-major `C × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub size: usize,
    pub values: Vec<f64>,
}

impl GramMatrix {
    pub fn of(map: &FeatureMap) -> Self {
        let c = map.channels;
        let p = map.positions() as f64;
        let mut values = vec![0.0; c * c];
        for i in 0..c {
            for j in i..c {
                let v = map
                    .channel(i)
                    .iter()
                    .zip(map.channel(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / p;
                values[i * c + j] = v;
                values[j * c + i] = v;
            }
        }
        Self { size: c, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..self.size).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Gram matrices of the selected layers.
pub fn gram_matrices(input: &FeatureMap, stack: &FeatureStack) -> Result<Vec<GramMatrix>> {
    let maps = feature_forward(input, stack)?;
    Ok(stack
        .selected
        .iter()
        .map(|&l| GramMatrix::of(&maps[l]))
        .collect())
}

/// `(1/L) Σ_l α_l ‖GM_l(Ŝ) − GM_l(S)‖₁`.
pub fn gram_loss(
    reference: &LogMelSpectrogram,
    estimate: &LogMelSpectrogram,
    stack: &FeatureStack,
) -> Result<f64> {
    let a = FeatureMap::from_log_mel(reference)?;
    let b = FeatureMap::from_log_mel(estimate)?;
    check_same_shape(&a, &b)?;
    let ga = gram_matrices(&a, stack)?;
    let gb = gram_matrices(&b, stack)?;
    let l = ga.len() as f64;
    Ok(ga
        .iter()
        .zip(&gb)
        .zip(&stack.layer_weights)
        .map(|((x, y), alpha)| {
            alpha
                * x.values
                    .iter()
                    .zip(&y.values)
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
        })
        .sum::<f64>()
        / l)
}

pub(crate) fn magnitude_map(samples: &[f64], params: &StftParams) -> Result<FeatureMap> {
    let (frames, bins, mags) = magnitude_spectrogram(samples, params)?;
    FeatureMap::single(frames, bins, mags)
}

/// `weight · Σ_d Σ_l ‖F_l^(d)(|STFT_d(x̂)|) − F_l^(d)(|STFT_d(x)|)‖₁`, with
/// `stacks[d]` paired with `stft_params[d]`.
pub fn feature_matching_loss(
    reference: &[f64],
    estimate: &[f64],
    stacks: &[FeatureStack],
    stft_params: &[StftParams],
    weight: f64,
) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "feature matching waveform lengths",
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    if stacks.len() != stft_params.len() || stacks.is_empty() {
        return Err(Error::InvalidParameter(
            "need one STFT configuration per feature stack".into(),
        ));
    }
    let mut total = 0.0;
    for (stack, params) in stacks.iter().zip(stft_params) {
        let a = magnitude_map(reference, params)?;
        let b = magnitude_map(estimate, params)?;
        total += layer_feature_distances(&a, &b, stack, Reduction::Sum)?
            .iter()
            .sum::<f64>();
    }
    Ok(weight * total)
}

/// Mean over scales of the mean absolute magnitude difference; Hann window,
/// hop = size / 4.
pub fn multiscale_stft_distance(
    reference: &[f64],
    estimate: &[f64],
    fft_sizes: &[usize],
) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "multiscale STFT waveform lengths",
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    if fft_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one FFT size is required".into(),
        ));
    }
    let mut total = 0.0;
    for &size in fft_sizes {
        let params = StftParams::new(size, (size / 4).max(1), WindowKind::Hann)?;
        let (_, _, a) = magnitude_spectrogram(reference, &params)?;
        let (_, _, b) = magnitude_spectrogram(estimate, &params)?;
        total += mean_abs_diff(&a, &b)?;
    }
    Ok(total / fft_sizes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::AnalysisConfig;
    use approx::assert_relative_eq;

    fn lm(frames: usize, mels: usize, values: Vec<f64>) -> LogMelSpectrogram {
        let config = AnalysisConfig {
            log_floor: 1e-30,
            ..AnalysisConfig::default()
        };
        LogMelSpectrogram::new(config, frames, mels, values).unwrap()
    }

    #[test]
    fn l1_mel_examples() {
        let a = lm(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let b = lm(2, 2, vec![1.0, 1.0, 2.0, 1.0]);
        assert_eq!(l1_mel(&a, &b).unwrap(), 0.75);
        assert_eq!(l1_mel(&a, &a).unwrap(), 0.0);
        let zeros = lm(3, 4, vec![0.0; 12]);
        let offset = lm(3, 4, vec![0.26; 12]);
        assert_relative_eq!(l1_mel(&zeros, &offset).unwrap(), 0.26, epsilon = 1e-15);
        assert!(l1_mel(&a, &zeros).is_err());
    }

    #[test]
    fn identity_layer_reduces_to_plain_l1() {
        let stack = FeatureStack::identity();
        let a = lm(2, 3, vec![0.0, -1.0, 2.0, 3.0, 0.5, -0.5]);
        let b = lm(2, 3, vec![1.0, 1.0, 2.0, 1.0, 0.5, 0.5]);
        let features = feature_forward(&FeatureMap::from_log_mel(&a).unwrap(), &stack).unwrap();
        assert_eq!(features[0].data, a.values());
        assert_relative_eq!(
            perceptual_loss(&a, &b, &stack).unwrap(),
            1.0 + 2.0 + 2.0 + 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_input_relu_gives_zero_features() {
        let mut stack = FeatureStack::seeded(3);
        stack = FeatureStack::new(
            stack
                .layers()
                .iter()
                .cloned()
                .map(|mut l| {
                    l.activation = Activation::Relu;
                    l
                })
                .collect(),
            stack.selected().to_vec(),
            stack.layer_weights().to_vec(),
            stack.source(),
        )
        .unwrap();
        let zero = FeatureMap::single(12, 12, vec![0.0; 144]).unwrap();
        for map in feature_forward(&zero, &stack).unwrap() {
            assert!(map.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hand_convolved_three_by_three() {
        let kernel = vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0, 1.0, 0.0, -1.0];
        let layer = ConvLayer {
            out_channels: 1,
            in_channels: 1,
            kernel_h: 3,
            kernel_w: 3,
            stride_h: 1,
            stride_w: 1,
            weights: kernel,
            bias: vec![0.5],
            activation: Activation::Identity,
        };
        let input: Vec<f64> = (0..16).map(|i| (i * i % 7) as f64).collect();
        // rows: [0 1 4 2] [2 4 1 0] [1 4 2 2] [4 1 0 1]
        let out = layer
            .forward(&FeatureMap::single(4, 4, input).unwrap())
            .unwrap();
        assert_eq!((out.height, out.width), (2, 2));
        // top-left: (0-4) + 2(2-1) + (1-2) + 0.5
        let expected = [
            -4.0 + 2.0 - 1.0 + 0.5,
            (1.0 - 2.0) + 2.0 * (4.0 - 0.0) + (4.0 - 2.0) + 0.5,
            (2.0 - 1.0) + 2.0 * (1.0 - 2.0) + (4.0 - 0.0) + 0.5,
            (4.0 - 0.0) + 2.0 * (4.0 - 2.0) + (1.0 - 1.0) + 0.5,
        ];
        for (a, b) in out.data.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn stack_validation() {
        let mut bad = ConvLayer::identity();
        bad.in_channels = 2;
        bad.weights = vec![1.0, 1.0];
        assert!(FeatureStack::new(
            vec![ConvLayer::identity(), bad.clone()],
            vec![0],
            vec![1.0],
            StackSource::File
        )
        .is_err());
        assert!(FeatureStack::new(vec![bad], vec![0], vec![1.0], StackSource::File).is_err());
        assert!(FeatureStack::new(
            vec![ConvLayer::identity()],
            vec![],
            vec![],
            StackSource::File
        )
        .is_err());
        assert!(FeatureStack::new(
            vec![ConvLayer::identity()],
            vec![0],
            vec![-1.0],
            StackSource::File
        )
        .is_err());
        assert!(FeatureStack::new(
            vec![ConvLayer::identity()],
            vec![1],
            vec![1.0],
            StackSource::File
        )
        .is_err());
    }

    #[test]
    fn gram_of_identity_layer_is_mean_square() {
        let stack = FeatureStack::identity();
        let a = lm(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = lm(2, 2, vec![0.0, 1.0, -1.0, 2.0]);
        let g = gram_matrices(&FeatureMap::from_log_mel(&a).unwrap(), &stack).unwrap();
        assert_relative_eq!(g[0].get(0, 0), 30.0 / 4.0, epsilon = 1e-12);
        assert_relative_eq!(
            gram_loss(&a, &b, &stack).unwrap(),
            (7.5f64 - 1.5).abs(),
            epsilon = 1e-12
        );
        assert_eq!(gram_loss(&a, &a, &stack).unwrap(), 0.0);
    }

    #[test]
    fn seeded_gram_matrices_are_symmetric() {
        let stack = FeatureStack::seeded(11);
        let input = FeatureMap::single(
            16,
            16,
            (0..256).map(|i| ((i * 13) % 17) as f64 / 17.0).collect(),
        )
        .unwrap();
        for g in gram_matrices(&input, &stack).unwrap() {
            assert!(g.is_symmetric());
        }
    }

    #[test]
    fn seeded_stack_is_deterministic() {
        assert_eq!(FeatureStack::seeded(5), FeatureStack::seeded(5));
        assert_ne!(FeatureStack::seeded(5), FeatureStack::seeded(6));
    }

    #[test]
    fn feature_matching_scales_with_weight() {
        let x: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.05).sin()).collect();
        let y: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.07).sin() * 0.5).collect();
        let stacks = [FeatureStack::seeded(1)];
        let params = [StftParams::hann_quarter_hop(256).unwrap()];
        let one = feature_matching_loss(&x, &y, &stacks, &params, 1.0).unwrap();
        let five =
            feature_matching_loss(&x, &y, &stacks, &params, FEATURE_MATCHING_WEIGHT).unwrap();
        assert!(one > 0.0);
        assert_relative_eq!(five, 5.0 * one, max_relative = 1e-12);
        assert_eq!(
            feature_matching_loss(&x, &x, &stacks, &params, 1.0).unwrap(),
            0.0
        );
        assert!(feature_matching_loss(&x, &y[..100], &stacks, &params, 1.0).is_err());
    }

    #[test]
    fn multiscale_distance_basics() {
        let x: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.01).cos()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.9).collect();
        assert_eq!(
            multiscale_stft_distance(&x, &x, &DEFAULT_STFT_SCALES).unwrap(),
            0.0
        );
        let d = multiscale_stft_distance(&x, &y, &DEFAULT_STFT_SCALES).unwrap();
        assert!(d > 0.0);
        assert_eq!(
            d,
            multiscale_stft_distance(&y, &x, &DEFAULT_STFT_SCALES).unwrap()
        );
        assert!(multiscale_stft_distance(&x, &y[..10], &DEFAULT_STFT_SCALES).is_err());
    }
}
