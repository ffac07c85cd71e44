//! Skeleton-map encoding: rows are frames, columns are joints (body 1 then
//! body 2), channels carry x, y, z quantized per channel to 0..=255.

use crate::skeleton::{SkeletonSequence, MAX_BODIES, NUM_JOINTS};

/// Encoded image width: one column per joint slot.
pub const IMAGE_WIDTH: usize = NUM_JOINTS * MAX_BODIES;
pub const CHANNELS: usize = 3;

/// Per-channel (x, y, z) value range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRange {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ChannelRange {
    /// Value a quantized pixel decodes to.
    pub fn decode(&self, channel: usize, pixel: u8) -> f64 {
        self.min[channel] + f64::from(pixel) * (self.max[channel] - self.min[channel]) / 255.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// 0..=255, straight from the quantizer.
    Quantized(Vec<u8>),
    /// Real values in [0, 1].
    Real(Vec<f64>),
}

/// An H×W×3 image stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Pixels,
}

impl SkeletonImage {
    pub fn quantized(height: usize, width: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), height * width * CHANNELS);
        Self { height, width, pixels: Pixels::Quantized(data) }
    }

    pub fn real(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * CHANNELS);
        Self { height, width, pixels: Pixels::Real(data) }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::real(height, width, vec![value; height * width * CHANNELS])
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * CHANNELS + channel
    }

    pub fn len(&self) -> usize {
        self.height * self.width * CHANNELS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value on the [0, 1] scale.
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        let i = self.index(row, col, channel);
        match &self.pixels {
            Pixels::Quantized(d) => f64::from(d[i]) / 255.0,
            Pixels::Real(d) => d[i],
        }
    }

    /// Values on the [0, 1] scale.
    pub fn to_real_vec(&self) -> Vec<f64> {
        match &self.pixels {
            Pixels::Quantized(d) => d.iter().map(|&p| f64::from(p) / 255.0).collect(),
            Pixels::Real(d) => d.clone(),
        }
    }

    pub fn into_real(self) -> Self {
        match self.pixels {
            Pixels::Real(_) => self,
            Pixels::Quantized(_) => {
                let data = self.to_real_vec();
                Self::real(self.height, self.width, data)
            }
        }
    }

    /// Quantized bytes; real images are rounded to the nearest level.
    pub fn to_bytes(&self) -> Vec<u8> {
        match &self.pixels {
            Pixels::Quantized(d) => d.clone(),
            Pixels::Real(d) => d.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        }
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.to_bytes());
        out
    }
}

/// Min/max per channel over every present joint.
pub fn compute_channel_range(seq: &SkeletonSequence) -> ChannelRange {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for joint in seq.joints() {
        for c in 0..3 {
            min[c] = min[c].min(joint[c]);
            max[c] = max[c].max(joint[c]);
        }
    }
    if min[0] > max[0] {
        return ChannelRange { min: [0.0; 3], max: [0.0; 3] };
    }
    ChannelRange { min, max }
}

/// `floor(255·(v − min)/(max − min))` per channel. Values outside the range
/// (possible with a fixed global range) are clamped; absent bodies and
/// constant channels encode as 0.
pub fn quantize(value: f64, min: f64, max: f64) -> u8 {
    let span = max - min;
    if span <= 0.0 {
        return 0;
    }
    // ratio first, so value == max gives exactly 1
    ((value - min) / span * 255.0).floor().clamp(0.0, 255.0) as u8
}

pub fn encode(seq: &SkeletonSequence, range: &ChannelRange) -> SkeletonImage {
    let height = seq.frames.len();
    let mut data = vec![0u8; height * IMAGE_WIDTH * CHANNELS];
    for (t, frame) in seq.frames.iter().enumerate() {
        for (slot, body) in frame.slots.iter().enumerate() {
            let Some(body) = body else { continue };
            for (j, joint) in body.joints.iter().enumerate() {
                let base = (t * IMAGE_WIDTH + slot * NUM_JOINTS + j) * CHANNELS;
                for c in 0..3 {
                    data[base + c] = quantize(joint[c], range.min[c], range.max[c]);
                }
            }
        }
    }
    SkeletonImage::quantized(height, IMAGE_WIDTH, data)
}

/// Encodes against the sequence's own range.
pub fn encode_auto(seq: &SkeletonSequence) -> SkeletonImage {
    encode(seq, &compute_channel_range(seq))
}

/// Scope of the quantization range.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RangeMode {
    /// Each sequence is stretched over its own min/max.
    #[default]
    PerSequence,
    /// One range for every sequence.
    Fixed(ChannelRange),
}

impl RangeMode {
    pub fn encode(&self, seq: &SkeletonSequence) -> SkeletonImage {
        match self {
            RangeMode::PerSequence => encode_auto(seq),
            RangeMode::Fixed(range) => encode(seq, range),
        }
    }
}

fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|i| {
            let src = if output == 1 || input == 1 {
                0.0
            } else {
                i as f64 * (input - 1) as f64 / (output - 1) as f64
            };
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Corner-aligned bilinear resize; output is real-valued in [0, 1].
pub fn resize_bilinear(img: &SkeletonImage, out_h: usize, out_w: usize) -> SkeletonImage {
    assert!(out_h >= 1 && out_w >= 1, "output dimensions must be positive");
    let src = img.to_real_vec();
    if out_h == img.height && out_w == img.width {
        return SkeletonImage::real(out_h, out_w, src);
    }
    let rows = sample_positions(img.height, out_h);
    let cols = sample_positions(img.width, out_w);
    let at = |r: usize, c: usize, ch: usize| src[(r * img.width + c) * CHANNELS + ch];
    let mut data = Vec::with_capacity(out_h * out_w * CHANNELS);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for ch in 0..CHANNELS {
                let top = at(r0, c0, ch) * (1.0 - fc) + at(r0, c1, ch) * fc;
                let bottom = at(r1, c0, ch) * (1.0 - fc) + at(r1, c1, ch) * fc;
                data.push(top * (1.0 - fr) + bottom * fr);
            }
        }
    }
    SkeletonImage::real(out_h, out_w, data)
}
