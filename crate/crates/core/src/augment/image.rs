use rand::seq::index::sample;
use rand::Rng;

use super::{apply_noise_op, masked_count, AugmentError, AugmentKind, AugmentOp, AugmentRanges};
use crate::encode::{SkeletonImage, CHANNELS};

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Bilinear sample at fractional (row, col) with zero padding.
fn sample_zero_padded(src: &[f64], h: usize, w: usize, row: f64, col: f64, out: &mut [f64]) {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    out.fill(0.0);
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            let weight = wr * wc;
            if weight == 0.0 {
                continue;
            }
            let (r, c) = (r0 + dr, c0 + dc);
            if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
                continue;
            }
            let base = (r as usize * w + c as usize) * CHANNELS;
            for ch in 0..CHANNELS {
                out[ch] += weight * src[base + ch];
            }
        }
    }
}

/// Resamples through an inverse map from centered output coordinates
/// `(dy, dx)` to centered source coordinates.
fn warp(img: &SkeletonImage, inverse: impl Fn(f64, f64) -> (f64, f64)) -> SkeletonImage {
    let (h, w) = (img.height, img.width);
    let src = img.to_real_vec();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            let (sy, sx) = inverse(r as f64 - cy, c as f64 - cx);
            let base = (r * w + c) * CHANNELS;
            sample_zero_padded(&src, h, w, sy + cy, sx + cx, &mut data[base..base + CHANNELS]);
        }
    }
    SkeletonImage::real(h, w, data)
}

fn flip(img: &SkeletonImage, horizontal: bool) -> SkeletonImage {
    let (h, w) = (img.height, img.width);
    let src = img.to_real_vec();
    let mut data = Vec::with_capacity(src.len());
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = if horizontal { (r, w - 1 - c) } else { (h - 1 - r, c) };
            let base = (sr * w + sc) * CHANNELS;
            data.extend_from_slice(&src[base..base + CHANNELS]);
        }
    }
    SkeletonImage::real(h, w, data)
}

fn cutout<R: Rng + ?Sized>(img: &SkeletonImage, magnitude: f64, ranges: &AugmentRanges, rng: &mut R) -> SkeletonImage {
    let (h, w) = (img.height, img.width);
    let side = (magnitude * ranges.cutout * h.min(w) as f64).round() as i64;
    let cy = rng.random_range(0..h) as i64;
    let cx = rng.random_range(0..w) as i64;
    let mut data = img.to_real_vec();
    let (r0, c0) = (cy - side / 2, cx - side / 2);
    for r in r0.max(0)..(r0 + side).min(h as i64) {
        for c in c0.max(0)..(c0 + side).min(w as i64) {
            let base = (r as usize * w + c as usize) * CHANNELS;
            data[base..base + CHANNELS].fill(0.0);
        }
    }
    SkeletonImage::real(h, w, data)
}

fn mask_rows<R: Rng + ?Sized>(img: &SkeletonImage, magnitude: f64, ranges: &AugmentRanges, rng: &mut R) -> SkeletonImage {
    let (h, w) = (img.height, img.width);
    let count = masked_count(magnitude, h, ranges.mask_fraction);
    let mut data = img.to_real_vec();
    for r in sample(rng, h, count).into_iter() {
        data[r * w * CHANNELS..(r + 1) * w * CHANNELS].fill(0.0);
    }
    SkeletonImage::real(h, w, data)
}

/// Applies an image-space op. Output is real-valued with unchanged
/// dimensions. Noise ops are forwarded to [`apply_noise_op`].
pub fn apply_image_op<R: Rng + ?Sized>(
    img: &SkeletonImage,
    op: &AugmentOp,
    ranges: &AugmentRanges,
    rng: &mut R,
) -> Result<SkeletonImage, AugmentError> {
    if !op.domain().allows_image() {
        return Err(AugmentError::WrongDomain { kind: op.kind, space: "image" });
    }
    if op.kind.is_noise() {
        return apply_noise_op(img, op, ranges, rng);
    }
    let m = op.magnitude();
    let (h, w) = (img.height as f64, img.width as f64);
    let out = match op.kind {
        AugmentKind::FlipH => flip(img, true),
        AugmentKind::FlipV => flip(img, false),
        AugmentKind::Rotate => {
            let theta = (m * ranges.rotate_deg * random_sign(rng)).to_radians();
            let (s, c) = theta.sin_cos();
            warp(img, |dy, dx| (c * dy - s * dx, s * dy + c * dx))
        }
        AugmentKind::Zoom => {
            let factor = 1.0 + m * ranges.zoom * random_sign(rng);
            warp(img, |dy, dx| (dy / factor, dx / factor))
        }
        AugmentKind::ShearX => {
            let k = m * ranges.shear * random_sign(rng);
            warp(img, |dy, dx| (dy, dx + k * dy))
        }
        AugmentKind::ShearY => {
            let k = m * ranges.shear * random_sign(rng);
            warp(img, |dy, dx| (dy + k * dx, dx))
        }
        AugmentKind::TranslateX => {
            let shift = m * ranges.translate * w * random_sign(rng);
            warp(img, |dy, dx| (dy, dx - shift))
        }
        AugmentKind::TranslateY => {
            let shift = m * ranges.translate * h * random_sign(rng);
            warp(img, |dy, dx| (dy - shift, dx))
        }
        AugmentKind::Cutout => cutout(img, m, ranges, rng),
        AugmentKind::FrameMask => mask_rows(img, m, ranges, rng),
        _ => unreachable!("domain and noise checks cover the remaining kinds"),
    };
    Ok(out)
}
