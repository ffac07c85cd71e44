use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{AugmentError, AugmentKind, AugmentOp, AugmentRanges};
use crate::encode::{SkeletonImage, CHANNELS};

/// Applies a noise op on the [0, 1] scale; results are clamped to [0, 1].
/// Magnitude 0 is an exact identity.
pub fn apply_noise_op<R: Rng + ?Sized>(
    img: &SkeletonImage,
    op: &AugmentOp,
    ranges: &AugmentRanges,
    rng: &mut R,
) -> Result<SkeletonImage, AugmentError> {
    if !op.kind.is_noise() {
        return Err(AugmentError::WrongDomain { kind: op.kind, space: "noise" });
    }
    let m = op.magnitude();
    let mut data = img.to_real_vec();
    if m == 0.0 {
        return Ok(SkeletonImage::real(img.height, img.width, data));
    }
    match op.kind {
        AugmentKind::SaltPepper | AugmentKind::Salt | AugmentKind::Pepper => {
            let p = (m * ranges.salt_pepper).min(1.0);
            for pixel in data.chunks_exact_mut(CHANNELS) {
                if !rng.random_bool(p) {
                    continue;
                }
                let value = match op.kind {
                    AugmentKind::Salt => 1.0,
                    AugmentKind::Pepper => 0.0,
                    _ if rng.random_bool(0.5) => 1.0,
                    _ => 0.0,
                };
                pixel.fill(value);
            }
        }
        AugmentKind::Gaussian => {
            let noise = Normal::new(0.0, m * ranges.gaussian_sigma).expect("finite sigma");
            for v in data.iter_mut() {
                *v += noise.sample(rng);
            }
        }
        AugmentKind::Speckle => {
            // Poisson(λ)/λ has mean 1 and standard deviation 1/√λ.
            let sigma = m * ranges.speckle_sigma;
            let lambda = 1.0 / (sigma * sigma);
            let counts = Poisson::new(lambda).expect("positive rate");
            for v in data.iter_mut() {
                let k: f64 = counts.sample(rng);
                *v *= k / lambda;
            }
        }
        AugmentKind::Localvars => {
            let max_var = m * ranges.localvars_var;
            for pixel in data.chunks_exact_mut(CHANNELS) {
                let std = rng.random_range(0.0..=max_var).sqrt();
                let noise = Normal::new(0.0, std).expect("finite sigma");
                for v in pixel.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
        _ => unreachable!("is_noise checked above"),
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(SkeletonImage::real(img.height, img.width, data))
}
