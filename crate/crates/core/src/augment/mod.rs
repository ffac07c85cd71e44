//! Augmentation catalog, per-op implementations, and the random policy
//! engine that injects N catalog ops at a fixed magnitude tier.

mod image;
mod noise;
mod policy;
mod skeleton;

pub use image::apply_image_op;
pub use noise::apply_noise_op;
pub use policy::{rand_augment, AugmentPolicy, AugmentedSample, PolicyError, Tier};
pub use skeleton::{apply_skeleton_op, permute_joints};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Where an op can act.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    ImageSpace,
    SkeletonSpace,
    Both,
}

impl Domain {
    pub fn allows_image(self) -> bool {
        matches!(self, Domain::ImageSpace | Domain::Both)
    }

    pub fn allows_skeleton(self) -> bool {
        matches!(self, Domain::SkeletonSpace | Domain::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    FlipH,
    FlipV,
    Rotate,
    Zoom,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Cutout,
    SaltPepper,
    Salt,
    Pepper,
    Gaussian,
    Speckle,
    Localvars,
    BoneShuffle,
    BoneMask,
    FrameMask,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 18] = [
        AugmentKind::FlipH,
        AugmentKind::FlipV,
        AugmentKind::Rotate,
        AugmentKind::Zoom,
        AugmentKind::ShearX,
        AugmentKind::ShearY,
        AugmentKind::TranslateX,
        AugmentKind::TranslateY,
        AugmentKind::Cutout,
        AugmentKind::SaltPepper,
        AugmentKind::Salt,
        AugmentKind::Pepper,
        AugmentKind::Gaussian,
        AugmentKind::Speckle,
        AugmentKind::Localvars,
        AugmentKind::BoneShuffle,
        AugmentKind::BoneMask,
        AugmentKind::FrameMask,
    ];

    pub fn domain(self) -> Domain {
        use AugmentKind::*;
        match self {
            FlipH | FlipV | Rotate | FrameMask => Domain::Both,
            BoneShuffle | BoneMask => Domain::SkeletonSpace,
            Zoom | ShearX | ShearY | TranslateX | TranslateY | Cutout | SaltPepper | Salt
            | Pepper | Gaussian | Speckle | Localvars => Domain::ImageSpace,
        }
    }

    pub fn is_noise(self) -> bool {
        use AugmentKind::*;
        matches!(self, SaltPepper | Salt | Pepper | Gaussian | Speckle | Localvars)
    }

    pub fn name(self) -> &'static str {
        use AugmentKind::*;
        match self {
            FlipH => "flip-h",
            FlipV => "flip-v",
            Rotate => "rotate",
            Zoom => "zoom",
            ShearX => "shear-x",
            ShearY => "shear-y",
            TranslateX => "translate-x",
            TranslateY => "translate-y",
            Cutout => "cutout",
            SaltPepper => "salt-pepper",
            Salt => "salt",
            Pepper => "pepper",
            Gaussian => "gaussian",
            Speckle => "speckle",
            Localvars => "localvars",
            BoneShuffle => "bone-shuffle",
            BoneMask => "bone-mask",
            FrameMask => "frame-mask",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| AugmentError::UnknownKind(s.to_string()))
    }
}

/// An op at a given magnitude in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOp {
    pub kind: AugmentKind,
    magnitude: f64,
}

impl AugmentOp {
    pub fn new(kind: AugmentKind, magnitude: f64) -> Result<Self, AugmentError> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(AugmentError::InvalidMagnitude(magnitude));
        }
        Ok(Self { kind, magnitude })
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn domain(&self) -> Domain {
        self.kind.domain()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("{kind} cannot be applied in {space} space")]
    WrongDomain { kind: AugmentKind, space: &'static str },
    #[error("magnitude {0} outside [0, 1]")]
    InvalidMagnitude(f64),
    #[error("unknown augmentation {0:?}")]
    UnknownKind(String),
}

/// Concrete op ranges at magnitude 1.0. Each op scales its range linearly
/// with magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    /// Degrees, image plane and skeleton yaw.
    pub rotate_deg: f64,
    /// Zoom factor lies in `1 ± zoom`.
    pub zoom: f64,
    pub shear: f64,
    /// Fraction of the axis length.
    pub translate: f64,
    /// Cutout square side as a fraction of `min(H, W)`.
    pub cutout: f64,
    /// Fraction of pixels hit by salt/pepper noise.
    pub salt_pepper: f64,
    /// Standard deviation on the [0, 1] scale.
    pub gaussian_sigma: f64,
    /// Standard deviation of the multiplicative speckle factor.
    pub speckle_sigma: f64,
    /// Upper bound of the per-pixel variance.
    pub localvars_var: f64,
    /// Fraction of joints (frames) masked or shuffled.
    pub mask_fraction: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            rotate_deg: 30.0,
            zoom: 0.3,
            shear: 0.3,
            translate: 0.25,
            cutout: 1.0,
            salt_pepper: 0.05,
            gaussian_sigma: 0.1,
            speckle_sigma: 0.1,
            localvars_var: 0.02,
            mask_fraction: 0.2,
        }
    }
}

/// `ceil(magnitude · count · fraction)`, capped at `count`.
pub(crate) fn masked_count(magnitude: f64, count: usize, fraction: f64) -> usize {
    // Round away representation noise before the ceiling (1.0·25·0.2 = 5.000000000000001).
    let raw = (magnitude * count as f64 * fraction * 1e9).round() / 1e9;
    (raw.ceil() as usize).min(count)
}
