use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use super::{apply_image_op, apply_skeleton_op, AugmentKind, AugmentOp, AugmentRanges};
use crate::encode::{RangeMode, SkeletonImage};
use crate::rng::{stream, Purpose, StreamRng};
use crate::skeleton::SkeletonSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tier {
    #[default]
    Weak,
    Strong,
}

impl FromStr for Tier {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "weak" => Ok(Tier::Weak),
            "strong" => Ok(Tier::Strong),
            other => Err(PolicyError::BadValue { key: "tier".into(), value: other.into() }),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Weak => "weak",
            Tier::Strong => "strong",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("line {0}: expected key = value")]
    BadLine(usize),
    #[error("unknown policy key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("num_ops {num_ops} exceeds catalog size {catalog}")]
    TooManyOps { num_ops: usize, catalog: usize },
}

/// RandAugment-style policy: draw `num_ops` distinct catalog ops per
/// sample and apply each at the tier's magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub num_ops: usize,
    pub tier: Tier,
    pub catalog: Vec<AugmentKind>,
    pub seed: u64,
    pub weak_magnitude: f64,
    pub strong_magnitude: f64,
    /// Noise ops have no strong setting unless this is set.
    pub strong_noise: bool,
    pub ranges: AugmentRanges,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            num_ops: 2,
            tier: Tier::Weak,
            catalog: Self::default_catalog(),
            seed: 0,
            weak_magnitude: 0.3,
            strong_magnitude: 0.7,
            strong_noise: false,
            ranges: AugmentRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub sequence: SkeletonSequence,
    pub image: SkeletonImage,
    pub ops: Vec<AugmentOp>,
}

impl AugmentPolicy {
    /// The six strongest single ops at the weak tier.
    pub fn default_catalog() -> Vec<AugmentKind> {
        vec![
            AugmentKind::Rotate,
            AugmentKind::ShearX,
            AugmentKind::ShearY,
            AugmentKind::TranslateY,
            AugmentKind::Cutout,
            AugmentKind::BoneShuffle,
        ]
    }

    /// A policy that never changes its input.
    pub fn disabled() -> Self {
        Self { num_ops: 0, ..Self::default() }
    }

    pub fn full_catalog(num_ops: usize, tier: Tier, seed: u64) -> Self {
        Self { num_ops, tier, catalog: AugmentKind::ALL.to_vec(), seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.num_ops > self.catalog.len() {
            return Err(PolicyError::TooManyOps { num_ops: self.num_ops, catalog: self.catalog.len() });
        }
        for (key, m) in [("weak", self.weak_magnitude), ("strong", self.strong_magnitude)] {
            if !(0.0..=1.0).contains(&m) {
                return Err(PolicyError::BadValue { key: key.into(), value: m.to_string() });
            }
        }
        Ok(())
    }

    pub fn magnitude(&self, kind: AugmentKind) -> f64 {
        match self.tier {
            Tier::Strong if !kind.is_noise() || self.strong_noise => self.strong_magnitude,
            _ => self.weak_magnitude,
        }
    }

    /// The stream for one sample in one epoch.
    pub fn stream(&self, epoch: u64, sample_index: u64) -> StreamRng {
        stream(self.seed, Purpose::Augment, epoch, sample_index)
    }

    /// Draws `num_ops` distinct ops in draw order.
    pub fn sample_ops<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<AugmentOp> {
        let n = self.num_ops.min(self.catalog.len());
        sample(rng, self.catalog.len(), n)
            .into_iter()
            .map(|i| {
                let kind = self.catalog[i];
                AugmentOp::new(kind, self.magnitude(kind)).expect("validated magnitude")
            })
            .collect()
    }

    /// Parses `key = value` lines (`ops`, `num_ops`, `tier`, `seed`,
    /// `weak`, `strong`, `strong_noise`). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut policy = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(PolicyError::BadLine(n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || PolicyError::BadValue { key: key.into(), value: value.into() };
            match key {
                "ops" => {
                    policy.catalog = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse::<AugmentKind>().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?;
                }
                "num_ops" => policy.num_ops = value.parse().map_err(|_| bad())?,
                "tier" => policy.tier = value.parse()?,
                "seed" => policy.seed = value.parse().map_err(|_| bad())?,
                "weak" => policy.weak_magnitude = value.parse().map_err(|_| bad())?,
                "strong" => policy.strong_magnitude = value.parse().map_err(|_| bad())?,
                "strong_noise" => policy.strong_noise = value.parse().map_err(|_| bad())?,
                other => return Err(PolicyError::UnknownKey(other.into())),
            }
        }
        policy.validate()?;
        Ok(policy)
    }
}

/// Augments one (normalized) sequence: skeleton-capable ops act on the
/// sequence before encoding, image-only ops act on the encoded map.
pub fn rand_augment<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    policy: &AugmentPolicy,
    range: &RangeMode,
    rng: &mut R,
) -> AugmentedSample {
    let ops = policy.sample_ops(rng);
    let mut sequence = seq.clone();
    for op in ops.iter().filter(|op| op.domain().allows_skeleton()) {
        sequence = apply_skeleton_op(&sequence, op, &policy.ranges, rng).expect("domain checked");
    }
    let mut image = range.encode(&sequence);
    for op in ops.iter().filter(|op| !op.domain().allows_skeleton()) {
        image = apply_image_op(&image, op, &policy.ranges, rng).expect("domain checked");
    }
    AugmentedSample { sequence, image, ops }
}
