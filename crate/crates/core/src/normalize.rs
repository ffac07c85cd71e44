//! View normalization: express joints in a body-anchored frame.
//!
//! The canonical frame puts spine-mid at the origin, the left→right hip
//! direction on +x and the (orthogonalized) spine-base→spine-mid direction
//! on +y. Coordinates are divided by the reference frame's spine length.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::skeleton::{joints, Joint3D, SkeletonFrame, SkeletonSequence};

const DEGENERATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// Each frame uses its own basis; global translation is lost.
    FrameBased,
    /// Every frame uses the basis of the first populated frame.
    #[default]
    SequenceBased,
    /// Raw camera-space coordinates.
    None,
}

impl FromStr for NormalizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frame" => Ok(NormalizeMode::FrameBased),
            "sequence" => Ok(NormalizeMode::SequenceBased),
            "none" => Ok(NormalizeMode::None),
            other => Err(format!("unknown normalize mode {other:?} (expected frame, sequence, none)")),
        }
    }
}

impl fmt::Display for NormalizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizeMode::FrameBased => "frame",
            NormalizeMode::SequenceBased => "sequence",
            NormalizeMode::None => "none",
        })
    }
}

/// Rigid transform into the canonical body frame: `p ↦ R·(p − origin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalBasis {
    pub origin: Joint3D,
    pub rotation: Matrix3<f64>,
}

impl CanonicalBasis {
    pub fn translation_only(origin: Joint3D) -> Self {
        Self { origin, rotation: Matrix3::identity() }
    }

    pub fn apply(&self, p: &Joint3D) -> Joint3D {
        self.rotation * (p - self.origin)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizeError {
    #[error("frame has no body")]
    NoBody,
    #[error("hip and spine directions are degenerate")]
    DegenerateBasis,
}

pub fn compute_basis(frame: &SkeletonFrame) -> Result<CanonicalBasis, NormalizeError> {
    let body = frame.primary().ok_or(NormalizeError::NoBody)?;
    let j = &body.joints;
    let origin = j[joints::SPINE_MID];
    let hips = j[joints::HIP_RIGHT] - j[joints::HIP_LEFT];
    let spine = j[joints::SPINE_MID] - j[joints::SPINE_BASE];
    let (hip_norm, spine_norm) = (hips.norm(), spine.norm());
    if hip_norm < DEGENERATE_TOL || spine_norm < DEGENERATE_TOL {
        return Err(NormalizeError::DegenerateBasis);
    }
    let x = hips / hip_norm;
    if x.cross(&(spine / spine_norm)).norm() < DEGENERATE_TOL {
        return Err(NormalizeError::DegenerateBasis);
    }
    let y = (spine - x * x.dot(&spine)).normalize();
    let z = x.cross(&y);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Ok(CanonicalBasis { origin, rotation })
}

/// Basis for a populated frame, falling back to translation-only when the
/// anchor joints are degenerate.
fn basis_or_fallback(frame: &SkeletonFrame) -> Option<CanonicalBasis> {
    let body = frame.primary()?;
    Some(
        compute_basis(frame)
            .unwrap_or_else(|_| CanonicalBasis::translation_only(body.joints[joints::SPINE_MID])),
    )
}

fn spine_length(frame: &SkeletonFrame) -> f64 {
    frame
        .primary()
        .map(|b| (b.joints[joints::SPINE_MID] - b.joints[joints::SPINE_BASE]).norm())
        .unwrap_or(0.0)
}

fn transform_frame(frame: &mut SkeletonFrame, basis: &CanonicalBasis, inv_scale: f64) {
    for body in frame.bodies_mut() {
        for joint in body.joints.iter_mut() {
            *joint = basis.apply(joint) * inv_scale;
        }
    }
}

/// Normalizes a sequence. Never fails: degenerate frames are only
/// translated, and sequences without bodies are returned unchanged.
pub fn normalize_sequence(seq: &SkeletonSequence, mode: NormalizeMode) -> SkeletonSequence {
    let mut out = seq.clone();
    if mode == NormalizeMode::None {
        return out;
    }
    let Some(reference) = seq.first_populated() else {
        return out;
    };
    let spine = spine_length(&seq.frames[reference]);
    let inv_scale = if spine < DEGENERATE_TOL { 1.0 } else { 1.0 / spine };
    match mode {
        NormalizeMode::SequenceBased => {
            let basis = basis_or_fallback(&seq.frames[reference]).expect("reference is populated");
            for frame in out.frames.iter_mut() {
                transform_frame(frame, &basis, inv_scale);
            }
        }
        NormalizeMode::FrameBased => {
            for frame in out.frames.iter_mut() {
                if let Some(basis) = basis_or_fallback(frame) {
                    transform_frame(frame, &basis, inv_scale);
                }
            }
        }
        NormalizeMode::None => unreachable!("handled above"),
    }
    out
}
