use nalgebra::{Rotation3, Vector3};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{masked_count, AugmentError, AugmentKind, AugmentOp, AugmentRanges};
use crate::skeleton::{joints, Joint3D, SkeletonSequence, NUM_JOINTS};

/// Reorders joints in every body of every frame: output joint `j` takes
/// the input joint `perm[j]`.
pub fn permute_joints(seq: &SkeletonSequence, perm: &[usize; NUM_JOINTS]) -> SkeletonSequence {
    let mut out = seq.clone();
    for frame in out.frames.iter_mut() {
        for body in frame.bodies_mut() {
            let src = body.joints;
            for (j, &p) in perm.iter().enumerate() {
                body.joints[j] = src[p];
            }
        }
    }
    out
}

/// Applies a skeleton-space op. Frame count, body slots and joint count
/// are unchanged.
pub fn apply_skeleton_op<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    op: &AugmentOp,
    ranges: &AugmentRanges,
    rng: &mut R,
) -> Result<SkeletonSequence, AugmentError> {
    if !op.domain().allows_skeleton() {
        return Err(AugmentError::WrongDomain { kind: op.kind, space: "skeleton" });
    }
    let m = op.magnitude();
    let mut out = seq.clone();
    match op.kind {
        AugmentKind::FlipH => {
            let mut perm = [0usize; NUM_JOINTS];
            for (j, p) in perm.iter_mut().enumerate() {
                *p = joints::mirror(j);
            }
            out = permute_joints(seq, &perm);
            for joint in out.joints_mut() {
                joint.x = -joint.x;
            }
        }
        AugmentKind::FlipV => out.frames.reverse(),
        AugmentKind::Rotate => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let angle = (m * ranges.rotate_deg * sign).to_radians();
            let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), angle);
            for joint in out.joints_mut() {
                *joint = rot * *joint;
            }
        }
        AugmentKind::FrameMask => {
            let count = masked_count(m, out.frames.len(), ranges.mask_fraction);
            for t in sample(rng, out.frames.len(), count).into_iter() {
                for body in out.frames[t].bodies_mut() {
                    body.joints = [Joint3D::zeros(); NUM_JOINTS];
                }
            }
        }
        AugmentKind::BoneMask => {
            let count = masked_count(m, NUM_JOINTS, ranges.mask_fraction);
            let masked: Vec<usize> = sample(rng, NUM_JOINTS, count).into_vec();
            for frame in out.frames.iter_mut() {
                for body in frame.bodies_mut() {
                    for &j in &masked {
                        body.joints[j] = Joint3D::zeros();
                    }
                }
            }
        }
        AugmentKind::BoneShuffle => {
            // A random subset of joints trades places; the same
            // permutation is used for every frame.
            let count = masked_count(m, NUM_JOINTS, ranges.mask_fraction);
            let chosen: Vec<usize> = sample(rng, NUM_JOINTS, count).into_vec();
            let mut targets = chosen.clone();
            targets.shuffle(rng);
            let mut perm: [usize; NUM_JOINTS] = std::array::from_fn(|j| j);
            for (&slot, &source) in chosen.iter().zip(targets.iter()) {
                perm[slot] = source;
            }
            out = permute_joints(seq, &perm);
        }
        _ => unreachable!("domain check covers the remaining kinds"),
    }
    Ok(out)
}
