//! Skeleton sequences: domain types, the text capture-file format, sample
//! names, and protocol splits.

mod format;
mod name;
mod split;

pub use format::{parse_skeleton_file, write_skeleton_file, ParseError};
pub use name::{parse_sample_name, NameError, SampleMeta};
pub use split::{split_dataset, Protocol, SplitConfig, SplitConfigError, SplitError};

use nalgebra::Vector3;

/// Joints per body (Kinect v2 layout).
pub const NUM_JOINTS: usize = 25;
/// Maximum bodies retained per frame.
pub const MAX_BODIES: usize = 2;

/// Camera-space joint position in meters.
pub type Joint3D = Vector3<f64>;

/// Kinect v2 joint indices used by normalization and flipping.
pub mod joints {
    pub const SPINE_BASE: usize = 0;
    pub const SPINE_MID: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const SHOULDER_LEFT: usize = 4;
    pub const ELBOW_LEFT: usize = 5;
    pub const WRIST_LEFT: usize = 6;
    pub const HAND_LEFT: usize = 7;
    pub const SHOULDER_RIGHT: usize = 8;
    pub const ELBOW_RIGHT: usize = 9;
    pub const WRIST_RIGHT: usize = 10;
    pub const HAND_RIGHT: usize = 11;
    pub const HIP_LEFT: usize = 12;
    pub const KNEE_LEFT: usize = 13;
    pub const ANKLE_LEFT: usize = 14;
    pub const FOOT_LEFT: usize = 15;
    pub const HIP_RIGHT: usize = 16;
    pub const KNEE_RIGHT: usize = 17;
    pub const ANKLE_RIGHT: usize = 18;
    pub const FOOT_RIGHT: usize = 19;
    pub const SPINE_SHOULDER: usize = 20;
    pub const HAND_TIP_LEFT: usize = 21;
    pub const THUMB_LEFT: usize = 22;
    pub const HAND_TIP_RIGHT: usize = 23;
    pub const THUMB_RIGHT: usize = 24;

    /// Left/right counterpart pairs.
    pub const MIRROR_PAIRS: [(usize, usize); 10] = [
        (SHOULDER_LEFT, SHOULDER_RIGHT),
        (ELBOW_LEFT, ELBOW_RIGHT),
        (WRIST_LEFT, WRIST_RIGHT),
        (HAND_LEFT, HAND_RIGHT),
        (HIP_LEFT, HIP_RIGHT),
        (KNEE_LEFT, KNEE_RIGHT),
        (ANKLE_LEFT, ANKLE_RIGHT),
        (FOOT_LEFT, FOOT_RIGHT),
        (HAND_TIP_LEFT, HAND_TIP_RIGHT),
        (THUMB_LEFT, THUMB_RIGHT),
    ];

    /// Index of the mirrored counterpart of `joint` (itself for midline joints).
    pub fn mirror(joint: usize) -> usize {
        for &(l, r) in MIRROR_PAIRS.iter() {
            if joint == l {
                return r;
            }
            if joint == r {
                return l;
            }
        }
        joint
    }
}

/// One tracked body: exactly [`NUM_JOINTS`] joints.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub joints: [Joint3D; NUM_JOINTS],
}

impl Body {
    pub fn new(joints: [Joint3D; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn zeros() -> Self {
        Self { joints: [Joint3D::zeros(); NUM_JOINTS] }
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.iter().all(|c| c.is_finite()))
    }
}

/// A captured frame. Slot identity is stable across the sequence: slot 0
/// always holds the same tracked person, as does slot 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonFrame {
    pub slots: [Option<Body>; MAX_BODIES],
}

impl SkeletonFrame {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(body: Body) -> Self {
        Self { slots: [Some(body), None] }
    }

    /// Present bodies in slot order.
    pub fn bodies(&self) -> impl Iterator<Item = &Body> {
        self.slots.iter().flatten()
    }

    pub fn bodies_mut(&mut self) -> impl Iterator<Item = &mut Body> {
        self.slots.iter_mut().flatten()
    }

    pub fn body_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// First present body, used as the anchor for view normalization.
    pub fn primary(&self) -> Option<&Body> {
        self.bodies().next()
    }
}

/// An action sample: frames in capture order plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<SkeletonFrame>,
    pub meta: Option<SampleMeta>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<SkeletonFrame>, meta: Option<SampleMeta>) -> Self {
        Self { frames, meta }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Largest number of bodies present in any frame.
    pub fn max_bodies(&self) -> usize {
        self.frames.iter().map(SkeletonFrame::body_count).max().unwrap_or(0)
    }

    /// Index of the first frame with at least one body.
    pub fn first_populated(&self) -> Option<usize> {
        self.frames.iter().position(|f| f.body_count() > 0)
    }

    pub fn joints(&self) -> impl Iterator<Item = &Joint3D> {
        self.frames.iter().flat_map(|f| f.bodies()).flat_map(|b| b.joints.iter())
    }

    pub fn joints_mut(&mut self) -> impl Iterator<Item = &mut Joint3D> {
        self.frames
            .iter_mut()
            .flat_map(|f| f.bodies_mut())
            .flat_map(|b| b.joints.iter_mut())
    }
}
