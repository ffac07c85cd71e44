//! Seeded synthetic motion dataset: five parameterized action families
//! performed by simulated subjects and captured from three camera angles.

use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::{stream, Purpose};
use crate::skeleton::{joints, Body, Joint3D, SampleMeta, SkeletonFrame, SkeletonSequence, NUM_JOINTS};

pub const TOY_FAMILIES: [&str; 5] = ["arm-raise", "walk", "turn-in-place", "squat", "still"];

/// Horizontal camera angles (degrees) for camera ids 1, 2, 3.
pub const CAMERA_ANGLES: [f64; 3] = [-45.0, 0.0, 45.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub subjects: u32,
    pub replications: u32,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Per-joint, per-frame sensor noise (metres).
    pub noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { seed: 0, subjects: 10, replications: 2, min_frames: 40, max_frames: 80, noise: 0.004 }
    }
}

impl ToyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Samples generated: families × cameras × subjects × replications.
    pub fn len(&self) -> usize {
        TOY_FAMILIES.len() * CAMERA_ANGLES.len() * (self.subjects * self.replications) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A sequence with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub sequence: SkeletonSequence,
    pub label: usize,
}

/// Standing pose in body coordinates: x towards the body's right, y up,
/// z forward, spine-mid at the origin.
pub fn rest_pose() -> Body {
    let mut j = [Joint3D::zeros(); NUM_JOINTS];
    let table: [(usize, [f64; 3]); NUM_JOINTS] = [
        (joints::SPINE_BASE, [0.0, -0.3, 0.0]),
        (joints::SPINE_MID, [0.0, 0.0, 0.0]),
        (joints::NECK, [0.0, 0.3, 0.01]),
        (joints::HEAD, [0.0, 0.45, 0.02]),
        (joints::SPINE_SHOULDER, [0.0, 0.25, 0.0]),
        (joints::SHOULDER_LEFT, [-0.18, 0.22, 0.0]),
        (joints::ELBOW_LEFT, [-0.22, -0.02, 0.03]),
        (joints::WRIST_LEFT, [-0.24, -0.25, 0.05]),
        (joints::HAND_LEFT, [-0.245, -0.32, 0.06]),
        (joints::HAND_TIP_LEFT, [-0.25, -0.4, 0.07]),
        (joints::THUMB_LEFT, [-0.22, -0.33, 0.1]),
        (joints::SHOULDER_RIGHT, [0.18, 0.22, 0.0]),
        (joints::ELBOW_RIGHT, [0.22, -0.02, 0.03]),
        (joints::WRIST_RIGHT, [0.24, -0.25, 0.05]),
        (joints::HAND_RIGHT, [0.245, -0.32, 0.06]),
        (joints::HAND_TIP_RIGHT, [0.25, -0.4, 0.07]),
        (joints::THUMB_RIGHT, [0.22, -0.33, 0.1]),
        (joints::HIP_LEFT, [-0.1, -0.32, 0.0]),
        (joints::KNEE_LEFT, [-0.11, -0.75, 0.02]),
        (joints::ANKLE_LEFT, [-0.11, -1.15, 0.0]),
        (joints::FOOT_LEFT, [-0.11, -1.2, 0.1]),
        (joints::HIP_RIGHT, [0.1, -0.32, 0.0]),
        (joints::KNEE_RIGHT, [0.11, -0.75, 0.02]),
        (joints::ANKLE_RIGHT, [0.11, -1.15, 0.0]),
        (joints::FOOT_RIGHT, [0.11, -1.2, 0.1]),
    ];
    for (i, [x, y, z]) in table {
        j[i] = Vector3::new(x, y, z);
    }
    Body::new(j)
}

const RIGHT_ARM: [usize; 5] = [joints::ELBOW_RIGHT, joints::WRIST_RIGHT, joints::HAND_RIGHT, joints::HAND_TIP_RIGHT, joints::THUMB_RIGHT];
const LEFT_ARM: [usize; 5] = [joints::ELBOW_LEFT, joints::WRIST_LEFT, joints::HAND_LEFT, joints::HAND_TIP_LEFT, joints::THUMB_LEFT];
const LEFT_LEG: [usize; 3] = [joints::KNEE_LEFT, joints::ANKLE_LEFT, joints::FOOT_LEFT];
const RIGHT_LEG: [usize; 3] = [joints::KNEE_RIGHT, joints::ANKLE_RIGHT, joints::FOOT_RIGHT];

fn rotate_about(j: &mut [Joint3D; NUM_JOINTS], set: &[usize], pivot: usize, rot: &Rotation3<f64>) {
    let pivot = j[pivot];
    for &i in set {
        j[i] = pivot + rot * (j[i] - pivot);
    }
}

/// Per-performance motion parameters shared by all cameras.
struct Performance {
    family: usize,
    frames: usize,
    scale: f64,
    offsets: Vec<Joint3D>,
    amplitude: f64,
    cycles: f64,
    phase: f64,
    direction: f64,
}

impl Performance {
    fn draw<R: Rng>(family: usize, cfg: &ToyConfig, rng: &mut R) -> Self {
        let frames = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let shape = Normal::new(0.0, 0.01).expect("valid sigma");
        Self {
            family,
            frames,
            scale: rng.random_range(0.85..1.15),
            offsets: (0..NUM_JOINTS).map(|_| Vector3::new(shape.sample(rng), shape.sample(rng), shape.sample(rng))).collect(),
            amplitude: rng.random_range(0.0..1.0),
            cycles: rng.random_range(1..=2) as f64,
            phase: rng.random_range(-0.3..0.3),
            direction: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        }
    }

    /// Body-coordinate pose at frame `t`.
    fn pose(&self, t: usize) -> [Joint3D; NUM_JOINTS] {
        let tau = t as f64 / (self.frames - 1).max(1) as f64;
        let wave = (TAU * self.cycles * tau + self.phase).sin();
        let rise = 0.5 * (1.0 - (TAU * self.cycles * tau).cos());
        let mut j = rest_pose().joints;
        for (p, o) in j.iter_mut().zip(&self.offsets) {
            *p += o;
        }
        match self.family {
            0 => {
                let angle = (1.6 + self.amplitude) * rise;
                let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
                rotate_about(&mut j, &RIGHT_ARM, joints::SHOULDER_RIGHT, &rot);
            }
            1 => {
                let swing = (0.35 + 0.2 * self.amplitude) * wave;
                let leg = |s: f64| Rotation3::from_axis_angle(&Vector3::x_axis(), s);
                rotate_about(&mut j, &LEFT_LEG, joints::HIP_LEFT, &leg(swing));
                rotate_about(&mut j, &RIGHT_LEG, joints::HIP_RIGHT, &leg(-swing));
                rotate_about(&mut j, &LEFT_ARM, joints::SHOULDER_LEFT, &leg(-0.6 * swing));
                rotate_about(&mut j, &RIGHT_ARM, joints::SHOULDER_RIGHT, &leg(0.6 * swing));
                let advance = (0.8 + 0.4 * self.amplitude) * tau;
                let bob = 0.02 * (2.0 * TAU * self.cycles * tau).cos();
                for p in j.iter_mut() {
                    p.z += advance;
                    p.y += bob;
                }
            }
            2 => {
                let yaw = self.direction * (0.5 + 0.5 * self.amplitude) * PI * tau;
                let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw);
                let pivot = j[joints::SPINE_BASE];
                for p in j.iter_mut() {
                    *p = pivot + rot * (*p - pivot);
                }
            }
            3 => {
                let depth = (0.2 + 0.15 * self.amplitude) * rise;
                let feet = [joints::ANKLE_LEFT, joints::FOOT_LEFT, joints::ANKLE_RIGHT, joints::FOOT_RIGHT];
                for (i, p) in j.iter_mut().enumerate() {
                    if feet.contains(&i) {
                        continue;
                    }
                    if i == joints::KNEE_LEFT || i == joints::KNEE_RIGHT {
                        p.y -= 0.5 * depth;
                        p.z += 0.8 * depth;
                    } else {
                        p.y -= depth;
                        p.z -= 0.3 * depth;
                    }
                }
            }
            _ => {
                let sway = 0.01 * wave;
                for p in j.iter_mut() {
                    p.x += sway;
                }
            }
        }
        for p in j.iter_mut() {
            *p *= self.scale;
        }
        j
    }
}

/// Generates the full dataset in (family, subject, replication, camera)
/// order. Each performance is shared by its three camera views.
pub fn generate_toy(cfg: &ToyConfig) -> Vec<LabeledSequence> {
    assert!(cfg.min_frames >= 2 && cfg.min_frames <= cfg.max_frames, "invalid frame range");
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("valid sigma");
    let mut out = Vec::with_capacity(cfg.len());
    for family in 0..TOY_FAMILIES.len() {
        for subject in 1..=cfg.subjects {
            for rep in 1..=cfg.replications {
                let key = ((subject as u64) << 16) | rep as u64;
                let perf = Performance::draw(family, cfg, &mut stream(cfg.seed, Purpose::Toy, family as u64, key));
                let poses: Vec<_> = (0..perf.frames).map(|t| perf.pose(t)).collect();
                for (ci, angle) in CAMERA_ANGLES.iter().enumerate() {
                    let camera = ci as u32 + 1;
                    let mut rng = stream(cfg.seed, Purpose::Toy, family as u64, (key << 8) | camera as u64);
                    let yaw = (180.0 + angle + rng.random_range(-5.0..5.0)).to_radians();
                    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw);
                    let shift = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), 3.0 + rng.random_range(-0.3..0.3));
                    let frames = poses
                        .iter()
                        .map(|pose| {
                            let body = Body::new(std::array::from_fn(|i| {
                                let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                                rot * (pose[i] + jitter) + shift
                            }));
                            SkeletonFrame::single(body)
                        })
                        .collect();
                    let meta = SampleMeta {
                        setup_id: 1 + (subject - 1) % 4,
                        camera_id: camera,
                        subject_id: subject,
                        replication_id: rep,
                        action_id: family as u32 + 1,
                    };
                    out.push(LabeledSequence { sequence: SkeletonSequence::new(frames, Some(meta)), label: family });
                }
            }
        }
    }
    out
}
