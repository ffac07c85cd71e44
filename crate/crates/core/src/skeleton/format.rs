//! Text skeleton capture format.
//!
//! Whitespace-separated tokens: frame count; per frame a body count; per
//! body a 10-field info record (tracking id first), a joint count, then one
//! 12-field record per joint of which only the leading x y z are kept.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Body, Joint3D, SkeletonFrame, SkeletonSequence, MAX_BODIES, NUM_JOINTS};

const BODY_INFO_FIELDS: usize = 10;
const JOINT_FIELDS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed header: frame count unreadable")]
    MalformedHeader,
    #[error("sequence has no frames or no bodies")]
    EmptySequence,
    #[error("frame {frame}: body declares {found} joints, expected {NUM_JOINTS}")]
    JointCountMismatch { frame: usize, found: usize },
    #[error("frame {frame}: unexpected end of input")]
    Truncated { frame: usize },
    #[error("frame {frame}: invalid numeric token {token:?}")]
    InvalidNumber { frame: usize, token: String },
    #[error("frame {frame}: non-finite joint coordinate")]
    NonFinite { frame: usize },
}

struct Tokens<'a> {
    inner: Box<dyn Iterator<Item = &'a [u8]> + 'a>,
    frame: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        let inner = bytes
            .split(|b| b.is_ascii_whitespace())
            .filter(|t| !t.is_empty());
        Self { inner: Box::new(inner), frame: 0 }
    }

    fn next_raw(&mut self) -> Result<&'a [u8], ParseError> {
        self.inner.next().ok_or(ParseError::Truncated { frame: self.frame })
    }

    fn invalid(&self, token: &[u8]) -> ParseError {
        let mut shown = String::from_utf8_lossy(token).into_owned();
        if shown.len() > 32 {
            let cut = (0..=32).rev().find(|&i| shown.is_char_boundary(i)).unwrap_or(0);
            shown.truncate(cut);
        }
        ParseError::InvalidNumber { frame: self.frame, token: shown }
    }

    fn next_parsed<T: std::str::FromStr>(&mut self) -> Result<T, ParseError> {
        let raw = self.next_raw()?;
        std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.invalid(raw))
    }

    fn skip(&mut self, n: usize) -> Result<(), ParseError> {
        for _ in 0..n {
            self.next_raw()?;
        }
        Ok(())
    }
}

/// Parses a capture file. Bodies beyond [`MAX_BODIES`] are dropped,
/// keeping the tracked bodies with the most frame-to-frame joint motion.
pub fn parse_skeleton_file(bytes: &[u8]) -> Result<SkeletonSequence, ParseError> {
    let mut tokens = Tokens::new(bytes);
    let frame_count: usize = match tokens.inner.next() {
        Some(raw) => std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(ParseError::MalformedHeader)?,
        None => return Err(ParseError::MalformedHeader),
    };
    if frame_count == 0 {
        return Err(ParseError::EmptySequence);
    }

    // Declared counts are untrusted; grow only as data actually arrives.
    let mut raw_frames: Vec<Vec<(u64, Body)>> = Vec::with_capacity(frame_count.min(4096));
    for frame in 0..frame_count {
        tokens.frame = frame;
        let body_count: usize = tokens.next_parsed()?;
        let mut bodies: Vec<(u64, Body)> = Vec::with_capacity(body_count.min(8));
        for _ in 0..body_count {
            let tracking_id: u64 = tokens.next_parsed()?;
            tokens.skip(BODY_INFO_FIELDS - 1)?;
            let joint_count: usize = tokens.next_parsed()?;
            if joint_count != NUM_JOINTS {
                return Err(ParseError::JointCountMismatch { frame, found: joint_count });
            }
            let mut body = Body::zeros();
            for joint in body.joints.iter_mut() {
                let x: f64 = tokens.next_parsed()?;
                let y: f64 = tokens.next_parsed()?;
                let z: f64 = tokens.next_parsed()?;
                if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                    return Err(ParseError::NonFinite { frame });
                }
                *joint = Joint3D::new(x, y, z);
                tokens.skip(JOINT_FIELDS - 3)?;
            }
            if bodies.iter().all(|(id, _)| *id != tracking_id) {
                bodies.push((tracking_id, body));
            }
        }
        raw_frames.push(bodies);
    }

    let kept = select_bodies(&raw_frames);
    let frames: Vec<SkeletonFrame> = raw_frames
        .into_iter()
        .map(|bodies| {
            let mut frame = SkeletonFrame::empty();
            for (id, body) in bodies {
                if let Some(slot) = kept.iter().position(|&k| k == id) {
                    frame.slots[slot] = Some(body);
                }
            }
            frame
        })
        .collect();

    let seq = SkeletonSequence::new(frames, None);
    if seq.first_populated().is_none() {
        return Err(ParseError::EmptySequence);
    }
    Ok(seq)
}

/// Sum over consecutive frames of per-joint displacement, per tracking id.
pub(crate) fn motion_energy(frames: &[Vec<(u64, Body)>]) -> HashMap<u64, f64> {
    let mut energy: HashMap<u64, f64> = HashMap::new();
    for bodies in frames {
        for (id, _) in bodies {
            energy.entry(*id).or_insert(0.0);
        }
    }
    for pair in frames.windows(2) {
        for (id, next) in &pair[1] {
            if let Some((_, prev)) = pair[0].iter().find(|(pid, _)| pid == id) {
                let moved: f64 = prev
                    .joints
                    .iter()
                    .zip(next.joints.iter())
                    .map(|(a, b)| (b - a).norm())
                    .sum();
                *energy.get_mut(id).expect("seeded above") += moved;
            }
        }
    }
    energy
}

/// Tracking ids to keep, in slot order (order of first appearance).
fn select_bodies(frames: &[Vec<(u64, Body)>]) -> Vec<u64> {
    let mut order: Vec<u64> = Vec::new();
    for bodies in frames {
        for (id, _) in bodies {
            if !order.contains(id) {
                order.push(*id);
            }
        }
    }
    if order.len() <= MAX_BODIES {
        return order;
    }
    let energy = motion_energy(frames);
    let mut ranked: Vec<(usize, u64)> = order.iter().copied().enumerate().collect();
    // Stable sort keeps first appearance as the tie-breaker.
    ranked.sort_by(|a, b| energy[&b.1].total_cmp(&energy[&a.1]));
    ranked.truncate(MAX_BODIES);
    ranked.sort_by_key(|&(first_seen, _)| first_seen);
    ranked.into_iter().map(|(_, id)| id).collect()
}

/// Serializes a sequence in the capture format. Tracking ids are the slot
/// numbers (1-based); all non-positional fields are written as zero except
/// the tracking states, which read "2" (tracked).
pub fn write_skeleton_file(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", seq.frames.len());
    for frame in &seq.frames {
        let _ = writeln!(out, "{}", frame.body_count());
        for (slot, body) in frame.slots.iter().enumerate() {
            let Some(body) = body else { continue };
            let _ = writeln!(out, "{} 0 0 0 0 0 0 0 0 2", slot + 1);
            let _ = writeln!(out, "{NUM_JOINTS}");
            for j in body.joints.iter() {
                let _ = writeln!(out, "{} {} {} 0 0 0 0 0 0 0 0 2", j.x, j.y, j.z);
            }
        }
    }
    out
}
