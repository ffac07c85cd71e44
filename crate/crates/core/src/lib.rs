//! Skeleton action recognition from encoded skeleton maps.
//!
//! Pipeline: parse capture files ([`skeleton`]), remove view variation
//! ([`normalize`]), augment ([`augment`]), encode sequences as images
//! ([`encode`]), and train a small CNN ([`nn`], [`loss`], [`optim`],
//! [`train`]).

pub mod augment;
pub mod encode;
pub mod loss;
pub mod nn;
pub mod normalize;
pub mod optim;
pub mod rng;
pub mod skeleton;
pub mod toy;
pub mod train;
