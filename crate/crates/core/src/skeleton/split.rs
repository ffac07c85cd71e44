use std::collections::BTreeSet;
use std::str::FromStr;

use thiserror::Error;

use super::SampleMeta;

/// Evaluation protocols. Each partitions on one key field of [`SampleMeta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    CrossSubject,
    CrossView,
    CrossSetup,
}

impl Protocol {
    /// The field this protocol partitions on.
    pub fn key(self, meta: &SampleMeta) -> u32 {
        match self {
            Protocol::CrossSubject => meta.subject_id,
            Protocol::CrossView => meta.camera_id,
            Protocol::CrossSetup => meta.setup_id,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Protocol::CrossSubject => "cs",
            Protocol::CrossView => "cv",
            Protocol::CrossSetup => "csetup",
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cs" | "cross-subject" => Ok(Protocol::CrossSubject),
            "cv" | "cross-view" => Ok(Protocol::CrossView),
            "csetup" | "cross-setup" => Ok(Protocol::CrossSetup),
            other => Err(format!("unknown protocol {other:?} (expected cs, cv, csetup)")),
        }
    }
}

/// Which key values go to the training side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdSet {
    List(BTreeSet<u32>),
    Even,
    Odd,
}

impl IdSet {
    pub fn contains(&self, id: u32) -> bool {
        match self {
            IdSet::List(ids) => ids.contains(&id),
            IdSet::Even => id % 2 == 0,
            IdSet::Odd => id % 2 == 1,
        }
    }
}

impl FromStr for IdSet {
    type Err = SplitConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "even" => Ok(IdSet::Even),
            "odd" => Ok(IdSet::Odd),
            list => list
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<u32>().map_err(|_| SplitConfigError::BadId(t.to_string())))
                .collect::<Result<BTreeSet<_>, _>>()
                .map(IdSet::List),
        }
    }
}

/// Training-side key values for each protocol. Everything else is test.
///
/// The cross-subject list has no built-in default; it must be supplied
/// from a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    pub train_cameras: IdSet,
    pub train_subjects: IdSet,
    pub train_setups: IdSet,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_cameras: IdSet::List([1, 3].into_iter().collect()),
            train_subjects: IdSet::List(BTreeSet::new()),
            train_setups: IdSet::Even,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitConfigError {
    #[error("line {0}: expected `key: ids`")]
    BadLine(usize),
    #[error("unknown split key {0:?}")]
    UnknownKey(String),
    #[error("invalid id {0:?}")]
    BadId(String),
}

impl SplitConfig {
    /// Parses `train_cameras: 1 3` style lines; `#` starts a comment.
    /// Keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self, SplitConfigError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .or_else(|| line.split_once('='))
                .ok_or(SplitConfigError::BadLine(n + 1))?;
            let ids: IdSet = value.parse()?;
            match key.trim() {
                "train_cameras" => cfg.train_cameras = ids,
                "train_subjects" => cfg.train_subjects = ids,
                "train_setups" => cfg.train_setups = ids,
                other => return Err(SplitConfigError::UnknownKey(other.to_string())),
            }
        }
        Ok(cfg)
    }

    pub fn train_ids(&self, protocol: Protocol) -> &IdSet {
        match protocol {
            Protocol::CrossSubject => &self.train_subjects,
            Protocol::CrossView => &self.train_cameras,
            Protocol::CrossSetup => &self.train_setups,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("{side} partition is empty under protocol {protocol}")]
    EmptyPartition { side: &'static str, protocol: &'static str },
}

/// Splits sample indices into (train, test) by the protocol's key field.
pub fn split_dataset(
    samples: &[SampleMeta],
    protocol: Protocol,
    config: &SplitConfig,
) -> Result<(Vec<usize>, Vec<usize>), SplitError> {
    let ids = config.train_ids(protocol);
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..samples.len()).partition(|&i| ids.contains(protocol.key(&samples[i])));
    if train.is_empty() {
        return Err(SplitError::EmptyPartition { side: "train", protocol: protocol.short_name() });
    }
    if test.is_empty() {
        return Err(SplitError::EmptyPartition { side: "test", protocol: protocol.short_name() });
    }
    Ok((train, test))
}
