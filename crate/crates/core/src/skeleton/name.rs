use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Capture variables encoded in a sample name `SsssCcccPpppRrrrAaaa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleMeta {
    pub setup_id: u32,
    pub camera_id: u32,
    pub subject_id: u32,
    pub replication_id: u32,
    pub action_id: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NameError {
    #[error("sample name {0:?} does not match SsssCcccPpppRrrrAaaa")]
    PatternMismatch(String),
}

const TAGS: [u8; 5] = [b'S', b'C', b'P', b'R', b'A'];

pub fn parse_sample_name(name: &str) -> Result<SampleMeta, NameError> {
    let mismatch = || NameError::PatternMismatch(name.chars().take(64).collect());
    let bytes = name.as_bytes();
    if bytes.len() != 20 {
        return Err(mismatch());
    }
    let mut fields = [0u32; 5];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        if chunk[0] != TAGS[i] || !chunk[1..].iter().all(u8::is_ascii_digit) {
            return Err(mismatch());
        }
        fields[i] = chunk[1..].iter().fold(0, |acc, d| acc * 10 + u32::from(d - b'0'));
    }
    let meta = SampleMeta {
        setup_id: fields[0],
        camera_id: fields[1],
        subject_id: fields[2],
        replication_id: fields[3],
        action_id: fields[4],
    };
    if fields.iter().any(|&f| f == 0) || !(1..=3).contains(&meta.camera_id) {
        return Err(mismatch());
    }
    Ok(meta)
}

impl FromStr for SampleMeta {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_sample_name(s)
    }
}

/// Canonical zero-padded name.
impl fmt::Display for SampleMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S{:03}C{:03}P{:03}R{:03}A{:03}",
            self.setup_id, self.camera_id, self.subject_id, self.replication_id, self.action_id
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_examples() {
        assert_eq!(
            parse_sample_name("S001C002P003R002A013").unwrap(),
            SampleMeta { setup_id: 1, camera_id: 2, subject_id: 3, replication_id: 2, action_id: 13 }
        );
        assert_eq!(
            parse_sample_name("S017C003P020R001A060").unwrap(),
            SampleMeta { setup_id: 17, camera_id: 3, subject_id: 20, replication_id: 1, action_id: 60 }
        );
    }

    #[test]
    fn rejects_bad_names() {
        for bad in [
            "S01C2P3R2A13",
            "",
            "S001C002P003R002A01",
            "S001C002P003R002A0133",
            "s001C002P003R002A013",
            "S001C004P003R002A013",
            "S000C001P003R002A013",
            "S001C002P003R002A+13",
            "S001C002P0é3R002A01",
        ] {
            assert!(matches!(parse_sample_name(bad), Err(NameError::PatternMismatch(_))), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn canonical_name_round_trips(
            s in 1u32..1000, c in 1u32..4, p in 1u32..1000, r in 1u32..1000, a in 1u32..1000
        ) {
            let name = format!("S{s:03}C{c:03}P{p:03}R{r:03}A{a:03}");
            let meta = parse_sample_name(&name).unwrap();
            prop_assert_eq!(meta.to_string(), name);
        }
    }
}
