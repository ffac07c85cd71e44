//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SKLMAPCK"
//! version    u32
//! config     u32 length + UTF-8 bytes
//! count      u32
//! manifest   count × { u32 name length, UTF-8 name, u32 rank, rank × u64 dim }
//! data       for each manifest entry in order, product(dims) × f64
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SKLMAPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_RANK: u32 = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Config header plus named tensors, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn write_len<W: Write>(w: &mut W, len: usize) -> Result<(), CheckpointError> {
    let len = u32::try_from(len).map_err(|_| CheckpointError::Malformed(format!("length {len} exceeds u32")))?;
    w.write_all(&len.to_le_bytes())?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, config: &str, tensors: &[(&str, &Tensor)]) -> Result<(), CheckpointError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_len(&mut w, config.len())?;
    w.write_all(config.as_bytes())?;
    write_len(&mut w, tensors.len())?;
    for (name, t) in tensors {
        write_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_len(&mut w, t.shape().len())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for (_, t) in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as u64;
    let mut bytes = Vec::new();
    r.take(len).read_to_end(&mut bytes)?;
    if bytes.len() as u64 != len {
        return Err(CheckpointError::Malformed("truncated string".into()));
    }
    String::from_utf8(bytes).map_err(|_| CheckpointError::Malformed("string is not UTF-8".into()))
}

fn truncated(e: io::Error) -> CheckpointError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        CheckpointError::Malformed("unexpected end of data".into())
    } else {
        CheckpointError::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config = read_string(&mut r)?;
    let count = read_u32(&mut r)?;
    let mut manifest = Vec::new();
    for _ in 0..count {
        let name = read_string(&mut r)?;
        let rank = read_u32(&mut r)?;
        if rank > MAX_RANK {
            return Err(CheckpointError::Malformed(format!("{name}: rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = read_u64(&mut r)?;
            if d == 0 {
                return Err(CheckpointError::Malformed(format!("{name}: zero dimension")));
            }
            shape.push(usize::try_from(d).map_err(|_| CheckpointError::Malformed(format!("{name}: dimension overflow")))?);
        }
        manifest.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(manifest.len());
    for (name, shape) in manifest {
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("{name}: element count overflow")))?;
        let mut data = Vec::new();
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(truncated)?;
            data.push(f64::from_le_bytes(b));
        }
        let t = Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        tensors.push((name, t));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    Ok(Checkpoint { config, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Tensor, Tensor) {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let b = Tensor::from_vec(&[4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        (a, b)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (a, b) = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "loss=arcface", &[("a", &a), ("b", &b)]).unwrap();
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(ck.config, "loss=arcface");
        assert_eq!(ck.tensors.len(), 2);
        assert_eq!(ck.get("a").unwrap(), &a);
        assert_eq!(ck.get("b").unwrap(), &b);
    }

    #[test]
    fn layout_is_documented() {
        let (_, b) = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "", &[("b", &b)]).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), CHECKPOINT_VERSION);
        // magic, version, config len, count, name len, name, rank, dim, 4 values
        assert_eq!(buf.len(), 8 + 4 + 4 + 4 + 4 + 1 + 4 + 8 + 32);
        assert_eq!(f64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap()), 0.4);
    }

    #[test]
    fn rejects_corruption() {
        let (a, b) = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "x", &[("a", &a), ("b", &b)]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(CheckpointError::BadMagic)));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(CheckpointError::UnsupportedVersion(9))));
        for cut in [3, 12, 20, buf.len() - 1] {
            assert!(read_checkpoint(&buf[..cut]).is_err(), "cut at {cut}");
        }
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
    }
}
