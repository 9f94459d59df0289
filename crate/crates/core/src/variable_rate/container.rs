//! The compressed-file container.
//!
//! ```text
//! offset size field
//!      0    4 magic "UVRC"
//!      4    1 version
//!      5    1 architecture id
//!      6    1 metric flag
//!      7    1 reserved (0)
//!      8    8 model fingerprint (u64)
//!     16    4 scale s (f32)
//!     20    2 original height (u16)
//!     22    2 original width (u16)
//!     24    4 len_z (u32)
//!     28    4 len_y (u32)
//!     32    .. payload_z, then payload_y
//! ```
//!
//! All integers and the float are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, DistortionMetric};

pub const MAGIC: [u8; 4] = *b"UVRC";
pub const CONTAINER_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedFile {
    pub architecture: Architecture,
    pub metric: DistortionMetric,
    pub fingerprint: u64,
    pub scale: f32,
    pub height: u16,
    pub width: u16,
    /// Hyper-latent payload; empty for the factorized architecture.
    pub payload_z: Vec<u8>,
    pub payload_y: Vec<u8>,
}

impl CompressedFile {
    /// Total serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.payload_z.len() + self.payload_y.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(&MAGIC);
        out.push(CONTAINER_VERSION);
        out.push(self.architecture.id());
        out.push(self.metric.flag());
        out.push(0);
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&self.scale.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&(self.payload_z.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.payload_y.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload_z);
        out.extend_from_slice(&self.payload_y);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Err(Error::CorruptStream(m));
        if bytes.len() < HEADER_LEN {
            return corrupt(format!("{} bytes is shorter than the header", bytes.len()));
        }
        if bytes[..4] != MAGIC {
            return corrupt("bad magic".into());
        }
        if bytes[4] != CONTAINER_VERSION {
            return corrupt(format!("unsupported container version {}", bytes[4]));
        }
        let Some(architecture) = Architecture::from_id(bytes[5]) else {
            return corrupt(format!("unknown architecture id {}", bytes[5]));
        };
        let Some(metric) = DistortionMetric::from_flag(bytes[6]) else {
            return corrupt(format!("unknown metric flag {}", bytes[6]));
        };
        if bytes[7] != 0 {
            return corrupt("reserved byte is not zero".into());
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let fingerprint = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let scale = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if !(scale > 0.0 && scale <= 1.0) {
            return corrupt(format!("scale {scale} outside (0, 1]"));
        }
        let (height, width) = (u16_at(20), u16_at(22));
        if height == 0 || width == 0 {
            return corrupt("zero image dimension".into());
        }
        let (len_z, len_y) = (u32_at(24) as usize, u32_at(28) as usize);
        if HEADER_LEN as u64 + len_z as u64 + len_y as u64 != bytes.len() as u64 {
            return corrupt(format!(
                "header declares {} payload bytes, file holds {}",
                len_z as u64 + len_y as u64,
                bytes.len() - HEADER_LEN
            ));
        }
        let (payload_z, payload_y) = bytes[HEADER_LEN..].split_at(len_z);
        Ok(CompressedFile {
            architecture,
            metric,
            fingerprint,
            scale,
            height,
            width,
            payload_z: payload_z.to_vec(),
            payload_y: payload_y.to_vec(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CompressedFile {
        CompressedFile {
            architecture: Architecture::Hyperprior,
            metric: DistortionMetric::Mse,
            fingerprint: 0x0123_4567_89AB_CDEF,
            scale: 0.3,
            height: 500,
            width: 300,
            payload_z: vec![1, 2, 3],
            payload_y: vec![9; 10],
        }
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(b.len(), HEADER_LEN + 13);
        assert_eq!(&b[..4], b"UVRC");
        assert_eq!(&b[5..8], &[1, 0, 0]);
        assert_eq!(&b[8..16], &0x0123_4567_89AB_CDEFu64.to_le_bytes());
        assert_eq!(&b[16..20], &0.3f32.to_le_bytes());
        assert_eq!(&b[20..24], &[0xF4, 0x01, 0x2C, 0x01]);
        assert_eq!(&b[24..32], &[3, 0, 0, 0, 10, 0, 0, 0]);
        assert_eq!(&b[32..35], &[1, 2, 3]);
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(CompressedFile::from_bytes(&f.to_bytes()).unwrap(), f);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.uvrc");
        f.write(&p).unwrap();
        assert_eq!(CompressedFile::read(&p).unwrap(), f);
    }

    #[test]
    fn malformed_headers_rejected() {
        let good = sample().to_bytes();
        let cases: Vec<Box<dyn Fn(&mut Vec<u8>)>> = vec![
            Box::new(|b| b[0] = b'X'),
            Box::new(|b| b[4] = 7),
            Box::new(|b| b[5] = 9),
            Box::new(|b| b[7] = 1),
            Box::new(|b| b[16..20].copy_from_slice(&1.5f32.to_le_bytes())),
            Box::new(|b| b[16..20].copy_from_slice(&0.0f32.to_le_bytes())),
            Box::new(|b| b[20..22].copy_from_slice(&[0, 0])),
            Box::new(|b| b[24] = 4),
            Box::new(|b| {
                b.pop();
            }),
            Box::new(|b| b.truncate(10)),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut b = good.clone();
            mutate(&mut b);
            assert!(matches!(CompressedFile::from_bytes(&b), Err(Error::CorruptStream(_))), "case {i}");
        }
    }
}
